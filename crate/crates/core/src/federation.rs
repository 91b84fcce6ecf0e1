//! File-based exchange between sites: each site publishes only its group
//! names and (Z, Z̃); a coordinator combines the summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, read_header, OutcomeFamily, PartitionSpec};
use crate::error::{Error, Result};
use crate::filter::{osff_product, threshold, SelectionJson};
use crate::path::{LambdaGrid, PathStatistics};
use crate::pipeline::{site_statistics, KnockoffMethod};
use crate::simulation::{run_plan, SimPlan};

pub const FORMAT_VERSION: u32 = 1;

/// Log-spaced grid description: `len` values from `top` down to `top * depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub len: usize,
    pub top: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionMeta {
    pub method: KnockoffMethod,
    pub seed: u64,
    pub family: OutcomeFamily,
    pub grid: GridSpec,
}

/// The only payload that leaves a site. Every array has length M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSummary {
    pub format_version: u32,
    pub site_id: String,
    pub group_names: Vec<String>,
    #[serde(rename = "Z")]
    pub z: Vec<f64>,
    #[serde(rename = "Ztilde")]
    pub ztilde: Vec<f64>,
    pub construction: ConstructionMeta,
}

impl SiteSummary {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let m = self.group_names.len();
        if m == 0 || self.z.len() != m || self.ztilde.len() != m {
            return Err(Error::Format(format!(
                "site '{}': {} group names, {} Z, {} Ztilde",
                self.site_id,
                m,
                self.z.len(),
                self.ztilde.len()
            )));
        }
        if self.z.iter().chain(&self.ztilde).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Format(format!("site '{}': Z values must be finite and >= 0", self.site_id)));
        }
        Ok(())
    }

    pub fn from_stats(stats: &PathStatistics, method: KnockoffMethod, seed: u64, family: OutcomeFamily) -> Self {
        let v = stats.grid.values();
        Self {
            format_version: FORMAT_VERSION,
            site_id: stats.dataset_id.clone(),
            group_names: stats.group_names.clone(),
            z: stats.z.clone(),
            ztilde: stats.z_tilde.clone(),
            construction: ConstructionMeta {
                method,
                seed,
                family,
                grid: GridSpec {
                    len: v.len(),
                    top: v[0],
                    depth: v[v.len() - 1] / v[0],
                },
            },
        }
    }

    pub fn to_stats(&self) -> Result<PathStatistics> {
        let g = self.construction.grid;
        Ok(PathStatistics {
            z: self.z.clone(),
            z_tilde: self.ztilde.clone(),
            grid: LambdaGrid::log_spaced(g.top, g.len, g.depth)?,
            dataset_id: self.site_id.clone(),
            group_names: self.group_names.clone(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let s: SiteSummary = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.as_ref().display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SiteStatsArgs<'a> {
    pub data: &'a Path,
    pub groups: &'a Path,
    pub family: OutcomeFamily,
    pub method: KnockoffMethod,
    pub seed: u64,
    pub grid_size: usize,
    pub site_id: Option<String>,
}

/// Load, standardize, build knockoffs, fit the path; return the summary.
pub fn site_stats(args: &SiteStatsArgs) -> Result<SiteSummary> {
    let mut spec = PartitionSpec::from_json_file(args.groups)?;
    if spec.family != args.family {
        log::info!(
            "family '{}' overrides '{}' from the group file",
            args.family.as_str(),
            spec.family.as_str()
        );
        spec.family = args.family;
    }
    let header = read_header(args.data)?;
    let schema = spec.schema_for_header(&header);
    let d = load_dataset(args.data, &schema, &spec)?;
    let site_id = args.site_id.clone().unwrap_or_else(|| {
        args.data
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "site".into())
    });
    let (stats, _) = site_statistics(&d, args.method, args.seed, args.grid_size, &site_id, false)?;
    Ok(SiteSummary::from_stats(&stats, args.method, args.seed, args.family))
}

pub fn cmd_site_stats(args: &SiteStatsArgs, out: &Path) -> Result<SiteSummary> {
    let summary = site_stats(args)?;
    summary.write(out)?;
    Ok(summary)
}

/// Product OSFF and knockoff(+) selection over site summaries.
pub fn combine(summaries: &[SiteSummary], q: f64, plus: bool) -> Result<SelectionJson> {
    if summaries.is_empty() {
        return Err(Error::Alignment("no summaries to combine".into()));
    }
    let stats = summaries.iter().map(SiteSummary::to_stats).collect::<Result<Vec<_>>>()?;
    let w = osff_product(&stats)?;
    let sel = threshold(&w.w, q, plus)?;
    Ok(SelectionJson::new(&w, &sel))
}

pub fn cmd_combine(paths: &[impl AsRef<Path>], q: f64, plus: bool, out: &Path) -> Result<SelectionJson> {
    let summaries = paths.iter().map(SiteSummary::read).collect::<Result<Vec<_>>>()?;
    let result = combine(&summaries, q, plus)?;
    write_json(out, &result)?;
    Ok(result)
}

pub fn cmd_simulate(config: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)?;
    let plan = SimPlan::from_json(&text)?;
    // Validate every grid point before doing any work.
    plan.points()?;
    let file = std::fs::File::create(out)?;
    run_plan(&plan, std::io::BufWriter::new(file))
}
