//! Monte Carlo harness: synthetic sites, the GS filter and its baselines,
//! and FDR / power estimates.

mod config;
mod generate;

pub use config::{Scenario, Setting, SimConfig, SimPlan, Sweep, SITES};
pub use generate::{
    block_covariance, gen_binary, gen_continuous, gen_mixed, generate, threshold_outcome, Generated,
};

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetView, GroupPartition};
use crate::error::{Error, Result};
use crate::filter::{osff_product, threshold};
use crate::path::PathStatistics;
use crate::pipeline::{site_statistics, KnockoffMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Gs,
    GsPlus,
    Pooling,
    Intersection,
    Individual,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Gs,
        Strategy::GsPlus,
        Strategy::Pooling,
        Strategy::Intersection,
        Strategy::Individual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Gs => "gs",
            Strategy::GsPlus => "gs_plus",
            Strategy::Pooling => "pooling",
            Strategy::Intersection => "intersection",
            Strategy::Individual => "individual",
        }
    }

    /// Strategies reported for a setting; the individual baseline is run
    /// for the continuous setting only.
    pub fn for_setting(setting: Setting) -> Vec<Strategy> {
        match setting {
            Setting::Continuous => Self::ALL.to_vec(),
            Setting::Binary | Setting::Mixed => Self::ALL[..4].to_vec(),
        }
    }
}

/// Knobs shared by every strategy in one replication.
#[derive(Debug, Clone, Copy)]
pub struct StrategyOptions {
    pub q: f64,
    pub method: KnockoffMethod,
    pub grid_size: usize,
}

fn site_id(k: usize) -> String {
    format!("site{}", k + 1)
}

/// (Z, Z̃) for every site, each with its own knockoff seed.
pub fn per_site_statistics(data: &[DatasetView], opts: StrategyOptions, seeds: &[u64]) -> Result<Vec<PathStatistics>> {
    data.iter()
        .zip(seeds)
        .enumerate()
        .map(|(k, (d, &seed))| {
            site_statistics(d, opts.method, seed, opts.grid_size, &site_id(k), true).map(|(s, _)| s)
        })
        .collect()
}

fn knockoff_plus(stats: &[PathStatistics], q: f64, plus: bool) -> Result<BTreeSet<usize>> {
    let w = osff_product(stats)?;
    Ok(threshold(&w.w, q, plus)?.selected)
}

/// Per-site knockoff+ selections, intersected.
pub fn intersection_selection(stats: &[PathStatistics], q: f64) -> Result<BTreeSet<usize>> {
    let mut out: Option<BTreeSet<usize>> = None;
    for s in stats {
        let sel = knockoff_plus(std::slice::from_ref(s), q, true)?;
        out = Some(match out {
            None => sel,
            Some(prev) => prev.intersection(&sel).copied().collect(),
        });
    }
    Ok(out.unwrap_or_default())
}

/// Run one strategy end to end. `seed` drives every knockoff draw.
pub fn run_strategy(strategy: Strategy, data: &[DatasetView], opts: StrategyOptions, seed: u64) -> Result<BTreeSet<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = data.iter().map(|_| rng.random()).collect();
    match strategy {
        Strategy::Gs | Strategy::GsPlus => {
            let stats = per_site_statistics(data, opts, &seeds)?;
            knockoff_plus(&stats, opts.q, strategy == Strategy::GsPlus)
        }
        Strategy::Intersection => intersection_selection(&per_site_statistics(data, opts, &seeds)?, opts.q),
        Strategy::Pooling => {
            let parts: Vec<&DatasetView> = data.iter().collect();
            let pooled = DatasetView::concat(&parts)?;
            let (stats, _) = site_statistics(&pooled, opts.method, seeds[0], opts.grid_size, "pooled", true)?;
            knockoff_plus(&[stats], opts.q, true)
        }
        Strategy::Individual => {
            let partition = &data[0].partition;
            let singles: Vec<DatasetView> = data
                .iter()
                .map(|d| {
                    let mut s = d.clone();
                    s.partition = GroupPartition::singletons(d.p());
                    s
                })
                .collect();
            let stats = per_site_statistics(&singles, opts, &seeds)?;
            let features = knockoff_plus(&stats, opts.q, true)?;
            Ok(features.iter().filter_map(|&j| partition.group_of(j)).collect())
        }
    }
}

/// Selections of every strategy in one replication, with the GS statistic W.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub truth: BTreeSet<usize>,
    /// `None` when the strategy does not apply (pooling across families).
    pub selections: Vec<(Strategy, Option<BTreeSet<usize>>)>,
    pub w: Vec<f64>,
}

/// Replication `rep` of `cfg`, seeded from the stream (seed, rep).
pub fn run_replication(cfg: &SimConfig, rep: usize) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let generated = generate(cfg, &mut rng)?;
    let opts = StrategyOptions {
        q: cfg.q,
        method: cfg.knockoff_method(),
        grid_size: cfg.grid_size,
    };
    let site_seeds: Vec<u64> = (0..SITES).map(|_| rng.random()).collect();
    let stats = per_site_statistics(&generated.sites, opts, &site_seeds)?;
    let w = osff_product(&stats)?;
    // One seed per strategy in fixed order, so restricting the strategy list
    // leaves the remaining draws unchanged.
    let strategy_seeds: Vec<u64> = Strategy::ALL.iter().map(|_| rng.random()).collect();
    let mut selections = Vec::new();
    for strategy in cfg.strategies() {
        let strategy_seed = strategy_seeds[strategy as usize];
        let sel = match strategy {
            Strategy::Gs => Some(threshold(&w.w, cfg.q, false)?.selected),
            Strategy::GsPlus => Some(threshold(&w.w, cfg.q, true)?.selected),
            Strategy::Intersection => Some(intersection_selection(&stats, cfg.q)?),
            other => match run_strategy(other, &generated.sites, opts, strategy_seed) {
                Ok(s) => Some(s),
                Err(Error::StrategyInapplicable(_)) => None,
                Err(e) => return Err(e),
            },
        };
        selections.push((strategy, sel));
    }
    Ok(Replication {
        truth: generated.truth,
        selections,
        w: w.w,
    })
}

/// All replications of one grid point; parallel, reduced in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub config: SimConfig,
    pub replications: Vec<Replication>,
}

pub fn run(cfg: &SimConfig) -> Result<SimOutcome> {
    cfg.validate()?;
    let replications = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimOutcome {
        config: cfg.clone(),
        replications,
    })
}

/// |Ŝ \ 𝒮| / max(|Ŝ|, 1).
pub fn fdp(selected: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> f64 {
    let false_hits = selected.difference(truth).count();
    false_hits as f64 / selected.len().max(1) as f64
}

/// |Ŝ ∩ 𝒮| / |𝒮|, undefined when 𝒮 is empty.
pub fn power(selected: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    Some(selected.intersection(truth).count() as f64 / truth.len() as f64)
}

/// Mean and standard error (sample SD / √R).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub strategy: Strategy,
    /// `None` when the strategy was inapplicable.
    pub fdr: Option<(f64, f64)>,
    /// `None` when inapplicable or the signal set is empty.
    pub power: Option<(f64, f64)>,
}

/// Per-method FDR and power estimates over selected sets and truths.
pub fn estimate_fdr_power(
    selections: &[Option<BTreeSet<usize>>],
    truths: &[BTreeSet<usize>],
    strategy: Strategy,
) -> Result<MethodSummary> {
    if selections.len() < 2 || selections.len() != truths.len() {
        return Err(Error::Range(format!(
            "need at least 2 replications with one truth each (got {} / {})",
            selections.len(),
            truths.len()
        )));
    }
    if selections.iter().any(Option::is_none) {
        return Ok(MethodSummary {
            strategy,
            fdr: None,
            power: None,
        });
    }
    let sel: Vec<&BTreeSet<usize>> = selections.iter().flatten().collect();
    let fdps: Vec<f64> = sel.iter().zip(truths).map(|(s, t)| fdp(s, t)).collect();
    let powers: Option<Vec<f64>> = sel.iter().zip(truths).map(|(s, t)| power(s, t)).collect();
    Ok(MethodSummary {
        strategy,
        fdr: Some(mean_se(&fdps)),
        power: powers.map(|p| mean_se(&p)),
    })
}

impl SimOutcome {
    pub fn summaries(&self) -> Result<Vec<MethodSummary>> {
        let truths: Vec<BTreeSet<usize>> = self.replications.iter().map(|r| r.truth.clone()).collect();
        self.config
            .strategies()
            .into_iter()
            .map(|strategy| {
                let sel: Vec<Option<BTreeSet<usize>>> = self
                    .replications
                    .iter()
                    .map(|r| {
                        r.selections
                            .iter()
                            .find(|(s, _)| *s == strategy)
                            .and_then(|(_, v)| v.clone())
                    })
                    .collect();
                estimate_fdr_power(&sel, &truths, strategy)
            })
            .collect()
    }

    pub fn selections(&self, strategy: Strategy) -> Vec<Option<BTreeSet<usize>>> {
        self.replications
            .iter()
            .map(|r| r.selections.iter().find(|(s, _)| *s == strategy).and_then(|(_, v)| v.clone()))
            .collect()
    }
}

/// Per null group: (# replications with W > 0, # with W ≠ 0).
pub fn sign_symmetry(outcome: &SimOutcome) -> Result<Vec<(usize, usize)>> {
    let m = outcome.replications.first().map(|r| r.w.len()).ok_or_else(|| {
        Error::Range("sign symmetry needs at least one replication".into())
    })?;
    let mut counts = vec![(0, 0); m];
    for r in &outcome.replications {
        for (g, &w) in r.w.iter().enumerate() {
            if r.truth.contains(&g) || w == 0.0 {
                continue;
            }
            counts[g].1 += 1;
            if w > 0.0 {
                counts[g].0 += 1;
            }
        }
    }
    Ok(counts)
}

pub const CSV_HEADER: [&str; 16] = [
    "point", "setting", "scenario", "method", "s0", "s1", "s2", "rho", "gamma", "A", "n", "replications", "fdr_hat",
    "fdr_se", "power_hat", "power_se",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// One CSV row per method for grid point `point`.
pub fn write_rows<W: Write>(writer: &mut csv::Writer<W>, point: usize, outcome: &SimOutcome) -> Result<()> {
    let c = &outcome.config;
    for s in outcome.summaries()? {
        writer.write_record([
            point.to_string(),
            c.setting.as_str().to_string(),
            c.scenario.as_str().to_string(),
            s.strategy.as_str().to_string(),
            c.s0.to_string(),
            c.s1.to_string(),
            c.s2.to_string(),
            c.rho.to_string(),
            c.gamma.to_string(),
            c.amplitude().to_string(),
            c.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";"),
            c.replications.to_string(),
            fmt_opt(s.fdr.map(|v| v.0)),
            fmt_opt(s.fdr.map(|v| v.1)),
            fmt_opt(s.power.map(|v| v.0)),
            fmt_opt(s.power.map(|v| v.1)),
        ])?;
    }
    Ok(())
}

/// Run every grid point of `plan` and write the summary CSV.
pub fn run_plan<W: Write>(plan: &SimPlan, out: W) -> Result<()> {
    let points = plan.points()?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for (i, cfg) in points.iter().enumerate() {
        log::info!("grid point {}/{}: {} replications", i + 1, points.len(), cfg.replications);
        let outcome = run(cfg)?;
        write_rows(&mut writer, i, &outcome)?;
    }
    writer.flush()?;
    Ok(())
}
