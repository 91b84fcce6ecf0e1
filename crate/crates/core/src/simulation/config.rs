use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::MIN_GRID_LEN;
use super::Strategy;
use crate::pipeline::KnockoffMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Continuous,
    Binary,
    Mixed,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Continuous => "continuous",
            Setting::Binary => "binary",
            Setting::Mixed => "mixed",
        }
    }
}

/// Mutual signals share direction and magnitude across sites
/// (`same_strength`) or only direction (`different_strength`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SameStrength,
    DifferentStrength,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SameStrength => "same_strength",
            Scenario::DifferentStrength => "different_strength",
        }
    }
}

/// Number of sites the generators lay signals out for.
pub const SITES: usize = 2;

/// One simulation grid point. Defaults are the desk-scale settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub setting: Setting,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    /// Rows per site.
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    /// Number of groups.
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    /// Columns per group in the continuous setting.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    /// Categorical variables among the M groups (binary/mixed); default M/4.
    #[serde(default)]
    pub categorical: Option<usize>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_s0")]
    pub s0: usize,
    #[serde(default)]
    pub s1: usize,
    #[serde(default)]
    pub s2: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    /// Signal amplitude; default 0.6 (continuous) or 3.5 (binary/mixed).
    #[serde(rename = "A", default)]
    pub amplitude: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Knockoff construction; default fixed-equi (continuous) or sequential.
    #[serde(default)]
    pub knockoff: Option<KnockoffMethod>,
    /// Strategies to run; default every strategy applicable to the setting.
    #[serde(default)]
    pub methods: Option<Vec<Strategy>>,
}

fn default_scenario() -> Scenario {
    Scenario::DifferentStrength
}
fn default_n() -> Vec<usize> {
    vec![400; SITES]
}
fn default_m() -> usize {
    20
}
fn default_group_size() -> usize {
    5
}
fn default_levels() -> usize {
    5
}
fn default_s0() -> usize {
    4
}
fn default_rho() -> f64 {
    0.5
}
fn default_gamma() -> f64 {
    0.1
}
fn default_r() -> f64 {
    0.5
}
fn default_sigma() -> Vec<f64> {
    vec![1.0; SITES]
}
fn default_alpha() -> Vec<f64> {
    vec![1.0, -1.0]
}
fn default_q() -> f64 {
    0.2
}
fn default_replications() -> usize {
    200
}
fn default_grid_size() -> usize {
    crate::path::DEFAULT_GRID_LEN
}

impl SimConfig {
    /// Defaults for `setting`, as if parsed from `{"setting": ...}`.
    pub fn new(setting: Setting) -> Self {
        let value = serde_json::json!({ "setting": setting });
        serde_json::from_value(value).expect("defaults deserialize")
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude.unwrap_or(match self.setting {
            Setting::Continuous => 0.6,
            Setting::Binary | Setting::Mixed => 3.5,
        })
    }

    pub fn categorical_count(&self) -> usize {
        self.categorical.unwrap_or(self.m / 4)
    }

    pub fn knockoff_method(&self) -> KnockoffMethod {
        self.knockoff.unwrap_or(match self.setting {
            Setting::Continuous => KnockoffMethod::FixedEqui,
            Setting::Binary | Setting::Mixed => KnockoffMethod::Sequential,
        })
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        let all = Strategy::for_setting(self.setting);
        match &self.methods {
            Some(m) => all.into_iter().filter(|s| m.contains(s)).collect(),
            None => all,
        }
    }

    /// Columns per site after dummy expansion.
    pub fn p(&self) -> usize {
        match self.setting {
            Setting::Continuous => self.m * self.group_size,
            Setting::Binary | Setting::Mixed => {
                let c = self.categorical_count();
                c * (self.levels - 1) + (self.m - c)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.len() != SITES {
            return Err(Error::config("n", format!("expected one size per site ({SITES})")));
        }
        if self.n.iter().any(|&n| n < 2) {
            return Err(Error::config("n", "every site needs at least 2 rows"));
        }
        if self.m == 0 {
            return Err(Error::config("M", "must be positive"));
        }
        if self.group_size == 0 {
            return Err(Error::config("group_size", "must be positive"));
        }
        if self.s0 + self.s1 + self.s2 > self.m {
            return Err(Error::config("s0", format!("s0 + s1 + s2 = {} exceeds M = {}", self.s0 + self.s1 + self.s2, self.m)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config("rho", "must lie in [0, 1)"));
        }
        if !(self.gamma >= 0.0 && self.gamma * self.rho < 1.0) {
            return Err(Error::config("gamma", "need gamma >= 0 and gamma * rho < 1"));
        }
        if !(self.r > -1.0 && self.r < 1.0) {
            return Err(Error::config("r", "must lie in (-1, 1)"));
        }
        if !(self.amplitude() >= 0.0 && self.amplitude().is_finite()) {
            return Err(Error::config("A", "must be finite and non-negative"));
        }
        if self.sigma.len() != SITES || self.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config("sigma", format!("expected {SITES} finite non-negative values")));
        }
        if self.alpha.len() != SITES || self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("alpha", format!("expected {SITES} finite values")));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::config("q", "must lie in (0, 1)"));
        }
        if self.replications < 2 {
            return Err(Error::config("replications", "must be at least 2"));
        }
        if self.grid_size < MIN_GRID_LEN {
            return Err(Error::config("grid_size", format!("must be at least {MIN_GRID_LEN}")));
        }
        if let Some(m) = &self.methods {
            if m.is_empty() {
                return Err(Error::config("methods", "list at least one strategy"));
            }
            if m.contains(&Strategy::Individual) && self.setting != Setting::Continuous {
                return Err(Error::config("methods", "the individual baseline runs in the continuous setting only"));
            }
        }
        if self.setting != Setting::Continuous {
            if self.categorical_count() > self.m {
                return Err(Error::config("categorical", "cannot exceed M"));
            }
            if self.levels < 2 {
                return Err(Error::config("levels", "need at least 2 levels"));
            }
            if matches!(self.knockoff_method(), KnockoffMethod::FixedEqui | KnockoffMethod::FixedSdp) {
                return Err(Error::config("knockoff", "fixed-design knockoffs need an all-continuous design"));
            }
        }
        Ok(())
    }
}

/// One parameter varied over a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub field: String,
    pub values: Vec<serde_json::Value>,
}

/// A simulation file: a base config and an optional one-parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    #[serde(flatten)]
    pub base: serde_json::Map<String, serde_json::Value>,
}

impl SimPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        match value {
            serde_json::Value::Object(base) => Ok(Self { base }),
            _ => Err(Error::config("<root>", "expected a JSON object")),
        }
    }

    /// The validated grid points, in sweep order.
    pub fn points(&self) -> Result<Vec<SimConfig>> {
        let mut base = self.base.clone();
        let sweep = match base.remove("sweep") {
            Some(v) => Some(
                serde_json::from_value::<Sweep>(v).map_err(|e| Error::config("sweep", e.to_string()))?,
            ),
            None => None,
        };
        let overrides: Vec<Option<(String, serde_json::Value)>> = match &sweep {
            Some(s) if s.values.is_empty() => return Err(Error::config("sweep", "no values")),
            Some(s) => s.values.iter().map(|v| Some((s.field.clone(), v.clone()))).collect(),
            None => vec![None],
        };
        overrides
            .into_iter()
            .map(|o| {
                let mut map = base.clone();
                if let Some((field, v)) = o {
                    map.insert(field, v);
                }
                let cfg: SimConfig = serde_json::from_value(serde_json::Value::Object(map)).map_err(config_error)?;
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

/// Name the offending field when serde reports one.
fn config_error(e: serde_json::Error) -> Error {
    let text = e.to_string();
    let field = ["unknown field `", "missing field `", "field `"]
        .iter()
        .find_map(|p| text.find(p).map(|i| &text[i + p.len()..]))
        .and_then(|rest| rest.split('`').next())
        .unwrap_or("<root>")
        .to_string();
    Error::Config { field, message: text }
}
