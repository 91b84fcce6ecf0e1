//! Combining per-site statistics into W and the knockoff / knockoff+ selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::GroupPartition;
use crate::error::{Error, Result};
use crate::path::PathStatistics;

/// A one-swap-flip-sign combiner: swapping (Z, Z̃) at any one site on a set
/// of groups S must flip the sign of the output exactly on S.
pub trait Osff: Sync {
    fn id(&self) -> &str;

    /// `sites[k] = (Z^k, Z̃^k)`, all of one length M.
    fn combine(&self, sites: &[(&[f64], &[f64])]) -> Vec<f64>;
}

/// W = ⊙_k (Z^k - Z̃^k). Magnitudes are multiplied in sorted order and the
/// sign applied last, so the result is bit-identical under site reordering and
/// a swap at one site flips the sign exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProductOsff;

impl Osff for ProductOsff {
    fn id(&self) -> &str {
        "product"
    }

    fn combine(&self, sites: &[(&[f64], &[f64])]) -> Vec<f64> {
        let m = sites.first().map_or(0, |s| s.0.len());
        (0..m)
            .map(|g| {
                let factors: Vec<f64> = sites.iter().map(|(z, zt)| z[g] - zt[g]).collect();
                let mut mags: Vec<f64> = factors.iter().map(|v| v.abs()).collect();
                mags.sort_by(f64::total_cmp);
                let negatives = factors.iter().filter(|v| **v < 0.0).count();
                let mag: f64 = mags.iter().product();
                if negatives % 2 == 1 && mag != 0.0 {
                    -mag
                } else {
                    mag
                }
            })
            .collect()
    }
}

/// Check the swap-flip property of `f` on random inputs: for every site and a
/// random group set S, swapping that site's (Z, Z̃) on S must equal W ⊙ ε(S).
pub fn check_swap_flip(f: &dyn Osff, sites: usize, groups: usize, probes: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let data: Vec<(Vec<f64>, Vec<f64>)> = (0..sites)
            .map(|_| {
                let z = (0..groups).map(|_| rng.random_range(0.0..10.0)).collect();
                let zt = (0..groups).map(|_| rng.random_range(0.0..10.0)).collect();
                (z, zt)
            })
            .collect();
        let view: Vec<(&[f64], &[f64])> = data.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
        let w = f.combine(&view);
        for k in 0..sites {
            let s: Vec<bool> = (0..groups).map(|_| rng.random_bool(0.5)).collect();
            let mut swapped = data.clone();
            for g in 0..groups {
                if s[g] {
                    let (z, zt) = &mut swapped[k];
                    std::mem::swap(&mut z[g], &mut zt[g]);
                }
            }
            let view: Vec<(&[f64], &[f64])> = swapped.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
            let w2 = f.combine(&view);
            for g in 0..groups {
                let expect = if s[g] { -w[g] } else { w[g] };
                if w2[g] != expect {
                    return Err(Error::Data(format!(
                        "combiner '{}' violates the swap-flip property at site {k}, group {g}",
                        f.id()
                    )));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStatistics {
    pub w: Vec<f64>,
    pub osff_id: String,
    pub source_sites: Vec<String>,
    pub group_names: Vec<String>,
}

/// Reorder each site's statistics to the group order of the first site.
fn align(stats: &[PathStatistics]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let first = stats
        .first()
        .ok_or_else(|| Error::Alignment("no site statistics to combine".into()))?;
    let m = first.group_names.len();
    let reference: BTreeSet<&String> = first.group_names.iter().collect();
    let mut out = Vec::with_capacity(stats.len());
    for s in stats {
        if s.z.len() != s.group_names.len() || s.z_tilde.len() != s.group_names.len() {
            return Err(Error::Alignment(format!(
                "site '{}' has {} names but {}/{} statistics",
                s.dataset_id,
                s.group_names.len(),
                s.z.len(),
                s.z_tilde.len()
            )));
        }
        let names: BTreeSet<&String> = s.group_names.iter().collect();
        if names != reference || s.group_names.len() != m {
            let diff: Vec<&String> = reference.symmetric_difference(&names).copied().collect();
            return Err(Error::Alignment(format!(
                "site '{}' group names differ from site '{}': {:?} (M = {} vs {})",
                s.dataset_id,
                first.dataset_id,
                diff,
                s.group_names.len(),
                m
            )));
        }
        let index: HashMap<&String, usize> = s.group_names.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let z = first.group_names.iter().map(|n| s.z[index[n]]).collect();
        let zt = first.group_names.iter().map(|n| s.z_tilde[index[n]]).collect();
        out.push((z, zt));
    }
    Ok(out)
}

pub fn combine(stats: &[PathStatistics], f: &dyn Osff) -> Result<FilterStatistics> {
    let aligned = align(stats)?;
    let view: Vec<(&[f64], &[f64])> = aligned.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    Ok(FilterStatistics {
        w: f.combine(&view),
        osff_id: f.id().to_string(),
        source_sites: stats.iter().map(|s| s.dataset_id.clone()).collect(),
        group_names: stats[0].group_names.clone(),
    })
}

/// W_m = Π_k (Z^k_m - Z̃^k_m), groups matched by name.
pub fn osff_product(stats: &[PathStatistics]) -> Result<FilterStatistics> {
    combine(stats, &ProductOsff)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected: BTreeSet<usize>,
    /// `f64::INFINITY` when nothing is selected.
    pub tau: f64,
    pub q: f64,
    pub plus: bool,
}

/// Ratio (offset + #{W ≤ -t}) / (#{W ≥ t} ∨ 1) at threshold t.
pub fn fdp_estimate(w: &[f64], t: f64, plus: bool) -> f64 {
    let neg = w.iter().filter(|&&v| v <= -t).count();
    let pos = w.iter().filter(|&&v| v >= t).count();
    let offset = if plus { 1.0 } else { 0.0 };
    (offset + neg as f64) / pos.max(1) as f64
}

/// Knockoff (plus = false) or knockoff+ (plus = true) threshold and selection.
pub fn threshold(w: &[f64], q: f64, plus: bool) -> Result<SelectionResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Range(format!("q must lie in (0, 1), got {q}")));
    }
    let mut candidates: Vec<f64> = w.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let tau = candidates
        .into_iter()
        .find(|&t| fdp_estimate(w, t, plus) <= q)
        .unwrap_or(f64::INFINITY);
    let selected = if tau.is_finite() {
        w.iter().enumerate().filter(|(_, &v)| v >= tau).map(|(m, _)| m).collect()
    } else {
        BTreeSet::new()
    };
    Ok(SelectionResult {
        selected,
        tau,
        q,
        plus,
    })
}

/// Exchange entries j and j + p for every column j in the groups of S.
pub fn group_swap_vector(v: &[f64], s: &BTreeSet<usize>, partition: &GroupPartition) -> Result<Vec<f64>> {
    let p = partition.p();
    if v.len() != 2 * p {
        return Err(Error::Dimension(format!("expected length {}, got {}", 2 * p, v.len())));
    }
    check_range(s, partition)?;
    let mut out = v.to_vec();
    for &m in s {
        for &j in &partition.group(m).columns {
            out.swap(j, j + p);
        }
    }
    Ok(out)
}

/// Column version of [`group_swap_vector`] on an n × 2p matrix.
pub fn group_swap_matrix(a: &DMatrix<f64>, s: &BTreeSet<usize>, partition: &GroupPartition) -> Result<DMatrix<f64>> {
    let p = partition.p();
    if a.ncols() != 2 * p {
        return Err(Error::Dimension(format!("expected {} columns, got {}", 2 * p, a.ncols())));
    }
    check_range(s, partition)?;
    let mut out = a.clone();
    for &m in s {
        for &j in &partition.group(m).columns {
            out.swap_columns(j, j + p);
        }
    }
    Ok(out)
}

fn check_range(s: &BTreeSet<usize>, partition: &GroupPartition) -> Result<()> {
    match s.iter().find(|&&m| m >= partition.len()) {
        Some(m) => Err(Error::Range(format!(
            "group index {m} out of range for M = {}",
            partition.len()
        ))),
        None => Ok(()),
    }
}

/// JSON form of a selection, keyed by group name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionJson {
    pub q: f64,
    pub plus: bool,
    pub tau: TauValue,
    pub selected: Vec<String>,
    #[serde(rename = "W")]
    pub w: BTreeMap<String, f64>,
}

/// A finite threshold or the string "inf".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauValue(pub f64);

impl Serialize for TauValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for TauValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TauValue(v)),
            Raw::Str(s) if s == "inf" => Ok(TauValue(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid tau '{s}'"))),
        }
    }
}

impl SelectionJson {
    pub fn new(stats: &FilterStatistics, sel: &SelectionResult) -> Self {
        let mut selected: Vec<String> = sel.selected.iter().map(|&m| stats.group_names[m].clone()).collect();
        selected.sort();
        Self {
            q: sel.q,
            plus: sel.plus,
            tau: TauValue(sel.tau),
            selected,
            w: stats.group_names.iter().cloned().zip(stats.w.iter().copied()).collect(),
        }
    }
}
