//! Synthetic multi-site data: continuous, binary and mixed settings.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{Scenario, Setting, SimConfig, SITES};
use crate::data::{Categorical, ColumnMeta, DatasetView, Group, GroupPartition, OutcomeFamily};
use crate::error::{Error, Result};

/// Site datasets, their group-level coefficients and the mutual-signal set.
#[derive(Debug, Clone)]
pub struct Generated {
    pub sites: Vec<DatasetView>,
    /// `coefficients[k][m]` is the common coefficient of group m's columns at site k.
    pub coefficients: Vec<Vec<f64>>,
    pub truth: BTreeSet<usize>,
}

pub fn generate(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Generated> {
    match cfg.setting {
        Setting::Continuous => gen_continuous(cfg, rng),
        Setting::Binary => gen_binary(cfg, rng),
        Setting::Mixed => gen_mixed(cfg, rng),
    }
}

/// Group magnitudes and shared Rademacher signs for the given signal sets.
fn group_coefficients(
    cfg: &SimConfig,
    mutual: &[usize],
    exclusive: &[Vec<usize>; SITES],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let a = cfg.amplitude();
    let uniform = |rng: &mut ChaCha8Rng| if a > 0.0 { rng.random_range(0.0..=a) } else { 0.0 };
    let shared: Vec<f64> = mutual.iter().map(|_| uniform(rng)).collect();
    let per_site: Vec<Vec<f64>> = (0..SITES)
        .map(|_| match cfg.scenario {
            Scenario::SameStrength => shared.clone(),
            Scenario::DifferentStrength => mutual.iter().map(|_| uniform(rng)).collect(),
        })
        .collect();
    let excl: Vec<Vec<f64>> = exclusive.iter().map(|s| s.iter().map(|_| uniform(rng)).collect()).collect();
    let signs: Vec<f64> = (0..cfg.m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let mut beta = vec![vec![0.0; cfg.m]; SITES];
    for k in 0..SITES {
        for (i, &m) in mutual.iter().enumerate() {
            beta[k][m] = per_site[k][i] * signs[m];
        }
        for (i, &m) in exclusive[k].iter().enumerate() {
            beta[k][m] = excl[k][i] * signs[m];
        }
    }
    beta
}

fn mutual_set(beta: &[Vec<f64>]) -> BTreeSet<usize> {
    (0..beta[0].len()).filter(|&m| beta.iter().all(|b| b[m] != 0.0)).collect()
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, factor: &DMatrix<f64>) -> DMatrix<f64> {
    let p = factor.nrows();
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * factor.transpose()
}

/// Lower Cholesky factor or a config error naming `field`.
fn cholesky_or_config(sigma: DMatrix<f64>, field: &str) -> Result<DMatrix<f64>> {
    sigma
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::config(field, "covariance is not positive definite"))
}

/// Within-group correlation ρ, between-group γρ, unit diagonal.
pub fn block_covariance(m: usize, size: usize, rho: f64, gamma: f64) -> DMatrix<f64> {
    let p = m * size;
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if i / size == j / size {
            rho
        } else {
            gamma * rho
        }
    })
}

pub fn gen_continuous(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let size = cfg.group_size;
    let factor = cholesky_or_config(block_covariance(cfg.m, size, cfg.rho, cfg.gamma), "rho")?;
    let mutual: Vec<usize> = (0..cfg.s0).collect();
    let exclusive = [
        (cfg.s0..cfg.s0 + cfg.s1).collect(),
        (cfg.s0 + cfg.s1..cfg.s0 + cfg.s1 + cfg.s2).collect(),
    ];
    let beta = group_coefficients(cfg, &mutual, &exclusive, rng);
    let mut sites = Vec::with_capacity(SITES);
    for k in 0..SITES {
        let n = cfg.n[k];
        let x = gaussian_rows(rng, n, &factor);
        let coef = DVector::from_fn(cfg.m * size, |j, _| beta[k][j / size]);
        let noise = DVector::from_fn(n, |_, _| cfg.sigma[k] * rng.sample::<f64, _>(StandardNormal));
        let y = &x * coef + noise;
        sites.push(DatasetView::continuous(
            x,
            y,
            OutcomeFamily::Gaussian,
            GroupPartition::contiguous(cfg.m, size),
        )?);
    }
    let truth = mutual_set(&beta);
    Ok(Generated {
        sites,
        coefficients: beta,
        truth,
    })
}

/// Categorical variables first (levels-1 dummies each, level 0 as
/// reference), then AR(r) continuous singletons.
fn mixed_design(cfg: &SimConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<DatasetView> {
    let c = cfg.categorical_count();
    let dummies = cfg.levels - 1;
    let cont = cfg.m - c;
    let p = c * dummies + cont;
    let mut x = DMatrix::zeros(n, p);
    for v in 0..c {
        for i in 0..n {
            let level = rng.random_range(0..cfg.levels);
            if level > 0 {
                x[(i, v * dummies + level - 1)] = 1.0;
            }
        }
    }
    if cont > 0 {
        let ar = DMatrix::from_fn(cont, cont, |i, j| cfg.r.powi((i as i32 - j as i32).abs()));
        let factor = cholesky_or_config(ar, "r")?;
        let z = gaussian_rows(rng, n, &factor);
        x.columns_mut(c * dummies, cont).copy_from(&z);
    }
    let mut groups = Vec::with_capacity(cfg.m);
    let mut names = Vec::with_capacity(p);
    let mut meta = Vec::with_capacity(p);
    let mut categoricals = Vec::with_capacity(c);
    for v in 0..c {
        let columns: Vec<usize> = (v * dummies..(v + 1) * dummies).collect();
        let levels: Vec<String> = (1..cfg.levels).map(|l| l.to_string()).collect();
        for l in &levels {
            names.push(format!("c{v}={l}"));
            meta.push(ColumnMeta::Dummy {
                parent: v,
                level: l.clone(),
            });
        }
        groups.push(Group {
            name: format!("c{v}"),
            columns: columns.clone(),
        });
        categoricals.push(Categorical {
            name: format!("c{v}"),
            reference: "0".into(),
            columns,
            levels,
        });
    }
    for j in 0..cont {
        names.push(format!("x{j}"));
        meta.push(ColumnMeta::Continuous);
        groups.push(Group {
            name: format!("x{j}"),
            columns: vec![c * dummies + j],
        });
    }
    DatasetView::new(
        x,
        DVector::zeros(n),
        OutcomeFamily::Gaussian,
        GroupPartition::new(p, groups)?,
        names,
        meta,
        categoricals,
    )
}

/// Draw `count` groups split between categorical (indices < c) and
/// continuous groups in proportion c : M - c, avoiding `taken`.
fn stratified_pick(
    cfg: &SimConfig,
    count: usize,
    taken: &mut BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let c = cfg.categorical_count();
    let want_cat = (count * c + cfg.m / 2) / cfg.m;
    let mut cat: Vec<usize> = (0..c).filter(|m| !taken.contains(m)).collect();
    let mut con: Vec<usize> = (c..cfg.m).filter(|m| !taken.contains(m)).collect();
    cat.shuffle(rng);
    con.shuffle(rng);
    let n_cat = want_cat.min(cat.len()).max(count.saturating_sub(con.len()));
    let n_con = count - n_cat;
    if n_cat > cat.len() || n_con > con.len() {
        return Err(Error::config("s0", "not enough groups for the requested signal counts"));
    }
    let mut out: Vec<usize> = cat[..n_cat].iter().chain(&con[..n_con]).copied().collect();
    out.sort_unstable();
    taken.extend(out.iter().copied());
    Ok(out)
}

/// Designs, group coefficients and latent linear predictors (without noise
/// or intercept) for the binary and mixed settings.
fn categorical_sites(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<DatasetView>, Vec<Vec<f64>>, Vec<DVector<f64>>)> {
    let mut taken = BTreeSet::new();
    let mutual = stratified_pick(cfg, cfg.s0, &mut taken, rng)?;
    let exclusive = [
        stratified_pick(cfg, cfg.s1, &mut taken, rng)?,
        stratified_pick(cfg, cfg.s2, &mut taken, rng)?,
    ];
    let beta = group_coefficients(cfg, &mutual, &exclusive, rng);
    let mut designs = Vec::with_capacity(SITES);
    let mut linear = Vec::with_capacity(SITES);
    for k in 0..SITES {
        let d = mixed_design(cfg, cfg.n[k], rng)?;
        let coef = DVector::from_fn(d.p(), |j, _| beta[k][d.partition.group_of(j).expect("all columns grouped")]);
        linear.push(&d.x * coef);
        designs.push(d);
    }
    Ok((designs, beta, linear))
}

fn binomial_site(d: &DatasetView, y: DVector<f64>, site: usize) -> Result<DatasetView> {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::DegenerateDesign(format!("site {site} outcome is constant")));
    }
    let mut out = d.with_outcome(y)?;
    out.family = OutcomeFamily::Binomial;
    Ok(out)
}

/// Logistic outcomes with site intercepts α_k.
pub fn gen_binary(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let (designs, beta, linear) = categorical_sites(cfg, rng)?;
    let mut sites = Vec::with_capacity(SITES);
    for (k, (d, eta)) in designs.iter().zip(&linear).enumerate() {
        let y = DVector::from_fn(d.n(), |i, _| {
            let prob = 1.0 / (1.0 + (-(cfg.alpha[k] + eta[i])).exp());
            if rng.random::<f64>() < prob {
                1.0
            } else {
                0.0
            }
        });
        sites.push(binomial_site(d, y, k)?);
    }
    let truth = mutual_set(&beta);
    Ok(Generated {
        sites,
        coefficients: beta,
        truth,
    })
}

/// 1{v >= 0} elementwise.
pub fn threshold_outcome(latent: &DVector<f64>) -> DVector<f64> {
    latent.map(|v| if v >= 0.0 { 1.0 } else { 0.0 })
}

/// Gaussian latent outcomes; site 1 keeps the latent value, site 2 observes
/// its sign.
pub fn gen_mixed(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let (designs, beta, linear) = categorical_sites(cfg, rng)?;
    let mut sites = Vec::with_capacity(SITES);
    for (k, (d, eta)) in designs.iter().zip(&linear).enumerate() {
        let latent = DVector::from_fn(d.n(), |i, _| eta[i] + cfg.sigma[k] * rng.sample::<f64, _>(StandardNormal));
        if k == 0 {
            sites.push(d.with_outcome(latent)?);
        } else {
            sites.push(binomial_site(d, threshold_outcome(&latent), k)?);
        }
    }
    let truth = mutual_set(&beta);
    Ok(Generated {
        sites,
        coefficients: beta,
        truth,
    })
}
