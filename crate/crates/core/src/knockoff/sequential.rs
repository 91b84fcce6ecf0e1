use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixed::gaussian_matrix;
use super::multinomial::{MultinomialFit, MultinomialOptions};
use super::{Construction, KnockoffOutput};
use crate::data::DatasetView;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct SequentialOptions {
    /// Ridge strength as a multiple of n, shared by the linear and multinomial fits.
    pub ridge_per_row: f64,
    /// Eigenvalue floor for the residual covariance.
    pub covariance_floor: f64,
}

impl Default for SequentialOptions {
    fn default() -> Self {
        Self {
            ridge_per_row: 1e-3,
            covariance_floor: 1e-6,
        }
    }
}

/// Multi-task ridge regression of `targets` on `predictors` with an
/// unpenalized intercept. Returns (fitted values, coefficients, intercepts).
fn multitask_ridge(
    predictors: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = predictors.nrows();
    let d = predictors.ncols();
    let target_means = linalg::column_means(targets);
    if d == 0 {
        let fitted = DMatrix::from_fn(n, targets.ncols(), |_, j| target_means[j]);
        return (fitted, DMatrix::zeros(0, targets.ncols()), target_means);
    }
    let pred_means = linalg::column_means(predictors);
    let mut pc = predictors.clone();
    for (j, mut col) in pc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-pred_means[j]);
    }
    let mut tc = targets.clone();
    for (j, mut col) in tc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-target_means[j]);
    }
    let mut gram = pc.transpose() * &pc;
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let rhs = pc.transpose() * &tc;
    let coef = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DMatrix::zeros(d, targets.ncols()));
    let intercept = &target_means - coef.transpose() * &pred_means;
    let fitted = predictors * &coef;
    let fitted = DMatrix::from_fn(n, targets.ncols(), |i, j| fitted[(i, j)] + intercept[j]);
    (fitted, coef, intercept)
}

fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = parts.iter().map(|m| m.nrows()).max().unwrap_or(0);
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(n, cols);
    let mut at = 0;
    for m in parts {
        if m.ncols() > 0 {
            out.columns_mut(at, m.ncols()).copy_from(m);
            at += m.ncols();
        }
    }
    out
}

/// Sequential group knockoffs for mixed continuous/categorical designs.
///
/// For each group m in partition order, the continuous part is drawn jointly
/// from a Gaussian fitted by multi-task ridge regression on the columns
/// outside the group plus the knockoffs already sampled; each categorical
/// block is then drawn from a ridge multinomial fit that includes the
/// group's continuous part, evaluated at its freshly sampled knockoff.
pub fn sequential_knockoff(d: &DatasetView, seed: u64, options: SequentialOptions) -> Result<KnockoffOutput> {
    let (n, p) = d.x.shape();
    let partition = &d.partition;
    let ridge = options.ridge_per_row * n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x_tilde = d.x.clone();

    for cat in &d.categoricals {
        let owner = partition.group_of(cat.columns[0]);
        if cat.columns.iter().any(|&j| partition.group_of(j) != owner) {
            return Err(Error::Data(format!(
                "dummies of '{}' are split across groups",
                cat.name
            )));
        }
    }

    let mut done: Vec<usize> = Vec::new();
    for (m, group) in partition.groups().iter().enumerate() {
        let in_group: Vec<bool> = (0..p).map(|j| partition.group_of(j) == Some(m)).collect();
        let outside: Vec<usize> = (0..p).filter(|&j| !in_group[j]).collect();
        let base = hstack(&[
            &linalg::select_columns(&d.x, &outside),
            &linalg::select_columns(&x_tilde, &done),
        ]);

        let con: Vec<usize> = group.columns.iter().copied().filter(|&j| d.is_continuous(j)).collect();
        if !con.is_empty() {
            let targets = linalg::select_columns(&d.x, &con);
            let (fitted, _, _) = multitask_ridge(&base, &targets, ridge);
            let resid = &targets - &fitted;
            let mut cov = resid.transpose() * &resid / n as f64;
            linalg::symmetrize(&mut cov);
            let floor = options.covariance_floor;
            let cov = linalg::sym_apply(&cov, |v| v.max(floor));
            let factor = linalg::psd_factor(&cov, 0.0)
                .ok_or_else(|| Error::Feasibility(format!("residual covariance of '{}'", group.name)))?;
            let draws = fitted + gaussian_matrix(&mut rng, n, con.len()) * factor;
            for (k, &j) in con.iter().enumerate() {
                x_tilde.set_column(j, &draws.column(k));
            }
        }

        let x_con = linalg::select_columns(&d.x, &con);
        let xt_con = linalg::select_columns(&x_tilde, &con);
        let fit_design = hstack(&[&x_con, &base]);
        let predict_design = hstack(&[&xt_con, &base]);
        for cat in d.categoricals.iter().filter(|c| in_group[c.columns[0]]) {
            let labels: Vec<usize> = (0..n)
                .map(|i| {
                    cat.columns
                        .iter()
                        .position(|&j| d.x[(i, j)] == 1.0)
                        .map_or(0, |l| l + 1)
                })
                .collect();
            let classes = cat.columns.len() + 1;
            let fit = MultinomialFit::fit(
                &fit_design,
                &labels,
                classes,
                MultinomialOptions {
                    ridge,
                    ..Default::default()
                },
            )
            .ok_or_else(|| Error::MultinomialConvergence(group.name.clone()))?;
            let probs = fit.predict_proba(&predict_design);
            for i in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut class = classes - 1;
                for c in 0..classes {
                    acc += probs[(i, c)];
                    if u < acc {
                        class = c;
                        break;
                    }
                }
                for (l, &j) in cat.columns.iter().enumerate() {
                    x_tilde[(i, j)] = if class == l + 1 { 1.0 } else { 0.0 };
                }
            }
        }
        done.extend(group.columns.iter().copied());
    }

    Ok(KnockoffOutput {
        x_tilde,
        b: None,
        construction: Construction::Sequential,
        seed,
    })
}
