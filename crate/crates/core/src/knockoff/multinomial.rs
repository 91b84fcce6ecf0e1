//! Ridge-penalized multinomial logistic regression fitted by damped Newton
//! steps. Class 0 is the reference with its linear predictor fixed at 0.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct MultinomialOptions {
    /// Penalty (ridge/2)·‖W‖² on non-intercept coefficients.
    pub ridge: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for MultinomialOptions {
    fn default() -> Self {
        Self {
            ridge: 1.0,
            max_iter: 100,
            tolerance: 1e-8,
        }
    }
}

/// Coefficients for classes 1..L; row 0 of each column is the intercept.
#[derive(Debug, Clone)]
pub struct MultinomialFit {
    pub coefficients: DMatrix<f64>,
    pub iterations: usize,
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    z.columns_mut(1, x.ncols()).copy_from(x);
    z
}

fn log_sum_exp_probs(eta: &[f64], out: &mut [f64]) {
    // eta excludes the reference class.
    let max = eta.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut denom = (-max).exp();
    for (o, &e) in out.iter_mut().zip(eta) {
        *o = (e - max).exp();
        denom += *o;
    }
    for o in out.iter_mut() {
        *o /= denom;
    }
}

fn penalized_nll(z: &DMatrix<f64>, labels: &[usize], w: &DMatrix<f64>, ridge: f64) -> f64 {
    let eta = z * w;
    let k = w.ncols();
    let mut nll = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = (0..k).map(|c| eta[(i, c)]).collect();
        let max = row.iter().fold(0.0f64, |m, &v| m.max(v));
        let lse = max + ((-max).exp() + row.iter().map(|v| (v - max).exp()).sum::<f64>()).ln();
        let own = if label == 0 { 0.0 } else { row[label - 1] };
        nll += lse - own;
    }
    let pen: f64 = w.rows(1, w.nrows() - 1).iter().map(|v| v * v).sum();
    nll + 0.5 * ridge * pen
}

impl MultinomialFit {
    /// Fit `labels` (values in 0..classes) on predictors `x`.
    pub fn fit(x: &DMatrix<f64>, labels: &[usize], classes: usize, options: MultinomialOptions) -> Option<Self> {
        assert!(classes >= 2);
        let z = with_intercept(x);
        let (n, d) = z.shape();
        let k = classes - 1;
        let dim = d * k;
        let mut w = DMatrix::zeros(d, k);
        let mut current = penalized_nll(&z, labels, &w, options.ridge);
        let mut probs = vec![0.0; k];
        for iter in 0..options.max_iter {
            let eta = &z * &w;
            let mut p_all = DMatrix::zeros(n, k);
            for i in 0..n {
                let row: Vec<f64> = (0..k).map(|c| eta[(i, c)]).collect();
                log_sum_exp_probs(&row, &mut probs);
                for c in 0..k {
                    p_all[(i, c)] = probs[c];
                }
            }
            let mut grad = DVector::zeros(dim);
            let mut hess = DMatrix::zeros(dim, dim);
            for a in 0..k {
                let resid = DVector::from_fn(n, |i, _| {
                    p_all[(i, a)] - if labels[i] == a + 1 { 1.0 } else { 0.0 }
                });
                grad.rows_mut(a * d, d).copy_from(&(z.transpose() * resid));
                for b in a..k {
                    // Block (a, b) of the Hessian is Zᵀ diag(h_ab) Z.
                    let mut scaled = z.clone();
                    for i in 0..n {
                        let h = if a == b {
                            p_all[(i, a)] * (1.0 - p_all[(i, a)])
                        } else {
                            -p_all[(i, a)] * p_all[(i, b)]
                        };
                        scaled.row_mut(i).scale_mut(h);
                    }
                    let block = z.transpose() * scaled;
                    hess.view_mut((a * d, b * d), (d, d)).copy_from(&block);
                    if a != b {
                        hess.view_mut((b * d, a * d), (d, d)).copy_from(&block.transpose());
                    }
                }
            }
            for a in 0..k {
                for u in 1..d {
                    grad[a * d + u] += options.ridge * w[(u, a)];
                    hess[(a * d + u, a * d + u)] += options.ridge;
                }
                // Tiny intercept damping guards against empty classes.
                hess[(a * d, a * d)] += 1e-10 * n as f64;
            }
            let step = hess.cholesky()?.solve(&grad);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let mut trial = w.clone();
                for a in 0..k {
                    for u in 0..d {
                        trial[(u, a)] -= scale * step[a * d + u];
                    }
                }
                let value = penalized_nll(&z, labels, &trial, options.ridge);
                if value <= current + 1e-12 * current.abs().max(1.0) {
                    w = trial;
                    current = value;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            let max_step = step.iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale;
            if !accepted || max_step < options.tolerance {
                return Some(Self {
                    coefficients: w,
                    iterations: iter + 1,
                });
            }
        }
        None
    }

    /// Class probabilities (n × classes), reference class first.
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let z = with_intercept(x);
        let eta = z * &self.coefficients;
        let k = self.coefficients.ncols();
        let mut out = DMatrix::zeros(x.nrows(), k + 1);
        let mut probs = vec![0.0; k];
        for i in 0..x.nrows() {
            let row: Vec<f64> = (0..k).map(|c| eta[(i, c)]).collect();
            log_sum_exp_probs(&row, &mut probs);
            let rest: f64 = probs.iter().sum();
            out[(i, 0)] = 1.0 - rest;
            for c in 0..k {
                out[(i, c + 1)] = probs[c];
            }
        }
        out
    }
}
