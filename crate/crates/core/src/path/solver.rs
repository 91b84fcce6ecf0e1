//! Group-lasso solver for gaussian and binomial working models.
//!
//! Objective: deviance(β) + λ Σ_g ‖β_g‖, with deviance the residual sum of
//! squares (gaussian) or -2·log-likelihood (binomial). Penalized groups are
//! organized in units: a unit holds a group and, on an augmented design, its
//! knockoff copy. Both halves of a unit are updated by one proximal-gradient
//! step computed from the same state, and every accumulation that mixes the
//! two halves is a single commutative addition. Exchanging the columns of a
//! unit's halves therefore exchanges the fitted halves bit-for-bit.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::OutcomeFamily;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Convergence when the largest coefficient change in a sweep is below this.
    pub tolerance: f64,
    /// Budget of block sweeps per λ (summed over IRLS iterations).
    pub max_sweeps: usize,
    /// A group is active when its coefficient norm exceeds this.
    pub active_threshold: f64,
    pub max_irls: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_sweeps: 10_000,
            active_threshold: 1e-8,
            max_irls: 100,
        }
    }
}

/// A penalized unit: one group, or a group together with its knockoff.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedUnit {
    pub sides: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct GroupLasso {
    /// n × d design; the last column is the intercept.
    design: DMatrix<f64>,
    y: DVector<f64>,
    family: OutcomeFamily,
    units: Vec<PenalizedUnit>,
    /// Unpenalized columns, intercept last.
    unpenalized: Vec<usize>,
    /// Precomputed for the gaussian family.
    gram: Option<DMatrix<f64>>,
    options: SolverOptions,
}

/// Coefficients on the design columns; the intercept is the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub sweeps: usize,
}

impl Fit {
    pub fn intercept(&self) -> f64 {
        self.beta[self.beta.len() - 1]
    }
}

/// G = AᵀW A with a fixed row-order accumulation.
fn weighted_gram(a: &DMatrix<f64>, w: Option<&DVector<f64>>) -> DMatrix<f64> {
    let (n, d) = a.shape();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        let ci = a.column(i);
        for j in i..d {
            let cj = a.column(j);
            let mut s = 0.0;
            match w {
                Some(w) => {
                    for r in 0..n {
                        s += w[r] * (ci[r] * cj[r]);
                    }
                }
                None => {
                    for r in 0..n {
                        s += ci[r] * cj[r];
                    }
                }
            }
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    g
}

fn cross(a: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let (n, d) = a.shape();
    DVector::from_fn(d, |j, _| {
        let col = a.column(j);
        let mut s = 0.0;
        for r in 0..n {
            s += col[r] * v[r];
        }
        s
    })
}

fn norm(beta: &DVector<f64>, cols: &[usize]) -> f64 {
    let mut s = 0.0;
    for &j in cols {
        s += beta[j] * beta[j];
    }
    s.sqrt()
}

/// 2 λ_max of the unit's Gram block. The eigenvalue is taken over every
/// rotation of the side order, so exchanging the sides' data gives the same bits.
fn unit_lipschitz(gram: &DMatrix<f64>, unit: &PenalizedUnit) -> f64 {
    let k = unit.sides.len();
    let mut top = 0.0f64;
    for r in 0..k {
        let cols: Vec<usize> = (0..k).flat_map(|i| unit.sides[(i + r) % k].iter().copied()).collect();
        top = top.max(linalg::max_eigenvalue(&linalg::submatrix(gram, &cols, &cols)));
    }
    2.0 * top * (1.0 + 1e-12)
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^η) without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Binomial deviance -2 Σ [y η - log(1 + e^η)] for η = Aβ.
pub fn binomial_deviance(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = a * beta;
    -2.0 * eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &yi)| yi * e - softplus(e))
        .sum::<f64>()
}

/// Gradient of [`binomial_deviance`]: -2 Aᵀ(y - σ(Aβ)).
pub fn binomial_deviance_gradient(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let eta = a * beta;
    let resid = DVector::from_fn(y.len(), |i, _| y[i] - sigmoid(eta[i]));
    a.transpose() * resid * -2.0
}

struct QuadraticState<'a> {
    gram: &'a DMatrix<f64>,
    /// c = Aᵀ(working residual); the deviance gradient is -2c.
    c: DVector<f64>,
    unit_lipschitz: Vec<f64>,
    unpenalized_chol: Option<Cholesky<f64, Dyn>>,
    unit_grams: Vec<DMatrix<f64>>,
    side_sum: Vec<f64>,
    unit_sum: Vec<f64>,
}

impl GroupLasso {
    /// `x` holds the candidate columns; `units` and `unpenalized` index into
    /// it. An intercept column is appended internally.
    pub fn new(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        family: OutcomeFamily,
        units: Vec<PenalizedUnit>,
        unpenalized: Vec<usize>,
        options: SolverOptions,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::Dimension(format!("design has {n} rows, y has {}", y.len())));
        }
        let mut seen = vec![false; p];
        for &j in units.iter().flat_map(|u| u.sides.iter().flatten()).chain(&unpenalized) {
            if j >= p || seen[j] {
                return Err(Error::Dimension(format!("column {j} is out of range or repeated")));
            }
            seen[j] = true;
        }
        if family == OutcomeFamily::Binomial {
            let s = y.sum();
            if s == 0.0 || s == n as f64 {
                return Err(Error::DegenerateDesign("binomial outcome is constant".into()));
            }
        }
        let mut design = DMatrix::from_element(n, p + 1, 1.0);
        design.columns_mut(0, p).copy_from(x);
        let mut unpenalized = unpenalized;
        unpenalized.push(p);
        let gram = (family == OutcomeFamily::Gaussian).then(|| weighted_gram(&design, None));
        Ok(Self {
            design,
            y: y.clone(),
            family,
            units,
            unpenalized,
            gram,
            options,
        })
    }

    pub fn units(&self) -> &[PenalizedUnit] {
        &self.units
    }

    pub fn family(&self) -> OutcomeFamily {
        self.family
    }

    /// η = Aβ summed unpenalized columns first, then unit by unit with the
    /// halves of a unit combined by one addition.
    fn linear_predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        let n = self.design.nrows();
        DVector::from_fn(n, |i, _| {
            let mut eta = 0.0;
            for &j in &self.unpenalized {
                eta += self.design[(i, j)] * beta[j];
            }
            for unit in &self.units {
                let mut acc = 0.0;
                for side in &unit.sides {
                    let mut s = 0.0;
                    for &j in side {
                        s += self.design[(i, j)] * beta[j];
                    }
                    acc += s;
                }
                eta += acc;
            }
            eta
        })
    }

    fn penalty(&self, beta: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for unit in &self.units {
            let mut acc = 0.0;
            for side in &unit.sides {
                acc += norm(beta, side);
            }
            total += acc;
        }
        total
    }

    fn deviance(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.linear_predictor(beta);
        match self.family {
            OutcomeFamily::Gaussian => eta.iter().zip(self.y.iter()).map(|(e, y)| (y - e).powi(2)).sum(),
            OutcomeFamily::Binomial => {
                -2.0 * eta
                    .iter()
                    .zip(self.y.iter())
                    .map(|(&e, &y)| y * e - softplus(e))
                    .sum::<f64>()
            }
        }
    }

    pub fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        let pen = if lambda.is_finite() { lambda * self.penalty(beta) } else { 0.0 };
        self.deviance(beta) + pen
    }

    fn prepare<'a>(&self, gram: &'a DMatrix<f64>, c: DVector<f64>) -> Result<QuadraticState<'a>> {
        let unit_lipschitz = self
            .units
            .iter()
            .map(|u| unit_lipschitz(gram, u))
            .collect();
        let mut g_uu = linalg::submatrix(gram, &self.unpenalized, &self.unpenalized);
        let jitter = 1e-12 * g_uu.trace().max(1.0);
        for i in 0..g_uu.nrows() {
            g_uu[(i, i)] += jitter;
        }
        let unpenalized_chol = Some(
            g_uu.cholesky()
                .ok_or_else(|| Error::DegenerateDesign("unpenalized columns are collinear".into()))?,
        );
        let d = c.len();
        let unit_grams = self
            .units
            .iter()
            .map(|u| {
                let cols: Vec<usize> = u.sides.iter().flatten().copied().collect();
                linalg::submatrix(gram, &cols, &cols)
            })
            .collect();
        Ok(QuadraticState {
            gram,
            c,
            unit_lipschitz,
            unpenalized_chol,
            unit_grams,
            side_sum: vec![0.0; d],
            unit_sum: vec![0.0; d],
        })
    }

    /// c -= G[:, unit] δ, summed per side in column order and then across sides.
    fn apply_delta(state: &mut QuadraticState<'_>, sides: &[Vec<usize>], deltas: &[Vec<f64>]) {
        let QuadraticState {
            gram,
            c,
            side_sum,
            unit_sum,
            ..
        } = state;
        unit_sum.fill(0.0);
        for (side, delta) in sides.iter().zip(deltas) {
            side_sum.fill(0.0);
            let d = side_sum.len();
            for (&j, &dk) in side.iter().zip(delta) {
                let col = &gram.as_slice()[j * d..(j + 1) * d];
                for (s, &g) in side_sum.iter_mut().zip(col) {
                    *s += g * dk;
                }
            }
            for (a, &s) in unit_sum.iter_mut().zip(side_sum.iter()) {
                *a += s;
            }
        }
        for (ci, &a) in c.iter_mut().zip(unit_sum.iter()) {
            *ci -= a;
        }
    }

    fn update_unpenalized(&self, state: &mut QuadraticState<'_>, beta: &mut DVector<f64>) -> f64 {
        let mut max_delta = 0.0f64;
        if let Some(chol) = &state.unpenalized_chol {
            let c_u = DVector::from_iterator(self.unpenalized.len(), self.unpenalized.iter().map(|&j| state.c[j]));
            let delta = chol.solve(&c_u);
            if delta.iter().any(|&v| v != 0.0) {
                for (k, &j) in self.unpenalized.iter().enumerate() {
                    beta[j] += delta[k];
                    max_delta = max_delta.max(delta[k].abs());
                }
                let sides = [self.unpenalized.clone()];
                Self::apply_delta(state, &sides, &[delta.as_slice().to_vec()]);
            }
        }
        max_delta
    }

    /// Repeated proximal steps on one unit against its own Gram block, then one
    /// update of c for the net change. Returns the largest single-step change.
    fn update_unit(&self, state: &mut QuadraticState<'_>, beta: &mut DVector<f64>, u: usize, lambda: f64) -> f64 {
        let unit = &self.units[u];
        let lip = state.unit_lipschitz[u];
        let mut max_delta = 0.0f64;
        if lip <= 0.0 {
            return max_delta;
        }
        let cols: Vec<usize> = unit.sides.iter().flatten().copied().collect();
        let width = cols.len();
        let local = &state.unit_grams[u];
        let mut c_loc: Vec<f64> = cols.iter().map(|&j| state.c[j]).collect();
        let start: Vec<f64> = cols.iter().map(|&j| beta[j]).collect();
        let mut cur = start.clone();
        let mut step = vec![0.0; width];
        for _inner in 0..50 {
            let mut unit_delta = 0.0f64;
            let mut off = 0;
            for side in &unit.sides {
                let range = off..off + side.len();
                let vn = range
                    .clone()
                    .map(|i| {
                        let v = cur[i] + 2.0 * c_loc[i] / lip;
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt();
                let shrink = if lambda.is_infinite() || vn == 0.0 {
                    0.0
                } else {
                    (1.0 - lambda / (lip * vn)).max(0.0)
                };
                for i in range {
                    let v = (cur[i] + 2.0 * c_loc[i] / lip) * shrink;
                    step[i] = v - cur[i];
                    unit_delta = unit_delta.max(step[i].abs());
                }
                off += side.len();
            }
            if unit_delta == 0.0 {
                break;
            }
            for (x, d) in cur.iter_mut().zip(&step) {
                *x += d;
            }
            for (r, cr) in c_loc.iter_mut().enumerate() {
                let mut acc = 0.0;
                let mut off = 0;
                for side in &unit.sides {
                    let mut s = 0.0;
                    for k in off..off + side.len() {
                        s += local[(r, k)] * step[k];
                    }
                    acc += s;
                    off += side.len();
                }
                *cr -= acc;
            }
            max_delta = max_delta.max(unit_delta);
            if unit_delta < self.options.tolerance {
                break;
            }
        }
        if max_delta > 0.0 {
            let mut deltas = Vec::with_capacity(unit.sides.len());
            let mut off = 0;
            for side in &unit.sides {
                let mut delta = Vec::with_capacity(side.len());
                for (k, &j) in side.iter().enumerate() {
                    delta.push(cur[off + k] - start[off + k]);
                    beta[j] = cur[off + k];
                }
                deltas.push(delta);
                off += side.len();
            }
            Self::apply_delta(state, &unit.sides, &deltas);
        }
        max_delta
    }

    fn unit_is_zero(&self, beta: &DVector<f64>, u: usize) -> bool {
        self.units[u].sides.iter().flatten().all(|&j| beta[j] == 0.0)
    }

    /// Block coordinate descent on Σ w (z - Aβ)² + λ pen. Returns true on convergence.
    ///
    /// Full sweeps alternate with sweeps over the units that are currently
    /// nonzero; convergence is only declared after a full sweep.
    fn descend(&self, state: &mut QuadraticState<'_>, beta: &mut DVector<f64>, lambda: f64, sweeps: &mut usize) -> bool {
        let tol = self.options.tolerance;
        let mut active: Option<Vec<usize>> = None;
        while *sweeps < self.options.max_sweeps {
            *sweeps += 1;
            let mut max_delta = self.update_unpenalized(state, beta);
            match &active {
                None => {
                    for u in 0..self.units.len() {
                        max_delta = max_delta.max(self.update_unit(state, beta, u, lambda));
                    }
                    if max_delta < tol {
                        return true;
                    }
                    active = Some((0..self.units.len()).filter(|&u| !self.unit_is_zero(beta, u)).collect());
                }
                Some(set) => {
                    for &u in set {
                        max_delta = max_delta.max(self.update_unit(state, beta, u, lambda));
                    }
                    if max_delta < tol {
                        active = None;
                    }
                }
            }
        }
        false
    }

    fn zeros(&self) -> DVector<f64> {
        DVector::zeros(self.design.ncols())
    }

    /// Fit at one λ, warm-started from `warm` (β = 0 when `None`).
    /// `λ = ∞` fits the unpenalized columns only.
    pub fn fit(&self, lambda: f64, warm: Option<&Fit>) -> Result<Fit> {
        let mut beta = warm.map_or_else(|| self.zeros(), |f| f.beta.clone());
        let mut sweeps = 0;
        let converged = match self.family {
            OutcomeFamily::Gaussian => {
                let gram = self.gram.as_ref().expect("gaussian gram");
                let eta = self.linear_predictor(&beta);
                let resid = &self.y - eta;
                let mut state = self.prepare(gram, cross(&self.design, &resid))?;
                self.descend(&mut state, &mut beta, lambda, &mut sweeps)
            }
            OutcomeFamily::Binomial => self.irls(lambda, &mut beta, &mut sweeps)?,
        };
        if !converged {
            return Err(Error::PathConvergence {
                lambda,
                partial_z: Vec::new(),
                partial_ztilde: Vec::new(),
            });
        }
        Ok(Fit { beta, lambda, sweeps })
    }

    /// Penalized IRLS with the group penalty inside each reweighted problem
    /// and step halving on the penalized deviance.
    fn irls(&self, lambda: f64, beta: &mut DVector<f64>, sweeps: &mut usize) -> Result<bool> {
        let n = self.design.nrows();
        let mut current = self.objective(beta, lambda);
        for _ in 0..self.options.max_irls {
            let eta = self.linear_predictor(beta);
            let mu = DVector::from_fn(n, |i, _| sigmoid(eta[i]));
            let w = DVector::from_fn(n, |i, _| (mu[i] * (1.0 - mu[i])).max(1e-10));
            let resid = &self.y - &mu;
            let gram = weighted_gram(&self.design, Some(&w));
            let mut state = self.prepare(&gram, cross(&self.design, &resid))?;
            let mut proposal = beta.clone();
            // Each weighted subproblem is a quadratic approximation to the
            // deviance, which carries the factor 2 in its gradient, matching
            // the gaussian scaling.
            if !self.descend(&mut state, &mut proposal, lambda, sweeps) {
                return Ok(false);
            }
            let mut step = 1.0;
            let mut next = proposal.clone();
            let mut value = self.objective(&next, lambda);
            let mut halvings = 0;
            while !(value <= current + 1e-12 * current.abs().max(1.0)) && halvings < 30 {
                step *= 0.5;
                next = &*beta + (&proposal - &*beta) * step;
                value = self.objective(&next, lambda);
                halvings += 1;
            }
            let change = (&next - &*beta).amax();
            if halvings == 30 {
                // No descent direction left at working precision.
                return Ok(true);
            }
            *beta = next;
            current = value;
            if change < self.options.tolerance {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Per-side norms of the coefficient blocks, unit by unit.
    pub fn side_norms(&self, fit: &Fit) -> Vec<Vec<f64>> {
        self.units
            .iter()
            .map(|u| u.sides.iter().map(|s| norm(&fit.beta, s)).collect())
            .collect()
    }

    /// Smallest λ at which every penalized block is zero: max over sides of
    /// 2‖A_sᵀ r₀‖ with r₀ the residual of the unpenalized-only fit.
    pub fn lambda_max(&self) -> Result<f64> {
        let null = self.fit(f64::INFINITY, None)?;
        let eta = self.linear_predictor(&null.beta);
        let resid = match self.family {
            OutcomeFamily::Gaussian => &self.y - eta,
            OutcomeFamily::Binomial => DVector::from_fn(self.y.len(), |i, _| self.y[i] - sigmoid(eta[i])),
        };
        let c = cross(&self.design, &resid);
        let mut best = 0.0f64;
        for unit in &self.units {
            for side in &unit.sides {
                best = best.max(2.0 * norm(&c, side));
            }
        }
        Ok(best)
    }

    /// Fit along a decreasing grid with warm starts and record, per unit side,
    /// the first grid value at which the side is active (0 if never).
    pub fn entry_values(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut entry: Vec<Vec<f64>> = self.units.iter().map(|u| vec![0.0; u.sides.len()]).collect();
        let mut warm: Option<Fit> = None;
        for &lambda in grid {
            let fit = match self.fit(lambda, warm.as_ref()) {
                Ok(f) => f,
                Err(Error::PathConvergence { .. }) => {
                    let (partial_z, partial_ztilde) = split_entries(&entry);
                    return Err(Error::PathConvergence {
                        lambda,
                        partial_z,
                        partial_ztilde,
                    });
                }
                Err(e) => return Err(e),
            };
            for (u, norms) in self.side_norms(&fit).into_iter().enumerate() {
                for (s, nrm) in norms.into_iter().enumerate() {
                    if entry[u][s] == 0.0 && nrm > self.options.active_threshold {
                        entry[u][s] = lambda;
                    }
                }
            }
            warm = Some(fit);
        }
        Ok(entry)
    }
}

pub(crate) fn split_entries(entry: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let z = entry.iter().map(|e| e[0]).collect();
    let zt = entry.iter().map(|e| e.get(1).copied().unwrap_or(0.0)).collect();
    (z, zt)
}
