//! Group-lasso path statistics on the augmented design [X, X̃].

mod solver;

pub use solver::{
    binomial_deviance, binomial_deviance_gradient, Fit, GroupLasso, PenalizedUnit, SolverOptions,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DatasetView;
use crate::error::{Error, Result};
use crate::knockoff::KnockoffOutput;

pub const MIN_GRID_LEN: usize = 20;
pub const DEFAULT_GRID_LEN: usize = 100;
/// Ratio of the smallest to the largest default grid value.
pub const GRID_DEPTH: f64 = 1e-3;

/// Strictly decreasing positive penalty levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_GRID_LEN {
            return Err(Error::Range(format!(
                "grid needs at least {MIN_GRID_LEN} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Range("grid values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Range("grid values must be strictly decreasing".into()));
        }
        Ok(Self { values })
    }

    /// `len` log-spaced values from `top` down to `top * depth`.
    pub fn log_spaced(top: f64, len: usize, depth: f64) -> Result<Self> {
        let values = (0..len)
            .map(|t| top * depth.powf(t as f64 / (len.max(2) - 1) as f64))
            .collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.values
    }
}

/// Per-group entry values of originals (Z) and knockoffs (Z̃).
#[derive(Debug, Clone, PartialEq)]
pub struct PathStatistics {
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub grid: LambdaGrid,
    pub dataset_id: String,
    pub group_names: Vec<String>,
}

impl PathStatistics {
    /// Z - Z̃ per group.
    pub fn differences(&self) -> Vec<f64> {
        self.z.iter().zip(&self.z_tilde).map(|(a, b)| a - b).collect()
    }
}

/// Augmented design [X, X̃_grouped] with one two-sided unit per group and
/// ungrouped columns unpenalized.
fn augmented_problem(d: &DatasetView, ko: &KnockoffOutput, options: SolverOptions) -> Result<GroupLasso> {
    let (n, p) = d.x.shape();
    if ko.x_tilde.shape() != (n, p) {
        return Err(Error::Dimension(format!(
            "knockoff matrix is {:?}, design is {:?}",
            ko.x_tilde.shape(),
            (n, p)
        )));
    }
    let grouped = d.partition.grouped_columns();
    let mut knock_index = vec![usize::MAX; p];
    for (k, &j) in grouped.iter().enumerate() {
        knock_index[j] = p + k;
    }
    let mut a = DMatrix::zeros(n, p + grouped.len());
    a.columns_mut(0, p).copy_from(&d.x);
    for (k, &j) in grouped.iter().enumerate() {
        a.set_column(p + k, &ko.x_tilde.column(j));
    }
    let units = d
        .partition
        .groups()
        .iter()
        .map(|g| PenalizedUnit {
            sides: vec![
                g.columns.clone(),
                g.columns.iter().map(|&j| knock_index[j]).collect(),
            ],
        })
        .collect();
    GroupLasso::new(&a, &d.y, d.family, units, d.partition.ungrouped_columns(), options)
}

/// Grid from the group-KKT entry bound at β = 0 down to 1e-3 of it.
pub fn default_grid(d: &DatasetView, ko: &KnockoffOutput, len: usize) -> Result<LambdaGrid> {
    if len < MIN_GRID_LEN {
        return Err(Error::Range(format!("grid length must be at least {MIN_GRID_LEN}")));
    }
    let top = augmented_problem(d, ko, SolverOptions::default())?.lambda_max()?;
    if !(top > 0.0) {
        return Err(Error::DegenerateDesign(
            "every group has zero correlation with the null-model residual".into(),
        ));
    }
    LambdaGrid::log_spaced(top, len, GRID_DEPTH)
}

/// Fit the augmented group-lasso path and return Z, Z̃ per group.
pub fn group_lasso_path(
    d: &DatasetView,
    ko: &KnockoffOutput,
    grid: &LambdaGrid,
    dataset_id: &str,
) -> Result<PathStatistics> {
    group_lasso_path_with(d, ko, grid, dataset_id, SolverOptions::default())
}

pub fn group_lasso_path_with(
    d: &DatasetView,
    ko: &KnockoffOutput,
    grid: &LambdaGrid,
    dataset_id: &str,
    options: SolverOptions,
) -> Result<PathStatistics> {
    let problem = augmented_problem(d, ko, options)?;
    let entry = problem.entry_values(grid.values())?;
    let (z, z_tilde) = solver::split_entries(&entry);
    Ok(PathStatistics {
        z,
        z_tilde,
        grid: grid.clone(),
        dataset_id: dataset_id.to_string(),
        group_names: d.partition.names(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{GroupPartition, OutcomeFamily};
    use crate::knockoff::Construction;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Centered orthonormal n×p columns.
    fn centered_orthonormal(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_element(n, p + 1, 1.0);
        for j in 1..=p {
            for i in 0..n {
                m[(i, j)] = StandardNormal.sample(&mut rng);
            }
        }
        let q = m.qr().q();
        q.columns(1, p).into_owned()
    }

    fn single_problem(x: &DMatrix<f64>, y: &DVector<f64>) -> GroupLasso {
        let units = (0..x.ncols()).map(|j| PenalizedUnit { sides: vec![vec![j]] }).collect();
        GroupLasso::new(x, y, OutcomeFamily::Gaussian, units, vec![], SolverOptions::default()).unwrap()
    }

    #[test]
    fn orthonormal_entry_is_twice_the_correlation() {
        let x = centered_orthonormal(60, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = DVector::from_fn(60, |_, _| StandardNormal.sample(&mut rng));
        let corr: Vec<f64> = (0..5).map(|j| 2.0 * x.column(j).dot(&y).abs()).collect();
        let problem = single_problem(&x, &y);
        assert!((problem.lambda_max().unwrap() - corr.iter().cloned().fold(0.0, f64::max)).abs() < 1e-10);

        // Grid points just below and above each closed-form entry value.
        let mut values: Vec<f64> = corr
            .iter()
            .flat_map(|&c| [c * (1.0 + 1e-6), c * (1.0 - 1e-6)])
            .chain((1..=12).map(|t| 1e-4 * t as f64))
            .collect();
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let grid = LambdaGrid::new(values).unwrap();
        let entry = problem.entry_values(grid.values()).unwrap();
        for j in 0..5 {
            assert!((entry[j][0] - corr[j] * (1.0 - 1e-6)).abs() < 1e-12 * corr[j].max(1.0));
        }
    }

    fn toy(n: usize, p: usize, seed: u64) -> (DatasetView, KnockoffOutput) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let xt = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] + { let e: f64 = StandardNormal.sample(&mut rng); e });
        let d = DatasetView::continuous(x, y, OutcomeFamily::Gaussian, GroupPartition::contiguous(p / 2, 2)).unwrap();
        let ko = KnockoffOutput {
            x_tilde: xt,
            b: None,
            construction: Construction::SecondOrder,
            seed,
        };
        (d, ko)
    }

    #[test]
    fn default_grid_shape_and_homogeneity() {
        let (d, ko) = toy(50, 6, 3);
        let grid = default_grid(&d, &ko, 20).unwrap();
        assert_eq!(grid.len(), 20);
        assert!(grid.values().windows(2).all(|w| w[1] < w[0]));
        let scaled = d.with_outcome(&d.y * 10.0).unwrap();
        let grid10 = default_grid(&scaled, &ko, 20).unwrap();
        for (a, b) in grid.values().iter().zip(grid10.values()) {
            assert!((b / a - 10.0).abs() < 1e-9);
        }
        assert!(default_grid(&d, &ko, 19).is_err());
    }

    #[test]
    fn zero_design_is_degenerate() {
        let (d, mut ko) = toy(30, 4, 4);
        let zero = d.with_outcome(d.y.clone()).unwrap();
        let mut zero = zero;
        zero.x.fill(0.0);
        ko.x_tilde.fill(0.0);
        assert!(matches!(default_grid(&zero, &ko, 20), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn entries_lie_on_grid_and_no_group_active_at_top() {
        let (d, ko) = toy(80, 8, 5);
        let grid = default_grid(&d, &ko, 30).unwrap();
        let stats = group_lasso_path(&d, &ko, &grid, "s").unwrap();
        for v in stats.z.iter().chain(&stats.z_tilde) {
            assert!(*v == 0.0 || grid.values().contains(v));
            assert!(*v < grid.values()[0]);
        }
        // The signal group enters first.
        assert!(stats.z[0] >= stats.z.iter().chain(&stats.z_tilde).cloned().fold(0.0, f64::max));
        let again = group_lasso_path(&d, &ko, &grid, "s").unwrap();
        assert_eq!(stats, again);
    }

    #[test]
    fn grid_validation() {
        assert!(LambdaGrid::new(vec![1.0; 25]).is_err());
        assert!(LambdaGrid::new((0..25).map(|t| 24.0 - t as f64).collect()).is_err());
        assert!(LambdaGrid::new((0..25).map(|t| 26.0 - t as f64).collect()).is_ok());
    }
}
