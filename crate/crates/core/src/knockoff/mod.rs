//! Group knockoff construction: choice of the block-diagonal matrix B and
//! the fixed-design, second-order Gaussian, and sequential samplers.

mod b_matrix;
mod fixed;
mod multinomial;
mod second_order;
mod sequential;

pub use b_matrix::{equivariant_b, sdp_b, SdpOptions};
pub use fixed::fixed_knockoff;
pub use multinomial::{MultinomialFit, MultinomialOptions};
pub use second_order::{second_order_b, second_order_knockoff, second_order_knockoff_known};
pub use sequential::{sequential_knockoff, SequentialOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::GroupPartition;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramSource {
    FixedDesign,
    EstimatedCovariance,
}

/// Symmetric PSD matrix Σ plus the ridge used when it has to be inverted.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    sigma: DMatrix<f64>,
    source: GramSource,
    ridge: f64,
}

/// Relative ridge strength: ridge = RIDGE_SCALE * trace(Σ) / p.
pub const RIDGE_SCALE: f64 = 1e-8;

impl GramMatrix {
    pub fn new(sigma: DMatrix<f64>, source: GramSource) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Dimension("Σ must be square".into()));
        }
        let p = sigma.nrows();
        let scale = linalg::max_abs(&sigma).max(1.0);
        for i in 0..p {
            for j in (i + 1)..p {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::Data(format!("Σ is not symmetric at ({i}, {j})")));
                }
            }
        }
        let mut sigma = sigma;
        linalg::symmetrize(&mut sigma);
        let min_eig = linalg::min_eigenvalue(&sigma);
        if min_eig < -1e-8 * scale {
            return Err(Error::Data(format!(
                "Σ is not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        let ridge = if p == 0 {
            0.0
        } else {
            RIDGE_SCALE * sigma.trace() / p as f64
        };
        Ok(Self {
            sigma,
            source,
            ridge,
        })
    }

    /// Σ = XᵀX.
    pub fn fixed_design(x: &DMatrix<f64>) -> Result<Self> {
        Self::new(x.transpose() * x, GramSource::FixedDesign)
    }

    /// Σ = sample covariance of the rows of X.
    pub fn estimated(x: &DMatrix<f64>) -> Result<Self> {
        Self::new(linalg::sample_covariance(x), GramSource::EstimatedCovariance)
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn source(&self) -> GramSource {
        self.source
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    /// Σ⁻¹. A fixed-design Gram is inverted exactly whenever it is
    /// numerically nonsingular, since the ridge would perturb the Gram
    /// identities; an estimated covariance always gets the ridge.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let p = self.p();
        if self.source == GramSource::FixedDesign {
            let floor = 1e-10 * self.sigma.trace() / p.max(1) as f64;
            if linalg::min_eigenvalue(&self.sigma) > floor {
                if let Some(inv) = linalg::spd_inverse(&self.sigma) {
                    return Ok(inv);
                }
            }
        }
        let mut reg = self.sigma.clone();
        for i in 0..p {
            reg[(i, i)] += self.ridge;
        }
        linalg::spd_inverse(&reg)
            .ok_or_else(|| Error::DegenerateDesign("Σ is singular even after ridge".into()))
    }

    /// Tolerance for eigenvalue feasibility checks on the scale of Σ.
    pub(crate) fn eig_tolerance(&self) -> f64 {
        1e-8 * (self.sigma.trace() / self.p().max(1) as f64).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BMethod {
    Equivariant { b: f64 },
    Sdp { b: Vec<f64> },
}

/// Group-block-diagonal B with B_m = b_m Σ_{G_m,G_m}.
#[derive(Debug, Clone)]
pub struct BlockDiagonalB {
    p: usize,
    group_columns: Vec<Vec<usize>>,
    blocks: Vec<DMatrix<f64>>,
    method: BMethod,
}

impl BlockDiagonalB {
    /// Scale each diagonal block of Σ by its own scalar.
    pub fn from_scalars(sigma: &DMatrix<f64>, partition: &GroupPartition, b: &[f64], method: BMethod) -> Self {
        assert_eq!(b.len(), partition.len());
        let group_columns: Vec<Vec<usize>> = partition.groups().iter().map(|g| g.columns.clone()).collect();
        let blocks = group_columns
            .iter()
            .zip(b)
            .map(|(cols, &bm)| linalg::submatrix(sigma, cols, cols) * bm)
            .collect();
        Self {
            p: partition.p(),
            group_columns,
            blocks,
            method,
        }
    }

    /// The same scalar on every group.
    pub fn uniform(sigma: &DMatrix<f64>, partition: &GroupPartition, b: f64) -> Self {
        Self::from_scalars(
            sigma,
            partition,
            &vec![b; partition.len()],
            BMethod::Equivariant { b },
        )
    }

    pub fn method(&self) -> &BMethod {
        &self.method
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Per-group scalars b_m.
    pub fn scalars(&self) -> Vec<f64> {
        match &self.method {
            BMethod::Equivariant { b } => vec![*b; self.blocks.len()],
            BMethod::Sdp { b } => b.clone(),
        }
    }

    /// Σ_m (1 - b_m).
    pub fn objective(&self) -> f64 {
        self.scalars().iter().map(|b| 1.0 - b).sum()
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.p, self.p);
        for (cols, block) in self.group_columns.iter().zip(&self.blocks) {
            for (a, &i) in cols.iter().enumerate() {
                for (c, &j) in cols.iter().enumerate() {
                    out[(i, j)] = block[(a, c)];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Fixed,
    SecondOrder,
    Sequential,
}

/// A knockoff matrix and the metadata that produced it. Knockoff copies of
/// ungrouped (adjustment) columns equal the originals.
#[derive(Debug, Clone)]
pub struct KnockoffOutput {
    pub x_tilde: DMatrix<f64>,
    pub b: Option<BlockDiagonalB>,
    pub construction: Construction,
    pub seed: u64,
}

impl KnockoffOutput {
    /// CSV with original columns `name` followed by knockoff columns `name.tilde`.
    pub fn write_csv<W: std::io::Write>(&self, x: &DMatrix<f64>, names: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = names
            .iter()
            .cloned()
            .chain(names.iter().map(|n| format!("{n}.tilde")))
            .collect();
        w.write_record(&header)?;
        for i in 0..x.nrows() {
            let row: Vec<String> = x
                .row(i)
                .iter()
                .chain(self.x_tilde.row(i).iter())
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest entry of XᵀX - X̃ᵀX̃ and of the off-group-block part of X̃ᵀX - XᵀX.
pub fn fixed_gram_residuals(x: &DMatrix<f64>, x_tilde: &DMatrix<f64>, partition: &GroupPartition) -> (f64, f64) {
    let sigma = x.transpose() * x;
    let tt = x_tilde.transpose() * x_tilde;
    let tx = x_tilde.transpose() * x;
    let diag = linalg::max_abs(&(tt - &sigma));
    let p = x.ncols();
    let mut off = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let same = match (partition.group_of(i), partition.group_of(j)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            if !same {
                off = off.max((tx[(i, j)] - sigma[(i, j)]).abs());
            }
        }
    }
    (diag, off)
}
