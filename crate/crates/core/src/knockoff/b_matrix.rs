use nalgebra::{DMatrix, DVector};

use super::{BMethod, BlockDiagonalB, GramMatrix};
use crate::data::GroupPartition;
use crate::error::{Error, Result};
use crate::linalg;

fn check_blocks(sigma: &DMatrix<f64>, partition: &GroupPartition) -> Result<Vec<DMatrix<f64>>> {
    partition
        .groups()
        .iter()
        .map(|g| {
            let block = linalg::submatrix(sigma, &g.columns, &g.columns);
            let min_eig = linalg::min_eigenvalue(&block);
            if min_eig <= 1e-10 {
                Err(Error::BlockSingular {
                    group: g.name.clone(),
                    min_eigenvalue: min_eig,
                })
            } else {
                Ok(block)
            }
        })
        .collect()
}

/// Covariance of the grouped columns given the ungrouped ones. B is zero on
/// ungrouped columns, so B ⪯ 2Σ reduces to B_GG ⪯ 2Σ_{G|U}.
fn grouped_schur(gram: &GramMatrix, partition: &GroupPartition) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let sigma = gram.sigma();
    let grouped = partition.grouped_columns();
    let ungrouped = partition.ungrouped_columns();
    let s_gg = linalg::submatrix(sigma, &grouped, &grouped);
    if ungrouped.is_empty() {
        return Ok((grouped, s_gg));
    }
    let s_uu = linalg::submatrix(sigma, &ungrouped, &ungrouped);
    let s_gu = linalg::submatrix(sigma, &grouped, &ungrouped);
    let inv = linalg::spd_inverse(&s_uu)
        .ok_or_else(|| Error::DegenerateDesign("adjustment columns are collinear".into()))?;
    let mut schur = s_gg - &s_gu * inv * s_gu.transpose();
    linalg::symmetrize(&mut schur);
    Ok((grouped, schur))
}

/// b = min{1, 2 λ_min(DΣD)} with D = blockdiag(Σ_{G_m,G_m}^{-1/2}).
pub fn equivariant_b(gram: &GramMatrix, partition: &GroupPartition) -> Result<BlockDiagonalB> {
    if partition.p() != gram.p() {
        return Err(Error::Dimension(format!(
            "partition covers {} columns but Σ is {}x{}",
            partition.p(),
            gram.p(),
            gram.p()
        )));
    }
    let blocks = check_blocks(gram.sigma(), partition)?;
    let (grouped, schur) = grouped_schur(gram, partition)?;
    let position: std::collections::HashMap<usize, usize> =
        grouped.iter().enumerate().map(|(k, &j)| (j, k)).collect();
    let mut d = DMatrix::zeros(grouped.len(), grouped.len());
    for (g, block) in partition.groups().iter().zip(&blocks) {
        let inv_sqrt = linalg::sym_apply(block, |v| 1.0 / v.sqrt());
        for (a, ja) in g.columns.iter().enumerate() {
            for (c, jc) in g.columns.iter().enumerate() {
                d[(position[ja], position[jc])] = inv_sqrt[(a, c)];
            }
        }
    }
    let dsd = &d * schur * &d;
    let b = (2.0 * linalg::min_eigenvalue(&dsd)).min(1.0);
    if b <= 0.0 {
        return Err(Error::Feasibility(format!(
            "equivariant b = {b:e} is not positive; grouped columns are collinear"
        )));
    }
    Ok(BlockDiagonalB::uniform(gram.sigma(), partition, b))
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    /// Newton steps allowed per centering step.
    pub max_sweeps: usize,
    /// Target duality gap on Σ(1 - b_m).
    pub tolerance: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tolerance: 1e-8,
        }
    }
}

struct Barrier<'a> {
    sigma: &'a DMatrix<f64>,
    partition: &'a GroupPartition,
    blocks: Vec<DMatrix<f64>>,
}

impl Barrier<'_> {
    fn slack(&self, b: &[f64]) -> DMatrix<f64> {
        let mut s = self.sigma * 2.0;
        for ((g, block), &bm) in self.partition.groups().iter().zip(&self.blocks).zip(b) {
            for (a, &i) in g.columns.iter().enumerate() {
                for (c, &j) in g.columns.iter().enumerate() {
                    s[(i, j)] -= bm * block[(a, c)];
                }
            }
        }
        s
    }

    /// -t Σ b - log det(2Σ - B) - Σ log b - Σ log(1 - b), or None outside the domain.
    fn value(&self, b: &[f64], t: f64) -> Option<f64> {
        if b.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            return None;
        }
        let chol = self.slack(b).cholesky()?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        if !log_det.is_finite() {
            return None;
        }
        Some(b.iter().map(|&v| -t * v - v.ln() - (1.0 - v).ln()).sum::<f64>() - log_det)
    }

    fn newton_step(&self, b: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
        let m_count = b.len();
        let s_inv = linalg::spd_inverse(&self.slack(b))?;
        let groups = self.partition.groups();
        let mut grad = DVector::zeros(m_count);
        let mut hess = DMatrix::zeros(m_count, m_count);
        for m in 0..m_count {
            let cm = &groups[m].columns;
            let p_mm = linalg::submatrix(&s_inv, cm, cm);
            grad[m] = -t + (p_mm.component_mul(&self.blocks[m])).sum() - 1.0 / b[m] + 1.0 / (1.0 - b[m]);
            hess[(m, m)] += 1.0 / (b[m] * b[m]) + 1.0 / ((1.0 - b[m]) * (1.0 - b[m]));
            for n in m..m_count {
                let p_mn = linalg::submatrix(&s_inv, cm, &groups[n].columns);
                let left = &p_mn * &self.blocks[n];
                let right = &self.blocks[m] * &p_mn;
                let h = left.component_mul(&right).sum();
                hess[(m, n)] += h;
                if n != m {
                    hess[(n, m)] += h;
                }
            }
        }
        let step = -hess.cholesky()?.solve(&grad);
        let decrement = -grad.dot(&step);
        Some((step, decrement))
    }
}

/// Per-group b_m maximizing Σ b_m subject to B ⪯ 2Σ and 0 ≤ b_m ≤ 1.
///
/// Log-barrier interior point started at half the equivariant solution. The
/// result is strictly feasible and within `tolerance` of the optimum.
pub fn sdp_b(gram: &GramMatrix, partition: &GroupPartition, options: SdpOptions) -> Result<BlockDiagonalB> {
    let start = equivariant_b(gram, partition)?;
    let sigma = gram.sigma();
    let finish = |b: &[f64]| BlockDiagonalB::from_scalars(sigma, partition, b, BMethod::Sdp { b: b.to_vec() });
    let b_equi = start.scalars();
    if b_equi.iter().all(|&v| v >= 1.0) {
        return Ok(finish(&b_equi));
    }
    let barrier = Barrier {
        sigma,
        partition,
        blocks: check_blocks(sigma, partition)?,
    };
    let mut b: Vec<f64> = b_equi.iter().map(|v| 0.5 * v).collect();
    let weight = (gram.p() + 2 * b.len()) as f64;
    let mut t = 1.0;
    loop {
        let mut steps = 0;
        loop {
            if steps == options.max_sweeps {
                return Err(Error::SdpConvergence {
                    sweeps: steps,
                    last_feasible: b,
                });
            }
            steps += 1;
            let Some((step, decrement)) = barrier.newton_step(&b, t) else {
                break;
            };
            if decrement / 2.0 < 1e-7 {
                break;
            }
            let f0 = barrier.value(&b, t).expect("iterate stays interior");
            let mut size = 1.0;
            let accepted = loop {
                let trial: Vec<f64> = b.iter().zip(step.iter()).map(|(v, d)| v + size * d).collect();
                if let Some(f) = barrier.value(&trial, t) {
                    if f <= f0 - 0.25 * size * decrement {
                        break Some((trial, f0 - f));
                    }
                }
                size *= 0.5;
                if size < 1e-14 {
                    break None;
                }
            };
            match accepted {
                Some((next, gain)) if gain > 1e-13 * f0.abs() => b = next,
                Some((next, _)) => {
                    b = next;
                    break;
                }
                None => break,
            }
        }
        if weight / t < options.tolerance {
            break;
        }
        t *= 10.0;
    }
    if b.iter().sum::<f64>() < b_equi.iter().sum::<f64>() {
        return Ok(finish(&b_equi));
    }
    Ok(finish(&b))
}
