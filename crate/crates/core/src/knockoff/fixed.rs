use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BlockDiagonalB, Construction, GramMatrix, KnockoffOutput};
use crate::data::GroupPartition;
use crate::error::{Error, Result};
use crate::linalg;

pub(crate) fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Column-major fill keeps the draw order fixed for a given shape.
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal n×k basis orthogonal to the columns of `span`.
fn orthogonal_complement_basis(span: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = span.nrows();
    let q = span.clone().qr().q();
    let project_out = |m: &DMatrix<f64>| m - &q * (q.transpose() * m);
    let raw = project_out(&gaussian_matrix(rng, n, k));
    let u = raw.qr().q();
    // Second pass removes round-off leakage back into span(X).
    let u = project_out(&u);
    u.qr().q()
}

/// Fixed-design group knockoff X̃ = X(I - Σ⁻¹B) + ŨC with CᵀC = 2B - BΣ⁻¹B.
///
/// Ũ is orthogonal to the columns of X and, when n > 2p, also to the
/// intercept column so that centered designs get centered knockoffs.
pub fn fixed_knockoff(
    x: &DMatrix<f64>,
    partition: &GroupPartition,
    b: &BlockDiagonalB,
    seed: u64,
) -> Result<KnockoffOutput> {
    let (n, p) = x.shape();
    if partition.p() != p {
        return Err(Error::Dimension(format!(
            "partition covers {} columns but X has {p}",
            partition.p()
        )));
    }
    if n < 2 * p {
        return Err(Error::Dimension(format!(
            "fixed-design knockoffs need n >= 2p (n = {n}, p = {p})"
        )));
    }
    let gram = GramMatrix::fixed_design(x)?;
    let sigma_inv = gram.inverse()?;
    let b_full = b.assemble();
    let sinv_b = &sigma_inv * &b_full;
    let mut c_gram = &b_full * 2.0 - &b_full * &sinv_b;
    linalg::symmetrize(&mut c_gram);
    let c = linalg::psd_factor(&c_gram, gram.eig_tolerance()).ok_or_else(|| {
        Error::Feasibility(format!(
            "2B - BΣ⁻¹B is indefinite (min eigenvalue {:e})",
            linalg::min_eigenvalue(&c_gram)
        ))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = if n > 2 * p {
        let mut with_intercept = DMatrix::from_element(n, p + 1, 1.0);
        with_intercept.columns_mut(1, p).copy_from(x);
        with_intercept
    } else {
        x.clone()
    };
    let u = orthogonal_complement_basis(&span, p, &mut rng);
    let mut x_tilde = x - x * &sinv_b + u * c;
    for j in partition.ungrouped_columns() {
        x_tilde.set_column(j, &x.column(j));
    }
    Ok(KnockoffOutput {
        x_tilde,
        b: Some(b.clone()),
        construction: Construction::Fixed,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knockoff::{equivariant_b, fixed_gram_residuals};

    fn random_x(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(seed), n, p)
    }

    #[test]
    fn orthonormal_design_with_identity_b_gives_orthogonal_knockoffs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian_matrix(&mut rng, 40, 5).qr().q();
        let part = GroupPartition::singletons(5);
        let b = BlockDiagonalB::uniform(&DMatrix::identity(5, 5), &part, 1.0);
        let ko = fixed_knockoff(&x, &part, &b, 1).unwrap();
        let cross = ko.x_tilde.transpose() * &x;
        assert!(linalg::max_abs(&cross) < 1e-10);
    }

    #[test]
    fn zero_b_is_identity_map() {
        let x = random_x(30, 4, 1);
        let part = GroupPartition::contiguous(2, 2);
        let b = BlockDiagonalB::uniform(&(x.transpose() * &x), &part, 0.0);
        let ko = fixed_knockoff(&x, &part, &b, 9).unwrap();
        assert!(linalg::max_abs(&(&ko.x_tilde - &x)) < 1e-12);
    }

    #[test]
    fn gram_identities_on_random_design() {
        let x = random_x(50, 10, 7);
        let part = GroupPartition::contiguous(5, 2);
        let b = equivariant_b(&GramMatrix::fixed_design(&x).unwrap(), &part).unwrap();
        let ko = fixed_knockoff(&x, &part, &b, 11).unwrap();
        let (diag, off) = fixed_gram_residuals(&x, &ko.x_tilde, &part);
        assert!(diag <= 1e-6 && off <= 1e-6, "{diag:e} {off:e}");
        // X̃ᵀX = Σ - B including the diagonal blocks.
        let expect = x.transpose() * &x - b.assemble();
        assert!(linalg::max_abs(&(ko.x_tilde.transpose() * &x - expect)) < 1e-6);
    }

    #[test]
    fn too_few_rows_is_dimension_error() {
        let x = random_x(15, 8, 2);
        let part = GroupPartition::singletons(8);
        let b = BlockDiagonalB::uniform(&(x.transpose() * &x), &part, 0.1);
        assert!(matches!(fixed_knockoff(&x, &part, &b, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn infeasible_b_is_rejected() {
        let x = random_x(40, 4, 5);
        let part = GroupPartition::singletons(4);
        let b = BlockDiagonalB::uniform(&(x.transpose() * &x), &part, 3.0);
        assert!(matches!(fixed_knockoff(&x, &part, &b, 0), Err(Error::Feasibility(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let x = random_x(30, 5, 4);
        let part = GroupPartition::singletons(5);
        let b = equivariant_b(&GramMatrix::fixed_design(&x).unwrap(), &part).unwrap();
        let a = fixed_knockoff(&x, &part, &b, 21).unwrap();
        let c = fixed_knockoff(&x, &part, &b, 21).unwrap();
        assert_eq!(a.x_tilde, c.x_tilde);
    }
}
