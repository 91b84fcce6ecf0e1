use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fixed::gaussian_matrix;
use super::{equivariant_b, sdp_b, BlockDiagonalB, Construction, GramMatrix, GramSource, KnockoffOutput, SdpOptions};
use crate::data::GroupPartition;
use crate::error::{Error, Result};
use crate::linalg;

/// B computed from the sample covariance of X.
pub fn second_order_b(x: &DMatrix<f64>, partition: &GroupPartition, use_sdp: bool) -> Result<BlockDiagonalB> {
    let gram = GramMatrix::estimated(x)?;
    if use_sdp {
        sdp_b(&gram, partition, SdpOptions::default())
    } else {
        equivariant_b(&gram, partition)
    }
}

/// Second-order Gaussian group knockoffs: each row of X̃ is drawn from
/// N(x - (x - μ)Σ⁻¹B, 2B - BΣ⁻¹B) with μ and Σ estimated from X.
pub fn second_order_knockoff(
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
    if n < 2 {
        return Err(Error::Dimension("need at least two rows to estimate Σ".into()));
    }
    draw(x, partition, b, &GramMatrix::estimated(x)?, seed)
}

/// As [`second_order_knockoff`] but with a known covariance Σ in place of the estimate.
pub fn second_order_knockoff_known(
    x: &DMatrix<f64>,
    partition: &GroupPartition,
    b: &BlockDiagonalB,
    sigma: &DMatrix<f64>,
    seed: u64,
) -> Result<KnockoffOutput> {
    let p = x.ncols();
    if partition.p() != p || sigma.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "X has {p} columns, partition covers {}, Σ is {}×{}",
            partition.p(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    draw(x, partition, b, &GramMatrix::new(sigma.clone(), GramSource::EstimatedCovariance)?, seed)
}

fn draw(x: &DMatrix<f64>, partition: &GroupPartition, b: &BlockDiagonalB, gram: &GramMatrix, seed: u64) -> Result<KnockoffOutput> {
    let (n, p) = x.shape();
    let sigma_inv = gram.inverse()?;
    let b_full = b.assemble();
    let sinv_b = &sigma_inv * &b_full;
    let mut cond_cov = &b_full * 2.0 - &b_full * &sinv_b;
    linalg::symmetrize(&mut cond_cov);
    let min_eig = linalg::min_eigenvalue(&cond_cov);
    let c = linalg::psd_factor(&cond_cov, gram.eig_tolerance()).ok_or_else(|| {
        Error::Feasibility(format!(
            "conditional covariance 2B - BΣ⁻¹B has eigenvalue {min_eig:e}; reduce b"
        ))
    })?;

    let means = linalg::column_means(x);
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = gaussian_matrix(&mut rng, n, p);
    let mut x_tilde = x - centered * &sinv_b + noise * c;
    for j in partition.ungrouped_columns() {
        x_tilde.set_column(j, &x.column(j));
    }
    Ok(KnockoffOutput {
        x_tilde,
        b: Some(b.clone()),
        construction: Construction::SecondOrder,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_b_returns_x() {
        let x = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(1), 50, 4);
        let part = GroupPartition::contiguous(2, 2);
        let b = BlockDiagonalB::uniform(&DMatrix::identity(4, 4), &part, 0.0);
        let ko = second_order_knockoff(&x, &part, &b, 3).unwrap();
        assert!(linalg::max_abs(&(&ko.x_tilde - &x)) < 1e-12);
    }

    #[test]
    fn whitened_identity_b_gives_independent_draws() {
        // Whiten X so that its sample covariance is exactly I.
        let raw = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(2), 400, 3);
        let cov = linalg::sample_covariance(&raw);
        let w = linalg::sym_apply(&cov, |v| 1.0 / v.sqrt());
        let means = linalg::column_means(&raw);
        let mut x = raw.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        let x = x * w;
        let part = GroupPartition::singletons(3);
        let b = BlockDiagonalB::uniform(&DMatrix::identity(3, 3), &part, 1.0);
        let ko = second_order_knockoff(&x, &part, &b, 5).unwrap();
        // μ̃ = 0, so X̃ equals the raw N(0, I) draws with the same seed.
        let noise = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(5), 400, 3);
        assert!(linalg::max_abs(&(ko.x_tilde - noise)) < 1e-6);
    }

    #[test]
    fn infeasible_b_is_rejected() {
        let x = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(4), 200, 3);
        let part = GroupPartition::singletons(3);
        let sigma = linalg::sample_covariance(&x);
        let b = BlockDiagonalB::uniform(&sigma, &part, 2.5);
        assert!(matches!(
            second_order_knockoff(&x, &part, &b, 0),
            Err(Error::Feasibility(_))
        ));
    }

    #[test]
    fn known_sigma_equal_to_estimate_matches_plug_in() {
        let x = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(6), 120, 4);
        let part = GroupPartition::contiguous(2, 2);
        let b = second_order_b(&x, &part, false).unwrap();
        let plug_in = second_order_knockoff(&x, &part, &b, 9).unwrap();
        let known = second_order_knockoff_known(&x, &part, &b, &linalg::sample_covariance(&x), 9).unwrap();
        assert_eq!(plug_in.x_tilde, known.x_tilde);
        assert!(matches!(
            second_order_knockoff_known(&x, &part, &b, &DMatrix::identity(3, 3), 9),
            Err(Error::Dimension(_))
        ));
    }
}
