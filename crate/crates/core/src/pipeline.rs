//! Per-site steps shared by the CLI and the simulation harness: standardize,
//! build knockoffs, fit the path, return (Z, Z̃).

use serde::{Deserialize, Serialize};

use crate::data::{standardize, DatasetView};
use crate::error::{Error, Result};
use crate::knockoff::{
    equivariant_b, fixed_knockoff, sdp_b, second_order_b, second_order_knockoff, sequential_knockoff, GramMatrix,
    KnockoffOutput, SdpOptions, SequentialOptions,
};
use crate::path::{default_grid, group_lasso_path, PathStatistics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnockoffMethod {
    FixedEqui,
    FixedSdp,
    SecondOrder,
    Sequential,
}

impl KnockoffMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            KnockoffMethod::FixedEqui => "fixed-equi",
            KnockoffMethod::FixedSdp => "fixed-sdp",
            KnockoffMethod::SecondOrder => "second-order",
            KnockoffMethod::Sequential => "sequential",
        }
    }
}

impl std::str::FromStr for KnockoffMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-equi" => Ok(KnockoffMethod::FixedEqui),
            "fixed-sdp" => Ok(KnockoffMethod::FixedSdp),
            "second-order" => Ok(KnockoffMethod::SecondOrder),
            "sequential" => Ok(KnockoffMethod::Sequential),
            other => Err(Error::Format(format!("unknown knockoff method '{other}'"))),
        }
    }
}

/// Knockoffs for an already standardized dataset.
pub fn build_knockoffs(d: &DatasetView, method: KnockoffMethod, seed: u64) -> Result<KnockoffOutput> {
    match method {
        KnockoffMethod::FixedEqui | KnockoffMethod::FixedSdp => {
            if d.n() < 2 * d.p() {
                return Err(Error::Dimension(format!(
                    "fixed-design knockoffs need n >= 2p (n = {}, p = {})",
                    d.n(),
                    d.p()
                )));
            }
            let gram = GramMatrix::fixed_design(&d.x)?;
            let b = if method == KnockoffMethod::FixedSdp {
                sdp_b(&gram, &d.partition, SdpOptions::default())?
            } else {
                equivariant_b(&gram, &d.partition)?
            };
            fixed_knockoff(&d.x, &d.partition, &b, seed)
        }
        KnockoffMethod::SecondOrder => {
            let b = second_order_b(&d.x, &d.partition, false)?;
            second_order_knockoff(&d.x, &d.partition, &b, seed)
        }
        KnockoffMethod::Sequential => sequential_knockoff(d, seed, SequentialOptions::default()),
    }
}

/// Path statistics of one site. When the solver stalls part-way down the grid
/// and `allow_partial` is set, the entries found so far are kept and groups
/// that had not entered get 0.
pub fn site_statistics(
    d: &DatasetView,
    method: KnockoffMethod,
    seed: u64,
    grid_len: usize,
    site_id: &str,
    allow_partial: bool,
) -> Result<(PathStatistics, KnockoffOutput)> {
    let (std, _) = standardize(d)?;
    let ko = build_knockoffs(&std, method, seed)?;
    let grid = default_grid(&std, &ko, grid_len)?;
    match group_lasso_path(&std, &ko, &grid, site_id) {
        Ok(stats) => Ok((stats, ko)),
        Err(Error::PathConvergence {
            lambda,
            partial_z,
            partial_ztilde,
        }) if allow_partial => {
            log::warn!("site '{site_id}': path stopped at lambda = {lambda:e}, keeping partial entries");
            Ok((
                PathStatistics {
                    z: partial_z,
                    z_tilde: partial_ztilde,
                    grid,
                    dataset_id: site_id.to_string(),
                    group_names: std.partition.names(),
                },
                ko,
            ))
        }
        Err(e) => Err(e),
    }
}
