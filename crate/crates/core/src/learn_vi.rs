//! Data-driven value iteration on a batch of data matrices.

use nalgebra::{DMatrix, DVector};

use crate::datamat::{hstack, DataMatrices};
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::{apply_r_inverse, value_iteration};
use crate::scalar::Real;

pub use crate::model::{BoundSchedule, StepSchedule, ViHistory, ViOptions, ViRecord, ViSolution};

const RANK_HINT: &str = "; enrich the exploration signal or add intervals";

/// Solves `[IXhat, 2·IXV] [vecs(M); vec(N)] = I·vecs(P)`; on exact data
/// `M = −ρP + AᵀP + PA` and `N = BᵀP`.
pub fn vi_step_solve<T: Real>(dm: &DataMatrices<T>, p: &SymMatrix<T>) -> Result<(SymMatrix<T>, DMatrix<T>)> {
    let (n, m) = (dm.n, dm.m);
    if p.dim() != n {
        return Err(Error::Dimension(format!("P is {}x{}, data has n = {n}", p.dim(), p.dim())));
    }
    let lhs = hstack(&dm.ixhat, &(&dm.ixv * T::lit(2.0)));
    let rhs: DVector<T> = &dm.i * linalg::vecs(p);
    let sol = linalg::solve_lstsq(&lhs, &rhs).map_err(|err| match err {
        Error::RankDeficient { rank, required, .. } => Error::RankDeficient { rank, required, hint: RANK_HINT },
        other => other,
    })?;
    let half = n * (n + 1) / 2;
    let mm = linalg::unvecs(&sol.as_slice()[..half], n)?;
    let nn = linalg::unvec(&sol.as_slice()[half..], m, n)?;
    Ok((mm, nn))
}

/// Data-driven value iteration from `P0 ≻ 0`; no stabilizing gain is
/// needed. The aggregate gain is reported as zero, which presumes
/// `A − 0.5ρI` Hurwitz for the data-generating system.
pub fn run_data_vi<T: Real>(
    dm: &DataMatrices<T>,
    p0: &SymMatrix<T>,
    q: &SymMatrix<T>,
    r: &SymMatrix<T>,
    opts: ViOptions<T>,
) -> Result<ViSolution<T>> {
    dm.validate()?;
    if p0.dim() != dm.n || q.dim() != dm.n || r.dim() != dm.m {
        return Err(Error::Dimension(format!("P0, Q or R do not fit data with n = {}, m = {}", dm.n, dm.m)));
    }
    if !linalg::is_positive_definite(p0)? {
        return Err(Error::Precondition("P0 must be positive definite".into()));
    }
    value_iteration(p0, q, r, opts, |p| {
        let (m, n) = vi_step_solve(dm, p)?;
        Ok((m, apply_r_inverse(r, &n)?))
    })
}
