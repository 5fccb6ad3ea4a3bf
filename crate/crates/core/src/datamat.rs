//! Data matrices built from a mean trajectory by discounted quadrature, and
//! the rank conditions that make the data-driven solves well posed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::simulate::{MeanTrajectory, TimeGrid};

/// Default interval layout: `s_0 = 0`, `s_{j+1} = s_j + 0.1`, `d = 20`.
pub const DEFAULT_START: f64 = 0.0;
pub const DEFAULT_SPACING: f64 = 0.1;
pub const DEFAULT_INTERVALS: usize = 20;

/// Strictly increasing interval endpoints `s_0 < s_1 < … < s_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet<T> {
    s: Vec<T>,
}

impl<T: Real> IntervalSet<T> {
    pub fn new(s: Vec<T>) -> Result<Self> {
        if s.len() < 2 {
            return Err(Error::Precondition("need at least one interval (two endpoints)".into()));
        }
        if s.iter().any(|v| !v.is_finite()) || s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition("interval endpoints must be finite and strictly increasing".into()));
        }
        Ok(Self { s })
    }

    /// `s_j = start + j·spacing`, `j = 0..=d`.
    pub fn uniform(start: T, spacing: T, d: usize) -> Result<Self> {
        Self::new((0..=d).map(|j| start + spacing * T::lit(j as f64)).collect())
    }

    /// Number of intervals `d`.
    pub fn d(&self) -> usize {
        self.s.len() - 1
    }

    pub fn endpoints(&self) -> &[T] {
        &self.s
    }

    /// Grid indices of the endpoints, snapped to the nearest grid point.
    pub fn snap(&self, grid: &TimeGrid<T>) -> Result<Vec<usize>> {
        let idx = self.s.iter().map(|&t| grid.nearest_index(t)).collect::<Result<Vec<_>>>()?;
        if idx.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition(format!("intervals are finer than the trajectory step {}", grid.dt())));
        }
        Ok(idx)
    }
}

impl<T: Real> Default for IntervalSet<T> {
    fn default() -> Self {
        Self::uniform(T::lit(DEFAULT_START), T::lit(DEFAULT_SPACING), DEFAULT_INTERVALS)
            .expect("default intervals are increasing")
    }
}

/// Row `j` of each matrix belongs to `[s_j, s_{j+1}]`.
#[derive(Debug, Clone)]
pub struct DataMatrices<T: Real> {
    /// `e^{−ρs_{j+1}} bar(X(s_{j+1})) − e^{−ρs_j} bar(X(s_j))`, `d × n(n+1)/2`.
    pub i: DMatrix<T>,
    /// `∫ e^{−ρt} X ⊗ X dt`, `d × n²`.
    pub ix: DMatrix<T>,
    /// `∫ e^{−ρt} X ⊗ V dt`, `d × nm`.
    pub ixv: DMatrix<T>,
    /// `∫ e^{−ρt} bar(X) dt`, `d × n(n+1)/2`.
    pub ixhat: DMatrix<T>,
    pub n: usize,
    pub m: usize,
    pub rho: T,
    pub intervals: IntervalSet<T>,
}

impl<T: Real> DataMatrices<T> {
    /// Checks shapes and finiteness, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let d = self.intervals.d();
        let half = self.n * (self.n + 1) / 2;
        let expect = [
            ("I", &self.i, half),
            ("IX", &self.ix, self.n * self.n),
            ("IXV", &self.ixv, self.n * self.m),
            ("IXhat", &self.ixhat, half),
        ];
        for (name, mat, cols) in expect {
            if mat.shape() != (d, cols) {
                return Err(Error::Dimension(format!("{name} is {}x{}, expected {d}x{cols}", mat.nrows(), mat.ncols())));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("{name} contains non-finite entries")));
            }
        }
        if !(self.rho >= T::zero() && self.rho.is_finite()) {
            return Err(Error::Precondition(format!("rho must be finite and nonnegative, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.intervals.d()
    }
}

/// Assembles the data matrices with composite trapezoid quadrature on the
/// trajectory grid between snapped interval endpoints.
pub fn build_data_matrices<T: Real>(
    traj: &MeanTrajectory<T>,
    intervals: &IntervalSet<T>,
    rho: T,
) -> Result<DataMatrices<T>> {
    if !(rho >= T::zero() && rho.is_finite()) {
        return Err(Error::Precondition(format!("rho must be finite and nonnegative, got {rho}")));
    }
    let grid = traj.grid;
    let idx = intervals.snap(&grid)?;
    let (n, m, d) = (traj.n(), traj.m(), intervals.d());
    let half = n * (n + 1) / 2;
    let weight = |k: usize| (-rho * grid.point(k)).exp();
    let lifted = |k: usize| linalg::bar(traj.x.column(k).as_slice());

    let mut i = DMatrix::zeros(d, half);
    let mut ix = DMatrix::zeros(d, n * n);
    let mut ixv = DMatrix::zeros(d, n * m);
    let mut ixhat = DMatrix::zeros(d, half);
    let mut xx = DVector::zeros(n * n);
    let mut xv = DVector::zeros(n * m);
    for row in 0..d {
        let (a, b) = (idx[row], idx[row + 1]);
        let phi = lifted(b) * weight(b) - lifted(a) * weight(a);
        i.row_mut(row).copy_from(&phi.transpose());
        for k in a..=b {
            let w = if k == a || k == b { weight(k) * T::lit(0.5) } else { weight(k) } * grid.dt();
            let x = traj.x.column(k);
            let v = traj.v.column(k);
            for (c, xc) in x.iter().enumerate() {
                for (r, xr) in x.iter().enumerate() {
                    xx[c * n + r] = *xc * *xr;
                }
                for (r, vr) in v.iter().enumerate() {
                    xv[c * m + r] = *xc * *vr;
                }
            }
            for (col, val) in xx.iter().enumerate() {
                ix[(row, col)] += *val * w;
            }
            for (col, val) in xv.iter().enumerate() {
                ixv[(row, col)] += *val * w;
            }
            for (col, val) in lifted(k).iter().enumerate() {
                ixhat[(row, col)] += *val * w;
            }
        }
    }
    Ok(DataMatrices { i, ix, ixv, ixhat, n, m, rho, intervals: intervals.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReport {
    pub rank: usize,
    pub required: usize,
    pub satisfied: bool,
}

impl std::fmt::Display for RankReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.satisfied { "satisfied" } else { "NOT satisfied" };
        write!(f, "rank {}/{} ({verdict})", self.rank, self.required)
    }
}

/// Number of unknowns `mn + n(n+1)/2` in either data-driven solve.
pub fn required_rank(n: usize, m: usize) -> usize {
    m * n + n * (n + 1) / 2
}

/// Rank of `[IX, IXV]`, the policy-iteration condition.
pub fn check_rank_pi<T: Real>(dm: &DataMatrices<T>) -> Result<RankReport> {
    rank_report(&dm.ix, &dm.ixv, required_rank(dm.n, dm.m))
}

/// Rank of `[IXhat, IXV]`, the value-iteration condition.
pub fn check_rank_vi<T: Real>(dm: &DataMatrices<T>) -> Result<RankReport> {
    rank_report(&dm.ixhat, &dm.ixv, required_rank(dm.n, dm.m))
}

fn rank_report<T: Real>(left: &DMatrix<T>, right: &DMatrix<T>, required: usize) -> Result<RankReport> {
    let rank = linalg::numerical_rank(&hstack(left, right))?;
    Ok(RankReport { rank, required, satisfied: rank == required })
}

pub(crate) fn hstack<T: Real>(left: &DMatrix<T>, right: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}
