use nalgebra::DMatrix;

use crate::error::{Error, HistoryTable, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::{apply_r_inverse, validate_assumption2, SystemModel};
use crate::scalar::Real;

/// Step sizes `γ_k = scale / (k + 1)`.
#[derive(Debug, Clone, Copy)]
pub struct StepSchedule<T> {
    pub scale: T,
}

impl<T: Real> StepSchedule<T> {
    pub fn new(scale: T) -> Result<Self> {
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(Error::Precondition(format!("step scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn gamma(&self, k: usize) -> T {
        self.scale / T::lit((k + 1) as f64)
    }
}

impl<T: Real> Default for StepSchedule<T> {
    fn default() -> Self {
        Self { scale: T::lit(3.0) }
    }
}

/// Bounded sets `D_q = {P ⪰ 0 : |P| ≤ scale·(q + 1)}`.
#[derive(Debug, Clone, Copy)]
pub struct BoundSchedule<T> {
    pub scale: T,
}

impl<T: Real> BoundSchedule<T> {
    pub fn new(scale: T) -> Result<Self> {
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(Error::Precondition(format!("bound scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn radius(&self, q: usize) -> T {
        self.scale * T::lit((q + 1) as f64)
    }

    /// Membership of an already symmetrized matrix in `D_q`.
    pub fn contains(&self, p: &SymMatrix<T>, q: usize) -> bool {
        let norm = linalg::norm2(p);
        if !norm.is_finite() || norm > self.radius(q) {
            return false;
        }
        match linalg::min_eigenvalue(p) {
            Ok(low) => low >= -T::lit(linalg::DEFINITE_RTOL) * norm,
            Err(_) => false,
        }
    }
}

impl<T: Real> Default for BoundSchedule<T> {
    fn default() -> Self {
        Self { scale: T::lit(100.0) }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ViOptions<T> {
    pub eps: T,
    pub max_iter: usize,
    pub step: StepSchedule<T>,
    pub bounds: BoundSchedule<T>,
}

impl<T: Real> Default for ViOptions<T> {
    fn default() -> Self {
        Self { eps: T::lit(1e-3), max_iter: 10_000, step: StepSchedule::default(), bounds: BoundSchedule::default() }
    }
}

#[derive(Debug, Clone)]
pub struct ViRecord<T: Real> {
    pub k: usize,
    /// Reset counter in effect when `P^k` was updated.
    pub q: usize,
    pub gamma: T,
    /// `|P̃ − P^k| / γ_k`.
    pub ratio: T,
    /// The candidate left `D_q` and the iterate was reset to `P0`.
    pub reset: bool,
    pub p: SymMatrix<T>,
    pub gain: DMatrix<T>,
}

#[derive(Debug, Clone, Default)]
pub struct ViHistory<T: Real> {
    pub records: Vec<ViRecord<T>>,
}

impl<T: Real> ViHistory<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Columns `k, q, gamma_k, reset, ratio, vecs(P)..`.
    pub fn to_table(&self) -> HistoryTable {
        let dim = self.records.first().map_or(0, |r| r.p.dim());
        let mut header: Vec<String> = ["k", "q", "gamma_k", "reset", "ratio"].iter().map(|s| s.to_string()).collect();
        header.extend((0..dim * (dim + 1) / 2).map(|i| format!("vecsP_{i}")));
        let rows = self
            .records
            .iter()
            .map(|r| {
                let mut row =
                    vec![r.k as f64, r.q as f64, r.gamma.as_f64(), f64::from(u8::from(r.reset)), r.ratio.as_f64()];
                row.extend(linalg::vecs(&r.p).iter().map(|x| x.as_f64()));
                row
            })
            .collect();
        HistoryTable { header, rows }
    }
}

#[derive(Debug, Clone)]
pub struct ViSolution<T: Real> {
    pub p: SymMatrix<T>,
    pub gain: DMatrix<T>,
    /// Identically zero under the vanishing-aggregate assumption.
    pub gain_y: DMatrix<T>,
    /// Index of the stopping iterate.
    pub iterations: usize,
    pub resets: usize,
    pub history: ViHistory<T>,
}

/// Shared value-iteration loop. `direction` maps `P^k` to
/// `(M^k, K^k)` with `M^k = −ρP^k + AᵀP^k + P^kA` and `K^k = R⁻¹BᵀP^k`.
///
/// The update is `P̃ = P^k + γ_k(M^k − (K^k)ᵀRK^k + Q)`. The ratio test runs
/// on `P̃` before the membership test; a failed membership resets to `P0`.
pub(crate) fn value_iteration<T, F>(
    p0: &SymMatrix<T>,
    q_weight: &SymMatrix<T>,
    r: &SymMatrix<T>,
    opts: ViOptions<T>,
    mut direction: F,
) -> Result<ViSolution<T>>
where
    T: Real,
    F: FnMut(&SymMatrix<T>) -> Result<(SymMatrix<T>, DMatrix<T>)>,
{
    let mut p = p0.clone();
    let mut q = 0usize;
    let mut history = ViHistory { records: Vec::new() };
    for k in 0..opts.max_iter {
        let (m, gain) = direction(&p)?;
        let gamma = opts.step.gamma(k);
        let increment = m.as_matrix() - gain.transpose() * r.as_matrix() * &gain + q_weight.as_matrix();
        let candidate = SymMatrix::from_matrix(p.as_matrix() + &increment * gamma)?;
        let ratio = linalg::norm2(&(candidate.as_matrix() - p.as_matrix())) / gamma;
        if !ratio.is_finite() {
            return Err(Error::Numerical(format!("non-finite value update at iteration {k}")));
        }
        if ratio < opts.eps {
            history.records.push(ViRecord { k, q, gamma, ratio, reset: false, p: p.clone(), gain: gain.clone() });
            let gain_y = DMatrix::zeros(gain.nrows(), gain.ncols());
            return Ok(ViSolution { p, gain, gain_y, iterations: k, resets: q, history });
        }
        let reset = !opts.bounds.contains(&candidate, q);
        history.records.push(ViRecord { k, q, gamma, ratio, reset, p, gain });
        if reset {
            p = p0.clone();
            q += 1;
        } else {
            p = candidate;
        }
    }
    let last_step = history.records.last().map_or(f64::NAN, |r| r.ratio.as_f64());
    Err(Error::NotConverged { iterations: opts.max_iter, last_step, history: Box::new(history.to_table()) })
}

/// Model-based value iteration on the `P`-equation. No stabilizing initial
/// gain is required; the aggregate gain is zero under the vanishing-aggregate
/// assumption, which is checked.
pub fn model_vi<T: Real>(model: &SystemModel<T>, p0: &SymMatrix<T>, opts: ViOptions<T>) -> Result<ViSolution<T>> {
    if p0.dim() != model.n() {
        return Err(Error::Dimension(format!("P0 is {}x{}, expected {}x{}", p0.dim(), p0.dim(), model.n(), model.n())));
    }
    if !validate_assumption2(model)? {
        return Err(Error::Precondition("value iteration requires A - 0.5 rho I Hurwitz".into()));
    }
    if !linalg::is_positive_definite(p0)? {
        return Err(Error::Precondition("P0 must be positive definite".into()));
    }
    let a = model.a();
    let bt = model.b().transpose();
    let rho = model.rho();
    value_iteration(p0, model.q(), model.r(), opts, |p| {
        let pa = p.as_matrix() * a;
        let m = SymMatrix::from_matrix(&pa + pa.transpose() - p.as_matrix() * rho)?;
        let gain = apply_r_inverse(model.r(), &(&bt * p.as_matrix()))?;
        Ok((m, gain))
    })
}
