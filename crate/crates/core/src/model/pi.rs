use nalgebra::DMatrix;

use crate::error::{Error, HistoryTable, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::{apply_r_inverse, GainPair, RiccatiPair, SystemModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct PiOptions<T> {
    /// Stop once both gain steps fall below this threshold.
    pub eps: T,
    pub max_iter: usize,
}

impl<T: Real> Default for PiOptions<T> {
    fn default() -> Self {
        Self { eps: T::lit(1e-3), max_iter: 100 }
    }
}

/// One policy-evaluation/improvement round: `P^k`, `Y^k` evaluated under the
/// previous gains and the improved gains `K^k`, `K^k_Y` derived from them.
#[derive(Debug, Clone)]
pub struct PiRecord<T: Real> {
    pub k: usize,
    pub p: SymMatrix<T>,
    pub y: SymMatrix<T>,
    pub gains: GainPair<T>,
    /// `|K^k − K^{k−1}|` in the induced 2-norm.
    pub step: T,
    /// `|K^k_Y − K^{k−1}_Y|`.
    pub step_y: T,
}

#[derive(Debug, Clone, Default)]
pub struct IterationHistory<T: Real> {
    pub records: Vec<PiRecord<T>>,
}

impl<T: Real> IterationHistory<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Columns `k, K_step, KY_step, vecs(P).., vecs(Y)..`.
    pub fn to_table(&self) -> HistoryTable {
        let dim = self.records.first().map_or(0, |r| r.p.dim());
        let mut header = vec!["k".to_string(), "K_step".to_string(), "KY_step".to_string()];
        let half = dim * (dim + 1) / 2;
        header.extend((0..half).map(|i| format!("vecsP_{i}")));
        header.extend((0..half).map(|i| format!("vecsY_{i}")));
        let rows = self
            .records
            .iter()
            .map(|r| {
                let mut row = vec![r.k as f64, r.step.as_f64(), r.step_y.as_f64()];
                row.extend(linalg::vecs(&r.p).iter().map(|x| x.as_f64()));
                row.extend(linalg::vecs(&r.y).iter().map(|x| x.as_f64()));
                row
            })
            .collect();
        HistoryTable { header, rows }
    }
}

#[derive(Debug, Clone)]
pub struct PiSolution<T: Real> {
    pub riccati: RiccatiPair<T>,
    pub gains: GainPair<T>,
    pub history: IterationHistory<T>,
}

impl<T: Real> PiSolution<T> {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Which Riccati equation a policy-evaluation call targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Branch {
    /// `P`-equation, carries the state weight `Q`.
    Value,
    /// `Y`-equation, no state weight.
    Aggregate,
}

/// Shared policy-iteration loop. `evaluate` maps the previous gain of a branch
/// to the evaluated value matrix and the improved gain.
///
/// Candidate gains are computed first, the stopping test is applied to
/// them, and only then are they committed as the next iterate.
pub(crate) fn policy_iteration<T, F>(
    k0: &DMatrix<T>,
    k0_y: &DMatrix<T>,
    opts: PiOptions<T>,
    mut evaluate: F,
) -> Result<PiSolution<T>>
where
    T: Real,
    F: FnMut(Branch, &DMatrix<T>) -> Result<(SymMatrix<T>, DMatrix<T>)>,
{
    let mut k_prev = k0.clone();
    let mut k_prev_y = k0_y.clone();
    let mut history = IterationHistory { records: Vec::new() };
    for k in 1..=opts.max_iter {
        let (p, k_next) = evaluate(Branch::Value, &k_prev)?;
        let (y, k_next_y) = evaluate(Branch::Aggregate, &k_prev_y)?;
        let step = linalg::norm2(&(&k_next - &k_prev));
        let step_y = linalg::norm2(&(&k_next_y - &k_prev_y));
        if !(step.is_finite() && step_y.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gain update at iteration {k}")));
        }
        history.records.push(PiRecord {
            k,
            p: p.clone(),
            y: y.clone(),
            gains: GainPair { k: k_next.clone(), k_y: k_next_y.clone() },
            step,
            step_y,
        });
        if step < opts.eps && step_y < opts.eps {
            return Ok(PiSolution {
                riccati: RiccatiPair { p, y },
                gains: GainPair { k: k_next, k_y: k_next_y },
                history,
            });
        }
        k_prev = k_next;
        k_prev_y = k_next_y;
    }
    let last_step = history.records.last().map_or(f64::NAN, |r| r.step.max(r.step_y).as_f64());
    Err(Error::NotConverged { iterations: opts.max_iter, last_step, history: Box::new(history.to_table()) })
}

/// Model-based policy iteration on both Riccati equations.
///
/// Each round solves the Lyapunov equations
/// `(A − BK − 0.5ρI)ᵀP + P(A − BK − 0.5ρI) + KᵀRK + Q = 0` (and the same
/// without `Q` for `Y`), then improves `K ← R⁻¹BᵀP`.
pub fn model_pi<T: Real>(
    model: &SystemModel<T>,
    k0: &DMatrix<T>,
    k0_y: &DMatrix<T>,
    opts: PiOptions<T>,
) -> Result<PiSolution<T>> {
    model.check_gain_shape(k0, "K0")?;
    model.check_gain_shape(k0_y, "K0_Y")?;
    for (gain, what) in [(k0, "A - B K0"), (k0_y, "A - B K0_Y")] {
        if !linalg::is_hurwitz(&model.closed_loop(gain), T::zero())? {
            return Err(Error::Initialization(format!("{what} is not Hurwitz")));
        }
    }
    let bt = model.b().transpose();
    let zero = SymMatrix::zeros(model.n());
    policy_iteration(k0, k0_y, opts, |branch, gain| {
        let weight = match branch {
            Branch::Value => model.q(),
            Branch::Aggregate => &zero,
        };
        let w = SymMatrix::from_matrix(gain.transpose() * model.r().as_matrix() * gain + weight.as_matrix())?;
        let value = linalg::solve_lyapunov(&model.discounted_closed_loop(gain), &w)?;
        let next = apply_r_inverse(model.r(), &(&bt * value.as_matrix()))?;
        if !linalg::is_hurwitz(&model.discounted_closed_loop(&next), T::zero())? {
            return Err(Error::Numerical("improved gain lost the discounted Hurwitz property".into()));
        }
        Ok((value, next))
    })
}
