//! Trajectory generation: the mean ODE, agent SDE paths, Monte-Carlo means,
//! the aggregate quantity and the N-agent population.

mod paths;
mod population;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::scalar::Real;

pub use paths::{monte_carlo_mean, simulate_agent_sde, simulate_path, BLOCK_PATHS};
pub use population::{aggregate_ode, population_sim, PopulationRun};

/// A path is flagged as divergent once `|x| > DIVERGENCE_FACTOR · max(1, |x0|)`.
pub const DIVERGENCE_FACTOR: f64 = 1e10;

/// Uniform grid `t0 + i·dt`, `i = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    t0: T,
    dt: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t0: T, dt: T, steps: usize) -> Result<Self> {
        if !(dt > T::zero() && dt.is_finite() && t0.is_finite()) {
            return Err(Error::Precondition(format!("grid needs finite t0 and dt > 0, got t0 = {t0}, dt = {dt}")));
        }
        if steps == 0 {
            return Err(Error::Precondition("grid needs at least one step".into()));
        }
        Ok(Self { t0, dt, steps })
    }

    /// Grid covering `[t0, t_end]` with step `dt`; the span must be an
    /// integer multiple of `dt` up to rounding.
    pub fn spanning(t0: T, t_end: T, dt: T) -> Result<Self> {
        let ratio = ((t_end - t0) / dt).as_f64();
        let steps = ratio.round();
        if !steps.is_finite() || steps < 1.0 || (ratio - steps).abs() > 1e-6 * steps {
            return Err(Error::Precondition(format!("span [{t0}, {t_end}] is not a multiple of dt = {dt}")));
        }
        Self::new(t0, dt, steps as usize)
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> T {
        self.t0 + self.dt * T::lit(i as f64)
    }

    pub fn end(&self) -> T {
        self.point(self.steps)
    }

    pub fn points(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Index of the grid point nearest to `t`.
    pub fn nearest_index(&self, t: T) -> Result<usize> {
        let pos = ((t - self.t0) / self.dt).as_f64().round();
        if !(0.0..=self.steps as f64).contains(&pos) {
            return Err(Error::Range { time: t.as_f64(), start: self.t0.as_f64(), end: self.end().as_f64() });
        }
        Ok(pos as usize)
    }
}

/// Scalar exploration waveform added to one input channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ExplorationSignal<T> {
    None,
    /// `amplitude · sin(frequency · t)`.
    Sinusoid { amplitude: T, frequency: T },
    /// `amplitude · Σ_r sin(β_r · t)`.
    SinusoidSum { amplitude: T, frequencies: Vec<T> },
}

impl<T: Real> ExplorationSignal<T> {
    pub fn eval(&self, t: T) -> T {
        match self {
            ExplorationSignal::None => T::zero(),
            ExplorationSignal::Sinusoid { amplitude, frequency } => *amplitude * (*frequency * t).sin(),
            ExplorationSignal::SinusoidSum { amplitude, frequencies } => {
                *amplitude * frequencies.iter().fold(T::zero(), |acc, &w| acc + (w * t).sin())
            }
        }
    }

    /// `count` frequencies drawn uniformly from `[lo, hi]`.
    pub fn random_sinusoids(count: usize, amplitude: T, lo: T, hi: T, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frequencies = (0..count).map(|_| lo + (hi - lo) * T::lit(rng.random::<f64>())).collect();
        ExplorationSignal::SinusoidSum { amplitude, frequencies }
    }
}

/// Linear feedback with additive exploration, `u(t) = −Kx(t) + e(t)`.
#[derive(Debug, Clone)]
pub struct Policy<T: Real> {
    pub gain: DMatrix<T>,
    /// One waveform per input channel.
    pub exploration: Vec<ExplorationSignal<T>>,
}

impl<T: Real> Policy<T> {
    pub fn new(gain: DMatrix<T>, exploration: Vec<ExplorationSignal<T>>) -> Result<Self> {
        if exploration.len() != gain.nrows() {
            return Err(Error::Dimension(format!(
                "{} exploration channels for a gain with {} rows",
                exploration.len(),
                gain.nrows()
            )));
        }
        Ok(Self { gain, exploration })
    }

    /// Same waveform on every channel.
    pub fn uniform(gain: DMatrix<T>, signal: ExplorationSignal<T>) -> Self {
        let exploration = vec![signal; gain.nrows()];
        Self { gain, exploration }
    }

    pub fn feedback(gain: DMatrix<T>) -> Self {
        Self::uniform(gain, ExplorationSignal::None)
    }

    pub fn exploration_at(&self, t: T) -> DVector<T> {
        DVector::from_iterator(self.exploration.len(), self.exploration.iter().map(|e| e.eval(t)))
    }

    fn check(&self, model: &SystemModel<T>) -> Result<()> {
        model.check_gain_shape(&self.gain, "policy gain")?;
        if self.exploration.len() != model.m() {
            return Err(Error::Dimension(format!("{} exploration channels, expected {}", self.exploration.len(), model.m())));
        }
        Ok(())
    }
}

/// Law of the initial state `x_{i0}`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw<T: Real> {
    Fixed(DVector<T>),
    /// Independent uniform coordinates on `[lo_j, hi_j]`.
    Uniform { lo: DVector<T>, hi: DVector<T> },
}

impl<T: Real> InitialLaw<T> {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Fixed(x) => x.len(),
            InitialLaw::Uniform { lo, .. } => lo.len(),
        }
    }

    pub fn mean(&self) -> DVector<T> {
        match self {
            InitialLaw::Fixed(x) => x.clone(),
            InitialLaw::Uniform { lo, hi } => (lo + hi) * T::lit(0.5),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        match self {
            InitialLaw::Fixed(x) => x.clone(),
            InitialLaw::Uniform { lo, hi } => {
                DVector::from_iterator(lo.len(), lo.iter().zip(hi.iter()).map(|(&a, &b)| a + (b - a) * T::lit(rng.random::<f64>())))
            }
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if let InitialLaw::Uniform { lo, hi } = self {
            if lo.len() != hi.len() || lo.iter().zip(hi.iter()).any(|(a, b)| a.partial_cmp(b).is_none_or(|o| o.is_gt())) {
                return Err(Error::Precondition("uniform law needs lo <= hi componentwise".into()));
            }
        }
        if self.dim() != n {
            return Err(Error::Dimension(format!("initial law has dimension {}, expected {n}", self.dim())));
        }
        Ok(())
    }
}

/// Mean state `X` and mean input `V` sampled on a grid; column `i` belongs
/// to grid point `i`.
#[derive(Debug, Clone)]
pub struct MeanTrajectory<T: Real> {
    pub grid: TimeGrid<T>,
    pub x: DMatrix<T>,
    pub v: DMatrix<T>,
}

impl<T: Real> MeanTrajectory<T> {
    pub fn new(grid: TimeGrid<T>, x: DMatrix<T>, v: DMatrix<T>) -> Result<Self> {
        if x.ncols() != grid.len() || v.ncols() != grid.len() {
            return Err(Error::Dimension(format!(
                "trajectory has {} state and {} input columns for {} grid points",
                x.ncols(),
                v.ncols(),
                grid.len()
            )));
        }
        if x.iter().chain(v.iter()).any(|z| !z.is_finite()) {
            return Err(Error::Numerical("trajectory contains non-finite values".into()));
        }
        Ok(Self { grid, x, v })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }

    /// Mean input `V = −K X + e(t)` from a state path.
    pub fn from_states(grid: TimeGrid<T>, x: DMatrix<T>, policy: &Policy<T>) -> Result<Self> {
        let mut v = -(&policy.gain * &x);
        for (i, t) in grid.points().enumerate() {
            for (c, e) in policy.exploration.iter().enumerate() {
                v[(c, i)] += e.eval(t);
            }
        }
        Self::new(grid, x, v)
    }
}

/// Classical RK4 integration of `dX = (AX + BV)dt`, `V = −KX + e(t)`.
pub fn integrate_mean_ode<T: Real>(
    model: &SystemModel<T>,
    x0: &DVector<T>,
    policy: &Policy<T>,
    grid: TimeGrid<T>,
) -> Result<MeanTrajectory<T>> {
    policy.check(model)?;
    check_state(model, x0)?;
    let closed = model.closed_loop(&policy.gain);
    let b = model.b();
    let drift = |t: T, x: &DVector<T>| &closed * x + b * policy.exploration_at(t);
    let x = rk4(&drift, x0, grid)?;
    MeanTrajectory::from_states(grid, x, policy)
}

/// Classical RK4 on the grid; columns of the result are the grid states.
pub(crate) fn rk4<T, F>(drift: &F, x0: &DVector<T>, grid: TimeGrid<T>) -> Result<DMatrix<T>>
where
    T: Real,
    F: Fn(T, &DVector<T>) -> DVector<T>,
{
    let n = x0.len();
    let dt = grid.dt();
    let half = dt * T::lit(0.5);
    let sixth = dt / T::lit(6.0);
    let bound = divergence_bound(x0);
    let mut out = DMatrix::zeros(n, grid.len());
    out.set_column(0, x0);
    let mut x = x0.clone();
    for i in 0..grid.steps() {
        let t = grid.point(i);
        let k1 = drift(t, &x);
        let k2 = drift(t + half, &(&x + &k1 * half));
        let k3 = drift(t + half, &(&x + &k2 * half));
        let k4 = drift(t + dt, &(&x + &k3 * dt));
        x += (k1 + (k2 + k3) * T::lit(2.0) + k4) * sixth;
        check_divergence(x.as_slice(), bound, i + 1, &grid)?;
        out.set_column(i + 1, &x);
    }
    Ok(out)
}

/// Trapezoidal approximation of `∫ e^{−ρt}[(x−x̄)ᵀQ(x−x̄) + uᵀRu] dt` over the
/// grid. Paths are stored column-per-gridpoint.
pub fn discounted_cost<T: Real>(
    model: &SystemModel<T>,
    x: &DMatrix<T>,
    u: &DMatrix<T>,
    x_bar: &DMatrix<T>,
    grid: TimeGrid<T>,
) -> Result<T> {
    let len = grid.len();
    if x.shape() != (model.n(), len) || x_bar.shape() != (model.n(), len) || u.shape() != (model.m(), len) {
        return Err(Error::Dimension("cost paths must share the grid and model dimensions".into()));
    }
    let integrand = |i: usize| {
        let dev = x.column(i) - x_bar.column(i);
        let state = (dev.transpose() * model.q().as_matrix() * &dev)[(0, 0)];
        let input = (u.column(i).transpose() * model.r().as_matrix() * u.column(i))[(0, 0)];
        (-model.rho() * grid.point(i)).exp() * (state + input)
    };
    let interior = (1..grid.steps()).fold(T::zero(), |acc, i| acc + integrand(i));
    let ends = (integrand(0) + integrand(grid.steps())) * T::lit(0.5);
    Ok((interior + ends) * grid.dt())
}

fn check_state<T: Real>(model: &SystemModel<T>, x0: &DVector<T>) -> Result<()> {
    if x0.len() != model.n() {
        return Err(Error::Dimension(format!("initial state has length {}, expected {}", x0.len(), model.n())));
    }
    Ok(())
}

pub(crate) fn divergence_bound<T: Real>(x0: &DVector<T>) -> T {
    T::lit(DIVERGENCE_FACTOR) * x0.norm().max(T::one())
}

#[inline]
pub(crate) fn check_divergence<T: Real>(x: &[T], bound: T, step: usize, grid: &TimeGrid<T>) -> Result<()> {
    let sq = x.iter().fold(T::zero(), |acc, &v| acc + v * v);
    if sq.is_finite() && sq <= bound * bound {
        Ok(())
    } else {
        Err(Error::Divergence { step, time: grid.point(step).as_f64() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::model::example1;
    use nalgebra::{dmatrix, dvector};

    fn scalar(a: f64, b: f64, c: f64) -> SystemModel<f64> {
        SystemModel::new(dmatrix![a], dmatrix![b], dmatrix![c], SymMatrix::identity(1), SymMatrix::identity(1), 0.0)
            .unwrap()
    }

    #[test]
    fn grid_points_have_no_drift() {
        let g = TimeGrid::new(0.0, 0.1, 20).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g.point(20), 20.0 * 0.1);
        assert_eq!(g.nearest_index(1.0).unwrap(), 10);
        assert!(g.nearest_index(2.5).is_err());
        let s = TimeGrid::spanning(0.0, 2.0, 1e-4).unwrap();
        assert_eq!(s.steps(), 20_000);
        assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 0).is_err());
        assert!(TimeGrid::spanning(0.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn exploration_waveforms() {
        let s = ExplorationSignal::Sinusoid { amplitude: 2.0, frequency: 3.0 };
        assert!((s.eval(0.5) - 2.0 * 1.5f64.sin()).abs() < 1e-15);
        assert_eq!(ExplorationSignal::<f64>::None.eval(4.0), 0.0);
        let r = ExplorationSignal::random_sinusoids(100, 0.3, -1000.0, 1000.0, 7);
        assert_eq!(r, ExplorationSignal::random_sinusoids(100, 0.3, -1000.0, 1000.0, 7));
        match &r {
            ExplorationSignal::SinusoidSum { frequencies, .. } => {
                assert_eq!(frequencies.len(), 100);
                assert!(frequencies.iter().all(|w| (-1000.0..=1000.0).contains(w)));
            }
            _ => unreachable!(),
        }
        assert_eq!(r.eval(0.0), 0.0);
    }

    #[test]
    fn constant_trajectory_without_dynamics() {
        let model = SystemModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            SymMatrix::identity(2),
            SymMatrix::identity(1),
            0.0,
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 10).unwrap();
        let traj = integrate_mean_ode(&model, &dvector![1.0, 1.0], &Policy::feedback(DMatrix::zeros(1, 2)), grid).unwrap();
        assert!(traj.x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exponential_decay() {
        let model = scalar(-1.0, 0.0, 0.0);
        let grid = TimeGrid::new(0.0, 1e-3, 1000).unwrap();
        let traj = integrate_mean_ode(&model, &dvector![1.0], &Policy::feedback(dmatrix![0.0]), grid).unwrap();
        assert!((traj.x[(0, 1000)] - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn richardson_self_consistency() {
        let ex = example1::<f64>();
        let policy = Policy::feedback(ex.k0.clone());
        let coarse = integrate_mean_ode(&ex.model, &ex.x0, &policy, TimeGrid::new(0.0, 1e-3, 2000).unwrap()).unwrap();
        let fine = integrate_mean_ode(&ex.model, &ex.x0, &policy, TimeGrid::new(0.0, 5e-4, 4000).unwrap()).unwrap();
        for i in 0..=2000 {
            let (a, b) = (coarse.x.column(i), fine.x.column(2 * i));
            assert!((a - b).norm() <= 1e-6 * b.norm().max(1e-3));
        }
    }

    #[test]
    fn mean_input_follows_feedback() {
        let ex = example1::<f64>();
        let policy = Policy::uniform(ex.k0.clone(), ExplorationSignal::Sinusoid { amplitude: 1.0, frequency: 2.0 });
        let grid = TimeGrid::new(0.0, 0.01, 50).unwrap();
        let traj = integrate_mean_ode(&ex.model, &ex.x0, &policy, grid).unwrap();
        for i in 0..grid.len() {
            let expect = -(&ex.k0 * traj.x.column(i))[0] + (2.0 * grid.point(i)).sin();
            assert!((traj.v[(0, i)] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn open_loop_blow_up_is_reported() {
        let ex = example1::<f64>();
        let grid = TimeGrid::new(0.0, 1e-3, 5000).unwrap();
        let err = integrate_mean_ode(&ex.model, &ex.x0, &Policy::feedback(DMatrix::zeros(1, 2)), grid).unwrap_err();
        assert!(matches!(err, Error::Divergence { step, .. } if step > 0 && step < 5000));
    }

    #[test]
    fn cost_values() {
        let model = scalar(0.0, 1.0, 0.0);
        let model = SystemModel::new(
            model.a().clone(),
            model.b().clone(),
            model.c().clone(),
            SymMatrix::identity(1),
            SymMatrix::identity(1),
            1.0,
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1e-3, 20_000).unwrap();
        let ones = DMatrix::from_element(1, grid.len(), 1.0);
        let zeros = DMatrix::zeros(1, grid.len());
        assert_eq!(discounted_cost(&model, &ones, &zeros, &ones, grid).unwrap(), 0.0);
        let c = discounted_cost(&model, &ones, &zeros, &zeros, grid).unwrap();
        assert!((c - (1.0 - (-20f64).exp())).abs() < 1e-4);
        let doubled = SystemModel::new(
            model.a().clone(),
            model.b().clone(),
            model.c().clone(),
            SymMatrix::scaled_identity(1, 2.0),
            SymMatrix::identity(1),
            1.0,
        )
        .unwrap();
        let c2 = discounted_cost(&doubled, &ones, &zeros, &zeros, grid).unwrap();
        assert!((c2 - 2.0 * c).abs() < 1e-12);
    }
}
