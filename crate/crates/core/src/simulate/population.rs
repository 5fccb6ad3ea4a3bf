use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::paths::path_rng;
use super::{check_divergence, check_state, divergence_bound, rk4, InitialLaw, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{GainPair, SystemModel};
use crate::scalar::Real;

/// Stream reserved for the draws that estimate `ξ₀`; agents use streams
/// `0..N`.
const AGGREGATE_STREAM: u64 = u64::MAX;

/// RK4 integration of the aggregate quantity `dx̂ = (A − BK_Y)x̂ dt`,
/// `x̂(t0) = ξ₀`.
pub fn aggregate_ode<T: Real>(
    model: &SystemModel<T>,
    k_y: &DMatrix<T>,
    xi0: &DVector<T>,
    grid: TimeGrid<T>,
) -> Result<DMatrix<T>> {
    model.check_gain_shape(k_y, "K_Y")?;
    check_state(model, xi0)?;
    let closed = model.closed_loop(k_y);
    rk4(&|_, x: &DVector<T>| &closed * x, xi0, grid)
}

#[derive(Debug, Clone)]
pub struct PopulationRun<T: Real> {
    pub grid: TimeGrid<T>,
    /// Estimated `ξ₀`.
    pub xi0: DVector<T>,
    /// `x̂` on the grid.
    pub aggregate: DMatrix<T>,
    /// One state path per agent.
    pub agents: Vec<DMatrix<T>>,
    /// Population average `x̃_N`.
    pub average: DMatrix<T>,
}

impl<T: Real> PopulationRun<T> {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// `sup_t |x̃_N − x̂| / sup_t |x̂|`.
    pub fn consistency_gap(&self) -> T {
        let sup = |m: &DMatrix<T>| m.column_iter().fold(T::zero(), |acc, c| acc.max(c.norm()));
        sup(&(&self.average - &self.aggregate)) / sup(&self.aggregate)
    }
}

/// Simulates `agents` independent agents under the decentralized strategy
/// `u_i = −K x_i − (K_Y − K) x̂`.
///
/// `ξ₀` is the sample mean of `aggregate_samples` draws from `law`. Each
/// agent advances its drift with the RK4 propagator of the joint linear system
/// in `(x_i, x̂)` and adds the increment `C ΔW_i`, so a noise-free agent started
/// at `ξ₀` with `K = K_Y` reproduces `x̂`.
pub fn population_sim<T: Real>(
    model: &SystemModel<T>,
    gains: &GainPair<T>,
    agents: usize,
    law: &InitialLaw<T>,
    aggregate_samples: usize,
    grid: TimeGrid<T>,
    seed: u64,
) -> Result<PopulationRun<T>> {
    if agents == 0 || aggregate_samples == 0 {
        return Err(Error::Precondition("population needs at least one agent and one aggregate sample".into()));
    }
    model.check_gain_shape(&gains.k, "K")?;
    model.check_gain_shape(&gains.k_y, "K_Y")?;
    law.check(model.n())?;

    let mut rng = path_rng(seed, AGGREGATE_STREAM);
    let mut xi0 = DVector::zeros(model.n());
    for _ in 0..aggregate_samples {
        xi0 += law.sample(&mut rng);
    }
    xi0 /= T::lit(aggregate_samples as f64);
    let aggregate = aggregate_ode(model, &gains.k_y, &xi0, grid)?;

    let (own, coupling) = propagators(model, gains, grid.dt());
    let diffusion = model.c() * grid.dt().sqrt();
    let simulate = |index: usize| -> Result<DMatrix<T>> {
        let mut rng = path_rng(seed, index as u64);
        let x0 = law.sample(&mut rng);
        let bound = divergence_bound(&x0);
        let mut path = DMatrix::zeros(model.n(), grid.len());
        path.set_column(0, &x0);
        let mut x = x0;
        let mut z = DVector::zeros(model.p());
        for k in 0..grid.steps() {
            for zj in z.iter_mut() {
                *zj = T::lit(rng.sample::<f64, _>(StandardNormal));
            }
            x = &own * &x + &coupling * aggregate.column(k) + &diffusion * &z;
            check_divergence(x.as_slice(), bound, k + 1, &grid)?;
            path.set_column(k + 1, &x);
        }
        Ok(path)
    };
    let paths: Vec<DMatrix<T>> = (0..agents).into_par_iter().map(simulate).collect::<Result<_>>()?;
    let mut average = DMatrix::zeros(model.n(), grid.len());
    for path in &paths {
        average += path;
    }
    average /= T::lit(agents as f64);
    Ok(PopulationRun { grid, xi0, aggregate, agents: paths, average })
}

/// Blocks `(Φ₁₁, Φ₁₂)` of the RK4 propagator `I + hG + (hG)²/2 + (hG)³/6 +
/// (hG)⁴/24` for `G = [[A − BK, −B(K_Y − K)], [0, A − BK_Y]]`.
fn propagators<T: Real>(model: &SystemModel<T>, gains: &GainPair<T>, h: T) -> (DMatrix<T>, DMatrix<T>) {
    let n = model.n();
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    g.view_mut((0, 0), (n, n)).copy_from(&model.closed_loop(&gains.k));
    g.view_mut((0, n), (n, n)).copy_from(&(-(model.b() * (&gains.k_y - &gains.k))));
    g.view_mut((n, n), (n, n)).copy_from(&model.closed_loop(&gains.k_y));
    let hg = g * h;
    let mut term = DMatrix::identity(2 * n, 2 * n);
    let mut phi = term.clone();
    for order in 1..=4 {
        term = &term * &hg / T::lit(order as f64);
        phi += &term;
    }
    (phi.view((0, 0), (n, n)).into_owned(), phi.view((0, n), (n, n)).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::model::example1;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn aggregate_closed_forms() {
        // A − B K_Y = −I
        let model = SystemModel::new(
            dmatrix![0.0, 0.0; 0.0, 0.0],
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            SymMatrix::identity(2),
            SymMatrix::identity(2),
            0.01,
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1e-3, 1000).unwrap();
        let path = aggregate_ode(&model, &DMatrix::identity(2, 2), &dvector![1.0, 1.0], grid).unwrap();
        assert!((path[(0, 1000)] - (-1f64).exp()).abs() < 1e-10);
        assert!((path[(1, 500)] - (-0.5f64).exp()).abs() < 1e-10);
        let zero = aggregate_ode(&model, &DMatrix::identity(2, 2), &dvector![0.0, 0.0], grid).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_richardson() {
        let ex = example1::<f64>();
        let k_y = &ex.reference.k_y;
        let coarse = aggregate_ode(&ex.model, k_y, &ex.x0, TimeGrid::new(0.0, 1e-3, 2000).unwrap()).unwrap();
        let fine = aggregate_ode(&ex.model, k_y, &ex.x0, TimeGrid::new(0.0, 5e-4, 4000).unwrap()).unwrap();
        for i in 0..=2000 {
            assert!((coarse.column(i) - fine.column(2 * i)).norm() <= 1e-6 * ex.x0.norm());
        }
    }

    #[test]
    fn degenerate_agent_reproduces_aggregate() {
        let ex = example1::<f64>();
        let model = SystemModel::new(
            ex.model.a().clone(),
            ex.model.b().clone(),
            DMatrix::zeros(2, 2),
            ex.model.q().clone(),
            ex.model.r().clone(),
            ex.model.rho(),
        )
        .unwrap();
        let gains = GainPair { k: ex.reference.k_y.clone(), k_y: ex.reference.k_y.clone() };
        let grid = TimeGrid::new(0.0, 1e-3, 2000).unwrap();
        let run = population_sim(&model, &gains, 1, &InitialLaw::Fixed(ex.x0.clone()), 1, grid, 4).unwrap();
        assert_eq!(run.xi0, ex.x0);
        let scale = run.aggregate.amax();
        assert!((&run.agents[0] - &run.aggregate).amax() <= 1e-12 * scale);
    }

    #[test]
    fn average_is_the_mean_of_agents() {
        let ex = example1::<f64>();
        let grid = TimeGrid::new(0.0, 1e-3, 300).unwrap();
        let law = InitialLaw::Uniform { lo: dvector![0.0, 0.0], hi: dvector![2.0, 2.0] };
        let run = population_sim(&ex.model, &ex.reference.gains(), 7, &law, 100, grid, 8).unwrap();
        let mut sum = DMatrix::zeros(2, grid.len());
        for a in &run.agents {
            sum += a;
        }
        assert_eq!(run.average, sum / 7.0);
        assert!(run.xi0.iter().all(|v| (0.0..=2.0).contains(v)));
        let again = population_sim(&ex.model, &ex.reference.gains(), 7, &law, 100, grid, 8).unwrap();
        assert_eq!(run.average, again.average);
    }

    #[test]
    fn rejects_empty_population() {
        let ex = example1::<f64>();
        let grid = TimeGrid::new(0.0, 1e-3, 10).unwrap();
        let law = InitialLaw::Fixed(ex.x0.clone());
        assert!(population_sim(&ex.model, &ex.reference.gains(), 0, &law, 1, grid, 0).is_err());
    }
}
