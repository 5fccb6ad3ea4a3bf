//! Data-driven policy iteration on a batch of data matrices.

use nalgebra::{DMatrix, DVector};

use crate::datamat::{hstack, DataMatrices};
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::{apply_r_inverse, policy_iteration, Branch, PiOptions, PiSolution};
use crate::scalar::Real;

const RANK_HINT: &str = "; enrich the exploration signal or add intervals";

/// One evaluation step: solves
/// `[I, −2·IX(Iₙ⊗Kᵀ) − 2·IXV] [vecs(P); vec(L)] = IX·vec(−KᵀRK − Q)`
/// and returns `(P, L)` with `L = BᵀP` on exact data.
pub fn pi_step<T: Real>(
    dm: &DataMatrices<T>,
    k_prev: &DMatrix<T>,
    q: &SymMatrix<T>,
    r: &SymMatrix<T>,
) -> Result<(SymMatrix<T>, DMatrix<T>)> {
    let (n, m) = (dm.n, dm.m);
    if k_prev.shape() != (m, n) || q.dim() != n || r.dim() != m {
        return Err(Error::Dimension(format!(
            "gain {}x{}, Q {}x{}, R {}x{} do not fit data with n = {n}, m = {m}",
            k_prev.nrows(),
            k_prev.ncols(),
            q.dim(),
            q.dim(),
            r.dim(),
            r.dim()
        )));
    }
    let lifted = linalg::kron(&DMatrix::identity(n, n), &k_prev.transpose());
    let coupling = (&dm.ix * lifted + &dm.ixv) * T::lit(-2.0);
    let delta = hstack(&dm.i, &coupling);
    let cost = -(k_prev.transpose() * r.as_matrix() * k_prev) - q.as_matrix();
    let theta: DVector<T> = &dm.ix * linalg::vec_of(&cost);
    let sol = linalg::solve_lstsq(&delta, &theta).map_err(with_hint)?;
    let half = n * (n + 1) / 2;
    let p = linalg::unvecs(&sol.as_slice()[..half], n)?;
    let l = linalg::unvec(&sol.as_slice()[half..], m, n)?;
    Ok((p, l))
}

/// Data-driven policy iteration: the `P`-branch uses `Q`, the `Y`-branch
/// uses zero state weight; both advance in lockstep until both gain steps
/// fall below `eps`. `A − BK0` and `A − BK0_Y` are assumed Hurwitz.
pub fn run_data_pi<T: Real>(
    dm: &DataMatrices<T>,
    k0: &DMatrix<T>,
    k0_y: &DMatrix<T>,
    q: &SymMatrix<T>,
    r: &SymMatrix<T>,
    opts: PiOptions<T>,
) -> Result<PiSolution<T>> {
    dm.validate()?;
    if k0_y.shape() != (dm.m, dm.n) {
        return Err(Error::Dimension(format!("K0_Y is {}x{}, expected {}x{}", k0_y.nrows(), k0_y.ncols(), dm.m, dm.n)));
    }
    let zero = SymMatrix::zeros(dm.n);
    policy_iteration(k0, k0_y, opts, |branch, gain| {
        let weight = match branch {
            Branch::Value => q,
            Branch::Aggregate => &zero,
        };
        let (value, l) = pi_step(dm, gain, weight, r)?;
        let next = apply_r_inverse(r, &l)?;
        Ok((value, next))
    })
}

fn with_hint(err: Error) -> Error {
    match err {
        Error::RankDeficient { rank, required, .. } => Error::RankDeficient { rank, required, hint: RANK_HINT },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamat::{build_data_matrices, IntervalSet};
    use crate::model::{example1, example2, model_pi, Example};
    use crate::simulate::{integrate_mean_ode, ExplorationSignal, Policy, TimeGrid};

    fn exact_data(ex: &Example<f64>, signal: ExplorationSignal<f64>, dt: f64) -> DataMatrices<f64> {
        let grid = TimeGrid::spanning(0.0, 2.0, dt).unwrap();
        let policy = Policy::uniform(ex.k0.clone(), signal);
        let traj = integrate_mean_ode(&ex.model, &ex.x0, &policy, grid).unwrap();
        build_data_matrices(&traj, &IntervalSet::default(), ex.model.rho()).unwrap()
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn first_step_matches_model() {
        let ex = example1::<f64>();
        let dm = exact_data(&ex, ExplorationSignal::Sinusoid { amplitude: 2.0, frequency: 7.0 }, 2.5e-5);
        let (p, l) = pi_step(&dm, &ex.k0, ex.model.q(), ex.model.r()).unwrap();
        let w = SymMatrix::from_matrix(ex.k0.transpose() * &ex.k0 + ex.model.q().as_matrix()).unwrap();
        let p1 = linalg::solve_lyapunov(&ex.model.discounted_closed_loop(&ex.k0), &w).unwrap();
        assert!(rel(p.as_matrix(), p1.as_matrix()) < 1e-6);
        assert!(rel(&l, &(ex.model.b().transpose() * p1.as_matrix())) < 1e-6);
    }

    #[test]
    fn vanishing_aggregate_branch() {
        let ex = example2::<f64>();
        let dm = exact_data(&ex, ExplorationSignal::Sinusoid { amplitude: 1.0, frequency: -24.6 }, 1e-4);
        let (y, l) = pi_step(&dm, &DMatrix::zeros(1, 3), &SymMatrix::zeros(3), ex.model.r()).unwrap();
        assert!(y.norm() <= 1e-6);
        assert!(l.norm() <= 1e-6);
    }

    #[test]
    fn square_system_is_solved_exactly() {
        let ex = example1::<f64>();
        let dm = exact_data(&ex, ExplorationSignal::Sinusoid { amplitude: 2.0, frequency: 7.0 }, 1e-4);
        let square = DataMatrices {
            i: dm.i.rows(0, 5).into_owned(),
            ix: dm.ix.rows(0, 5).into_owned(),
            ixv: dm.ixv.rows(0, 5).into_owned(),
            ixhat: dm.ixhat.rows(0, 5).into_owned(),
            intervals: IntervalSet::uniform(0.0, 0.1, 5).unwrap(),
            ..dm
        };
        let (p, l) = pi_step(&square, &ex.k0, ex.model.q(), ex.model.r()).unwrap();
        let lifted = linalg::kron(&DMatrix::identity(2, 2), &ex.k0.transpose());
        let delta = hstack(&square.i, &((&square.ix * lifted + &square.ixv) * -2.0));
        let theta = &square.ix * linalg::vec_of(&(-(ex.k0.transpose() * &ex.k0) - ex.model.q().as_matrix()));
        let mut x = linalg::vecs(&p).as_slice().to_vec();
        x.extend(linalg::vec_of(&l).iter());
        let resid = &delta * DVector::from_vec(x) - &theta;
        assert!(resid.norm() <= 1e-10 * theta.norm());
    }

    #[test]
    fn sequence_matches_model_pi() {
        let ex = example1::<f64>();
        let dm = exact_data(&ex, ExplorationSignal::Sinusoid { amplitude: 2.0, frequency: 7.0 }, 2.5e-5);
        let opts = PiOptions::default();
        let data = run_data_pi(&dm, &ex.k0, &ex.k0_y, ex.model.q(), ex.model.r(), opts).unwrap();
        let model = model_pi(&ex.model, &ex.k0, &ex.k0_y, opts).unwrap();
        assert_eq!(data.iterations(), model.iterations());
        for (d, m) in data.history.records.iter().zip(&model.history.records) {
            assert!(rel(d.p.as_matrix(), m.p.as_matrix()) < 1e-6);
            assert!(rel(d.y.as_matrix(), m.y.as_matrix()) < 1e-6);
            assert!(rel(&d.gains.k, &m.gains.k) < 1e-6);
            assert!(rel(&d.gains.k_y, &m.gains.k_y) < 1e-6);
        }
    }

    #[test]
    fn degenerate_data_reports_rank() {
        let ex = example1::<f64>();
        let grid = TimeGrid::new(0.0, 1e-3, 2000).unwrap();
        let traj = integrate_mean_ode(&ex.model, &DVector::zeros(2), &Policy::feedback(ex.k0.clone()), grid).unwrap();
        let dm = build_data_matrices(&traj, &IntervalSet::default(), ex.model.rho()).unwrap();
        let err = pi_step(&dm, &ex.k0, ex.model.q(), ex.model.r()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { required: 5, hint: RANK_HINT, .. }));
        assert_eq!(err.exit_code(), 4);
    }
}
