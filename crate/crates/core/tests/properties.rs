use mfg_core::datamat::{build_data_matrices, IntervalSet};
use mfg_core::linalg::{self, SymMatrix};
use mfg_core::model::{BoundSchedule, StepSchedule};
use mfg_core::simulate::{MeanTrajectory, TimeGrid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 128, rng_seed: RngSeed::Fixed(0x5eed), failure_persistence: None, ..ProptestConfig::default() }
}

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn symmetric(max_n: usize) -> impl Strategy<Value = SymMatrix<f64>> {
    (1..=max_n).prop_flat_map(|n| matrix(n, n, 10.0)).prop_map(|a| SymMatrix::from_matrix((&a + a.transpose()) * 0.5).unwrap())
}

fn stable(max_n: usize) -> impl Strategy<Value = (DMatrix<f64>, SymMatrix<f64>)> {
    (1..=max_n).prop_flat_map(|n| (matrix(n, n, 3.0), matrix(n, n, 1.0), 0.1..2.0)).prop_map(|(raw, g, margin)| {
        let n = raw.nrows();
        let top = linalg::complex_eigenvalues(&raw).unwrap().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        let f = raw - DMatrix::identity(n, n) * (top + margin);
        (f, SymMatrix::from_matrix(&g * g.transpose() + DMatrix::identity(n, n) * 1e-3).unwrap())
    })
}

/// Random (non-smooth) trajectory: the data-matrix identities are algebraic
/// per sample, so smoothness is irrelevant.
fn trajectory() -> impl Strategy<Value = MeanTrajectory<f64>> {
    (1usize..=4, 1usize..=2).prop_flat_map(|(n, m)| (matrix(n, 301, 2.0), matrix(m, 301, 2.0))).prop_map(|(x, v)| {
        MeanTrajectory::new(TimeGrid::new(0.0, 0.01, 300).unwrap(), x, v).unwrap()
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn vecs_roundtrip_is_exact(s in symmetric(7)) {
        let back = linalg::unvecs(linalg::vecs(&s).as_slice(), s.dim()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn bar_vecs_is_the_quadratic_form((s, z) in symmetric(7).prop_flat_map(|s| {
        let n = s.dim();
        (Just(s), prop::collection::vec(-5.0..5.0f64, n))
    })) {
        let zv = DVector::from_column_slice(&z);
        let quad = (zv.transpose() * s.as_matrix() * &zv)[(0, 0)];
        let lifted = linalg::bar(&z).dot(&linalg::vecs(&s));
        prop_assert!((lifted - quad).abs() <= 1e-12 * (1.0 + quad.abs()), "{lifted} vs {quad}");
    }

    #[test]
    fn kron_mixed_product(dims in prop::collection::vec(1usize..=3, 6), seed in any::<u64>()) {
        let mut k = seed;
        let mut next = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| {
                k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((k >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
        };
        let a = next(dims[0], dims[1]);
        let c = next(dims[1], dims[2]);
        let b = next(dims[3], dims[4]);
        let d = next(dims[4], dims[5]);
        let lhs = linalg::kron(&a, &b) * linalg::kron(&c, &d);
        let rhs = linalg::kron(&(&a * &c), &(&b * &d));
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
    }

    #[test]
    fn lyapunov_residual((f, w) in stable(6)) {
        let p = linalg::solve_lyapunov(&f, &w).unwrap();
        let resid = f.transpose() * p.as_matrix() + p.as_matrix() * &f + w.as_matrix();
        prop_assert!(resid.norm() <= 1e-8 * w.norm(), "residual {}", resid.norm());
        prop_assert!(linalg::is_positive_semidefinite(&p).unwrap());
    }

    #[test]
    fn lstsq_solves_consistent_systems(a in (1usize..=5).prop_flat_map(|c| matrix(c + 4, c, 1.0)), seed in -1.0..1.0f64) {
        let x = DVector::from_fn(a.ncols(), |i, _| seed + i as f64);
        let b = &a * &x;
        match linalg::solve_lstsq(&a, &b) {
            Ok(sol) => prop_assert!((&a * sol - &b).norm() <= 1e-10 * b.norm().max(1e-300)),
            Err(err) => prop_assert!(linalg::numerical_rank(&a).unwrap() < a.ncols(), "{err}"),
        }
    }

    #[test]
    fn symmetry_reduction((traj, a) in trajectory().prop_flat_map(|t| {
        let n = t.n();
        (Just(t), matrix(n, n, 10.0))
    }), rho in 0.0..0.5f64) {
        let s = SymMatrix::from_matrix((&a + a.transpose()) * 0.5).unwrap();
        let dm = build_data_matrices(&traj, &IntervalSet::uniform(0.2, 0.1, 20).unwrap(), rho).unwrap();
        let full = &dm.ix * linalg::vec_of(s.as_matrix());
        let reduced = &dm.ixhat * linalg::vecs(&s);
        for (f, r) in full.iter().zip(reduced.iter()) {
            prop_assert!((f - r).abs() <= 1e-10 * f.abs().max(1.0));
        }
    }

    #[test]
    fn phi_telescopes(traj in trajectory(), rho in 0.0..0.5f64, d in 1usize..=25) {
        let dm = build_data_matrices(&traj, &IntervalSet::uniform(0.3, 0.1, d).unwrap(), rho).unwrap();
        let end = 0.3 + 0.1 * d as f64;
        let whole = build_data_matrices(&traj, &IntervalSet::new(vec![0.3, end]).unwrap(), rho).unwrap();
        let summed = dm.i.row_iter().fold(DVector::zeros(dm.i.ncols()), |acc, r| acc + r.transpose());
        let target = whole.i.row(0).transpose();
        prop_assert!((&summed - &target).amax() <= 1e-12 * target.amax().max(1.0));
    }

    #[test]
    fn bounds_are_monotone(scale in 0.1..1e3f64, q in 0usize..500) {
        let bounds = BoundSchedule::new(scale).unwrap();
        prop_assert!(bounds.radius(q + 1) > bounds.radius(q));
        let inside = SymMatrix::scaled_identity(3, bounds.radius(q) * 0.999);
        let outside = SymMatrix::scaled_identity(3, bounds.radius(q) * 1.001);
        prop_assert!(bounds.contains(&inside, q));
        prop_assert!(!bounds.contains(&outside, q));
        prop_assert!(bounds.contains(&outside, q + 1));
    }
}

#[test]
fn step_schedule_partial_sums() {
    let step = StepSchedule::new(3.0).unwrap();
    let mut sum = 0.0;
    let mut sq = 0.0;
    for k in 0..1_000_000usize {
        let g = step.gamma(k);
        assert!(g > 0.0);
        assert!(k == 0 || g < step.gamma(k - 1));
        sum += g;
        sq += g * g;
        if (k + 1).is_power_of_two() {
            assert!(sum >= 3.0 * ((k + 1) as f64).ln(), "k = {k}");
        }
    }
    // Σ 9/(k+1)² < 9π²/6.
    assert!(sq < 9.0 * std::f64::consts::PI.powi(2) / 6.0);
    assert!(StepSchedule::new(0.0).is_err());
    assert!(BoundSchedule::new(-1.0).is_err());
}

#[test]
fn indefinite_matrices_leave_the_bound_set() {
    let bounds = BoundSchedule::default();
    let indefinite = SymMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
    assert!(!bounds.contains(&indefinite, 5));
    assert!(bounds.contains(&SymMatrix::zeros(2), 0));
}
