//! System model of the game, assumption checks, and the model-based
//! reference solvers.

mod examples;
mod pi;
mod vi;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::scalar::Real;

pub use examples::{example1, example2, Example, ReferenceSolution};
pub use pi::{model_pi, IterationHistory, PiOptions, PiRecord, PiSolution};
pub use vi::{model_vi, BoundSchedule, StepSchedule, ViHistory, ViOptions, ViRecord, ViSolution};

pub(crate) use pi::{policy_iteration, Branch};
pub(crate) use vi::value_iteration;

/// Relative singular-value cutoff for the Hautus rank test. Looser than
/// [`linalg::RANK_RTOL`] because the test matrix is built from computed
/// eigenvalues.
const HAUTUS_RTOL: f64 = 1e-8;

/// Agent dynamics `dx = (Ax + Bu)dt + C dW` with running cost weights `Q`, `R`
/// and discount `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    q: SymMatrix<T>,
    r: SymMatrix<T>,
    rho: T,
}

impl<T: Real> SystemModel<T> {
    /// Validates dimensions, finiteness, `Q ≻ 0`, `R ≻ 0` and `rho ≥ 0`.
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        q: SymMatrix<T>,
        r: SymMatrix<T>,
        rho: T,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!("B must be {n}xm with m >= 1, got {}x{}", b.nrows(), b.ncols())));
        }
        if c.nrows() != n || c.ncols() == 0 {
            return Err(Error::Dimension(format!("C must be {n}xp with p >= 1, got {}x{}", c.nrows(), c.ncols())));
        }
        if q.dim() != n {
            return Err(Error::Dimension(format!("Q must be {n}x{n}, got {0}x{0}", q.dim())));
        }
        if r.dim() != b.ncols() {
            return Err(Error::Dimension(format!("R must be {0}x{0}, got {1}x{1}", b.ncols(), r.dim())));
        }
        let finite = |m: &DMatrix<T>| m.iter().all(|x| x.is_finite());
        if !(finite(&a) && finite(&b) && finite(&c) && finite(&q) && finite(&r)) {
            return Err(Error::Precondition("system matrices must have finite entries".into()));
        }
        if !rho.is_finite() || rho < T::zero() {
            return Err(Error::Precondition(format!("discount rho must be finite and non-negative, got {rho}")));
        }
        if !linalg::is_positive_definite(&q)? {
            return Err(Error::Precondition("Q must be positive definite".into()));
        }
        if !linalg::is_positive_definite(&r)? {
            return Err(Error::Precondition("R must be positive definite".into()));
        }
        Ok(Self { a, b, c, q, r, rho })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn q(&self) -> &SymMatrix<T> {
        &self.q
    }

    pub fn r(&self) -> &SymMatrix<T> {
        &self.r
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Noise dimension.
    pub fn p(&self) -> usize {
        self.c.ncols()
    }

    /// `A − BK`.
    pub fn closed_loop(&self, gain: &DMatrix<T>) -> DMatrix<T> {
        &self.a - &self.b * gain
    }

    /// `A − BK − 0.5ρI`, the generator of the discounted closed loop.
    pub fn discounted_closed_loop(&self, gain: &DMatrix<T>) -> DMatrix<T> {
        let n = self.n();
        self.closed_loop(gain) - DMatrix::identity(n, n) * (self.rho * T::lit(0.5))
    }

    pub fn check_gain_shape(&self, gain: &DMatrix<T>, what: &str) -> Result<()> {
        if gain.shape() != (self.m(), self.n()) {
            return Err(Error::Dimension(format!(
                "{what} must be {}x{}, got {}x{}",
                self.m(),
                self.n(),
                gain.nrows(),
                gain.ncols()
            )));
        }
        Ok(())
    }
}

/// Feedback gains `(K, K_Y)` of the decentralized strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPair<T: Real> {
    pub k: DMatrix<T>,
    pub k_y: DMatrix<T>,
}

/// Value matrices `(P, Y)` of the two Riccati equations.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiPair<T: Real> {
    pub p: SymMatrix<T>,
    pub y: SymMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assumption1Report {
    /// No eigenvalue of `A` has real part equal to `rho`.
    pub spectrum_ok: bool,
    /// `(A, B)` passes the Hautus test.
    pub stabilizable: bool,
}

impl Assumption1Report {
    pub fn holds(&self) -> bool {
        self.spectrum_ok && self.stabilizable
    }
}

pub fn validate_assumption1<T: Real>(model: &SystemModel<T>) -> Result<Assumption1Report> {
    let a = model.a();
    let n = model.n();
    let scale = T::one() + linalg::norm2(a);
    let tol = scale * T::lit(1e-9);
    let eigs = linalg::complex_eigenvalues(a)?;

    let spectrum_ok = eigs.iter().all(|l| (l.re - model.rho()).abs() > tol);

    let mut stabilizable = true;
    for lambda in eigs.iter().filter(|l| l.re >= -tol) {
        let m = model.m();
        let test = DMatrix::<Complex<T>>::from_fn(n, n + m, |i, j| {
            if j < n {
                let diag = if i == j { *lambda } else { Complex::new(T::zero(), T::zero()) };
                Complex::new(a[(i, j)], T::zero()) - diag
            } else {
                Complex::new(model.b()[(i, j - n)], T::zero())
            }
        });
        let sv = test
            .try_svd(false, false, T::default_epsilon(), 0)
            .ok_or_else(|| Error::Numerical("SVD did not converge in Hautus test".into()))?
            .singular_values;
        let cut = scale * T::lit(HAUTUS_RTOL);
        if sv.iter().filter(|&&s| s > cut).count() < n {
            stabilizable = false;
            break;
        }
    }
    Ok(Assumption1Report { spectrum_ok, stabilizable })
}

/// `A − 0.5ρI` is Hurwitz.
pub fn validate_assumption2<T: Real>(model: &SystemModel<T>) -> Result<bool> {
    let n = model.n();
    let shifted = model.a() - DMatrix::identity(n, n) * (model.rho() * T::lit(0.5));
    linalg::is_hurwitz(&shifted, T::zero())
}

/// Computes `R⁻¹ X` by Cholesky factorization of `R`.
pub fn apply_r_inverse<T: Real>(r: &SymMatrix<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    let chol = r
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Precondition("R must be positive definite".into()))?;
    Ok(chol.solve(x))
}

/// `K = R⁻¹BᵀP`, `K_Y = R⁻¹BᵀY`.
pub fn decentralized_gains<T: Real>(pair: &RiccatiPair<T>, model: &SystemModel<T>) -> Result<GainPair<T>> {
    let bt = model.b().transpose();
    Ok(GainPair {
        k: apply_r_inverse(model.r(), &(&bt * pair.p.as_matrix()))?,
        k_y: apply_r_inverse(model.r(), &(&bt * pair.y.as_matrix()))?,
    })
}

/// Frobenius norms of the residuals of both Riccati equations:
/// `ρP − PA − AᵀP + PBR⁻¹BᵀP − Q` and `ρY − YA − AᵀY + YBR⁻¹BᵀY`.
pub fn are_residual<T: Real>(model: &SystemModel<T>, pair: &RiccatiPair<T>) -> Result<(T, T)> {
    let a = model.a();
    let at = a.transpose();
    let b = model.b();
    let quad = |s: &DMatrix<T>| -> Result<DMatrix<T>> {
        let bts = b.transpose() * s;
        Ok(bts.transpose() * apply_r_inverse(model.r(), &bts)?)
    };
    let p = pair.p.as_matrix();
    let y = pair.y.as_matrix();
    let res_p = p * model.rho() - p * a - &at * p + quad(p)? - model.q().as_matrix();
    let res_y = y * model.rho() - y * a - &at * y + quad(y)?;
    Ok((res_p.norm(), res_y.norm()))
}
