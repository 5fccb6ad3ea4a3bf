use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{check_state, divergence_bound, InitialLaw, MeanTrajectory, Policy, TimeGrid};
use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::scalar::Real;

/// Paths per reduction block of [`monte_carlo_mean`]. Block sums are
/// accumulated in path order and combined in block order, so the result does
/// not depend on the thread count.
pub const BLOCK_PATHS: usize = 4096;

/// Paths advanced in lockstep inside a block.
const LANES: usize = 64;

/// Steps of increments drawn per lane at a time.
const DRAW_CHUNK: usize = 32;

/// Generator for path `index` under `seed`: one ChaCha stream per path, drawn
/// in step order.
pub(crate) fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Euler–Maruyama stepper with flat row-major coefficients.
struct Kernel<T> {
    n: usize,
    p: usize,
    /// `A − BK`, row-major.
    closed: Vec<T>,
    /// `√dt · C`, row-major.
    diffusion: Vec<T>,
    /// `B e(t_k)` for every grid point, column per point.
    forcing: Vec<T>,
    grid: TimeGrid<T>,
}

impl<T: Real> Kernel<T> {
    fn new(model: &SystemModel<T>, policy: &Policy<T>, grid: TimeGrid<T>) -> Result<Self> {
        policy.check(model)?;
        let (n, p) = (model.n(), model.p());
        let closed_m = model.closed_loop(&policy.gain);
        let closed = (0..n * n).map(|k| closed_m[(k / n, k % n)]).collect();
        let sqrt_dt = grid.dt().sqrt();
        let c = model.c();
        let diffusion = (0..n * p).map(|k| c[(k / p, k % p)] * sqrt_dt).collect();
        let mut forcing = Vec::with_capacity(n * grid.len());
        for t in grid.points() {
            forcing.extend((model.b() * policy.exploration_at(t)).iter().copied());
        }
        Ok(Self { n, p, closed, diffusion, forcing, grid })
    }

    /// Advances `lanes` paths in lockstep. States are lane-major
    /// (`x[i * lanes + l]` is component `i` of lane `l`); lane `l` draws its
    /// increments from `rngs[l]`. `sink` sees every grid state.
    fn run<R: Rng, S: FnMut(usize, &[T])>(&self, x0: &[T], rngs: &mut [R], mut sink: S) -> Result<()> {
        let (n, p, lanes) = (self.n, self.p, rngs.len());
        let dt = self.grid.dt();
        let bounds: Vec<T> = (0..lanes)
            .map(|l| {
                let start = DVector::from_iterator(n, (0..n).map(|i| x0[i * lanes + l]));
                let b = divergence_bound(&start);
                b * b
            })
            .collect();
        let mut x = x0.to_vec();
        let mut next = vec![T::zero(); n * lanes];
        let mut draws = vec![T::zero(); DRAW_CHUNK * p * lanes];
        let mut sq = vec![T::zero(); lanes];
        sink(0, &x);
        for k in 0..self.grid.steps() {
            let slot = k % DRAW_CHUNK;
            if slot == 0 {
                // each lane consumes its own stream in step order
                let chunk = DRAW_CHUNK.min(self.grid.steps() - k);
                for (l, rng) in rngs.iter_mut().enumerate() {
                    for s in 0..chunk {
                        for j in 0..p {
                            draws[(s * p + j) * lanes + l] = T::lit(rng.sample::<f64, _>(StandardNormal));
                        }
                    }
                }
            }
            let z = &draws[slot * p * lanes..(slot + 1) * p * lanes];
            let forcing = &self.forcing[k * n..(k + 1) * n];
            for i in 0..n {
                let out = &mut next[i * lanes..(i + 1) * lanes];
                out.fill(forcing[i]);
                for j in 0..n {
                    let f = self.closed[i * n + j];
                    for (o, &xv) in out.iter_mut().zip(&x[j * lanes..(j + 1) * lanes]) {
                        *o += f * xv;
                    }
                }
                for (o, &xv) in out.iter_mut().zip(&x[i * lanes..(i + 1) * lanes]) {
                    *o = xv + *o * dt;
                }
                for j in 0..p {
                    let c = self.diffusion[i * p + j];
                    for (o, &zv) in out.iter_mut().zip(&z[j * lanes..(j + 1) * lanes]) {
                        *o += c * zv;
                    }
                }
            }
            std::mem::swap(&mut x, &mut next);
            sq.fill(T::zero());
            for i in 0..n {
                for (s, &v) in sq.iter_mut().zip(&x[i * lanes..(i + 1) * lanes]) {
                    *s += v * v;
                }
            }
            if sq.iter().zip(&bounds).any(|(s, b)| !(s.is_finite() && s <= b)) {
                return Err(Error::Divergence { step: k + 1, time: self.grid.point(k + 1).as_f64() });
            }
            sink(k + 1, &x);
        }
        Ok(())
    }
}

/// Euler–Maruyama path `index` of `dx = (Ax + Bu)dt + C dW` with
/// `u = −Kx + e(t)` and `x0` drawn from `law`; column per grid point.
pub fn simulate_path<T: Real>(
    model: &SystemModel<T>,
    law: &InitialLaw<T>,
    policy: &Policy<T>,
    grid: TimeGrid<T>,
    seed: u64,
    index: u64,
) -> Result<DMatrix<T>> {
    law.check(model.n())?;
    let kernel = Kernel::new(model, policy, grid)?;
    let mut rng = path_rng(seed, index);
    let x0 = law.sample(&mut rng);
    let mut out = DMatrix::zeros(model.n(), grid.len());
    kernel.run(x0.as_slice(), std::slice::from_mut(&mut rng), |k, x| out.column_mut(k).copy_from_slice(x))?;
    Ok(out)
}

/// Single agent path from a deterministic initial state (path index 0).
pub fn simulate_agent_sde<T: Real>(
    model: &SystemModel<T>,
    x0: &DVector<T>,
    policy: &Policy<T>,
    grid: TimeGrid<T>,
    seed: u64,
) -> Result<DMatrix<T>> {
    check_state(model, x0)?;
    simulate_path(model, &InitialLaw::Fixed(x0.clone()), policy, grid, seed, 0)
}

/// Monte-Carlo estimate of the mean trajectory over `samples` independent
/// paths; `V` is recovered as `−K X + e(t)`.
pub fn monte_carlo_mean<T: Real>(
    model: &SystemModel<T>,
    law: &InitialLaw<T>,
    policy: &Policy<T>,
    grid: TimeGrid<T>,
    samples: usize,
    seed: u64,
) -> Result<MeanTrajectory<T>> {
    if samples == 0 {
        return Err(Error::Precondition("Monte-Carlo mean needs at least one sample".into()));
    }
    law.check(model.n())?;
    let kernel = Kernel::new(model, policy, grid)?;
    let n = model.n();
    let width = n * grid.len();
    let block_sum = |block: usize| -> Result<Vec<T>> {
        let mut sum = vec![T::zero(); width];
        let end = ((block + 1) * BLOCK_PATHS).min(samples);
        for first in (block * BLOCK_PATHS..end).step_by(LANES) {
            let lanes = LANES.min(end - first);
            let mut rngs: Vec<ChaCha8Rng> = (first..first + lanes).map(|i| path_rng(seed, i as u64)).collect();
            let mut x0 = vec![T::zero(); n * lanes];
            for (l, rng) in rngs.iter_mut().enumerate() {
                for (i, v) in law.sample(rng).iter().enumerate() {
                    x0[i * lanes + l] = *v;
                }
            }
            kernel.run(&x0, &mut rngs, |k, x| {
                for (i, s) in sum[k * n..(k + 1) * n].iter_mut().enumerate() {
                    for v in &x[i * lanes..(i + 1) * lanes] {
                        *s += *v;
                    }
                }
            })?;
        }
        Ok(sum)
    };
    let blocks = samples.div_ceil(BLOCK_PATHS);
    let wave = 2 * rayon::current_num_threads();
    let mut total = vec![T::zero(); width];
    for start in (0..blocks).step_by(wave) {
        let sums: Vec<Vec<T>> = (start..(start + wave).min(blocks)).into_par_iter().map(block_sum).collect::<Result<_>>()?;
        for sum in sums {
            for (t, s) in total.iter_mut().zip(sum) {
                *t += s;
            }
        }
    }
    let scale = T::one() / T::lit(samples as f64);
    let x = DMatrix::from_iterator(n, grid.len(), total.into_iter().map(|s| s * scale));
    MeanTrajectory::from_states(grid, x, policy)
}
