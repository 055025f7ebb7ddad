//! The lazy random walk on the `d_N`-hypercube and the path-counting
//! combinatorics behind the moment expansions.
//!
//! Each step draws one uniform integer in `0..=d_N`; the value `d_N` keeps
//! the walker in place, any other value flips that entry. Independent
//! walkers own ChaCha streams derived from `(seed, stream)`, so results do
//! not depend on how walkers are scheduled across threads.

use std::io::Write;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{EnsembleKind, SignVector};
use crate::error::{Error, Result};

pub const TRAJECTORY_SCHEMA: &str = "trajectory/v1";

/// Generator for stream `stream` of the run seeded with `seed`.
pub fn child_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A walker: current vertex, elapsed steps and its private generator.
#[derive(Debug, Clone)]
pub struct WalkState {
    pub signs: SignVector,
    pub t: u64,
    pub stream: u64,
    rng: ChaCha8Rng,
}

impl WalkState {
    pub fn new(signs: SignVector, seed: u64, stream: u64) -> Self {
        Self { signs, t: 0, stream, rng: child_rng(seed, stream) }
    }

    pub fn dimension(&self) -> usize {
        self.signs.len()
    }

    /// One lazy step; returns the flipped index, or `None` for the lazy branch.
    pub fn step(&mut self) -> Option<usize> {
        let d = self.dimension();
        let draw = self.rng.random_range(0..=d);
        self.step_with_draw(draw)
    }

    /// Applies a step with a forced draw in `0..=d_N` (`d_N` = stay).
    pub fn step_with_draw(&mut self, draw: usize) -> Option<usize> {
        let d = self.dimension();
        assert!(draw <= d, "draw {draw} outside 0..={d}");
        self.t += 1;
        if draw == d {
            None
        } else {
            self.signs.flip(draw);
            Some(draw)
        }
    }

    pub fn advance(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }
}

/// A named observable evaluated on the walker's position.
pub struct Observer {
    pub name: String,
    #[allow(clippy::type_complexity)]
    f: Box<dyn Fn(&SignVector) -> Vec<f64> + Send + Sync>,
}

impl Observer {
    pub fn new(name: impl Into<String>, f: impl Fn(&SignVector) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }

    /// Hamming distance to `reference`.
    pub fn hamming_from(reference: SignVector) -> Self {
        Self::new("hamming", move |s| vec![s.hamming(&reference) as f64])
    }

    pub fn observe(&self, s: &SignVector) -> Vec<f64> {
        (self.f)(s)
    }
}

/// Time series of one observable along one walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkTrajectory {
    pub walker_id: u64,
    pub observable: String,
    pub d_n: usize,
    pub times: Vec<u64>,
    pub values: Vec<Vec<f64>>,
}

impl WalkTrajectory {
    /// Scaled time `η = t / d_N`.
    pub fn etas(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.iter().map(|&t| t as f64 / self.d_n as f64)
    }
}

/// Default observation stride: `d_N / 10` steps, i.e. an `η` resolution of 0.1.
pub fn default_stride(d_n: usize) -> u64 {
    (d_n as u64 / 10).max(1)
}

/// Walks `steps` steps, sampling every observer at `t = 0` and every `stride` steps.
pub fn run(state: &mut WalkState, steps: u64, stride: u64, observers: &[Observer]) -> Vec<WalkTrajectory> {
    let stride = stride.max(1);
    let d_n = state.dimension();
    let mut out: Vec<WalkTrajectory> = observers
        .iter()
        .map(|o| WalkTrajectory {
            walker_id: state.stream,
            observable: o.name.clone(),
            d_n,
            times: Vec::new(),
            values: Vec::new(),
        })
        .collect();
    let record = |state: &WalkState, out: &mut Vec<WalkTrajectory>| {
        for (traj, obs) in out.iter_mut().zip(observers) {
            traj.times.push(state.t);
            traj.values.push(obs.observe(&state.signs));
        }
    };
    record(state, &mut out);
    let mut done = 0;
    while done < steps {
        let chunk = stride.min(steps - done);
        state.advance(chunk);
        done += chunk;
        if done % stride == 0 || done == steps {
            record(state, &mut out);
        }
    }
    out
}

/// Runs `walkers` independent walks from `start` (walker `w` uses stream `w`)
/// and returns their trajectories ordered by walker, then observer.
pub fn run_walkers(
    start: &SignVector,
    walkers: u64,
    seed: u64,
    steps: u64,
    stride: u64,
    observers: &[Observer],
) -> Vec<WalkTrajectory> {
    let per_walker: Vec<Vec<WalkTrajectory>> = (0..walkers)
        .into_par_iter()
        .map(|w| {
            let mut state = WalkState::new(start.clone(), seed, w);
            run(&mut state, steps, stride, observers)
        })
        .collect();
    per_walker.into_iter().flatten().collect()
}

/// Writes trajectories as CSV: `walker_id,t,eta,observable,value_0,…`.
pub fn write_trajectories_csv<W: Write>(mut w: W, header: &str, trajectories: &[WalkTrajectory]) -> Result<()> {
    writeln!(w, "# schema={TRAJECTORY_SCHEMA} {header}")?;
    let width = trajectories
        .iter()
        .flat_map(|t| t.values.iter().map(Vec::len))
        .max()
        .unwrap_or(1);
    write!(w, "walker_id,t,eta,observable")?;
    for k in 0..width {
        write!(w, ",value_{k}")?;
    }
    writeln!(w)?;
    for traj in trajectories {
        for ((t, eta), vals) in traj.times.iter().zip(traj.etas()).zip(&traj.values) {
            write!(w, "{},{},{:.6},{}", traj.walker_id, t, eta, traj.observable)?;
            for v in vals {
                write!(w, ",{v:.12e}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= BigUint::from(n - i);
        acc /= BigUint::from(i + 1);
    }
    acc
}

/// `|Ω_X| = C(d_N, X)`: the number of vertices at distance `X`.
pub fn count_ordered_paths(d_n: usize, x: usize) -> Result<BigUint> {
    if x > d_n {
        return Err(Error::Contract(format!("distance {x} exceeds d_N = {d_n}")));
    }
    Ok(binomial(d_n, x))
}

/// `Φ^(l)_X = C(d_N - l, X - l)`: paths of length `X` containing `l` given entries.
pub fn count_paths_containing(d_n: usize, x: usize, l: usize) -> Result<BigUint> {
    if l > x || x > d_n {
        return Err(Error::Contract(format!("need l <= X <= d_N, got l = {l}, X = {x}, d_N = {d_n}")));
    }
    Ok(binomial(d_n - l, x - l))
}

/// `Φ^(l)_X / |Ω_X|` as an exact rational.
pub fn containing_fraction(d_n: usize, x: usize, l: usize) -> Result<BigRational> {
    let num = count_paths_containing(d_n, x, l)?;
    let den = count_ordered_paths(d_n, x)?;
    Ok(BigRational::new(num.into(), den.into()))
}

/// `P_Δt(Δt) = Δt! C(d_N, Δt) / (d_N + 1)^Δt`, exactly.
pub fn prob_max_distance_exact(d_n: usize, dt: usize) -> Result<BigRational> {
    if dt > d_n {
        return Err(Error::Contract(format!("Δt = {dt} exceeds d_N = {d_n}")));
    }
    let mut num = BigUint::one();
    for j in 0..dt {
        num *= BigUint::from(d_n - j);
    }
    let den = BigUint::from(d_n + 1).pow(dt as u32);
    Ok(BigRational::new(num.into(), den.into()))
}

/// Floating-point `P_Δt(Δt) = Π_{j<Δt} (d_N - j)/(d_N + 1)`.
pub fn prob_max_distance(d_n: usize, dt: usize) -> Result<f64> {
    if dt > d_n {
        return Err(Error::Contract(format!("Δt = {dt} exceeds d_N = {d_n}")));
    }
    Ok((0..dt).map(|j| (d_n - j) as f64 / (d_n + 1) as f64).product())
}

/// `count` independent uniform vertices, draw `i` on stream `i`. The uniform
/// law is the walk's stationary law, so these are exact equilibrium samples.
pub fn stationary_samples(kind: EnsembleKind, count: usize, seed: u64) -> Vec<SignVector> {
    (0..count as u64).into_par_iter().map(|i| SignVector::random(kind, &mut child_rng(seed, i))).collect()
}

/// Convenience: starting vertex with all entries `+1`, as in the mixing plots.
pub fn all_positive(kind: EnsembleKind) -> SignVector {
    SignVector::uniform(kind, true)
}
