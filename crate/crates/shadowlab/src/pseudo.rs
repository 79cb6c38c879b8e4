//! Random d-pseudotrajectories of the skew product.
//!
//! The generator is a Markov chain: given the current point, the next one
//! is drawn uniformly from the radius-`d` ball around its image. Under
//! the max metric on base-times-fiber that ball factorizes, so the step
//! splits into an independent symbolic ball sample and a uniform fiber
//! perturbation on an interval of length `2d`.

use std::io::Write;

use rand::Rng;

use crate::cocycle::{LambdaTable, SkewState};
use crate::error::{Error, Result};
use crate::symbolic::{agreement_radius, ball_sample, distance, sample_point, shift, SymbolPoint};

/// A length-`N` random d-pseudotrajectory together with its generation
/// parameters. Consecutive states satisfy
/// `dist(states[j+1], f(states[j])) < d` at the stored resolution.
#[derive(Debug, Clone)]
pub struct PseudoTrajectory {
    d: f64,
    states: Vec<SkewState>,
    seed: u64,
}

impl PseudoTrajectory {
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn states(&self) -> &[SkewState] {
        &self.states
    }

    /// Number of points (steps plus one).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Bookkeeping label of the random stream that generated this
    /// trajectory.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fiber(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.x).collect()
    }

    /// Assembles a trajectory from explicit states; callers are
    /// responsible for the pseudotrajectory property (see
    /// [`check_pseudotrajectory`]).
    pub fn from_states(d: f64, states: Vec<SkewState>, seed: u64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidParameters(
                "a trajectory needs at least one point".into(),
            ));
        }
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidParameters(format!(
                "perturbation radius d={d} outside (0, 1)"
            )));
        }
        Ok(PseudoTrajectory { d, states, seed })
    }
}

/// Symmetric half-width of the windows the generator maintains:
/// enough for multiplier evaluation, ball sampling after a shift, and
/// the downstream splice.
pub fn window_halfwidth(depth: u32, d: f64) -> Result<i64> {
    let n = agreement_radius(d)?;
    Ok(i64::from(depth.max(n)) + 1)
}

fn validate_d(table: &LambdaTable, d: f64) -> Result<()> {
    let bound = f64::powi(2.0, -(table.depth() as i32 + 1));
    if !(d > 0.0 && d < 1.0 && d < bound) {
        return Err(Error::InvalidPerturbation {
            d,
            depth: table.depth(),
        });
    }
    Ok(())
}

/// Generates a random d-pseudotrajectory of `len` points starting at
/// `q0`.
///
/// Each step applies the skew product and then perturbs: the symbolic
/// component is resampled in the radius-`d` ball around the shifted
/// point, the fiber coordinate receives an additive `d * u` with `u`
/// uniform on the open interval (-1, 1). Symbolic and fiber draws come
/// from two separate streams so that trial-level stream splitting stays
/// reproducible.
///
/// Requires `0 < d < min(1, 2^-(t+1))` and `q0.w` covering the window
/// `[-W, W]` for `W = window_halfwidth(t, d)`.
pub fn generate<R: Rng + ?Sized>(
    table: &LambdaTable,
    q0: SkewState,
    d: f64,
    len: usize,
    seed: u64,
    symbolic_rng: &mut R,
    fiber_rng: &mut R,
) -> Result<PseudoTrajectory> {
    validate_d(table, d)?;
    if len == 0 {
        return Err(Error::InvalidParameters(
            "trajectory length must be at least 1".into(),
        ));
    }
    if !q0.x.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "starting fiber coordinate {} is not finite",
            q0.x
        )));
    }
    let w_half = window_halfwidth(table.depth(), d)?;
    if !q0.w.covers(-w_half, w_half) {
        return Err(Error::InsufficientResolution {
            op: "generate",
            index: -w_half,
            detail: format!(
                "starting window [{}, {}] must cover [-{w_half}, {w_half}]",
                q0.w.lo(),
                q0.w.hi()
            ),
        });
    }
    let mut states = Vec::with_capacity(len);
    states.push(q0);
    for _ in 1..len {
        let prev = states.last().unwrap();
        let lambda = table.eval(&prev.w)?;
        let w_next = ball_sample(&shift(&prev.w), d, -w_half, w_half, symbolic_rng)?;
        let u = open_unit(fiber_rng);
        let x_next = lambda * prev.x + d * u;
        states.push(SkewState::new(w_next, x_next));
    }
    Ok(PseudoTrajectory { d, states, seed })
}

/// Uniform draw from the open interval (-1, 1); the closed endpoint has
/// probability zero but would break the strict residual bound, so it is
/// redrawn.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = rng.random_range(-1.0..1.0);
        if u != -1.0 {
            return u;
        }
    }
}

/// An exact orbit packaged as a pseudotrajectory (all perturbations
/// zero). `q0.w` must store `[-W, W + len - 1]` so every shifted view
/// keeps the full working window.
pub fn generate_exact(
    table: &LambdaTable,
    q0: SkewState,
    d: f64,
    len: usize,
    seed: u64,
) -> Result<PseudoTrajectory> {
    validate_d(table, d)?;
    let w_half = window_halfwidth(table.depth(), d)?;
    if !q0.w.covers(-w_half, w_half + len as i64 - 1) {
        return Err(Error::InsufficientResolution {
            op: "generate_exact",
            index: w_half + len as i64 - 1,
            detail: "exact orbits shrink the window by one index per step".into(),
        });
    }
    let mut states = Vec::with_capacity(len);
    let mut x = q0.x;
    for j in 0..len {
        let w = q0.w.shifted_by(j as i64);
        let lambda = table.eval(&w)?;
        states.push(SkewState::new(w, x));
        x *= lambda;
    }
    Ok(PseudoTrajectory { d, states, seed })
}

/// Symbolic-only pseudotrajectory of the shift: the base marginal of the
/// generator, used where the fiber plays no role.
pub fn generate_symbolic<R: Rng + ?Sized>(
    w0: SymbolPoint,
    d: f64,
    len: usize,
    rng: &mut R,
) -> Result<Vec<SymbolPoint>> {
    let n = agreement_radius(d)?;
    let w_half = i64::from(n) + 1;
    if !w0.covers(-w_half, w_half) {
        return Err(Error::InsufficientResolution {
            op: "generate_symbolic",
            index: -w_half,
            detail: format!("starting window must cover [-{w_half}, {w_half}]"),
        });
    }
    let mut ws = Vec::with_capacity(len);
    ws.push(w0);
    for _ in 1..len {
        let prev = ws.last().unwrap();
        ws.push(ball_sample(&shift(prev), d, -w_half, w_half, rng)?);
    }
    Ok(ws)
}

/// Convenience: a fresh product-measure starting point sized for the
/// generator, fiber at zero.
pub fn sample_start<R: Rng + ?Sized>(
    table: &LambdaTable,
    d: f64,
    rng: &mut R,
) -> Result<SkewState> {
    let w_half = window_halfwidth(table.depth(), d)?;
    Ok(SkewState::new(sample_point(-w_half, w_half, rng)?, 0.0))
}

/// Normalized step residuals `r_j = (x_j - lambda(w_{j-1}) x_{j-1}) / d`
/// for `j = 1 .. N-1`. Every residual of a valid trajectory satisfies
/// `|r_j| < 1`; anything else reports corruption.
pub fn residuals(table: &LambdaTable, traj: &PseudoTrajectory) -> Result<Vec<f64>> {
    let states = traj.states();
    let mut rs = Vec::with_capacity(states.len().saturating_sub(1));
    for j in 1..states.len() {
        let lambda = table.eval(&states[j - 1].w)?;
        let r = (states[j].x - lambda * states[j - 1].x) / traj.d();
        if !(r.abs() < 1.0) {
            return Err(Error::CorruptedTrajectory { index: j, value: r });
        }
        rs.push(r);
    }
    Ok(rs)
}

/// Moves the fiber start to zero while keeping the symbolic components
/// and all residuals: subtracts the homogeneous solution through `x_0`,
/// i.e. `x'_j = x_j - Phi_j x_0` with `Phi_0 = 1`,
/// `Phi_{j+1} = lambda(w_j) Phi_j`.
///
/// This is the measure-preserving bijection between trajectories started
/// at `(w, x_0)` and at `(w, 0)`. The subtraction is evaluated through
/// the step increments (`x'_{j+1} = lambda_j x'_j + (x_{j+1} - lambda_j x_j)`),
/// so the homogeneous part cancels without amplifying rounding when
/// `Phi_j` takes large excursions. Idempotent: a zero start returns the
/// trajectory unchanged.
pub fn normalize_start(table: &LambdaTable, traj: &PseudoTrajectory) -> Result<PseudoTrajectory> {
    let states = traj.states();
    if states[0].x == 0.0 {
        return Ok(traj.clone());
    }
    let mut out = Vec::with_capacity(states.len());
    out.push(SkewState::new(states[0].w.clone(), 0.0));
    for j in 1..states.len() {
        let lambda = table.eval(&states[j - 1].w)?;
        let increment = states[j].x - lambda * states[j - 1].x;
        let x = lambda * out[j - 1].x + increment;
        out.push(SkewState::new(states[j].w.clone(), x));
    }
    Ok(PseudoTrajectory {
        d: traj.d(),
        states: out,
        seed: traj.seed(),
    })
}

/// Verifies the d-pseudotrajectory property step by step: both the
/// symbolic distance to the shifted predecessor and the fiber deviation
/// from the multiplied predecessor must stay below `d`.
pub fn check_pseudotrajectory(table: &LambdaTable, traj: &PseudoTrajectory) -> Result<()> {
    let states = traj.states();
    let d = traj.d();
    for j in 1..states.len() {
        let prev = &states[j - 1];
        let lambda = table.eval(&prev.w)?;
        let fiber_dev = (states[j].x - lambda * prev.x).abs();
        if !(fiber_dev < d) {
            return Err(Error::CorruptedTrajectory {
                index: j,
                value: fiber_dev / d,
            });
        }
        let sym = distance(&states[j].w, &shift(&prev.w))?;
        if !(sym.value() < d) {
            return Err(Error::CorruptedTrajectory {
                index: j,
                value: sym.value() / d,
            });
        }
    }
    Ok(())
}

/// Writes one record per step: index, window origin, the window as a
/// 0/1 string, the fiber coordinate, and the residual (blank on the
/// first record), tab-separated.
pub fn write_dump<W: Write>(
    table: &LambdaTable,
    traj: &PseudoTrajectory,
    out: &mut W,
) -> Result<()> {
    let rs = residuals(table, traj)?;
    for (j, s) in traj.states().iter().enumerate() {
        let bits: String = (s.w.lo()..=s.w.hi())
            .map(|i| if s.w.get(i).unwrap() == 1 { '1' } else { '0' })
            .collect();
        let r = if j == 0 {
            String::new()
        } else {
            format!("{}", rs[j - 1])
        };
        writeln!(out, "{j}\t{}\t{bits}\t{}\t{r}", s.w.lo(), s.x)?;
    }
    Ok(())
}
