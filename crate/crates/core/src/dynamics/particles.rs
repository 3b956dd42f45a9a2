//! Singular-value SDE on the symmetric system `λ_{-N}, …, λ_N` with
//! `λ_{-i} = -λ_i` and `B_{-i} = -B_i`. Only the positive half is stored.
//!
//! Euler–Maruyama with adaptive refinement: a step that would move some
//! particle by more than a quarter of its smaller neighbor gap is split in
//! two along a Brownian bridge, down to `max_depth` levels.

use std::io::Write;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;

use super::gamma::{GammaSource, GammaTable};
use super::FlowConfig;
use crate::error::{Error, Result};
use crate::linalg::Field;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParticleConfig {
    pub n: usize,
    pub field: Field,
    pub dt: f64,
    pub t_end: f64,
    /// `N^{-c}`, the clamp of the interpolating process.
    pub gamma_cap: f64,
    pub max_depth: u32,
    pub gap_floor: f64,
    /// Record every `stride`-th step in trajectories.
    pub stride: usize,
    pub noise: bool,
}

impl ParticleConfig {
    pub fn from_flow(cfg: &FlowConfig) -> Self {
        Self {
            n: cfg.n,
            field: cfg.field,
            dt: cfg.dt,
            t_end: cfg.tau,
            gamma_cap: cfg.gamma_cap(),
            max_depth: 30,
            gap_floor: 1e-14,
            stride: 1,
            noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.dt <= self.t_end) {
            return Err(Error::invalid(format!("need 0 < dt ≤ t_end, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::invalid("trajectory stride must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleState {
    pub t: f64,
    /// `λ_1 < … < λ_N`; the negative half is `-λ`.
    pub lambda: Vec<f64>,
    /// Ordering violations fixed by sorting.
    pub repairs: usize,
    /// Real field: crossings of `λ_1` through zero, reflected.
    pub reflections: usize,
    /// Bridge refinements taken.
    pub refinements: usize,
}

impl ParticleState {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::invalid("need at least one particle"));
        }
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid("initial positions must be finite and nonnegative"));
        }
        if lambda.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("initial positions must be strictly increasing"));
        }
        Ok(Self { t: 0.0, lambda, repairs: 0, reflections: 0, refinements: 0 })
    }

    /// `-λ_N, …, -λ_1, λ_1, …, λ_N`.
    pub fn full(&self) -> Vec<f64> {
        self.lambda.iter().rev().map(|l| -l).chain(self.lambda.iter().copied()).collect()
    }
}

/// Pair coefficient in front of `1/(λ_i - λ_j)`.
#[derive(Debug, Clone, Copy)]
pub enum Interaction<'a> {
    /// `1` (reference process).
    Free,
    /// `1 - γ_ij`.
    Overlap(&'a GammaTable),
    /// `1 - α·min(γ_ij, cap)`.
    Interpolating { gamma: &'a GammaTable, alpha: f64, cap: f64 },
}

impl Interaction<'_> {
    fn coefficient(&self, i: usize, j: usize) -> f64 {
        match self {
            Interaction::Free => 1.0,
            Interaction::Overlap(g) => 1.0 - g.get(i, j),
            Interaction::Interpolating { gamma, alpha, cap } => 1.0 - alpha * gamma.get(i, j).min(*cap),
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let g = match self {
            Interaction::Free => return Ok(()),
            Interaction::Overlap(g) => g,
            Interaction::Interpolating { gamma, alpha, .. } => {
                if !(0.0..=1.0).contains(alpha) {
                    return Err(Error::invalid(format!("α must lie in [0, 1], got {alpha}")));
                }
                gamma
            }
        };
        if g.n() != n {
            return Err(Error::invalid(format!("γ table is {}×{} but there are {n} particles", g.n(), g.n())));
        }
        Ok(())
    }
}

fn drift(lambda: &[f64], inter: &Interaction<'_>, field: Field) -> Vec<f64> {
    let n = lambda.len();
    let scale = 1.0 / (2.0 * n as f64);
    (0..n)
        .map(|i| {
            let li = lambda[i];
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    let lj = lambda[j];
                    s += inter.coefficient(i, j) * (1.0 / (li - lj) + 1.0 / (li + lj));
                }
            }
            if field == Field::Complex {
                s += inter.coefficient(i, i) / (2.0 * li);
            }
            scale * s
        })
        .collect()
}

fn gaps(lambda: &[f64], field: Field) -> Vec<f64> {
    let n = lambda.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 {
                lambda[i] - lambda[i - 1]
            } else if field == Field::Complex {
                2.0 * lambda[0]
            } else {
                f64::INFINITY
            };
            let right = if i + 1 < n { lambda[i + 1] - lambda[i] } else { f64::INFINITY };
            left.min(right)
        })
        .collect()
}

struct Stepper<'a, 'b> {
    inter: Interaction<'a>,
    cfg: &'b ParticleConfig,
}

impl Stepper<'_, '_> {
    /// Advances by `h` with Brownian increments `db` (variance `h` each).
    fn advance(&self, state: &mut ParticleState, db: &[f64], h: f64, depth: u32, rng: &mut dyn RngCore) -> Result<()> {
        let noise_scale = 1.0 / (2.0 * self.cfg.n as f64).sqrt();
        let d = drift(&state.lambda, &self.inter, self.cfg.field);
        let proposal: Vec<f64> =
            state.lambda.iter().zip(&d).zip(db).map(|((l, a), b)| l + a * h + noise_scale * b).collect();
        let g = gaps(&state.lambda, self.cfg.field);
        let calm = proposal.iter().zip(&state.lambda).zip(&g).all(|((p, l), gap)| (p - l).abs() <= 0.25 * gap);
        if calm || depth >= self.cfg.max_depth {
            state.lambda = proposal;
            state.t += h;
            return self.tidy(state);
        }
        state.refinements += 1;
        let half = 0.5 * h;
        let spread = (0.25 * h).sqrt();
        let mid: Vec<f64> = db.iter().map(|b| 0.5 * b + spread * rng.sample::<f64, _>(StandardNormal)).collect();
        let rest: Vec<f64> = db.iter().zip(&mid).map(|(b, m)| b - m).collect();
        self.advance(state, &mid, half, depth + 1, rng)?;
        self.advance(state, &rest, half, depth + 1, rng)
    }

    fn tidy(&self, state: &mut ParticleState) -> Result<()> {
        if state.lambda[0] < 0.0 {
            state.lambda[0] = -state.lambda[0];
            match self.cfg.field {
                Field::Real => state.reflections += 1,
                Field::Complex => state.repairs += 1,
            }
        }
        if state.lambda.windows(2).any(|w| w[1] < w[0]) {
            state.lambda.sort_by(f64::total_cmp);
            state.repairs += 1;
        }
        if state.lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::Collision { gap: 0.0, t: state.t });
        }
        let mut gap = crate::ensembles::min_gap(&state.lambda);
        if self.cfg.field == Field::Complex {
            gap = gap.min(2.0 * state.lambda[0]);
        }
        if gap < self.cfg.gap_floor {
            return Err(Error::Collision { gap, t: state.t });
        }
        Ok(())
    }
}

fn step_length(state: &ParticleState, cfg: &ParticleConfig) -> f64 {
    cfg.dt.min(cfg.t_end - state.t).max(0.0)
}

/// Brownian increments for a step of length `h`, one per positive index.
pub fn draw_increments(n: usize, h: f64, noise: bool, rng: &mut dyn RngCore) -> Vec<f64> {
    let sd = h.sqrt();
    (0..n).map(|_| if noise { sd * rng.sample::<f64, _>(StandardNormal) } else { 0.0 }).collect()
}

/// One step with given increments; used to couple processes through shared noise.
pub fn sv_sde_step_with(
    state: &mut ParticleState,
    db: &[f64],
    h: f64,
    inter: Interaction<'_>,
    cfg: &ParticleConfig,
    rng: &mut dyn RngCore,
) -> Result<()> {
    inter.check(state.lambda.len())?;
    if db.len() != state.lambda.len() {
        return Err(Error::invalid("one increment per particle required"));
    }
    Stepper { inter, cfg }.advance(state, db, h, 0, rng)
}

/// One step of length `min(dt, t_end - t)` with fresh noise.
pub fn sv_sde_step(
    state: &mut ParticleState,
    inter: Interaction<'_>,
    cfg: &ParticleConfig,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let h = step_length(state, cfg);
    let db = draw_increments(state.lambda.len(), h, cfg.noise, rng);
    sv_sde_step_with(state, &db, h, inter, cfg, rng)
}

pub fn interpolating_step(
    state: &mut ParticleState,
    gamma: &GammaTable,
    alpha: f64,
    cfg: &ParticleConfig,
    rng: &mut dyn RngCore,
) -> Result<()> {
    sv_sde_step(state, Interaction::Interpolating { gamma, alpha, cap: cfg.gamma_cap }, cfg, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleTrajectory {
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    pub final_state: ParticleState,
}

impl ParticleTrajectory {
    fn start(state: &ParticleState) -> Self {
        Self { times: vec![state.t], paths: vec![state.lambda.clone()], final_state: state.clone() }
    }

    fn record(&mut self, state: &ParticleState) {
        self.times.push(state.t);
        self.paths.push(state.lambda.clone());
    }
}

fn run_with(
    mut state: ParticleState,
    cfg: &ParticleConfig,
    rng: &mut dyn RngCore,
    mut inter_at: impl FnMut(f64) -> Result<Option<GammaTable>>,
    mode: impl Fn(Option<&GammaTable>) -> Interaction<'_>,
) -> Result<ParticleTrajectory> {
    cfg.validate()?;
    if state.lambda.len() != cfg.n {
        return Err(Error::invalid(format!("{} particles but N = {}", state.lambda.len(), cfg.n)));
    }
    let mut traj = ParticleTrajectory::start(&state);
    let steps = (cfg.t_end / cfg.dt).ceil() as usize;
    for k in 1..=steps {
        let table = inter_at(state.t)?;
        sv_sde_step(&mut state, mode(table.as_ref()), cfg, rng)?;
        if k == steps {
            state.t = cfg.t_end;
        }
        if k % cfg.stride == 0 || k == steps {
            traj.record(&state);
        }
    }
    traj.final_state = state;
    Ok(traj)
}

/// Integrates the SDE to `t_end` with `γ` from `source` (prepared by the
/// caller); `alpha` switches to the interpolating coefficient.
pub fn sv_sde_run(
    initial: ParticleState,
    source: &mut dyn GammaSource,
    alpha: Option<f64>,
    cfg: &ParticleConfig,
    rng: &mut dyn RngCore,
) -> Result<ParticleTrajectory> {
    let cap = cfg.gamma_cap;
    run_with(
        initial,
        cfg,
        rng,
        |t| source.table(t).map(|g| Some(g.clone())),
        move |g| {
            let gamma = g.expect("a γ table is supplied every step");
            match alpha {
                Some(alpha) => Interaction::Interpolating { gamma, alpha, cap },
                None => Interaction::Overlap(gamma),
            }
        },
    )
}

/// Symmetrized Dyson Brownian motion with unit repulsion.
pub fn reference_dbm_run(initial: &[f64], cfg: &ParticleConfig, rng: &mut dyn RngCore) -> Result<ParticleTrajectory> {
    run_with(ParticleState::new(initial.to_vec())?, cfg, rng, |_| Ok(None), |_| Interaction::Free)
}

/// `t,lambda_1,…,lambda_N`.
pub fn write_trajectory_csv(out: &mut dyn Write, traj: &ParticleTrajectory) -> Result<()> {
    let n = traj.final_state.lambda.len();
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("lambda_{i}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, row) in traj.times.iter().zip(&traj.paths) {
        let cells: Vec<String> = std::iter::once(format!("{t:e}")).chain(row.iter().map(|l| format!("{l:e}"))).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
