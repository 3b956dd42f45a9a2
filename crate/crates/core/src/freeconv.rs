//! Additive free convolution through its subordination system.
//!
//! With `ĥm(ζ) = -ζ - 1/m(ζ)` the system reads
//! `w_α = ĥm_β(z + w_β)`, `w_β = ĥm_α(z + w_α)`, `m = -1/(z + w_α + w_β)`,
//! and `m` is the Stieltjes transform of `μ_α ⊞ μ_β`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::measures::{hat_derivative, hat_unchecked, GridDensity, SpectralMeasure, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_fixed_point_iters: usize,
    pub max_newton_iters: usize,
    pub damping: f64,
    pub eta_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_fixed_point_iters: 20_000, max_newton_iters: 60, damping: 0.5, eta_floor: 1e-9 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.eta_floor > 0.0) {
            return Err(Error::invalid("solver tol and eta_floor must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinationState {
    pub z: C64,
    pub w_alpha: C64,
    pub w_beta: C64,
    pub m: C64,
    pub residual: f64,
}

impl SubordinationState {
    fn new(z: C64, w_alpha: C64, w_beta: C64, residual: f64) -> Self {
        Self { z, w_alpha, w_beta, m: -(z + w_alpha + w_beta).inv(), residual }
    }

    pub fn density(&self) -> f64 {
        self.m.im / PI
    }
}

/// `Φ(w1, w2) = (w1 - ĥm_β(z + w2), w2 - ĥm_α(z + w1))`.
pub fn phi(
    w1: C64,
    w2: C64,
    z: C64,
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
) -> Result<(C64, C64)> {
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("spectral parameter must satisfy Im z > 0, got {z}")));
    }
    Ok((w1 - hat_unchecked(mu_beta, z + w2)?, w2 - hat_unchecked(mu_alpha, z + w1)?))
}

fn norm2(a: C64, b: C64) -> f64 {
    (a.norm_sqr() + b.norm_sqr()).sqrt()
}

/// Stopping rule relative to the size of `w`; inside spectral gaps `w` grows like `1/η`.
fn converged(residual: f64, w: (C64, C64), tol: f64) -> bool {
    residual <= tol * (1.0 + norm2(w.0, w.1))
}

/// `DΦ = [[1, -p], [-q, 1]]` together with the majorants `p̃ >= |p|`, `q̃ >= |q|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiJacobian {
    pub p: C64,
    pub q: C64,
    pub p_tilde: f64,
    pub q_tilde: f64,
}

impl PhiJacobian {
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        let one = C64::new(1.0, 0.0);
        [[one, -self.p], [-self.q, one]]
    }

    pub fn determinant(&self) -> C64 {
        1.0 - self.p * self.q
    }

    /// Spectral norm of `(DΦ)⁻¹ = [[1, p], [q, 1]] / (1 - pq)`.
    pub fn inverse_norm(&self) -> f64 {
        let one = C64::new(1.0, 0.0);
        spectral_norm_2x2([[one, self.p], [self.q, one]]) / self.determinant().norm()
    }
}

fn spectral_norm_2x2(a: [[C64; 2]; 2]) -> f64 {
    let fro2: f64 = a.iter().flatten().map(|x| x.norm_sqr()).sum();
    let det = (a[0][0] * a[1][1] - a[0][1] * a[1][0]).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
    (0.5 * (fro2 + disc.sqrt())).sqrt()
}

pub fn phi_jacobian(
    state: &SubordinationState,
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
) -> Result<PhiJacobian> {
    let jac = raw_jacobian(state.z, state.w_alpha, state.w_beta, mu_alpha, mu_beta)?;
    let det = jac.determinant().norm();
    if det < 1e-14 {
        return Err(Error::SingularJacobian(det));
    }
    Ok(jac)
}

fn raw_jacobian(
    z: C64,
    wa: C64,
    wb: C64,
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
) -> Result<PhiJacobian> {
    let eta = z.im;
    let p = hat_derivative(mu_beta, z + wb)?;
    let q = hat_derivative(mu_alpha, z + wa)?;
    let p_tilde = hat_unchecked(mu_beta, z + wb)?.im / (eta + wb.im);
    let q_tilde = hat_unchecked(mu_alpha, z + wa)?.im / (eta + wa.im);
    Ok(PhiJacobian { p, q, p_tilde, q_tilde })
}

/// Solves the subordination system at `z`.
///
/// Point masses `δ_a` are resolved by the exact shift `δ_a ⊞ μ = μ(· - a)`.
pub fn solve_subordination(
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    z: C64,
    cfg: &SolverConfig,
) -> Result<SubordinationState> {
    solve_warm(mu_alpha, mu_beta, z, None, cfg)
}

/// Like [`solve_subordination`], trying Newton from `guess = (w_α, w_β)` first.
pub fn solve_warm(
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    z: C64,
    guess: Option<(C64, C64)>,
    cfg: &SolverConfig,
) -> Result<SubordinationState> {
    cfg.validate()?;
    if !(z.im >= cfg.eta_floor) || !z.re.is_finite() {
        return Err(Error::invalid(format!("Im z must be at least {:e}, got {z}", cfg.eta_floor)));
    }
    match (mu_alpha.point_mass(), mu_beta.point_mass()) {
        (Some(_), Some(_)) => {
            return Err(Error::AssumptionViolated("both measures are point masses".into()));
        }
        (Some(a), None) => {
            let wb = C64::new(-a, 0.0);
            let wa = hat_unchecked(mu_beta, z + wb)?;
            return Ok(SubordinationState::new(z, wa, wb, 0.0));
        }
        (None, Some(b)) => {
            let wa = C64::new(-b, 0.0);
            let wb = hat_unchecked(mu_alpha, z + wa)?;
            return Ok(SubordinationState::new(z, wa, wb, 0.0));
        }
        (None, None) => {}
    }

    let zero = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    if let Some(start) = guess {
        if let Ok(s) = newton(mu_alpha, mu_beta, z, start, zero, cfg) {
            return Ok(s);
        }
    }

    // enter the basin far from the axis, then continue down in η
    let eta0 = z.im.max(1.0);
    let mut zk = C64::new(z.re, eta0);
    let mut state = fixed_point(mu_alpha, mu_beta, zk, (C64::new(0.0, 1.0), C64::new(0.0, 1.0)), cfg)?;
    // in spectral gaps w grows like 1/η, so the η ratio shrinks until Newton takes
    let mut ratio = 4.0f64;
    while zk.im > z.im {
        let next = C64::new(z.re, (zk.im / ratio).max(z.im));
        let start = (state.w_alpha, state.w_beta);
        match newton(mu_alpha, mu_beta, next, start, zero, cfg) {
            Ok(s) => {
                state = s;
                ratio = (ratio * ratio).min(4.0);
            }
            Err(_) if ratio > 1.05 => {
                ratio = ratio.sqrt();
                continue;
            }
            Err(_) => state = fixed_point(mu_alpha, mu_beta, next, start, cfg)?,
        }
        zk = next;
    }
    Ok(state)
}

fn admissible(z: C64, w: (C64, C64)) -> bool {
    w.0.im >= 0.0 && w.1.im >= 0.0 && (z + w.0).im > 0.0 && (z + w.1).im > 0.0 && w.0.is_finite() && w.1.is_finite()
}

/// Damped Gauss–Seidel iteration of the system.
fn fixed_point(
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    z: C64,
    start: (C64, C64),
    cfg: &SolverConfig,
) -> Result<SubordinationState> {
    let (mut wa, mut wb) = start;
    let d = cfg.damping;
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_fixed_point_iters {
        let wa_new = hat_unchecked(mu_beta, z + wb)?;
        wa = (1.0 - d) * wa + d * wa_new;
        let wb_new = hat_unchecked(mu_alpha, z + wa)?;
        wb = (1.0 - d) * wb + d * wb_new;
        let (r1, r2) = phi(wa, wb, z, mu_alpha, mu_beta)?;
        residual = norm2(r1, r2);
        if converged(residual, (wa, wb), cfg.tol) {
            return Ok(SubordinationState::new(z, wa, wb, residual));
        }
        // hand over to Newton once the iterate is close
        if residual <= 1e-6 {
            if let Ok(s) = newton(mu_alpha, mu_beta, z, (wa, wb), (C64::new(0.0, 0.0), C64::new(0.0, 0.0)), cfg) {
                return Ok(s);
            }
        }
    }
    Err(Error::NonConvergence { iterations: cfg.max_fixed_point_iters, residual })
}

/// Newton on `Φ(w) = target` with backtracking that keeps `w` in the closed upper half-plane.
fn newton(
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    z: C64,
    start: (C64, C64),
    target: (C64, C64),
    cfg: &SolverConfig,
) -> Result<SubordinationState> {
    let eval = |w: (C64, C64)| -> Result<(C64, C64)> {
        let (r1, r2) = phi(w.0, w.1, z, mu_alpha, mu_beta)?;
        Ok((r1 - target.0, r2 - target.1))
    };
    if !admissible(z, start) {
        return Err(Error::invalid("Newton start outside the upper half-plane"));
    }
    let mut w = start;
    let mut r = eval(w)?;
    let mut res = norm2(r.0, r.1);
    for _ in 0..cfg.max_newton_iters {
        if converged(res, w, cfg.tol) {
            return Ok(SubordinationState::new(z, w.0, w.1, res));
        }
        let jac = raw_jacobian(z, w.0, w.1, mu_alpha, mu_beta)?;
        let det = jac.determinant();
        if det.norm() < 1e-14 {
            return Err(Error::SingularJacobian(det.norm()));
        }
        let correction = |r: (C64, C64)| (-(r.0 + jac.p * r.1) / det, -(jac.q * r.0 + r.1) / det);
        let step = correction(r);
        let step_norm = norm2(step.0, step.1);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = (w.0 + lambda * step.0, w.1 + lambda * step.1);
            if admissible(z, trial) {
                if let Ok(rt) = eval(trial) {
                    let rest = norm2(rt.0, rt.1);
                    // natural monotonicity: |Φ| alone is badly scaled when |p| or |q| is large
                    let next = correction(rt);
                    if norm2(next.0, next.1) < step_norm || converged(rest, trial, cfg.tol) {
                        w = trial;
                        r = rt;
                        res = rest;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if converged(res, w, cfg.tol) {
        Ok(SubordinationState::new(z, w.0, w.1, res))
    } else {
        Err(Error::NonConvergence { iterations: cfg.max_newton_iters, residual: res })
    }
}

/// Re-solves `Φ(w) = r` from a solved state and returns the displacement `δw`.
pub fn perturbation_response(
    state: &SubordinationState,
    r: (C64, C64),
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    cfg: &SolverConfig,
) -> Result<(C64, C64)> {
    let s = newton(mu_alpha, mu_beta, state.z, (state.w_alpha, state.w_beta), r, cfg)?;
    Ok((s.w_alpha - state.w_alpha, s.w_beta - state.w_beta))
}

/// Density of `μ_α ⊞ μ_β` on a grid at height `eta`, plus per-point failures.
#[derive(Debug, Clone)]
pub struct ConvolutionDensity {
    pub density: GridDensity,
    pub states: Vec<Option<SubordinationState>>,
    pub failed: Vec<usize>,
}

pub fn free_convolution_density(
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    grid: &[f64],
    eta: f64,
    cfg: &SolverConfig,
) -> Result<ConvolutionDensity> {
    if !(eta >= cfg.eta_floor) {
        return Err(Error::invalid(format!("eta must be at least {:e}, got {eta}", cfg.eta_floor)));
    }
    let mut states = Vec::with_capacity(grid.len());
    let mut failed = Vec::new();
    let mut values = Vec::with_capacity(grid.len());
    let mut prev: Option<(C64, C64)> = None;
    for (k, &e) in grid.iter().enumerate() {
        let z = C64::new(e, eta);
        let solved = solve_warm(mu_alpha, mu_beta, z, prev, cfg)
            .or_else(|_| solve_subordination(mu_alpha, mu_beta, z, cfg));
        match solved {
            Ok(s) => {
                prev = Some((s.w_alpha, s.w_beta));
                values.push(s.density().max(0.0));
                states.push(Some(s));
            }
            Err(Error::AssumptionViolated(msg)) => return Err(Error::AssumptionViolated(msg)),
            Err(_) => {
                prev = None;
                failed.push(k);
                values.push(0.0);
                states.push(None);
            }
        }
    }
    Ok(ConvolutionDensity { density: GridDensity::new(grid.to_vec(), values)?, states, failed })
}

/// Density of `μ_α ⊞ μ_β` at `E`, Richardson-extrapolated from `η ∈ {1e-4, 1e-5}`
/// after continuing down the ladder `1e-2, 1e-3`.
pub fn density_at(
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    e: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let mut guess = None;
    let mut rho = [0.0; 4];
    for (k, eta) in [1e-2, 1e-3, 1e-4, 1e-5].into_iter().enumerate() {
        let s = solve_warm(mu_alpha, mu_beta, C64::new(e, eta), guess, cfg)?;
        guess = Some((s.w_alpha, s.w_beta));
        rho[k] = s.density();
    }
    Ok(rho[3] + (rho[3] - rho[2]) / 9.0)
}

/// `ρ(0)` of `μ_α ⊞ μ_β`; the universality rescaling is `π ρ(0)`.
pub fn density_at_zero(
    mu_alpha: &dyn SpectralMeasure,
    mu_beta: &dyn SpectralMeasure,
    cfg: &SolverConfig,
) -> Result<f64> {
    let rho = density_at(mu_alpha, mu_beta, 0.0, cfg)?;
    if !(rho >= 1e-6) {
        return Err(Error::VanishingDensity(rho));
    }
    Ok(rho)
}

/// `m_t(z) = m_0(z + t m_t(z))`, the transform of `μ_0 ⊞ semicircle(t)`.
pub fn semicircle_flow(mu0: &dyn SpectralMeasure, t: f64, z: C64, cfg: &SolverConfig) -> Result<C64> {
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("spectral parameter must satisfy Im z > 0, got {z}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("flow time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(mu0.stieltjes(z));
    }
    let residual = |m: C64| (m - mu0.stieltjes(z + t * m)).norm();
    let newton = |mut m: C64| -> Option<C64> {
        for _ in 0..cfg.max_newton_iters {
            let zeta = z + t * m;
            let g = m - mu0.stieltjes(zeta);
            if g.norm() <= cfg.tol {
                return Some(m);
            }
            let dg = 1.0 - t * mu0.stieltjes_derivative(zeta);
            let step = -g / dg;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial = m + lambda * step;
                if trial.im > 0.0 && residual(trial) < g.norm() {
                    m = trial;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        (residual(m) <= cfg.tol).then_some(m)
    };

    let mut m = mu0.stieltjes(z);
    let d = cfg.damping;
    let mut res = f64::INFINITY;
    for _ in 0..cfg.max_fixed_point_iters {
        m = (1.0 - d) * m + d * mu0.stieltjes(z + t * m);
        res = residual(m);
        if res <= cfg.tol {
            return Ok(m);
        }
        if res <= 1e-6 {
            if let Some(mn) = newton(m) {
                return Ok(mn);
            }
        }
    }
    Err(Error::NonConvergence { iterations: cfg.max_fixed_point_iters, residual: res })
}

/// `μ_α ⊞ μ_β` as a measure, solving the system afresh at each `z`.
///
/// Evaluations that fail to converge return NaN.
pub struct FreeConvolution<A, B> {
    pub alpha: A,
    pub beta: B,
    pub cfg: SolverConfig,
}

impl<A: SpectralMeasure, B: SpectralMeasure> FreeConvolution<A, B> {
    pub fn new(alpha: A, beta: B, cfg: SolverConfig) -> Self {
        Self { alpha, beta, cfg }
    }
}

impl<A: SpectralMeasure, B: SpectralMeasure> SpectralMeasure for FreeConvolution<A, B> {
    fn stieltjes(&self, z: C64) -> C64 {
        // m(z̄) = conj m(z)
        let upper = if z.im < 0.0 { z.conj() } else { z };
        match solve_subordination(&self.alpha, &self.beta, upper, &self.cfg) {
            Ok(s) if z.im < 0.0 => s.m.conj(),
            Ok(s) => s.m,
            Err(_) => C64::new(f64::NAN, f64::NAN),
        }
    }

    fn stieltjes_derivative(&self, z: C64) -> C64 {
        let h = 1e-6 * (1.0 + z.norm());
        (self.stieltjes(z + h) - self.stieltjes(z - h)) / (2.0 * h)
    }

    /// Exact when at least one input is centered.
    fn second_moment(&self) -> f64 {
        self.alpha.second_moment() + self.beta.second_moment()
    }

    fn label(&self) -> String {
        format!("{} ⊞ {}", self.alpha.label(), self.beta.label())
    }
}
