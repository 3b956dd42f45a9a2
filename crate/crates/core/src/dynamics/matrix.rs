//! Euler scheme for `dU = i dW₁ U - ½AU dt`, `dV = i dW₂ V - ½AV dt`
//! (real field: `dU = dW₁ U - ½AU dt` with antisymmetric `W₁`), with the
//! model `M(t) = R*XT + U(t)*YV(t)` and its drift-corrected version
//! `M̂(t) = M(t) + (τ - t) U(0)*ÂV(0)`.

use faer::Mat;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{build_index_set, drift_matrices, DriftMatrices, FlowConfig, IndexSet};
use crate::ensembles::{overlap_table, ModelSample, OverlapConvention};
use crate::error::{Error, Result};
use crate::linalg::{self, Field};
use crate::measures::C64;

/// `U(t)`, `V(t)` at time `t` (complex storage; real for the real field).
#[derive(Debug, Clone)]
pub struct MatrixFlowState {
    pub t: f64,
    pub steps: usize,
    pub u: Mat<C64>,
    pub v: Mat<C64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RemainderEstimate {
    /// `max_i |∫ Re⟨j_i, (U(t)*ÂV(t) - U(0)*ÂV(0)) k_i⟩ dt|`.
    pub drift_max: f64,
    /// Standard deviation of the noise left on the complement of the index set, max over `i`.
    pub noise_std_max: f64,
    /// `1/N`, the scale both numbers are meant to be small against.
    pub scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlowDiagnostics {
    pub steps: usize,
    pub index_set_size: usize,
    pub a_norm: f64,
    pub a_hat_norm: f64,
    /// Largest `‖FF* - I‖_F` of an Euler factor before projection.
    pub max_step_deviation: f64,
    /// Largest `‖UU* - I‖_F` (or of `V`) over the run.
    pub max_unitarity_deviation: f64,
    pub final_unitarity_deviation: f64,
    /// `‖M̂(τ) - M(τ)‖_F / ‖M(τ)‖_F`.
    pub endpoint_identity_error: f64,
    pub remainder: Option<RemainderEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSnapshot {
    pub t: f64,
    /// Singular values of `M̂(t)`, nondecreasing.
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub snapshots: Vec<FlowSnapshot>,
    pub diagnostics: FlowDiagnostics,
    pub final_state: MatrixFlowState,
}

impl FlowTrajectory {
    /// Singular values of `M̂(τ)`.
    pub fn endpoint(&self) -> &[f64] {
        &self.snapshots.last().expect("a trajectory holds its endpoint").singular_values
    }
}

pub struct MatrixFlow {
    cfg: FlowConfig,
    y: Vec<f64>,
    index: IndexSet,
    drift: DriftMatrices,
    /// `R*XT`, untouched by the flow.
    fixed: Mat<C64>,
    /// `U(0)*ÂV(0)`.
    initial_drift: Mat<C64>,
    state: MatrixFlowState,
    diag: FlowDiagnostics,
}

fn diag_sandwich(u: &Mat<C64>, d: &[f64], v: &Mat<C64>) -> Mat<C64> {
    let dv = Mat::<C64>::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * d[i]);
    u.adjoint() * dv
}

fn frobenius(a: &Mat<C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

impl MatrixFlow {
    pub fn new(sample: &ModelSample, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        if sample.n != cfg.n || sample.field != cfg.field {
            return Err(Error::invalid(format!(
                "flow configured for N = {} ({}) but sample has N = {} ({})",
                cfg.n, cfg.field, sample.n, sample.field
            )));
        }
        let f = sample
            .factors
            .as_ref()
            .ok_or_else(|| Error::invalid("the matrix flow needs the Haar factors of the sample"))?;
        let (u, v) = (f.u.to_complex(), f.v.to_complex());
        let y = sample.y.entries().to_vec();
        let index = build_index_set(&sample.y, cfg.a_exp);
        let drift = drift_matrices(&sample.y, &index);
        let fixed = sample.m.to_complex() - diag_sandwich(&u, &y, &v);
        let initial_drift = diag_sandwich(&u, &drift.a_hat, &v);
        let diag = FlowDiagnostics {
            index_set_size: index.len(),
            a_norm: drift.a_norm(),
            a_hat_norm: drift.a_hat_norm(),
            max_unitarity_deviation: linalg::unitarity_deviation(u.as_ref()).max(linalg::unitarity_deviation(v.as_ref())),
            ..Default::default()
        };
        Ok(Self { cfg, y, index, drift, fixed, initial_drift, state: MatrixFlowState { t: 0.0, steps: 0, u, v }, diag })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index
    }

    pub fn drift(&self) -> &DriftMatrices {
        &self.drift
    }

    pub fn state(&self) -> &MatrixFlowState {
        &self.state
    }

    pub fn diagnostics(&self) -> &FlowDiagnostics {
        &self.diag
    }

    pub fn finished(&self) -> bool {
        self.state.t >= self.cfg.tau
    }

    /// `M(t)`.
    pub fn model(&self) -> Mat<C64> {
        &self.fixed + diag_sandwich(&self.state.u, &self.y, &self.state.v)
    }

    /// `M̂(t)`.
    pub fn corrected(&self) -> Mat<C64> {
        let lag = C64::new(self.cfg.tau - self.state.t, 0.0);
        self.model() + Mat::<C64>::from_fn(self.cfg.n, self.cfg.n, |i, j| self.initial_drift[(i, j)] * lag)
    }

    /// `U(t)*ÂV(t) - U(0)*ÂV(0)`.
    pub fn drift_change(&self) -> Mat<C64> {
        diag_sandwich(&self.state.u, &self.drift.a_hat, &self.state.v) - &self.initial_drift
    }

    /// Noise generators `(G₁, G₂)` over a step of length `h`: `iΔW₁`, `iΔW₂`
    /// (complex) or the antisymmetric `ΔW₁`, `ΔW₂` (real). Zero on the diagonal.
    pub fn generator_increment(&self, h: f64, rng: &mut dyn RngCore) -> (Mat<C64>, Mat<C64>) {
        let n = self.cfg.n;
        let c = 1.0 / (2.0 * n as f64).sqrt();
        let sd = h.sqrt();
        let mut g1 = Mat::<C64>::zeros(n, n);
        let mut g2 = Mat::<C64>::zeros(n, n);
        if !self.cfg.noise {
            return (g1, g2);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !self.index.contains(i, j) {
                    continue;
                }
                let (d, s) = ((self.y[i] - self.y[j]).abs(), self.y[i] + self.y[j]);
                match self.cfg.field {
                    Field::Complex => {
                        let b1 = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * (sd / 2f64.sqrt());
                        let b2 = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * (sd / 2f64.sqrt());
                        let w1 = (b1 / d + b2 / s) * c;
                        let w2 = (b1 / d - b2 / s) * c;
                        // i·W for Hermitian W: (i,j) gets i w, (j,i) gets i conj(w)
                        g1[(i, j)] = C64::i() * w1;
                        g1[(j, i)] = C64::i() * w1.conj();
                        g2[(i, j)] = C64::i() * w2;
                        g2[(j, i)] = C64::i() * w2.conj();
                    }
                    Field::Real => {
                        let b1: f64 = sd * rng.sample::<f64, _>(StandardNormal);
                        let b2: f64 = sd * rng.sample::<f64, _>(StandardNormal);
                        let w1 = c * (b1 / d + b2 / s);
                        let w2 = c * (b1 / d - b2 / s);
                        g1[(i, j)] = C64::new(w1, 0.0);
                        g1[(j, i)] = C64::new(-w1, 0.0);
                        g2[(i, j)] = C64::new(w2, 0.0);
                        g2[(j, i)] = C64::new(-w2, 0.0);
                    }
                }
            }
        }
        (g1, g2)
    }

    /// Euler factors `(F₁, F₂) = I + G - ½A h` for a step of length `h`.
    fn factors(&self, h: f64, rng: &mut dyn RngCore) -> (Mat<C64>, Mat<C64>) {
        let (mut f1, mut f2) = self.generator_increment(h, rng);
        for i in 0..self.cfg.n {
            let comp = if self.cfg.compensate { 0.5 * self.drift.a[i] * h } else { 0.0 };
            f1[(i, i)] = C64::new(1.0 - comp, 0.0);
            f2[(i, i)] = C64::new(1.0 - comp, 0.0);
        }
        (f1, f2)
    }

    /// One Euler step of length `min(dt, τ - t)`.
    pub fn step(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        if self.finished() {
            return Ok(());
        }
        let h = self.cfg.dt.min(self.cfg.tau - self.state.t);
        let (f1, f2) = self.factors(h, rng);
        let deviation = linalg::unitarity_deviation(f1.as_ref()).max(linalg::unitarity_deviation(f2.as_ref()));
        self.diag.max_step_deviation = self.diag.max_step_deviation.max(deviation);
        if deviation > self.cfg.max_step_deviation {
            return Err(Error::StepRejected { deviation, limit: self.cfg.max_step_deviation });
        }
        let (g1, g2) = if self.cfg.project {
            (linalg::qr_positive(f1.as_ref()), linalg::qr_positive(f2.as_ref()))
        } else {
            (f1, f2)
        };
        self.state.u = g1 * &self.state.u;
        self.state.v = g2 * &self.state.v;
        self.state.steps += 1;
        self.state.t = if self.state.steps >= self.cfg.steps() { self.cfg.tau } else { self.state.t + h };
        let dev = linalg::unitarity_deviation(self.state.u.as_ref())
            .max(linalg::unitarity_deviation(self.state.v.as_ref()));
        self.diag.max_unitarity_deviation = self.diag.max_unitarity_deviation.max(dev);
        self.diag.final_unitarity_deviation = dev;
        self.diag.steps = self.state.steps;
        Ok(())
    }

    /// Advances until `t ≥ target` (or `τ`).
    pub fn advance_to(&mut self, target: f64, rng: &mut dyn RngCore) -> Result<()> {
        while !self.finished() && self.state.t < target - 1e-15 * self.cfg.tau {
            self.step(rng)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Result<FlowSnapshot> {
        Ok(FlowSnapshot { t: self.state.t, singular_values: linalg::singular_values(self.corrected().as_ref())? })
    }

    /// Remainder integrands at the current time: `(drift_i, noise variance rate_i)`.
    fn remainder_rates(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let corrected = self.corrected();
        let parts = linalg::svd(corrected.as_ref())?;
        let change = self.drift_change();
        let n = self.cfg.n;
        let ck = &change * &parts.k;
        let drift = (0..n)
            .map(|i| (0..n).map(|a| parts.j[(a, i)].conj() * ck[(a, i)]).sum::<C64>().re)
            .collect();
        let w = &self.state.u * &parts.j;
        let z = &self.state.v * &parts.k;
        let table = overlap_table(w, z, &parts.s, &|a, b| self.index.in_complement(a, b), OverlapConvention::Symmetric);
        let per = match self.cfg.field {
            Field::Complex => 1.0 / (2.0 * n as f64),
            Field::Real => 1.0 / n as f64,
        };
        let noise = (0..n).map(|i| table.gamma[(i, i)] * per).collect();
        Ok((drift, noise))
    }

    fn endpoint_identity(&mut self) {
        let m = self.model();
        let diff = self.corrected() - &m;
        let scale = frobenius(&m).max(f64::MIN_POSITIVE);
        self.diag.endpoint_identity_error = frobenius(&diff) / scale;
    }
}

/// Runs the matrix flow to `τ`, recording `M̂` every `stride` steps and at the
/// end; with `remainder` set, also integrates the remainder diagnostic on the
/// same grid.
pub fn matrix_flow_run(
    sample: &ModelSample,
    cfg: FlowConfig,
    stride: usize,
    remainder: bool,
    rng: &mut dyn RngCore,
) -> Result<FlowTrajectory> {
    if stride == 0 {
        return Err(Error::invalid("snapshot stride must be at least 1"));
    }
    let mut flow = MatrixFlow::new(sample, cfg)?;
    let n = cfg.n;
    let mut snapshots = vec![flow.snapshot()?];
    let mut drift_int = vec![0.0; n];
    let mut noise_var = vec![0.0; n];
    let mut last_t = 0.0;
    let mut rates = if remainder { Some(flow.remainder_rates()?) } else { None };
    while !flow.finished() {
        for _ in 0..stride {
            flow.step(rng)?;
            if flow.finished() {
                break;
            }
        }
        let t = flow.state().t;
        if let Some((d0, v0)) = rates.as_ref() {
            let (d1, v1) = flow.remainder_rates()?;
            let h = t - last_t;
            for i in 0..n {
                drift_int[i] += 0.5 * h * (d0[i] + d1[i]);
                noise_var[i] += 0.5 * h * (v0[i] + v1[i]);
            }
            rates = Some((d1, v1));
        }
        last_t = t;
        snapshots.push(flow.snapshot()?);
    }
    flow.endpoint_identity();
    let mut diagnostics = flow.diagnostics().clone();
    if remainder {
        diagnostics.remainder = Some(RemainderEstimate {
            drift_max: drift_int.iter().fold(0.0, |m, v| m.max(v.abs())),
            noise_std_max: noise_var.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt(),
            scale: 1.0 / n as f64,
        });
    }
    Ok(FlowTrajectory { snapshots, diagnostics, final_state: flow.state().clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{assemble_model, DiagonalData};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, field: Field, seed: u64) -> ModelSample {
        let x = DiagonalData::new((1..=n).map(|k| k as f64 / n as f64).collect()).unwrap();
        let y = DiagonalData::new((1..=n).map(|k| 2.0 * k as f64 / n as f64).collect()).unwrap();
        assemble_model(&x, &y, field, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn projection_keeps_unitarity() {
        for field in [Field::Complex, Field::Real] {
            let s = sample(30, field, 1);
            let cfg = FlowConfig::new(30, field).unwrap();
            let run = matrix_flow_run(&s, cfg, 10, false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            assert!(run.diagnostics.max_unitarity_deviation < 1e-8, "{field}: {:?}", run.diagnostics);
            assert_eq!(run.diagnostics.steps, 100);
            assert_eq!(run.final_state.t, cfg.tau);
            assert_eq!(run.diagnostics.endpoint_identity_error, 0.0);
            assert_eq!(run.snapshots.len(), 11);
            if field == Field::Real {
                let im = (0..30).map(|i| run.final_state.u[(i, 0)].im.abs()).fold(0.0, f64::max);
                assert!(im < 1e-14);
            }
        }
    }

    #[test]
    fn compensation_reduces_factor_deviation() {
        let s = sample(30, Field::Complex, 3);
        let mut cfg = FlowConfig::new(30, Field::Complex).unwrap();
        cfg.project = false;
        let with = matrix_flow_run(&s, cfg, 100, false, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        cfg.compensate = false;
        let without = matrix_flow_run(&s, cfg, 100, false, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(without.diagnostics.final_unitarity_deviation > 2.0 * with.diagnostics.final_unitarity_deviation);
        assert!(with.diagnostics.final_unitarity_deviation > 1e-8);
    }

    #[test]
    fn noiseless_projected_flow_is_static() {
        let s = sample(12, Field::Complex, 5);
        let mut cfg = FlowConfig::new(12, Field::Complex).unwrap();
        cfg.noise = false;
        let mut flow = MatrixFlow::new(&s, cfg).unwrap();
        let m0 = flow.model();
        flow.advance_to(cfg.tau, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(frobenius(&(flow.model() - m0)) < 1e-12);
        assert!(frobenius(&flow.drift_change()) < 1e-12);
    }

    #[test]
    fn initial_model_matches_sample() {
        let s = sample(10, Field::Real, 6);
        let flow = MatrixFlow::new(&s, FlowConfig::new(10, Field::Real).unwrap()).unwrap();
        assert!(frobenius(&(flow.model() - s.m.to_complex())) < 1e-12);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let s = sample(40, Field::Complex, 7);
        let mut cfg = FlowConfig::new(40, Field::Complex).unwrap().with_dt(FlowConfig::new(40, Field::Complex).unwrap().tau).unwrap();
        cfg.max_step_deviation = 0.05;
        let err = matrix_flow_run(&s, cfg, 1, false, &mut ChaCha8Rng::seed_from_u64(8)).unwrap_err();
        assert!(matches!(err, Error::StepRejected { .. }));
    }

    #[test]
    fn remainder_is_reported() {
        let s = sample(20, Field::Complex, 9);
        let cfg = FlowConfig::new(20, Field::Complex).unwrap();
        let run = matrix_flow_run(&s, cfg, 20, true, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let r = run.diagnostics.remainder.unwrap();
        assert!(r.drift_max.is_finite() && r.noise_std_max > 0.0);
        assert_eq!(r.scale, 0.05);
    }

    #[test]
    fn driving_noise_has_variance_dt_over_n() {
        for field in [Field::Complex, Field::Real] {
            let n = 8;
            let x = DiagonalData::new(vec![1.0; n]).unwrap();
            let y = DiagonalData::new((0..n).map(|k| 0.3 + k as f64).collect()).unwrap();
            let s = assemble_model(&x, &y, field, false, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
            let cfg = FlowConfig::new(n, field).unwrap();
            let flow = MatrixFlow::new(&s, cfg).unwrap();
            assert_eq!(flow.index_set().len(), n * (n - 1));
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let h = 1e-3;
            let trials = 20000;
            let (mut sum01, mut sum10, mut cross) = (0.0, 0.0, 0.0);
            for _ in 0..trials {
                let (g1, g2) = flow.generator_increment(h, &mut rng);
                // G₁Y - YG₂
                let e = |i: usize, j: usize| g1[(i, j)] * y.entries()[j] - g2[(i, j)] * y.entries()[i];
                sum01 += e(0, 1).norm_sqr();
                sum10 += e(1, 0).norm_sqr();
                cross += (e(0, 1) * e(1, 0)).re;
            }
            let target = h / n as f64;
            for v in [sum01 / trials as f64, sum10 / trials as f64] {
                // relative standard error of a mean of squared Gaussians is at most √(2/trials) ≈ 1%
                assert!((v / target - 1.0).abs() < 0.05, "{field}: {v} vs {target}");
            }
            assert!((cross / trials as f64).abs() < 0.05 * target, "{field}: entries correlated");
        }
    }
}
