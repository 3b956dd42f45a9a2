//! Time evolution on `[0, τ]`: the unitary Brownian flow of the Haar factors
//! and the SDEs for the singular values.

mod gamma;
mod matrix;
mod particles;

pub use gamma::{gamma_sources, GammaContext, GammaSource, GammaTable};
pub use matrix::{
    matrix_flow_run, FlowDiagnostics, FlowSnapshot, FlowTrajectory, MatrixFlow, MatrixFlowState, RemainderEstimate,
};
pub use particles::{
    interpolating_step, reference_dbm_run, sv_sde_run, sv_sde_step, write_trajectory_csv, Interaction, ParticleConfig,
    ParticleState, ParticleTrajectory,
};

use serde::Serialize;

use crate::ensembles::DiagonalData;
use crate::error::{Error, Result};
use crate::linalg::Field;

/// Exponents and step sizes of a flow run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowConfig {
    pub n: usize,
    pub field: Field,
    /// Index-set exponent: pairs with `|y_i - y_j| ≥ N^{-1+a}` are driven.
    pub a_exp: f64,
    /// Time exponent: `τ = N^{-1+b}`.
    pub b_exp: f64,
    /// Clamp exponent for the interpolating process: `γ̂ = γ ∧ N^{-c}`.
    pub c_exp: f64,
    pub tau: f64,
    pub dt: f64,
    /// QR re-projection of `U`, `V` after every step.
    pub project: bool,
    /// Include the `-½A dt` Itô compensation.
    pub compensate: bool,
    /// Brownian increments on (off only for deterministic checks).
    pub noise: bool,
    /// Largest accepted `‖FF* - I‖_F` of a single Euler factor.
    pub max_step_deviation: f64,
}

impl FlowConfig {
    /// Defaults `a = 0.5`, `b = 0.004`, `c = 6a`, `dt = τ/100`.
    pub fn new(n: usize, field: Field) -> Result<Self> {
        Self::with_exponents(n, field, 0.5, 0.004, 3.0)
    }

    pub fn with_exponents(n: usize, field: Field, a_exp: f64, b_exp: f64, c_exp: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        let tau = (n as f64).powf(-1.0 + b_exp);
        let cfg = Self {
            n,
            field,
            a_exp,
            b_exp,
            c_exp,
            tau,
            dt: tau / 100.0,
            project: true,
            compensate: true,
            noise: true,
            max_step_deviation: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        (self.tau / self.dt).ceil() as usize
    }

    /// `N^{-c}`.
    pub fn gamma_cap(&self) -> f64 {
        (self.n as f64).powf(-self.c_exp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_exp > 0.0 && self.a_exp < 1.0) {
            return Err(Error::AssumptionViolated(format!("a must lie in (0, 1), got {}", self.a_exp)));
        }
        if !(self.b_exp > 0.0 && self.b_exp < self.a_exp / 100.0) {
            return Err(Error::AssumptionViolated(format!(
                "b must satisfy 0 < b < a/100 = {}, got {}",
                self.a_exp / 100.0,
                self.b_exp
            )));
        }
        if !(self.c_exp > 0.0) {
            return Err(Error::AssumptionViolated(format!("c must be positive, got {}", self.c_exp)));
        }
        if !(self.dt > 0.0 && self.dt <= self.tau) {
            return Err(Error::invalid(format!("dt must lie in (0, τ = {}], got {}", self.tau, self.dt)));
        }
        Ok(())
    }
}

/// The driven pairs `{(i, j) : |y_i - y_j| ≥ N^{-1+a}}`; the diagonal is never driven.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    n: usize,
    threshold: f64,
    mask: Vec<bool>,
}

pub fn build_index_set(y: &DiagonalData, a_exp: f64) -> IndexSet {
    let n = y.len();
    let threshold = (n as f64).powf(-1.0 + a_exp);
    let ys = y.entries();
    let mut mask = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            mask[i * n + j] = i != j && (ys[i] - ys[j]).abs() >= threshold;
        }
    }
    IndexSet { n, threshold, mask }
}

impl IndexSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn in_complement(&self, i: usize, j: usize) -> bool {
        !self.contains(i, j)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Diagonals of the unitarity compensation `A` and of the mean drift `Â`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrices {
    pub a: Vec<f64>,
    pub a_hat: Vec<f64>,
}

impl DriftMatrices {
    pub fn a_norm(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn a_hat_norm(&self) -> f64 {
        self.a_hat.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn drift_matrices(y: &DiagonalData, index: &IndexSet) -> DriftMatrices {
    let n = y.len();
    let ys = y.entries();
    let scale = 1.0 / (2.0 * n as f64);
    let mut a = vec![0.0; n];
    let mut a_hat = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if !index.contains(i, j) {
                continue;
            }
            let (d, s) = (ys[i] - ys[j], ys[i] + ys[j]);
            a[i] += 1.0 / (d * d) + 1.0 / (s * s);
            a_hat[i] += -1.0 / d - 1.0 / s;
        }
        a[i] *= scale;
        a_hat[i] *= scale;
    }
    DriftMatrices { a, a_hat }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_set_examples() {
        let y = DiagonalData::new(vec![0.0, 1.0]).unwrap();
        let idx = build_index_set(&y, 0.5);
        assert!((idx.threshold() - 2f64.powf(-0.5)).abs() < 1e-15);
        assert!(idx.contains(0, 1) && idx.contains(1, 0));
        assert!(idx.in_complement(0, 0) && idx.in_complement(1, 1));
        let y = DiagonalData::new(vec![0.0, 0.5]).unwrap();
        assert!(build_index_set(&y, 0.5).is_empty());
    }

    #[test]
    fn drift_examples() {
        let y = DiagonalData::new(vec![0.0, 1.0]).unwrap();
        let d = drift_matrices(&y, &build_index_set(&y, 0.5));
        assert!((d.a[0] - 0.5).abs() < 1e-15);
        assert!(d.a_hat[0].abs() < 1e-15);
        assert!((d.a_hat[1] + 0.5).abs() < 1e-15);
        let y = DiagonalData::new(vec![0.0, 0.5]).unwrap();
        let d = drift_matrices(&y, &build_index_set(&y, 0.5));
        assert_eq!(d.a, vec![0.0, 0.0]);
        assert_eq!(d.a_hat, vec![0.0, 0.0]);
    }

    #[test]
    fn config_constraints() {
        let cfg = FlowConfig::new(50, Field::Complex).unwrap();
        assert!((cfg.tau - 50f64.powf(-0.996)).abs() < 1e-15);
        assert_eq!(cfg.steps(), 100);
        assert_eq!(cfg.c_exp, 3.0);
        assert!(FlowConfig::with_exponents(50, Field::Real, 0.5, 0.01, 3.0).is_err());
        assert!(FlowConfig::with_exponents(50, Field::Real, 1.5, 0.001, 3.0).is_err());
        assert!(cfg.with_dt(2.0 * cfg.tau).is_err());
        let cap = FlowConfig::with_exponents(100, Field::Real, 0.5, 0.004, 0.5).unwrap().gamma_cap();
        assert!((cap - 0.1).abs() < 1e-15);
    }
}
