//! Resolvent diagnostics of the hermitization `H = [[0, B], [B*, 0]]`.

use faer::MatRef;
use serde::Serialize;

use crate::ensembles::{hermitize, DiagonalData, HermitizedOperator};
use crate::error::{Error, Result};
use crate::freeconv::{solve_warm, SolverConfig};
use crate::measures::{SpectralMeasure, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalLawPoint {
    pub re: f64,
    pub im: f64,
    /// `max_i |𝒢_ii - ζ/(ȳ_i² - ζ²)|` with `ζ = z + w̃` and `i` taken mod `N`.
    pub max_residual: f64,
    /// `|(1/2N) Tr 𝒢 - m̃(z)|`.
    pub trace_residual: f64,
    /// The shift `w̃` that `X` induces in the argument of `m_Y`.
    pub shift_re: f64,
    pub shift_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalLawReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub y_bar: Vec<f64>,
    pub points: Vec<LocalLawPoint>,
}

impl LocalLawReport {
    pub fn max_trace_residual(&self) -> f64 {
        self.points.iter().map(|p| p.trace_residual).fold(0.0, f64::max)
    }
}

/// Compares the hermitized resolvent of `frame` (the model in the basis
/// where `Y` is diagonal) with its deterministic approximation built from
/// `x_law ⊞ sym(ȳ)`.
pub fn local_law_residual(
    frame: MatRef<'_, C64>,
    x_law: &dyn SpectralMeasure,
    y_bar: &[f64],
    z_grid: &[C64],
    cfg: &SolverConfig,
) -> Result<LocalLawReport> {
    let n = frame.nrows();
    if y_bar.len() != n {
        return Err(Error::invalid(format!("ȳ has {} entries but the matrix is {n}×{n}", y_bar.len())));
    }
    let y_abs: Vec<f64> = y_bar.iter().map(|y| y.abs()).collect();
    let y_law = DiagonalData::new(y_abs.clone())?.symmetrized();
    let op = hermitize(frame)?;
    let mut guess = None;
    let mut points = Vec::with_capacity(z_grid.len());
    for &z in z_grid {
        let state = solve_warm(x_law, &y_law, z, guess, cfg)?;
        guess = Some((state.w_alpha, state.w_beta));
        let zeta = z + state.w_beta;
        let g = op.green_diag(z)?;
        let max_residual = (0..2 * n)
            .map(|i| {
                let y = y_abs[i % n];
                (g[i] - zeta / (y * y - zeta * zeta)).norm()
            })
            .fold(0.0, f64::max);
        let trace = g.iter().sum::<C64>() / (2 * n) as f64;
        points.push(LocalLawPoint {
            re: z.re,
            im: z.im,
            max_residual,
            trace_residual: (trace - state.m).norm(),
            shift_re: state.w_beta.re,
            shift_im: state.w_beta.im,
        });
    }
    Ok(LocalLawReport { n, y_bar: y_abs, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventIdentities {
    pub re: f64,
    pub eta: f64,
    /// `max_k |λ_k + λ_{2N+1-k}|` of the dense eigenvalues.
    pub sign_symmetry_error: f64,
    /// `max_i |Σ_j |𝒢_ij|² - Im 𝒢_ii / η|`.
    pub ward_error: f64,
    /// `η · max_ij |𝒢_ij|`, at most one.
    pub max_entry_times_eta: f64,
}

impl ResolventIdentities {
    pub fn holds(&self, tol: f64) -> bool {
        self.sign_symmetry_error <= tol && self.ward_error <= tol && self.max_entry_times_eta <= 1.0 + tol
    }
}

pub fn resolvent_identities(op: &HermitizedOperator, z: C64) -> Result<ResolventIdentities> {
    let eig = op.dense_eigenvalues()?;
    let m = eig.len();
    let sign_symmetry_error = (0..m).map(|k| (eig[k] + eig[m - 1 - k]).abs()).fold(0.0, f64::max);
    let g = op.green_full(z)?;
    let eta = z.im;
    let mut ward_error = 0.0f64;
    let mut max_entry = 0.0f64;
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..m {
            let v = g[(i, j)].norm_sqr();
            row += v;
            max_entry = max_entry.max(v.sqrt());
        }
        ward_error = ward_error.max((row - g[(i, i)].im / eta).abs());
    }
    Ok(ResolventIdentities { re: z.re, eta, sign_symmetry_error, ward_error, max_entry_times_eta: eta * max_entry })
}
