//! Monte Carlo of `s·N·λ₁` against the field's limiting law, with
//! `s = π ρ(0)` from the free convolution of the symmetrized inputs.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use super::ks::{ks_distance, EmpiricalCdf};
use super::laws::target_for;
use crate::ensembles::{DiagonalData, Ensemble, SmallestSingularValue};
use crate::error::{Error, Result};
use crate::freeconv::{density_at_zero, SolverConfig};
use crate::linalg::Field;
use crate::measures::linspace;
use crate::montecarlo::par_map;

/// How the rescaling constant `s` is obtained.
#[derive(Debug, Clone, Copy)]
pub enum Scaling {
    /// `s = π ρ(0)` from the subordination solver.
    Solve(SolverConfig),
    /// A known constant, e.g. `1` for the Ginibre reference.
    Fixed(f64),
}

pub struct UniversalitySetup<'a> {
    pub x: &'a DiagonalData,
    pub y: &'a DiagonalData,
    pub field: Field,
    pub n_samples: usize,
    pub seed: u64,
    pub ensemble: &'a dyn Ensemble,
    pub method: &'a dyn SmallestSingularValue,
    pub scaling: Scaling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalityReport {
    pub law_name: String,
    pub field: Field,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_samples: usize,
    pub scaling: f64,
    pub ks_distance: f64,
    pub seed: u64,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct UniversalityOutcome {
    pub report: UniversalityReport,
    /// `ρ(0)`, absent for a fixed scaling.
    pub rho0: Option<f64>,
    /// `N·λ₁` per sample, in sample order.
    pub raw: Vec<f64>,
    /// `s·N·λ₁` per sample, in sample order.
    pub scaled: Vec<f64>,
    pub ecdf: EmpiricalCdf,
    /// Fraction of `s·N·λ₁` below `0.1`, divided by `0.1`.
    pub edge_density: f64,
}

/// `(ρ(0), π ρ(0))` for the symmetrized empirical measures of `x` and `y`.
///
/// Fails with an assumption violation when both inputs are point masses or
/// neither symmetrized measure has more than two support points.
pub fn scaling_constant(x: &DiagonalData, y: &DiagonalData, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let (mx, my) = (x.symmetrized(), y.symmetrized());
    let (sx, sy) = (mx.atoms().support_size(), my.atoms().support_size());
    if sx <= 2 && sy <= 2 {
        return Err(Error::AssumptionViolated(format!(
            "need one input supported at more than two points after symmetrization (got {sx} and {sy})"
        )));
    }
    let rho = density_at_zero(&mx, &my, cfg)?;
    Ok((rho, std::f64::consts::PI * rho))
}

/// Mass of `[0, h]` divided by `h`: a crude density estimate at `0⁺`.
pub fn edge_density(scaled: &[f64], h: f64) -> f64 {
    if scaled.is_empty() {
        return f64::NAN;
    }
    scaled.iter().filter(|r| **r <= h).count() as f64 / (scaled.len() as f64 * h)
}

pub fn universality_experiment(setup: &UniversalitySetup<'_>) -> Result<UniversalityOutcome> {
    let start = Instant::now();
    let n = setup.x.len();
    if setup.y.len() != n {
        return Err(Error::invalid(format!("X has {n} entries but Y has {}", setup.y.len())));
    }
    if setup.n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let (rho0, s) = match setup.scaling {
        Scaling::Solve(cfg) => {
            let (rho, s) = scaling_constant(setup.x, setup.y, &cfg)?;
            (Some(rho), s)
        }
        Scaling::Fixed(s) if s > 0.0 && s.is_finite() => (None, s),
        Scaling::Fixed(s) => return Err(Error::invalid(format!("scaling must be positive, got {s}"))),
    };
    let raw = par_map(setup.n_samples, setup.seed, |_, rng| {
        let m = setup.ensemble.draw(setup.x, setup.y, setup.field, rng)?;
        Ok(n as f64 * setup.method.compute(&m)?)
    })?;
    let scaled: Vec<f64> = raw.iter().map(|r| s * r).collect();
    let ecdf = EmpiricalCdf::new(&scaled)?;
    let law = target_for(setup.field);
    let ks = ks_distance(&ecdf, &|r| law.cdf(r));
    let report = UniversalityReport {
        law_name: law.name().to_string(),
        field: setup.field,
        n,
        n_samples: setup.n_samples,
        scaling: s,
        ks_distance: ks,
        seed: setup.seed,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(UniversalityOutcome { report, rho0, edge_density: edge_density(&scaled, 0.1), raw, scaled, ecdf })
}

/// `index,n_lambda_1,scaled`.
pub fn write_lsv_csv(out: &mut dyn Write, raw: &[f64], scaled: &[f64]) -> Result<()> {
    writeln!(out, "index,n_lambda_1,scaled")?;
    for (k, (r, s)) in raw.iter().zip(scaled).enumerate() {
        writeln!(out, "{k},{r:e},{s:e}")?;
    }
    Ok(())
}

/// `r,empirical,target` on `points` equispaced radii up to the sample maximum.
pub fn write_cdf_csv(out: &mut dyn Write, ecdf: &EmpiricalCdf, field: Field, points: usize) -> Result<()> {
    let law = target_for(field);
    let top = ecdf.sorted().last().copied().unwrap_or(1.0).max(1e-12);
    writeln!(out, "r,empirical,target")?;
    for r in linspace(0.0, top, points.max(2)) {
        writeln!(out, "{r:e},{:e},{:e}", ecdf.eval(r), law.cdf(r))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{ensembles, smallest_sv_methods};
    use crate::families::measure_families;

    #[test]
    fn ginibre_reference_small() {
        let x = DiagonalData::zeros(20);
        let ens = ensembles().parse("ginibre").unwrap();
        let svd = smallest_sv_methods().parse("svd").unwrap();
        let setup = UniversalitySetup {
            x: &x,
            y: &x,
            field: Field::Complex,
            n_samples: 2000,
            seed: 5,
            ensemble: ens.as_ref(),
            method: svd.as_ref(),
            scaling: Scaling::Fixed(1.0),
        };
        let out = universality_experiment(&setup).unwrap();
        // DKW at α = 1e-3 for n = 2000 is 0.042
        assert!(out.report.ks_distance < 0.042, "{}", out.report.ks_distance);
        assert_eq!(out.report.law_name, "complex");
        assert_eq!(out.raw.len(), 2000);
        let again = universality_experiment(&setup).unwrap();
        assert_eq!(out.raw, again.raw);
    }

    #[test]
    fn scaling_rejects_degenerate_inputs() {
        let p = DiagonalData::new(vec![1.0; 8]).unwrap();
        let err = scaling_constant(&p, &p, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolated(_)));
        let u = measure_families().parse("uniform:0,1").unwrap().diagonal(100).unwrap();
        let (rho, s) = scaling_constant(&u, &u, &SolverConfig::default()).unwrap();
        assert!(rho > 0.1 && rho < 1.0);
        assert!((s - std::f64::consts::PI * rho).abs() < 1e-15);
        // joint dilation X, Y → cX, cY divides ρ(0) by c
        let (rho2, _) =
            scaling_constant(&u.scaled(2.0).unwrap(), &u.scaled(2.0).unwrap(), &SolverConfig::default()).unwrap();
        assert!((rho2 - rho / 2.0).abs() < 1e-6 * rho);
    }

    #[test]
    fn csv_outputs() {
        let e = EmpiricalCdf::new(&[0.5, 1.0]).unwrap();
        let mut out = Vec::new();
        write_cdf_csv(&mut out, &e, Field::Real, 3).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "r,empirical,target");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("1e0,1e0,"));
        let mut out = Vec::new();
        write_lsv_csv(&mut out, &[1.0], &[2.0]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "index,n_lambda_1,scaled\n0,1e0,2e0\n");
        assert_eq!(edge_density(&[0.05, 0.5], 0.1), 5.0);
    }
}
