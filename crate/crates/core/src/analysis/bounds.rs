//! Runtime checks on the diagonal data: truncated inverse-distance sums and
//! regularity of a spectrum against a reference transform.

use serde::Serialize;

use crate::dynamics::{build_index_set, drift_matrices};
use crate::ensembles::DiagonalData;
use crate::error::{Error, Result};
use crate::measures::{linspace, SpectralMeasure, C64};

/// Which atoms enter the truncated sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundIndexing {
    /// `y_1, …, y_N`.
    PositiveHalf,
    /// `±y_1, …, ±y_N`, the spectrum the drift matrices see.
    #[default]
    Symmetrized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalBoundPoint {
    pub e: f64,
    /// `(1/2N) Σ_{|y-E| ≥ N^{-1+a}} 1/|y - E|`.
    pub sum_inverse: f64,
    /// `(1/2N) Σ_{|y-E| ≥ N^{-1+a}} 1/|y - E|²`.
    pub sum_inverse_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalBoundReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub a_exp: f64,
    pub indexing: BoundIndexing,
    pub threshold: f64,
    /// `sup |m_Y(E + iη)|` over the grid with `η ≥ N^{-1+a}`.
    pub c_a: f64,
    /// `2 C_a log N + 4`.
    pub log_bound: f64,
    /// `2 C_a N^{1-a}`.
    pub power_bound: f64,
    pub max_sum_inverse: f64,
    pub max_sum_inverse_sq: f64,
    /// `max sum_inverse / log N`.
    pub log_ratio: f64,
    pub within_bounds: bool,
    pub points: Vec<EmpiricalBoundPoint>,
}

fn truncated_sums(atoms: &[f64], n: usize, threshold: f64, e: f64) -> EmpiricalBoundPoint {
    let (mut s1, mut s2) = (0.0, 0.0);
    for a in atoms {
        let d = (a - e).abs();
        if d >= threshold {
            s1 += 1.0 / d;
            s2 += 1.0 / (d * d);
        }
    }
    let norm = 2.0 * n as f64;
    EmpiricalBoundPoint { e, sum_inverse: s1 / norm, sum_inverse_sq: s2 / norm }
}

pub fn empirical_bound_check(
    y: &DiagonalData,
    a_exp: f64,
    e_grid: &[f64],
    indexing: BoundIndexing,
) -> Result<EmpiricalBoundReport> {
    if !(a_exp > 0.0 && a_exp < 1.0) {
        return Err(Error::invalid(format!("a must lie in (0, 1), got {a_exp}")));
    }
    if e_grid.is_empty() {
        return Err(Error::invalid("empty energy grid"));
    }
    let n = y.len();
    let nf = n as f64;
    let threshold = nf.powf(-1.0 + a_exp);
    let atoms: Vec<f64> = match indexing {
        BoundIndexing::PositiveHalf => y.entries().to_vec(),
        BoundIndexing::Symmetrized => y.entries().iter().flat_map(|v| [*v, -*v]).collect(),
    };
    let points: Vec<EmpiricalBoundPoint> = e_grid.iter().map(|&e| truncated_sums(&atoms, n, threshold, e)).collect();

    let law = y.symmetrized();
    let etas: Vec<f64> = linspace(threshold.ln(), 10f64.ln(), 24).into_iter().map(f64::exp).collect();
    let c_a = e_grid
        .iter()
        .flat_map(|&e| etas.iter().map(move |&eta| C64::new(e, eta)))
        .map(|z| law.stieltjes(z).norm())
        .fold(0.0, f64::max);
    let log_bound = 2.0 * c_a * nf.ln() + 4.0;
    let power_bound = 2.0 * c_a * nf.powf(1.0 - a_exp);
    let max_sum_inverse = points.iter().map(|p| p.sum_inverse).fold(0.0, f64::max);
    let max_sum_inverse_sq = points.iter().map(|p| p.sum_inverse_sq).fold(0.0, f64::max);
    Ok(EmpiricalBoundReport {
        n,
        a_exp,
        indexing,
        threshold,
        c_a,
        log_bound,
        power_bound,
        max_sum_inverse,
        max_sum_inverse_sq,
        log_ratio: if n > 1 { max_sum_inverse / nf.ln() } else { f64::NAN },
        within_bounds: max_sum_inverse <= log_bound && max_sum_inverse_sq <= power_bound,
        points,
    })
}

/// `‖Â‖∞ / (1 + log N)` for the index set of exponent `a_exp`.
pub fn a_hat_ratio(y: &DiagonalData, a_exp: f64) -> f64 {
    let d = drift_matrices(y, &build_index_set(y, a_exp));
    d.a_hat_norm() / (1.0 + (y.len() as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityReport {
    pub g: f64,
    pub big_g: f64,
    pub max_deviation: f64,
    pub worst_e: f64,
    pub worst_eta: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// `max |Im m_V - Im m₃|` over `|E| ≤ G`, `η ∈ [g, 10]`, where `m_V` is the
/// symmetrized empirical transform of `singular_values`.
pub fn regularity_check(
    singular_values: &[f64],
    reference: &dyn SpectralMeasure,
    g: f64,
    big_g: f64,
    threshold: f64,
) -> Result<RegularityReport> {
    if !(g > 0.0 && g < 10.0 && big_g >= 0.0) {
        return Err(Error::invalid(format!("need 0 < g < 10 and G ≥ 0, got g = {g}, G = {big_g}")));
    }
    let law = DiagonalData::new(singular_values.iter().map(|s| s.abs()).collect())?.symmetrized();
    let es = linspace(-big_g, big_g, 41);
    let etas: Vec<f64> = linspace(g.ln(), 10f64.ln(), 25).into_iter().map(f64::exp).collect();
    let mut worst = (0.0, 0.0, 0.0);
    for &e in &es {
        for &eta in &etas {
            let z = C64::new(e, eta);
            let dev = (law.stieltjes(z).im - reference.stieltjes(z).im).abs();
            if dev > worst.0 {
                worst = (dev, e, eta);
            }
        }
    }
    Ok(RegularityReport {
        g,
        big_g,
        max_deviation: worst.0,
        worst_e: worst.1,
        worst_eta: worst.2,
        threshold,
        passed: worst.0 <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::sample_ginibre_reference;
    use crate::linalg::Field;
    use crate::measures::{quantile_atoms, Semicircle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_examples() {
        // at N = 2 every a ∈ (0, 1) gives a threshold above 1/2, so the sums are probed directly
        let p = truncated_sums(&[0.0, 1.0], 2, 0.4, 0.5);
        assert!((p.sum_inverse - 1.0).abs() < 1e-15);
        assert!((p.sum_inverse_sq - 2.0).abs() < 1e-15);
        let p = truncated_sums(&[0.0, -0.0, 1.0, -1.0], 2, 0.4, 0.5);
        assert!((p.sum_inverse - 0.25 * (2.0 + 2.0 + 2.0 + 1.0 / 1.5)).abs() < 1e-15);

        let y = DiagonalData::new(vec![0.0, 1.0]).unwrap();
        let r = empirical_bound_check(&y, 0.5, &[0.5], BoundIndexing::PositiveHalf).unwrap();
        assert!((r.threshold - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.points[0].sum_inverse, 0.0);

        let y = DiagonalData::new(vec![0.5, 0.6]).unwrap();
        let r = empirical_bound_check(&y, 0.5, &[0.55], BoundIndexing::PositiveHalf).unwrap();
        assert_eq!(r.points[0].sum_inverse, 0.0);
        assert_eq!(r.points[0].sum_inverse_sq, 0.0);
    }

    #[test]
    fn uniform_data_within_bounds() {
        let n = 1000;
        let y = DiagonalData::new((1..=n).map(|k| k as f64 / n as f64).collect()).unwrap();
        let grid = linspace(-1.2, 1.2, 97);
        for idx in [BoundIndexing::PositiveHalf, BoundIndexing::Symmetrized] {
            let r = empirical_bound_check(&y, 0.5, &grid, idx).unwrap();
            assert!(r.within_bounds, "{r:?}");
            assert!(r.log_ratio < 1.0);
        }
    }

    #[test]
    fn regularity_examples() {
        let sc = Semicircle::new(1.0).unwrap();
        // quarter-circle quantiles: moduli of semicircle quantiles
        let n = 400;
        let q = quantile_atoms(&sc, 2 * n).unwrap();
        let svals: Vec<f64> = q.locations().into_iter().filter(|x| *x > 0.0).collect();
        let g = 0.05;
        let r = regularity_check(&svals, &sc, g, 0.5, 10.0 / (svals.len() as f64 * g)).unwrap();
        assert!(r.passed, "{r:?}");

        let zeros = vec![0.0; 10];
        assert!(!regularity_check(&zeros, &sc, 0.5, 0.5, 0.05).unwrap().passed);

        let s = sample_ginibre_reference(n, Field::Complex, false, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let r = regularity_check(&s.singular_values, &sc, 0.05, 0.5, 0.05).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
