//! Delocalization of the overlap vectors `w_α = U j_α`, `z_α = V k_α`.

use serde::Serialize;

use crate::ensembles::OverlapTable;
use crate::error::{Error, Result};
use crate::montecarlo::mean_and_se;

pub struct DelocalizationSample {
    pub table: OverlapTable,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelocalizationReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub samples: usize,
    /// `max_{α,i} (|w_α(i)|² + |z_α(i)|²) / 2`: squared entries of the unit
    /// eigenvector `(w_α, z_α)/√2` of the hermitization.
    pub global_max: f64,
    /// Same, restricted to `λ_α` in the bulk window.
    pub bulk_max: Option<f64>,
    pub bulk_window: Option<(f64, f64)>,
    /// `10 log N / N`.
    pub log_threshold: f64,
    /// `max_{α≠β} γ_αβ`.
    pub max_gamma_offdiag: f64,
    /// `|I^c| / N²`: the mean of `γ_αβ` for independent uniformly random unit vectors.
    pub haar_gamma_scale: f64,
    /// Mean and standard error of `|w_1(1)|²` across samples; `1/N` under Haar invariance.
    pub corner_mean: f64,
    pub corner_se: f64,
}

/// `complement_size` is `|I^c|`, the number of pairs the overlaps are summed over.
pub fn delocalization_stats(
    samples: &[DelocalizationSample],
    bulk: Option<(f64, f64)>,
    complement_size: usize,
) -> Result<DelocalizationReport> {
    let first = samples.first().ok_or_else(|| Error::invalid("no samples"))?;
    let n = first.table.w.nrows();
    let mut global_max = 0.0f64;
    let mut bulk_max: Option<f64> = None;
    let mut max_gamma = 0.0f64;
    let mut corner = Vec::with_capacity(samples.len());
    for s in samples {
        let (w, z) = (&s.table.w, &s.table.z);
        if w.nrows() != n || s.singular_values.len() != n {
            return Err(Error::invalid("samples must share one matrix size"));
        }
        for alpha in 0..n {
            let col = (0..n).map(|i| 0.5 * (w[(i, alpha)].norm_sqr() + z[(i, alpha)].norm_sqr())).fold(0.0, f64::max);
            global_max = global_max.max(col);
            if let Some((lo, hi)) = bulk {
                let l = s.singular_values[alpha];
                if l >= lo && l <= hi {
                    bulk_max = Some(bulk_max.unwrap_or(0.0).max(col));
                }
            }
            for beta in 0..n {
                if beta != alpha {
                    max_gamma = max_gamma.max(s.table.gamma[(alpha, beta)]);
                }
            }
        }
        corner.push(w[(0, 0)].norm_sqr());
    }
    let (corner_mean, corner_se) = mean_and_se(&corner);
    Ok(DelocalizationReport {
        n,
        samples: samples.len(),
        global_max,
        bulk_max,
        bulk_window: bulk,
        log_threshold: 10.0 * (n as f64).ln() / n as f64,
        max_gamma_offdiag: max_gamma,
        haar_gamma_scale: complement_size as f64 / (n * n) as f64,
        corner_mean,
        corner_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{assemble_model, overlap_table, overlaps, DiagonalData, OverlapConvention};
    use crate::linalg::Field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(n: usize, seed: u64) -> DelocalizationSample {
        let x = DiagonalData::new((1..=n).map(|k| k as f64 / n as f64).collect()).unwrap();
        let s = assemble_model(&x, &x, Field::Complex, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let table = overlaps(&s, &|a, b| a == b, OverlapConvention::Symmetric).unwrap();
        DelocalizationSample { table, singular_values: s.singular_values }
    }

    #[test]
    fn scalar_case_is_one() {
        let r = delocalization_stats(&[draw(1, 0)], Some((0.0, 10.0)), 1).unwrap();
        assert!((r.global_max - 1.0).abs() < 1e-14);
        assert_eq!(r.bulk_max.map(|b| (b - 1.0).abs() < 1e-14), Some(true));
    }

    /// Singular vectors of `M` itself, whose law is invariant under `M → QM`.
    fn draw_model_frame(n: usize, seed: u64) -> DelocalizationSample {
        let x = DiagonalData::new((1..=n).map(|k| k as f64 / n as f64).collect()).unwrap();
        let s = assemble_model(&x, &x, Field::Complex, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (j, k) = s.vectors.clone().unwrap();
        let table = overlap_table(j, k, &s.singular_values, &|a, b| a == b, OverlapConvention::Symmetric);
        DelocalizationSample { table, singular_values: s.singular_values }
    }

    #[test]
    fn haar_corner_mean() {
        let n = 12;
        let samples: Vec<_> = (0..400).map(|k| draw_model_frame(n, 100 + k)).collect();
        let r = delocalization_stats(&samples, None, n).unwrap();
        assert!((r.corner_mean - 1.0 / n as f64).abs() < 3.0 * r.corner_se, "{r:?}");
        assert!(r.global_max <= 1.0 && r.global_max > 1.0 / n as f64);
        assert!(r.bulk_max.is_none());
        assert!((r.haar_gamma_scale - 1.0 / n as f64).abs() < 1e-15);
    }
}
