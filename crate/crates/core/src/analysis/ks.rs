//! Empirical CDFs and Kolmogorov–Smirnov statistics.

use crate::error::{Error, Result};

/// Right-continuous step function of a finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical CDF of an empty sample"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid("sample contains NaN"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of the sample `≤ r`.
    pub fn eval(&self, r: f64) -> f64 {
        self.sorted.partition_point(|x| *x <= r) as f64 / self.len() as f64
    }
}

/// `sup_r |F_n(r) - F(r)|` for a continuous `F`.
pub fn ks_distance(ecdf: &EmpiricalCdf, cdf: &dyn Fn(f64) -> f64) -> f64 {
    let n = ecdf.len() as f64;
    ecdf.sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `sup_r |F_a(r) - F_b(r)|`.
pub fn ks_two_sample(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    let (xa, xb) = (a.sorted(), b.sorted());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Dvoretzky–Kiefer–Wolfowitz radius: `P(sup|F_n - F| > ε) ≤ α`.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_examples() {
        let e = EmpiricalCdf::new(&[0.0]).unwrap();
        let half = |x: f64| if x < 0.0 { 0.0 } else { 0.5 };
        assert_eq!(ks_distance(&e, &half), 0.5);

        let n = 999;
        let q: Vec<f64> = (1..=n).map(|k| k as f64 / (n + 1) as f64).collect();
        let unif = |x: f64| x.clamp(0.0, 1.0);
        let d = ks_distance(&EmpiricalCdf::new(&q).unwrap(), &unif);
        assert!(d <= 1.0 / n as f64 && d > 0.0);
        assert!(EmpiricalCdf::new(&[]).is_err());
        assert!(EmpiricalCdf::new(&[f64::NAN]).is_err());
    }

    #[test]
    fn uniform_draws_pass_dkw() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_distance(&EmpiricalCdf::new(&xs).unwrap(), &|x: f64| x.clamp(0.0, 1.0));
        assert!(d < 0.0193, "{d}");
        // 0.0193 is the DKW radius at α ≈ 1.2e-3
        assert!((dkw_epsilon(10_000, 1.16e-3) - 0.0193).abs() < 1e-4);
    }

    #[test]
    fn two_sample_examples() {
        let a = EmpiricalCdf::new(&[1.0, 2.0, 3.0]).unwrap();
        let b = EmpiricalCdf::new(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &b), 0.0);
        let c = EmpiricalCdf::new(&[10.0, 11.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &c), 1.0);
        let d = EmpiricalCdf::new(&[1.5, 2.5, 3.5]).unwrap();
        assert!((ks_two_sample(&a, &d) - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn ecdf_is_monotone_step(xs in proptest::collection::vec(-5.0f64..5.0, 1..40), r in -6.0f64..6.0, s in -6.0f64..6.0) {
            let e = EmpiricalCdf::new(&xs).unwrap();
            let (lo, hi) = if r <= s { (r, s) } else { (s, r) };
            prop_assert!(e.eval(lo) <= e.eval(hi));
            prop_assert!((0.0..=1.0).contains(&e.eval(r)));
            prop_assert_eq!(e.eval(6.0), 1.0);
            prop_assert_eq!(e.eval(-6.0), 0.0);
            let d = ks_distance(&e, &|x: f64| ((x + 5.0) / 10.0).clamp(0.0, 1.0));
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
