//! Reproducible parallel Monte Carlo.
//!
//! Sample `k` of a run with seed `s` always draws from ChaCha8 keyed by `s`
//! on stream `k`, so results do not depend on the number of workers or on
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// The generator for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Evaluates `f(k, rng_k)` for `k in 0..n` in parallel; output is in index order.
pub fn par_map<T, F>(n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    par_map_from(n, seed, 0, f)
}

/// Like [`par_map`], with sample `k` on stream `first_stream + k`.
pub fn par_map_from<T, F>(n: usize, seed: u64, first_stream: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|k| f(k, &mut sample_rng(seed, first_stream + k as u64)))
        .collect()
}

/// Runs `f` on a dedicated pool with `workers` threads (0 means rayon's default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn independent_of_worker_count() {
        let draw = |_k: usize, rng: &mut ChaCha8Rng| -> Result<f64> { Ok(rng.random()) };
        let one = with_workers(1, || par_map(50, 9, draw)).unwrap().unwrap();
        let four = with_workers(4, || par_map(50, 9, draw)).unwrap().unwrap();
        assert_eq!(one, four);
        assert_ne!(one[0], one[1]);
        let other_seed = par_map(50, 10, draw).unwrap();
        assert_ne!(one, other_seed);
    }

    #[test]
    fn errors_propagate() {
        let r: Result<Vec<()>> = par_map(10, 1, |k, _| if k == 7 { Err(Error::invalid("boom")) } else { Ok(()) });
        assert!(r.is_err());
    }

    #[test]
    fn summary_stats() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
