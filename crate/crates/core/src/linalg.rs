//! Dense linear algebra shared by the ensembles and the flows.

use std::ops::{Add, Mul, Neg, Sub};

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::C64;

/// Complex (unitary conjugation) or real (orthogonal conjugation) model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Complex,
    Real,
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Field::Complex => "complex",
            Field::Real => "real",
        })
    }
}

impl std::str::FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "complex" | "unitary" => Ok(Field::Complex),
            "real" | "orthogonal" => Ok(Field::Real),
            other => Err(Error::invalid(format!("unknown field '{other}' (expected complex or real)"))),
        }
    }
}

/// Entry type of a dense matrix: `f64` for the real model, `C64` for the complex one.
pub trait Scalar:
    faer::traits::ComplexField<Real = f64>
    + Copy
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const FIELD: Field;

    /// Standard Gaussian with `E|g|² = 1`.
    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_c64(self) -> C64;
    fn abs2(self) -> f64;
    /// `x/|x|`, or one at zero.
    fn unit_phase(self) -> Self;
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_c64(self) -> C64 {
        C64::new(self, 0.0)
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn unit_phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

impl Scalar for C64 {
    const FIELD: Field = Field::Complex;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
    fn from_f64(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn to_c64(self) -> C64 {
        self
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn unit_phase(self) -> Self {
        let r = self.norm();
        if r == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            self / r
        }
    }
}

/// `n × n` matrix of i.i.d. standard Gaussians scaled by `scale`.
pub fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Mat<T> {
    Mat::from_fn(n, n, |_, _| T::gaussian(rng) * T::from_f64(scale))
}

/// `Q` of `A = QR` normalized so that `diag(R) > 0`; this makes `Q` a
/// measurable function of `A` equivariant under left multiplication.
pub fn qr_positive<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    let qr = a.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..a.ncols().min(a.nrows()) {
        let ph = r[(j, j)].unit_phase();
        for i in 0..q.nrows() {
            q[(i, j)] = q[(i, j)] * ph;
        }
    }
    q
}

/// Haar-distributed unitary (`C64`) or orthogonal (`f64`) matrix.
pub fn haar<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<T> {
    let g = gaussian_matrix::<T, R>(n, 1.0, rng);
    qr_positive(g.as_ref())
}

/// `‖QQ* - I‖_F`.
pub fn unitarity_deviation<T: Scalar>(q: MatRef<'_, T>) -> f64 {
    let mut g = q * q.adjoint();
    for i in 0..g.nrows() {
        g[(i, i)] = g[(i, i)] - T::from_f64(1.0);
    }
    g.norm_l2()
}

pub fn to_complex<T: Scalar>(a: MatRef<'_, T>) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].to_c64())
}

fn svd_error(e: impl std::fmt::Debug) -> Error {
    Error::LinearAlgebra(format!("SVD did not converge: {e:?}"))
}

/// Singular values in nondecreasing order.
pub fn singular_values<T: Scalar>(a: MatRef<'_, T>) -> Result<Vec<f64>> {
    let mut s = a.singular_values().map_err(svd_error)?;
    s.reverse();
    Ok(s)
}

/// `A = J diag(s) K*` with `s` nondecreasing; columns of `J`, `K` follow `s`.
#[derive(Debug, Clone)]
pub struct SvdParts {
    pub s: Vec<f64>,
    pub j: Mat<C64>,
    pub k: Mat<C64>,
}

pub fn svd<T: Scalar>(a: MatRef<'_, T>) -> Result<SvdParts> {
    let d = a.svd().map_err(svd_error)?;
    let n = a.ncols();
    let sv = d.S().column_vector();
    let (u, v) = (d.U(), d.V());
    let rev = |c: usize| n - 1 - c;
    Ok(SvdParts {
        s: (0..n).map(|c| sv[rev(c)].real()).collect(),
        j: Mat::from_fn(u.nrows(), n, |i, c| u[(i, rev(c))].to_c64()),
        k: Mat::from_fn(v.nrows(), n, |i, c| v[(i, rev(c))].to_c64()),
    })
}

trait RealPart {
    fn real(self) -> f64;
}

impl<T: Scalar> RealPart for T {
    fn real(self) -> f64 {
        self.to_c64().re
    }
}

/// Smallest singular value by block inverse iteration on `(AA*)⁻¹` with a
/// Rayleigh–Ritz estimate; falls back to a full SVD if `A` is numerically
/// singular or the iteration stalls.
pub fn smallest_singular_value_lu<T: Scalar>(a: MatRef<'_, T>) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let k = n.min(4);
    let lu = a.partial_piv_lu();
    let a_norm = a.norm_l2();
    // fixed start block; no draws from the caller's stream
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut z = qr_thin(gaussian_matrix_rect::<T>(n, k, &mut rng).as_ref());
    let mut prev = 0.0f64;
    for _ in 0..100 {
        let mut w = z.clone();
        lu.solve_in_place(w.as_mut());
        if !w.norm_l2().is_finite() {
            break;
        }
        let s = largest_singular_value(w.as_ref())?;
        if !s.is_finite() || s * a_norm > 1e15 {
            break;
        }
        if (s - prev).abs() <= 1e-12 * s {
            return Ok(1.0 / s);
        }
        prev = s;
        lu.solve_adjoint_in_place(w.as_mut());
        if w.norm_l2().is_finite() {
            z = qr_thin(w.as_ref());
        } else {
            break;
        }
    }
    Ok(singular_values(a)?[0])
}

fn gaussian_matrix_rect<T: Scalar>(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Mat<T> {
    Mat::from_fn(n, k, |_, _| T::gaussian(rng))
}

fn qr_thin<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    a.qr().compute_thin_Q()
}

fn largest_singular_value<T: Scalar>(a: MatRef<'_, T>) -> Result<f64> {
    Ok(a.singular_values().map_err(svd_error)?.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 7, 40] {
            let q = haar::<C64, _>(n, &mut rng);
            assert!(unitarity_deviation(q.as_ref()) < 1e-10);
            let q = haar::<f64, _>(n, &mut rng);
            assert!(unitarity_deviation(q.as_ref()) < 1e-10);
        }
        let q = haar::<C64, _>(1, &mut rng);
        assert!((q[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn haar_trace_second_moment() {
        // E|Tr Q|² = 1 on U(N); oracle is the sample mean with its standard error
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20;
        let draws = 10_000;
        let vals: Vec<f64> = (0..draws)
            .map(|_| {
                let q = haar::<C64, _>(n, &mut rng);
                (0..n).map(|i| q[(i, i)]).sum::<C64>().norm_sqr()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian_matrix::<C64, _>(6, 1.0, &mut rng);
        let d = svd(a.as_ref()).unwrap();
        assert!(d.s.windows(2).all(|w| w[0] <= w[1]));
        let mut rec = Mat::<C64>::zeros(6, 6);
        for c in 0..6 {
            for i in 0..6 {
                for l in 0..6 {
                    rec[(i, l)] += d.j[(i, c)] * d.s[c] * d.k[(l, c)].conj();
                }
            }
        }
        assert!((&rec - &a).norm_l2() < 1e-12);
        assert_eq!(singular_values(a.as_ref()).unwrap().len(), 6);
    }

    #[test]
    fn lu_smallest_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1, 3, 10, 60] {
            let a = gaussian_matrix::<C64, _>(n, 1.0, &mut rng);
            let exact = singular_values(a.as_ref()).unwrap()[0];
            let fast = smallest_singular_value_lu(a.as_ref()).unwrap();
            assert!((exact - fast).abs() <= 1e-10 * exact.max(1e-300), "{n}: {exact} {fast}");
            let a = gaussian_matrix::<f64, _>(n, 1.0, &mut rng);
            let exact = singular_values(a.as_ref()).unwrap()[0];
            let fast = smallest_singular_value_lu(a.as_ref()).unwrap();
            assert!((exact - fast).abs() <= 1e-10 * exact, "{n}: {exact} {fast}");
        }
        // singular input falls back to the SVD
        let z = Mat::<f64>::zeros(5, 5);
        assert_eq!(smallest_singular_value_lu(z.as_ref()).unwrap(), 0.0);
        let mut d = Mat::<f64>::identity(4, 4);
        d[(3, 3)] = 1e-13;
        let s = smallest_singular_value_lu(d.as_ref()).unwrap();
        assert!((s - 1e-13).abs() < 1e-20);
    }

    #[test]
    fn field_parsing() {
        assert_eq!("complex".parse::<Field>().unwrap(), Field::Complex);
        assert_eq!("Real".parse::<Field>().unwrap(), Field::Real);
        assert!("quaternion".parse::<Field>().is_err());
        assert_eq!(Field::Real.to_string(), "real");
    }
}
