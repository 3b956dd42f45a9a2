//! Sampling the model `M = R*XT + U*YV`, its hermitization, resolvent
//! diagonals and the singular-vector overlaps that drive the dynamics.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{self, Field, Scalar, SvdParts};
use crate::measures::{symmetrize, AtomicMeasure, SymmetrizedMeasure, C64};
use crate::registry::{expect_params, Registry};

/// Singular-value gap below which singular vectors are treated as ill-conditioned.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Nonnegative diagonal entries of `X` or `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalData(Vec<f64>);

impl DiagonalData {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("diagonal data must have at least one entry"));
        }
        if let Some(bad) = entries.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return Err(Error::invalid(format!("diagonal entries must be finite and nonnegative, got {bad}")));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n.max(1)])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|e| e * c).collect())
    }

    pub fn empirical(&self) -> AtomicMeasure {
        AtomicMeasure::empirical(&self.0).expect("diagonal data is nonempty and finite")
    }

    pub fn symmetrized(&self) -> SymmetrizedMeasure {
        symmetrize(&self.empirical())
    }
}

/// A dense square matrix over the model's field.
#[derive(Debug, Clone)]
pub enum Dense {
    Real(Mat<f64>),
    Complex(Mat<C64>),
}

impl Dense {
    pub fn n(&self) -> usize {
        match self {
            Dense::Real(m) => m.nrows(),
            Dense::Complex(m) => m.nrows(),
        }
    }

    pub fn field(&self) -> Field {
        match self {
            Dense::Real(_) => Field::Real,
            Dense::Complex(_) => Field::Complex,
        }
    }

    pub fn to_complex(&self) -> Mat<C64> {
        match self {
            Dense::Real(m) => linalg::to_complex(m.as_ref()),
            Dense::Complex(m) => m.clone(),
        }
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        match self {
            Dense::Real(m) => linalg::singular_values(m.as_ref()),
            Dense::Complex(m) => linalg::singular_values(m.as_ref()),
        }
    }

    pub fn svd(&self) -> Result<SvdParts> {
        match self {
            Dense::Real(m) => linalg::svd(m.as_ref()),
            Dense::Complex(m) => linalg::svd(m.as_ref()),
        }
    }

    pub fn unitarity_deviation(&self) -> f64 {
        match self {
            Dense::Real(m) => linalg::unitarity_deviation(m.as_ref()),
            Dense::Complex(m) => linalg::unitarity_deviation(m.as_ref()),
        }
    }

    fn smallest_lu(&self) -> Result<f64> {
        match self {
            Dense::Real(m) => linalg::smallest_singular_value_lu(m.as_ref()),
            Dense::Complex(m) => linalg::smallest_singular_value_lu(m.as_ref()),
        }
    }
}

fn haar_dense(n: usize, field: Field, rng: &mut dyn RngCore) -> Dense {
    match field {
        Field::Real => Dense::Real(linalg::haar::<f64, _>(n, rng)),
        Field::Complex => Dense::Complex(linalg::haar::<C64, _>(n, rng)),
    }
}

/// Haar-distributed unitary (complex field) or orthogonal (real field) matrix.
pub fn sample_haar(n: usize, field: Field, rng: &mut dyn RngCore) -> Result<Dense> {
    if n == 0 {
        return Err(Error::invalid("matrix size must be at least 1"));
    }
    Ok(haar_dense(n, field, rng))
}

/// `diag(d) · A`.
fn scale_rows<T: Scalar>(d: &[f64], a: MatRef<'_, T>) -> Mat<T> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * T::from_f64(d[i]))
}

/// `A* diag(x) B + C* diag(y) D`.
fn two_term<T: Scalar>(
    a: MatRef<'_, T>,
    x: &[f64],
    b: MatRef<'_, T>,
    c: MatRef<'_, T>,
    y: &[f64],
    d: MatRef<'_, T>,
) -> Mat<T> {
    let left = a.adjoint() * scale_rows(x, b).as_ref();
    let right = c.adjoint() * scale_rows(y, d).as_ref();
    left + right
}

/// `X + Q₁ Y Q₂` for independent Haar `Q₁, Q₂`; its singular values have the
/// same law as those of `R*XT + U*YV`.
fn reduced<T: Scalar>(x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Mat<T> {
    let n = x.len();
    let q1 = linalg::haar::<T, _>(n, rng);
    let q2 = linalg::haar::<T, _>(n, rng);
    let mut m = q1 * scale_rows(y, q2.as_ref()).as_ref();
    for i in 0..n {
        m[(i, i)] = m[(i, i)] + T::from_f64(x[i]);
    }
    m
}

#[derive(Debug, Clone)]
pub struct HaarFactors {
    pub r: Dense,
    pub t: Dense,
    pub u: Dense,
    pub v: Dense,
}

#[derive(Debug, Clone)]
pub struct ModelSample {
    pub n: usize,
    pub field: Field,
    pub x: DiagonalData,
    pub y: DiagonalData,
    pub factors: Option<HaarFactors>,
    pub m: Dense,
    /// Nondecreasing.
    pub singular_values: Vec<f64>,
    /// Left and right singular vectors `J`, `K`, columns ordered like `singular_values`.
    pub vectors: Option<(Mat<C64>, Mat<C64>)>,
    /// Whether a tiny perturbation was added to split a degenerate spectrum.
    pub regularized: bool,
}

impl ModelSample {
    pub fn smallest(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn min_gap(&self) -> f64 {
        min_gap(&self.singular_values)
    }

    /// `U M V*`, the frame in which `Y` is diagonal.
    pub fn y_frame(&self) -> Result<Mat<C64>> {
        let f = self
            .factors
            .as_ref()
            .ok_or_else(|| Error::invalid("sample has no Haar factors"))?;
        let m = self.m.to_complex();
        Ok(f.u.to_complex() * m * f.v.to_complex().adjoint())
    }
}

pub fn min_gap(sorted: &[f64]) -> f64 {
    sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn check_pair(x: &DiagonalData, y: &DiagonalData) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("X has {} entries but Y has {}", x.len(), y.len())));
    }
    Ok(x.len())
}

fn finish_sample(
    x: DiagonalData,
    y: DiagonalData,
    field: Field,
    factors: Option<HaarFactors>,
    mut m: Dense,
    with_vectors: bool,
    rng: &mut dyn RngCore,
) -> Result<ModelSample> {
    let n = m.n();
    let mut regularized = false;
    let (singular_values, vectors) = if with_vectors {
        let mut parts = m.svd()?;
        if min_gap(&parts.s) < DEGENERATE_GAP {
            m = match m {
                Dense::Real(a) => Dense::Real(a + linalg::gaussian_matrix::<f64, _>(n, DEGENERATE_GAP, rng)),
                Dense::Complex(a) => Dense::Complex(a + linalg::gaussian_matrix::<C64, _>(n, DEGENERATE_GAP, rng)),
            };
            parts = m.svd()?;
            regularized = true;
        }
        (parts.s, Some((parts.j, parts.k)))
    } else {
        (m.singular_values()?, None)
    };
    Ok(ModelSample { n, field, x, y, factors, m, singular_values, vectors, regularized })
}

/// Draws `R, T, U, V` (in that order) and assembles `M = R*XT + U*YV`.
pub fn assemble_model(
    x: &DiagonalData,
    y: &DiagonalData,
    field: Field,
    with_vectors: bool,
    rng: &mut dyn RngCore,
) -> Result<ModelSample> {
    let n = check_pair(x, y)?;
    let (xe, ye) = (x.entries(), y.entries());
    let (factors, m) = match field {
        Field::Real => {
            let [r, t, u, v] = std::array::from_fn(|_| linalg::haar::<f64, _>(n, rng));
            let m = two_term(r.as_ref(), xe, t.as_ref(), u.as_ref(), ye, v.as_ref());
            let f = HaarFactors { r: Dense::Real(r), t: Dense::Real(t), u: Dense::Real(u), v: Dense::Real(v) };
            (f, Dense::Real(m))
        }
        Field::Complex => {
            let [r, t, u, v] = std::array::from_fn(|_| linalg::haar::<C64, _>(n, rng));
            let m = two_term(r.as_ref(), xe, t.as_ref(), u.as_ref(), ye, v.as_ref());
            let f = HaarFactors {
                r: Dense::Complex(r),
                t: Dense::Complex(t),
                u: Dense::Complex(u),
                v: Dense::Complex(v),
            };
            (f, Dense::Complex(m))
        }
    };
    finish_sample(x.clone(), y.clone(), field, Some(factors), m, with_vectors, rng)
}

/// `X + Q₁YQ₂`, distributionally equivalent to the four-factor model for singular values.
pub fn reduced_model(x: &DiagonalData, y: &DiagonalData, field: Field, rng: &mut dyn RngCore) -> Result<Dense> {
    check_pair(x, y)?;
    Ok(match field {
        Field::Real => Dense::Real(reduced::<f64>(x.entries(), y.entries(), rng)),
        Field::Complex => Dense::Complex(reduced::<C64>(x.entries(), y.entries(), rng)),
    })
}

/// Ginibre matrix with entries of variance `1/N`, so `P(Nλ₁ ≤ r) = 1 - e^{-r²}` in the complex case.
pub fn ginibre_matrix(n: usize, field: Field, rng: &mut dyn RngCore) -> Result<Dense> {
    if n == 0 {
        return Err(Error::invalid("matrix size must be at least 1"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(match field {
        Field::Real => Dense::Real(linalg::gaussian_matrix::<f64, _>(n, scale, rng)),
        Field::Complex => Dense::Complex(linalg::gaussian_matrix::<C64, _>(n, scale, rng)),
    })
}

pub fn sample_ginibre_reference(
    n: usize,
    field: Field,
    with_vectors: bool,
    rng: &mut dyn RngCore,
) -> Result<ModelSample> {
    let m = ginibre_matrix(n, field, rng)?;
    finish_sample(DiagonalData::zeros(n), DiagonalData::zeros(n), field, None, m, with_vectors, rng)
}

/// A matrix ensemble whose singular values are studied.
pub trait Ensemble: Send + Sync {
    fn name(&self) -> &'static str;
    fn draw(&self, x: &DiagonalData, y: &DiagonalData, field: Field, rng: &mut dyn RngCore) -> Result<Dense>;
}

struct FourFactor;
struct Reduced;
struct Ginibre;

impl Ensemble for FourFactor {
    fn name(&self) -> &'static str {
        "model"
    }
    fn draw(&self, x: &DiagonalData, y: &DiagonalData, field: Field, rng: &mut dyn RngCore) -> Result<Dense> {
        let n = check_pair(x, y)?;
        let (xe, ye) = (x.entries(), y.entries());
        Ok(match field {
            Field::Real => {
                let [r, t, u, v] = std::array::from_fn(|_| linalg::haar::<f64, _>(n, rng));
                Dense::Real(two_term(r.as_ref(), xe, t.as_ref(), u.as_ref(), ye, v.as_ref()))
            }
            Field::Complex => {
                let [r, t, u, v] = std::array::from_fn(|_| linalg::haar::<C64, _>(n, rng));
                Dense::Complex(two_term(r.as_ref(), xe, t.as_ref(), u.as_ref(), ye, v.as_ref()))
            }
        })
    }
}

impl Ensemble for Reduced {
    fn name(&self) -> &'static str {
        "reduced"
    }
    fn draw(&self, x: &DiagonalData, y: &DiagonalData, field: Field, rng: &mut dyn RngCore) -> Result<Dense> {
        reduced_model(x, y, field, rng)
    }
}

impl Ensemble for Ginibre {
    fn name(&self) -> &'static str {
        "ginibre"
    }
    fn draw(&self, x: &DiagonalData, _y: &DiagonalData, field: Field, rng: &mut dyn RngCore) -> Result<Dense> {
        ginibre_matrix(x.len(), field, rng)
    }
}

pub fn ensembles() -> Registry<dyn Ensemble> {
    let mut reg: Registry<dyn Ensemble> = Registry::new("ensemble");
    reg.register("model", |p| {
        expect_params("model", p, 0)?;
        Ok(Box::new(FourFactor))
    });
    reg.register("reduced", |p| {
        expect_params("reduced", p, 0)?;
        Ok(Box::new(Reduced))
    });
    reg.register("ginibre", |p| {
        expect_params("ginibre", p, 0)?;
        Ok(Box::new(Ginibre))
    });
    reg
}

/// Strategy for the least singular value of a dense matrix.
pub trait SmallestSingularValue: Send + Sync {
    fn name(&self) -> &'static str;
    fn compute(&self, m: &Dense) -> Result<f64>;
}

struct FullSvd;
struct InverseIteration;

impl SmallestSingularValue for FullSvd {
    fn name(&self) -> &'static str {
        "svd"
    }
    fn compute(&self, m: &Dense) -> Result<f64> {
        Ok(m.singular_values()?[0])
    }
}

impl SmallestSingularValue for InverseIteration {
    fn name(&self) -> &'static str {
        "lu"
    }
    fn compute(&self, m: &Dense) -> Result<f64> {
        m.smallest_lu()
    }
}

pub fn smallest_sv_methods() -> Registry<dyn SmallestSingularValue> {
    let mut reg: Registry<dyn SmallestSingularValue> = Registry::new("smallest-singular-value method");
    reg.register("svd", |p| {
        expect_params("svd", p, 0)?;
        Ok(Box::new(FullSvd))
    });
    reg.register("lu", |p| {
        expect_params("lu", p, 0)?;
        Ok(Box::new(InverseIteration))
    });
    reg
}

/// `[[0, B], [B*, 0]]`, kept as `B` and its SVD.
#[derive(Debug, Clone)]
pub struct HermitizedOperator {
    b: Mat<C64>,
    svd: SvdParts,
}

pub fn hermitize(b: MatRef<'_, C64>) -> Result<HermitizedOperator> {
    if b.nrows() != b.ncols() || b.nrows() == 0 {
        return Err(Error::invalid("hermitization needs a nonempty square matrix"));
    }
    Ok(HermitizedOperator { b: b.to_owned(), svd: linalg::svd(b)? })
}

impl HermitizedOperator {
    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn block(&self) -> MatRef<'_, C64> {
        self.b.as_ref()
    }

    pub fn svd(&self) -> &SvdParts {
        &self.svd
    }

    /// `{±σ_i(B)}` in nondecreasing order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.svd.s.iter().rev().map(|s| -s).collect();
        out.extend(self.svd.s.iter().copied());
        out
    }

    /// The `2N × 2N` matrix itself.
    pub fn dense(&self) -> Mat<C64> {
        let n = self.n();
        Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, false) => self.b[(i, j - n)],
            (false, true) => self.b[(j, i - n)].conj(),
            _ => C64::new(0.0, 0.0),
        })
    }

    /// Eigenvalues of [`Self::dense`] from a dense Hermitian eigensolver.
    pub fn dense_eigenvalues(&self) -> Result<Vec<f64>> {
        self.dense()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("eigensolver failed: {e:?}")))
    }

    /// Diagonal of `(H - z)⁻¹` through the spectral decomposition.
    pub fn green_diag(&self, z: C64) -> Result<Vec<C64>> {
        if !(z.im > 0.0) {
            return Err(Error::invalid(format!("spectral parameter must satisfy Im z > 0, got {z}")));
        }
        let n = self.n();
        let z2 = z * z;
        let kernel: Vec<C64> = self.svd.s.iter().map(|s| z / (s * s - z2)).collect();
        let diag = |u: &Mat<C64>, i: usize| -> C64 { (0..n).map(|a| u[(i, a)].norm_sqr() * kernel[a]).sum() };
        Ok((0..2 * n)
            .map(|i| if i < n { diag(&self.svd.j, i) } else { diag(&self.svd.k, i - n) })
            .collect())
    }

    /// Full resolvent `(H - z)⁻¹` by dense inversion.
    pub fn green_full(&self, z: C64) -> Result<Mat<C64>> {
        if !(z.im > 0.0) {
            return Err(Error::invalid(format!("spectral parameter must satisfy Im z > 0, got {z}")));
        }
        let mut h = self.dense();
        for i in 0..h.nrows() {
            h[(i, i)] -= z;
        }
        Ok(h.partial_piv_lu().inverse())
    }
}

pub fn green_diag(op: &HermitizedOperator, z: C64) -> Result<Vec<C64>> {
    op.green_diag(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapConvention {
    /// `½ Σ (|w_α(a)|²|z_β(b)|² + |w_β(a)|²|z_α(b)|²)`, symmetric in `α, β`.
    #[default]
    Symmetric,
    /// `½ Σ |w_α(a)|²|z_β(b)|² + Σ |w_β(a)|²|z_α(b)|²`, kept for comparison.
    Asymmetric,
}

/// Overlap vectors `w_α`, `z_α` in the `Y` frame and the table `γ_αβ`.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    pub w: Mat<C64>,
    pub z: Mat<C64>,
    /// `γ[(α, β)]`, indices follow nondecreasing singular values.
    pub gamma: Mat<f64>,
    pub min_gap: f64,
    pub near_degenerate: bool,
}

/// `γ_αβ` over the pair set `complement(a, b)` from vectors `w`, `z` (columns).
pub fn overlap_table(
    w: Mat<C64>,
    z: Mat<C64>,
    singular_values: &[f64],
    complement: &dyn Fn(usize, usize) -> bool,
    convention: OverlapConvention,
) -> OverlapTable {
    let n = w.nrows();
    let p = Mat::<f64>::from_fn(n, n, |a, alpha| w[(a, alpha)].norm_sqr());
    let q = Mat::<f64>::from_fn(n, n, |b, beta| z[(b, beta)].norm_sqr());
    let c = Mat::<f64>::from_fn(n, n, |a, b| if complement(a, b) { 1.0 } else { 0.0 });
    // g[(α, β)] = Σ_{a,b} C_ab |w_α(a)|² |z_β(b)|²
    let g = p.transpose() * (&c * &q);
    let gamma = match convention {
        OverlapConvention::Symmetric => Mat::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)])),
        OverlapConvention::Asymmetric => Mat::from_fn(n, n, |i, j| 0.5 * g[(i, j)] + g[(j, i)]),
    };
    let gap = min_gap(singular_values);
    OverlapTable { w, z, gamma, min_gap: gap, near_degenerate: gap < DEGENERATE_GAP }
}

/// Overlaps of a sample drawn with factors and singular vectors: `w_α = U j_α`, `z_α = V k_α`.
pub fn overlaps(
    sample: &ModelSample,
    complement: &dyn Fn(usize, usize) -> bool,
    convention: OverlapConvention,
) -> Result<OverlapTable> {
    let f = sample
        .factors
        .as_ref()
        .ok_or_else(|| Error::invalid("overlaps need the Haar factors of the sample"))?;
    let (j, k) = sample
        .vectors
        .as_ref()
        .ok_or_else(|| Error::invalid("overlaps need singular vectors; sample with vectors enabled"))?;
    let w = f.u.to_complex() * j;
    let z = f.v.to_complex() * k;
    Ok(overlap_table(w, z, &sample.singular_values, complement, convention))
}
