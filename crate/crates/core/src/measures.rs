//! Probability measures on the real line and their Stieltjes-type transforms.
//!
//! Everything downstream (subordination, local laws, regularity checks)
//! consumes measures only through [`SpectralMeasure`], so atomic empirical
//! measures and closed-form laws are interchangeable.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Tolerance on the total mass of an [`AtomicMeasure`].
pub const MASS_TOL: f64 = 1e-12;

/// Below this modulus `-1/m` is treated as division-degenerate.
pub const HAT_EPS: f64 = 1e-200;

/// A finite measure seen through its Stieltjes transform `m(z) = ∫ dμ(x)/(x - z)`.
///
/// Implementations must be valid for every `z` off the real support, in
/// both half-planes; symmetrization evaluates at `-z`.
pub trait SpectralMeasure: Send + Sync {
    fn stieltjes(&self, z: C64) -> C64;

    /// `m'(z) = ∫ dμ(x)/(x - z)^2`.
    fn stieltjes_derivative(&self, z: C64) -> C64;

    /// `∫ x² dμ`, the total mass of the auxiliary measure behind `-z - 1/m(z)`.
    fn second_moment(&self) -> f64;

    /// `Some(a)` when the measure is the point mass `δ_a`.
    fn point_mass(&self) -> Option<f64> {
        None
    }

    /// `-z - 1/m(z)` in a form without cancellation, when one is known.
    fn hat_closed_form(&self, _z: C64) -> Option<C64> {
        None
    }

    fn label(&self) -> String;
}

impl<M: SpectralMeasure + ?Sized> SpectralMeasure for Box<M> {
    fn stieltjes(&self, z: C64) -> C64 {
        (**self).stieltjes(z)
    }
    fn stieltjes_derivative(&self, z: C64) -> C64 {
        (**self).stieltjes_derivative(z)
    }
    fn second_moment(&self) -> f64 {
        (**self).second_moment()
    }
    fn point_mass(&self) -> Option<f64> {
        (**self).point_mass()
    }
    fn hat_closed_form(&self, z: C64) -> Option<C64> {
        (**self).hat_closed_form(z)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

impl<M: SpectralMeasure + ?Sized> SpectralMeasure for &M {
    fn stieltjes(&self, z: C64) -> C64 {
        (**self).stieltjes(z)
    }
    fn stieltjes_derivative(&self, z: C64) -> C64 {
        (**self).stieltjes_derivative(z)
    }
    fn second_moment(&self) -> f64 {
        (**self).second_moment()
    }
    fn point_mass(&self) -> Option<f64> {
        (**self).point_mass()
    }
    fn hat_closed_form(&self, z: C64) -> Option<C64> {
        (**self).hat_closed_form(z)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

fn require_upper(z: C64) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("spectral parameter must satisfy Im z > 0, got {z}")))
    }
}

/// Stieltjes transform at `z ∈ C⁺`.
pub fn stieltjes(mu: &dyn SpectralMeasure, z: C64) -> Result<C64> {
    require_upper(z)?;
    Ok(mu.stieltjes(z))
}

/// `ĥm(z) = -z - 1/m(z)`.
pub fn hat_transform(mu: &dyn SpectralMeasure, z: C64) -> Result<C64> {
    require_upper(z)?;
    hat_unchecked(mu, z)
}

pub(crate) fn hat_unchecked(mu: &dyn SpectralMeasure, z: C64) -> Result<C64> {
    if let Some(a) = mu.point_mass() {
        return Ok(C64::new(-a, 0.0));
    }
    if let Some(h) = mu.hat_closed_form(z) {
        return Ok(h);
    }
    let m = mu.stieltjes(z);
    if m.norm() < HAT_EPS {
        return Err(Error::DegenerateTransform(m.norm()));
    }
    Ok(-z - m.inv())
}

/// `ĥm'(z) = -1 + m'(z)/m(z)²`; this is `∫ dμ̂(x)/(x - z)²` for the auxiliary measure.
pub(crate) fn hat_derivative(mu: &dyn SpectralMeasure, z: C64) -> Result<C64> {
    let m = mu.stieltjes(z);
    if m.norm() < HAT_EPS {
        return Err(Error::DegenerateTransform(m.norm()));
    }
    Ok(-1.0 + mu.stieltjes_derivative(z) / (m * m))
}

/// A point `z` paired with a transform value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValue {
    pub z: C64,
    pub m: C64,
}

impl TransformValue {
    pub fn evaluate(mu: &dyn SpectralMeasure, z: C64) -> Result<Self> {
        Ok(Self { z, m: stieltjes(mu, z)? })
    }
}

/// Weighted atoms `Σ w_k δ_{x_k}` with total weight one.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atomic measure needs at least one atom"));
        }
        let mut total = 0.0;
        for &(x, w) in &atoms {
            if !x.is_finite() {
                return Err(Error::invalid(format!("non-finite atom location {x}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("atom weight must be positive, got {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(Self { atoms })
    }

    /// Equal weights `1/n` on the given locations (the empirical measure).
    pub fn empirical(locations: &[f64]) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("empirical measure of an empty sample"));
        }
        let w = 1.0 / locations.len() as f64;
        Self::new(locations.iter().map(|&x| (x, w)).collect())
    }

    pub fn dirac(a: f64) -> Self {
        Self { atoms: vec![(a, 1.0)] }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.0).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Number of distinct support points.
    pub fn support_size(&self) -> usize {
        let mut xs = self.locations();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "location,weight")?;
        for &(x, w) in &self.atoms {
            writeln!(out, "{x:e},{w:e}")?;
        }
        Ok(())
    }

    /// Reads the `location,weight` format; weights are renormalized if they
    /// are within 1e-6 of unit mass (files carry rounded decimals).
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut lines = input.lines();
        match lines.next() {
            Some(header) => {
                let header = header?;
                if header.trim() != "location,weight" {
                    return Err(Error::invalid(format!("expected header 'location,weight', got '{header}'")));
                }
            }
            None => return Err(Error::invalid("empty measure file")),
        }
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (x, w) = line
                .split_once(',')
                .ok_or_else(|| Error::invalid(format!("line {}: expected two columns", lineno + 2)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("line {}: bad number '{s}'", lineno + 2)))
            };
            atoms.push((parse(x)?, parse(w)?));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() <= 1e-6 && total > 0.0 {
            for a in &mut atoms {
                a.1 /= total;
            }
        }
        Self::new(atoms)
    }
}

impl SpectralMeasure for AtomicMeasure {
    fn stieltjes(&self, z: C64) -> C64 {
        self.atoms.iter().map(|&(x, w)| w / (x - z)).sum()
    }

    fn stieltjes_derivative(&self, z: C64) -> C64 {
        self.atoms
            .iter()
            .map(|&(x, w)| {
                let d = x - z;
                w / (d * d)
            })
            .sum()
    }

    fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * x * x).sum()
    }

    fn point_mass(&self) -> Option<f64> {
        let first = self.atoms[0].0;
        self.atoms.iter().all(|a| a.0 == first).then_some(first)
    }

    fn label(&self) -> String {
        format!("atomic({} atoms)", self.atoms.len())
    }
}

/// The pushforward `½[μ(A) + μ(-A)]` of an atomic measure.
///
/// Atoms at the origin keep their full weight; every other atom `(x, w)`
/// becomes `(±x, w/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizedMeasure {
    base: AtomicMeasure,
    expanded: AtomicMeasure,
}

pub fn symmetrize(mu: &AtomicMeasure) -> SymmetrizedMeasure {
    let mut atoms = Vec::with_capacity(2 * mu.len());
    for &(x, w) in mu.atoms() {
        if x == 0.0 {
            atoms.push((0.0, w));
        } else {
            atoms.push((x, 0.5 * w));
            atoms.push((-x, 0.5 * w));
        }
    }
    SymmetrizedMeasure { base: mu.clone(), expanded: AtomicMeasure { atoms } }
}

impl SymmetrizedMeasure {
    pub fn base(&self) -> &AtomicMeasure {
        &self.base
    }

    pub fn atoms(&self) -> &AtomicMeasure {
        &self.expanded
    }
}

impl SpectralMeasure for SymmetrizedMeasure {
    // Σ w · ½(1/(x - z) + 1/(-x - z)) = Σ w · z/(x² - z²)
    fn stieltjes(&self, z: C64) -> C64 {
        let z2 = z * z;
        self.base.atoms().iter().map(|&(x, w)| w * z / (x * x - z2)).sum()
    }

    fn stieltjes_derivative(&self, z: C64) -> C64 {
        let z2 = z * z;
        self.base
            .atoms()
            .iter()
            .map(|&(x, w)| {
                let d = x * x - z2;
                w * (x * x + z2) / (d * d)
            })
            .sum()
    }

    fn second_moment(&self) -> f64 {
        self.base.second_moment()
    }

    fn point_mass(&self) -> Option<f64> {
        match self.base.point_mass() {
            Some(a) if a == 0.0 => Some(0.0),
            _ => None,
        }
    }

    fn label(&self) -> String {
        format!("sym({})", self.base.label())
    }
}

/// Symmetrization of an arbitrary law: `m_sym(z) = ½(m(z) - m(-z))`.
#[derive(Debug, Clone)]
pub struct SymmetrizedLaw<M> {
    pub inner: M,
}

impl<M: SpectralMeasure> SymmetrizedLaw<M> {
    pub fn new(inner: M) -> Self {
        Self { inner }
    }
}

impl<M: SpectralMeasure> SpectralMeasure for SymmetrizedLaw<M> {
    fn stieltjes(&self, z: C64) -> C64 {
        0.5 * (self.inner.stieltjes(z) - self.inner.stieltjes(-z))
    }

    fn stieltjes_derivative(&self, z: C64) -> C64 {
        0.5 * (self.inner.stieltjes_derivative(z) + self.inner.stieltjes_derivative(-z))
    }

    fn second_moment(&self) -> f64 {
        self.inner.second_moment()
    }

    fn point_mass(&self) -> Option<f64> {
        match self.inner.point_mass() {
            Some(a) if a == 0.0 => Some(0.0),
            _ => None,
        }
    }

    fn label(&self) -> String {
        format!("sym({})", self.inner.label())
    }
}

/// `sqrt(z - a) · sqrt(z + a)`: the branch of `sqrt(z² - a²)` that behaves
/// like `z` at infinity, analytic off `[-a, a]`.
fn sqrt_cut(z: C64, a: f64) -> C64 {
    (z - a).sqrt() * (z + a).sqrt()
}

/// Wigner semicircle law with the given variance, supported on `[-2σ, 2σ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Semicircle {
    pub variance: f64,
}

impl Semicircle {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!("semicircle variance must be positive, got {variance}")));
        }
        Ok(Self { variance })
    }

    pub fn radius(&self) -> f64 {
        2.0 * self.variance.sqrt()
    }

    pub fn density(&self, x: f64) -> f64 {
        let r = self.radius();
        if x.abs() >= r {
            0.0
        } else {
            (r * r - x * x).sqrt() / (2.0 * PI * self.variance)
        }
    }
}

impl SpectralMeasure for Semicircle {
    fn stieltjes(&self, z: C64) -> C64 {
        // (-z + s)/(2σ²) rationalized; z + s does not cancel where m is small
        -2.0 / (z + sqrt_cut(z, self.radius()))
    }

    fn stieltjes_derivative(&self, z: C64) -> C64 {
        // σ²m² + zm + 1 = 0  ⇒  m' = -m / (2σ²m + z) = -m / sqrt(z² - 4σ²)
        -self.stieltjes(z) / sqrt_cut(z, self.radius())
    }

    fn second_moment(&self) -> f64 {
        self.variance
    }

    fn hat_closed_form(&self, z: C64) -> Option<C64> {
        Some(self.variance * self.stieltjes(z))
    }

    fn label(&self) -> String {
        format!("semicircle({})", self.variance)
    }
}

/// Uniform law on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

impl Uniform {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("uniform law needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }
}

impl SpectralMeasure for Uniform {
    fn stieltjes(&self, z: C64) -> C64 {
        // principal logs: hi - z and lo - z share a half-plane, so no cut is crossed
        ((self.hi - z).ln() - (self.lo - z).ln()) / (self.hi - self.lo)
    }

    fn stieltjes_derivative(&self, z: C64) -> C64 {
        ((z - self.hi).inv() - (z - self.lo).inv()) / (self.hi - self.lo)
    }

    fn second_moment(&self) -> f64 {
        (self.hi.powi(3) - self.lo.powi(3)) / (3.0 * (self.hi - self.lo))
    }

    fn label(&self) -> String {
        format!("uniform({},{})", self.lo, self.hi)
    }
}

/// A law given through its distribution function, used to place quantile atoms.
pub trait QuantileLaw: Send + Sync {
    fn cdf(&self, x: f64) -> f64;

    /// Smallest closed interval containing the support.
    fn support(&self) -> (f64, f64);

    /// `inf { s : F(s) >= p }`, by bisection unless overridden.
    fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = self.support();
        if p <= 0.0 {
            return lo;
        }
        if p >= 1.0 {
            return hi;
        }
        if self.cdf(lo) >= p {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

impl QuantileLaw for Uniform {
    fn cdf(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn quantile(&self, p: f64) -> f64 {
        self.lo + p.clamp(0.0, 1.0) * (self.hi - self.lo)
    }
}

impl QuantileLaw for Semicircle {
    fn cdf(&self, x: f64) -> f64 {
        let r = self.radius();
        if x <= -r {
            return 0.0;
        }
        if x >= r {
            return 1.0;
        }
        0.5 + x * (r * r - x * x).sqrt() / (PI * r * r) + (x / r).asin() / PI
    }

    fn support(&self) -> (f64, f64) {
        let r = self.radius();
        (-r, r)
    }
}

impl QuantileLaw for AtomicMeasure {
    fn cdf(&self, x: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum::<f64>().min(1.0)
    }

    fn support(&self) -> (f64, f64) {
        let xs = self.locations();
        (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn quantile(&self, p: f64) -> f64 {
        let mut sorted = self.atoms.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = 0.0;
        for &(x, w) in &sorted {
            cum += w;
            if cum >= p - MASS_TOL {
                return x;
            }
        }
        sorted[sorted.len() - 1].0
    }
}

/// Atoms at the `N`-quantiles `y*_k = inf{s : F(s) = k/N}`, `k = 1..N`, each of weight `1/N`.
pub fn quantile_atoms(law: &dyn QuantileLaw, n: usize) -> Result<AtomicMeasure> {
    if n == 0 {
        return Err(Error::invalid("quantile_atoms needs N >= 1"));
    }
    let locs: Vec<f64> = (1..=n).map(|k| law.quantile(k as f64 / n as f64)).collect();
    AtomicMeasure::empirical(&locs)
}

/// Nonnegative values on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::invalid("grid and values differ in length"));
        }
        if grid.len() < 2 {
            return Err(Error::invalid("grid density needs at least two points"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("density values must be finite and nonnegative"));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `n` equispaced points of `[lo, hi]`.
    pub fn tabulate(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = linspace(lo, hi, n);
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn trapezoid_mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Whether the trapezoid mass lies in `[1 - tol, 1 + tol]`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.trapezoid_mass() - 1.0).abs() <= tol
    }

    /// Trapezoid-weighted atoms, renormalized to unit mass.
    pub fn to_atomic(&self) -> Result<AtomicMeasure> {
        let n = self.grid.len();
        let mut atoms = Vec::with_capacity(n);
        for i in 0..n {
            let left = if i > 0 { self.grid[i] - self.grid[i - 1] } else { 0.0 };
            let right = if i + 1 < n { self.grid[i + 1] - self.grid[i] } else { 0.0 };
            let w = 0.5 * (left + right) * self.values[i];
            if w > 0.0 {
                atoms.push((self.grid[i], w));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(Error::invalid("grid density has zero mass"));
        }
        for a in &mut atoms {
            a.1 /= total;
        }
        AtomicMeasure::new(atoms)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: (&str, &str)) -> Result<()> {
        writeln!(out, "{},{}", header.0, header.1)?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{x:e},{v:e}")?;
        }
        Ok(())
    }
}

/// `ρ(E) ≈ (1/π) Im m(E + iη)` on each grid point.
pub fn invert_to_density(m: impl Fn(C64) -> C64, grid: &[f64], eta: f64) -> Result<GridDensity> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("smoothing scale must be positive, got {eta}")));
    }
    let values = grid
        .iter()
        .map(|&e| (m(C64::new(e, eta)).im / PI).max(0.0))
        .collect();
    GridDensity::new(grid.to_vec(), values)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const I: C64 = C64::new(0.0, 1.0);

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn bernoulli() -> AtomicMeasure {
        AtomicMeasure::new(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    #[test]
    fn symmetrize_examples() {
        let s = symmetrize(&AtomicMeasure::dirac(1.0));
        assert_eq!(s.atoms().atoms(), &[(1.0, 0.5), (-1.0, 0.5)]);

        let s = symmetrize(&AtomicMeasure::dirac(0.0));
        assert_eq!(s.atoms().atoms(), &[(0.0, 1.0)]);

        let s = symmetrize(&AtomicMeasure::new(vec![(0.25, 0.5), (0.75, 0.5)]).unwrap());
        let mut atoms = s.atoms().atoms().to_vec();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(atoms, vec![(-0.75, 0.25), (-0.25, 0.25), (0.25, 0.25), (0.75, 0.25)]);
        assert!((s.atoms().total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn atomic_measure_validation() {
        assert!(AtomicMeasure::new(vec![(0.0, 0.5)]).is_err());
        assert!(AtomicMeasure::new(vec![(0.0, -0.5), (1.0, 1.5)]).is_err());
        assert!(AtomicMeasure::new(vec![(f64::NAN, 1.0)]).is_err());
        assert!(AtomicMeasure::new(vec![]).is_err());
        // duplicates are fine
        let mu = AtomicMeasure::new(vec![(1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(mu.point_mass(), Some(1.0));
        assert_eq!(mu.support_size(), 1);
    }

    #[test]
    fn stieltjes_examples() {
        assert!(close(stieltjes(&bernoulli(), I).unwrap(), 0.5 * I, 1e-15));
        assert!(close(stieltjes(&AtomicMeasure::dirac(0.0), I).unwrap(), I, 1e-15));
        let golden = I * (5f64.sqrt() - 1.0) / 2.0;
        assert!(close(stieltjes(&Semicircle::new(1.0).unwrap(), I).unwrap(), golden, 1e-14));
        // gridded semicircle through trapezoid atoms
        let sc = Semicircle::new(1.0).unwrap();
        let grid = GridDensity::tabulate(-2.0, 2.0, 4001, |x| sc.density(x)).unwrap();
        let m = stieltjes(&grid.to_atomic().unwrap(), I).unwrap();
        assert!(close(m, golden, 1e-4), "{m}");
        assert!(stieltjes(&bernoulli(), C64::new(0.0, 0.0)).is_err());
        assert!(stieltjes(&bernoulli(), C64::new(0.0, -1.0)).is_err());
    }

    #[test]
    fn hat_transform_examples() {
        assert!(close(hat_transform(&bernoulli(), I).unwrap(), I, 1e-15));
        let h = hat_transform(&AtomicMeasure::dirac(0.0), C64::new(0.3, 0.7)).unwrap();
        assert!(h.norm() < 1e-15);
        let eta = 1e3;
        let mass = (-C64::new(0.0, eta) * hat_transform(&bernoulli(), C64::new(0.0, eta)).unwrap()).re;
        assert!((mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn hat_derivative_matches_finite_difference() {
        let mu = symmetrize(&AtomicMeasure::empirical(&[0.1, 0.4, 0.9]).unwrap());
        let z = C64::new(0.2, 0.3);
        let h = 1e-6;
        let fd = (hat_unchecked(&mu, z + h).unwrap() - hat_unchecked(&mu, z - h).unwrap()) / (2.0 * h);
        assert!(close(hat_derivative(&mu, z).unwrap(), fd, 1e-7));
    }

    #[test]
    fn closed_form_laws_match_fine_atoms() {
        let u = Uniform::new(0.0, 1.0).unwrap();
        let atoms = quantile_atoms(&u, 20000).unwrap();
        for z in [C64::new(0.5, 0.2), C64::new(-0.3, 0.05), C64::new(1.5, 1.0)] {
            assert!(close(u.stieltjes(z), atoms.stieltjes(z), 1e-3), "{z}");
            assert!(close(u.stieltjes(z.conj()), u.stieltjes(z).conj(), 1e-14));
        }
        assert!((u.second_moment() - 1.0 / 3.0).abs() < 1e-15);
        let sym = SymmetrizedLaw::new(u);
        let sym_atoms = symmetrize(&atoms);
        let z = C64::new(0.1, 0.1);
        assert!(close(sym.stieltjes(z), sym_atoms.stieltjes(z), 1e-3));
        assert!(close(sym.stieltjes_derivative(z), sym_atoms.stieltjes_derivative(z), 1e-2));
    }

    #[test]
    fn quantile_examples() {
        let u = Uniform::new(0.0, 1.0).unwrap();
        assert_eq!(quantile_atoms(&u, 4).unwrap().locations(), vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(quantile_atoms(&u, 1).unwrap().locations(), vec![1.0]);
        assert!(quantile_atoms(&u, 0).is_err());
        let sc = Semicircle::new(1.0).unwrap();
        let q = quantile_atoms(&sc, 2).unwrap().locations();
        assert!(q[0].abs() < 1e-12 && (q[1] - 2.0).abs() < 1e-12, "{q:?}");
        let b = AtomicMeasure::new(vec![(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        assert_eq!(quantile_atoms(&b, 4).unwrap().locations(), vec![-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn semicircle_cdf_matches_bisection_of_density() {
        // independent route: integrate the density by Simpson's rule
        let sc = Semicircle::new(1.0).unwrap();
        let n = 20000;
        let (a, b) = (-2.0, 0.7);
        let h = (b - a) / n as f64;
        let mut s = sc.density(a) + sc.density(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * sc.density(a + k as f64 * h);
        }
        assert!((s * h / 3.0 - sc.cdf(b)).abs() < 1e-6);
    }

    #[test]
    fn inversion_examples() {
        let eta = 0.01;
        let d = invert_to_density(|z| AtomicMeasure::dirac(0.0).stieltjes(z), &linspace(-1.0, 1.0, 201), eta)
            .unwrap();
        let peak = d.values()[100];
        assert!((peak - 1.0 / (PI * eta)).abs() < 1e-9);

        let sc = Semicircle::new(1.0).unwrap();
        let d = invert_to_density(|z| sc.stieltjes(z), &[0.0], 1e-4).unwrap_err();
        assert!(d.to_string().contains("two points"));
        let d = invert_to_density(|z| sc.stieltjes(z), &[0.0, 0.1], 1e-4).unwrap();
        assert!((d.values()[0] - 1.0 / PI).abs() < 1e-4);

        // arcsine law on [-2, 2] has transform -1/sqrt(z² - 4)
        let arcsine = |z: C64| -sqrt_cut(z, 2.0).inv();
        let d = invert_to_density(arcsine, &[0.0, 1.0], 1e-6).unwrap();
        assert!((d.values()[0] - 1.0 / (2.0 * PI)).abs() < 1e-6);
        assert!(invert_to_density(arcsine, &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn poisson_bumps_recover_atom_weights() {
        let mu = AtomicMeasure::new(vec![(-0.5, 0.2), (0.1, 0.3), (0.6, 0.5)]).unwrap();
        let gap = 0.5;
        let eta = gap / 100.0;
        // integrate over ±gap/2 windows with a fine grid
        for &(x, w) in mu.atoms() {
            let grid = linspace(x - gap / 2.0, x + gap / 2.0, 20001);
            let d = invert_to_density(|z| mu.stieltjes(z), &grid, eta).unwrap();
            let mass = d.trapezoid_mass();
            assert!((mass - w).abs() / w < 0.01, "atom {x}: {mass} vs {w}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let mu = AtomicMeasure::new(vec![(0.25, 0.5), (0.75, 0.5)]).unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("location,weight\n"));
        assert_eq!(AtomicMeasure::read_csv(&buf[..]).unwrap(), mu);
        assert!(AtomicMeasure::read_csv(&b"x,y\n1,1\n"[..]).is_err());
    }

    #[test]
    fn grid_density_mass() {
        let sc = Semicircle::new(1.0).unwrap();
        let g = GridDensity::tabulate(-2.0, 2.0, 2001, |x| sc.density(x)).unwrap();
        assert!(g.is_normalized(1e-4));
        assert!(GridDensity::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(GridDensity::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
    }

    proptest! {
        #[test]
        fn nevanlinna_and_reflection(
            xs in proptest::collection::vec(0.0f64..2.0, 1..12),
            e in -3.0f64..3.0,
            eta in 1e-3f64..10.0,
        ) {
            let mu = symmetrize(&AtomicMeasure::empirical(&xs).unwrap());
            let z = C64::new(e, eta);
            let m = mu.stieltjes(z);
            prop_assert!(m.im > 0.0);
            // m(-Ē + iη) = -conj(m(E + iη)) for symmetric measures
            let reflected = mu.stieltjes(C64::new(-e, eta));
            prop_assert!((reflected + m.conj()).norm() <= 1e-10 * (1.0 + m.norm()));
            // hat transform on the imaginary axis is purely imaginary
            let h = hat_transform(&mu, C64::new(0.0, eta)).unwrap();
            prop_assert!(h.re.abs() <= 1e-10 * (1.0 + h.norm()));
            prop_assert!(h.im >= -1e-12);
        }

        #[test]
        fn transform_decay(xs in proptest::collection::vec(-2.0f64..2.0, 1..8)) {
            let mu = AtomicMeasure::empirical(&xs).unwrap();
            let bound = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for eta in [1e2, 1e3, 1e4] {
                let z = C64::new(0.0, eta);
                let err = (z * mu.stieltjes(z) + 1.0).norm();
                prop_assert!(err <= 2.0 * bound / eta + 1e-12);
            }
        }
    }
}
