//! Named families of input laws for `X` and `Y`, selectable as `name:params`.
//!
//! Diagonal entries are the absolute values of the law's `N`-quantiles: a
//! sign on a diagonal entry is absorbed into the adjacent Haar factor, so
//! only `|x|` matters for singular values.

use crate::ensembles::DiagonalData;
use crate::error::{Error, Result};
use crate::measures::{quantile_atoms, AtomicMeasure, QuantileLaw, Semicircle, SpectralMeasure, Uniform};
use crate::registry::{expect_params, Registry};

pub trait MeasureFamily: Send + Sync {
    fn label(&self) -> String;

    /// The law as a measure on the real line (before symmetrization).
    fn law(&self) -> Box<dyn SpectralMeasure>;

    /// `N` diagonal entries placed at `|quantiles|`.
    fn diagonal(&self, n: usize) -> Result<DiagonalData>;
}

fn abs_quantiles(law: &dyn QuantileLaw, n: usize) -> Result<DiagonalData> {
    let atoms = quantile_atoms(law, n)?;
    DiagonalData::new(atoms.locations().into_iter().map(f64::abs).collect())
}

struct UniformFamily(Uniform);
struct SemicircleFamily(Semicircle);
struct BernoulliFamily(f64);
struct PointFamily(f64);

/// An explicit atomic measure, typically read from a `location,weight` file.
pub struct AtomFamily {
    measure: AtomicMeasure,
    source: String,
}

impl AtomFamily {
    pub fn new(measure: AtomicMeasure, source: impl Into<String>) -> Self {
        Self { measure, source: source.into() }
    }
}

impl MeasureFamily for UniformFamily {
    fn label(&self) -> String {
        format!("uniform:{},{}", self.0.lo, self.0.hi)
    }
    fn law(&self) -> Box<dyn SpectralMeasure> {
        Box::new(self.0)
    }
    fn diagonal(&self, n: usize) -> Result<DiagonalData> {
        abs_quantiles(&self.0, n)
    }
}

impl MeasureFamily for SemicircleFamily {
    fn label(&self) -> String {
        format!("semicircle:{}", self.0.variance)
    }
    fn law(&self) -> Box<dyn SpectralMeasure> {
        Box::new(self.0)
    }
    fn diagonal(&self, n: usize) -> Result<DiagonalData> {
        abs_quantiles(&self.0, n)
    }
}

impl MeasureFamily for BernoulliFamily {
    fn label(&self) -> String {
        format!("bernoulli:{}", self.0)
    }
    fn law(&self) -> Box<dyn SpectralMeasure> {
        if self.0 == 0.0 {
            Box::new(AtomicMeasure::dirac(0.0))
        } else {
            Box::new(AtomicMeasure::new(vec![(-self.0, 0.5), (self.0, 0.5)]).expect("valid weights"))
        }
    }
    fn diagonal(&self, n: usize) -> Result<DiagonalData> {
        if n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        DiagonalData::new(vec![self.0.abs(); n])
    }
}

impl MeasureFamily for PointFamily {
    fn label(&self) -> String {
        format!("point:{}", self.0)
    }
    fn law(&self) -> Box<dyn SpectralMeasure> {
        Box::new(AtomicMeasure::dirac(self.0))
    }
    fn diagonal(&self, n: usize) -> Result<DiagonalData> {
        if n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        DiagonalData::new(vec![self.0.abs(); n])
    }
}

impl MeasureFamily for AtomFamily {
    fn label(&self) -> String {
        format!("atoms:{}", self.source)
    }
    fn law(&self) -> Box<dyn SpectralMeasure> {
        Box::new(self.measure.clone())
    }
    fn diagonal(&self, n: usize) -> Result<DiagonalData> {
        abs_quantiles(&self.measure, n)
    }
}

fn finite(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("'{name}' parameters must be finite")))
    }
}

pub fn measure_families() -> Registry<dyn MeasureFamily> {
    let mut reg: Registry<dyn MeasureFamily> = Registry::new("measure family");
    reg.register("uniform", |p| {
        expect_params("uniform", p, 2)?;
        Ok(Box::new(UniformFamily(Uniform::new(p[0], p[1])?)))
    });
    reg.register("semicircle", |p| {
        expect_params("semicircle", p, 1)?;
        Ok(Box::new(SemicircleFamily(Semicircle::new(p[0])?)))
    });
    reg.register("bernoulli", |p| {
        expect_params("bernoulli", p, 1)?;
        finite("bernoulli", p)?;
        Ok(Box::new(BernoulliFamily(p[0])))
    });
    reg.register("point", |p| {
        expect_params("point", p, 1)?;
        finite("point", p)?;
        Ok(Box::new(PointFamily(p[0])))
    });
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::C64;

    #[test]
    fn families_parse() {
        let reg = measure_families();
        assert_eq!(reg.names(), vec!["bernoulli", "point", "semicircle", "uniform"]);
        let u = reg.parse("uniform:0,1").unwrap();
        assert_eq!(u.diagonal(4).unwrap().entries(), &[0.25, 0.5, 0.75, 1.0]);
        assert_eq!(u.label(), "uniform:0,1");
        assert!(reg.parse("uniform:1,0").is_err());
        assert!(reg.parse("uniform:0").is_err());
        assert!(reg.parse("semicircle:-1").is_err());
        let p = reg.parse("point:-2").unwrap();
        assert_eq!(p.diagonal(3).unwrap().entries(), &[2.0, 2.0, 2.0]);
        assert_eq!(p.law().point_mass(), Some(-2.0));
        let b = reg.parse("bernoulli:1").unwrap();
        assert!((b.law().stieltjes(C64::new(0.0, 1.0)) - C64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn semicircle_diagonal_uses_moduli() {
        let s = measure_families().parse("semicircle:1").unwrap().diagonal(5).unwrap();
        assert!(s.entries().iter().all(|e| *e >= 0.0));
        // quantiles at k/5 of a symmetric law: moduli pair up around the median
        let e = s.entries();
        assert!((e[0] - e[3]).abs() < 1e-9 && (e[1] - e[2]).abs() < 1e-9);
    }

    #[test]
    fn atom_family_quantiles() {
        let mu = AtomicMeasure::new(vec![(0.5, 0.25), (2.0, 0.75)]).unwrap();
        let f = AtomFamily::new(mu, "inline");
        assert_eq!(f.diagonal(4).unwrap().entries(), &[0.5, 2.0, 2.0, 2.0]);
    }
}
