//! Limiting laws of the rescaled least singular value `s·N·λ₁`.

use crate::error::{Error, Result};
use crate::linalg::Field;
use crate::registry::{expect_params, Registry};

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("radius must be nonnegative, got {r}")))
    }
}

/// `1 - e^{-r²}`.
pub fn exact_law_complex(r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(-(-r * r).exp_m1())
}

/// `1 - e^{-r²/2 - r}`.
pub fn exact_law_real(r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(-(-0.5 * r * r - r).exp_m1())
}

pub trait TargetLaw: Send + Sync {
    fn name(&self) -> &'static str;
    /// CDF, zero for `r < 0`.
    fn cdf(&self, r: f64) -> f64;
    fn density(&self, r: f64) -> f64;
}

struct ComplexLaw;
struct RealLaw;

impl TargetLaw for ComplexLaw {
    fn name(&self) -> &'static str {
        "complex"
    }
    fn cdf(&self, r: f64) -> f64 {
        exact_law_complex(r).unwrap_or(0.0)
    }
    fn density(&self, r: f64) -> f64 {
        if r < 0.0 {
            0.0
        } else {
            2.0 * r * (-r * r).exp()
        }
    }
}

impl TargetLaw for RealLaw {
    fn name(&self) -> &'static str {
        "real"
    }
    fn cdf(&self, r: f64) -> f64 {
        exact_law_real(r).unwrap_or(0.0)
    }
    fn density(&self, r: f64) -> f64 {
        if r < 0.0 {
            0.0
        } else {
            (1.0 + r) * (-0.5 * r * r - r).exp()
        }
    }
}

pub fn target_laws() -> Registry<dyn TargetLaw> {
    let mut reg: Registry<dyn TargetLaw> = Registry::new("target law");
    reg.register("complex", |p| {
        expect_params("complex", p, 0)?;
        Ok(Box::new(ComplexLaw))
    });
    reg.register("real", |p| {
        expect_params("real", p, 0)?;
        Ok(Box::new(RealLaw))
    });
    reg
}

pub fn target_for(field: Field) -> Box<dyn TargetLaw> {
    match field {
        Field::Complex => Box::new(ComplexLaw),
        Field::Real => Box::new(RealLaw),
    }
}
