//! Sources of the overlap coefficients `γ_ij` that weaken the pair
//! interactions of the singular-value SDE.

use faer::Mat;

use super::matrix::MatrixFlow;
use super::{build_index_set, FlowConfig};
use crate::ensembles::{overlap_table, overlaps, ModelSample, OverlapConvention};
use crate::error::{Error, Result};
use crate::linalg;
use crate::montecarlo::sample_rng;
use crate::registry::{expect_params, Registry};

/// `γ_ij` for positive indices; `γ_{i,-j} = γ_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable(Mat<f64>);

impl GammaTable {
    pub fn zeros(n: usize) -> Self {
        Self(Mat::zeros(n, n))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(Mat::from_fn(n, n, |_, _| value))
    }

    pub fn from_matrix(values: Mat<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::invalid("γ table must be square"));
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn max(&self) -> f64 {
        let n = self.n();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).fold(0.0, |m, (i, j)| m.max(self.0[(i, j)]))
    }
}

/// What a source may look at before the run starts.
pub struct GammaContext<'a> {
    /// Must carry Haar factors and singular vectors for the overlap-based sources.
    pub sample: &'a ModelSample,
    pub flow: FlowConfig,
    pub convention: OverlapConvention,
    /// Seed for any randomness the source itself consumes.
    pub seed: u64,
}

pub trait GammaSource: Send {
    fn name(&self) -> &'static str;

    fn prepare(&mut self, ctx: &GammaContext<'_>) -> Result<()>;

    /// The table in force at time `t`; `t` is nondecreasing across calls.
    fn table(&mut self, t: f64) -> Result<&GammaTable>;
}

fn not_prepared(name: &str) -> Error {
    Error::invalid(format!("γ source '{name}' used before prepare"))
}

struct Constant {
    value: f64,
    table: Option<GammaTable>,
}

impl GammaSource for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn prepare(&mut self, ctx: &GammaContext<'_>) -> Result<()> {
        self.table = Some(GammaTable::constant(ctx.flow.n, self.value));
        Ok(())
    }

    fn table(&mut self, _t: f64) -> Result<&GammaTable> {
        self.table.as_ref().ok_or_else(|| not_prepared("constant"))
    }
}

/// Overlaps of the initial sample, frozen for the whole run.
#[derive(Default)]
struct Frozen {
    table: Option<GammaTable>,
}

impl GammaSource for Frozen {
    fn name(&self) -> &'static str {
        "table"
    }

    fn prepare(&mut self, ctx: &GammaContext<'_>) -> Result<()> {
        let index = build_index_set(&ctx.sample.y, ctx.flow.a_exp);
        let t = overlaps(ctx.sample, &|a, b| index.in_complement(a, b), ctx.convention)?;
        self.table = Some(GammaTable::from_matrix(t.gamma)?);
        Ok(())
    }

    fn table(&mut self, _t: f64) -> Result<&GammaTable> {
        self.table.as_ref().ok_or_else(|| not_prepared("table"))
    }
}

/// Runs its own copy of the matrix flow and recomputes the overlaps of
/// `M̂(t)` every `every` flow steps.
struct Recomputed {
    every: usize,
    interval: f64,
    convention: OverlapConvention,
    flow: Option<MatrixFlow>,
    rng: Option<rand_chacha::ChaCha8Rng>,
    next_refresh: f64,
    table: Option<GammaTable>,
}

impl Recomputed {
    fn refresh(&mut self) -> Result<()> {
        let flow = self.flow.as_ref().ok_or_else(|| not_prepared("recomputed"))?;
        let corrected = flow.corrected();
        let parts = linalg::svd(corrected.as_ref())?;
        let w = &flow.state().u * &parts.j;
        let z = &flow.state().v * &parts.k;
        let index = flow.index_set();
        let t = overlap_table(w, z, &parts.s, &|a, b| index.in_complement(a, b), self.convention);
        self.table = Some(GammaTable::from_matrix(t.gamma)?);
        Ok(())
    }
}

impl GammaSource for Recomputed {
    fn name(&self) -> &'static str {
        "recomputed"
    }

    fn prepare(&mut self, ctx: &GammaContext<'_>) -> Result<()> {
        self.convention = ctx.convention;
        self.interval = self.every as f64 * ctx.flow.dt;
        self.flow = Some(MatrixFlow::new(ctx.sample, ctx.flow)?);
        // stream far from the per-sample streams of the Monte Carlo driver
        self.rng = Some(sample_rng(ctx.seed, u64::MAX));
        self.next_refresh = self.interval;
        self.refresh()
    }

    fn table(&mut self, t: f64) -> Result<&GammaTable> {
        if t >= self.next_refresh {
            let flow = self.flow.as_mut().ok_or_else(|| not_prepared("recomputed"))?;
            let rng = self.rng.as_mut().ok_or_else(|| not_prepared("recomputed"))?;
            flow.advance_to(t, rng)?;
            while self.next_refresh <= t {
                self.next_refresh += self.interval;
            }
            self.refresh()?;
        }
        self.table.as_ref().ok_or_else(|| not_prepared("recomputed"))
    }
}

/// `constant:c`, `table`, `recomputed:k` (refresh every `k` flow steps).
pub fn gamma_sources() -> Registry<dyn GammaSource> {
    let mut reg: Registry<dyn GammaSource> = Registry::new("γ source");
    reg.register("constant", |p| {
        expect_params("constant", p, 1)?;
        if !(p[0].is_finite() && (0.0..=1.0).contains(&p[0])) {
            return Err(Error::invalid(format!("constant γ must lie in [0, 1], got {}", p[0])));
        }
        Ok(Box::new(Constant { value: p[0], table: None }))
    });
    reg.register("table", |p| {
        expect_params("table", p, 0)?;
        Ok(Box::new(Frozen::default()))
    });
    reg.register("recomputed", |p| {
        expect_params("recomputed", p, 1)?;
        if !(p[0] >= 1.0 && p[0].fract() == 0.0 && p[0] <= u32::MAX as f64) {
            return Err(Error::invalid(format!("refresh step count must be a positive integer, got {}", p[0])));
        }
        Ok(Box::new(Recomputed {
            every: p[0] as usize,
            interval: 0.0,
            convention: OverlapConvention::Symmetric,
            flow: None,
            rng: None,
            next_refresh: 0.0,
            table: None,
        }))
    });
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{assemble_model, DiagonalData};
    use crate::linalg::Field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize) -> ModelSample {
        let x = DiagonalData::new((1..=n).map(|k| k as f64 / n as f64).collect()).unwrap();
        let y = DiagonalData::new((1..=n).map(|k| 1.5 * k as f64 / n as f64).collect()).unwrap();
        assemble_model(&x, &y, Field::Complex, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn registry_and_sources() {
        let reg = gamma_sources();
        assert_eq!(reg.names(), vec!["constant", "recomputed", "table"]);
        assert!(reg.parse("constant:2").is_err());
        assert!(reg.parse("recomputed:0").is_err());
        assert!(reg.parse("recomputed:2.5").is_err());
        let s = sample(16);
        let flow = FlowConfig::new(16, Field::Complex).unwrap();
        let ctx = GammaContext { sample: &s, flow, convention: OverlapConvention::Symmetric, seed: 1 };

        let mut c = reg.parse("constant:0.25").unwrap();
        assert!(c.table(0.0).is_err());
        c.prepare(&ctx).unwrap();
        assert_eq!(c.table(0.0).unwrap().get(3, 5), 0.25);

        let mut frozen = reg.parse("table").unwrap();
        frozen.prepare(&ctx).unwrap();
        let t0 = frozen.table(0.0).unwrap().clone();
        assert_eq!(&t0, frozen.table(flow.tau).unwrap());
        assert!(t0.max() <= 1.0 + 1e-12 && t0.get(0, 0) > 0.0);

        let mut rec = reg.parse("recomputed:25").unwrap();
        rec.prepare(&ctx).unwrap();
        let r0 = rec.table(0.0).unwrap().clone();
        // at t = 0 M̂ differs from M only by the τ·U*ÂV shift
        assert!((r0.get(0, 0) - t0.get(0, 0)).abs() < 0.2);
        let r1 = rec.table(flow.tau).unwrap().clone();
        assert_ne!(r0, r1);
    }
}
