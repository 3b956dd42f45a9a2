//! One function per subcommand: read settings, run, write files.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use addsv::analysis::{
    a_hat_ratio, delocalization_stats, empirical_bound_check, local_law_residual, regularity_check,
    resolvent_identities, universality_experiment, write_cdf_csv, write_lsv_csv, BoundIndexing, DelocalizationReport,
    DelocalizationSample, EmpiricalBoundReport, EmpiricalCdf, LocalLawReport, RegularityReport, ResolventIdentities,
    Scaling, UniversalityReport, UniversalitySetup,
};
use addsv::analysis::ks_two_sample;
use addsv::dynamics::{
    build_index_set, gamma_sources, matrix_flow_run, sv_sde_run, write_trajectory_csv, FlowConfig, FlowDiagnostics,
    FlowSnapshot, GammaContext, ParticleConfig, ParticleState, ParticleTrajectory, RemainderEstimate,
};
use addsv::ensembles::{
    assemble_model, ensembles, hermitize, overlaps, smallest_sv_methods, DiagonalData, OverlapConvention,
};
use addsv::families::{measure_families, AtomFamily, MeasureFamily};
use addsv::freeconv::{density_at_zero, free_convolution_density, FreeConvolution, SolverConfig};
use addsv::linalg::Field;
use addsv::measures::{linspace, AtomicMeasure, SpectralMeasure, SymmetrizedLaw};
use addsv::montecarlo::{median, par_map, par_map_from, sample_rng, with_workers};
use addsv::{Error, C64};

use crate::failure::Failure;
use crate::output::Output;
use crate::settings::Settings;

/// Streams `block << 32 ..` of the run seed belong to one part of a command.
fn stream_block(block: u64) -> u64 {
    block << 32
}

/// A registered family, or an atom file with a `location,weight` header.
fn family(spec: &str) -> Result<Box<dyn MeasureFamily>, Failure> {
    let families = measure_families();
    let name = spec.split(':').next().unwrap_or("").trim();
    if families.contains(name) {
        return Ok(families.parse(spec)?);
    }
    let path = Path::new(spec);
    if path.is_file() {
        let file = File::open(path)?;
        let measure = AtomicMeasure::read_csv(BufReader::new(file))?;
        return Ok(Box::new(AtomFamily::new(measure, spec)));
    }
    Err(Failure::usage(format!(
        "'{spec}' is neither a measure family ({}) nor a readable atom file",
        families.names().join(", ")
    )))
}

fn symmetrized_law(f: &dyn MeasureFamily) -> SymmetrizedLaw<Box<dyn SpectralMeasure>> {
    SymmetrizedLaw::new(f.law())
}

fn output(s: &Settings, command: &'static str) -> Result<Output, Failure> {
    let dir: PathBuf = s.unrecorded("out", PathBuf::from("out"))?;
    Output::create(&dir, command)
}

fn parallel<R: Send>(s: &Settings, f: impl FnOnce() -> addsv::Result<R> + Send) -> Result<R, Failure> {
    let workers: usize = s.unrecorded("workers", 0)?;
    Ok(with_workers(workers, f)??)
}

fn positive(key: &str, v: usize) -> Result<usize, Failure> {
    if v == 0 {
        Err(Failure::usage(format!("--{key} must be at least 1")))
    } else {
        Ok(v)
    }
}

#[derive(Serialize)]
struct LsvReport<'a> {
    #[serde(flatten)]
    report: &'a UniversalityReport,
    mu1: String,
    mu2: String,
    ensemble: &'a str,
    method: &'a str,
    rho0: Option<f64>,
    edge_density: f64,
}

fn lsv_run(
    s: &Settings,
    command: &'static str,
    x: &DiagonalData,
    y: &DiagonalData,
    labels: (String, String),
    ensemble_spec: &str,
    scaling: Scaling,
) -> Result<(), Failure> {
    let seed: u64 = s.required("seed")?;
    let n_samples = positive("samples", s.value("samples", 20_000)?)?;
    let field: Field = s.value("field", Field::Complex)?;
    let method = smallest_sv_methods().parse(&s.text("method", "lu"))?;
    let points = positive("cdf-points", s.value("cdf-points", 201)?)?;
    let ensemble = ensembles().parse(ensemble_spec)?;
    let out = output(s, command)?;
    let setup = UniversalitySetup {
        x,
        y,
        field,
        n_samples,
        seed,
        ensemble: ensemble.as_ref(),
        method: method.as_ref(),
        scaling,
    };
    let outcome = parallel(s, || universality_experiment(&setup))?;
    out.csv("lsv.csv", |w| write_lsv_csv(w, &outcome.raw, &outcome.scaled))?;
    out.csv("cdf.csv", |w| write_cdf_csv(w, &outcome.ecdf, field, points))?;
    let report = LsvReport {
        report: &outcome.report,
        mu1: labels.0,
        mu2: labels.1,
        ensemble: ensemble.name(),
        method: method.name(),
        rho0: outcome.rho0,
        edge_density: outcome.edge_density,
    };
    out.json("report.json", s, &report)
}

pub fn sample_lsv(s: &Settings) -> Result<(), Failure> {
    let n = positive("N", s.value("N", 200)?)?;
    let mu1 = family(&s.text("mu1", "uniform:0,1"))?;
    let mu2 = family(&s.text("mu2", "uniform:0,1"))?;
    let ensemble = s.text("ensemble", "reduced");
    let (x, y) = (mu1.diagonal(n)?, mu2.diagonal(n)?);
    let scaling = Scaling::Solve(SolverConfig::default());
    lsv_run(s, "sample-lsv", &x, &y, (mu1.label(), mu2.label()), &ensemble, scaling)
}

pub fn reference(s: &Settings) -> Result<(), Failure> {
    let n = positive("N", s.value("N", 200)?)?;
    let zeros = DiagonalData::zeros(n);
    // entry variance 1/N puts ρ(0) of the symmetrized quarter circle at 1/π
    lsv_run(s, "reference", &zeros, &zeros, ("ginibre".into(), "ginibre".into()), "ginibre", Scaling::Fixed(1.0))
}

#[derive(Serialize)]
struct Rho0Report {
    mu1: String,
    mu2: String,
    symmetrized: bool,
    eta: f64,
    rho0: Option<f64>,
    pi_rho0: Option<f64>,
    rho0_error: Option<String>,
    grid_points: usize,
    failed_points: Vec<f64>,
    mass_on_grid: f64,
}

pub fn freeconv(s: &Settings) -> Result<(), Failure> {
    let mu1 = family(&s.text("mu1", "uniform:0,1"))?;
    let mu2 = family(&s.text("mu2", "uniform:0,1"))?;
    let symmetrize = s.flag("symmetrize", true)?;
    let lo: f64 = s.value("lo", -3.0)?;
    let hi: f64 = s.value("hi", 3.0)?;
    let points = s.value("points", 601)?;
    let eta: f64 = s.value("eta", 1e-5)?;
    let cfg = SolverConfig { tol: s.value("tol", SolverConfig::default().tol)?, ..SolverConfig::default() };
    cfg.validate()?;
    if !(lo < hi) || points < 2 {
        return Err(Failure::usage("need lo < hi and at least two grid points"));
    }
    let out = output(s, "freeconv")?;
    let (a, b): (Box<dyn SpectralMeasure>, Box<dyn SpectralMeasure>) = if symmetrize {
        (Box::new(symmetrized_law(mu1.as_ref())), Box::new(symmetrized_law(mu2.as_ref())))
    } else {
        (mu1.law(), mu2.law())
    };
    let grid = linspace(lo, hi, points);
    let conv = free_convolution_density(&a, &b, &grid, eta, &cfg)?;
    out.csv("density.csv", |w| conv.density.write_csv(w, ("E", "rho")))?;
    let (rho0, rho0_error) = match density_at_zero(&a, &b, &cfg) {
        Ok(r) => (Some(r), None),
        Err(e @ Error::VanishingDensity(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let failed_points: Vec<f64> = conv.failed.iter().map(|&k| grid[k]).collect();
    let report = Rho0Report {
        mu1: mu1.label(),
        mu2: mu2.label(),
        symmetrized: symmetrize,
        eta,
        rho0,
        pi_rho0: rho0.map(|r| std::f64::consts::PI * r),
        rho0_error,
        grid_points: points,
        mass_on_grid: conv.density.trapezoid_mass(),
        failed_points,
    };
    out.json("rho0.json", s, &report)?;
    if conv.failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("solver failed at {} of {points} grid points", conv.failed.len())))
    }
}

#[derive(Serialize)]
struct SdeSummary {
    gamma_source: String,
    alpha: Option<f64>,
    repairs: usize,
    reflections: usize,
    refinements: usize,
    final_smallest: f64,
    matrix_final_smallest: f64,
}

#[derive(Serialize)]
struct Invariance {
    /// Two-sample KS of `λ₁(τ)` after the flow against fresh `λ₁`.
    ks_smallest: f64,
    /// Same over all singular values pooled.
    ks_all: f64,
    samples: usize,
}

#[derive(Serialize)]
struct FlowSummary {
    trajectories: usize,
    tau: f64,
    dt: f64,
    steps: usize,
    index_set_size: usize,
    a_norm: f64,
    a_hat_norm: f64,
    max_step_deviation: f64,
    max_unitarity_deviation: f64,
    final_unitarity_deviation: f64,
    endpoint_identity_error: f64,
    remainder: Option<RemainderEstimate>,
    sde: SdeSummary,
    invariance: Option<Invariance>,
    invariants_ok: bool,
}

struct FlowRun {
    diagnostics: FlowDiagnostics,
    endpoint: Vec<f64>,
    detail: Option<(Vec<FlowSnapshot>, ParticleTrajectory)>,
}

fn write_snapshots(w: &mut dyn std::io::Write, snapshots: &[FlowSnapshot]) -> addsv::Result<()> {
    let n = snapshots.first().map_or(0, |s| s.singular_values.len());
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("lambda_{i}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for s in snapshots {
        let row: Vec<String> =
            std::iter::once(format!("{:e}", s.t)).chain(s.singular_values.iter().map(|l| format!("{l:e}"))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn flow(s: &Settings) -> Result<(), Failure> {
    let seed: u64 = s.required("seed")?;
    let n = positive("N", s.value("N", 50)?)?;
    let field: Field = s.value("field", Field::Complex)?;
    let mu1 = family(&s.text("mu1", "uniform:0,1"))?;
    let mu2 = family(&s.text("mu2", "uniform:0,1"))?;
    let mut cfg = FlowConfig::with_exponents(n, field, s.value("a", 0.5)?, s.value("b", 0.004)?, s.value("c", 3.0)?)?;
    if let Some(dt) = s.optional::<f64>("dt")? {
        cfg = cfg.with_dt(dt)?;
    }
    cfg.project = s.flag("project", true)?;
    cfg.compensate = s.flag("compensate", true)?;
    let trajectories = positive("trajectories", s.value("trajectories", 1)?)?;
    let stride = positive("stride", s.value("stride", 10)?)?;
    let gamma_spec = s.text("gamma-source", "table");
    gamma_sources().parse(&gamma_spec)?;
    let alpha: Option<f64> = s.optional("alpha")?;
    if let Some(al) = alpha {
        if !(0.0..=1.0).contains(&al) {
            return Err(Failure::usage(format!("--alpha must lie in [0, 1], got {al}")));
        }
    }
    let compare = match s.text("compare", "none").as_str() {
        "none" => false,
        "fresh" => true,
        other => return Err(Failure::usage(format!("--compare must be none or fresh, got '{other}'"))),
    };
    let remainder = s.flag("remainder", true)?;
    let (x, y) = (mu1.diagonal(n)?, mu2.diagonal(n)?);
    let out = output(s, "flow")?;

    let sde = |sample: &_| -> addsv::Result<ParticleTrajectory> {
        let mut source = gamma_sources().parse(&gamma_spec)?;
        source.prepare(&GammaContext { sample, flow: cfg, convention: OverlapConvention::Symmetric, seed })?;
        let pcfg = ParticleConfig { stride, ..ParticleConfig::from_flow(&cfg) };
        let initial = ParticleState::new(sample.singular_values.clone())?;
        sv_sde_run(initial, source.as_mut(), alpha, &pcfg, &mut sample_rng(seed, stream_block(2)))
    };
    let (runs, fresh) = parallel(s, || {
        let runs = par_map(trajectories, seed, |k, rng| {
            let first = k == 0;
            let sample = assemble_model(&x, &y, field, first, rng)?;
            let traj = matrix_flow_run(&sample, cfg, if first { stride } else { cfg.steps() }, first && remainder, rng)?;
            let detail = if first { Some((traj.snapshots.clone(), sde(&sample)?)) } else { None };
            Ok(FlowRun { diagnostics: traj.diagnostics.clone(), endpoint: traj.endpoint().to_vec(), detail })
        })?;
        let fresh = if compare {
            Some(par_map_from(trajectories, seed, stream_block(1), |_, rng| {
                Ok(assemble_model(&x, &y, field, false, rng)?.singular_values)
            })?)
        } else {
            None
        };
        Ok((runs, fresh))
    })?;

    let (snapshots, particles) = runs[0].detail.as_ref().expect("the first run keeps its trajectories");
    out.csv("matrix_trajectory.csv", |w| write_snapshots(w, snapshots))?;
    out.csv("sde_trajectory.csv", |w| write_trajectory_csv(w, particles))?;
    out.csv("endpoints.csv", |w| {
        writeln!(w, "trajectory,lambda_1")?;
        for (k, r) in runs.iter().enumerate() {
            writeln!(w, "{k},{:e}", r.endpoint[0])?;
        }
        Ok(())
    })?;

    let invariance = match fresh {
        Some(fresh) => {
            let smallest = |v: &[Vec<f64>]| v.iter().map(|s| s[0]).collect::<Vec<f64>>();
            let flowed: Vec<Vec<f64>> = runs.iter().map(|r| r.endpoint.clone()).collect();
            let ks_smallest =
                ks_two_sample(&EmpiricalCdf::new(&smallest(&flowed))?, &EmpiricalCdf::new(&smallest(&fresh))?);
            let ks_all = ks_two_sample(&EmpiricalCdf::new(&flowed.concat())?, &EmpiricalCdf::new(&fresh.concat())?);
            Some(Invariance { ks_smallest, ks_all, samples: trajectories })
        }
        None => None,
    };
    let max_of = |f: fn(&FlowDiagnostics) -> f64| runs.iter().map(|r| f(&r.diagnostics)).fold(0.0, f64::max);
    let first = &runs[0].diagnostics;
    let max_unitarity = max_of(|d| d.max_unitarity_deviation);
    let endpoint_error = max_of(|d| d.endpoint_identity_error);
    let mut broken = Vec::new();
    if cfg.project && max_unitarity > 1e-8 {
        broken.push(format!("unitarity deviation {max_unitarity:e} > 1e-8"));
    }
    if endpoint_error > 1e-12 {
        broken.push(format!("endpoint identity error {endpoint_error:e} > 1e-12"));
    }
    let summary = FlowSummary {
        trajectories,
        tau: cfg.tau,
        dt: cfg.dt,
        steps: first.steps,
        index_set_size: first.index_set_size,
        a_norm: first.a_norm,
        a_hat_norm: first.a_hat_norm,
        max_step_deviation: max_of(|d| d.max_step_deviation),
        max_unitarity_deviation: max_unitarity,
        final_unitarity_deviation: max_of(|d| d.final_unitarity_deviation),
        endpoint_identity_error: endpoint_error,
        remainder: first.remainder,
        sde: SdeSummary {
            gamma_source: gamma_spec.clone(),
            alpha,
            repairs: particles.final_state.repairs,
            reflections: particles.final_state.reflections,
            refinements: particles.final_state.refinements,
            final_smallest: particles.final_state.lambda[0],
            matrix_final_smallest: runs[0].endpoint[0],
        },
        invariance,
        invariants_ok: broken.is_empty(),
    };
    out.json("flow_diag.json", s, &summary)?;
    if broken.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(broken.join("; ")))
    }
}

#[derive(Serialize)]
struct ResolventReport {
    #[serde(rename = "N")]
    n: usize,
    tolerance: f64,
    points: Vec<ResolventIdentities>,
    passed: bool,
}

#[derive(Serialize)]
struct LocalLawSize {
    #[serde(rename = "N")]
    n: usize,
    median_trace_residual: f64,
    max_trace_residual: f64,
    median_max_residual: f64,
}

#[derive(Serialize)]
struct LocalLawTrend {
    z_re: f64,
    z_im: f64,
    samples: usize,
    sizes: Vec<LocalLawSize>,
    /// Medians strictly decrease with `N`.
    decreasing: bool,
}

#[derive(Serialize)]
struct DelocalizationCheck {
    #[serde(flatten)]
    report: DelocalizationReport,
    a: f64,
    within_log_bound: bool,
    gamma_to_haar_ratio: f64,
    within_gamma_bound: bool,
}

#[derive(Serialize)]
struct AHatCheck {
    a: f64,
    sizes: Vec<usize>,
    /// `‖Â‖∞ / (1 + log N)` per size.
    ratios: Vec<f64>,
    max_ratio: f64,
}

#[derive(Serialize)]
struct BoundsCheck {
    #[serde(flatten)]
    report: EmpiricalBoundReport,
}

#[derive(Serialize)]
struct RegularityCheck {
    #[serde(rename = "N")]
    n: usize,
    reference: String,
    #[serde(flatten)]
    report: RegularityReport,
}

const CHECKS: [&str; 5] = ["ward", "locallaw", "deloc", "bounds", "regularity"];

pub fn verify(s: &Settings) -> Result<(), Failure> {
    let seed: u64 = s.required("seed")?;
    let checks: Vec<String> = s.list("checks", &CHECKS.map(String::from))?;
    if let Some(bad) = checks.iter().find(|c| !CHECKS.contains(&c.as_str())) {
        return Err(Failure::usage(format!("unknown check '{bad}' (available: {})", CHECKS.join(", "))));
    }
    let wants = |c: &str| checks.iter().any(|k| k == c);
    let n = positive("N", s.value("N", 400)?)?;
    let field: Field = s.value("field", Field::Complex)?;
    let mu1 = family(&s.text("mu1", "uniform:0,1"))?;
    let mu2 = family(&s.text("mu2", "uniform:0,1"))?;
    let a_exp: f64 = s.value("a", 0.5)?;
    if !(a_exp > 0.0 && a_exp < 1.0) {
        return Err(Failure::usage(format!("--a must lie in (0, 1), got {a_exp}")));
    }
    let out = output(s, "verify")?;
    let mut broken = Vec::new();

    if wants("ward") {
        let tolerance = 1e-10;
        let (x, y) = (mu1.diagonal(n)?, mu2.diagonal(n)?);
        let sample = assemble_model(&x, &y, field, false, &mut sample_rng(seed, stream_block(0)))?;
        let op = hermitize(sample.m.to_complex().as_ref())?;
        let points = parallel(s, || {
            [C64::new(0.0, 0.1), C64::new(0.5, 0.02), C64::new(1.5, 1.0)]
                .iter()
                .map(|&z| resolvent_identities(&op, z))
                .collect::<addsv::Result<Vec<_>>>()
        })?;
        let passed = points.iter().all(|p| p.holds(tolerance));
        if !passed {
            broken.push("resolvent identities".to_string());
        }
        out.json("resolvent.json", s, &ResolventReport { n, tolerance, points, passed })?;
    }

    if wants("locallaw") {
        let sizes: Vec<usize> = s.list("sizes", &[100, 200, 400])?;
        let samples = positive("samples", s.value("samples", 20)?)?;
        let z = C64::new(0.0, 0.1);
        let mut rows = Vec::new();
        for (k, &size) in sizes.iter().enumerate() {
            let size = positive("sizes", size)?;
            let (x, y) = (mu1.diagonal(size)?, mu2.diagonal(size)?);
            let x_law = x.symmetrized();
            let reports: Vec<LocalLawReport> = parallel(s, || {
                par_map_from(samples, seed, stream_block(1 + k as u64), |_, rng| {
                    let sample = assemble_model(&x, &y, field, false, rng)?;
                    let frame = sample.y_frame()?;
                    local_law_residual(frame.as_ref(), &x_law, y.entries(), &[z], &SolverConfig::default())
                })
            })?;
            let trace: Vec<f64> = reports.iter().map(|r| r.points[0].trace_residual).collect();
            let maxres: Vec<f64> = reports.iter().map(|r| r.points[0].max_residual).collect();
            rows.push(LocalLawSize {
                n: size,
                median_trace_residual: median(&trace),
                max_trace_residual: trace.iter().copied().fold(0.0, f64::max),
                median_max_residual: median(&maxres),
            });
        }
        let decreasing = rows.windows(2).all(|w| w[1].median_trace_residual < w[0].median_trace_residual);
        out.json("local_law.json", s, &LocalLawTrend { z_re: z.re, z_im: z.im, samples, sizes: rows, decreasing })?;
    }

    if wants("deloc") {
        let samples = positive("deloc-samples", s.value("deloc-samples", 50)?)?;
        let (x, y) = (mu1.diagonal(n)?, mu2.diagonal(n)?);
        let index = build_index_set(&y, a_exp);
        let complement = |i: usize, j: usize| index.in_complement(i, j);
        let draws: Vec<DelocalizationSample> = parallel(s, || {
            par_map_from(samples, seed, stream_block(100), |_, rng| {
                let sample = assemble_model(&x, &y, field, true, rng)?;
                let table = overlaps(&sample, &complement, OverlapConvention::Symmetric)?;
                Ok(DelocalizationSample { table, singular_values: sample.singular_values })
            })
        })?;
        let sv = &draws[0].singular_values;
        let bulk = (sv[n / 10], sv[(9 * n) / 10]);
        let report = delocalization_stats(&draws, Some(bulk), n * n - index.len())?;
        let ratio = report.max_gamma_offdiag / report.haar_gamma_scale;
        let check = DelocalizationCheck {
            a: a_exp,
            within_log_bound: report.global_max <= report.log_threshold,
            gamma_to_haar_ratio: ratio,
            within_gamma_bound: ratio <= 10.0,
            report,
        };
        out.json("delocalization.json", s, &check)?;
    }

    if wants("bounds") {
        let sizes: Vec<usize> = s.list("bound-sizes", &[50, 100, 200, 500, 1000])?;
        let ratios = sizes
            .iter()
            .map(|&m| Ok(a_hat_ratio(&mu2.diagonal(positive("bound-sizes", m)?)?, a_exp)))
            .collect::<Result<Vec<f64>, Failure>>()?;
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        out.json("a_hat_bound.json", s, &AHatCheck { a: a_exp, sizes, ratios, max_ratio })?;

        let bound_n = positive("bound-N", s.value("bound-N", 1000)?)?;
        let y = mu2.diagonal(bound_n)?;
        let reach = 1.2 * y.max().max(1e-3);
        let report = empirical_bound_check(&y, a_exp, &linspace(-reach, reach, 97), BoundIndexing::Symmetrized)?;
        out.json("empirical_bounds.json", s, &BoundsCheck { report })?;
    }

    if wants("regularity") {
        let g: f64 = s.value("g", 0.05)?;
        let big_g: f64 = s.value("G", 0.5)?;
        let threshold: f64 = s.value("regularity-threshold", 0.05)?;
        let (x, y) = (mu1.diagonal(n)?, mu2.diagonal(n)?);
        let sample = assemble_model(&x, &y, field, false, &mut sample_rng(seed, stream_block(200)))?;
        let reference =
            FreeConvolution::new(symmetrized_law(mu1.as_ref()), symmetrized_law(mu2.as_ref()), SolverConfig::default());
        let report = regularity_check(&sample.singular_values, &reference, g, big_g, threshold)?;
        out.json("regularity.json", s, &RegularityCheck { n, reference: reference.label(), report })?;
    }

    if broken.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(format!("{} failed", broken.join(", "))))
    }
}
