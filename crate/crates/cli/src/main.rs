//! `addsv`: seeded Monte Carlo and diagnostics for the additive model.

mod commands;
mod failure;
mod output;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};

use failure::Failure;
use settings::Settings;

fn opt(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("VALUE").allow_negative_numbers(true).help(help)
}

fn common(cmd: Command) -> Command {
    cmd.arg(opt("seed", "base seed; sample k uses ChaCha8 stream k of this seed"))
        .arg(opt("workers", "worker threads (0 = one per core)"))
        .arg(opt("out", "output directory"))
        .arg(Arg::new("config").long("config").value_name("FILE").help("key = value file; flags win"))
}

fn measure_args(cmd: Command) -> Command {
    cmd.arg(opt("mu1", "law of X: uniform:lo,hi | semicircle:v | bernoulli:a | point:a | atom file"))
        .arg(opt("mu2", "law of Y, same forms as --mu1"))
}

fn cli() -> Command {
    let sample_lsv = measure_args(common(Command::new("sample-lsv")))
        .about("least singular value of the model against its limiting law")
        .arg(opt("N", "matrix size"))
        .arg(opt("samples", "number of samples"))
        .arg(opt("field", "complex | real"))
        .arg(opt("ensemble", "model | reduced | ginibre"))
        .arg(opt("method", "smallest singular value: lu | svd"))
        .arg(opt("cdf-points", "rows of cdf.csv"));
    let freeconv = measure_args(common(Command::new("freeconv")))
        .about("density of the free additive convolution and its value at zero")
        .arg(opt("symmetrize", "symmetrize both laws first (true | false)"))
        .arg(opt("lo", "left end of the energy grid"))
        .arg(opt("hi", "right end of the energy grid"))
        .arg(opt("points", "grid points"))
        .arg(opt("eta", "imaginary part of the spectral parameter"))
        .arg(opt("tol", "solver tolerance"));
    let flow = measure_args(common(Command::new("flow")))
        .about("unitary matrix flow and the singular-value SDE")
        .arg(opt("N", "matrix size"))
        .arg(opt("field", "complex | real"))
        .arg(opt("a", "index-set exponent"))
        .arg(opt("b", "time exponent, tau = N^(b-1)"))
        .arg(opt("c", "clamp exponent of the interpolating process"))
        .arg(opt("dt", "time step (default tau/100)"))
        .arg(opt("trajectories", "independent flow runs"))
        .arg(opt("stride", "record every stride-th step of the first trajectory"))
        .arg(opt("gamma-source", "constant:c | table | recomputed:k"))
        .arg(opt("alpha", "interpolation parameter in [0, 1]; omit for the plain SDE"))
        .arg(opt("compare", "none | fresh: KS against independent fresh samples"))
        .arg(opt("project", "re-project U, V after each step (true | false)"))
        .arg(opt("compensate", "keep the -A/2 dt compensation (true | false)"))
        .arg(opt("remainder", "integrate the remainder estimate (true | false)"));
    let verify = measure_args(common(Command::new("verify")))
        .about("resolvent, local-law, delocalization, bound and regularity checks")
        .arg(opt("checks", "comma list of ward,locallaw,deloc,bounds,regularity"))
        .arg(opt("N", "matrix size of the ward, deloc and regularity checks"))
        .arg(opt("field", "complex | real"))
        .arg(opt("a", "index-set exponent"))
        .arg(opt("sizes", "matrix sizes of the local-law trend"))
        .arg(opt("samples", "samples per size in the local-law trend"))
        .arg(opt("deloc-samples", "samples in the delocalization check"))
        .arg(opt("bound-N", "matrix size of the empirical bound check"))
        .arg(opt("bound-sizes", "matrix sizes of the A-hat ratio"))
        .arg(opt("g", "smallest eta of the regularity check"))
        .arg(opt("G", "energy half-width of the regularity check"))
        .arg(opt("regularity-threshold", "largest accepted |Im m - Im m_ref|"));
    let reference = common(Command::new("reference"))
        .about("Ginibre least singular value against the exact law")
        .arg(opt("N", "matrix size"))
        .arg(opt("samples", "number of samples"))
        .arg(opt("field", "complex | real"))
        .arg(opt("method", "smallest singular value: lu | svd"))
        .arg(opt("cdf-points", "rows of cdf.csv"));
    Command::new("addsv")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Least singular values, free convolution and singular-value dynamics of R*XT + U*YV")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands([sample_lsv, freeconv, flow, verify, reference])
}

/// Flags given on the command line, as raw strings.
fn given_flags(m: &ArgMatches) -> BTreeMap<String, String> {
    m.ids()
        .map(|id| id.as_str())
        .filter(|id| *id != "config" && m.value_source(id) == Some(ValueSource::CommandLine))
        .filter_map(|id| m.get_one::<String>(id).map(|v| (id.to_string(), v.clone())))
        .collect()
}

fn run(name: &str, m: &ArgMatches, known: Vec<String>) -> Result<(), Failure> {
    let file = m.get_one::<String>("config").map(PathBuf::from);
    let settings = Settings::new(file.as_deref(), given_flags(m), &known)?;
    match name {
        "sample-lsv" => commands::sample_lsv(&settings),
        "freeconv" => commands::freeconv(&settings),
        "flow" => commands::flow(&settings),
        "verify" => commands::verify(&settings),
        "reference" => commands::reference(&settings),
        other => Err(Failure::usage(format!("unknown command '{other}'"))),
    }
}

fn main() -> ExitCode {
    let cmd = cli();
    let matches = match cmd.clone().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let known: Vec<String> = cmd
        .find_subcommand(name)
        .map(|c| c.get_arguments().map(|a| a.get_id().to_string()).filter(|id| id != "config").collect())
        .unwrap_or_default();
    match run(name, sub, known) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("addsv {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definitions_are_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn only_command_line_values_are_collected() {
        let m = cli().try_get_matches_from(["addsv", "flow", "--N", "12", "--seed", "4"]).unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let flags = given_flags(sub);
        assert_eq!(flags.len(), 2);
        assert_eq!(flags["N"], "12");
    }
}
