use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cqed::device::{validate_dispersive, DEFAULT_DISPERSIVE_THRESHOLD};
use cqed::dynamics::{evolve, EvolveOptions, Generator, Method, TrajectoryMetrics};
use cqed::perturbation::{closed_form_chi, effective_coupling, ClosedForm};
use cqed::scenario::{load_scenario, load_scenario_file, run_scenario, scenario_names, RunOptions};
use cqed::spectrum::{find_resonance, linspace, sweep_spectrum, LevelSelector};
use cqed::{DeviceSpec, Error};

#[derive(Parser, Debug)]
#[command(name = "cqed", version, about = "Cavity-QED simulator for cyclic three-level atoms")]
struct Cli {
    /// Worker threads for sweeps and scenario runs (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for CSV and summary files.
    #[arg(long, global = true, env = "CQED_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep a parameter and track selected eigenvalues.
    Spectrum(SpectrumArgs),
    /// Effective coupling between two degenerate bare states.
    Coupling(CouplingArgs),
    /// Integrate the master equation and write observables.
    Dynamics(DynamicsArgs),
    /// Run bundled or given scenarios and compare against expectations.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct DeviceArgs {
    /// Device config file.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    device: Option<PathBuf>,
    /// Use the device of a bundled scenario.
    #[arg(long)]
    scenario: Option<String>,
    /// Override a parameter, e.g. `atoms.1.omega_e=7.9664`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Photon cutoff for every cavity.
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    device: DeviceArgs,
    /// Parameter path to sweep.
    #[arg(long)]
    sweep: String,
    /// `lo:hi:points`.
    #[arg(long)]
    range: String,
    /// Sorted eigenvalue indices, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [6usize, 7])]
    levels: Vec<usize>,
}

#[derive(Args, Debug)]
struct CouplingArgs {
    #[command(flatten)]
    device: DeviceArgs,
    /// Initial bare state, e.g. `0,e,g,g` (defaults to atom 1 excited).
    #[arg(long)]
    initial: Option<String>,
    /// Final bare state (defaults to every other atom excited).
    #[arg(long = "final")]
    target: Option<String>,
    /// Perturbation order (even).
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Number of paths listed.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args, Debug)]
struct DynamicsArgs {
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long)]
    initial: Option<String>,
    /// State whose population and coherence with the initial state are recorded.
    #[arg(long = "final")]
    target: Option<String>,
    /// Duration in ns (or 1/w0).
    #[arg(long)]
    t_final: f64,
    #[arg(long, default_value_t = 301)]
    samples: usize,
    #[arg(long, value_enum, default_value = "split")]
    method: MethodArg,
    /// Coherent generator: rotating-wave (default) or full coupling.
    #[arg(long, value_enum, default_value = "rwa")]
    generator: GeneratorArg,
    /// Move atoms.1.omega_e onto the exact resonance inside `lo:hi` first.
    #[arg(long, value_name = "LO:HI")]
    compensate: Option<String>,
    /// Keep n_max fixed even if the top Fock level fills.
    #[arg(long)]
    no_escalate: bool,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "dynamics.csv")]
    csv: String,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Split,
    Reference,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum GeneratorArg {
    Rwa,
    Full,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Run only these bundled scenarios.
    #[arg(long)]
    only: Vec<String>,
    /// Scenario files to run instead of the bundled set.
    #[arg(long)]
    file: Vec<PathBuf>,
    /// Skip the larger-truncation rerun.
    #[arg(long)]
    skip_convergence: bool,
    /// Also write `<name>.json` summaries and trajectory CSVs.
    #[arg(long)]
    write: bool,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match root(&e) {
            Error::Config(_)
            | Error::InvalidDevice(_)
            | Error::InvalidState { .. }
            | Error::UnknownParameter(_)
            | Error::UnknownSubsystem(_)
            | Error::UnknownScenario(_)
            | Error::UnknownObservable(_)
            | Error::BadOrder(_)
            | Error::EmptySweep
            | Error::DuplicateLabel(_)
            | Error::BadDimension { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Scenario { source, .. } => root(source),
        e => e,
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn load_device(args: &DeviceArgs) -> Result<DeviceSpec, Failure> {
    let mut dev = match (&args.device, &args.scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            DeviceSpec::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => load_scenario(name)?.device,
        (None, None) => return Err(usage("either --device or --scenario is required")),
    };
    for o in &args.overrides {
        let (path, value) = o.split_once('=').ok_or_else(|| usage(format!("override `{o}` is not PATH=VALUE")))?;
        let value: f64 = value.trim().parse().map_err(|_| usage(format!("override `{o}` has a non-numeric value")))?;
        dev.set_param(path.trim(), value)?;
    }
    if let Some(n) = args.n_max {
        dev = dev.with_n_max(n);
        dev.validate()?;
    }
    for e in validate_dispersive(&dev, DEFAULT_DISPERSIVE_THRESHOLD).into_iter().filter(|e| e.flagged) {
        log::warn!("edge {} transition {}: g/|detuning| = {:.3} is not dispersive", e.edge, e.transition, e.ratio);
    }
    Ok(dev)
}

fn parse_range(text: &str) -> Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || usage(format!("range `{text}` must be lo:hi:points with lo < hi and points >= 2"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(hi > lo) || n < 2 {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

fn parse_bracket(text: &str) -> Result<(f64, f64), Failure> {
    let bad = || usage(format!("bracket `{text}` must be lo:hi with lo < hi"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let (lo, hi): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    if !(hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("output directory {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn states(
    dev: &DeviceSpec,
    initial: &Option<String>,
    target: &Option<String>,
) -> Result<(cqed::BareState, cqed::BareState), Failure> {
    let (i0, f0) = dev.exchange_states()?;
    let i = initial.as_deref().map(|l| dev.parse_state(l)).transpose()?.unwrap_or(i0);
    let f = target.as_deref().map(|l| dev.parse_state(l)).transpose()?.unwrap_or(f0);
    Ok((i, f))
}

fn cmd_spectrum(cli: &Cli, a: &SpectrumArgs) -> Result<(), Failure> {
    let (lo, hi, n) = parse_range(&a.range)?;
    if a.levels.len() != 2 {
        return Err(usage("--levels takes exactly two indices"));
    }
    let dev = load_device(&a.device)?;
    let sweep = sweep_spectrum(&dev, &a.sweep, &linspace(lo, hi, n), &a.levels)?;
    let mut w = out_file(&cli.out, "spectrum.csv")?;
    sweep.write_csv(&mut w)?;
    w.flush()?;
    let (i, f) = dev.exchange_states()?;
    match find_resonance(&dev, &a.sweep, (lo, hi), &LevelSelector::Indices(a.levels[0], a.levels[1]), (&i, &f)) {
        Ok(rep) => {
            print!("{rep}");
            let mut w = out_file(&cli.out, "crossing.txt")?;
            write!(w, "{rep}")?;
        }
        Err(Error::NoInteriorMinimum { .. }) => println!("no avoided crossing inside the sweep range"),
        Err(e) => return Err(e.into()),
    }
    println!("wrote {} rows to {}", n, cli.out.join("spectrum.csv").display());
    Ok(())
}

fn cmd_coupling(a: &CouplingArgs) -> Result<(), Failure> {
    if a.order < 2 || a.order % 2 == 1 {
        return Err(usage(format!("--order must be an even number >= 2, got {}", a.order)));
    }
    let dev = load_device(&a.device)?;
    let (i, f) = states(&dev, &a.initial, &a.target)?;
    let c = effective_coupling(&dev, &i, &f, a.order)?;
    print!("{}", c.report(a.top));
    if let Some(which) = ClosedForm::detect(&dev).filter(|w| w.order() == a.order) {
        let closed = closed_form_chi(&dev, which)?;
        let rel = ((c.lambda - closed) / closed).abs();
        println!("closed form {which}: {:+.9e}, relative difference {rel:.2e}", closed / c.unit * if c.dimensionless { 1.0 } else { 1e3 });
    }
    Ok(())
}

fn cmd_dynamics(cli: &Cli, a: &DynamicsArgs) -> Result<(), Failure> {
    if !(a.t_final >= 0.0) {
        return Err(usage("--t-final must be non-negative"));
    }
    let mut dev = load_device(&a.device)?;
    let (i, f) = states(&dev, &a.initial, &a.target)?;
    if let Some(b) = &a.compensate {
        let (lo, hi) = parse_bracket(b)?;
        let rep = find_resonance(&dev, "atoms.1.omega_e", (lo, hi), &LevelSelector::BareStates(i.clone(), f.clone()), (&i, &f))?;
        println!("compensated atoms.1.omega_e = {:.9}", rep.location);
        dev.set_param("atoms.1.omega_e", rep.location)?;
    }
    let opts = EvolveOptions {
        method: match a.method {
            MethodArg::Split => Method::Split,
            MethodArg::Reference => Method::Reference,
        },
        generator: match a.generator {
            GeneratorArg::Rwa => Generator::Rwa,
            GeneratorArg::Full => Generator::Full,
        },
        escalate: !a.no_escalate,
        ..Default::default()
    };
    let traj = evolve(&dev, &i, a.t_final, a.samples, Some(&f), &opts)?;
    for w in &traj.warnings {
        eprintln!("warning: {w}");
    }
    let mut w = out_file(&cli.out, &a.csv)?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    let metrics = TrajectoryMetrics::from_trajectory(&traj, "excitation_1");
    let summary = serde_json::json!({
        "initial": i.label(),
        "target": f.label(),
        "t_final": a.t_final,
        "samples": traj.times.len(),
        "n_max": traj.n_max,
        "max_trace_error": traj.max_trace_error,
        "max_hermiticity_error": traj.max_hermiticity_error,
        "min_eigenvalue": traj.min_eigenvalue,
        "top_fock_population": traj.top_fock_population,
        "metrics": metrics,
        "warnings": traj.warnings,
    });
    let stem = Path::new(&a.csv).file_stem().and_then(|s| s.to_str()).unwrap_or("dynamics");
    let mut j = out_file(&cli.out, &format!("{stem}.json"))?;
    writeln!(j, "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    match &metrics.period {
        Some(p) => println!("period {:.3} {} (spectral {:.3})", p.period, traj.time_unit, p.spectral_period),
        None => println!("period: no oscillation within the run"),
    }
    if let Some(t) = metrics.peak_transfer {
        println!("peak transfer {t:.4}");
    }
    println!("max leakage {:.3e}, max photons {:.3e}", metrics.max_leakage, metrics.max_photons);
    println!("wrote {} rows to {}", traj.times.len(), cli.out.join(&a.csv).display());
    Ok(())
}

fn cmd_check(cli: &Cli, a: &CheckArgs) -> Result<(), Failure> {
    let opts = RunOptions { skip_convergence: a.skip_convergence, ..Default::default() };
    let mut jobs = Vec::new();
    if a.file.is_empty() {
        let names: Vec<String> =
            if a.only.is_empty() { scenario_names().into_iter().map(String::from).collect() } else { a.only.clone() };
        for n in &names {
            jobs.push((n.clone(), load_scenario(n).map_err(|e| if matches!(e, Error::UnknownScenario(_)) { usage(e.to_string()) } else { e.into() })));
        }
    } else {
        for p in &a.file {
            jobs.push((p.display().to_string(), load_scenario_file(p).map_err(Failure::from)));
        }
    }
    // a usage error in the selection aborts before anything runs
    if let Some((_, Err(f))) = jobs.iter().find(|(_, r)| matches!(r, Err(f) if f.code == 2 && a.file.is_empty())) {
        return Err(Failure { code: 2, message: f.message.clone() });
    }
    let mut all_ok = true;
    let mut rows = Vec::new();
    for (name, job) in jobs {
        let result = job.and_then(|s| run_scenario(&s, &opts).map_err(Failure::from));
        match result {
            Ok(rep) => {
                print!("{rep}");
                if a.write {
                    let mut j = out_file(&cli.out, &format!("{}.json", rep.name))?;
                    writeln!(j, "{}", rep.to_json())?;
                    if let Some(t) = &rep.trajectory {
                        let mut w = out_file(&cli.out, &format!("{}.csv", rep.name))?;
                        t.write_csv(&mut w)?;
                    }
                    if let Some(s) = &rep.spectrum {
                        let mut w = out_file(&cli.out, &format!("{}.csv", rep.name))?;
                        s.write_csv(&mut w)?;
                    }
                }
                all_ok &= rep.passed();
                let failed = rep.outcomes.iter().filter(|o| !o.passed).count();
                rows.push((name, if rep.passed() { "PASS".to_string() } else { format!("FAIL ({failed} of {})", rep.outcomes.len()) }));
            }
            Err(f) => {
                eprintln!("{name}: {}", f.message);
                all_ok = false;
                rows.push((name, "ERROR".to_string()));
            }
        }
    }
    println!("\nsummary");
    for (name, status) in &rows {
        println!("  {name:<28} {status}");
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure { code: 1, message: "one or more scenarios failed".into() })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(&cli, a),
        Command::Coupling(a) => cmd_coupling(a),
        Command::Dynamics(a) => cmd_dynamics(&cli, a),
        Command::Check(a) => cmd_check(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
