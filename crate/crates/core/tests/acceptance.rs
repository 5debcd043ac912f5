//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{random_device, random_initial, Limit};
use cqed::device::{build_hamiltonian, validate_dispersive, DEFAULT_DISPERSIVE_THRESHOLD};
use cqed::dynamics::{dynamics_hamiltonian, evolve, EvolveOptions, Generator, TrajectoryResult};
use cqed::perturbation::{closed_form_chi, effective_coupling, ClosedForm};
use cqed::scenario::{load_scenario, run_scenario, RunOptions, ScenarioReport};
use cqed::DeviceSpec;

const CHI3_MHZ: f64 = 0.760;
const CHI4_MHZ: f64 = 0.238;
const T_ONE_CAVITY: f64 = 658.0;
const T_TWO_CAVITY: f64 = 871.0;
const T_FOUR_ATOM: f64 = 2101.0;
const FIG2_GAP: f64 = 1.8e-4;
const FIG2_FLAT: f64 = 1.05;

const PROPERTY_CASES: u64 = 100;

struct Line {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn within(measured: f64, expected: f64, rel: f64) -> bool {
    (measured - expected).abs() <= rel * expected.abs()
}

fn metric(r: &ScenarioReport, name: &str) -> f64 {
    r.metric(name).unwrap_or(f64::NAN)
}

fn mhz(dev: &DeviceSpec, lambda: f64) -> f64 {
    lambda.abs() / dev.rate_scale()
}

/// Path sum and closed form on a named scenario device, with the path-sum wall time.
fn coupling(name: &str, which: ClosedForm) -> (DeviceSpec, f64, f64, usize, f64) {
    let s = load_scenario(name).expect("builtin scenario");
    let i = s.device.parse_state(&s.initial).unwrap();
    let f = s.device.parse_state(&s.target).unwrap();
    let start = Instant::now();
    let c = effective_coupling(&s.device, &i, &f, which.order()).expect("path sum");
    let elapsed = start.elapsed().as_secs_f64();
    let closed = closed_form_chi(&s.device, which).expect("closed form");
    (s.device, c.lambda, closed, c.paths.len(), elapsed)
}

fn chi3(lines: &mut Vec<Line>) {
    let (dev, path, closed, _, secs) = coupling("three_atom_one_cavity", ClosedForm::Chi3OneCavity);
    let (p, c) = (mhz(&dev, path), mhz(&dev, closed));
    lines.push(Line {
        name: "chi3 one cavity",
        passed: within(p, CHI3_MHZ, 0.01) && within(c, CHI3_MHZ, 0.01) && secs < 1.0,
        detail: format!("path sum {p:.4} MHz, closed form {c:.4} MHz (want {CHI3_MHZ} ±1%), {secs:.3} s (< 1 s)"),
    });
}

fn chi4(lines: &mut Vec<Line>) {
    let (dev, path, closed, paths, secs) = coupling("four_atom_one_cavity", ClosedForm::Chi4OneCavity);
    let (p, c) = (mhz(&dev, path), mhz(&dev, closed));
    lines.push(Line {
        name: "chi4 one cavity",
        passed: within(c, CHI4_MHZ, 0.01) && within(p, CHI4_MHZ, 0.01) && paths == 6 && secs < 10.0,
        detail: format!(
            "closed form {c:.4} MHz, path sum {p:.4} MHz (want {CHI4_MHZ} ±1%), {paths} paths (want 6), {secs:.3} s (< 10 s)"
        ),
    });
}

fn chi3_two_cavity(lines: &mut Vec<Line>) {
    let (_, path, closed, _, _) = coupling("three_atom_two_cavity", ClosedForm::Chi3TwoCavity);
    let (tc, tp) = (PI / closed.abs(), PI / path.abs());
    lines.push(Line {
        name: "chi3 two cavities",
        passed: within(tc, T_TWO_CAVITY, 0.01) && within(tp, T_TWO_CAVITY, 0.01),
        detail: format!("pi/chi closed form {tc:.1} ns, path sum {tp:.1} ns (want {T_TWO_CAVITY} ±1%)"),
    });
}

fn bounds(r: &ScenarioReport) -> (bool, String) {
    let (leak, photons) = (metric(r, "max_leakage"), metric(r, "max_photons"));
    (leak <= 0.05 && photons <= 0.1, format!("leakage {leak:.4} (≤ 0.05), photons {photons:.4} (≤ 0.1)"))
}

fn dynamics_one_cavity(lines: &mut Vec<Line>, r: &ScenarioReport) {
    let period = metric(r, "period");
    let peak = metric(r, "peak_transfer");
    let (ok, b) = bounds(r);
    lines.push(Line {
        name: "three-atom dynamics",
        passed: within(period, T_ONE_CAVITY, 0.05) && peak >= 0.9 && ok,
        detail: format!(
            "period {period:.1} ns (want {T_ONE_CAVITY} ±5%), peak transfer {peak:.4} (≥ 0.9), {b}, {:.1} s",
            r.elapsed_s
        ),
    });
}

fn dynamics_two_cavity(lines: &mut Vec<Line>, r: &ScenarioReport) {
    let period = metric(r, "period");
    let (ok, b) = bounds(r);
    lines.push(Line {
        name: "two-cavity dynamics",
        passed: within(period, T_TWO_CAVITY, 0.05) && ok,
        detail: format!("period {period:.1} ns (want {T_TWO_CAVITY} ±5%), {b}"),
    });
}

fn dynamics_four_atom(lines: &mut Vec<Line>, r: &ScenarioReport) {
    let period = metric(r, "period");
    let track = metric(r, "tracking_deviation");
    lines.push(Line {
        name: "four-atom dynamics",
        passed: within(period, T_FOUR_ATOM, 0.05) && track <= 0.05,
        detail: format!("period {period:.1} ns (want {T_FOUR_ATOM} ±5%), correlator tracking {track:.4} (≤ 0.05)"),
    });
}

fn spectrum(lines: &mut Vec<Line>, r: &ScenarioReport) {
    let gap = metric(r, "gap");
    let flat = metric(r, "slope_flat");
    let steep = metric(r, "slope_steep");
    let branch = metric(r, "flat_branch");
    lines.push(Line {
        name: "avoided crossing spectrum",
        passed: within(gap, FIG2_GAP, 0.15)
            && flat.abs() <= 0.02
            && within(steep, 1.0, 0.02)
            && within(branch, FIG2_FLAT, 0.005),
        detail: format!(
            "gap {gap:.4e} w0 (want {FIG2_GAP:e} ±15%), slopes {flat:.4} / {steep:.4} (0 / 1 ±2%), flat branch {branch:.5} (want {FIG2_FLAT} ±0.5%)"
        ),
    });
}

fn oracles(lines: &mut Vec<Line>, dynamics: &[&ScenarioReport], fig2: &ScenarioReport) {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in dynamics {
        let g = metric(r, "gap_ratio");
        ok &= within(g, 1.0, 0.10);
        parts.push(format!("{} gap/2|chi| {g:.3}", r.name));
    }
    let g = metric(fig2, "gap_ratio");
    ok &= within(g, 1.0, 0.30);
    parts.push(format!("{} gap/2|chi| {g:.3}", fig2.name));
    for r in dynamics {
        let m = metric(r, "closed_form_mismatch");
        ok &= m <= 1e-10;
        parts.push(format!("{} path/closed {m:.1e}", r.name));
    }
    lines.push(Line {
        name: "oracle equivalence",
        passed: ok,
        detail: format!("{} (gap ±10%, ±30% for the spectrum device; path sum ≤ 1e-10)", parts.join(", ")),
    });
}

fn checkpoint(lines: &mut Vec<Line>, r: &ScenarioReport) {
    let (pi, pt, coh) = (metric(r, "checkpoint_p_initial"), metric(r, "checkpoint_p_target"), metric(r, "checkpoint_coherence"));
    lines.push(Line {
        name: "entanglement checkpoint",
        passed: (pi - 0.5).abs() <= 0.05 && (pt - 0.5).abs() <= 0.05 && coh >= 0.45,
        detail: format!("P(initial) {pi:.4}, P(target) {pt:.4} (0.5 ± 0.05), coherence {coh:.4} (≥ 0.45)"),
    });
}

/// Largest sup-norm change of any observable, relative to its own sup norm floored at 1e-3.
fn series_change(a: &TrajectoryResult, b: &TrajectoryResult) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| {
            let scale = x.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
            x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())) / scale
        })
        .fold(0.0, f64::max)
}

fn spread(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

#[derive(Default)]
struct Worst {
    trace: f64,
    positivity: f64,
    purity: f64,
    energy: f64,
    excitations: f64,
    hermiticity: f64,
    doubling: f64,
    errors: Vec<String>,
}

const T_FINAL: f64 = 200.0;
const SAMPLES: usize = 41;

fn property_case(seed: u64, w: &mut Worst) -> cqed::Result<()> {
    let opts = EvolveOptions::default();

    let dev = random_device(seed, Limit::Lossy);
    assert!(validate_dispersive(&dev, DEFAULT_DISPERSIVE_THRESHOLD).iter().all(|e| !e.flagged));
    let space = dev.space()?;
    for generator in [Generator::Rwa, Generator::Full] {
        let h = dynamics_hamiltonian(&dev, &space, generator)?;
        w.hermiticity = w.hermiticity.max(h.hermiticity_residual() / h.max_abs());
    }
    let i = random_initial(&dev, seed);
    let a = evolve(&dev, &i, T_FINAL, SAMPLES, None, &opts)?;
    w.trace = w.trace.max(a.max_trace_error);
    w.positivity = w.positivity.min(a.min_eigenvalue);
    let mut big = dev.clone();
    for c in &mut big.cavities {
        c.n_max *= 2;
    }
    let b = evolve(&big, &i, T_FINAL, SAMPLES, None, &opts)?;
    w.doubling = w.doubling.max(series_change(&a, &b));

    let dev = random_device(seed, Limit::Lossless);
    let h = build_hamiltonian(&dev)?;
    w.hermiticity = w.hermiticity.max(h.hermiticity_residual() / h.max_abs());
    let t = evolve(&dev, &random_initial(&dev, seed), T_FINAL, SAMPLES, None, &opts)?;
    w.purity = w.purity.max(t.purity.iter().fold(0.0f64, |m, p| m.max((p - 1.0).abs())));
    w.energy = w.energy.max(spread(&t.energy) / t.energy[0].abs());
    w.trace = w.trace.max(t.max_trace_error);
    w.positivity = w.positivity.min(t.min_eigenvalue);

    let dev = random_device(seed, Limit::TwoLevel);
    let t = evolve(&dev, &random_initial(&dev, seed), T_FINAL, SAMPLES, None, &opts)?;
    w.excitations = w.excitations.max(spread(&t.excitations));
    Ok(())
}

fn properties(lines: &mut Vec<Line>) {
    let mut w = Worst::default();
    let start = Instant::now();
    for seed in 0..PROPERTY_CASES {
        if let Err(e) = property_case(seed, &mut w) {
            w.errors.push(format!("seed {seed}: {e}"));
        }
    }
    let passed = w.errors.is_empty()
        && w.trace <= 1e-6
        && w.positivity >= -1e-8
        && w.purity <= 1e-6
        && w.energy <= 1e-6
        && w.excitations <= 1e-8
        && w.hermiticity <= 1e-12
        && w.doubling < 0.005;
    let mut detail = format!(
        "{PROPERTY_CASES} seeded devices: trace {:.1e} (≤ 1e-6), min eigenvalue {:.1e} (≥ -1e-8), purity {:.1e} (≤ 1e-6), \
         energy {:.1e} (≤ 1e-6), N_T {:.1e} (≤ 1e-8), hermiticity {:.1e} (≤ 1e-12), n_max doubling {:.1e} (< 5e-3), {:.1} s",
        w.trace,
        w.positivity,
        w.purity,
        w.energy,
        w.excitations,
        w.hermiticity,
        w.doubling,
        start.elapsed().as_secs_f64()
    );
    for e in &w.errors {
        detail.push_str(&format!("; {e}"));
    }
    lines.push(Line { name: "property suite", passed, detail });
}

fn run(name: &str) -> ScenarioReport {
    let s = load_scenario(name).expect("builtin scenario");
    let opts = RunOptions { skip_convergence: true, ..Default::default() };
    run_scenario(&s, &opts).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut lines = Vec::new();
    chi3(&mut lines);
    chi4(&mut lines);
    chi3_two_cavity(&mut lines);

    let one = run("three_atom_one_cavity");
    let two = run("three_atom_two_cavity");
    let four = run("four_atom_one_cavity");
    let fig2 = run("fig2_spectrum");
    dynamics_one_cavity(&mut lines, &one);
    dynamics_two_cavity(&mut lines, &two);
    dynamics_four_atom(&mut lines, &four);
    spectrum(&mut lines, &fig2);
    oracles(&mut lines, &[&one, &two, &four], &fig2);
    properties(&mut lines);
    checkpoint(&mut lines, &one);

    for (k, l) in lines.iter().enumerate() {
        println!("{} {:>2} {:<26} {}", if l.passed { "PASS" } else { "FAIL" }, k + 1, l.name, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
