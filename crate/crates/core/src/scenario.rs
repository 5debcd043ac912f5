//! Bundled experiment presets and the runner that checks them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::device::{validate_dispersive, DeviceSpec, DEFAULT_DISPERSIVE_THRESHOLD};
use crate::dynamics::{entanglement_checkpoint, evolve, EvolveOptions, ObservableSet, TrajectoryMetrics, TrajectoryResult};
use crate::error::{Error, Result};
use crate::perturbation::{closed_form_chi, effective_coupling, ClosedForm, EffectiveCoupling};
use crate::spectrum::{find_resonance, level_slopes, linspace, sweep_spectrum, CrossingReport, LevelSelector, SpectrumResult};

const BUILTIN: [(&str, &str); 4] = [
    ("fig2_spectrum", include_str!("../scenarios/fig2_spectrum.toml")),
    ("three_atom_one_cavity", include_str!("../scenarios/three_atom_one_cavity.toml")),
    ("three_atom_two_cavity", include_str!("../scenarios/three_atom_two_cavity.toml")),
    ("four_atom_one_cavity", include_str!("../scenarios/four_atom_one_cavity.toml")),
];

pub fn scenario_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// Text of a bundled scenario file.
pub fn builtin_source(name: &str) -> Result<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s).ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

pub fn load_scenario(name: &str) -> Result<Scenario> {
    Scenario::from_toml(builtin_source(name)?).map_err(|e| wrap(name, e))
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text).map_err(|e| wrap(&path.display().to_string(), e))
}

fn wrap(name: &str, e: Error) -> Error {
    match e {
        Error::Scenario { .. } => e,
        e => Error::Scenario { name: name.to_string(), source: Box::new(e) },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingPlan {
    pub order: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonancePlan {
    pub parameter: String,
    pub bracket: [f64; 2],
    /// Sorted level indices; without them the branches are picked by weight on the exchange states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<[usize; 2]>,
    /// Move the parameter onto the resonance before evolving.
    #[serde(default)]
    pub compensate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumPlan {
    pub parameter: String,
    pub range: [f64; 2],
    pub points: usize,
    pub levels: Vec<usize>,
    /// Distance from the crossing at which branch slopes are measured.
    pub slope_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsPlan {
    pub t_final: f64,
    pub samples: usize,
    pub period_observable: String,
    pub transfer_observable: String,
    /// Pair whose largest difference over the first quarter period is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<[String; 2]>,
    /// Fock levels added to every cavity, beyond the truncation the run ended up using, for the convergence rerun.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_extra: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Relative,
    Absolute,
    AtMost,
    AtLeast,
}

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Quoted in the published results.
    Published,
    /// Computed from published values or an independent calculation.
    Derived,
    /// Conservative threshold on a quantity described only qualitatively.
    Bound,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Published => "published",
            Source::Derived => "derived",
            Source::Bound => "bound",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub metric: String,
    pub check: Check,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub source: Source,
}

impl Expectation {
    pub fn accepts(&self, measured: f64) -> bool {
        let tol = self.tolerance.unwrap_or(0.0);
        match self.check {
            Check::Relative => (measured - self.value).abs() <= tol * self.value.abs(),
            Check::Absolute => (measured - self.value).abs() <= tol,
            Check::AtMost => measured <= self.value,
            Check::AtLeast => measured >= self.value,
        }
    }

    pub fn describe(&self) -> String {
        let tol = self.tolerance.unwrap_or(0.0);
        match self.check {
            Check::Relative => format!("{} ± {}%", fmt_num(self.value), 100.0 * tol),
            Check::Absolute => format!("{} ± {}", fmt_num(self.value), fmt_num(tol)),
            Check::AtMost => format!("<= {}", fmt_num(self.value)),
            Check::AtLeast => format!(">= {}", fmt_num(self.value)),
        }
    }
}

fn fmt_num(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e5) {
        format!("{x:.4e}")
    } else {
        format!("{x:.6}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub initial: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance: Option<ResonancePlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsPlan>,
    pub device: DeviceSpec,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

const COUPLING_METRICS: [&str; 5] = ["chi", "chi_signed", "paths", "coupling_period", "closed_form_mismatch"];
const RESONANCE_METRICS: [&str; 3] = ["crossing_location", "gap", "gap_ratio"];
const SPECTRUM_METRICS: [&str; 3] = ["slope_flat", "slope_steep", "flat_branch"];
const DYNAMICS_METRICS: [&str; 10] = [
    "period",
    "spectral_period",
    "peak_transfer",
    "max_leakage",
    "max_photons",
    "checkpoint_p_initial",
    "checkpoint_p_target",
    "checkpoint_coherence",
    "correlator_at_revival",
    "convergence",
];

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Metric names the plan sections of this scenario produce.
    pub fn available_metrics(&self) -> Vec<&'static str> {
        let mut m = Vec::new();
        if self.coupling.is_some() {
            m.extend(COUPLING_METRICS);
        }
        if self.resonance.is_some() {
            m.extend(RESONANCE_METRICS);
        }
        if self.spectrum.is_some() {
            m.extend(SPECTRUM_METRICS);
        }
        if let Some(d) = &self.dynamics {
            m.extend(DYNAMICS_METRICS);
            if d.tracking.is_some() {
                m.push("tracking_deviation");
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        let i = self.device.parse_state(&self.initial)?;
        let f = self.device.parse_state(&self.target)?;
        if let Some(d) = &self.dynamics {
            if !(d.t_final > 0.0) || d.samples < 3 {
                return Err(Error::Config("dynamics needs t_final > 0 and at least 3 samples".into()));
            }
            let obs = ObservableSet::standard(&self.device, &self.device.space()?, Some((&i, &f)))?.names();
            let mut used = vec![&d.period_observable, &d.transfer_observable];
            if let Some([a, b]) = &d.tracking {
                used.extend([a, b]);
            }
            for n in used {
                if !obs.contains(n) {
                    return Err(Error::UnknownObservable(n.clone()));
                }
            }
        }
        if let Some(r) = &self.resonance {
            self.device.get_param(&r.parameter)?;
            if !(r.bracket[1] > r.bracket[0]) {
                return Err(Error::EmptySweep);
            }
        }
        if let Some(s) = &self.spectrum {
            self.device.get_param(&s.parameter)?;
            if s.points < 2 || !(s.range[1] > s.range[0]) {
                return Err(Error::EmptySweep);
            }
            if s.levels.len() != 2 {
                return Err(Error::Config("spectrum needs exactly two levels".into()));
            }
        }
        let known = self.available_metrics();
        for e in &self.expect {
            if !known.contains(&e.metric.as_str()) {
                return Err(Error::Config(format!("expected metric `{}` is not produced by this scenario", e.metric)));
            }
            if matches!(e.check, Check::Relative | Check::Absolute) && e.tolerance.is_none() {
                return Err(Error::Config(format!("metric `{}` needs a tolerance", e.metric)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub metric: String,
    pub expected: String,
    pub source: Source,
    pub measured: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Skip the rerun at a larger truncation.
    pub skip_convergence: bool,
    pub evolve: EvolveOptions,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    /// "MHz"/"ns" or "w0".
    pub units: String,
    pub metrics: BTreeMap<String, f64>,
    pub outcomes: Vec<Outcome>,
    pub warnings: Vec<String>,
    pub elapsed_s: f64,
    #[serde(skip)]
    pub coupling: Option<EffectiveCoupling>,
    #[serde(skip)]
    pub crossing: Option<CrossingReport>,
    #[serde(skip)]
    pub spectrum: Option<SpectrumResult>,
    #[serde(skip)]
    pub trajectory: Option<TrajectoryResult>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} [{}] {:.1} s", self.name, if self.passed() { "PASS" } else { "FAIL" }, self.elapsed_s)?;
        for o in &self.outcomes {
            let m = o.measured.map_or_else(|| "not measured".to_string(), fmt_num);
            writeln!(
                f,
                "  {}  {:<24} {:>14}   expected {} ({})",
                if o.passed { "pass" } else { "FAIL" },
                o.metric,
                m,
                o.expected,
                o.source
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

/// Scale from internal frequency units to the display unit (MHz or ω₀).
fn display_scale(dev: &DeviceSpec) -> f64 {
    if dev.is_dimensionless() {
        1.0 / dev.freq_scale()
    } else {
        1e3 / dev.freq_scale()
    }
}

fn dynamics_metrics(traj: &TrajectoryResult, plan: &DynamicsPlan, out: &mut BTreeMap<String, f64>) -> Result<()> {
    let m = TrajectoryMetrics::from_trajectory(traj, &plan.period_observable);
    let transfer = traj.series(&plan.transfer_observable)?;
    out.insert("peak_transfer".into(), transfer.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    out.insert("max_leakage".into(), m.max_leakage);
    out.insert("max_photons".into(), m.max_photons);
    let Some(p) = m.period else {
        return Ok(());
    };
    out.insert("period".into(), p.period);
    out.insert("spectral_period".into(), p.spectral_period);
    let t_end = *traj.times.last().expect("nonempty");
    if p.period / 4.0 <= t_end {
        let c = entanglement_checkpoint(traj, p.period / 4.0)?;
        out.insert("checkpoint_p_initial".into(), c.p_initial);
        out.insert("checkpoint_p_target".into(), c.p_target);
        out.insert("checkpoint_coherence".into(), c.coherence);
    }
    // revival of the first atom after one full period
    let y = traj.series(&plan.period_observable)?;
    let window: Vec<usize> =
        (0..traj.times.len()).filter(|&k| traj.times[k] >= 0.5 * p.period && traj.times[k] <= 1.5 * p.period).collect();
    if let Some(&k) = window.iter().max_by(|&&a, &&b| y[a].total_cmp(&y[b])) {
        if k + 1 < traj.times.len() || traj.times[k] >= 1.25 * p.period {
            out.insert("correlator_at_revival".into(), transfer[k]);
        }
    }
    if let Some([a, b]) = &plan.tracking {
        let (ya, yb) = (traj.series(a)?, traj.series(b)?);
        let dev = traj
            .times
            .iter()
            .zip(ya.iter().zip(yb))
            .filter(|(t, _)| **t <= p.period / 4.0)
            .fold(0.0f64, |m, (_, (x, y))| m.max((x - y).abs()));
        out.insert("tracking_deviation".into(), dev);
    }
    Ok(())
}

/// Runs every plan section of `s` and checks the expectations.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    run_inner(s, opts).map_err(|e| wrap(&s.name, e))
}

fn run_inner(s: &Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    let start = Instant::now();
    let mut dev = s.device.clone();
    let i = dev.parse_state(&s.initial)?;
    let f = dev.parse_state(&s.target)?;
    let scale = display_scale(&dev);
    let mut metrics = BTreeMap::new();
    let mut warnings = Vec::new();
    for e in validate_dispersive(&dev, DEFAULT_DISPERSIVE_THRESHOLD).into_iter().filter(|e| e.flagged) {
        warnings.push(format!("edge {} {} has g/|detuning| = {:.3}", e.edge, e.transition, e.ratio));
    }

    let coupling = match &s.coupling {
        Some(plan) => {
            let c = effective_coupling(&dev, &i, &f, plan.order)?;
            metrics.insert("chi".into(), (c.lambda * scale).abs());
            metrics.insert("chi_signed".into(), c.lambda * scale);
            metrics.insert("paths".into(), c.paths.len() as f64);
            metrics.insert("coupling_period".into(), c.period());
            if let Some(which) = ClosedForm::detect(&dev).filter(|w| w.order() == plan.order) {
                let closed = closed_form_chi(&dev, which)?;
                metrics.insert("closed_form_mismatch".into(), ((c.lambda - closed) / closed).abs());
            }
            if !c.rejected.is_empty() {
                warnings.push(format!("{} coupling paths rejected", c.rejected.len()));
            }
            Some(c)
        }
        None => None,
    };

    let crossing = match &s.resonance {
        Some(plan) => {
            let selector = match plan.levels {
                Some([a, b]) => LevelSelector::Indices(a, b),
                None => LevelSelector::BareStates(i.clone(), f.clone()),
            };
            let rep = find_resonance(&dev, &plan.parameter, (plan.bracket[0], plan.bracket[1]), &selector, (&i, &f))?;
            metrics.insert("crossing_location".into(), rep.location);
            metrics.insert("gap".into(), rep.gap * scale);
            if let Some(c) = &coupling {
                metrics.insert("gap_ratio".into(), rep.gap / (2.0 * c.lambda.abs()));
            }
            if plan.compensate {
                log::info!("{}: {} moved to the resonance at {:.9}", s.name, plan.parameter, rep.location);
                dev.set_param(&plan.parameter, rep.location)?;
            }
            Some(rep)
        }
        None => None,
    };

    let spectrum = match &s.spectrum {
        Some(plan) => {
            let values = linspace(plan.range[0], plan.range[1], plan.points);
            let sweep = sweep_spectrum(&dev, &plan.parameter, &values, &plan.levels)?;
            if let Some(rep) = &crossing {
                let x = rep.location;
                let mut flat = Vec::new();
                let mut steep = Vec::new();
                for side in [x - plan.slope_offset, x + plan.slope_offset] {
                    let sl = level_slopes(&dev, &plan.parameter, side, &plan.levels, 1e-4 * plan.slope_offset)?;
                    let (a, b) = if sl[0].abs() < sl[1].abs() { (sl[0], sl[1]) } else { (sl[1], sl[0]) };
                    flat.push(a);
                    steep.push(b);
                }
                metrics.insert("slope_flat".into(), flat.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m }));
                metrics.insert(
                    "slope_steep".into(),
                    steep.iter().fold(1.0f64, |m, v| if (v - 1.0).abs() > (m - 1.0).abs() { *v } else { m }),
                );
                let mid = sweep_spectrum(&dev, &plan.parameter, &[x], &plan.levels)?;
                metrics.insert("flat_branch".into(), 0.5 * (mid.energies[0][0] + mid.energies[0][1]) / mid.unit);
            }
            Some(sweep)
        }
        None => None,
    };

    let trajectory = match &s.dynamics {
        Some(plan) => {
            let traj = evolve(&dev, &i, plan.t_final, plan.samples, Some(&f), &opts.evolve)?;
            warnings.extend(traj.warnings.iter().cloned());
            dynamics_metrics(&traj, plan, &mut metrics)?;
            if let (Some(extra), false) = (plan.convergence_extra, opts.skip_convergence) {
                let mut big = dev.clone();
                for (c, used) in big.cavities.iter_mut().zip(&traj.n_max) {
                    c.n_max = used + extra;
                }
                let other = evolve(&big, &i, plan.t_final, plan.samples, Some(&f), &opts.evolve)?;
                let mut alt = BTreeMap::new();
                dynamics_metrics(&other, plan, &mut alt)?;
                let change = metrics
                    .iter()
                    .filter(|(k, _)| DYNAMICS_METRICS.contains(&k.as_str()) || k.as_str() == "tracking_deviation")
                    .filter_map(|(k, a)| alt.get(k).map(|b| (a - b).abs() / a.abs().max(1e-3)))
                    .fold(0.0f64, f64::max);
                metrics.insert("convergence".into(), change);
            }
            Some(traj)
        }
        None => None,
    };

    let outcomes = s
        .expect
        .iter()
        .map(|e| {
            let measured = metrics.get(&e.metric).copied();
            Outcome {
                metric: e.metric.clone(),
                expected: e.describe(),
                source: e.source,
                measured,
                passed: measured.is_some_and(|m| e.accepts(m)),
            }
        })
        .collect();
    Ok(ScenarioReport {
        name: s.name.clone(),
        units: if dev.is_dimensionless() { "w0".into() } else { "MHz/ns".into() },
        metrics,
        outcomes,
        warnings,
        elapsed_s: start.elapsed().as_secs_f64(),
        coupling,
        crossing,
        spectrum,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_files_round_trip() {
        for name in scenario_names() {
            let text = builtin_source(name).unwrap();
            let s = load_scenario(name).unwrap();
            assert_eq!(s.name, name);
            assert_eq!(s.to_toml().unwrap(), text, "{name} is not in canonical form");
        }
    }

    #[test]
    fn builtin_devices_are_dispersive() {
        for name in scenario_names() {
            let s = load_scenario(name).unwrap();
            let flagged: Vec<_> =
                validate_dispersive(&s.device, DEFAULT_DISPERSIVE_THRESHOLD).into_iter().filter(|e| e.flagged).collect();
            assert!(flagged.is_empty(), "{name}: {flagged:?}");
        }
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(load_scenario("five_atoms"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn three_atom_parameters() {
        let s = load_scenario("three_atom_one_cavity").unwrap();
        let d = &s.device;
        assert_eq!(d.cavities[0].omega_c, 6.0);
        assert_eq!(d.cavities[0].kappa, 0.01);
        let a1 = &d.atoms[0];
        assert_eq!((a1.omega_e, a1.omega_i), (7.966, Some(12.0)));
        assert_eq!((a1.gamma_ge, a1.gamma_gi, a1.gamma_ei), (0.01, Some(0.01), Some(0.015)));
        for a in &d.atoms[1..] {
            assert_eq!((a.omega_e, a.omega_i), (4.0, Some(7.5)));
        }
        for e in &d.edges {
            assert_eq!((e.g_ge, e.g_gi, e.g_ei), (150.0, Some(150.0), Some(210.0)));
        }
        assert_eq!(s.initial, "0,e,g,g");
        assert_eq!(s.target, "0,g,e,e");
    }

    #[test]
    fn four_atom_parameters() {
        let s = load_scenario("four_atom_one_cavity").unwrap();
        let d = &s.device;
        assert_eq!(d.atoms.len(), 4);
        assert_eq!((d.atoms[0].omega_e, d.atoms[0].omega_i), (8.9665, Some(21.0)));
        assert_eq!((d.edges[0].g_ge, d.edges[0].g_gi, d.edges[0].g_ei), (180.0, Some(180.0), Some(210.0)));
        for (a, e) in d.atoms[1..].iter().zip(&d.edges[1..]) {
            assert_eq!((a.omega_e, a.omega_i), (3.0, Some(7.0)));
            assert_eq!((e.g_ge, e.g_gi, e.g_ei), (150.0, Some(150.0), Some(200.0)));
        }
    }

    #[test]
    fn two_cavity_parameters() {
        let s = load_scenario("three_atom_two_cavity").unwrap();
        let d = &s.device;
        assert_eq!(d.cavities.iter().map(|c| c.omega_c).collect::<Vec<_>>(), [6.0, 6.0]);
        assert_eq!(d.atoms[0].omega_e, 7.945);
        assert_eq!(d.atoms[0].levels(), 2);
        assert_eq!(d.atoms[2].levels(), 2);
        assert_eq!((d.atoms[1].omega_e, d.atoms[1].omega_i), (4.0, Some(7.5)));
        let g = |a: &str, c: &str| d.edges.iter().find(|e| e.atom == a && e.cavity == c).unwrap();
        assert_eq!(g("1", "L").g_ge, 180.0);
        assert_eq!(g("3", "R").g_ge, 180.0);
        for c in ["L", "R"] {
            assert_eq!((g("2", c).g_ge, g("2", c).g_gi, g("2", c).g_ei), (150.0, Some(150.0), Some(210.0)));
        }
        assert_eq!(s.initial, "0,0,e,g,g");
    }

    #[test]
    fn fig2_parameters() {
        let s = load_scenario("fig2_spectrum").unwrap();
        let d = &s.device;
        assert_eq!(d.unit_omega0, Some(1.0));
        assert_eq!(d.cavities[0].omega_c, 0.75);
        assert_eq!(d.atoms[0].omega_i, Some(1.55));
        assert_eq!((d.atoms[1].omega_e, d.atoms[1].omega_i), (0.5, Some(0.9)));
        assert_eq!((d.atoms[2].omega_e, d.atoms[2].omega_i), (0.55, Some(1.0)));
        for e in &d.edges {
            assert_eq!((e.g_ge, e.g_gi, e.g_ei), (0.02, Some(0.02), Some(0.025)));
        }
        let sp = s.spectrum.as_ref().unwrap();
        assert_eq!((sp.range, sp.points, sp.levels.clone()), ([1.0, 1.1], 201, vec![6, 7]));
    }

    #[test]
    fn validation_catches_bad_metric_and_observable() {
        let mut s = load_scenario("three_atom_one_cavity").unwrap();
        s.expect[0].metric = "nonsense".into();
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = load_scenario("three_atom_one_cavity").unwrap();
        s.dynamics.as_mut().unwrap().transfer_observable = "corr_2_3_4".into();
        assert!(matches!(s.validate(), Err(Error::UnknownObservable(_))));
        let text = builtin_source("fig2_spectrum").unwrap().replace("points = 201", "points = \"many\"");
        assert!(matches!(Scenario::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn expectation_checks() {
        let e = |check, value, tolerance| Expectation { metric: "m".into(), check, value, tolerance, source: Source::Derived };
        assert!(e(Check::Relative, 658.0, Some(0.05)).accepts(690.0));
        assert!(!e(Check::Relative, 658.0, Some(0.05)).accepts(691.0));
        assert!(e(Check::Absolute, 0.0, Some(0.02)).accepts(-0.02));
        assert!(e(Check::AtMost, 0.05, None).accepts(0.05));
        assert!(!e(Check::AtLeast, 0.9, None).accepts(0.89));
    }

    #[test]
    fn coupling_only_run() {
        let mut s = load_scenario("three_atom_one_cavity").unwrap();
        s.dynamics = None;
        s.resonance = None;
        s.expect.retain(|e| COUPLING_METRICS.contains(&e.metric.as_str()));
        let r = run_scenario(&s, &RunOptions::default()).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.metric("paths"), Some(2.0));
        assert!(r.metric("closed_form_mismatch").unwrap() < 1e-10);
    }
}
