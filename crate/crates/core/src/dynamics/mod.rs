//! Dissipative time evolution and the observables sampled along it.

pub mod analysis;
pub mod integrate;
pub mod lindblad;
pub mod propagate;

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::Serialize;

use crate::device::{build_bare_hamiltonian, build_interaction_full, build_interaction_rwa, DeviceSpec};
use crate::error::{Error, Result};
use crate::hilbert::{BareState, CompositeSpace, Level, OperatorMatrix, C64};

pub use analysis::{entanglement_checkpoint, extract_period, Checkpoint, PeriodEstimate, TrajectoryMetrics};
pub use lindblad::{jump_operators, lindblad_rhs, Dissipator, JumpOperator, Lindbladian};
pub use propagate::{Method, Propagator};

pub const TRACE_TOL: f64 = 1e-6;
pub const HERMITIAN_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = -1e-8;
pub const TRUNCATION_LIMIT: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: Arc<CompositeSpace>,
    entries: Array2<C64>,
}

impl DensityMatrix {
    pub fn pure_basis(space: &Arc<CompositeSpace>, index: usize) -> Self {
        let d = space.total_dim();
        let mut entries = Array2::zeros((d, d));
        entries[[index, index]] = C64::new(1.0, 0.0);
        Self { space: space.clone(), entries }
    }

    pub fn from_entries(space: &Arc<CompositeSpace>, entries: Array2<C64>) -> Result<Self> {
        let d = space.total_dim();
        if entries.dim() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, got: entries.nrows() });
        }
        Ok(Self { space: space.clone(), entries })
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Array2<C64> {
        &mut self.entries
    }

    pub fn space(&self) -> &Arc<CompositeSpace> {
        &self.space
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn population(&self, k: usize) -> f64 {
        self.entries[[k, k]].re
    }

    /// `tr(ρ O)`.
    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        let o = op.entries();
        let mut s = C64::new(0.0, 0.0);
        for ((r, c), v) in self.entries.indexed_iter() {
            s += v * o[[c, r]];
        }
        s
    }

    /// `max |ρ − ρ†| / max |ρ|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.entries.nrows();
        let mut r: f64 = 0.0;
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                r = r.max((self.entries[[i, j]] - self.entries[[j, i]].conj()).norm());
                m = m.max(self.entries[[i, j]].norm());
            }
        }
        if m == 0.0 {
            0.0
        } else {
            r / m
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.entries.nrows();
        let herm = DMatrix::from_fn(d, d, |i, j| (self.entries[[i, j]] + self.entries[[j, i]].conj()) * 0.5);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub enum ObservableKind {
    /// Diagonal operator in the bare basis.
    Diagonal(Vec<f64>),
    /// `|ρ_{ab}|`.
    Coherence(usize, usize),
}

#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub kind: ObservableKind,
}

impl Observable {
    pub fn measure(&self, rho: &DensityMatrix) -> f64 {
        match &self.kind {
            ObservableKind::Diagonal(d) => d.iter().enumerate().map(|(k, w)| w * rho.entries[[k, k]].re).sum(),
            ObservableKind::Coherence(a, b) => rho.entries[[*a, *b]].norm(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ObservableSet {
    pub items: Vec<Observable>,
}

fn projector_diag(space: &CompositeSpace, pred: impl Fn(&[usize]) -> f64) -> Vec<f64> {
    (0..space.total_dim()).map(|k| pred(&space.digits(k))).collect()
}

impl ObservableSet {
    /// Excitation and third-level populations per atom, photons per cavity,
    /// joint excitation of atoms 2–3 (and 2–4 with four or more atoms), and,
    /// when both states are given, the populations of `initial` and `target`
    /// with the coherence between them.
    pub fn standard(dev: &DeviceSpec, space: &Arc<CompositeSpace>, pair: Option<(&BareState, &BareState)>) -> Result<Self> {
        let nc = dev.cavities.len();
        let mut items = Vec::new();
        for (q, a) in dev.atoms.iter().enumerate() {
            let p = nc + q;
            items.push(Observable {
                name: format!("excitation_{}", a.label),
                kind: ObservableKind::Diagonal(projector_diag(space, |d| (d[p] == Level::E.index()) as u8 as f64)),
            });
        }
        for (q, a) in dev.atoms.iter().enumerate() {
            if a.levels() == 3 {
                let p = nc + q;
                items.push(Observable {
                    name: format!("third_level_{}", a.label),
                    kind: ObservableKind::Diagonal(projector_diag(space, |d| (d[p] == Level::I.index()) as u8 as f64)),
                });
            }
        }
        for (s, c) in dev.cavities.iter().enumerate() {
            items.push(Observable {
                name: format!("photons_{}", c.label),
                kind: ObservableKind::Diagonal(projector_diag(space, |d| d[s] as f64)),
            });
        }
        for upto in [3, 4] {
            if dev.atoms.len() >= upto {
                let members: Vec<usize> = (1..upto).collect();
                let name = members.iter().map(|&q| dev.atoms[q].label.as_str()).collect::<Vec<_>>().join("_");
                items.push(Observable {
                    name: format!("corr_{name}"),
                    kind: ObservableKind::Diagonal(projector_diag(space, |d| {
                        members.iter().all(|&q| d[nc + q] == Level::E.index()) as u8 as f64
                    })),
                });
            }
        }
        if let Some((i, f)) = pair {
            let (ki, kf) = (i.index_in(space)?, f.index_in(space)?);
            let mut pi = vec![0.0; space.total_dim()];
            pi[ki] = 1.0;
            let mut pf = vec![0.0; space.total_dim()];
            pf[kf] = 1.0;
            items.push(Observable { name: "p_initial".into(), kind: ObservableKind::Diagonal(pi) });
            items.push(Observable { name: "p_target".into(), kind: ObservableKind::Diagonal(pf) });
            items.push(Observable { name: "coherence".into(), kind: ObservableKind::Coherence(ki, kf) });
        }
        Ok(Self { items })
    }

    pub fn names(&self) -> Vec<String> {
        self.items.iter().map(|o| o.name.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    #[default]
    Rwa,
    Full,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub method: Method,
    /// Longest splitting step; defaults to the sample spacing capped by the relaxation rates.
    pub max_step: Option<f64>,
    pub rtol: f64,
    pub generator: Generator,
    /// Check positivity every this many samples (and at the end).
    pub checkpoint_every: usize,
    /// Raise `n_max` and restart when the top Fock level is occupied.
    pub escalate: bool,
    pub max_escalations: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            method: Method::Split,
            max_step: None,
            rtol: 1e-8,
            generator: Generator::Rwa,
            checkpoint_every: 25,
            escalate: true,
            max_escalations: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub time_unit: String,
    pub names: Vec<String>,
    /// `values[k][p]` is observable `names[k]` at `times[p]`.
    pub values: Vec<Vec<f64>>,
    pub purity: Vec<f64>,
    pub energy: Vec<f64>,
    pub excitations: Vec<f64>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Largest population found in the top Fock level of any cavity.
    pub top_fock_population: f64,
    pub n_max: Vec<usize>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub warnings: Vec<String>,
}

impl TrajectoryResult {
    pub fn series(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.values[k].as_slice())
            .ok_or_else(|| Error::UnknownObservable(name.to_string()))
    }

    /// CSV with a time column then one column per observable.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "time_{}", self.time_unit)?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (p, t) in self.times.iter().enumerate() {
            write!(w, "{t:.11e}")?;
            for col in &self.values {
                write!(w, ",{:.11e}", col[p])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Interaction Hamiltonian selected by `generator`, plus the bare part.
pub fn dynamics_hamiltonian(dev: &DeviceSpec, space: &Arc<CompositeSpace>, generator: Generator) -> Result<OperatorMatrix> {
    let h0 = build_bare_hamiltonian(dev, space)?;
    let hi = match generator {
        Generator::Rwa => build_interaction_rwa(dev, space)?,
        Generator::Full => build_interaction_full(dev, space)?,
    };
    Ok(&h0 + &hi)
}

fn top_fock_population(dev: &DeviceSpec, space: &CompositeSpace, rho: &DensityMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for (s, c) in dev.cavities.iter().enumerate() {
        let p: f64 = (0..space.total_dim()).filter(|&k| space.digit(k, s) == c.n_max).map(|k| rho.population(k)).sum();
        worst = worst.max(p);
    }
    worst
}

/// Integrates the master equation from the bare state `initial`.
///
/// Observables are sampled on `samples` evenly spaced times from 0 to
/// `t_final` (a single sample when `t_final` is 0). Trace and Hermiticity are
/// checked at every sample and positivity at regular checkpoints; a violation
/// aborts the run. If the top Fock level of any cavity holds more than
/// `TRUNCATION_LIMIT` population, the run is restarted with a larger `n_max`
/// when escalation is enabled, otherwise a warning is recorded.
pub fn evolve(
    dev: &DeviceSpec,
    initial: &BareState,
    t_final: f64,
    samples: usize,
    target: Option<&BareState>,
    opts: &EvolveOptions,
) -> Result<TrajectoryResult> {
    let mut dev = dev.clone();
    let mut notes = Vec::new();
    loop {
        let mut traj = evolve_once(&dev, initial, t_final, samples, target, opts)?;
        if traj.top_fock_population > TRUNCATION_LIMIT && opts.escalate && notes.len() < opts.max_escalations {
            for c in &mut dev.cavities {
                c.n_max += 1;
            }
            let msg = format!(
                "top Fock level held {:.2e}; restarted with n_max raised by one",
                traj.top_fock_population
            );
            log::warn!("{msg}");
            notes.push(msg);
            continue;
        }
        notes.append(&mut traj.warnings);
        traj.warnings = notes;
        return Ok(traj);
    }
}

fn evolve_once(
    dev: &DeviceSpec,
    initial: &BareState,
    t_final: f64,
    samples: usize,
    target: Option<&BareState>,
    opts: &EvolveOptions,
) -> Result<TrajectoryResult> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Config(format!("t_final must be non-negative, got {t_final}")));
    }
    let samples = if t_final == 0.0 { 1 } else { samples.max(2) };
    let space = dev.space()?;
    let initial = dev.bare_state(initial.fock.clone(), initial.levels.clone())?;
    let target = target.map(|f| dev.bare_state(f.fock.clone(), f.levels.clone())).transpose()?;
    let obs = ObservableSet::standard(dev, &space, target.as_ref().map(|f| (&initial, f)))?;
    let h = dynamics_hamiltonian(dev, &space, opts.generator)?;
    let n_t: Vec<f64> = (0..space.total_dim()).map(|k| space.digits(k).iter().sum::<usize>() as f64).collect();
    let generator = Lindbladian::new(dev, h.clone())?;
    let dt = if samples > 1 { t_final / (samples - 1) as f64 } else { 0.0 };
    let rate = generator.dissipator.max_rate();
    let mut max_step = opts.max_step.unwrap_or(if dt > 0.0 { dt } else { 1.0 });
    if rate > 0.0 && opts.max_step.is_none() {
        max_step = max_step.min(0.01 / rate);
    }
    let mut prop = Propagator::new(generator, opts.method, max_step, opts.rtol)?;
    let mut rho = DensityMatrix::pure_basis(&space, initial.index_in(&space)?);

    let mut traj = TrajectoryResult {
        times: Vec::with_capacity(samples),
        time_unit: if dev.is_dimensionless() { "w0".into() } else { "ns".into() },
        names: obs.names(),
        values: vec![Vec::with_capacity(samples); obs.items.len()],
        purity: Vec::with_capacity(samples),
        energy: Vec::with_capacity(samples),
        excitations: Vec::with_capacity(samples),
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        top_fock_population: 0.0,
        n_max: dev.cavities.iter().map(|c| c.n_max).collect(),
        steps_accepted: 0,
        steps_rejected: 0,
        warnings: Vec::new(),
    };
    let every = opts.checkpoint_every.max(1);
    for p in 0..samples {
        let t = p as f64 * dt;
        if p > 0 {
            prop.advance(&mut rho.entries, (p - 1) as f64 * dt, t)?;
        }
        let trace_err = (rho.trace() - 1.0).norm();
        traj.max_trace_error = traj.max_trace_error.max(trace_err);
        if trace_err > TRACE_TOL {
            return Err(Error::InvariantViolation { t, reason: format!("trace drifted by {trace_err:.3e}") });
        }
        let herm = rho.hermiticity_error();
        traj.max_hermiticity_error = traj.max_hermiticity_error.max(herm);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvariantViolation { t, reason: format!("density matrix lost Hermiticity ({herm:.3e})") });
        }
        if p % every == 0 || p + 1 == samples {
            let m = rho.min_eigenvalue();
            traj.min_eigenvalue = traj.min_eigenvalue.min(m);
            if m < POSITIVITY_TOL {
                return Err(Error::InvariantViolation { t, reason: format!("negative eigenvalue {m:.3e}") });
            }
        }
        traj.top_fock_population = traj.top_fock_population.max(top_fock_population(dev, &space, &rho));
        traj.times.push(t);
        for (k, o) in obs.items.iter().enumerate() {
            traj.values[k].push(o.measure(&rho));
        }
        traj.purity.push(rho.purity());
        traj.energy.push(rho.expectation(&h).re);
        traj.excitations.push(n_t.iter().enumerate().map(|(k, n)| n * rho.population(k)).sum());
    }
    traj.steps_accepted = prop.stats.accepted;
    traj.steps_rejected = prop.stats.rejected;
    if traj.top_fock_population > TRUNCATION_LIMIT {
        let msg = format!(
            "top Fock level population reached {:.2e} (limit {TRUNCATION_LIMIT:.0e}); increase n_max",
            traj.top_fock_population
        );
        log::warn!("{msg}");
        traj.warnings.push(msg);
    }
    Ok(traj)
}
