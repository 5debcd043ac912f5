//! Physical device description and Hamiltonian assembly.
//!
//! Config values follow the usual lab conventions: transition and cavity
//! frequencies in GHz, couplings and decay rates in MHz, all as ordinary
//! frequencies. Internally every energy is an angular frequency in rad/ns and
//! time is in ns. When `unit_omega0` is set the device is dimensionless: every
//! frequency, coupling and rate is a multiple of ω₀ and is scaled by
//! `unit_omega0` alone.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    build_space, embed_product, ladder, parse_state_label, transition_projector, BareState, CompositeSpace, Ladder,
    Level, OperatorMatrix, SubsystemDef, C64,
};

pub const DEFAULT_N_MAX: usize = 5;
pub const DEFAULT_DISPERSIVE_THRESHOLD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    pub label: String,
    pub omega_c: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub label: String,
    pub omega_e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_i: Option<f64>,
    #[serde(default)]
    pub gamma_ge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_gi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ei: Option<f64>,
}

impl AtomSpec {
    pub fn levels(&self) -> usize {
        if self.omega_i.is_some() {
            3
        } else {
            2
        }
    }
}

/// One atom–cavity link. Each coupling is stored once per unordered level pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEdge {
    pub atom: String,
    pub cavity: String,
    pub g_ge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_gi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_ei: Option<f64>,
}

impl CouplingEdge {
    pub fn name(&self) -> String {
        format!("{}-{}", self.atom, self.cavity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_omega0: Option<f64>,
    pub cavities: Vec<CavitySpec>,
    pub atoms: Vec<AtomSpec>,
    pub edges: Vec<CouplingEdge>,
}

/// A dipole transition between two atomic levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    Ge,
    Gi,
    Ei,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Transition::Ge, Transition::Gi, Transition::Ei];

    /// (lower, upper) level pair.
    pub fn levels(self) -> (Level, Level) {
        match self {
            Transition::Ge => (Level::G, Level::E),
            Transition::Gi => (Level::G, Level::I),
            Transition::Ei => (Level::E, Level::I),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.levels();
        write!(f, "{lo}-{hi}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersiveEntry {
    pub edge: String,
    pub transition: Transition,
    /// Coupling and detuning in config units.
    pub g: f64,
    pub detuning: f64,
    pub ratio: f64,
    pub flagged: bool,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidDevice(msg.into())
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} is not finite")))
    }
}

impl DeviceSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let dev: DeviceSpec = toml::from_str(text)?;
        dev.validate()?;
        Ok(dev)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(invalid("device has no atoms"));
        }
        if self.cavities.is_empty() {
            return Err(invalid("device has no cavities"));
        }
        if let Some(w0) = self.unit_omega0 {
            if !(w0 > 0.0 && w0.is_finite()) {
                return Err(invalid("unit_omega0 must be positive"));
            }
        }
        let mut labels = BTreeSet::new();
        for c in &self.cavities {
            if !labels.insert(c.label.as_str()) {
                return Err(Error::DuplicateLabel(c.label.clone()));
            }
            check_finite(&format!("cavity {} omega_c", c.label), c.omega_c)?;
            check_finite(&format!("cavity {} kappa", c.label), c.kappa)?;
            if c.omega_c <= 0.0 {
                return Err(invalid(format!("cavity {}: omega_c must be positive", c.label)));
            }
            if c.kappa < 0.0 {
                return Err(invalid(format!("cavity {}: kappa must be non-negative", c.label)));
            }
            if c.n_max < 2 {
                return Err(invalid(format!("cavity {}: n_max must be at least 2", c.label)));
            }
        }
        for a in &self.atoms {
            if !labels.insert(a.label.as_str()) {
                return Err(Error::DuplicateLabel(a.label.clone()));
            }
            check_finite(&format!("atom {} omega_e", a.label), a.omega_e)?;
            if a.omega_e <= 0.0 {
                return Err(invalid(format!("atom {}: omega_e must be positive", a.label)));
            }
            if let Some(wi) = a.omega_i {
                check_finite(&format!("atom {} omega_i", a.label), wi)?;
                if wi <= a.omega_e {
                    return Err(invalid(format!("atom {}: omega_i must exceed omega_e", a.label)));
                }
            } else if a.gamma_gi.is_some() || a.gamma_ei.is_some() {
                return Err(invalid(format!("atom {}: third-level rates on a two-level atom", a.label)));
            }
            for (name, r) in [("gamma_ge", Some(a.gamma_ge)), ("gamma_gi", a.gamma_gi), ("gamma_ei", a.gamma_ei)] {
                if let Some(r) = r {
                    check_finite(&format!("atom {} {name}", a.label), r)?;
                    if r < 0.0 {
                        return Err(invalid(format!("atom {}: {name} must be non-negative", a.label)));
                    }
                }
            }
        }
        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            let q = self.atom_index(&e.atom).ok_or_else(|| invalid(format!("edge {}: unknown atom", e.name())))?;
            self.cavity_index(&e.cavity).ok_or_else(|| invalid(format!("edge {}: unknown cavity", e.name())))?;
            if !pairs.insert((e.atom.as_str(), e.cavity.as_str())) {
                return Err(invalid(format!("edge {} declared twice", e.name())));
            }
            if self.atoms[q].omega_i.is_none() && (e.g_gi.is_some() || e.g_ei.is_some()) {
                return Err(invalid(format!("edge {}: third-level couplings on a two-level atom", e.name())));
            }
            for (name, g) in [("g_ge", Some(e.g_ge)), ("g_gi", e.g_gi), ("g_ei", e.g_ei)] {
                if let Some(g) = g {
                    check_finite(&format!("edge {} {name}", e.name()), g)?;
                    if g < 0.0 {
                        return Err(invalid(format!("edge {}: {name} must be non-negative", e.name())));
                    }
                }
            }
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let nc = self.cavities.len();
        let n = nc + self.atoms.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            let s = self.cavity_index(&e.cavity).expect("validated");
            let q = nc + self.atom_index(&e.atom).expect("validated");
            adj[s].push(q);
            adj[q].push(s);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            let label = if k < nc { &self.cavities[k].label } else { &self.atoms[k - nc].label };
            return Err(invalid(format!("coupling graph is disconnected at `{label}`")));
        }
        Ok(())
    }

    pub fn atom_index(&self, label: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.label == label)
    }

    pub fn cavity_index(&self, label: &str) -> Option<usize> {
        self.cavities.iter().position(|c| c.label == label)
    }

    pub fn is_dimensionless(&self) -> bool {
        self.unit_omega0.is_some()
    }

    /// Config frequency unit expressed in rad/ns (or in ω₀ for dimensionless devices).
    pub fn freq_scale(&self) -> f64 {
        self.unit_omega0.unwrap_or(TAU)
    }

    /// Config coupling/rate unit expressed in the same internal unit.
    pub fn rate_scale(&self) -> f64 {
        self.unit_omega0.unwrap_or(TAU * 1e-3)
    }

    pub fn cavity_frequency(&self, s: usize) -> f64 {
        self.cavities[s].omega_c * self.freq_scale()
    }

    pub fn cavity_decay(&self, s: usize) -> f64 {
        self.cavities[s].kappa * self.rate_scale()
    }

    /// Level energies [0, ω_e, ω_i] of atom `q`, truncated to its level count.
    pub fn level_energies(&self, q: usize) -> Vec<f64> {
        let a = &self.atoms[q];
        let f = self.freq_scale();
        let mut e = vec![0.0, a.omega_e * f];
        if let Some(wi) = a.omega_i {
            e.push(wi * f);
        }
        e
    }

    pub fn decay_rate(&self, q: usize, t: Transition) -> f64 {
        let a = &self.atoms[q];
        let r = match t {
            Transition::Ge => Some(a.gamma_ge),
            Transition::Gi => a.gamma_gi,
            Transition::Ei => a.gamma_ei,
        };
        r.unwrap_or(0.0) * self.rate_scale()
    }

    pub fn coupling(&self, edge: &CouplingEdge, t: Transition) -> f64 {
        let g = match t {
            Transition::Ge => Some(edge.g_ge),
            Transition::Gi => edge.g_gi,
            Transition::Ei => edge.g_ei,
        };
        g.unwrap_or(0.0) * self.rate_scale()
    }

    /// Nonzero couplings, internal units.
    pub fn nonzero_couplings(&self) -> Vec<f64> {
        self.edges
            .iter()
            .flat_map(|e| Transition::ALL.map(|t| self.coupling(e, t)))
            .filter(|&g| g > 0.0)
            .collect()
    }

    /// Composite space with cavities first, then atoms, in declaration order.
    pub fn space(&self) -> Result<Arc<CompositeSpace>> {
        let defs = self
            .cavities
            .iter()
            .map(|c| SubsystemDef::cavity(c.label.clone(), c.n_max))
            .chain(self.atoms.iter().map(|a| SubsystemDef::atom(a.label.clone(), a.levels())))
            .collect();
        build_space(defs)
    }

    fn check_space(&self, space: &CompositeSpace) -> Result<()> {
        let expected = self.space()?;
        if expected.subsystems() != space.subsystems() {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// Bare energy of a basis state given its mixed-radix digits.
    pub fn bare_energy_of_digits(&self, digits: &[usize]) -> f64 {
        let nc = self.cavities.len();
        let photons: f64 = digits[..nc].iter().enumerate().map(|(s, &n)| n as f64 * self.cavity_frequency(s)).sum();
        let atoms: f64 = digits[nc..].iter().enumerate().map(|(q, &l)| self.level_energies(q)[l]).sum();
        photons + atoms
    }

    pub fn bare_state(&self, fock: Vec<usize>, levels: Vec<Level>) -> Result<BareState> {
        let label = || {
            fock.iter().map(|n| n.to_string()).chain(levels.iter().map(|l| l.to_string())).collect::<Vec<_>>().join(",")
        };
        if fock.len() != self.cavities.len() || levels.len() != self.atoms.len() {
            return Err(Error::InvalidState { label: label(), reason: "wrong number of entries".into() });
        }
        for (s, &n) in fock.iter().enumerate() {
            if n > self.cavities[s].n_max {
                return Err(Error::InvalidState {
                    label: label(),
                    reason: format!("cavity {} holds at most {} photons", self.cavities[s].label, self.cavities[s].n_max),
                });
            }
        }
        for (q, l) in levels.iter().enumerate() {
            if l.index() >= self.atoms[q].levels() {
                return Err(Error::InvalidState {
                    label: label(),
                    reason: format!("atom {} has no level {l}", self.atoms[q].label),
                });
            }
        }
        let digits: Vec<usize> = fock.iter().copied().chain(levels.iter().map(|l| l.index())).collect();
        let energy = self.bare_energy_of_digits(&digits);
        Ok(BareState { fock, levels, energy })
    }

    /// Parses a label such as `0,e,g,g` against this device.
    pub fn parse_state(&self, label: &str) -> Result<BareState> {
        let (fock, levels) = parse_state_label(label, self.cavities.len(), self.atoms.len())?;
        self.bare_state(fock, levels)
    }

    pub fn basis_state(&self, space: &CompositeSpace, index: usize) -> BareState {
        let digits = space.digits(index);
        let nc = self.cavities.len();
        BareState {
            fock: digits[..nc].to_vec(),
            levels: digits[nc..].iter().map(|&l| Level::from_index(l).expect("atom level")).collect(),
            energy: self.bare_energy_of_digits(&digits),
        }
    }

    /// `|0,e,g,…,g>` and `|0,g,e,…,e>` for this device.
    pub fn exchange_states(&self) -> Result<(BareState, BareState)> {
        let n = self.atoms.len();
        let fock = vec![0; self.cavities.len()];
        let mut li = vec![Level::G; n];
        li[0] = Level::E;
        let mut lf = vec![Level::E; n];
        lf[0] = Level::G;
        Ok((self.bare_state(fock.clone(), li)?, self.bare_state(fock, lf)?))
    }

    /// Reads a scalar through a dotted path such as `atoms.1.omega_e` or `edges.2-c.g_ei`.
    pub fn get_param(&self, path: &str) -> Result<f64> {
        let mut copy = self.clone();
        copy.param_slot(path, None)
    }

    /// Writes a scalar through a dotted path; the device is revalidated.
    pub fn set_param(&mut self, path: &str, value: f64) -> Result<()> {
        let backup = self.clone();
        self.param_slot(path, Some(value))?;
        if let Err(e) = self.validate() {
            *self = backup;
            return Err(e);
        }
        Ok(())
    }

    pub fn with_param(&self, path: &str, value: f64) -> Result<Self> {
        let mut d = self.clone();
        d.set_param(path, value)?;
        Ok(d)
    }

    fn param_slot(&mut self, path: &str, value: Option<f64>) -> Result<f64> {
        let unknown = || Error::UnknownParameter(path.to_string());
        let parts: Vec<&str> = path.split('.').collect();
        if parts.len() != 3 {
            return Err(unknown());
        }
        let (group, key, field) = (parts[0], parts[1], parts[2]);
        let pick = |labels: Vec<&str>| -> Option<usize> {
            labels.iter().position(|l| *l == key).or_else(|| {
                key.parse::<usize>().ok().filter(|&k| k >= 1 && k <= labels.len()).map(|k| k - 1)
            })
        };
        match group {
            "atoms" => {
                let q = pick(self.atoms.iter().map(|a| a.label.as_str()).collect()).ok_or_else(unknown)?;
                let a = &mut self.atoms[q];
                match field {
                    "omega_e" => Ok(slot(&mut a.omega_e, value)),
                    "omega_i" => opt_slot(&mut a.omega_i, value).ok_or_else(unknown),
                    "gamma_ge" => Ok(slot(&mut a.gamma_ge, value)),
                    "gamma_gi" => opt_slot(&mut a.gamma_gi, value).ok_or_else(unknown),
                    "gamma_ei" => opt_slot(&mut a.gamma_ei, value).ok_or_else(unknown),
                    _ => Err(unknown()),
                }
            }
            "cavities" => {
                let s = pick(self.cavities.iter().map(|c| c.label.as_str()).collect()).ok_or_else(unknown)?;
                let c = &mut self.cavities[s];
                match field {
                    "omega_c" => Ok(slot(&mut c.omega_c, value)),
                    "kappa" => Ok(slot(&mut c.kappa, value)),
                    "n_max" => {
                        let old = c.n_max as f64;
                        if let Some(v) = value {
                            if v.fract() != 0.0 || v < 0.0 {
                                return Err(invalid(format!("n_max must be a non-negative integer, got {v}")));
                            }
                            c.n_max = v as usize;
                        }
                        Ok(old)
                    }
                    _ => Err(unknown()),
                }
            }
            "edges" => {
                let e = self.edges.iter_mut().find(|e| e.name() == key).ok_or_else(unknown)?;
                match field {
                    "g_ge" => Ok(slot(&mut e.g_ge, value)),
                    "g_gi" => opt_slot(&mut e.g_gi, value).ok_or_else(unknown),
                    "g_ei" => opt_slot(&mut e.g_ei, value).ok_or_else(unknown),
                    _ => Err(unknown()),
                }
            }
            _ => Err(unknown()),
        }
    }

    /// Sets every cavity's Fock truncation.
    pub fn with_n_max(&self, n_max: usize) -> Self {
        let mut d = self.clone();
        for c in &mut d.cavities {
            c.n_max = n_max;
        }
        d
    }
}

fn slot(field: &mut f64, value: Option<f64>) -> f64 {
    let old = *field;
    if let Some(v) = value {
        *field = v;
    }
    old
}

fn opt_slot(field: &mut Option<f64>, value: Option<f64>) -> Option<f64> {
    let old = (*field)?;
    if let Some(v) = value {
        *field = Some(v);
    }
    Some(old)
}

/// `H₀ = Σ_s ω_s a_s†a_s + Σ_q Σ_j ω_j |j><j|`.
pub fn build_bare_hamiltonian(dev: &DeviceSpec, space: &Arc<CompositeSpace>) -> Result<OperatorMatrix> {
    dev.check_space(space)?;
    let diag: Vec<f64> = (0..space.total_dim()).map(|k| dev.bare_energy_of_digits(&space.digits(k))).collect();
    OperatorMatrix::from_diagonal(space, &diag)
}

/// Atomic lowering part `g_ge|g><e| + g_ei|e><i| + g_gi|g><i|` of one edge.
fn lowering_block(dev: &DeviceSpec, edge: &CouplingEdge, levels: usize) -> Result<Array2<C64>> {
    let mut m = Array2::zeros((levels, levels));
    for t in Transition::ALL {
        let g = dev.coupling(edge, t);
        if g == 0.0 {
            continue;
        }
        let (lo, hi) = t.levels();
        m = m + transition_projector(lo.index(), hi.index(), levels)? * C64::new(g, 0.0);
    }
    Ok(m)
}

/// `Σ_edges a_s†(g_ge|g><e| + g_ei|e><i| + g_gi|g><i|) + h.c.`
pub fn build_interaction_rwa(dev: &DeviceSpec, space: &Arc<CompositeSpace>) -> Result<OperatorMatrix> {
    dev.check_space(space)?;
    let mut h = OperatorMatrix::zeros(space);
    for e in &dev.edges {
        let q = dev.atom_index(&e.atom).expect("validated");
        let s = dev.cavity_index(&e.cavity).expect("validated");
        let adag = ladder(Ladder::Create, dev.cavities[s].n_max + 1)?;
        let low = lowering_block(dev, e, dev.atoms[q].levels())?;
        let term = embed_product(&[(e.cavity.as_str(), &adag), (e.atom.as_str(), &low)], space)?;
        h = &(&h + &term) + &term.adjoint();
    }
    Ok(h)
}

/// `Σ_edges Σ_jk g_jk (a_s + a_s†)(|j><k| + |k><j|)`, counter-rotating terms included.
pub fn build_interaction_full(dev: &DeviceSpec, space: &Arc<CompositeSpace>) -> Result<OperatorMatrix> {
    dev.check_space(space)?;
    let mut h = OperatorMatrix::zeros(space);
    for e in &dev.edges {
        let q = dev.atom_index(&e.atom).expect("validated");
        let s = dev.cavity_index(&e.cavity).expect("validated");
        let dim = dev.cavities[s].n_max + 1;
        let x = ladder(Ladder::Create, dim)? + ladder(Ladder::Annihilate, dim)?;
        let low = lowering_block(dev, e, dev.atoms[q].levels())?;
        let sym = &low + &low.t();
        h = &h + &embed_product(&[(e.cavity.as_str(), &x), (e.atom.as_str(), &sym)], space)?;
    }
    Ok(h)
}

/// `H₀ + H_I` under the rotating-wave approximation, on the device's own space.
pub fn build_hamiltonian(dev: &DeviceSpec) -> Result<OperatorMatrix> {
    let space = dev.space()?;
    Ok(&build_bare_hamiltonian(dev, &space)? + &build_interaction_rwa(dev, &space)?)
}

/// Ratio g/|Δ| for every edge and transition, with `Δ = |ω_j − ω_k| − ω_c`.
pub fn validate_dispersive(dev: &DeviceSpec, threshold: f64) -> Vec<DispersiveEntry> {
    let mut out = Vec::new();
    for e in &dev.edges {
        let q = dev.atom_index(&e.atom).expect("validated");
        let s = dev.cavity_index(&e.cavity).expect("validated");
        let atom = &dev.atoms[q];
        let wc = dev.cavities[s].omega_c;
        let levels = [0.0, atom.omega_e, atom.omega_i.unwrap_or(f64::NAN)];
        let gs = [(Transition::Ge, Some(e.g_ge)), (Transition::Gi, e.g_gi), (Transition::Ei, e.g_ei)];
        for (t, g) in gs {
            let Some(g) = g else { continue };
            let (lo, hi) = t.levels();
            let detuning = (levels[hi.index()] - levels[lo.index()]).abs() - wc;
            // couplings are in MHz when frequencies are in GHz
            let g_in_freq = g * dev.rate_scale() / dev.freq_scale();
            let ratio = if g == 0.0 {
                0.0
            } else if detuning == 0.0 {
                f64::INFINITY
            } else {
                g_in_freq / detuning.abs()
            };
            out.push(DispersiveEntry { edge: e.name(), transition: t, g, detuning, ratio, flagged: ratio > threshold });
        }
    }
    out
}
