//! Effective couplings between degenerate bare states from high-order path sums.
//!
//! A process of order `n` links `|i>` to `|f>` through `n` steps of the
//! interaction, visiting `n − 1` virtual states. Each path contributes
//!
//! ```text
//!   V_{f j_{n−1}} ⋯ V_{j_2 j_1} V_{j_1 i} / ((E_i − E_{j_1}) ⋯ (E_i − E_{j_{n−1}}))
//! ```
//!
//! and the effective coupling is the sum over every such path.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::Serialize;

use crate::device::{build_bare_hamiltonian, build_interaction_rwa, DeviceSpec, Transition};
use crate::error::{Error, Result};
use crate::hilbert::{BareState, CompositeSpace, Level, OperatorMatrix};

/// Intermediate states closer than this multiple of the weakest coupling are rejected.
pub const DEGENERACY_FLOOR_FACTOR: f64 = 1e-3;
/// `|E_i − E_f|` may not exceed this multiple of the strongest coupling.
pub const MATCHING_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct TransitionPath {
    /// `|i>`, the virtual states, then `|f>`.
    pub states: Vec<String>,
    pub indices: Vec<usize>,
    /// `V_{j_{k+1} j_k}` for each step.
    pub elements: Vec<f64>,
    /// `E_i − E_{j_k}` for each virtual state.
    pub denominators: Vec<f64>,
    pub contribution: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RejectedPath {
    pub states: Vec<String>,
    /// Virtual state whose denominator fell below the floor, with that denominator.
    pub offending: String,
    pub denominator: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PathSearch {
    pub paths: Vec<TransitionPath>,
    pub rejected: Vec<RejectedPath>,
}

impl PathSearch {
    pub fn total(&self) -> f64 {
        self.paths.iter().map(|p| p.contribution).sum()
    }
}

fn bare_from_index(space: &CompositeSpace, h0: &OperatorMatrix, k: usize) -> BareState {
    let fock = space.cavity_positions().map(|p| space.digit(k, p)).collect();
    let levels = space.atom_positions().map(|p| Level::from_index(space.digit(k, p)).expect("atom level")).collect();
    BareState { fock, levels, energy: h0.get(k, k).re }
}

/// Largest single-quantum coupling in `hi`, i.e. entries between states with at most one photon between them.
fn max_coupling(hi: &OperatorMatrix) -> f64 {
    let space = hi.space();
    let d = hi.dim();
    let mut m: f64 = 0.0;
    for c in 0..d {
        if space.photons(c) > 1 {
            continue;
        }
        for r in 0..d {
            if space.photons(r) + space.photons(c) <= 1 {
                m = m.max(hi.get(r, c).norm());
            }
        }
    }
    m
}

struct Search<'a> {
    space: &'a Arc<CompositeSpace>,
    energies: Vec<f64>,
    /// Nonzero `(row, value)` entries per column, rows ascending.
    adjacency: Vec<Vec<(usize, f64)>>,
    distance: Vec<usize>,
    i: usize,
    f: usize,
    order: usize,
    floor: f64,
    out: PathSearch,
}

impl Search<'_> {
    fn walk(&mut self, stack: &mut Vec<usize>, elements: &mut Vec<f64>, low: &mut Vec<(usize, f64)>) {
        let here = *stack.last().expect("path starts at i");
        let steps = stack.len() - 1;
        let remaining = self.order - steps;
        if remaining == 1 {
            let Some(&(_, v)) = self.adjacency[here].iter().find(|(r, _)| *r == self.f) else { return };
            stack.push(self.f);
            elements.push(v);
            self.record(stack, elements, low);
            stack.pop();
            elements.pop();
            return;
        }
        for k in 0..self.adjacency[here].len() {
            let (next, v) = self.adjacency[here][k];
            if next == self.i || next == self.f || self.distance[next] > remaining - 1 {
                continue;
            }
            let den = self.energies[self.i] - self.energies[next];
            let below = den.abs() < self.floor;
            if below {
                low.push((next, den));
            }
            stack.push(next);
            elements.push(v);
            self.walk(stack, elements, low);
            stack.pop();
            elements.pop();
            if below {
                low.pop();
            }
        }
    }

    fn record(&mut self, stack: &[usize], elements: &[f64], low: &[(usize, f64)]) {
        let labels = stack.iter().map(|&k| self.space.basis_label(k)).collect();
        if let Some(&(k, den)) = low.first() {
            self.out.rejected.push(RejectedPath { states: labels, offending: self.space.basis_label(k), denominator: den });
            return;
        }
        let denominators: Vec<f64> = stack[1..stack.len() - 1].iter().map(|&j| self.energies[self.i] - self.energies[j]).collect();
        let contribution = elements.iter().product::<f64>() / denominators.iter().product::<f64>();
        self.out.paths.push(TransitionPath {
            states: labels,
            indices: stack.to_vec(),
            elements: elements.to_vec(),
            denominators,
            contribution,
        });
    }
}

/// All `order`-step paths of nonzero interaction elements from `i` to `f`.
///
/// Paths never revisit `|i>` or `|f>` and carry at most `order / 2` photons.
/// Paths through a virtual state within `floor` of `E_i` are moved to the
/// rejected list instead of being summed. Paths come out in lexicographic
/// order of their virtual-state indices.
pub fn enumerate_paths(
    h0: &OperatorMatrix,
    hi: &OperatorMatrix,
    i: &BareState,
    f: &BareState,
    order: usize,
    floor: f64,
) -> Result<PathSearch> {
    if order < 2 {
        return Err(Error::BadOrder(order));
    }
    let space = h0.space().clone();
    if hi.dim() != space.total_dim() {
        return Err(Error::SpaceMismatch);
    }
    if !hi.is_real() || !h0.is_real() {
        return Err(Error::InvalidDevice("path sums need a real Hamiltonian".into()));
    }
    let (ki, kf) = (i.index_in(&space)?, f.index_in(&space)?);
    let energies: Vec<f64> = (0..space.total_dim()).map(|k| h0.get(k, k).re).collect();
    let mismatch = (energies[ki] - energies[kf]).abs();
    let g_max = max_coupling(hi);
    if g_max == 0.0 {
        return Ok(PathSearch::default());
    }
    let tolerance = MATCHING_FACTOR * g_max;
    if mismatch > tolerance {
        return Err(Error::NotDegenerate { initial: i.label(), target: f.label(), mismatch, tolerance });
    }
    let cap = order / 2;
    let allowed: Vec<bool> = (0..space.total_dim()).map(|k| space.photons(k) <= cap).collect();
    let d = space.total_dim();
    let mut adjacency = vec![Vec::new(); d];
    for c in 0..d {
        if !allowed[c] {
            continue;
        }
        for r in 0..d {
            let v = hi.get(r, c).re;
            if r != c && allowed[r] && v != 0.0 {
                adjacency[c].push((r, v));
            }
        }
    }
    // breadth-first distance to |f> on the (symmetric) coupling graph
    let mut distance = vec![usize::MAX; d];
    distance[kf] = 0;
    let mut queue = VecDeque::from([kf]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &adjacency[u] {
            if distance[v] == usize::MAX {
                distance[v] = distance[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut search = Search {
        space: &space,
        energies,
        adjacency,
        distance,
        i: ki,
        f: kf,
        order,
        floor,
        out: PathSearch::default(),
    };
    if search.distance[ki] <= order {
        search.walk(&mut vec![ki], &mut Vec::new(), &mut Vec::new());
    }
    Ok(search.out)
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveCoupling {
    /// Signed coupling in rad/ns (or ω₀).
    pub lambda: f64,
    pub order: usize,
    pub initial: String,
    pub target: String,
    pub paths: Vec<TransitionPath>,
    pub rejected: Vec<RejectedPath>,
    /// Frequency unit of the device in the same internal units.
    pub unit: f64,
    pub dimensionless: bool,
}

impl EffectiveCoupling {
    /// λ/2π in MHz, or λ/ω₀ for dimensionless devices.
    pub fn display_value(&self) -> f64 {
        if self.dimensionless {
            self.lambda / self.unit
        } else {
            self.lambda / self.unit * 1e3
        }
    }

    /// Full exchange period `π/|λ|`.
    pub fn period(&self) -> f64 {
        std::f64::consts::PI / self.lambda.abs()
    }

    /// Plain-text table of the coupling and its `top` largest paths.
    pub fn report(&self, top: usize) -> String {
        let mut s = String::new();
        let unit = if self.dimensionless { "w0" } else { "MHz" };
        let name = if self.dimensionless { "lambda/w0" } else { "chi/2pi" };
        let _ = writeln!(s, "coupling |{}> -> |{}>, order {}", self.initial, self.target, self.order);
        if self.dimensionless {
            let _ = writeln!(s, "{name} = {:.4e} {unit}, paths = {}, T = {:.4e} / w0", self.display_value().abs(), self.paths.len(), self.period());
        } else {
            let _ = writeln!(s, "{name} = {:.3} {unit}, paths = {}, T = {:.0} ns", self.display_value().abs(), self.paths.len(), self.period());
        }
        let _ = writeln!(s, "signed {name} = {:+.9e} {unit}", self.display_value());
        if !self.rejected.is_empty() {
            let _ = writeln!(s, "rejected paths = {} (near-resonant virtual states)", self.rejected.len());
            for r in self.rejected.iter().take(top) {
                let _ = writeln!(s, "  via |{}>  denominator {:+.3e}", r.offending, r.denominator / self.unit);
            }
        }
        let mut ranked: Vec<&TransitionPath> = self.paths.iter().collect();
        ranked.sort_by(|a, b| b.contribution.abs().total_cmp(&a.contribution.abs()));
        for (n, p) in ranked.iter().take(top).enumerate() {
            let _ = writeln!(s, "path {}: contribution {:+.6e}", n + 1, p.contribution / self.unit);
            for (k, w) in p.states.windows(2).enumerate() {
                let den = p.denominators.get(k).map(|d| format!("  E_i - E = {:+.6}", d / self.unit)).unwrap_or_default();
                let _ = writeln!(s, "    |{}> -> |{}>  V = {:.6e}{den}", w[0], w[1], p.elements[k] / self.unit);
            }
        }
        s
    }
}

/// Path-sum effective coupling between `i` and `f` at the bare energies.
pub fn effective_coupling(dev: &DeviceSpec, i: &BareState, f: &BareState, order: usize) -> Result<EffectiveCoupling> {
    if order < 2 || order % 2 == 1 {
        return Err(Error::BadOrder(order));
    }
    let mut work = dev.clone();
    for c in &mut work.cavities {
        c.n_max = c.n_max.max(order / 2).max(2);
    }
    let space = work.space()?;
    let h0 = build_bare_hamiltonian(&work, &space)?;
    let hi = build_interaction_rwa(&work, &space)?;
    let i = work.bare_state(i.fock.clone(), i.levels.clone())?;
    let f = work.bare_state(f.fock.clone(), f.levels.clone())?;
    let g_min = work.nonzero_couplings().into_iter().fold(f64::INFINITY, f64::min);
    let floor = if g_min.is_finite() { DEGENERACY_FLOOR_FACTOR * g_min } else { 0.0 };
    let search = enumerate_paths(&h0, &hi, &i, &f, order, floor)?;
    if !search.rejected.is_empty() {
        log::warn!(
            "{} paths rejected near resonant virtual states, first via |{}>",
            search.rejected.len(),
            search.rejected[0].offending
        );
    }
    Ok(EffectiveCoupling {
        lambda: search.total(),
        order,
        initial: i.label(),
        target: f.label(),
        paths: search.paths,
        rejected: search.rejected,
        unit: dev.freq_scale(),
        dimensionless: dev.is_dimensionless(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    Chi3OneCavity,
    Chi3TwoCavity,
    Chi4OneCavity,
}

impl ClosedForm {
    pub fn order(self) -> usize {
        match self {
            ClosedForm::Chi3OneCavity | ClosedForm::Chi3TwoCavity => 4,
            ClosedForm::Chi4OneCavity => 6,
        }
    }

    /// The closed form whose topology matches `dev`, if any.
    pub fn detect(dev: &DeviceSpec) -> Option<ClosedForm> {
        [ClosedForm::Chi3OneCavity, ClosedForm::Chi3TwoCavity, ClosedForm::Chi4OneCavity]
            .into_iter()
            .find(|&w| closed_form_chi(dev, w).is_ok())
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClosedForm::Chi3OneCavity => "chi3_one_cavity",
            ClosedForm::Chi3TwoCavity => "chi3_two_cavity",
            ClosedForm::Chi4OneCavity => "chi4_one_cavity",
        })
    }
}

struct Qutrit {
    we: f64,
    wi: f64,
    ge: f64,
    gi: f64,
    ei: f64,
}

fn mismatch(which: ClosedForm, reason: impl Into<String>) -> Error {
    Error::TopologyMismatch { which: which.to_string(), reason: reason.into() }
}

/// Single edge of atom `q`, returned as internal (ge, gi, ei) couplings.
fn sole_edge(dev: &DeviceSpec, q: usize, which: ClosedForm) -> Result<(String, [f64; 3])> {
    let label = &dev.atoms[q].label;
    let edges: Vec<_> = dev.edges.iter().filter(|e| &e.atom == label).collect();
    if edges.len() != 1 {
        return Err(mismatch(which, format!("atom {label} must couple to exactly one cavity")));
    }
    let e = edges[0];
    Ok((e.cavity.clone(), Transition::ALL.map(|t| dev.coupling(e, t))))
}

fn spectators(dev: &DeviceSpec, which: ClosedForm) -> Result<Qutrit> {
    let mut first: Option<Qutrit> = None;
    for q in 1..dev.atoms.len() {
        let (_, [ge, gi, ei]) = sole_edge(dev, q, which)?;
        let lv = dev.level_energies(q);
        if lv.len() != 3 {
            return Err(mismatch(which, format!("atom {} must be a qutrit", dev.atoms[q].label)));
        }
        let this = Qutrit { we: lv[1], wi: lv[2], ge, gi, ei };
        match &first {
            None => first = Some(this),
            Some(s) => {
                let same = s.we == this.we && s.wi == this.wi && s.ge == this.ge && s.gi == this.gi && s.ei == this.ei;
                if !same {
                    return Err(mismatch(which, "spectator atoms are not identical"));
                }
            }
        }
    }
    first.ok_or_else(|| mismatch(which, "no spectator atoms"))
}

/// Literal closed-form coupling for the three standard topologies, signed, in rad/ns.
///
/// The one-cavity forms assume identical spectators and carry the `(N−1)!`
/// path multiplicity; the two-cavity form has a single path.
pub fn closed_form_chi(dev: &DeviceSpec, which: ClosedForm) -> Result<f64> {
    let atoms = dev.atoms.len();
    match which {
        ClosedForm::Chi3OneCavity | ClosedForm::Chi4OneCavity => {
            let want = if which == ClosedForm::Chi3OneCavity { 3 } else { 4 };
            if dev.cavities.len() != 1 || atoms != want {
                return Err(mismatch(which, format!("needs one cavity and {want} atoms")));
            }
            let (_, [g1, _, _]) = sole_edge(dev, 0, which)?;
            let w1 = dev.atoms[0].omega_e * dev.freq_scale();
            let wc = dev.cavity_frequency(0);
            let s = spectators(dev, which)?;
            Ok(if want == 3 {
                2.0 * g1 * s.gi * s.ei * s.ge / ((w1 - wc) * (w1 - s.wi) * (w1 - s.we - wc))
            } else {
                6.0 * g1 * s.gi * s.ei * s.gi * s.ei * s.ge
                    / ((w1 - wc) * (w1 - s.wi) * (w1 - s.we - wc) * (w1 - s.we - s.wi) * (w1 - 2.0 * s.we - wc))
            })
        }
        ClosedForm::Chi3TwoCavity => {
            if dev.cavities.len() != 2 || atoms != 3 {
                return Err(mismatch(which, "needs two cavities and three atoms"));
            }
            let (left, [g1, _, _]) = sole_edge(dev, 0, which)?;
            let (right, [g3, _, _]) = sole_edge(dev, 2, which)?;
            if left == right {
                return Err(mismatch(which, "atoms 1 and 3 must sit in different cavities"));
            }
            let middle = &dev.atoms[1];
            let edge = |cav: &str| {
                dev.edges
                    .iter()
                    .find(|e| e.atom == middle.label && e.cavity == cav)
                    .ok_or_else(|| mismatch(which, format!("atom {} must couple to cavity {cav}", middle.label)))
            };
            let lv = dev.level_energies(1);
            if lv.len() != 3 {
                return Err(mismatch(which, "middle atom must be a qutrit"));
            }
            let gi = dev.coupling(edge(&left)?, Transition::Gi);
            let ei = dev.coupling(edge(&right)?, Transition::Ei);
            let w1 = dev.atoms[0].omega_e * dev.freq_scale();
            let wl = dev.cavity_frequency(dev.cavity_index(&left).expect("validated"));
            let wr = dev.cavity_frequency(dev.cavity_index(&right).expect("validated"));
            Ok(g1 * gi * ei * g3 / ((w1 - wl) * (w1 - lv[2]) * (w1 - lv[1] - wr)))
        }
    }
}

/// Second-order level renormalizations, internal units.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DispersiveShifts {
    /// Vacuum (Lamb-type) shift of each atomic level, indexed `[atom][level]`.
    pub eta: Vec<Vec<f64>>,
    /// Per-photon (ac-Stark) shift of each atomic level, keyed by `(atom, cavity)`.
    pub xi: BTreeMap<(usize, usize), Vec<f64>>,
    /// Denominators that fell below the degeneracy floor.
    pub flagged: Vec<String>,
}

/// Standard second-order shifts for every atom–cavity edge under the rotating-wave coupling.
///
/// `eta[q][j]` is the shift of `|0, j>` from emitting into the vacuum, and
/// `xi[q,s][j]` is the extra shift per photon in cavity `s`.
pub fn second_order_shifts(dev: &DeviceSpec) -> DispersiveShifts {
    let g_min = dev.nonzero_couplings().into_iter().fold(f64::INFINITY, f64::min);
    let floor = if g_min.is_finite() { DEGENERACY_FLOOR_FACTOR * g_min } else { 0.0 };
    let mut out = DispersiveShifts { eta: dev.atoms.iter().map(|a| vec![0.0; a.levels()]).collect(), ..Default::default() };
    for e in &dev.edges {
        let q = dev.atom_index(&e.atom).expect("validated");
        let s = dev.cavity_index(&e.cavity).expect("validated");
        let w = dev.level_energies(q);
        let wc = dev.cavity_frequency(s);
        let n = w.len();
        let mut xi = vec![0.0; n];
        for t in Transition::ALL {
            let g = dev.coupling(e, t);
            if g == 0.0 {
                continue;
            }
            let (lo, hi) = (t.levels().0.index(), t.levels().1.index());
            if hi >= n {
                continue;
            }
            // |0,hi> ↔ |1,lo>: upper level pushed by g²/(ω_hi − ω_lo − ω_c)
            let den_up = w[hi] - w[lo] - wc;
            // |1,lo> ↔ |0,hi>: lower level, per photon, by g²/(ω_lo − ω_hi + ω_c)
            let den_down = w[lo] - w[hi] + wc;
            for (den, what) in [(den_up, "emission"), (den_down, "absorption")] {
                if den.abs() < floor {
                    out.flagged.push(format!("edge {} {t} {what}: denominator {den:.3e}", e.name()));
                }
            }
            out.eta[q][hi] += g * g / den_up;
            xi[hi] += g * g / den_up;
            xi[lo] += g * g / den_down;
        }
        out.xi.insert((q, s), xi);
    }
    out
}

impl DispersiveShifts {
    /// Renormalized energy of a bare state.
    pub fn shifted_energy(&self, state: &BareState) -> f64 {
        let mut e = state.energy;
        for (q, l) in state.levels.iter().enumerate() {
            e += self.eta[q][l.index()];
        }
        for (&(q, s), xi) in &self.xi {
            e += state.fock[s] as f64 * xi[state.levels[q].index()];
        }
        e
    }
}

/// Diagonal `H₀` with the second-order shifts folded in.
pub fn renormalized_bare_hamiltonian(dev: &DeviceSpec, space: &Arc<CompositeSpace>, shifts: &DispersiveShifts) -> Result<OperatorMatrix> {
    let h0 = build_bare_hamiltonian(dev, space)?;
    let diag: Vec<f64> = (0..space.total_dim()).map(|k| shifts.shifted_energy(&bare_from_index(space, &h0, k))).collect();
    OperatorMatrix::from_diagonal(space, &diag)
}

/// Value of `parameter` where the renormalized energies of `i` and `f` coincide.
///
/// Uses the secant method starting from the current value, recomputing the
/// shifts at every iterate.
pub fn dispersive_resonance(dev: &DeviceSpec, parameter: &str, i: &BareState, f: &BareState) -> Result<f64> {
    let residual = |x: f64| -> Result<f64> {
        let d = dev.with_param(parameter, x)?;
        let sh = second_order_shifts(&d);
        let a = d.bare_state(i.fock.clone(), i.levels.clone())?;
        let b = d.bare_state(f.fock.clone(), f.levels.clone())?;
        Ok((sh.shifted_energy(&a) - sh.shifted_energy(&b)) / d.freq_scale())
    };
    let mut x0 = dev.get_param(parameter)?;
    let mut x1 = x0 * (1.0 + 1e-4);
    let (mut r0, mut r1) = (residual(x0)?, residual(x1)?);
    for _ in 0..100 {
        if r1 == r0 {
            break;
        }
        let x2 = x1 - r1 * (x1 - x0) / (r1 - r0);
        x0 = x1;
        r0 = r1;
        x1 = x2;
        r1 = residual(x1)?;
        if (x1 - x0).abs() <= 1e-13 * x1.abs() {
            break;
        }
    }
    Ok(x1)
}
