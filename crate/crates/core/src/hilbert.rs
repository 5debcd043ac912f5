//! Composite Hilbert spaces of truncated bosonic modes and few-level atoms.
//!
//! Basis states are indexed in mixed radix with the first subsystem most
//! significant. Devices always declare cavities first and atoms after them,
//! in declaration order, so a basis label such as `0,e,g,g` maps to a fixed
//! index for a given device.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsystemKind {
    Cavity,
    Atom,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemDef {
    pub kind: SubsystemKind,
    pub dim: usize,
    pub label: String,
}

impl SubsystemDef {
    /// A bosonic mode holding at most `n_max` photons.
    pub fn cavity(label: impl Into<String>, n_max: usize) -> Self {
        Self { kind: SubsystemKind::Cavity, dim: n_max + 1, label: label.into() }
    }

    pub fn atom(label: impl Into<String>, levels: usize) -> Self {
        Self { kind: SubsystemKind::Atom, dim: levels, label: label.into() }
    }
}

/// Atomic level of a cyclic qutrit. `G` and `E` span the qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "g")]
    G,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "i")]
    I,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::G, Level::E, Level::I];

    pub fn index(self) -> usize {
        match self {
            Level::G => 0,
            Level::E => 1,
            Level::I => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Level> {
        Level::ALL.get(i).copied()
    }

    /// Contribution to the total excitation number.
    pub fn excitations(self) -> usize {
        self.index()
    }

    pub fn symbol(self) -> char {
        match self {
            Level::G => 'g',
            Level::E => 'e',
            Level::I => 'i',
        }
    }

    pub fn parse(c: &str) -> Option<Level> {
        match c.trim() {
            "g" | "G" => Some(Level::G),
            "e" | "E" => Some(Level::E),
            "i" | "I" => Some(Level::I),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct CompositeSpace {
    subsystems: Vec<SubsystemDef>,
    strides: Vec<usize>,
    total_dim: usize,
}

/// Builds a composite space; the subsystem order given here is the basis order.
pub fn build_space(defs: Vec<SubsystemDef>) -> Result<Arc<CompositeSpace>> {
    if defs.is_empty() {
        return Err(Error::EmptySpace);
    }
    for (i, d) in defs.iter().enumerate() {
        if d.dim < 2 {
            return Err(Error::BadDimension { label: d.label.clone(), dim: d.dim });
        }
        if defs[..i].iter().any(|o| o.label == d.label) {
            return Err(Error::DuplicateLabel(d.label.clone()));
        }
    }
    let mut strides = vec![1; defs.len()];
    for k in (0..defs.len() - 1).rev() {
        strides[k] = strides[k + 1] * defs[k + 1].dim;
    }
    let total_dim = strides[0] * defs[0].dim;
    Ok(Arc::new(CompositeSpace { subsystems: defs, strides, total_dim }))
}

impl CompositeSpace {
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn subsystems(&self) -> &[SubsystemDef] {
        &self.subsystems
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.label == label)
    }

    pub fn stride(&self, pos: usize) -> usize {
        self.strides[pos]
    }

    pub fn dim_of(&self, pos: usize) -> usize {
        self.subsystems[pos].dim
    }

    /// Per-subsystem index of basis state `index` at subsystem `pos`.
    pub fn digit(&self, index: usize, pos: usize) -> usize {
        (index / self.strides[pos]) % self.subsystems[pos].dim
    }

    pub fn digits(&self, index: usize) -> Vec<usize> {
        (0..self.subsystems.len()).map(|p| self.digit(index, p)).collect()
    }

    pub fn index(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.subsystems.len() {
            return Err(Error::DimensionMismatch { expected: self.subsystems.len(), got: digits.len() });
        }
        let mut idx = 0;
        for (p, &d) in digits.iter().enumerate() {
            if d >= self.subsystems[p].dim {
                return Err(Error::LevelOutOfRange { level: d, dim: self.subsystems[p].dim });
            }
            idx += d * self.strides[p];
        }
        Ok(idx)
    }

    pub fn cavity_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions_of(SubsystemKind::Cavity)
    }

    pub fn atom_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions_of(SubsystemKind::Atom)
    }

    fn positions_of(&self, kind: SubsystemKind) -> impl Iterator<Item = usize> + '_ {
        self.subsystems.iter().enumerate().filter(move |(_, s)| s.kind == kind).map(|(p, _)| p)
    }

    /// Total photon number of a basis state.
    pub fn photons(&self, index: usize) -> usize {
        self.cavity_positions().map(|p| self.digit(index, p)).sum()
    }

    /// Human-readable label such as `0,e,g,g`.
    pub fn basis_label(&self, index: usize) -> String {
        self.subsystems
            .iter()
            .enumerate()
            .map(|(p, s)| {
                let d = self.digit(index, p);
                match s.kind {
                    SubsystemKind::Cavity => d.to_string(),
                    SubsystemKind::Atom => Level::from_index(d).map(|l| l.to_string()).unwrap_or_else(|| d.to_string()),
                }
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Dense operator on a composite space.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    space: Arc<CompositeSpace>,
    entries: Array2<C64>,
}

impl OperatorMatrix {
    pub fn new(space: Arc<CompositeSpace>, entries: Array2<C64>) -> Result<Self> {
        let d = space.total_dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: entries.nrows().max(entries.ncols()) });
        }
        Ok(Self { space, entries })
    }

    pub fn zeros(space: &Arc<CompositeSpace>) -> Self {
        let d = space.total_dim();
        Self { space: space.clone(), entries: Array2::zeros((d, d)) }
    }

    pub fn identity(space: &Arc<CompositeSpace>) -> Self {
        let d = space.total_dim();
        Self { space: space.clone(), entries: Array2::eye(d) }
    }

    pub fn from_diagonal(space: &Arc<CompositeSpace>, diag: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(space);
        if diag.len() != space.total_dim() {
            return Err(Error::DimensionMismatch { expected: space.total_dim(), got: diag.len() });
        }
        for (k, &v) in diag.iter().enumerate() {
            m.entries[[k, k]] = C64::new(v, 0.0);
        }
        Ok(m)
    }

    pub fn space(&self) -> &Arc<CompositeSpace> {
        &self.space
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Array2<C64> {
        &mut self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[[row, col]]
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space.clone(), entries: self.entries.t().mapv(|z| z.conj()) }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { space: self.space.clone(), entries: self.entries.mapv(|z| z * s) }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// `max |H - H†|` over all entries.
    pub fn hermiticity_residual(&self) -> f64 {
        let d = self.dim();
        let mut r: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                r = r.max((self.entries[[i, j]] - self.entries[[j, i]].conj()).norm());
            }
        }
        r
    }

    /// Hermitian within `rel * max|H|`.
    pub fn is_hermitian(&self, rel: f64) -> bool {
        self.hermiticity_residual() <= rel * self.max_abs()
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }

    pub fn diagonal(&self) -> Vec<C64> {
        self.entries.diag().to_vec()
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    fn assert_same_space(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space,
            "operators live on different spaces"
        );
    }
}

impl<'a> Mul<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.assert_same_space(rhs);
        OperatorMatrix { space: self.space.clone(), entries: self.entries.dot(&rhs.entries) }
    }
}

impl<'a> Add<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.assert_same_space(rhs);
        OperatorMatrix { space: self.space.clone(), entries: &self.entries + &rhs.entries }
    }
}

impl<'a> Sub<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.assert_same_space(rhs);
        OperatorMatrix { space: self.space.clone(), entries: &self.entries - &rhs.entries }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Annihilate,
    Create,
}

/// Truncated bosonic ladder operator, `a|n> = sqrt(n)|n-1>`.
pub fn ladder(kind: Ladder, dim: usize) -> Result<Array2<C64>> {
    if dim < 2 {
        return Err(Error::BadDimension { label: "ladder".into(), dim });
    }
    let mut a = Array2::zeros((dim, dim));
    for n in 1..dim {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(match kind {
        Ladder::Annihilate => a,
        Ladder::Create => a.reversed_axes(),
    })
}

/// `|j><k|` on a `dim`-level system.
pub fn transition_projector(j: usize, k: usize, dim: usize) -> Result<Array2<C64>> {
    for l in [j, k] {
        if l >= dim {
            return Err(Error::LevelOutOfRange { level: l, dim });
        }
    }
    let mut m = Array2::zeros((dim, dim));
    m[[j, k]] = ONE;
    Ok(m)
}

/// Tensor product of local operators acting on distinct subsystems, identity elsewhere.
pub fn embed_product(factors: &[(&str, &Array2<C64>)], space: &Arc<CompositeSpace>) -> Result<OperatorMatrix> {
    let mut placed = Vec::with_capacity(factors.len());
    for &(label, op) in factors {
        let pos = space.position(label).ok_or_else(|| Error::UnknownSubsystem(label.to_string()))?;
        let dim = space.dim_of(pos);
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: op.nrows().max(op.ncols()) });
        }
        if placed.iter().any(|&(p, _)| p == pos) {
            return Err(Error::DuplicateLabel(label.to_string()));
        }
        placed.push((pos, op));
    }
    let d = space.total_dim();
    let mut out = Array2::zeros((d, d));
    // Walk columns; each factor maps its digit to every row digit with a nonzero entry.
    let mut targets: Vec<(usize, C64)> = Vec::new();
    let mut next: Vec<(usize, C64)> = Vec::new();
    for col in 0..d {
        targets.clear();
        targets.push((col, ONE));
        for &(pos, op) in &placed {
            let dc = space.digit(col, pos);
            let stride = space.stride(pos);
            next.clear();
            for &(row, amp) in &targets {
                for dr in 0..op.nrows() {
                    let v = op[[dr, dc]];
                    if v != ZERO {
                        let r = row + dr * stride - dc * stride;
                        next.push((r, amp * v));
                    }
                }
            }
            std::mem::swap(&mut targets, &mut next);
        }
        for &(row, amp) in &targets {
            out[[row, col]] += amp;
        }
    }
    Ok(OperatorMatrix { space: space.clone(), entries: out })
}

/// `I ⊗ … ⊗ local_op ⊗ … ⊗ I` with `local_op` on subsystem `target`.
pub fn embed(local_op: &Array2<C64>, target: &str, space: &Arc<CompositeSpace>) -> Result<OperatorMatrix> {
    embed_product(&[(target, local_op)], space)
}

/// Total excitation number: photons plus one per `|e>` and two per `|i>`.
pub fn total_excitation_operator(space: &Arc<CompositeSpace>) -> OperatorMatrix {
    let diag: Vec<f64> = (0..space.total_dim())
        .map(|k| {
            space
                .subsystems()
                .iter()
                .enumerate()
                .map(|(p, _)| space.digit(k, p))
                .sum::<usize>() as f64
        })
        .collect();
    OperatorMatrix::from_diagonal(space, &diag).expect("diagonal matches space")
}

/// A product state of Fock numbers and atomic levels, with its bare energy
/// in rad/ns.
#[derive(Clone, Debug, PartialEq)]
pub struct BareState {
    pub fock: Vec<usize>,
    pub levels: Vec<Level>,
    pub energy: f64,
}

impl BareState {
    pub fn label(&self) -> String {
        self.fock
            .iter()
            .map(|n| n.to_string())
            .chain(self.levels.iter().map(|l| l.to_string()))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn digits(&self) -> Vec<usize> {
        self.fock.iter().copied().chain(self.levels.iter().map(|l| l.index())).collect()
    }

    pub fn index_in(&self, space: &CompositeSpace) -> Result<usize> {
        space.index(&self.digits()).map_err(|_| Error::InvalidState {
            label: self.label(),
            reason: "outside the truncated space".into(),
        })
    }
}

impl fmt::Display for BareState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}>", self.label())
    }
}

/// Splits a label like `0,e,g,g` (or `|0,e,g,g>`) into Fock numbers and levels.
pub fn parse_state_label(label: &str, n_cavities: usize, n_atoms: usize) -> Result<(Vec<usize>, Vec<Level>)> {
    let bad = |reason: &str| Error::InvalidState { label: label.to_string(), reason: reason.to_string() };
    let body = label.trim().trim_start_matches('|').trim_end_matches('>').trim_end_matches('⟩');
    let parts: Vec<&str> = body.split(',').map(str::trim).collect();
    if parts.len() != n_cavities + n_atoms {
        return Err(bad(&format!("expected {} entries, found {}", n_cavities + n_atoms, parts.len())));
    }
    let fock = parts[..n_cavities]
        .iter()
        .map(|p| p.parse::<usize>().map_err(|_| bad(&format!("`{p}` is not a photon number"))))
        .collect::<Result<Vec<_>>>()?;
    let levels = parts[n_cavities..]
        .iter()
        .map(|p| Level::parse(p).ok_or_else(|| bad(&format!("`{p}` is not one of g, e, i"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((fock, levels))
}
