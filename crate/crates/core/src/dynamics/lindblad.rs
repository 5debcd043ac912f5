//! Master-equation generator: coherent part plus relaxation dissipators.

use std::sync::Arc;

use ndarray::Array2;

use crate::device::{DeviceSpec, Transition};
use crate::error::{Error, Result};
use crate::hilbert::{embed, ladder, transition_projector, CompositeSpace, Ladder, OperatorMatrix, C64};

/// A collapse operator `√rate · O` stored as its nonzero entries.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub name: String,
    pub rate: f64,
    /// `(row, col, value)` of `√rate · O`.
    pub entries: Vec<(usize, usize, C64)>,
}

impl JumpOperator {
    fn from_dense(name: String, rate: f64, op: &OperatorMatrix) -> Self {
        let s = rate.sqrt();
        let entries = op
            .entries()
            .indexed_iter()
            .filter(|(_, z)| z.norm() != 0.0)
            .map(|((r, c), z)| (r, c, z * s))
            .collect();
        Self { name, rate, entries }
    }

    pub fn to_dense(&self, dim: usize) -> Array2<C64> {
        let mut m = Array2::zeros((dim, dim));
        for &(r, c, v) in &self.entries {
            m[[r, c]] += v;
        }
        m
    }
}

/// Cavity decay `κ_s a_s` and atomic relaxation on every allowed transition.
/// Channels with zero rate are omitted.
pub fn jump_operators(dev: &DeviceSpec, space: &Arc<CompositeSpace>) -> Result<Vec<JumpOperator>> {
    let mut out = Vec::new();
    for (s, c) in dev.cavities.iter().enumerate() {
        let rate = dev.cavity_decay(s);
        if rate > 0.0 {
            let a = embed(&ladder(Ladder::Annihilate, c.n_max + 1)?, &c.label, space)?;
            out.push(JumpOperator::from_dense(format!("kappa_{}", c.label), rate, &a));
        }
    }
    for (q, a) in dev.atoms.iter().enumerate() {
        let levels = a.levels();
        for t in Transition::ALL {
            let (lo, hi) = t.levels();
            let rate = dev.decay_rate(q, t);
            if hi.index() >= levels || rate == 0.0 {
                continue;
            }
            let op = embed(&transition_projector(lo.index(), hi.index(), levels)?, &a.label, space)?;
            out.push(JumpOperator::from_dense(format!("gamma_{t}_{}", a.label), rate, &op));
        }
    }
    Ok(out)
}

/// `L[O]ρ = OρO† − O†Oρ/2 − ρO†O/2`, accumulated into `out`.
fn add_dissipator(op: &Array2<C64>, rho: &Array2<C64>, out: &mut Array2<C64>) {
    let od = op.t().mapv(|z| z.conj());
    let odo = od.dot(op);
    *out += &op.dot(rho).dot(&od);
    *out -= &(odo.dot(rho) * C64::new(0.5, 0.0));
    *out -= &(rho.dot(&odo) * C64::new(0.5, 0.0));
}

/// Right-hand side of the master equation, written out densely term by term.
pub fn lindblad_rhs(rho: &Array2<C64>, h: &OperatorMatrix, dev: &DeviceSpec) -> Result<Array2<C64>> {
    let d = h.dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: rho.nrows() });
    }
    let hm = h.entries();
    let mut out = (hm.dot(rho) - rho.dot(hm)) * C64::new(0.0, -1.0);
    for j in jump_operators(dev, h.space())? {
        add_dissipator(&j.to_dense(d), rho, &mut out);
    }
    Ok(out)
}

/// Dissipative part of the generator in a form cheap to apply repeatedly.
#[derive(Clone, Debug)]
pub struct Dissipator {
    jumps: Vec<JumpOperator>,
    /// `Σ O†O`, which is diagonal for every relaxation channel built here.
    decay_diag: Option<Vec<f64>>,
    decay_dense: Option<Array2<C64>>,
    dim: usize,
}

impl Dissipator {
    pub fn new(jumps: Vec<JumpOperator>, dim: usize) -> Self {
        let mut k = Array2::<C64>::zeros((dim, dim));
        for j in &jumps {
            let o = j.to_dense(dim);
            k += &o.t().mapv(|z| z.conj()).dot(&o);
        }
        let diagonal = k.indexed_iter().all(|((r, c), z)| r == c || z.norm() == 0.0);
        let (decay_diag, decay_dense) =
            if diagonal { (Some(k.diag().iter().map(|z| z.re).collect()), None) } else { (None, Some(k)) };
        Self { jumps, decay_diag, decay_dense, dim }
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    /// Largest total decay rate of any basis state.
    pub fn max_rate(&self) -> f64 {
        match (&self.decay_diag, &self.decay_dense) {
            (Some(d), _) => d.iter().fold(0.0f64, |m, &x| m.max(x)),
            (_, Some(k)) => k.iter().fold(0.0f64, |m, z| m.max(z.norm())) * self.dim as f64,
            _ => 0.0,
        }
    }

    /// `out = Σ_j L[O_j] ρ`.
    pub fn apply(&self, rho: &Array2<C64>, out: &mut Array2<C64>) {
        out.fill(C64::new(0.0, 0.0));
        for j in &self.jumps {
            for &(r1, c1, v1) in &j.entries {
                for &(r2, c2, v2) in &j.entries {
                    out[[r1, r2]] += v1 * rho[[c1, c2]] * v2.conj();
                }
            }
        }
        if let Some(k) = &self.decay_diag {
            for ((r, c), o) in out.indexed_iter_mut() {
                *o -= rho[[r, c]] * (0.5 * (k[r] + k[c]));
            }
        } else if let Some(k) = &self.decay_dense {
            *out -= &((k.dot(rho) + rho.dot(k)) * C64::new(0.5, 0.0));
        }
    }
}

/// The full generator `−i[H, ρ] + D(ρ)`.
#[derive(Clone, Debug)]
pub struct Lindbladian {
    pub hamiltonian: OperatorMatrix,
    pub dissipator: Dissipator,
}

impl Lindbladian {
    pub fn new(dev: &DeviceSpec, hamiltonian: OperatorMatrix) -> Result<Self> {
        let jumps = jump_operators(dev, hamiltonian.space())?;
        let dim = hamiltonian.dim();
        Ok(Self { hamiltonian, dissipator: Dissipator::new(jumps, dim) })
    }

    pub fn apply(&self, rho: &Array2<C64>, out: &mut Array2<C64>) {
        self.dissipator.apply(rho, out);
        let h = self.hamiltonian.entries();
        let comm = h.dot(rho) - rho.dot(h);
        out.scaled_add(C64::new(0.0, -1.0), &comm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::fixtures::three_atom_device;
    use crate::device::{build_hamiltonian, AtomSpec, CavitySpec, CouplingEdge};
    use approx::assert_relative_eq;

    fn cavity_only(kappa: f64) -> DeviceSpec {
        DeviceSpec {
            unit_omega0: None,
            cavities: vec![CavitySpec { label: "c".into(), omega_c: 6.0, kappa, n_max: 3 }],
            atoms: vec![AtomSpec { label: "q".into(), omega_e: 4.0, omega_i: None, gamma_ge: 0.0, gamma_gi: None, gamma_ei: None }],
            edges: vec![CouplingEdge { atom: "q".into(), cavity: "c".into(), g_ge: 0.0, g_gi: None, g_ei: None }],
        }
    }

    fn pure(space: &Arc<CompositeSpace>, k: usize) -> Array2<C64> {
        let d = space.total_dim();
        let mut r = Array2::zeros((d, d));
        r[[k, k]] = C64::new(1.0, 0.0);
        r
    }

    #[test]
    fn diagonal_state_without_loss_is_stationary() {
        let mut dev = three_atom_device(2);
        for c in &mut dev.cavities {
            c.kappa = 0.0;
        }
        for a in &mut dev.atoms {
            a.gamma_ge = 0.0;
            a.gamma_gi = Some(0.0);
            a.gamma_ei = Some(0.0);
        }
        for e in &mut dev.edges {
            e.g_ge = 0.0;
            e.g_gi = Some(0.0);
            e.g_ei = Some(0.0);
        }
        let h = build_hamiltonian(&dev).unwrap();
        let rho = pure(h.space(), 7);
        let d = lindblad_rhs(&rho, &h, &dev).unwrap();
        assert_eq!(d.iter().fold(0.0, |m: f64, z| m.max(z.norm())), 0.0);
    }

    #[test]
    fn photon_decay_rate() {
        let dev = cavity_only(0.5);
        let h = build_hamiltonian(&dev).unwrap();
        let space = h.space().clone();
        let k = dev.parse_state("1,g").unwrap().index_in(&space).unwrap();
        let rho = pure(&space, k);
        let d = lindblad_rhs(&rho, &h, &dev).unwrap();
        let kappa = dev.cavity_decay(0);
        let n = embed(&ladder(Ladder::Create, 4).unwrap().dot(&ladder(Ladder::Annihilate, 4).unwrap()), "c", &space).unwrap();
        let dn: C64 = n.entries().dot(&d).diag().sum();
        assert_relative_eq!(dn.re, -kappa, max_relative = 1e-14);
    }

    #[test]
    fn atomic_decay_rate() {
        let mut dev = cavity_only(0.0);
        dev.atoms[0].gamma_ge = 0.2;
        let h = build_hamiltonian(&dev).unwrap();
        let space = h.space().clone();
        let k = dev.parse_state("0,e").unwrap().index_in(&space).unwrap();
        let d = lindblad_rhs(&pure(&space, k), &h, &dev).unwrap();
        assert_relative_eq!(d[[k, k]].re, -dev.decay_rate(0, Transition::Ge), max_relative = 1e-14);
    }

    #[test]
    fn fast_generator_matches_dense_form() {
        let mut dev = three_atom_device(2);
        for c in &mut dev.cavities {
            c.kappa = 3.0;
        }
        let h = build_hamiltonian(&dev).unwrap();
        let d = h.dim();
        let mut rho = Array2::<C64>::zeros((d, d));
        for r in 0..d {
            for c in 0..d {
                rho[[r, c]] = C64::new(((r * 7 + c * 3) % 11) as f64, ((r + 2 * c) % 5) as f64 - 2.0) / (d * d) as f64;
            }
        }
        let rho = &rho + &rho.t().mapv(|z| z.conj());
        let dense = lindblad_rhs(&rho, &h, &dev).unwrap();
        let gen = Lindbladian::new(&dev, h).unwrap();
        let mut fast = Array2::zeros((d, d));
        gen.apply(&rho, &mut fast);
        let scale = dense.iter().fold(0.0, |m: f64, z| m.max(z.norm()));
        let diff = (&dense - &fast).iter().fold(0.0, |m: f64, z| m.max(z.norm()));
        assert!(diff <= 1e-12 * scale, "{diff} vs {scale}");
        let trace: C64 = dense.diag().sum();
        assert!(trace.norm() <= 1e-10);
    }

    #[test]
    fn zero_rates_are_skipped() {
        let dev = cavity_only(0.0);
        let space = dev.space().unwrap();
        assert!(jump_operators(&dev, &space).unwrap().is_empty());
        let dev = three_atom_device(2);
        let space = dev.space().unwrap();
        assert_eq!(jump_operators(&dev, &space).unwrap().len(), 1 + 3 * 3);
    }
}
