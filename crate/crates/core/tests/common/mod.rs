//! Seeded random devices in the dispersive regime, in units of ω₀.

#![allow(dead_code)]

use cqed::{AtomSpec, BareState, CavitySpec, CouplingEdge, DeviceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest Hilbert-space dimension allowed after doubling `n_max`.
pub const MAX_DOUBLED_DIM: usize = 250;

#[derive(Clone, Copy, Debug)]
pub enum Limit {
    Lossy,
    Lossless,
    /// No loss and only g–e couplings.
    TwoLevel,
}

pub fn dimension(dev: &DeviceSpec) -> usize {
    dev.cavities.iter().map(|c| c.n_max + 1).product::<usize>() * dev.atoms.iter().map(|a| a.levels()).product::<usize>()
}

fn draw(rng: &mut ChaCha8Rng, limit: Limit) -> DeviceSpec {
    let n_atoms = rng.gen_range(1..=3);
    let n_cav = if n_atoms > 1 && rng.gen_bool(0.3) { 2 } else { 1 };
    let lossy = matches!(limit, Limit::Lossy);
    let rate = |rng: &mut ChaCha8Rng| if lossy { rng.gen_range(0.0..2e-3) } else { 0.0 };
    let cavities = (0..n_cav)
        .map(|s| CavitySpec {
            label: format!("c{s}"),
            omega_c: rng.gen_range(0.6..0.9),
            kappa: rate(rng),
            n_max: rng.gen_range(2..=4),
        })
        .collect();
    let mut atoms = Vec::new();
    let mut edges = Vec::new();
    for q in 0..n_atoms {
        let label = format!("q{}", q + 1);
        let omega_e = rng.gen_range(1.0..1.4);
        let qutrit = !matches!(limit, Limit::TwoLevel) && rng.gen_bool(0.7);
        let omega_i = qutrit.then(|| omega_e + rng.gen_range(1.1..1.4));
        atoms.push(AtomSpec {
            label: label.clone(),
            omega_e,
            omega_i,
            gamma_ge: rate(rng),
            gamma_gi: qutrit.then(|| rate(rng)),
            gamma_ei: qutrit.then(|| rate(rng)),
        });
        let g = |rng: &mut ChaCha8Rng| rng.gen_range(0.005..0.02);
        // the first atom bridges both cavities
        let links: Vec<usize> = if q == 0 { (0..n_cav).collect() } else { vec![rng.gen_range(0..n_cav)] };
        for s in links {
            edges.push(CouplingEdge {
                atom: label.clone(),
                cavity: format!("c{s}"),
                g_ge: g(rng),
                g_gi: qutrit.then(|| g(rng)),
                g_ei: qutrit.then(|| g(rng)),
            });
        }
    }
    DeviceSpec { unit_omega0: Some(1.0), cavities, atoms, edges }
}

/// A device whose dimension stays below `MAX_DOUBLED_DIM` when `n_max` is doubled.
pub fn random_device(seed: u64, limit: Limit) -> DeviceSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let dev = draw(&mut rng, limit);
        let doubled: usize = dev.cavities.iter().map(|c| 2 * c.n_max + 1).product::<usize>()
            * dev.atoms.iter().map(|a| a.levels()).product::<usize>();
        if doubled <= MAX_DOUBLED_DIM {
            dev.validate().expect("random device validates");
            return dev;
        }
    }
}

/// Random bare state with at most one photon per cavity and at least one excitation.
pub fn random_initial(dev: &DeviceSpec, seed: u64) -> BareState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    loop {
        let fock: Vec<usize> = dev.cavities.iter().map(|_| rng.gen_range(0..=1)).collect();
        let levels = dev
            .atoms
            .iter()
            .map(|a| cqed::Level::from_index(rng.gen_range(0..a.levels())).expect("valid level"))
            .collect::<Vec<_>>();
        let state = dev.bare_state(fock, levels).expect("state inside the space");
        if state.digits().iter().any(|&d| d > 0) {
            return state;
        }
    }
}
