//! Exact diagonalization, parameter sweeps and avoided-crossing location.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::device::{build_hamiltonian, DeviceSpec};
use crate::error::{Error, Result};
use crate::hilbert::{BareState, OperatorMatrix, C64};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const GOLDEN_REL_TOL: f64 = 1e-6;
const COARSE_POINTS: usize = 41;

/// Eigenpairs in ascending order. Column `n` of `vectors` is |Ψ_n>.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Array2<C64>,
}

impl Eigen {
    /// Probability of basis state `k` in eigenvector `n`.
    pub fn weight(&self, k: usize, n: usize) -> f64 {
        self.vectors[[k, n]].norm_sqr()
    }
}

fn check_hermitian(h: &OperatorMatrix) -> Result<()> {
    let residual = h.hermiticity_residual();
    let scale = h.max_abs();
    if residual > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { residual, scale });
    }
    Ok(())
}

fn real_part(h: &OperatorMatrix) -> DMatrix<f64> {
    let e = h.entries();
    DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| e[[i, j]].re)
}

fn complex_part(h: &OperatorMatrix) -> DMatrix<C64> {
    let e = h.entries();
    DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| e[[i, j]])
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Full eigendecomposition of a Hermitian operator.
///
/// Each eigenvector is rotated so that its largest-magnitude component is
/// real and positive.
pub fn diagonalize(h: &OperatorMatrix) -> Result<Eigen> {
    check_hermitian(h)?;
    let d = h.dim();
    let (raw_values, raw_vectors): (Vec<f64>, Array2<C64>) = if h.is_real() {
        let eig = SymmetricEigen::new(real_part(h));
        let v = &eig.eigenvectors;
        (eig.eigenvalues.iter().copied().collect(), Array2::from_shape_fn((d, d), |(i, j)| C64::new(v[(i, j)], 0.0)))
    } else {
        let eig = SymmetricEigen::new(complex_part(h));
        let v = &eig.eigenvectors;
        (eig.eigenvalues.iter().copied().collect(), Array2::from_shape_fn((d, d), |(i, j)| v[(i, j)]))
    };
    let order = ascending(&raw_values);
    let values = order.iter().map(|&k| raw_values[k]).collect();
    let mut vectors = Array2::zeros((d, d));
    for (n, &k) in order.iter().enumerate() {
        let col = raw_vectors.column(k);
        let pivot = col.iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())).unwrap_or(C64::new(1.0, 0.0));
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { C64::new(1.0, 0.0) };
        vectors.column_mut(n).assign(&col.mapv(|z| z * phase));
    }
    Ok(Eigen { values, vectors })
}

/// Ascending eigenvalues only.
pub fn eigenvalues(h: &OperatorMatrix) -> Result<Vec<f64>> {
    check_hermitian(h)?;
    let mut v: Vec<f64> =
        if h.is_real() { real_part(h).symmetric_eigenvalues().iter().copied().collect() } else {
            complex_part(h).symmetric_eigenvalues().iter().copied().collect()
        };
    v.sort_by(f64::total_cmp);
    Ok(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    pub parameter: String,
    pub values: Vec<f64>,
    pub levels: Vec<usize>,
    /// `energies[p][k]` is level `levels[k]` at sweep point `p`, in rad/ns (or ω₀).
    pub energies: Vec<Vec<f64>>,
    /// Divide energies by this to get config units (GHz or ω₀).
    pub unit: f64,
}

impl SpectrumResult {
    /// CSV with the sweep value followed by each selected level in config units.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let unit = if self.unit == 1.0 { "w0" } else { "ghz" };
        write!(w, "{}", self.parameter)?;
        for l in &self.levels {
            write!(w, ",E{l}_{unit}")?;
        }
        writeln!(w)?;
        for (x, row) in self.values.iter().zip(&self.energies) {
            write!(w, "{x:.11e}")?;
            for e in row {
                write!(w, ",{:.11e}", e / self.unit)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Rebuilds and diagonalizes the device at each value of `parameter`.
pub fn sweep_spectrum(dev: &DeviceSpec, parameter: &str, values: &[f64], levels: &[usize]) -> Result<SpectrumResult> {
    if values.is_empty() {
        return Err(Error::EmptySweep);
    }
    dev.get_param(parameter)?;
    let energies = values
        .par_iter()
        .map(|&x| {
            let d = dev.with_param(parameter, x)?;
            let e = eigenvalues(&build_hamiltonian(&d)?)?;
            levels
                .iter()
                .map(|&l| e.get(l).copied().ok_or(Error::LevelOutOfRange { level: l, dim: e.len() }))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        parameter: parameter.to_string(),
        values: values.to_vec(),
        levels: levels.to_vec(),
        energies,
        unit: dev.freq_scale(),
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Which pair of eigenstates forms the crossing.
#[derive(Clone, Debug)]
pub enum LevelSelector {
    /// Fixed positions in the sorted spectrum.
    Indices(usize, usize),
    /// The two eigenstates with the largest combined weight on these bare states.
    BareStates(BareState, BareState),
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchWeights {
    pub level: usize,
    pub energy: f64,
    /// Weights on the two reference bare states.
    pub weights: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossingReport {
    pub parameter: String,
    pub location: f64,
    /// Gap in rad/ns (or ω₀).
    pub gap: f64,
    pub unit: f64,
    pub reference_states: [String; 2],
    pub at_minimum: [BranchWeights; 2],
    pub below: [BranchWeights; 2],
    pub above: [BranchWeights; 2],
}

impl CrossingReport {
    pub fn gap_in_config_units(&self) -> f64 {
        self.gap / self.unit
    }

    /// Period `2π/gap` of the resonant exchange (ns when the device is not dimensionless).
    pub fn exchange_period(&self) -> f64 {
        std::f64::consts::TAU / self.gap
    }
}

impl fmt::Display for CrossingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dimless = self.unit == 1.0;
        writeln!(f, "avoided crossing in {}", self.parameter)?;
        writeln!(f, "  location      {:.9}", self.location)?;
        if dimless {
            writeln!(f, "  gap           {:.6e} w0", self.gap)?;
        } else {
            writeln!(f, "  gap/2pi       {:.6} MHz", self.gap / self.unit * 1e3)?;
            writeln!(f, "  period        {:.3} ns", self.exchange_period())?;
        }
        writeln!(f, "  weights on |{}> and |{}>", self.reference_states[0], self.reference_states[1])?;
        for (name, pair) in [("minimum", &self.at_minimum), ("below", &self.below), ("above", &self.above)] {
            for b in pair {
                writeln!(
                    f,
                    "  {name:<8} E{:<3} {:>14.9}  {:.4}  {:.4}",
                    b.level,
                    b.energy / self.unit,
                    b.weights[0],
                    b.weights[1]
                )?;
            }
        }
        Ok(())
    }
}

struct Probe<'a> {
    dev: &'a DeviceSpec,
    parameter: &'a str,
    selector: &'a LevelSelector,
}

impl Probe<'_> {
    fn device(&self, x: f64) -> Result<DeviceSpec> {
        self.dev.with_param(self.parameter, x)
    }

    fn pair(&self, x: f64) -> Result<(f64, Option<(usize, usize)>)> {
        let d = self.device(x)?;
        let h = build_hamiltonian(&d)?;
        match self.selector {
            LevelSelector::Indices(a, b) => {
                let e = eigenvalues(&h)?;
                let dim = e.len();
                let (ea, eb) = (
                    *e.get(*a).ok_or(Error::LevelOutOfRange { level: *a, dim })?,
                    *e.get(*b).ok_or(Error::LevelOutOfRange { level: *b, dim })?,
                );
                Ok(((eb - ea).abs(), Some((*a, *b))))
            }
            LevelSelector::BareStates(i, f) => {
                let eig = diagonalize(&h)?;
                let (n, m) = dominant_pair(&eig, &d, i, f)?;
                Ok(((eig.values[m] - eig.values[n]).abs(), Some((n, m))))
            }
        }
    }

    fn gap(&self, x: f64) -> Result<f64> {
        Ok(self.pair(x)?.0)
    }

    fn branches(&self, x: f64, refs: (&BareState, &BareState)) -> Result<[BranchWeights; 2]> {
        let d = self.device(x)?;
        let eig = diagonalize(&build_hamiltonian(&d)?)?;
        let (n, m) = match self.selector {
            LevelSelector::Indices(a, b) => (*a, *b),
            LevelSelector::BareStates(i, f) => dominant_pair(&eig, &d, i, f)?,
        };
        let space = d.space()?;
        let (ki, kf) = (refs.0.index_in(&space)?, refs.1.index_in(&space)?);
        Ok([n, m].map(|l| BranchWeights { level: l, energy: eig.values[l], weights: [eig.weight(ki, l), eig.weight(kf, l)] }))
    }
}

fn dominant_pair(eig: &Eigen, dev: &DeviceSpec, i: &BareState, f: &BareState) -> Result<(usize, usize)> {
    let space = dev.space()?;
    let (ki, kf) = (i.index_in(&space)?, f.index_in(&space)?);
    let mut order: Vec<usize> = (0..eig.values.len()).collect();
    let w = |n: usize| eig.weight(ki, n) + eig.weight(kf, n);
    order.sort_by(|&a, &b| w(b).total_cmp(&w(a)));
    let (a, b) = (order[0].min(order[1]), order[0].max(order[1]));
    Ok((a, b))
}

/// Golden-section minimization of `f` on `[a, b]` until the bracket is below `tol`.
pub fn golden_section<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Locates the minimum gap between the selected pair inside `bracket`.
///
/// A coarse scan finds the best grid point, then golden-section search
/// refines it. Branch weights are reported on `refs` (usually the two
/// exchange states) at the minimum and at both bracket ends.
pub fn find_resonance(
    dev: &DeviceSpec,
    parameter: &str,
    bracket: (f64, f64),
    selector: &LevelSelector,
    refs: (&BareState, &BareState),
) -> Result<CrossingReport> {
    let (lo, hi) = bracket;
    if !(hi > lo) {
        return Err(Error::EmptySweep);
    }
    dev.get_param(parameter)?;
    let probe = Probe { dev, parameter, selector };
    let grid = linspace(lo, hi, COARSE_POINTS);
    let gaps = grid.par_iter().map(|&x| probe.gap(x)).collect::<Result<Vec<_>>>()?;
    let k = (0..gaps.len()).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).expect("non-empty grid");
    if k == 0 || k == grid.len() - 1 {
        return Err(Error::NoInteriorMinimum { lo, hi });
    }
    let tol = GOLDEN_REL_TOL * grid[k].abs().max(f64::MIN_POSITIVE);
    let (location, gap) = golden_section(|x| probe.gap(x), grid[k - 1], grid[k + 1], tol)?;
    Ok(CrossingReport {
        parameter: parameter.to_string(),
        location,
        gap,
        unit: dev.freq_scale(),
        reference_states: [refs.0.label(), refs.1.label()],
        at_minimum: probe.branches(location, refs)?,
        below: probe.branches(lo, refs)?,
        above: probe.branches(hi, refs)?,
    })
}

/// Central-difference slopes `dE_l/dx` of the selected levels, in config units.
pub fn level_slopes(dev: &DeviceSpec, parameter: &str, x: f64, levels: &[usize], h: f64) -> Result<Vec<f64>> {
    let s = sweep_spectrum(dev, parameter, &[x - h, x + h], levels)?;
    Ok((0..levels.len()).map(|k| (s.energies[1][k] - s.energies[0][k]) / (2.0 * h) / s.unit).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::fixtures::three_atom_device;
    use crate::hilbert::{build_space, SubsystemDef};
    use approx::assert_relative_eq;
    use ndarray::arr2;

    fn op(m: Array2<C64>) -> OperatorMatrix {
        let d = m.nrows();
        let space = build_space(vec![SubsystemDef::atom("q", d)]).unwrap();
        OperatorMatrix::new(space, m).unwrap()
    }

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn two_by_two_splitting() {
        let g = 0.3;
        let e = diagonalize(&op(arr2(&[[c(0.0), c(g)], [c(g), c(0.0)]]))).unwrap();
        assert_relative_eq!(e.values[0], -g, max_relative = 1e-14);
        assert_relative_eq!(e.values[1], g, max_relative = 1e-14);
        for n in 0..2 {
            let col = e.vectors.column(n);
            let pivot = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(pivot.im == 0.0 && pivot.re > 0.0);
        }
    }

    #[test]
    fn complex_hermitian_path() {
        let m = arr2(&[
            [c(1.0), C64::new(0.0, 0.5), c(0.0)],
            [C64::new(0.0, -0.5), c(2.0), C64::new(0.2, 0.1)],
            [c(0.0), C64::new(0.2, -0.1), c(-1.0)],
        ]);
        let h = op(m.clone());
        let e = diagonalize(&h).unwrap();
        let v = &e.vectors;
        let vhv = v.t().mapv(|z| z.conj()).dot(&m).dot(v);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { e.values[i] } else { 0.0 };
                assert!((vhv[[i, j]] - c(expect)).norm() < 1e-12);
            }
        }
        let trace: f64 = e.values.iter().sum();
        assert_relative_eq!(trace, 2.0, max_relative = 1e-12);
        let only = eigenvalues(&h).unwrap();
        for (a, b) in only.iter().zip(&e.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = op(arr2(&[[c(0.0), c(1.0)], [c(0.5), c(0.0)]]));
        assert!(matches!(diagonalize(&h), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn bare_hamiltonian_spectrum() {
        let mut dev = three_atom_device(2);
        for e in &mut dev.edges {
            e.g_ge = 0.0;
            e.g_gi = Some(0.0);
            e.g_ei = Some(0.0);
        }
        let space = dev.space().unwrap();
        let mut bare: Vec<f64> = (0..space.total_dim()).map(|k| dev.basis_state(&space, k).energy).collect();
        bare.sort_by(f64::total_cmp);
        let e = eigenvalues(&build_hamiltonian(&dev).unwrap()).unwrap();
        for (a, b) in e.iter().zip(&bare) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn orthonormal_and_trace() {
        let h = build_hamiltonian(&three_atom_device(2)).unwrap();
        let e = diagonalize(&h).unwrap();
        let v = &e.vectors;
        let gram = v.t().mapv(|z| z.conj()).dot(v);
        let mut worst: f64 = 0.0;
        for ((i, j), z) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((z - c(target)).norm());
        }
        assert!(worst < 1e-9, "gram residual {worst}");
        let sum: f64 = e.values.iter().sum();
        assert_relative_eq!(sum, h.trace().re, max_relative = 1e-10);
    }

    #[test]
    fn sweep_errors_and_order() {
        let dev = three_atom_device(2);
        assert!(matches!(sweep_spectrum(&dev, "atoms.1.omega_e", &[], &[0]), Err(Error::EmptySweep)));
        assert!(matches!(sweep_spectrum(&dev, "atoms.1.colour", &[1.0], &[0]), Err(Error::UnknownParameter(_))));
        let xs = [7.95, 7.96, 7.97];
        let s = sweep_spectrum(&dev, "atoms.1.omega_e", &xs, &[6, 7]).unwrap();
        assert_eq!(s.values, xs);
        assert!(s.energies.iter().all(|r| r[0] <= r[1]));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("atoms.1.omega_e,E6_ghz,E7_ghz\n"));
    }

    #[test]
    fn golden_section_parabola() {
        let (x, fx) = golden_section(|x| Ok(((x - 0.3f64).powi(2) + 1e-6).sqrt()), 0.0, 1.0, 1e-9).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_levels_cross_exactly() {
        let mut dev = three_atom_device(2);
        for e in &mut dev.edges {
            e.g_ge = 0.0;
            e.g_gi = Some(0.0);
            e.g_ei = Some(0.0);
        }
        let (i, f) = dev.exchange_states().unwrap();
        let sel = LevelSelector::BareStates(i.clone(), f.clone());
        let r = find_resonance(&dev, "atoms.1.omega_e", (7.9, 8.1), &sel, (&i, &f)).unwrap();
        assert!((r.location - 8.0).abs() < 1e-5);
        assert!(r.gap_in_config_units() < 1e-5);
    }

    #[test]
    fn bracket_without_interior_minimum() {
        let dev = three_atom_device(2);
        let (i, f) = dev.exchange_states().unwrap();
        let sel = LevelSelector::BareStates(i.clone(), f.clone());
        let r = find_resonance(&dev, "atoms.1.omega_e", (7.8, 7.9), &sel, (&i, &f));
        assert!(matches!(r, Err(Error::NoInteriorMinimum { .. })));
    }
}
