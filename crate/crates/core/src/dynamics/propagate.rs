//! Stepping the density matrix between output times.
//!
//! The default scheme splits the generator into its coherent and dissipative
//! parts. The coherent flow is applied exactly from the eigendecomposition of
//! `H`, and the dissipative flow on either side is integrated adaptively, in a
//! symmetric (Strang) arrangement. Because the coherent part is exact, the step
//! length is limited by the relaxation rates rather than by the GHz-scale
//! level spacings. The reference scheme integrates the full generator with the
//! adaptive Runge–Kutta method directly.

use ndarray::Array2;

use super::integrate::{dp5, Dp5Options, Dp5Stats};
use super::lindblad::Lindbladian;
use crate::error::Result;
use crate::hilbert::C64;
use crate::spectrum::diagonalize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Split,
    Reference,
}

struct StepCache {
    h: f64,
    full: Array2<C64>,
    full_d: Array2<C64>,
}

pub struct Propagator {
    generator: Lindbladian,
    method: Method,
    max_step: f64,
    opts: Dp5Options,
    energies: Vec<f64>,
    vectors: Array2<C64>,
    cache: Option<StepCache>,
    dissipative_step: f64,
    full_step: f64,
    pub stats: Dp5Stats,
}

impl Propagator {
    pub fn new(generator: Lindbladian, method: Method, max_step: f64, rtol: f64) -> Result<Self> {
        let (energies, vectors) = match method {
            Method::Split => {
                let e = diagonalize(&generator.hamiltonian)?;
                (e.values, e.vectors)
            }
            Method::Reference => (Vec::new(), Array2::zeros((0, 0))),
        };
        let opts = Dp5Options { rtol, atol: rtol * 1e-2, h_max: max_step, ..Default::default() };
        Ok(Self {
            generator,
            method,
            max_step,
            opts,
            energies,
            vectors,
            cache: None,
            dissipative_step: 0.0,
            full_step: 0.0,
            stats: Dp5Stats::default(),
        })
    }

    pub fn generator(&self) -> &Lindbladian {
        &self.generator
    }

    /// `V e^{−iEt} V†` and its adjoint.
    fn unitary(&self, t: f64) -> (Array2<C64>, Array2<C64>) {
        let phases: Vec<C64> = self.energies.iter().map(|&e| C64::new(0.0, -e * t).exp()).collect();
        let mut scaled = self.vectors.clone();
        for (mut col, p) in scaled.columns_mut().into_iter().zip(&phases) {
            col.mapv_inplace(|z| z * p);
        }
        let vdag = self.vectors.t().mapv(|z| z.conj());
        let w = scaled.dot(&vdag);
        let wd = w.t().mapv(|z| z.conj());
        (w, wd)
    }

    fn conjugate(rho: &mut Array2<C64>, w: &Array2<C64>, wd: &Array2<C64>) {
        let tmp = w.dot(&*rho);
        *rho = tmp.dot(wd);
    }

    /// Evolves `rho` from `t0` to `t1`.
    pub fn advance(&mut self, rho: &mut Array2<C64>, t0: f64, t1: f64) -> Result<()> {
        if t1 <= t0 {
            return Ok(());
        }
        match self.method {
            Method::Reference => {
                let gen = &self.generator;
                let stats = dp5(|_, y, dy| gen.apply(y, dy), t0, t1, rho, &mut self.full_step, &self.opts)?;
                self.stats += stats;
            }
            Method::Split => {
                let span = t1 - t0;
                let lossless = self.generator.dissipator.is_empty();
                let n = if lossless { 1 } else { (span / self.max_step * (1.0 - 1e-9)).ceil().max(1.0) as usize };
                let h = span / n as f64;
                // output grids repeat the same interval up to rounding
                if self.cache.as_ref().map_or(true, |c| (c.h - h).abs() > 1e-12 * h) {
                    let (full, full_d) = self.unitary(h);
                    self.cache = Some(StepCache { h, full, full_d });
                }
                let StepCache { full, full_d, .. } = self.cache.as_ref().expect("filled above");
                if lossless {
                    Self::conjugate(rho, full, full_d);
                    return Ok(());
                }
                // D(h/2) U(h) D(h/2) per step, neighbouring half steps fused
                let dis = &self.generator.dissipator;
                let dopts = Dp5Options { h_max: h, ..self.opts };
                let mut a = t0;
                for s in 0..=n {
                    let b = match s {
                        _ if s == n => t1,
                        0 => a + 0.5 * h,
                        _ => a + h,
                    };
                    let stats = dp5(|_, y, dy| dis.apply(y, dy), a, b, rho, &mut self.dissipative_step, &dopts)?;
                    self.stats += stats;
                    if s < n {
                        Self::conjugate(rho, full, full_d);
                    }
                    a = b;
                }
            }
        }
        Ok(())
    }
}
