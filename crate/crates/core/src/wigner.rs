//! Wigner and cross-Wigner transforms on the periodic grid, radial action
//! profiles `W(I)` (closed-form, sampled, mixed), and Wigner matrices of
//! degenerate families.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::classical::ActionAngleChart;
use crate::error::{Error, Result};
use crate::geometry::ParamPoint;
use crate::quantum::{edge_amplitude, DegenerateFamily, SpatialGrid, EDGE_TOLERANCE};
use crate::specfun::{laguerre, QuadratureRule, DEFAULT_LAGUERRE_ORDER};

/// Fine-grid refinement used for the lag sum.
const UPSAMPLE: usize = 4;
/// Fraction of spectral power allowed in the outer quarter of the band.
const ALIASING_TOLERANCE: f64 = 1e-10;
/// Default limit on the probability mass a sampled profile leaves outside
/// its action range.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;
/// Masses below this fraction of the largest are dropped from a measure.
const PRUNE_RELATIVE: f64 = 1e-20;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Phase-space lattice: the spatial grid and `n_points` momenta
/// `p_m = (m - n/2) dp`, `dp = 2 pi hbar / (n h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub grid: SpatialGrid,
    pub hbar: f64,
}

impl PhaseSpaceGrid {
    pub fn new(grid: SpatialGrid, hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::Domain(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { grid, hbar })
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI * self.hbar / (self.grid.n_points as f64 * self.grid.spacing())
    }

    pub fn momentum(&self, m: usize) -> f64 {
        (m as f64 - (self.grid.n_points / 2) as f64) * self.dp()
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.grid.n_points).map(|m| self.momentum(m)).collect()
    }

    /// `|p|` below which the lattice resolves momenta.
    pub fn p_max(&self) -> f64 {
        PI * self.hbar / self.grid.spacing()
    }

    pub fn cell(&self) -> f64 {
        self.grid.spacing() * self.dp()
    }

    pub fn contains(&self, q: f64, p: f64) -> bool {
        q >= self.grid.q_min && q < self.grid.q_max && p.abs() < self.p_max()
    }
}

/// Band-limited states refined onto a grid `UPSAMPLE` times finer, able to
/// evaluate cross-Wigner functions of every pair exactly at any `(q, p)`.
pub struct WignerEngine {
    pub psg: PhaseSpaceGrid,
    /// `states[a][sigma]`: zero-padded spectrum of component `sigma` of state `a`.
    spectra: Vec<Vec<Vec<Complex64>>>,
    fine: Vec<Vec<Vec<Complex64>>>,
    inverse_fine: Arc<dyn Fft<f64>>,
    inverse_row: Arc<dyn Fft<f64>>,
}

impl WignerEngine {
    /// `states[a]` lists the internal components of state `a`, each a grid
    /// function.
    pub fn new(psg: PhaseSpaceGrid, states: Vec<Vec<DVector<Complex64>>>) -> Result<Self> {
        let n = psg.grid.n_points;
        let m = UPSAMPLE * n;
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse_fine = planner.plan_fft_inverse(m);
        let inverse_row = planner.plan_fft_inverse(2 * n);
        let mut spectra = Vec::with_capacity(states.len());
        let mut fine = Vec::with_capacity(states.len());
        for comps in &states {
            let mut s_comp = Vec::with_capacity(comps.len());
            let mut f_comp = Vec::with_capacity(comps.len());
            for psi in comps {
                if psi.len() != n {
                    return Err(Error::Domain(format!(
                        "state of length {} on a {n}-point grid",
                        psi.len()
                    )));
                }
                let mut spec: Vec<Complex64> = psi.iter().copied().collect();
                forward.process(&mut spec);
                let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
                let outer: f64 = spec
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| {
                        let s = if *k < n / 2 { *k } else { n - *k };
                        4 * s >= 3 * (n / 2)
                    })
                    .map(|(_, c)| c.norm_sqr())
                    .sum();
                if total > 0.0 && outer / total > ALIASING_TOLERANCE {
                    return Err(Error::Aliasing(format!(
                        "{:.3e} of the spectral power lies near the momentum cutoff {:.4}; \
                         refine the grid",
                        outer / total,
                        psg.p_max()
                    )));
                }
                let mut padded = vec![ZERO; m];
                for (k, c) in spec.iter().enumerate() {
                    if k < n / 2 {
                        padded[k] = *c;
                    } else if k > n / 2 {
                        padded[k + m - n] = *c;
                    } else {
                        padded[k] = 0.5 * c;
                        padded[m - n / 2] = 0.5 * c;
                    }
                }
                for c in padded.iter_mut() {
                    *c /= n as f64;
                }
                let mut vals = padded.clone();
                inverse_fine.process(&mut vals);
                s_comp.push(padded);
                f_comp.push(vals);
            }
            spectra.push(s_comp);
            fine.push(f_comp);
        }
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.len() != first.len()) {
                return Err(Error::Domain("states differ in internal dimension".into()));
            }
        }
        Ok(Self {
            psg,
            spectra,
            fine,
            inverse_fine,
            inverse_row,
        })
    }

    pub fn rank(&self) -> usize {
        self.spectra.len()
    }

    fn fine_spacing(&self) -> f64 {
        self.psg.grid.spacing() / UPSAMPLE as f64
    }

    fn prefactor(&self) -> f64 {
        self.fine_spacing() / (PI * self.psg.hbar)
    }

    /// `f_k = sum_sigma conj(a_sigma[i0 + k]) b_sigma[i0 - k]` for
    /// `k in [-M/2, M/2)`, stored at `k + M/2`.
    fn lag_products(a: &[Vec<Complex64>], b: &[Vec<Complex64>], i0: usize) -> Vec<Complex64> {
        let m = a[0].len();
        let half = m / 2;
        let mut f = vec![ZERO; m];
        let i0 = i0 as isize;
        for (idx, slot) in f.iter_mut().enumerate() {
            let k = idx as isize - half as isize;
            let (l, r) = (i0 + k, i0 - k);
            if l < 0 || r < 0 || l >= m as isize || r >= m as isize {
                continue;
            }
            for (ca, cb) in a.iter().zip(b) {
                *slot += ca[l as usize].conj() * cb[r as usize];
            }
        }
        f
    }

    /// `W_ab` on the phase-space lattice (rows `q_j`, columns `p_m`).
    pub fn grid_values(&self, a: usize, b: usize) -> DMatrix<Complex64> {
        let n = self.psg.grid.n_points;
        let m = UPSAMPLE * n;
        let pre = self.prefactor();
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let f = Self::lag_products(&self.fine[a], &self.fine[b], UPSAMPLE * j);
                let mut folded = vec![ZERO; 2 * n];
                for (idx, v) in f.iter().enumerate() {
                    let k = idx as isize - (m / 2) as isize;
                    folded[k.rem_euclid(2 * n as isize) as usize] += v;
                }
                self.inverse_row.process(&mut folded);
                (0..n)
                    .map(|col| {
                        let bin = (col as isize - (n / 2) as isize).rem_euclid(2 * n as isize);
                        folded[bin as usize] * pre
                    })
                    .collect()
            })
            .collect();
        DMatrix::from_fn(n, n, |j, col| rows[j][col])
    }

    fn shifted(&self, delta: f64) -> Vec<Vec<Vec<Complex64>>> {
        let ks = fine_wavenumbers(&self.psg.grid);
        self.spectra
            .iter()
            .map(|comps| {
                comps
                    .iter()
                    .map(|spec| {
                        let mut v: Vec<Complex64> = spec
                            .iter()
                            .zip(&ks)
                            .map(|(c, k)| c * Complex64::from_polar(1.0, k * delta))
                            .collect();
                        self.inverse_fine.process(&mut v);
                        v
                    })
                    .collect()
            })
            .collect()
    }

    /// All pairs `W_ab(q, p)` at one point.
    pub fn eval_matrix(&self, q: f64, p: f64) -> DMatrix<Complex64> {
        let r = self.rank();
        let hf = self.fine_spacing();
        let m = UPSAMPLE * self.psg.grid.n_points;
        let t = (q - self.psg.grid.q_min) / hf;
        if !(t >= 0.0 && t < m as f64) {
            return DMatrix::from_element(r, r, ZERO);
        }
        let i0 = t.floor() as usize;
        let delta = (t - i0 as f64) * hf;
        let shifted = if delta == 0.0 { None } else { Some(self.shifted(delta)) };
        let fields = shifted.as_ref().unwrap_or(&self.fine);
        let phase_step = 2.0 * p * hf / self.psg.hbar;
        let phases: Vec<Complex64> = (0..m)
            .map(|idx| Complex64::from_polar(1.0, phase_step * (idx as f64 - (m / 2) as f64)))
            .collect();
        let pre = self.prefactor();
        DMatrix::from_fn(r, r, |a, b| {
            let f = Self::lag_products(&fields[a], &fields[b], i0);
            f.iter().zip(&phases).map(|(x, e)| x * e).sum::<Complex64>() * pre
        })
    }

}

fn fine_wavenumbers(grid: &SpatialGrid) -> Vec<f64> {
    let m = UPSAMPLE * grid.n_points;
    let dk = 2.0 * PI / (grid.n_points as f64 * grid.spacing());
    (0..m)
        .map(|k| {
            let s = if k < m / 2 { k as f64 } else { k as f64 - m as f64 };
            s * dk
        })
        .collect()
}

fn check_state(psi: &DVector<Complex64>, grid: &SpatialGrid) -> Result<()> {
    let a = edge_amplitude(psi);
    if !(a < EDGE_TOLERANCE) {
        return Err(Error::GridTooNarrow {
            amplitude: a,
            limit: EDGE_TOLERANCE,
        });
    }
    let norm = grid.norm(psi);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Validation(format!("state norm is {norm}, expected 1")));
    }
    Ok(())
}

/// Wigner function of one state on the phase-space lattice, with an exact
/// evaluator for off-lattice points.
pub struct WignerMap {
    pub psg: PhaseSpaceGrid,
    /// Rows `q_j`, columns `p_m`.
    pub values: DMatrix<f64>,
    /// Largest discarded imaginary part.
    pub imag_residual: f64,
    engine: WignerEngine,
}

/// `W(q, p) = (1 / pi hbar) int ds conj(psi(q + s)) psi(q - s) exp(2 i p s / hbar)`.
pub fn wigner_transform(psi: &DVector<Complex64>, grid: &SpatialGrid, hbar: f64) -> Result<WignerMap> {
    let psg = PhaseSpaceGrid::new(*grid, hbar)?;
    check_state(psi, grid)?;
    let engine = WignerEngine::new(psg, vec![vec![psi.clone()]])?;
    let complex = engine.grid_values(0, 0);
    let imag_residual = complex.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if imag_residual > 1e-12 {
        return Err(Error::Numerical(format!(
            "Wigner function has imaginary residue {imag_residual:.3e}"
        )));
    }
    Ok(WignerMap {
        psg,
        values: complex.map(|c| c.re),
        imag_residual,
        engine,
    })
}

impl WignerMap {
    /// Exact value at an arbitrary point.
    pub fn eval(&self, q: f64, p: f64) -> f64 {
        self.engine.eval_matrix(q, p)[(0, 0)].re
    }

    /// `sum W(q_j, p_m) f(q_j, p_m) h dp`.
    pub fn expectation<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let qs = self.psg.grid.points();
        let ps = self.psg.momenta();
        let mut acc = 0.0;
        for (j, q) in qs.iter().enumerate() {
            for (m, p) in ps.iter().enumerate() {
                acc += self.values[(j, m)] * f(*q, *p);
            }
        }
        acc * self.psg.cell()
    }

    pub fn integral(&self) -> f64 {
        self.expectation(|_, _| 1.0)
    }

    /// `int W dp` at each grid point.
    pub fn position_marginal(&self) -> Vec<f64> {
        let dp = self.psg.dp();
        (0..self.psg.grid.n_points)
            .map(|j| self.values.row(j).sum() * dp)
            .collect()
    }
}

fn family_states(family: &dyn DegenerateFamily, x: &ParamPoint) -> Result<Vec<Vec<DVector<Complex64>>>> {
    let frame = family.frame(x)?;
    let n = family.grid().n_points;
    let k = family.internal_dim();
    Ok((0..family.rank())
        .map(|a| {
            (0..k)
                .map(|s| DVector::from_fn(n, |j, _| frame[(s * n + j, a)]))
                .collect()
        })
        .collect())
}

/// All cross-Wigner functions of a family at one parameter point.
pub struct WignerMatrixMap {
    pub psg: PhaseSpaceGrid,
    engine: WignerEngine,
}

impl WignerMatrixMap {
    pub fn new(family: &dyn DegenerateFamily, x: &ParamPoint, hbar: f64) -> Result<Self> {
        let psg = PhaseSpaceGrid::new(*family.grid(), hbar)?;
        let gram = family.gram(x)?;
        let defect = (&gram - DMatrix::<Complex64>::identity(family.rank(), family.rank()))
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if defect > 1e-9 {
            return Err(Error::Validation(format!(
                "family is not orthonormal at {x} (Gram defect {defect:.3e})"
            )));
        }
        let states = family_states(family, x)?;
        for comps in &states {
            for c in comps {
                let a = edge_amplitude(c);
                if !(a < EDGE_TOLERANCE) {
                    return Err(Error::GridTooNarrow {
                        amplitude: a,
                        limit: EDGE_TOLERANCE,
                    });
                }
            }
        }
        Ok(Self {
            psg,
            engine: WignerEngine::new(psg, states)?,
        })
    }

    pub fn rank(&self) -> usize {
        self.engine.rank()
    }

    /// `W_ab` on the lattice.
    pub fn entry(&self, a: usize, b: usize) -> DMatrix<Complex64> {
        self.engine.grid_values(a, b)
    }

    pub fn eval(&self, q: f64, p: f64) -> DMatrix<Complex64> {
        self.engine.eval_matrix(q, p)
    }
}

/// `W_ab(q, p)` of a family on the lattice.
pub fn wigner_matrix(
    family: &dyn DegenerateFamily,
    a: usize,
    b: usize,
    x: &ParamPoint,
    hbar: f64,
) -> Result<DMatrix<Complex64>> {
    if a >= family.rank() || b >= family.rank() {
        return Err(Error::Domain(format!("indices ({a}, {b}) exceed rank {}", family.rank())));
    }
    Ok(WignerMatrixMap::new(family, x, hbar)?.entry(a, b))
}

/// `((-1)^n / pi hbar) exp(-2I/hbar) L_n(4I/hbar)`.
pub fn oscillator_radial_value(n: usize, hbar: f64, action: f64) -> f64 {
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign / (PI * hbar) * (-2.0 * action / hbar).exp() * laguerre(n, 4.0 * action / hbar)
}

/// Radial action profile `W(I)`, used as the measure
/// `int W(I) g(I) dI ~ sum_k mu_k g(I_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialWigner {
    /// Closed-form oscillator level.
    Oscillator { level: usize, hbar: f64 },
    /// Values at the nodes of a rule on `[0, I_max]`.
    Sampled {
        hbar: f64,
        actions: Vec<f64>,
        weights: Vec<f64>,
        values: Vec<f64>,
        tail_mass: f64,
    },
    /// `delta(I - I_0) / 2 pi`, the classical-limit surrogate.
    Delta { action: f64, hbar: f64 },
    Mixture { weights: Vec<f64>, parts: Vec<RadialWigner> },
}

/// `W_n(I)` of the oscillator.
pub fn oscillator_radial_wigner(n: usize, hbar: f64) -> Result<RadialWigner> {
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::Domain(format!("hbar must be positive, got {hbar}")));
    }
    Ok(RadialWigner::Oscillator { level: n, hbar })
}

impl RadialWigner {
    pub fn hbar(&self) -> f64 {
        match self {
            RadialWigner::Oscillator { hbar, .. }
            | RadialWigner::Sampled { hbar, .. }
            | RadialWigner::Delta { hbar, .. } => *hbar,
            RadialWigner::Mixture { parts, .. } => parts.first().map(|p| p.hbar()).unwrap_or(1.0),
        }
    }

    /// Pointwise value where defined (not for delta profiles).
    pub fn value(&self, action: f64) -> Option<f64> {
        match self {
            RadialWigner::Oscillator { level, hbar } => Some(oscillator_radial_value(*level, *hbar, action)),
            RadialWigner::Sampled { actions, values, .. } => barycentric(actions, values, action),
            RadialWigner::Delta { .. } => None,
            RadialWigner::Mixture { weights, parts } => {
                let mut acc = 0.0;
                for (w, p) in weights.iter().zip(parts) {
                    acc += w * p.value(action)?;
                }
                Some(acc)
            }
        }
    }

    /// Estimated probability mass outside the support of [`Self::measure`].
    pub fn tail_mass(&self) -> f64 {
        match self {
            RadialWigner::Sampled { tail_mass, .. } => *tail_mass,
            RadialWigner::Mixture { weights, parts } => {
                weights.iter().zip(parts).map(|(w, p)| w * p.tail_mass()).sum()
            }
            _ => 0.0,
        }
    }

    /// Nodes and masses `(I_k, mu_k)`; `order` applies to closed forms.
    pub fn measure(&self, order: usize) -> Result<Vec<(f64, f64)>> {
        let raw = match self {
            RadialWigner::Oscillator { level, hbar } => {
                let rule = QuadratureRule::gauss_laguerre(order, 0.5 * hbar)?;
                rule.pairs()
                    .map(|(i, w)| (i, w * oscillator_radial_value(*level, *hbar, i)))
                    .collect()
            }
            RadialWigner::Sampled {
                actions,
                weights,
                values,
                ..
            } => actions
                .iter()
                .zip(weights)
                .zip(values)
                .map(|((i, w), v)| (*i, w * v))
                .collect(),
            RadialWigner::Delta { action, .. } => vec![(*action, 1.0 / (2.0 * PI))],
            RadialWigner::Mixture { weights, parts } => {
                let mut all = Vec::new();
                for (w, p) in weights.iter().zip(parts) {
                    if *w == 0.0 {
                        continue;
                    }
                    all.extend(p.measure(order)?.into_iter().map(|(i, m)| (i, w * m)));
                }
                all
            }
        };
        Ok(prune(raw))
    }

    /// `int W(I) g(I) dI`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F, order: usize) -> Result<f64> {
        Ok(self.measure(order)?.into_iter().map(|(i, m)| m * g(i)).sum())
    }

    /// `2 pi int W dI`, which is 1 for a normalized state.
    pub fn normalization(&self, order: usize) -> Result<f64> {
        Ok(2.0 * PI * self.integrate(|_| 1.0, order)?)
    }

    /// `2 pi int W(I) f(I) dI`.
    pub fn smeared_average<F: Fn(f64) -> f64>(&self, f: F, order: usize) -> Result<f64> {
        Ok(2.0 * PI * self.integrate(f, order)?)
    }

    pub fn default_order() -> usize {
        DEFAULT_LAGUERRE_ORDER
    }
}

fn prune(raw: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let big = raw.iter().map(|(_, m)| m.abs()).fold(0.0, f64::max);
    raw.into_iter()
        .filter(|(_, m)| m.abs() > PRUNE_RELATIVE * big && m.is_finite())
        .collect()
}

/// Barycentric interpolation through arbitrary distinct nodes.
fn barycentric(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0].min(xs[xs.len() - 1]) || x > xs[0].max(xs[xs.len() - 1]) {
        return None;
    }
    let n = xs.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        if x == xs[j] {
            return Some(ys[j]);
        }
        // log-scaled weights avoid overflow for long node lists
        let mut lw = 0.0;
        let mut sign = 1.0;
        for k in 0..n {
            if k != j {
                let d = xs[j] - xs[k];
                lw -= d.abs().ln();
                if d < 0.0 {
                    sign = -sign;
                }
            }
        }
        let w = sign * (lw).exp() / (x - xs[j]);
        num += w * ys[j];
        den += w;
    }
    Some(num / den)
}

/// Convex combination of radial profiles.
pub fn mixed_radial_wigner(weights: &[f64], profiles: &[RadialWigner]) -> Result<RadialWigner> {
    if weights.len() != profiles.len() || weights.is_empty() {
        return Err(Error::Domain(format!(
            "{} weights for {} profiles",
            weights.len(),
            profiles.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain("mixture weights must be non-negative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("mixture weights sum to {sum}, expected 1")));
    }
    let h = profiles[0].hbar();
    if profiles.iter().any(|p| (p.hbar() - h).abs() > 1e-15 * h) {
        return Err(Error::Domain("mixture profiles use different hbar".into()));
    }
    Ok(RadialWigner::Mixture {
        weights: weights.to_vec(),
        parts: profiles.to_vec(),
    })
}

/// Thermal weights `p_n ~ exp(-beta hbar w (n + 1/2))`, truncated where the
/// geometric tail falls below `tail` and renormalized.
pub fn thermal_weights(beta: f64, hbar: f64, omega: f64, tail: f64) -> Result<Vec<f64>> {
    let x = beta * hbar * omega;
    if !(x.is_finite() && x > 0.0) || !(tail > 0.0 && tail < 1.0) {
        return Err(Error::Domain(format!(
            "thermal weights need beta hbar omega > 0 (got {x}) and 0 < tail < 1"
        )));
    }
    let q = (-x).exp();
    // tail beyond n_max is q^(n_max + 1)
    let n_max = ((tail.ln() / q.ln()).ceil() as usize).saturating_sub(1);
    if n_max > 100_000 {
        return Err(Error::Domain(format!("temperature too high: {n_max} levels needed")));
    }
    let raw: Vec<f64> = (0..=n_max).map(|n| q.powi(n as i32)).collect();
    let s: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / s).collect())
}

/// `beta` giving `<n + 1/2>_beta = (1/2) coth(beta hbar w / 2) = mean`.
pub fn thermal_beta_for_mean(mean: f64, hbar: f64, omega: f64) -> Result<f64> {
    if !(mean > 0.5) {
        return Err(Error::Domain(format!("thermal mean <n + 1/2> must exceed 1/2, got {mean}")));
    }
    Ok(2.0 * (2.0 * mean).recip().atanh() / (hbar * omega))
}

/// Result of a radial reduction.
#[derive(Debug, Clone)]
pub struct RadialReduction {
    pub profile: RadialWigner,
    /// `max_theta |W(q(I, theta), p(I, theta)) - <W>|` over all nodes.
    pub theta_residual: f64,
}

fn torus_points(
    psg: &PhaseSpaceGrid,
    chart: &dyn ActionAngleChart,
    x: &ParamPoint,
    action: f64,
    angles: &QuadratureRule,
) -> Result<Vec<(f64, f64)>> {
    let pts = chart.orbit(action, &angles.nodes, x)?;
    for &(q, p) in &pts {
        if !psg.contains(q, p) {
            return Err(Error::Domain(format!(
                "torus I = {action} reaches ({q:.4}, {p:.4}) outside the phase-space lattice"
            )));
        }
    }
    Ok(pts)
}

/// Torus averages of `W` at each action node: a sampled profile. The
/// tail mass is estimated from the profile at the outermost node assuming
/// decay on the scale `hbar / 2`.
pub fn radial_reduce(
    map: &WignerMap,
    chart: &dyn ActionAngleChart,
    x: &ParamPoint,
    actions: &QuadratureRule,
    angles: &QuadratureRule,
) -> Result<RadialReduction> {
    chart.check_domain(x)?;
    let wsum: f64 = angles.weights.iter().sum();
    let per_node: Vec<Result<(f64, f64)>> = actions
        .nodes
        .par_iter()
        .map(|&i| {
            let pts = torus_points(&map.psg, chart, x, i, angles)?;
            let vals: Vec<f64> = pts.iter().map(|&(q, p)| map.eval(q, p)).collect();
            let mean = vals.iter().zip(&angles.weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
            let resid = vals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            Ok((mean, resid))
        })
        .collect();
    let mut values = Vec::with_capacity(actions.len());
    let mut theta_residual = 0.0f64;
    for r in per_node {
        let (v, e) = r?;
        values.push(v);
        theta_residual = theta_residual.max(e);
    }
    let hbar = map.psg.hbar;
    let tail_mass = tail_estimate(actions, &values, hbar);
    Ok(RadialReduction {
        profile: RadialWigner::Sampled {
            hbar,
            actions: actions.nodes.clone(),
            weights: actions.weights.clone(),
            values,
            tail_mass,
        },
        theta_residual,
    })
}

fn tail_estimate(actions: &QuadratureRule, values: &[f64], hbar: f64) -> f64 {
    let last = actions
        .nodes
        .iter()
        .zip(values)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, v)| v.abs())
        .unwrap_or(0.0);
    2.0 * PI * last * 0.5 * hbar
}

/// Hermitian-matrix radial profile stored as a measure: masses `M_k` with
/// `int W(I) g(I) dI ~ sum_k M_k g(I_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRadialWigner {
    pub hbar: f64,
    pub rank: usize,
    pub actions: Vec<f64>,
    pub masses: Vec<DMatrix<Complex64>>,
    pub tail_mass: f64,
}

impl MatrixRadialWigner {
    /// `diag(W_1, ..., W_N)` from scalar profiles.
    pub fn diagonal(profiles: &[RadialWigner], order: usize) -> Result<Self> {
        let rank = profiles.len();
        if rank == 0 {
            return Err(Error::Domain("at least one profile is required".into()));
        }
        let hbar = profiles[0].hbar();
        let mut actions = Vec::new();
        let mut masses = Vec::new();
        for (a, p) in profiles.iter().enumerate() {
            for (i, m) in p.measure(order)? {
                let mut mat = DMatrix::from_element(rank, rank, ZERO);
                mat[(a, a)] = Complex64::new(m, 0.0);
                actions.push(i);
                masses.push(mat);
            }
        }
        Ok(Self {
            hbar,
            rank,
            actions,
            masses,
            tail_mass: profiles.iter().map(|p| p.tail_mass()).fold(0.0, f64::max),
        })
    }

    /// `U M_k U^dagger` at every node.
    pub fn conjugated(&self, u: &DMatrix<Complex64>) -> Self {
        let mut out = self.clone();
        for m in out.masses.iter_mut() {
            *m = u * &*m * u.adjoint();
        }
        out
    }

    /// `max_k |M_k - M_k^dagger|` relative to the largest mass.
    pub fn hermiticity_defect(&self) -> f64 {
        self.masses
            .iter()
            .map(|m| (m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// `2 pi sum_k M_k`, the identity for an orthonormal family.
    pub fn normalization(&self) -> DMatrix<Complex64> {
        let mut acc = DMatrix::from_element(self.rank, self.rank, ZERO);
        for m in &self.masses {
            acc += m;
        }
        acc * Complex64::new(2.0 * PI, 0.0)
    }
}

/// Matrix counterpart of [`radial_reduce`] for the Wigner matrix of a family.
pub fn radial_reduce_matrix(
    map: &WignerMatrixMap,
    chart: &dyn ActionAngleChart,
    x: &ParamPoint,
    actions: &QuadratureRule,
    angles: &QuadratureRule,
) -> Result<MatrixRadialWigner> {
    chart.check_domain(x)?;
    let rank = map.rank();
    let wsum: f64 = angles.weights.iter().sum();
    let per_node: Vec<Result<DMatrix<Complex64>>> = actions
        .nodes
        .par_iter()
        .map(|&i| {
            let pts = torus_points(&map.psg, chart, x, i, angles)?;
            let mut acc = DMatrix::from_element(rank, rank, ZERO);
            for (&(q, p), w) in pts.iter().zip(&angles.weights) {
                acc += map.eval(q, p) * Complex64::new(*w, 0.0);
            }
            Ok(acc / Complex64::new(wsum, 0.0))
        })
        .collect();
    let mut masses = Vec::with_capacity(actions.len());
    let mut last = 0.0f64;
    for (r, w) in per_node.into_iter().zip(&actions.weights) {
        let v = r?;
        last = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        masses.push(v * Complex64::new(*w, 0.0));
    }
    Ok(MatrixRadialWigner {
        hbar: map.psg.hbar,
        rank,
        actions: actions.nodes.clone(),
        masses,
        tail_mass: 2.0 * PI * last * 0.5 * map.psg.hbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::OscillatorChart;
    use crate::quantum::{analytic_oscillator_state, OscillatorFrameFamily, SmoothGauge, GaugedFamily};

    fn p(x: f64, y: f64, z: f64) -> ParamPoint {
        ParamPoint::from([x, y, z])
    }

    fn osc_map(n: usize, x: &ParamPoint, hbar: f64) -> WignerMap {
        let g = SpatialGrid::for_oscillator(&[x.clone()], n.max(2), hbar).unwrap();
        let psi = analytic_oscillator_state(n, x, hbar, &g).unwrap();
        wigner_transform(&psi, &g, hbar).unwrap()
    }

    #[test]
    fn origin_values() {
        let x = p(1.0, 0.0, 1.0);
        let m0 = osc_map(0, &x, 1.0);
        let j0 = m0.psg.grid.n_points / 2;
        assert!((m0.values[(j0, j0)] - 1.0 / PI).abs() < 1e-6);
        assert!((m0.eval(0.0, 0.0) - 1.0 / PI).abs() < 1e-6);
        let m1 = osc_map(1, &x, 1.0);
        assert!((m1.values[(j0, j0)] + 1.0 / PI).abs() < 1e-6);
    }

    #[test]
    fn normalization_marginal_and_moments() {
        let x = p(1.4, 0.5, 0.9);
        for n in 0..=5 {
            let hbar = 0.8;
            let g = SpatialGrid::for_oscillator(&[x.clone()], 5, hbar).unwrap();
            let psi = analytic_oscillator_state(n, &x, hbar, &g).unwrap();
            let m = wigner_transform(&psi, &g, hbar).unwrap();
            assert!((m.integral() - 1.0).abs() < 1e-8);
            for (j, v) in m.position_marginal().iter().enumerate() {
                assert!((v - psi[j].norm_sqr()).abs() < 1e-8);
            }
            // <q^2>, <p^2>, <(qp + pq)/2> from the covariance of the chart
            let w = (x[0] * x[2] - x[1] * x[1]).sqrt();
            let e = hbar * (n as f64 + 0.5);
            let q2 = e * x[2] / w;
            let p2 = e * x[0] / w;
            let qp = -e * x[1] / w;
            assert!((m.expectation(|q, _| q * q) - q2).abs() < 1e-6);
            assert!((m.expectation(|_, p| p * p) - p2).abs() < 1e-6);
            assert!((m.expectation(|q, p| q * p) - qp).abs() < 1e-6);
        }
    }

    #[test]
    fn off_lattice_evaluation_matches_closed_form() {
        let x = p(2.0, 1.0, 1.0);
        let m = osc_map(2, &x, 1.0);
        let chart = OscillatorChart;
        for &(i, t) in &[(0.3, 0.1), (1.7, 2.0), (2.5, 4.4)] {
            let (q, pp) = chart.to_phase(i, t, &x).unwrap();
            let want = oscillator_radial_value(2, 1.0, i);
            assert!((m.eval(q, pp) - want).abs() < 1e-9, "{i}");
        }
    }

    #[test]
    fn radial_profile_moments() {
        for hbar in [0.5, 1.0, 2.0] {
            for n in 0..=10 {
                let w = oscillator_radial_wigner(n, hbar).unwrap();
                let norm = w.normalization(64).unwrap();
                assert!((norm - 1.0).abs() < 1e-10);
                let m1 = w.integrate(|i| i, 64).unwrap();
                assert!((m1 - hbar * (n as f64 + 0.5) / (2.0 * PI)).abs() < 1e-10);
            }
        }
        let w0 = oscillator_radial_wigner(0, 1.0).unwrap();
        assert!((w0.integrate(|i| i, 64).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn radial_reduce_oscillator() {
        let x = p(1.0, 0.0, 1.0);
        let m = osc_map(0, &x, 1.0);
        let rule = QuadratureRule::gauss_legendre(24, 0.0, 10.0).unwrap();
        let angles = QuadratureRule::periodic(32).unwrap();
        let red = radial_reduce(&m, &OscillatorChart, &x, &rule, &angles).unwrap();
        assert!(red.theta_residual < 1e-4);
        let v = red.profile.value(0.5).unwrap();
        assert!((v - (-1f64).exp() / PI).abs() < 1e-4, "{v}");
        assert!(red.profile.value(8.0).unwrap().abs() < 1e-6);
        assert!((red.profile.normalization(0).unwrap() - 1.0).abs() < 1e-6);
        let far = QuadratureRule::gauss_legendre(4, 0.0, 400.0).unwrap();
        assert!(matches!(
            radial_reduce(&m, &OscillatorChart, &x, &far, &angles),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mixtures() {
        let p0 = oscillator_radial_wigner(0, 1.0).unwrap();
        let p1 = oscillator_radial_wigner(1, 1.0).unwrap();
        let single = mixed_radial_wigner(&[1.0], &[p0.clone()]).unwrap();
        assert_eq!(single.measure(64).unwrap(), p0.measure(64).unwrap());
        let half = mixed_radial_wigner(&[0.5, 0.5], &[p0.clone(), p1]).unwrap();
        assert!((half.integrate(|i| i, 64).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-12);
        assert!(mixed_radial_wigner(&[0.5, 0.4], &[p0.clone(), p0.clone()]).is_err());
        assert!(mixed_radial_wigner(&[1.5, -0.5], &[p0.clone(), p0]).is_err());
    }

    #[test]
    fn thermal_mixture_moment() {
        let (hbar, w) = (1.0, 1.3);
        let beta = 0.7;
        let ws = thermal_weights(beta, hbar, w, 1e-12).unwrap();
        let parts: Vec<_> = (0..ws.len()).map(|n| oscillator_radial_wigner(n, hbar).unwrap()).collect();
        let mix = mixed_radial_wigner(&ws, &parts).unwrap();
        let want = hbar * 0.5 / (beta * hbar * w / 2.0).tanh() / (2.0 * PI);
        assert!((mix.integrate(|i| i, 64).unwrap() - want).abs() < 1e-8);
        let b = thermal_beta_for_mean(1.0, 1.0, 1.0).unwrap();
        assert!((0.5 / (b / 2.0).tanh() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn classical_limit_concentration() {
        let i0 = 1.0;
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16, 32] {
            let hbar = i0 / (n as f64 + 0.5);
            let w = oscillator_radial_wigner(n, hbar).unwrap();
            let avg = w.smeared_average(|i| i * i, 64).unwrap();
            let err = (avg - i0 * i0).abs() / (i0 * i0);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev <= 0.02, "{prev}");
    }

    #[test]
    fn wigner_matrix_properties() {
        let x = p(1.2, 0.3, 0.9);
        let g = SpatialGrid::for_oscillator(&[x.clone()], 2, 1.0).unwrap();
        let fam = OscillatorFrameFamily::constant_frame(1, 1.0, g, 2).unwrap();
        let gauge = SmoothGauge::random(2, 3, 0.4, 3);
        let gauged = GaugedFamily {
            inner: &fam,
            gauge: Arc::new(move |x| gauge.at(x)),
        };
        let map = WignerMatrixMap::new(&gauged, &x, 1.0).unwrap();
        let w01 = map.entry(0, 1);
        let w10 = map.entry(1, 0);
        let defect = w01.iter().zip(w10.iter()).map(|(a, b)| (a - b.conj()).norm()).fold(0.0, f64::max);
        assert!(defect < 1e-10);
        let cell = map.psg.cell();
        let off: Complex64 = w01.iter().sum::<Complex64>() * cell;
        assert!(off.norm() < 1e-8);
        let diag: Complex64 = map.entry(0, 0).iter().sum::<Complex64>() * cell;
        assert!((diag - 1.0).norm() < 1e-8);
        // a = b collapses to the scalar transform of that state
        let plain = wigner_matrix(&fam, 0, 0, &x, 1.0).unwrap();
        let psi = analytic_oscillator_state(1, &x, 1.0, &g).unwrap();
        let scalar = wigner_transform(&psi, &g, 1.0).unwrap();
        let d = plain.iter().zip(scalar.values.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn aliasing_is_detected() {
        // chirp far beyond the momentum cutoff of the grid
        let g = SpatialGrid::centered(0.0, 12.0, 128).unwrap();
        let psi = DVector::from_fn(128, |j, _| {
            let q = g.point(j);
            Complex64::from_polar(PI.powf(-0.25) * (-q * q / 2.0).exp(), 5.0 * q * q)
        });
        let norm = g.norm(&psi);
        let psi = psi / Complex64::new(norm, 0.0);
        assert!(matches!(wigner_transform(&psi, &g, 1.0), Err(Error::Aliasing(_))));
    }
}
