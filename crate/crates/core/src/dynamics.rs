//! Direct time evolution around a circuit: Crank-Nicolson transport of a
//! quantum eigenstate and Hamiltonian flow of classical tori, each with
//! the geometric part of the accumulated phase or angle extracted.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use ode_solvers::{Dopri5, OutputType, System, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{oscillator_frequency, ActionAngleChart};
use crate::error::{Error, Result};
use crate::geometry::{Circuit, ParamPoint};
use crate::quantum::{eigenstates, wrap_phase, Backend, OscillatorSystem, QuantumSystem, SpatialGrid};

/// Default number of instantaneous eigenvectors spanning the propagation
/// subspace.
pub const DEFAULT_SUBSPACE: usize = 160;
/// Largest admissible leakage out of the transported level.
pub const MAX_LEAKAGE: f64 = 0.01;
/// Largest admissible relative action drift of a classical trajectory.
pub const MAX_ACTION_DRIFT: f64 = 0.05;

/// Time reparameterization `s(tau)` of the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleProfile {
    Linear,
    /// `s = tau - sin(2 pi tau) / (2 pi)`, flat at both ends.
    #[default]
    Smooth,
}

impl ScheduleProfile {
    pub fn s(&self, tau: f64) -> f64 {
        match self {
            ScheduleProfile::Linear => tau,
            ScheduleProfile::Smooth => tau - (2.0 * PI * tau).sin() / (2.0 * PI),
        }
    }

    pub fn ds(&self, tau: f64) -> f64 {
        match self {
            ScheduleProfile::Linear => 1.0,
            ScheduleProfile::Smooth => 1.0 - (2.0 * PI * tau).cos(),
        }
    }
}

/// Traversal of a circuit in time `[0, T]` with a fixed step count.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub circuit: Circuit,
    pub total_time: f64,
    pub time_steps: usize,
    pub profile: ScheduleProfile,
}

impl Schedule {
    pub fn new(circuit: Circuit, total_time: f64, time_steps: usize, profile: ScheduleProfile) -> Result<Self> {
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::Domain(format!("total time must be positive, got {total_time}")));
        }
        if time_steps == 0 {
            return Err(Error::Domain("at least one time step is required".into()));
        }
        Ok(Self {
            circuit,
            total_time,
            time_steps,
            profile,
        })
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.time_steps as f64
    }

    pub fn position(&self, t: f64) -> ParamPoint {
        let tau = (t / self.total_time).clamp(0.0, 1.0);
        self.circuit.at(self.profile.s(tau))
    }

    /// `|dX/dt|` at time `t`.
    pub fn speed(&self, t: f64) -> f64 {
        let tau = (t / self.total_time).clamp(0.0, 1.0);
        let s = self.profile.s(tau);
        let h = 1e-6;
        let (a, b) = if s < h {
            (s, s + h)
        } else if s > 1.0 - h {
            (s - h, s)
        } else {
            (s - h / 2.0, s + h / 2.0)
        };
        let dxds = self.circuit.at(b).distance(&self.circuit.at(a)) / (b - a);
        dxds * self.profile.ds(tau) / self.total_time
    }

    /// Largest `|dX/dt|` over the step midpoints.
    pub fn max_speed(&self) -> f64 {
        let n = self.time_steps.max(512);
        let dt = self.total_time / n as f64;
        (0..n).map(|k| self.speed((k as f64 + 0.5) * dt)).fold(0.0, f64::max)
    }

    /// The same schedule around the reversed circuit.
    pub fn reversed(&self) -> Schedule {
        Schedule {
            circuit: self.circuit.reversed(),
            ..self.clone()
        }
    }

    /// Same circuit and profile with a new duration and step count.
    pub fn with_time(&self, total_time: f64, time_steps: usize) -> Result<Schedule> {
        Schedule::new(self.circuit.clone(), total_time, time_steps, self.profile)
    }
}

/// How `(1/hbar) int E_n dt` is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicalPhaseRule {
    /// `sum 2 atan(E_n dt / 2 hbar)` at step midpoints, the phase the
    /// Crank-Nicolson step gives an instantaneous eigenvector.
    #[default]
    SchemeConsistent,
    /// Trapezoid rule on `E_n(X(t_k))`.
    Trapezoid,
}

/// Settings of [`evolve_quantum_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumOptions {
    /// Number of grid eigenvectors at `X(0)` spanning the propagation space;
    /// 0 uses the whole grid.
    pub subspace: usize,
    pub phase_rule: DynamicalPhaseRule,
    pub max_leakage: f64,
    /// Largest admissible weight in the top quarter of the subspace.
    pub band_tolerance: f64,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        Self {
            subspace: DEFAULT_SUBSPACE,
            phase_rule: DynamicalPhaseRule::default(),
            max_leakage: MAX_LEAKAGE,
            band_tolerance: 1e-8,
        }
    }
}

/// Result of transporting one eigenstate around a circuit.
#[derive(Debug, Clone)]
pub struct QuantumEvolution {
    pub level: usize,
    /// `psi(T)` on the grid.
    pub final_state: DVector<Complex64>,
    /// `<psi(0)|psi(T)>`.
    pub overlap: Complex64,
    /// `(1/hbar) int E_n dt`.
    pub dynamical_phase: f64,
    /// `arg <psi(0)|psi(T)> + (1/hbar) int E_n dt`, reduced to `(-pi, pi]`.
    pub gamma_extracted: f64,
    pub leakage: f64,
    pub norm_defect: f64,
    pub band_weight: f64,
    pub min_gap: f64,
    /// `max |dX/dt|` over the smallest gap frequency.
    pub slowness: f64,
}

fn cmat(m: &DMatrix<Complex64>, s: f64) -> DMatrix<Complex64> {
    m * Complex64::new(s, 0.0)
}

struct Propagator<'a> {
    system: &'a dyn QuantumSystem,
    basis: DMatrix<Complex64>,
    parts: Option<Vec<DMatrix<Complex64>>>,
    hbar: f64,
    grid: SpatialGrid,
}

impl Propagator<'_> {
    fn projected(&self, x: &ParamPoint) -> Result<DMatrix<Complex64>> {
        match &self.parts {
            Some(parts) => {
                let mut h = cmat(&parts[0], x[0]);
                for (k, p) in parts.iter().enumerate().skip(1) {
                    h += cmat(p, x[k]);
                }
                Ok(h)
            }
            None => {
                let h = self.system.hamiltonian(x, self.hbar, &self.grid)?;
                Ok(self.basis.adjoint() * h * &self.basis)
            }
        }
    }
}

fn sorted_eigenvalues(h: DMatrix<Complex64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn level_gap(e: &[f64], n: usize) -> f64 {
    let up = e.get(n + 1).map(|u| u - e[n]).unwrap_or(f64::INFINITY);
    let down = if n > 0 { e[n] - e[n - 1] } else { f64::INFINITY };
    up.min(down)
}

/// [`evolve_quantum_with`] under default options.
pub fn evolve_quantum(
    backend: Backend<'_>,
    n: usize,
    schedule: &Schedule,
    grid: &SpatialGrid,
    hbar: f64,
) -> Result<QuantumEvolution> {
    evolve_quantum_with(backend, n, schedule, grid, hbar, &QuantumOptions::default())
}

/// Propagate eigenstate `n` of `X(0)` with `i hbar dpsi/dt = H(X(t)) psi`
/// by Crank-Nicolson steps with `H` frozen at the step midpoint. The
/// propagation space is spanned by the lowest grid eigenvectors at `X(0)`.
pub fn evolve_quantum_with(
    backend: Backend<'_>,
    n: usize,
    schedule: &Schedule,
    grid: &SpatialGrid,
    hbar: f64,
    opts: &QuantumOptions,
) -> Result<QuantumEvolution> {
    let system: &dyn QuantumSystem = match backend {
        Backend::AnalyticOscillator => &OscillatorSystem,
        Backend::Grid(s) => s,
    };
    let steps = schedule.time_steps;
    let dt = schedule.dt();
    for k in 0..=2 * steps {
        system.check_domain(&schedule.position(k as f64 * dt / 2.0))?;
    }
    let big_n = grid.n_points;
    let k_dim = if opts.subspace == 0 { big_n } else { opts.subspace.min(big_n) };
    if k_dim < n + 2 {
        return Err(Error::Domain(format!(
            "subspace of {k_dim} states cannot hold level {n} and its neighbour"
        )));
    }
    let x0 = schedule.position(0.0);
    let eig = SymmetricEigen::new(system.hamiltonian(&x0, hbar, grid)?);
    let mut order: Vec<usize> = (0..big_n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let basis = DMatrix::from_fn(big_n, k_dim, |j, c| eig.eigenvectors[(j, order[c])]);

    let sqrt_h = grid.spacing().sqrt();
    let psi0 = eigenstates(backend, &x0, hbar, grid, n + 1)?.states.swap_remove(n);
    let mut c0 = basis.adjoint() * &psi0 * Complex64::new(sqrt_h, 0.0);
    let captured = c0.norm_squared();
    if (1.0 - captured).abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "initial state has weight {:.3e} outside the propagation subspace",
            1.0 - captured
        )));
    }
    c0 /= Complex64::new(c0.norm(), 0.0);

    let parts = match system.linear_parts(hbar, grid) {
        Some(p) => Some(
            p?.iter()
                .map(|m| basis.adjoint() * m * &basis)
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    let prop = Propagator {
        system,
        basis,
        parts,
        hbar,
        grid: *grid,
    };

    let analytic = matches!(backend, Backend::AnalyticOscillator);
    let energy_and_gap = |x: &ParamPoint, h: Option<&DMatrix<Complex64>>| -> Result<(f64, f64)> {
        if analytic {
            let w = oscillator_frequency(x)?;
            return Ok((hbar * w * (n as f64 + 0.5), hbar * w));
        }
        let e = match h {
            Some(h) => sorted_eigenvalues(h.clone()),
            None => sorted_eigenvalues(prop.projected(x)?),
        };
        Ok((e[n], level_gap(&e, n)))
    };

    let tau = dt / (2.0 * hbar);
    let band_start = k_dim - k_dim / 4;
    let mut c = c0.clone();
    let mut dynamical = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut band = 0.0f64;
    let ident = DMatrix::<Complex64>::identity(k_dim, k_dim);
    let mut prev_energy = None;
    for step in 0..steps {
        let xm = schedule.position((step as f64 + 0.5) * dt);
        let h = prop.projected(&xm)?;
        let (em, gap) = energy_and_gap(&xm, Some(&h))?;
        min_gap = min_gap.min(gap);
        match opts.phase_rule {
            DynamicalPhaseRule::SchemeConsistent => dynamical += 2.0 * (em * tau).atan(),
            DynamicalPhaseRule::Trapezoid => {
                let e0 = match prev_energy {
                    Some(e) => e,
                    None => energy_and_gap(&schedule.position(step as f64 * dt), None)?.0,
                };
                let e1 = energy_and_gap(&schedule.position((step + 1) as f64 * dt), None)?.0;
                dynamical += 0.5 * (e0 + e1) * dt / hbar;
                prev_energy = Some(e1);
            }
        }
        let a = &ident + cmat(&h, tau) * Complex64::i();
        let b = &ident - cmat(&h, tau) * Complex64::i();
        let rhs = b * &c;
        c = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical(format!("singular Crank-Nicolson system at step {step}")))?;
        if k_dim < big_n {
            band = band.max(c.rows(band_start, k_dim - band_start).norm_squared());
        }
    }
    if band > opts.band_tolerance {
        return Err(Error::Numerical(format!(
            "weight {band:.3e} reached the top of the {k_dim}-state propagation subspace"
        )));
    }
    let overlap = c0.dotc(&c);
    let leakage = (1.0 - overlap.norm_sqr()).max(0.0);
    let norm_defect = (c.norm() - 1.0).abs();
    let gamma = wrap_phase(overlap.arg() + dynamical);
    let slowness = schedule.max_speed() / (min_gap / hbar);
    if leakage > opts.max_leakage {
        return Err(Error::Adiabaticity(format!(
            "leakage {leakage:.3e} out of level {n} exceeds {:.0e} (slowness {slowness:.3e}); increase the total time",
            opts.max_leakage
        )));
    }
    let final_state = &prop.basis * &c / Complex64::new(sqrt_h, 0.0);
    Ok(QuantumEvolution {
        level: n,
        final_state,
        overlap,
        dynamical_phase: dynamical,
        gamma_extracted: gamma,
        leakage,
        norm_defect,
        band_weight: band,
        min_gap,
        slowness,
    })
}

/// One row of an adiabatic convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub total_time: f64,
    pub time_steps: usize,
    pub leakage: f64,
    pub gamma_extracted: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln |error|` against `ln T`.
    pub slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Repeat [`evolve_quantum_with`] at `T = factor * T0` with the step size
/// held fixed, measuring the error against `reference`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_table(
    backend: Backend<'_>,
    n: usize,
    base: &Schedule,
    factors: &[f64],
    grid: &SpatialGrid,
    hbar: f64,
    reference: f64,
    opts: &QuantumOptions,
) -> Result<ConvergenceTable> {
    let mut rows = Vec::with_capacity(factors.len());
    for &f in factors {
        let steps = ((base.time_steps as f64) * f).round().max(1.0) as usize;
        let s = base.with_time(base.total_time * f, steps)?;
        let ev = evolve_quantum_with(backend, n, &s, grid, hbar, opts)?;
        rows.push(ConvergenceRow {
            total_time: s.total_time,
            time_steps: steps,
            leakage: ev.leakage,
            gamma_extracted: ev.gamma_extracted,
            error: wrap_phase(ev.gamma_extracted - reference).abs(),
        });
    }
    let slope = if rows.len() >= 2 {
        let t: Vec<f64> = rows.iter().map(|r| r.total_time).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.error).collect();
        log_log_slope(&t, &e)
    } else {
        f64::NAN
    };
    Ok(ConvergenceTable { rows, slope })
}

/// Settings of [`evolve_classical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_action_drift: f64,
    /// Number of accepted steps at which the action is monitored.
    pub monitor_samples: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_action_drift: MAX_ACTION_DRIFT,
            monitor_samples: 64,
        }
    }
}

/// Classical transport of an ensemble of points on one torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEvolution {
    pub action: f64,
    /// Circular mean of the member angle shifts, in `(-pi, pi]`.
    pub delta_theta: f64,
    pub member_shifts: Vec<f64>,
    /// `int omega(I0; X(t)) dt`, shared by all members.
    pub dynamical_angle: f64,
    /// Largest `|I(T) - I0| / I0` over the ensemble.
    pub action_drift: f64,
    /// Largest `|I(t) - I0| / I0` over the monitored samples.
    pub max_action_excursion: f64,
    pub final_points: Vec<(f64, f64)>,
}

struct HamiltonFlow<'a> {
    chart: &'a dyn ActionAngleChart,
    schedule: &'a Schedule,
    action: f64,
}

impl System<f64, Vector3<f64>> for HamiltonFlow<'_> {
    fn system(&self, t: f64, y: &Vector3<f64>, dy: &mut Vector3<f64>) {
        let x = self.schedule.position(t);
        let (hq, hp) = self.chart.hamiltonian_gradient(y[0], y[1], &x);
        dy[0] = hp;
        dy[1] = -hq;
        dy[2] = self.chart.frequency(self.action, &x).unwrap_or(f64::NAN);
    }
}

/// `count` equally spaced initial angles.
pub fn ensemble_angles(count: usize) -> Vec<f64> {
    (0..count).map(|k| 2.0 * PI * k as f64 / count as f64).collect()
}

/// Integrate Hamilton's equations from `chart(I0, theta0; X(0))` for each
/// initial angle and extract `theta(T) - theta0 - int omega dt`.
pub fn evolve_classical(
    chart: &dyn ActionAngleChart,
    action: f64,
    angles: &[f64],
    schedule: &Schedule,
    opts: &TrajectoryOptions,
) -> Result<ClassicalEvolution> {
    if angles.is_empty() {
        return Err(Error::Domain("empty ensemble of initial angles".into()));
    }
    chart.check_action(action)?;
    if action <= 0.0 {
        return Err(Error::Domain("action must be positive for transport".into()));
    }
    let checks = schedule.time_steps.max(256);
    for k in 0..=checks {
        chart.check_domain(&schedule.position(schedule.total_time * k as f64 / checks as f64))?;
    }
    let x0 = schedule.position(0.0);
    let xt = schedule.position(schedule.total_time);
    let runs: Vec<Result<(f64, f64, f64, f64, (f64, f64))>> = angles
        .par_iter()
        .map(|&theta0| {
            let (q0, p0) = chart.to_phase(action, theta0, &x0)?;
            let flow = HamiltonFlow {
                chart,
                schedule,
                action,
            };
            let mut solver = Dopri5::new(
                flow,
                0.0,
                schedule.total_time,
                0.0,
                Vector3::new(q0, p0, 0.0),
                opts.rtol,
                opts.atol,
            );
            solver.set_output(OutputType::Sparse);
            solver
                .integrate()
                .map_err(|e| Error::Numerical(format!("trajectory integration failed: {e}")))?;
            let (ts, ys) = solver.results().get();
            let stride = (ts.len() / opts.monitor_samples.max(1)).max(1);
            let mut excursion = 0.0f64;
            for (t, y) in ts.iter().zip(ys).step_by(stride) {
                let (i, _) = chart.from_phase(y[0], y[1], &schedule.position(*t))?;
                excursion = excursion.max((i - action).abs() / action);
            }
            if ts.last().map_or(true, |t| (t - schedule.total_time).abs() > 1e-9 * schedule.total_time) {
                return Err(Error::Numerical("trajectory stopped before the final time".into()));
            }
            let last = ys
                .last()
                .ok_or_else(|| Error::Numerical("trajectory produced no output".into()))?;
            if !last.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical("trajectory left the finite range".into()));
            }
            let (it, thetat) = chart.from_phase(last[0], last[1], &xt)?;
            let shift = wrap_phase(thetat - theta0 - last[2]);
            Ok((shift, last[2], (it - action).abs() / action, excursion, (last[0], last[1])))
        })
        .collect();
    let mut shifts = Vec::with_capacity(angles.len());
    let mut points = Vec::with_capacity(angles.len());
    let mut dyn_angle = 0.0;
    let mut drift = 0.0f64;
    let mut excursion = 0.0f64;
    for r in runs {
        let (s, d, a, e, p) = r?;
        shifts.push(s);
        points.push(p);
        dyn_angle += d / angles.len() as f64;
        drift = drift.max(a);
        excursion = excursion.max(e);
    }
    if drift > opts.max_action_drift {
        return Err(Error::Adiabaticity(format!(
            "relative action drift {drift:.3e} exceeds {:.2}; increase the total time",
            opts.max_action_drift
        )));
    }
    let mean: Complex64 = shifts.iter().map(|&s| Complex64::from_polar(1.0, s)).sum();
    Ok(ClassicalEvolution {
        action,
        delta_theta: wrap_phase(mean.arg()),
        member_shifts: shifts,
        dynamical_angle: dyn_angle,
        action_drift: drift,
        max_action_excursion: excursion,
        final_points: points,
    })
}

/// Phase of `Tr[U(T) rho]` for `rho` diagonal in the eigenbasis at `X(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedEvolution {
    pub weights: Vec<f64>,
    /// `arg sum_n p_n <n|U(T)|n>`.
    pub total: f64,
    /// The same with each level's dynamical factor removed.
    pub geometric: f64,
    pub gammas: Vec<f64>,
    pub leakages: Vec<f64>,
}

/// Assemble `Tr[U(T) rho] = sum_n p_n <n|psi_n(T)>` from per-level runs.
pub fn mixed_phase_numeric(
    backend: Backend<'_>,
    weights: &[f64],
    schedule: &Schedule,
    grid: &SpatialGrid,
    hbar: f64,
    opts: &QuantumOptions,
) -> Result<MixedEvolution> {
    if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain("weights must be non-negative and non-empty".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!(
            "weights sum to {total}; truncated tail exceeds 1e-10"
        )));
    }
    let runs: Vec<Result<QuantumEvolution>> = (0..weights.len())
        .into_par_iter()
        .map(|n| evolve_quantum_with(backend, n, schedule, grid, hbar, opts))
        .collect();
    let mut raw = Complex64::new(0.0, 0.0);
    let mut geo = Complex64::new(0.0, 0.0);
    let mut gammas = Vec::with_capacity(weights.len());
    let mut leakages = Vec::with_capacity(weights.len());
    for (w, r) in weights.iter().zip(runs) {
        let ev = r?;
        raw += ev.overlap * *w;
        geo += ev.overlap * Complex64::from_polar(*w, ev.dynamical_phase);
        gammas.push(ev.gamma_extracted);
        leakages.push(ev.leakage);
    }
    Ok(MixedEvolution {
        weights: weights.to_vec(),
        total: raw.arg(),
        geometric: geo.arg(),
        gammas,
        leakages,
    })
}

/// `(1/hbar) int E(X(t)) dt` by the trapezoid rule on the schedule's steps.
pub fn integrated_energy<F>(energy: F, schedule: &Schedule, hbar: f64) -> Result<f64>
where
    F: Fn(&ParamPoint) -> Result<f64>,
{
    let dt = schedule.dt();
    let mut acc = 0.0;
    for k in 0..=schedule.time_steps {
        let w = if k == 0 || k == schedule.time_steps { 0.5 } else { 1.0 };
        acc += w * energy(&schedule.position(k as f64 * dt))?;
    }
    Ok(acc * dt / hbar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::OscillatorChart;
    use crate::geometry::make_cap_circuit;

    fn cap_grid(r: f64, n_max: usize) -> SpatialGrid {
        let c = make_cap_circuit(1.0, r, 64).unwrap();
        SpatialGrid::for_oscillator(&c.sample_points(), n_max, 1.0).unwrap()
    }

    #[test]
    fn smooth_profile_endpoints() {
        let p = ScheduleProfile::Smooth;
        assert_eq!(p.s(0.0), 0.0);
        assert!((p.s(1.0) - 1.0).abs() < 1e-15);
        assert!(p.ds(0.0).abs() < 1e-15 && p.ds(1.0).abs() < 1e-15);
        assert!((p.s(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_circuit_has_no_phase() {
        let c = make_cap_circuit(1.0, 0.0, 16).unwrap();
        let s = Schedule::new(c, 5.0, 50, ScheduleProfile::Smooth).unwrap();
        let grid = cap_grid(0.0, 1);
        let ev = evolve_quantum(Backend::AnalyticOscillator, 0, &s, &grid, 1.0).unwrap();
        assert!(ev.gamma_extracted.abs() < 1e-8, "{}", ev.gamma_extracted);
        assert!(ev.norm_defect < 1e-10);
        let cl = evolve_classical(&OscillatorChart, 1.0, &ensemble_angles(4), &s, &Default::default()).unwrap();
        assert!(cl.delta_theta.abs() < 1e-6, "{}", cl.delta_theta);
    }

    #[test]
    fn quantum_transport_on_cap() {
        let c = make_cap_circuit(1.0, 1.0, 64).unwrap();
        let s = Schedule::new(c, 640.0, 3200, ScheduleProfile::Smooth).unwrap();
        let grid = cap_grid(1.0, 1);
        let want = -PI * (1f64.cosh() - 1.0) / 2.0;
        let ev = evolve_quantum(Backend::AnalyticOscillator, 0, &s, &grid, 1.0).unwrap();
        assert!(ev.leakage < 1e-3, "{}", ev.leakage);
        assert!(ev.norm_defect < 1e-8);
        assert!((ev.gamma_extracted - want).abs() < 1e-2, "{} vs {want}", ev.gamma_extracted);
        let back = evolve_quantum(Backend::AnalyticOscillator, 0, &s.reversed(), &grid, 1.0).unwrap();
        assert!((back.gamma_extracted + want).abs() < 1e-2, "{}", back.gamma_extracted);
    }

    #[test]
    fn fast_schedule_is_rejected() {
        let c = make_cap_circuit(1.0, 1.0, 64).unwrap();
        let s = Schedule::new(c, 0.5, 50, ScheduleProfile::Smooth).unwrap();
        let grid = cap_grid(1.0, 1);
        let r = evolve_quantum(Backend::AnalyticOscillator, 0, &s, &grid, 1.0);
        assert!(matches!(r, Err(Error::Adiabaticity(_))), "{r:?}");
    }

    #[test]
    fn classical_transport_on_cap() {
        let c = make_cap_circuit(1.0, 1.0, 64).unwrap();
        let s = Schedule::new(c, 1000.0, 1000, ScheduleProfile::Smooth).unwrap();
        let ev = evolve_classical(&OscillatorChart, 1.0, &ensemble_angles(16), &s, &Default::default()).unwrap();
        let want = PI * (1f64.cosh() - 1.0);
        assert!((ev.delta_theta - want).abs() < 2e-2, "{} vs {want}", ev.delta_theta);
        assert!(ev.action_drift < 0.01);
        assert!((ev.dynamical_angle - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0];
        let y = [3.0, 1.5, 0.75];
        assert!((log_log_slope(&x, &y) + 1.0).abs() < 1e-12);
    }
}
