//! Action-angle charts for integrable one-degree-of-freedom Hamiltonians,
//! torus averages, the classical two-form `<d_X p ^ d_X q>` and the Hannay
//! angle.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{surface_integral, ParamPoint, Surface, TwoForm, TwoFormField};
use crate::specfun::{QuadratureRule, DEFAULT_PERIODIC_ORDER};

/// Default relative parameter step for two-form differencing.
pub const DEFAULT_PARAM_STEP: f64 = 1e-4;
/// Default action step for the Hannay derivative.
pub const DEFAULT_ACTION_STEP: f64 = 1e-4;

/// Smooth, `X`-dependent map from action-angle variables to `(q, p)`.
pub trait ActionAngleChart: Send + Sync {
    fn param_dim(&self) -> usize;

    /// `Ok(())` when `x` lies in the region where the chart exists.
    fn check_domain(&self, x: &ParamPoint) -> Result<()>;

    fn hamiltonian(&self, q: f64, p: f64, x: &ParamPoint) -> f64;

    /// `(dH/dq, dH/dp)` at fixed parameters.
    fn hamiltonian_gradient(&self, q: f64, p: f64, x: &ParamPoint) -> (f64, f64);

    fn to_phase(&self, action: f64, angle: f64, x: &ParamPoint) -> Result<(f64, f64)>;

    /// Points of the torus `action` at each angle. Charts with expensive
    /// per-torus setup override this.
    fn orbit(&self, action: f64, angles: &[f64], x: &ParamPoint) -> Result<Vec<(f64, f64)>> {
        angles.iter().map(|&t| self.to_phase(action, t, x)).collect()
    }

    /// Inverse map, returning `(I, theta)` with `theta` in `[0, 2 pi)`.
    fn from_phase(&self, q: f64, p: f64, x: &ParamPoint) -> Result<(f64, f64)>;

    fn frequency(&self, action: f64, x: &ParamPoint) -> Result<f64>;

    /// Closed interval of admissible actions.
    fn valid_actions(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn check_action(&self, action: f64) -> Result<()> {
        let (lo, hi) = self.valid_actions();
        if !(action.is_finite() && action >= lo && action <= hi) {
            return Err(Error::Domain(format!(
                "action {action} outside [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

fn wrap_angle(t: f64) -> f64 {
    let r = t.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Frequency `sqrt(XZ - Y^2)` of the generalized oscillator, with its domain
/// check (`XZ > Y^2`, `Z > 0`).
pub fn oscillator_frequency(x: &ParamPoint) -> Result<f64> {
    if x.dim() != 3 {
        return Err(Error::Domain(format!(
            "oscillator parameters are (X, Y, Z), got dimension {}",
            x.dim()
        )));
    }
    let disc = x[0] * x[2] - x[1] * x[1];
    if !(disc > 0.0) || !(x[2] > 0.0) {
        return Err(Error::Domain(format!(
            "oscillator needs XZ - Y^2 > 0 and Z > 0 at {x} (XZ - Y^2 = {disc})"
        )));
    }
    Ok(disc.sqrt())
}

/// Chart of `H = (X q^2 + 2 Y q p + Z p^2) / 2`.
///
/// `theta = 0` sits at `q = 0` with `p + Y q / Z` maximal:
/// `q = sqrt(2IZ/w) sin(theta)`, `p = sqrt(2Iw/Z) cos(theta) - (Y/Z) q`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OscillatorChart;

impl ActionAngleChart for OscillatorChart {
    fn param_dim(&self) -> usize {
        3
    }

    fn check_domain(&self, x: &ParamPoint) -> Result<()> {
        oscillator_frequency(x).map(|_| ())
    }

    fn hamiltonian(&self, q: f64, p: f64, x: &ParamPoint) -> f64 {
        0.5 * (x[0] * q * q + 2.0 * x[1] * q * p + x[2] * p * p)
    }

    fn hamiltonian_gradient(&self, q: f64, p: f64, x: &ParamPoint) -> (f64, f64) {
        (x[0] * q + x[1] * p, x[1] * q + x[2] * p)
    }

    fn to_phase(&self, action: f64, angle: f64, x: &ParamPoint) -> Result<(f64, f64)> {
        self.check_action(action)?;
        let w = oscillator_frequency(x)?;
        let z = x[2];
        let q = (2.0 * action * z / w).sqrt() * angle.sin();
        let p = (2.0 * action * w / z).sqrt() * angle.cos() - x[1] / z * q;
        Ok((q, p))
    }

    fn from_phase(&self, q: f64, p: f64, x: &ParamPoint) -> Result<(f64, f64)> {
        let w = oscillator_frequency(x)?;
        let z = x[2];
        let pt = p + x[1] * q / z;
        let action = 0.5 * (z * pt * pt + w * w / z * q * q) / w;
        let angle = wrap_angle((q * (w / z).sqrt()).atan2(pt * (z / w).sqrt()));
        Ok((action, angle))
    }

    fn frequency(&self, _action: f64, x: &ParamPoint) -> Result<f64> {
        oscillator_frequency(x)
    }
}

/// Closed form `-(I / 4 w^3) (X dY^dZ + Y dZ^dX + Z dX^dY)` of the
/// oscillator's classical two-form.
pub fn oscillator_two_form_exact(action: f64, x: &ParamPoint) -> Result<TwoForm> {
    let w = oscillator_frequency(x)?;
    Ok(TwoForm::from_vector3([x[0], x[1], x[2]]).scaled(-action / (4.0 * w.powi(3))))
}

/// Settings shared by the two-form and Hannay computations.
#[derive(Debug, Clone)]
pub struct ClassicalOptions {
    /// Relative parameter step; the absolute step is `param_step * |X|`.
    pub param_step: f64,
    pub action_step: f64,
    pub angle_rule: QuadratureRule,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self {
            param_step: DEFAULT_PARAM_STEP,
            action_step: DEFAULT_ACTION_STEP,
            angle_rule: QuadratureRule::periodic(DEFAULT_PERIODIC_ORDER)
                .expect("default periodic rule"),
        }
    }
}

impl ClassicalOptions {
    pub fn with_periodic_order(mut self, order: usize) -> Result<Self> {
        self.angle_rule = QuadratureRule::periodic(order)?;
        Ok(self)
    }

    fn absolute_step(&self, x: &ParamPoint) -> f64 {
        let n = x.norm();
        if n > 0.0 {
            self.param_step * n
        } else {
            self.param_step
        }
    }
}

/// `(1 / 2 pi) oint f(q(I, theta), p(I, theta)) d theta`.
pub fn torus_average<F>(
    f: F,
    chart: &dyn ActionAngleChart,
    action: f64,
    x: &ParamPoint,
    rule: &QuadratureRule,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let pts = chart.orbit(action, &rule.nodes, x)?;
    let mut acc = 0.0;
    let mut total_w = 0.0;
    for ((q, p), w) in pts.into_iter().zip(&rule.weights) {
        acc += w * f(q, p);
        total_w += w;
    }
    let v = acc / total_w;
    if !v.is_finite() {
        return Err(Error::Numerical(format!("torus average is not finite at I = {action}")));
    }
    Ok(v)
}

/// `F^c_ij = < d_i p d_j q - d_j p d_i q >` with derivatives at fixed
/// `(I, theta)` by central differences.
pub fn classical_two_form(
    chart: &dyn ActionAngleChart,
    action: f64,
    x: &ParamPoint,
    opts: &ClassicalOptions,
) -> Result<TwoForm> {
    chart.check_domain(x)?;
    chart.check_action(action)?;
    let d = x.dim();
    let h = opts.absolute_step(x);
    let angles = &opts.angle_rule.nodes;
    let m = angles.len();
    // dq[i][k], dp[i][k]: derivative along parameter i at angle node k
    let mut dq = vec![vec![0.0; m]; d];
    let mut dp = vec![vec![0.0; m]; d];
    for i in 0..d {
        let xp = x.shifted(i, h);
        let xm = x.shifted(i, -h);
        let plus = chart.orbit(action, angles, &xp).map_err(|e| differencing_error(e, &xp))?;
        let minus = chart.orbit(action, angles, &xm).map_err(|e| differencing_error(e, &xm))?;
        for k in 0..m {
            dq[i][k] = (plus[k].0 - minus[k].0) / (2.0 * h);
            dp[i][k] = (plus[k].1 - minus[k].1) / (2.0 * h);
        }
    }
    let wsum: f64 = opts.angle_rule.weights.iter().sum();
    let mut form = TwoForm::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let mut acc = 0.0;
            for k in 0..m {
                acc += opts.angle_rule.weights[k] * (dp[i][k] * dq[j][k] - dp[j][k] * dq[i][k]);
            }
            form.set(i, j, acc / wsum);
        }
    }
    Ok(form)
}

fn differencing_error(e: Error, x: &ParamPoint) -> Error {
    match e {
        Error::Domain(msg) => Error::Validation(format!(
            "parameter differencing left the domain at {x}: {msg}"
        )),
        other => other,
    }
}

/// The classical two-form at a fixed action, as a field over parameter space.
pub struct ClassicalFormField<'a> {
    pub chart: &'a dyn ActionAngleChart,
    pub action: f64,
    pub opts: &'a ClassicalOptions,
}

impl TwoFormField for ClassicalFormField<'_> {
    fn eval(&self, x: &ParamPoint) -> Result<TwoForm> {
        classical_two_form(self.chart, self.action, x, self.opts)
    }
}

/// `int int_Sigma F^c(I)`.
pub fn classical_flux(
    chart: &dyn ActionAngleChart,
    action: f64,
    surface: &Surface,
    opts: &ClassicalOptions,
    order: usize,
) -> Result<f64> {
    let field = ClassicalFormField {
        chart,
        action,
        opts,
    };
    surface_integral(&field, surface, order)
}

/// Hannay angle `-(d/dI) int int_Sigma F^c(I)` by a central difference in
/// the action.
pub fn hannay_angle(
    chart: &dyn ActionAngleChart,
    action: f64,
    surface: &Surface,
    opts: &ClassicalOptions,
    order: usize,
) -> Result<f64> {
    let di = opts.action_step;
    chart.check_action(action - di)?;
    chart.check_action(action + di)?;
    let up = classical_flux(chart, action + di, surface, opts, order)?;
    let down = classical_flux(chart, action - di, surface, opts, order)?;
    Ok(-(up - down) / (2.0 * di))
}

/// Chart whose angle origin is moved by `shift(X)`; used to measure how the
/// two-form depends on the origin convention.
pub struct ShiftedOriginChart<'a, F> {
    pub inner: &'a dyn ActionAngleChart,
    pub shift: F,
}

impl<F> ActionAngleChart for ShiftedOriginChart<'_, F>
where
    F: Fn(&ParamPoint) -> f64 + Send + Sync,
{
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn check_domain(&self, x: &ParamPoint) -> Result<()> {
        self.inner.check_domain(x)
    }
    fn hamiltonian(&self, q: f64, p: f64, x: &ParamPoint) -> f64 {
        self.inner.hamiltonian(q, p, x)
    }
    fn hamiltonian_gradient(&self, q: f64, p: f64, x: &ParamPoint) -> (f64, f64) {
        self.inner.hamiltonian_gradient(q, p, x)
    }
    fn to_phase(&self, action: f64, angle: f64, x: &ParamPoint) -> Result<(f64, f64)> {
        self.inner.to_phase(action, angle + (self.shift)(x), x)
    }
    fn orbit(&self, action: f64, angles: &[f64], x: &ParamPoint) -> Result<Vec<(f64, f64)>> {
        let s = (self.shift)(x);
        let shifted: Vec<f64> = angles.iter().map(|a| a + s).collect();
        self.inner.orbit(action, &shifted, x)
    }
    fn from_phase(&self, q: f64, p: f64, x: &ParamPoint) -> Result<(f64, f64)> {
        let (i, t) = self.inner.from_phase(q, p, x)?;
        Ok((i, wrap_angle(t - (self.shift)(x))))
    }
    fn frequency(&self, action: f64, x: &ParamPoint) -> Result<f64> {
        self.inner.frequency(action, x)
    }
    fn valid_actions(&self) -> (f64, f64) {
        self.inner.valid_actions()
    }
}

/// A Hamiltonian `(p - b(X))^2 / 2m(X) + V(q; X)` with a single well.
pub trait NaturalSystem: Send + Sync {
    fn param_dim(&self) -> usize;
    fn check_domain(&self, x: &ParamPoint) -> Result<()>;
    fn mass(&self, x: &ParamPoint) -> f64;
    fn potential(&self, q: f64, x: &ParamPoint) -> f64;

    fn potential_derivative(&self, q: f64, x: &ParamPoint) -> f64 {
        let h = 1e-6 * q.abs().max(1.0);
        (self.potential(q + h, x) - self.potential(q - h, x)) / (2.0 * h)
    }

    /// Constant momentum offset `b(X)`.
    fn momentum_shift(&self, _x: &ParamPoint) -> f64 {
        0.0
    }

    /// Location of the potential minimum.
    fn well_bottom(&self, x: &ParamPoint) -> f64;
}

/// `(p - b)^2 / 2m + k (q - a)^2 / 2 + g (q - a)^4` with parameters
/// `X = (a, b, g)`, `g >= 0`.
#[derive(Debug, Clone, Copy)]
pub struct DisplacedAnharmonic {
    pub mass: f64,
    pub stiffness: f64,
}

impl Default for DisplacedAnharmonic {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 1.0,
        }
    }
}

impl NaturalSystem for DisplacedAnharmonic {
    fn param_dim(&self) -> usize {
        3
    }

    fn check_domain(&self, x: &ParamPoint) -> Result<()> {
        if x.dim() != 3 {
            return Err(Error::Domain(format!(
                "displaced anharmonic parameters are (a, b, g), got dimension {}",
                x.dim()
            )));
        }
        if !(self.mass > 0.0 && self.stiffness > 0.0) {
            return Err(Error::Domain("mass and stiffness must be positive".into()));
        }
        if !(x[2] >= 0.0) {
            return Err(Error::Domain(format!("quartic coupling g must be >= 0 at {x}")));
        }
        Ok(())
    }

    fn mass(&self, _x: &ParamPoint) -> f64 {
        self.mass
    }

    fn potential(&self, q: f64, x: &ParamPoint) -> f64 {
        let s = q - x[0];
        let s2 = s * s;
        0.5 * self.stiffness * s2 + x[2] * s2 * s2
    }

    fn potential_derivative(&self, q: f64, x: &ParamPoint) -> f64 {
        let s = q - x[0];
        self.stiffness * s + 4.0 * x[2] * s * s * s
    }

    fn momentum_shift(&self, x: &ParamPoint) -> f64 {
        x[1]
    }

    fn well_bottom(&self, x: &ParamPoint) -> f64 {
        x[0]
    }
}

/// Numerically constructed chart for a [`NaturalSystem`].
///
/// Turning points are bracketed outward from the well bottom and bisected to
/// machine precision; the action is a Gauss-Legendre integral after the
/// substitution `q = c - h cos(phi)`; the angle is `omega` times the travel
/// time from the well bottom (moving right), obtained from the same
/// substitution. `theta = 0` is the well bottom with positive kinetic
/// momentum.
pub struct NumericChart<S> {
    pub system: S,
    rule: QuadratureRule,
    time_order: usize,
}

impl<S: NaturalSystem> NumericChart<S> {
    pub fn new(system: S) -> Self {
        Self {
            system,
            rule: QuadratureRule::gauss_legendre(64, 0.0, PI).expect("legendre rule"),
            time_order: 32,
        }
    }

    fn torus(&self, action: f64, x: &ParamPoint) -> Result<Torus> {
        self.system.check_domain(x)?;
        self.check_action(action)?;
        let q0 = self.system.well_bottom(x);
        let v0 = self.system.potential(q0, x);
        let m = self.system.mass(x);
        let b = self.system.momentum_shift(x);
        let curvature = {
            let h = 1e-4 * q0.abs().max(1.0);
            (self.system.potential(q0 + h, x) - 2.0 * v0 + self.system.potential(q0 - h, x))
                / (h * h)
        };
        if !(curvature > 0.0) {
            return Err(Error::Domain(format!("no confining well at {x}")));
        }
        let omega_h = (curvature / m).sqrt();
        if action == 0.0 {
            return Ok(Torus {
                energy: v0,
                q_bottom: q0,
                centre: q0,
                half: 0.0,
                period: 2.0 * PI / omega_h,
                tau_bottom: 0.0,
                mass: m,
                shift: b,
            });
        }
        // Newton on action(E) = I, safeguarded by a bracket [lo, hi].
        let mut lo = v0;
        let mut hi = f64::INFINITY;
        let mut e = v0 + omega_h * action;
        let mut shape = self.shape(e, q0, x)?;
        for _ in 0..100 {
            let a = self.action_of(e, &shape, m, x);
            let resid = a - action;
            if resid.abs() <= 1e-14 * action {
                break;
            }
            if resid > 0.0 {
                hi = hi.min(e);
            } else {
                lo = lo.max(e);
            }
            let period = self.period_of(e, &shape, m, x);
            let mut next = e - resid * 2.0 * PI / period;
            if !(next > lo && next < hi) {
                next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * e - v0 };
            }
            if next == e {
                break;
            }
            e = next;
            shape = self.shape(e, q0, x)?;
        }
        let period = self.period_of(e, &shape, m, x);
        let phi_bottom = ((shape.0 - q0) / shape.1).clamp(-1.0, 1.0).acos();
        let mut torus = Torus {
            energy: e,
            q_bottom: q0,
            centre: shape.0,
            half: shape.1,
            period,
            tau_bottom: 0.0,
            mass: m,
            shift: b,
        };
        torus.tau_bottom = self.travel_time(&torus, phi_bottom, x);
        Ok(torus)
    }

    /// `(centre, half-width)` of the classically allowed interval at energy `e`.
    fn shape(&self, e: f64, q0: f64, x: &ParamPoint) -> Result<(f64, f64)> {
        let lo = self.turning_point(e, q0, -1.0, x)?;
        let hi = self.turning_point(e, q0, 1.0, x)?;
        Ok((0.5 * (lo + hi), 0.5 * (hi - lo)))
    }

    fn turning_point(&self, e: f64, q0: f64, dir: f64, x: &ParamPoint) -> Result<f64> {
        let v = |q: f64| self.system.potential(q, x);
        let mut step = 1e-3 * q0.abs().max(1.0);
        let mut inner = q0;
        let mut outer = q0 + dir * step;
        let mut guard = 0;
        while v(outer) < e {
            inner = outer;
            step *= 2.0;
            outer = q0 + dir * step;
            guard += 1;
            if guard > 200 {
                return Err(Error::Domain(format!(
                    "energy {e} is not bound by the well at {x}"
                )));
            }
        }
        loop {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if v(mid) < e {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        Ok(0.5 * (inner + outer))
    }

    fn kinetic_momentum(&self, e: f64, q: f64, m: f64, x: &ParamPoint) -> f64 {
        (2.0 * m * (e - self.system.potential(q, x))).max(0.0).sqrt()
    }

    fn action_of(&self, e: f64, shape: &(f64, f64), m: f64, x: &ParamPoint) -> f64 {
        let (c, h) = *shape;
        self.rule.integrate(|phi| {
            self.kinetic_momentum(e, c - h * phi.cos(), m, x) * h * phi.sin()
        }) / PI
    }

    fn period_of(&self, e: f64, shape: &(f64, f64), m: f64, x: &ParamPoint) -> f64 {
        let (c, h) = *shape;
        2.0 * self.rule.integrate(|phi| {
            let p = self.kinetic_momentum(e, c - h * phi.cos(), m, x);
            m * h * phi.sin() / p
        })
    }

    fn speed_factor(&self, torus: &Torus, phi: f64, x: &ParamPoint) -> f64 {
        let p = self.kinetic_momentum(
            torus.energy,
            torus.centre - torus.half * phi.cos(),
            torus.mass,
            x,
        );
        torus.mass * torus.half * phi.sin() / p
    }

    /// Time to travel from the left turning point to `q(phi)` on the upper
    /// branch.
    fn travel_time(&self, torus: &Torus, phi: f64, x: &ParamPoint) -> f64 {
        if phi <= 0.0 {
            return 0.0;
        }
        let rule = QuadratureRule::gauss_legendre(self.time_order, 0.0, phi)
            .expect("positive interval");
        rule.integrate(|s| self.speed_factor(torus, s, x))
    }

    /// `phi` in `[0, pi]` with `travel_time(phi) = t`, `0 <= t <= T/2`.
    fn invert_travel_time(&self, torus: &Torus, t: f64, x: &ParamPoint) -> f64 {
        let half = 0.5 * torus.period;
        let (mut lo, mut hi) = (0.0, PI);
        let mut phi = PI * (t / half).clamp(0.0, 1.0);
        for _ in 0..60 {
            let f = self.travel_time(torus, phi, x) - t;
            if f.abs() <= 1e-14 * torus.period {
                break;
            }
            if f > 0.0 {
                hi = phi;
            } else {
                lo = phi;
            }
            let d = self.speed_factor(torus, phi, x);
            let mut next = phi - f / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - phi).abs() < 1e-15 {
                phi = next;
                break;
            }
            phi = next;
        }
        phi
    }

    fn point_at(&self, torus: &Torus, angle: f64, x: &ParamPoint) -> (f64, f64) {
        if torus.half == 0.0 {
            return (torus.q_bottom, torus.shift);
        }
        let t_period = torus.period;
        let half = 0.5 * t_period;
        // time since leaving the left turning point
        let t = (wrap_angle(angle) / (2.0 * PI) * t_period + torus.tau_bottom).rem_euclid(t_period);
        let (phi, sign) = if t <= half {
            (self.invert_travel_time(torus, t, x), 1.0)
        } else {
            (self.invert_travel_time(torus, t_period - t, x), -1.0)
        };
        let q = torus.centre - torus.half * phi.cos();
        let p = sign * self.kinetic_momentum(torus.energy, q, torus.mass, x) + torus.shift;
        (q, p)
    }
}

#[derive(Debug, Clone)]
struct Torus {
    energy: f64,
    q_bottom: f64,
    centre: f64,
    half: f64,
    period: f64,
    tau_bottom: f64,
    mass: f64,
    shift: f64,
}

impl<S: NaturalSystem> ActionAngleChart for NumericChart<S> {
    fn param_dim(&self) -> usize {
        self.system.param_dim()
    }

    fn check_domain(&self, x: &ParamPoint) -> Result<()> {
        self.system.check_domain(x)
    }

    fn hamiltonian(&self, q: f64, p: f64, x: &ParamPoint) -> f64 {
        let k = p - self.system.momentum_shift(x);
        k * k / (2.0 * self.system.mass(x)) + self.system.potential(q, x)
    }

    fn hamiltonian_gradient(&self, q: f64, p: f64, x: &ParamPoint) -> (f64, f64) {
        let k = p - self.system.momentum_shift(x);
        (self.system.potential_derivative(q, x), k / self.system.mass(x))
    }

    fn to_phase(&self, action: f64, angle: f64, x: &ParamPoint) -> Result<(f64, f64)> {
        let torus = self.torus(action, x)?;
        Ok(self.point_at(&torus, angle, x))
    }

    fn orbit(&self, action: f64, angles: &[f64], x: &ParamPoint) -> Result<Vec<(f64, f64)>> {
        let torus = self.torus(action, x)?;
        Ok(angles.iter().map(|&a| self.point_at(&torus, a, x)).collect())
    }

    fn from_phase(&self, q: f64, p: f64, x: &ParamPoint) -> Result<(f64, f64)> {
        self.system.check_domain(x)?;
        let m = self.system.mass(x);
        let e = self.hamiltonian(q, p, x);
        let q0 = self.system.well_bottom(x);
        if e <= self.system.potential(q0, x) {
            return Ok((0.0, 0.0));
        }
        let shape = self.shape(e, q0, x)?;
        let action = self.action_of(e, &shape, m, x);
        let period = self.period_of(e, &shape, m, x);
        let phi_bottom = ((shape.0 - q0) / shape.1).clamp(-1.0, 1.0).acos();
        let torus = Torus {
            energy: e,
            q_bottom: q0,
            centre: shape.0,
            half: shape.1,
            period,
            tau_bottom: 0.0,
            mass: m,
            shift: self.system.momentum_shift(x),
        };
        let tau_bottom = self.travel_time(&torus, phi_bottom, x);
        let phi = ((shape.0 - q) / shape.1).clamp(-1.0, 1.0).acos();
        let tau = self.travel_time(&torus, phi, x);
        let since_left = if p - torus.shift >= 0.0 { tau } else { period - tau };
        let t = (since_left - tau_bottom).rem_euclid(period);
        Ok((action, wrap_angle(2.0 * PI * t / period)))
    }

    fn frequency(&self, action: f64, x: &ParamPoint) -> Result<f64> {
        let torus = self.torus(action, x)?;
        Ok(2.0 * PI / torus.period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_cap_surface, make_planar_y0_surface};
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64, z: f64) -> ParamPoint {
        ParamPoint::from([x, y, z])
    }

    #[test]
    fn oscillator_chart_examples() {
        let c = OscillatorChart;
        let (q, pp) = c.to_phase(1.0, 0.0, &p(1.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(q, 0.0, epsilon = 1e-15);
        assert_relative_eq!(pp, 2f64.sqrt(), max_relative = 1e-15);
        let (q, pp) = c.to_phase(1.0, PI / 2.0, &p(1.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(q, 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(pp, 0.0, epsilon = 1e-15);
        assert_eq!(c.to_phase(0.0, 1.3, &p(2.0, 1.0, 1.0)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn oscillator_domain() {
        let c = OscillatorChart;
        assert!(matches!(c.to_phase(1.0, 0.0, &p(1.0, 1.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(c.to_phase(1.0, 0.0, &p(-1.0, 0.0, -1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn oscillator_energy_is_omega_i() {
        let c = OscillatorChart;
        for x in [p(1.0, 0.0, 1.0), p(2.0, 1.0, 1.0), p(0.7, -0.3, 1.9)] {
            let w = oscillator_frequency(&x).unwrap();
            for k in 0..16 {
                let th = 0.39 * k as f64;
                let (q, pp) = c.to_phase(1.7, th, &x).unwrap();
                assert_relative_eq!(c.hamiltonian(q, pp, &x), w * 1.7, max_relative = 1e-12);
                let (i, t) = c.from_phase(q, pp, &x).unwrap();
                assert_relative_eq!(i, 1.7, max_relative = 1e-12);
                assert_relative_eq!(t, wrap_angle(th), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn torus_averages() {
        let c = OscillatorChart;
        let rule = QuadratureRule::periodic(64).unwrap();
        let x = p(1.0, 0.0, 1.0);
        assert_relative_eq!(torus_average(|_, _| 1.0, &c, 1.0, &x, &rule).unwrap(), 1.0);
        assert_relative_eq!(
            torus_average(|q, _| q * q, &c, 1.0, &x, &rule).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert!(torus_average(|q, p| q * p, &c, 1.0, &x, &rule).unwrap().abs() < 1e-14);
    }

    #[test]
    fn oscillator_two_form_examples() {
        let c = OscillatorChart;
        let o = ClassicalOptions::default();
        let f = classical_two_form(&c, 1.0, &p(1.0, 0.0, 1.0), &o).unwrap().as_vector3();
        assert!((f[0] + 0.25).abs() < 1e-6 && f[1].abs() < 1e-6 && (f[2] + 0.25).abs() < 1e-6);
        let f = classical_two_form(&c, 2.0, &p(2.0, 1.0, 1.0), &o).unwrap().as_vector3();
        assert!((f[0] + 1.0).abs() < 1e-6, "{f:?}");
        assert!((f[1] + 0.5).abs() < 1e-6, "{f:?}");
        assert!((f[2] + 0.5).abs() < 1e-6, "{f:?}");
        let f0 = classical_two_form(&c, 0.0, &p(1.3, 0.2, 0.8), &o).unwrap();
        assert_eq!(f0.max_abs(), 0.0);
    }

    #[test]
    fn differencing_out_of_domain_is_validation_error() {
        let c = OscillatorChart;
        let o = ClassicalOptions {
            param_step: 1.0,
            ..Default::default()
        };
        let r = classical_two_form(&c, 1.0, &p(1.0, 0.0, 1.0), &o);
        assert!(matches!(r, Err(Error::Validation(_))), "{r:?}");
    }

    #[test]
    fn hannay_angle_on_caps() {
        let c = OscillatorChart;
        let o = ClassicalOptions::default().with_periodic_order(32).unwrap();
        let s = make_cap_surface(1.0, 1.0).unwrap();
        for &i in &[0.5, 2.0] {
            let a = hannay_angle(&c, i, &s, &o, 12).unwrap();
            assert!((a - PI * (1f64.cosh() - 1.0)).abs() < 1e-4, "{a}");
        }
        let s0 = make_cap_surface(1.0, 0.0).unwrap();
        assert_eq!(hannay_angle(&c, 1.0, &s0, &o, 8).unwrap(), 0.0);
        let flat = make_planar_y0_surface(1.0, 1.0, 0.3, 64).unwrap();
        assert!(hannay_angle(&c, 1.0, &flat, &o, 8).unwrap().abs() < 1e-9);
    }

    #[test]
    fn numeric_chart_matches_harmonic_case() {
        let chart = NumericChart::new(DisplacedAnharmonic {
            mass: 0.5,
            stiffness: 2.0,
        });
        let x = p(0.3, -0.2, 0.0);
        // harmonic: omega = sqrt(k/m) = 2
        assert_relative_eq!(chart.frequency(1.3, &x).unwrap(), 2.0, max_relative = 1e-10);
        let osc = OscillatorChart;
        // same Hamiltonian written as the generalized oscillator about (a, b)
        let xo = p(2.0, 0.0, 2.0);
        for k in 0..8 {
            let th = 0.77 * k as f64;
            let (q, pp) = chart.to_phase(1.3, th, &x).unwrap();
            let (qo, po) = osc.to_phase(1.3, th, &xo).unwrap();
            assert_relative_eq!(q - 0.3, qo, epsilon = 1e-9);
            assert_relative_eq!(pp + 0.2, po, epsilon = 1e-9);
        }
    }

    #[test]
    fn numeric_chart_invariants_quartic() {
        let chart = NumericChart::new(DisplacedAnharmonic::default());
        let x = p(0.1, 0.4, 0.25);
        let rule = QuadratureRule::periodic(128).unwrap();
        for &i in &[0.5, 1.0, 2.0] {
            let pts = chart.orbit(i, &rule.nodes, &x).unwrap();
            let e0 = chart.hamiltonian(pts[0].0, pts[0].1, &x);
            for (q, pp) in &pts {
                assert_relative_eq!(chart.hamiltonian(*q, *pp, &x), e0, max_relative = 1e-10);
            }
            // (1/2pi) oint p dq by differentiating q along the orbit
            let h = 1e-5;
            let loop_integral = rule.integrate(|t| {
                let (_, pp) = chart.to_phase(i, t, &x).unwrap();
                let (qa, _) = chart.to_phase(i, t + h, &x).unwrap();
                let (qb, _) = chart.to_phase(i, t - h, &x).unwrap();
                pp * (qa - qb) / (2.0 * h)
            }) / (2.0 * PI);
            assert_relative_eq!(loop_integral, i, max_relative = 1e-8);
            for (k, &t) in rule.nodes.iter().enumerate().step_by(9) {
                let (ii, tt) = chart.from_phase(pts[k].0, pts[k].1, &x).unwrap();
                assert_relative_eq!(ii, i, max_relative = 1e-10);
                let d = (tt - t).rem_euclid(2.0 * PI);
                assert!(d.min(2.0 * PI - d) < 1e-9, "{t} vs {tt}");
            }
        }
    }
}
