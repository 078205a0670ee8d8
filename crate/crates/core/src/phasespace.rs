//! Berry-type curvatures assembled from classical two-forms weighted by
//! radial Wigner profiles: the scalar, separable, Wilczek-Zee and mixed
//! forms, and the semiclassical Hannay/Berry comparison.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    classical_two_form, hannay_angle, oscillator_two_form_exact, ActionAngleChart, ClassicalOptions,
    OscillatorChart,
};
use crate::error::{Error, Result};
use crate::geometry::{
    surface_integral, MatrixTwoForm, ParamPoint, Surface, TwoForm, TwoFormField,
};
use crate::quantum::{Backend, BerryPhase, HilbertRoute, SpatialGrid};
use crate::wigner::{
    oscillator_radial_wigner, MatrixRadialWigner, RadialWigner, DEFAULT_TAIL_TOLERANCE,
};

/// Largest admissible hermiticity defect of a matrix profile.
pub const HERMITICITY_TOLERANCE: f64 = 1e-8;
/// Default Maslov index of the oscillator.
pub const DEFAULT_MASLOV: f64 = 0.5;

/// Classical two-form `F^c(I; X)` as a function of action and parameters.
pub trait ClassicalForm: Sync {
    fn eval(&self, action: f64, x: &ParamPoint) -> Result<TwoForm>;
}

/// `F^c` by differencing an action-angle chart.
pub struct ChartForm<'a> {
    pub chart: &'a dyn ActionAngleChart,
    pub opts: ClassicalOptions,
}

impl<'a> ChartForm<'a> {
    pub fn new(chart: &'a dyn ActionAngleChart, opts: ClassicalOptions) -> Self {
        Self { chart, opts }
    }
}

impl ClassicalForm for ChartForm<'_> {
    fn eval(&self, action: f64, x: &ParamPoint) -> Result<TwoForm> {
        classical_two_form(self.chart, action, x, &self.opts)
    }
}

/// Closed-form oscillator `F^c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OscillatorExactForm;

impl ClassicalForm for OscillatorExactForm {
    fn eval(&self, action: f64, x: &ParamPoint) -> Result<TwoForm> {
        oscillator_two_form_exact(action, x)
    }
}

/// A form that vanishes identically, e.g. for a mode untouched by `X`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroForm {
    pub dim: usize,
}

impl ClassicalForm for ZeroForm {
    fn eval(&self, _action: f64, _x: &ParamPoint) -> Result<TwoForm> {
        Ok(TwoForm::zeros(self.dim))
    }
}

/// Options of the action integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionQuadrature {
    /// Gauss-Laguerre order for closed-form profiles.
    pub order: usize,
    /// Largest admissible profile mass outside the rule.
    pub tail_tolerance: f64,
}

impl Default for ActionQuadrature {
    fn default() -> Self {
        Self {
            order: RadialWigner::default_order(),
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }
}

fn check_profile(profile: &RadialWigner, hbar: f64, quad: &ActionQuadrature) -> Result<()> {
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::Domain(format!("hbar must be positive, got {hbar}")));
    }
    if (profile.hbar() - hbar).abs() > 1e-15 * hbar {
        return Err(Error::Domain(format!(
            "profile built for hbar = {} used with hbar = {hbar}",
            profile.hbar()
        )));
    }
    let tail = profile.tail_mass();
    if tail > quad.tail_tolerance {
        return Err(Error::QuadratureSupport(tail));
    }
    Ok(())
}

/// `int W(I) F^c(I; X) dI` over the profile's measure, summed in node order.
fn weighted_form(
    profile: &RadialWigner,
    form: &dyn ClassicalForm,
    x: &ParamPoint,
    quad: &ActionQuadrature,
) -> Result<TwoForm> {
    let measure = profile.measure(quad.order)?;
    let terms: Vec<Result<TwoForm>> = measure
        .par_iter()
        .map(|&(i, m)| Ok(form.eval(i, x)?.scaled(m)))
        .collect();
    let mut acc = TwoForm::zeros(x.dim());
    for t in terms {
        acc.add_scaled(1.0, &t?);
    }
    Ok(acc)
}

/// `F^q = -(2 pi / hbar) int W(I) F^c(I; X) dI`.
pub fn curvature_from_wigner(
    profile: &RadialWigner,
    form: &dyn ClassicalForm,
    x: &ParamPoint,
    hbar: f64,
    quad: &ActionQuadrature,
) -> Result<TwoForm> {
    check_profile(profile, hbar, quad)?;
    Ok(weighted_form(profile, form, x, quad)?.scaled(-2.0 * PI / hbar))
}

/// `-2 pi int W(I) F^c(I; X) dI` with no `1/hbar`; agrees with
/// [`curvature_from_wigner`] only at `hbar = 1`.
pub fn curvature_from_wigner_literal(
    profile: &RadialWigner,
    form: &dyn ClassicalForm,
    x: &ParamPoint,
    quad: &ActionQuadrature,
) -> Result<TwoForm> {
    check_profile(profile, profile.hbar(), quad)?;
    Ok(weighted_form(profile, form, x, quad)?.scaled(-2.0 * PI))
}

/// Source of a radial profile at each parameter point.
pub trait ProfileSource: Sync {
    fn profile(&self, x: &ParamPoint) -> Result<RadialWigner>;
}

/// The same profile everywhere (adiabatically constant, as for the
/// oscillator).
pub struct ConstantProfile(pub RadialWigner);

impl ProfileSource for ConstantProfile {
    fn profile(&self, _x: &ParamPoint) -> Result<RadialWigner> {
        Ok(self.0.clone())
    }
}

/// Phase-space curvature as a field over parameter space.
pub struct WignerCurvatureField<'a> {
    pub profiles: &'a dyn ProfileSource,
    pub form: &'a dyn ClassicalForm,
    pub hbar: f64,
    pub quad: ActionQuadrature,
}

impl TwoFormField for WignerCurvatureField<'_> {
    fn eval(&self, x: &ParamPoint) -> Result<TwoForm> {
        let p = self.profiles.profile(x)?;
        curvature_from_wigner(&p, self.form, x, self.hbar, &self.quad)
    }
}

impl WignerCurvatureField<'_> {
    /// `gamma = -int int_Sigma F^q`.
    pub fn berry_phase(&self, surface: &Surface, order: usize) -> Result<BerryPhase> {
        Ok(BerryPhase::new(-surface_integral(self, surface, order)?))
    }
}

/// Curvature of a separable product system with diagnostics.
#[derive(Debug, Clone)]
pub struct SeparableCurvature {
    pub form: TwoForm,
    /// `2 pi int W_k dI` per mode; each should be 1.
    pub mode_normalizations: Vec<f64>,
}

/// `-((2 pi)^N / hbar) int prod_l W_l(I_l) sum_k F^c_k(I_k) dI_1..dI_N`,
/// evaluated exactly as `sum_k [prod_{l != k} M_l] G_k` with
/// `M_l = int W_l` and `G_k = int W_k F^c_k`.
pub fn curvature_separable(
    profiles: &[RadialWigner],
    forms: &[&dyn ClassicalForm],
    x: &ParamPoint,
    hbar: f64,
    quad: &ActionQuadrature,
) -> Result<SeparableCurvature> {
    if profiles.len() != forms.len() || profiles.is_empty() {
        return Err(Error::Domain(format!(
            "{} mode profiles for {} mode two-forms",
            profiles.len(),
            forms.len()
        )));
    }
    let n = profiles.len();
    let mut masses = Vec::with_capacity(n);
    let mut moments = Vec::with_capacity(n);
    for (p, f) in profiles.iter().zip(forms) {
        check_profile(p, hbar, quad)?;
        masses.push(p.integrate(|_| 1.0, quad.order)?);
        moments.push(weighted_form(p, *f, x, quad)?);
    }
    let mut acc = TwoForm::zeros(x.dim());
    for k in 0..n {
        let others: f64 = (0..n).filter(|&l| l != k).map(|l| masses[l]).product();
        acc.add_scaled(others, &moments[k]);
    }
    let pre = -(2.0 * PI).powi(n as i32) / hbar;
    Ok(SeparableCurvature {
        form: acc.scaled(pre),
        mode_normalizations: masses.iter().map(|m| 2.0 * PI * m).collect(),
    })
}

/// `F^WZ_ab = -(2 pi / hbar) int W_ab(I) F^c(I; X) dI`.
pub fn wz_curvature_from_wigner(
    profile: &MatrixRadialWigner,
    form: &dyn ClassicalForm,
    x: &ParamPoint,
    hbar: f64,
    quad: &ActionQuadrature,
) -> Result<MatrixTwoForm> {
    if (profile.hbar - hbar).abs() > 1e-15 * hbar {
        return Err(Error::Domain(format!(
            "profile built for hbar = {} used with hbar = {hbar}",
            profile.hbar
        )));
    }
    let defect = profile.hermiticity_defect();
    if defect > HERMITICITY_TOLERANCE {
        return Err(Error::Validation(format!(
            "matrix profile hermiticity defect {defect:.3e}"
        )));
    }
    if profile.tail_mass > quad.tail_tolerance {
        return Err(Error::QuadratureSupport(profile.tail_mass));
    }
    let d = x.dim();
    let r = profile.rank;
    let forms: Vec<Result<TwoForm>> = profile
        .actions
        .par_iter()
        .map(|&i| form.eval(i, x))
        .collect();
    let mut out = MatrixTwoForm::zeros(d, r);
    let pre = Complex64::new(-2.0 * PI / hbar, 0.0);
    let mut acc = vec![vec![DMatrix::from_element(r, r, Complex64::new(0.0, 0.0)); d]; d];
    for (f, m) in forms.into_iter().zip(&profile.masses) {
        let f = f?;
        for i in 0..d {
            for j in (i + 1)..d {
                acc[i][j] += m * Complex64::new(f.get(i, j), 0.0);
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            out.set(i, j, &acc[i][j] * pre);
        }
    }
    Ok(out)
}

/// Mixed-state curvature `F_rho = -(2 pi / hbar) int W_rho F^c dI`.
pub fn mixed_curvature(
    profile: &RadialWigner,
    form: &dyn ClassicalForm,
    x: &ParamPoint,
    hbar: f64,
    quad: &ActionQuadrature,
) -> Result<TwoForm> {
    curvature_from_wigner(profile, form, x, hbar, quad)
}

/// Mixed-state phase `phi = + int int_Sigma F_rho`, with the sign as
/// displayed for the mixed case (opposite to `gamma_n = -int int F^q`).
pub fn mixed_phase(
    profile: &RadialWigner,
    form: &dyn ClassicalForm,
    surface: &Surface,
    hbar: f64,
    quad: &ActionQuadrature,
    order: usize,
) -> Result<f64> {
    let source = ConstantProfile(profile.clone());
    let field = WignerCurvatureField {
        profiles: &source,
        form,
        hbar,
        quad: *quad,
    };
    surface_integral(&field, surface, order)
}

/// Three estimates of the Hannay angle for the oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalReport {
    pub level: usize,
    pub hbar: f64,
    pub maslov: f64,
    /// Classical `Delta theta` at `I = hbar (n + mu)`.
    pub hannay: f64,
    /// `-(gamma_{n+1} - gamma_n)` from the phase-space route.
    pub level_difference: f64,
    /// `-hbar d gamma / dI` from the Hilbert route, differenced in `n`.
    pub action_derivative: f64,
    pub max_pairwise_difference: f64,
}

/// Settings of [`semiclassical_check`].
#[derive(Debug, Clone)]
pub struct SemiclassicalOptions {
    pub maslov: f64,
    pub surface_order: usize,
    pub classical: ClassicalOptions,
    pub quad: ActionQuadrature,
    pub plaquette_step: f64,
}

impl Default for SemiclassicalOptions {
    fn default() -> Self {
        Self {
            maslov: DEFAULT_MASLOV,
            surface_order: 8,
            classical: ClassicalOptions::default()
                .with_periodic_order(64)
                .expect("periodic rule"),
            quad: ActionQuadrature::default(),
            plaquette_step: 2e-3,
        }
    }
}

/// Corner points of a surface's quadrature region used to size the grid:
/// samples the surface on a coarse lattice.
pub fn surface_samples(surface: &Surface, per_side: usize) -> Vec<ParamPoint> {
    let k = per_side.max(2);
    let mut out = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            out.push(surface.at(a as f64 / (k - 1) as f64, b as f64 / (k - 1) as f64));
        }
    }
    out
}

/// Compare `Delta theta`, `-(gamma_{n+1} - gamma_n)` and `-hbar dgamma/dI`
/// on a surface for the oscillator.
pub fn semiclassical_check(
    surface: &Surface,
    n: usize,
    hbar: f64,
    opts: &SemiclassicalOptions,
) -> Result<SemiclassicalReport> {
    let chart = OscillatorChart;
    let action = hbar * (n as f64 + opts.maslov);
    let hannay = hannay_angle(&chart, action, surface, &opts.classical, opts.surface_order)?;

    let form = ChartForm::new(&chart, opts.classical.clone());
    let gamma_ps = |level: usize| -> Result<f64> {
        let source = ConstantProfile(oscillator_radial_wigner(level, hbar)?);
        let field = WignerCurvatureField {
            profiles: &source,
            form: &form,
            hbar,
            quad: opts.quad,
        };
        Ok(field.berry_phase(surface, opts.surface_order)?.raw)
    };
    let level_difference = -(gamma_ps(n + 1)? - gamma_ps(n)?);

    let grid = SpatialGrid::for_oscillator(&surface_samples(surface, 9), n + 3, hbar)?;
    let route = HilbertRoute::new(Backend::AnalyticOscillator, grid, hbar).with_delta(opts.plaquette_step);
    let gamma_q = |level: usize| -> Result<f64> { Ok(route.berry_phase(level, surface, opts.surface_order)?.raw) };
    // dI = hbar dn, so -hbar dgamma/dI = -dgamma/dn
    let action_derivative = if n == 0 {
        -(gamma_q(1)? - gamma_q(0)?)
    } else {
        -(gamma_q(n + 1)? - gamma_q(n - 1)?) / 2.0
    };
    let vals = [hannay, level_difference, action_derivative];
    let mut worst = 0.0f64;
    for a in 0..3 {
        for b in (a + 1)..3 {
            worst = worst.max((vals[a] - vals[b]).abs());
        }
    }
    Ok(SemiclassicalReport {
        level: n,
        hbar,
        maslov: opts.maslov,
        hannay,
        level_difference,
        action_derivative,
        max_pairwise_difference: worst,
    })
}

/// A phase reported both raw and reduced to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseValue {
    pub raw: f64,
    pub wrapped: f64,
}

impl From<BerryPhase> for PhaseValue {
    fn from(b: BerryPhase) -> Self {
        Self {
            raw: b.raw,
            wrapped: b.wrapped,
        }
    }
}

impl From<f64> for PhaseValue {
    fn from(raw: f64) -> Self {
        BerryPhase::new(raw).into()
    }
}

/// Mixed-state phase: the surface formula and, when computed, the
/// time-evolution values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPhaseReport {
    pub weights: Vec<f64>,
    /// `+ int int F_rho`.
    pub surface_formula: PhaseValue,
    /// `arg sum_n p_n exp(i gamma_n)` with the Berry phases of each level.
    pub from_berry_phases: PhaseValue,
    pub dynamics_total: Option<f64>,
    pub dynamics_geometric: Option<f64>,
}

/// Quadrature settings and sign conventions behind a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub surface_order: usize,
    pub laguerre_order: usize,
    pub plaquette_step: f64,
    pub profile_normalization: f64,
    pub conventions: Vec<String>,
}

/// Geometric phases of one level around one circuit by every route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub circuit: String,
    pub surface: String,
    pub level: usize,
    pub hbar: f64,
    pub gamma_q: PhaseValue,
    pub gamma_ps: PhaseValue,
    pub hannay: f64,
    /// Nested `[re, im]` entries, rows first.
    pub wz_holonomy: Option<Vec<Vec<[f64; 2]>>>,
    pub mixed_phase: Option<MixedPhaseReport>,
    pub dynamical_phase: f64,
    pub diagnostics: Diagnostics,
}

impl PhaseReport {
    /// True when every number in the report is finite.
    pub fn is_finite(&self) -> bool {
        let mut v = vec![
            self.gamma_q.raw,
            self.gamma_ps.raw,
            self.hannay,
            self.dynamical_phase,
        ];
        if let Some(m) = &self.mixed_phase {
            v.push(m.surface_formula.raw);
            v.push(m.from_berry_phases.raw);
            v.extend(m.dynamics_total);
            v.extend(m.dynamics_geometric);
        }
        if let Some(w) = &self.wz_holonomy {
            v.extend(w.iter().flatten().flatten());
        }
        v.iter().all(|x| x.is_finite())
    }
}

/// Complex matrix as nested `[re, im]` pairs.
pub fn matrix_to_nested(m: &DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Sign and normalization conventions recorded in every report.
pub fn convention_notes() -> Vec<String> {
    vec![
        "gamma_n = -int int F^q; F^q_ij = arg(plaquette product)/side^2, counter-clockwise in (i, j)".into(),
        "phase-space curvature uses -(2 pi / hbar) int W F^c dI (equal to -2 pi int W F^c dI at hbar = 1)".into(),
        "mixed phase uses + int int F_rho as displayed, so it equals -gamma_n for a pure state".into(),
        "theta = 0 at q = 0 with p + Y q / Z maximal; derivatives at fixed (I, theta)".into(),
        "gauge change U acts on frames as V -> V U^dagger; holonomy and curvature transform as U W U^dagger".into(),
        "Wilczek-Zee holonomy is the adjoint of the ordered overlap product, exp(i gamma) for one state".into(),
    ]
}
