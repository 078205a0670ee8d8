//! Run configuration: a single JSON document with every default filled in.

use std::path::Path;

use serde::{Deserialize, Serialize};

use wignerphase::dynamics::ScheduleProfile;
use wignerphase::geometry::{make_cap_circuit, make_cap_surface, make_disc_surface, make_planar_y0_surface};
use wignerphase::{Circuit, ParamPoint, Surface};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// `H = (X q^2 + 2 Y q p + Z p^2) / 2`, parameters `(X, Y, Z)`.
    Oscillator,
    /// Displaced anharmonic well diagonalized on the grid, parameters `(a, b, g)`.
    GridCustom,
    /// Independent oscillator modes sharing `(X, Y, Z)`, one level per mode.
    SeparableProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    Analytic,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub backend: Option<BackendChoice>,
    /// Explicit parameter points for `curvature`.
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    /// Cartesian product of three ranges, appended to `points`.
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub circuit: CircuitSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub anharmonic: AnharmonicSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub finite_difference: FiniteDifferenceSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub wigner: WignerSpec,
    #[serde(default)]
    pub wz: Option<WzSpec>,
    #[serde(default)]
    pub mixed: Option<MixedSpec>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.min],
            n => (0..n)
                .map(|k| self.min + (self.max - self.min) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub x: Range,
    pub y: Range,
    pub z: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CircuitSpec {
    /// Constant-frequency loop on `XZ - Y^2 = omega0^2`, spanned by a hyperbolic cap.
    Cap { omega0: f64, r: f64, samples: usize },
    /// Circle in the `Y = 0` plane about `(x0, 0, z0)`.
    PlanarY0 { x0: f64, z0: f64, radius: f64, samples: usize },
    /// Circle `centre + radius (cos e1 + sin e2)` spanned by a flat disc.
    Disc {
        centre: [f64; 3],
        e1: [f64; 3],
        e2: [f64; 3],
        radius: f64,
        samples: usize,
    },
}

impl Default for CircuitSpec {
    fn default() -> Self {
        CircuitSpec::Cap {
            omega0: 1.0,
            r: 1.0,
            samples: 256,
        }
    }
}

impl CircuitSpec {
    pub fn build(&self) -> wignerphase::Result<(Circuit, Surface)> {
        match *self {
            CircuitSpec::Cap { omega0, r, samples } => {
                Ok((make_cap_circuit(omega0, r, samples)?, make_cap_surface(omega0, r)?))
            }
            CircuitSpec::PlanarY0 { x0, z0, radius, samples } => {
                let s = make_planar_y0_surface(x0, z0, radius, samples)?;
                Ok((s.boundary.clone(), s))
            }
            CircuitSpec::Disc {
                centre,
                e1,
                e2,
                radius,
                samples,
            } => {
                let s = make_disc_surface(ParamPoint::from(centre), e1.to_vec(), e2.to_vec(), radius, samples)?;
                Ok((s.boundary.clone(), s))
            }
        }
    }
}

/// Position grid; unset fields are sized automatically.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub centre: Option<f64>,
    pub half_width: Option<f64>,
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnharmonicSpec {
    pub mass: f64,
    pub stiffness: f64,
}

impl Default for AnharmonicSpec {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub surface_order: usize,
    pub laguerre_order: usize,
    pub tail_tolerance: f64,
    /// Periodic angle nodes for torus averages.
    pub angle_nodes: usize,
    /// Legendre action nodes for sampled radial profiles.
    pub action_nodes: usize,
    /// Sampled profiles cover `[0, action_extent * hbar]`.
    pub action_extent: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            surface_order: 8,
            laguerre_order: wignerphase::RadialWigner::default_order(),
            tail_tolerance: 1e-10,
            angle_nodes: 64,
            action_nodes: 64,
            action_extent: 22.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteDifferenceSpec {
    pub plaquette_step: f64,
    pub classical_param_step: f64,
}

impl Default for FiniteDifferenceSpec {
    fn default() -> Self {
        Self {
            plaquette_step: 1e-2,
            classical_param_step: wignerphase::ClassicalOptions::default().param_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub total_time: f64,
    pub time_steps: usize,
    pub profile: ScheduleProfile,
    /// Multiples of `total_time` for the convergence table.
    pub factors: Vec<f64>,
    pub subspace: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            total_time: 160.0,
            time_steps: 800,
            profile: ScheduleProfile::Smooth,
            factors: vec![1.0, 2.0, 4.0],
            subspace: wignerphase::dynamics::DEFAULT_SUBSPACE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WignerSpec {
    /// Parameter point; defaults to the first curvature point or `(1, 0, 1)`.
    pub point: Option<[f64; 3]>,
    pub q_half_width: f64,
    pub p_half_width: f64,
    /// Samples per axis; odd counts include the origin.
    pub count: usize,
    pub radial_count: usize,
    /// Radial table covers `[0, radial_extent * hbar]`.
    pub radial_extent: f64,
}

impl Default for WignerSpec {
    fn default() -> Self {
        Self {
            point: None,
            q_half_width: 4.0,
            p_half_width: 4.0,
            count: 81,
            radial_count: 61,
            radial_extent: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WzSpec {
    pub rank: usize,
    /// Strength of a random smooth gauge drawn from `seed`; 0 disables it.
    #[serde(default)]
    pub gauge_strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedSpec {
    /// Level populations; mutually exclusive with `beta`.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Inverse temperature of oscillator thermal weights.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Also evolve the mixture in time.
    #[serde(default)]
    pub dynamics: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    /// Transport a classical ensemble at `I = hbar (n + 1/2)` as well.
    pub classical: bool,
    pub ensemble: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            classical: false,
            ensemble: 16,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_levels() -> Vec<usize> {
    vec![0]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Schema checks that do not need any model evaluation.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return usage(format!("hbar must be positive, got {}", self.hbar));
        }
        if self.levels.is_empty() {
            return usage("levels must not be empty".into());
        }
        let q = &self.quadrature;
        if q.surface_order == 0 || q.laguerre_order == 0 || q.angle_nodes == 0 || q.action_nodes == 0 {
            return usage("quadrature orders must be positive".into());
        }
        if !(q.action_extent > 0.0 && q.tail_tolerance > 0.0) {
            return usage("action_extent and tail_tolerance must be positive".into());
        }
        let fd = &self.finite_difference;
        if !(fd.plaquette_step > 0.0 && fd.classical_param_step > 0.0) {
            return usage("finite-difference steps must be positive".into());
        }
        let s = &self.schedule;
        if !(s.total_time > 0.0) || s.time_steps == 0 || s.factors.is_empty() || s.factors.iter().any(|f| !(*f > 0.0)) {
            return usage("schedule needs total_time > 0, time_steps > 0 and positive factors".into());
        }
        let w = &self.wigner;
        if w.count == 0 || w.radial_count == 0 || !(w.q_half_width > 0.0 && w.p_half_width > 0.0 && w.radial_extent > 0.0) {
            return usage("wigner table sizes must be positive".into());
        }
        if let Some(g) = &self.grid.n_points {
            if *g < 16 {
                return usage(format!("grid needs at least 16 points, got {g}"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.x.count == 0 || sw.y.count == 0 || sw.z.count == 0 {
                return usage("sweep ranges need count >= 1".into());
            }
        }
        if let Some(m) = &self.mixed {
            match (&m.weights, m.beta) {
                (Some(_), Some(_)) | (None, None) => return usage("mixed needs exactly one of weights, beta".into()),
                (Some(w), None) if w.is_empty() => return usage("mixed weights must not be empty".into()),
                _ => {}
            }
        }
        if let Some(wz) = &self.wz {
            if wz.rank == 0 {
                return usage("wz rank must be positive".into());
            }
            if self.system != SystemKind::Oscillator {
                return usage("wz holonomies are supported for the oscillator system".into());
            }
        }
        if self.mixed.is_some() && self.system != SystemKind::Oscillator {
            return usage("mixed states are supported for the oscillator system".into());
        }
        if self.verify.ensemble == 0 {
            return usage("verify ensemble must be positive".into());
        }
        if self.system == SystemKind::SeparableProduct && self.backend == Some(BackendChoice::Grid) {
            return usage("separable-product uses the analytic mode states".into());
        }
        Ok(())
    }

    pub fn backend(&self) -> BackendChoice {
        self.backend.unwrap_or(match self.system {
            SystemKind::GridCustom => BackendChoice::Grid,
            _ => BackendChoice::Analytic,
        })
    }

    /// Explicit points followed by the sweep, in row-major `(x, y, z)` order.
    pub fn curvature_points(&self) -> Vec<ParamPoint> {
        let mut out: Vec<ParamPoint> = self.points.iter().map(|p| ParamPoint::from(*p)).collect();
        if let Some(sw) = &self.sweep {
            for x in sw.x.values() {
                for y in sw.y.values() {
                    for z in sw.z.values() {
                        out.push(ParamPoint::from([x, y, z]));
                    }
                }
            }
        }
        out
    }

    /// Copy with every optional choice resolved.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        r.backend = Some(self.backend());
        r
    }
}
