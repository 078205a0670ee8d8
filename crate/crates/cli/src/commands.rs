use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use wignerphase::classical::{hannay_angle, ActionAngleChart, ClassicalOptions, DisplacedAnharmonic, NumericChart};
use wignerphase::dynamics::{
    convergence_table, ensemble_angles, evolve_classical, integrated_energy, mixed_phase_numeric, ConvergenceTable,
    QuantumOptions, Schedule, TrajectoryOptions,
};
use wignerphase::phasespace::{
    convention_notes, curvature_separable, matrix_to_nested, mixed_phase, semiclassical_check, surface_samples,
    ActionQuadrature, ChartForm, ClassicalForm, ConstantProfile, Diagnostics, MixedPhaseReport, PhaseReport,
    PhaseValue, ProfileSource, SemiclassicalOptions, WignerCurvatureField, DEFAULT_MASLOV,
};
use wignerphase::quantum::{
    eigenstates, wrap_phase, wz_connection_loop, GaugedFamily, OscillatorFrameFamily, OscillatorSystem, SmoothGauge,
};
use wignerphase::specfun::QuadratureRule;
use wignerphase::wigner::{mixed_radial_wigner, radial_reduce, thermal_weights, wigner_transform};
use wignerphase::{
    curvature_from_wigner, oscillator_frequency, oscillator_radial_wigner, Backend, BerryPhase, Circuit,
    HilbertRoute, OscillatorChart, ParamPoint, RadialWigner, SpatialGrid, Surface, TwoForm,
};

use crate::config::{BackendChoice, RunConfig, SystemKind};
use crate::output::{level_name, Csv, OutDir};
use crate::CliError;

type Res<T> = Result<T, CliError>;

const CURVATURE_HEADER: [&str; 6] = ["X", "Y", "Z", "F_YZ", "F_ZX", "F_XY"];

/// Model choices shared by every command.
pub struct Model {
    pub cfg: RunConfig,
    anharmonic: DisplacedAnharmonic,
    numeric: NumericChart<DisplacedAnharmonic>,
}

impl Model {
    pub fn new(cfg: RunConfig) -> Self {
        let anharmonic = DisplacedAnharmonic {
            mass: cfg.anharmonic.mass,
            stiffness: cfg.anharmonic.stiffness,
        };
        Self {
            cfg,
            anharmonic,
            numeric: NumericChart::new(anharmonic),
        }
    }

    fn hbar(&self) -> f64 {
        self.cfg.hbar
    }

    fn chart(&self) -> &dyn ActionAngleChart {
        match self.cfg.system {
            SystemKind::GridCustom => &self.numeric,
            _ => &OscillatorChart,
        }
    }

    fn backend(&self) -> Backend<'_> {
        match (self.cfg.system, self.cfg.backend()) {
            (SystemKind::GridCustom, _) => Backend::Grid(&self.anharmonic),
            (_, BackendChoice::Grid) => Backend::Grid(&OscillatorSystem),
            (_, BackendChoice::Analytic) => Backend::AnalyticOscillator,
        }
    }

    fn classical_opts(&self) -> Res<ClassicalOptions> {
        let mut o = ClassicalOptions::default().with_periodic_order(self.cfg.quadrature.angle_nodes)?;
        o.param_step = self.cfg.finite_difference.classical_param_step;
        Ok(o)
    }

    fn action_quad(&self) -> ActionQuadrature {
        ActionQuadrature {
            order: self.cfg.quadrature.laguerre_order,
            tail_tolerance: self.cfg.quadrature.tail_tolerance,
        }
    }

    fn check_point(&self, x: &ParamPoint) -> Res<()> {
        self.chart().check_domain(x)?;
        Ok(())
    }

    /// Grid covering levels up to `n_max` at every point, unless fixed by the config.
    fn grid(&self, points: &[ParamPoint], n_max: usize) -> Res<SpatialGrid> {
        let spec = self.cfg.grid;
        let auto = match self.cfg.system {
            SystemKind::GridCustom => {
                let a: Vec<f64> = points.iter().map(|x| x[0]).collect();
                let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let half = 0.5 * (hi - lo) + 9.0 * self.hbar().sqrt().max(1.0) + (2.0 * n_max as f64 * self.hbar()).sqrt();
                SpatialGrid::centered(0.5 * (lo + hi), half, 256)?
            }
            _ => SpatialGrid::for_oscillator(points, n_max, self.hbar())?,
        };
        if spec == Default::default() {
            return Ok(auto);
        }
        let centre = spec.centre.unwrap_or(0.5 * (auto.q_min + auto.q_max));
        let half = spec.half_width.unwrap_or(0.5 * (auto.q_max - auto.q_min));
        Ok(SpatialGrid::centered(centre, half, spec.n_points.unwrap_or(auto.n_points))?)
    }

    fn route<'a>(&'a self, grid: SpatialGrid) -> HilbertRoute<'a> {
        HilbertRoute::new(self.backend(), grid, self.hbar()).with_delta(self.cfg.finite_difference.plaquette_step)
    }

    /// Torus-averaged Wigner function of grid eigenstate `n` at `x`.
    fn grid_profile(&self, n: usize, x: &ParamPoint, grid: &SpatialGrid) -> Res<RadialWigner> {
        let set = eigenstates(self.backend(), x, self.hbar(), grid, n + 1)?;
        let map = wigner_transform(&set.states[n], grid, self.hbar())?;
        let q = &self.cfg.quadrature;
        let actions = QuadratureRule::gauss_legendre(q.action_nodes, 0.0, q.action_extent * self.hbar())?;
        let angles = QuadratureRule::periodic(q.angle_nodes)?;
        Ok(radial_reduce(&map, self.chart(), x, &actions, &angles)?.profile)
    }

    fn profile(&self, n: usize, x: &ParamPoint, grid: &SpatialGrid) -> Res<RadialWigner> {
        match self.cfg.system {
            SystemKind::GridCustom => self.grid_profile(n, x, grid),
            _ => Ok(oscillator_radial_wigner(n, self.hbar())?),
        }
    }

    fn energy(&self, n: usize, x: &ParamPoint, grid: &SpatialGrid) -> wignerphase::Result<f64> {
        match self.cfg.system {
            SystemKind::GridCustom => Ok(eigenstates(self.backend(), x, self.hbar(), grid, n + 1)?.energies[n]),
            _ => Ok(self.hbar() * oscillator_frequency(x)? * (n as f64 + 0.5)),
        }
    }

    fn schedule(&self, circuit: &Circuit) -> Res<Schedule> {
        let s = &self.cfg.schedule;
        Ok(Schedule::new(circuit.clone(), s.total_time, s.time_steps, s.profile)?)
    }

    fn quantum_opts(&self) -> QuantumOptions {
        QuantumOptions {
            subspace: self.cfg.schedule.subspace,
            ..QuantumOptions::default()
        }
    }

    /// Levels whose states are needed; for a product these are the modes.
    fn levels(&self) -> &[usize] {
        &self.cfg.levels
    }

    fn separable(&self) -> bool {
        self.cfg.system == SystemKind::SeparableProduct
    }

    fn circuit(&self) -> Res<(Circuit, Surface)> {
        Ok(self.cfg.circuit.build()?)
    }
}

/// Radial profile recomputed from the grid at every parameter point.
struct GridProfiles<'a> {
    model: &'a Model,
    level: usize,
    grid: SpatialGrid,
}

impl ProfileSource for GridProfiles<'_> {
    fn profile(&self, x: &ParamPoint) -> wignerphase::Result<RadialWigner> {
        self.model.grid_profile(self.level, x, &self.grid).map_err(|e| match e {
            CliError::Core(c) => c,
            other => wignerphase::Error::Numerical(other.to_string()),
        })
    }
}

fn curvature_row(csv: &mut Csv, x: &ParamPoint, f: &TwoForm) {
    let v = f.as_vector3();
    csv.row(&[x[0], x[1], x[2], v[0], v[1], v[2]]);
}

pub fn curvature(model: &Model, out: &mut OutDir) -> Res<()> {
    let points = model.cfg.curvature_points();
    if points.is_empty() {
        return Err(CliError::Usage("curvature needs `points` or `sweep`".into()));
    }
    for x in &points {
        model.check_point(x)?;
    }
    let levels = model.levels().to_vec();
    let n_max = *levels.iter().max().expect("levels validated");
    let hbar = model.hbar();
    let opts = model.classical_opts()?;
    let quad = model.action_quad();

    // per point: (hilbert, phase space) for each output level
    let rows: Vec<Vec<(TwoForm, TwoForm)>> = points
        .par_iter()
        .map(|x| -> Res<Vec<(TwoForm, TwoForm)>> {
            let grid = model.grid(std::slice::from_ref(x), n_max + 1)?;
            let route = model.route(grid);
            let form = ChartForm::new(model.chart(), opts.clone());
            if model.separable() {
                let mut hil = TwoForm::zeros(3);
                for &n in &levels {
                    hil.add_scaled(1.0, &route.curvature(n, x)?);
                }
                let profiles = levels
                    .iter()
                    .map(|&n| oscillator_radial_wigner(n, hbar))
                    .collect::<wignerphase::Result<Vec<_>>>()?;
                let forms: Vec<&dyn ClassicalForm> = levels.iter().map(|_| &form as &dyn ClassicalForm).collect();
                let ps = curvature_separable(&profiles, &forms, x, hbar, &quad)?;
                return Ok(vec![(hil, ps.form)]);
            }
            levels
                .iter()
                .map(|&n| {
                    let hil = route.curvature(n, x)?;
                    let profile = model.profile(n, x, &grid)?;
                    let ps = curvature_from_wigner(&profile, &form, x, hbar, &quad)?;
                    Ok((hil, ps))
                })
                .collect()
        })
        .collect::<Res<Vec<_>>>()?;

    let outputs: Vec<usize> = if model.separable() { vec![levels.iter().sum()] } else { levels.clone() };
    let single = outputs.len() == 1;
    for (k, &n) in outputs.iter().enumerate() {
        let mut hil = Csv::new(&CURVATURE_HEADER);
        let mut ps = Csv::new(&CURVATURE_HEADER);
        let mut diff = Csv::new(&CURVATURE_HEADER);
        for (x, row) in points.iter().zip(&rows) {
            let (h, p) = &row[k];
            curvature_row(&mut hil, x, h);
            curvature_row(&mut ps, x, p);
            let mut d = h.clone();
            d.add_scaled(-1.0, p);
            curvature_row(&mut diff, x, &d);
        }
        out.write_csv(&level_name("curvature_hilbert", "csv", n, single), hil)?;
        out.write_csv(&level_name("curvature_phasespace", "csv", n, single), ps)?;
        out.write_csv(&level_name("curvature_diff", "csv", n, single), diff)?;
    }
    Ok(())
}

/// Phase report plus the per-mode levels of a product state.
#[derive(Serialize)]
struct PhaseOutput {
    #[serde(flatten)]
    report: PhaseReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode_levels: Option<Vec<usize>>,
}

fn gamma_phase_space(model: &Model, n: usize, surface: &Surface, grid: &SpatialGrid) -> Res<BerryPhase> {
    let opts = model.classical_opts()?;
    let form = ChartForm::new(model.chart(), opts);
    let order = model.cfg.quadrature.surface_order;
    let hbar = model.hbar();
    let quad = model.action_quad();
    let phase = match model.cfg.system {
        SystemKind::GridCustom => {
            let source = GridProfiles {
                model,
                level: n,
                grid: *grid,
            };
            WignerCurvatureField {
                profiles: &source,
                form: &form,
                hbar,
                quad,
            }
            .berry_phase(surface, order)?
        }
        _ => {
            let source = ConstantProfile(oscillator_radial_wigner(n, hbar)?);
            WignerCurvatureField {
                profiles: &source,
                form: &form,
                hbar,
                quad,
            }
            .berry_phase(surface, order)?
        }
    };
    Ok(phase)
}

fn mixed_report(
    model: &Model,
    circuit: &Circuit,
    surface: &Surface,
    grid: &SpatialGrid,
    schedule: &Schedule,
) -> Res<Option<MixedPhaseReport>> {
    let Some(spec) = &model.cfg.mixed else {
        return Ok(None);
    };
    let hbar = model.hbar();
    let weights = match (&spec.weights, spec.beta) {
        (Some(w), _) => w.clone(),
        (None, Some(beta)) => thermal_weights(beta, hbar, oscillator_frequency(&circuit.at(0.0))?, 1e-12)?,
        (None, None) => unreachable!("validated"),
    };
    let profiles = (0..weights.len())
        .map(|n| oscillator_radial_wigner(n, hbar))
        .collect::<wignerphase::Result<Vec<_>>>()?;
    let mix = mixed_radial_wigner(&weights, &profiles)?;
    let form = ChartForm::new(model.chart(), model.classical_opts()?);
    let order = model.cfg.quadrature.surface_order;
    let surface_formula = mixed_phase(&mix, &form, surface, hbar, &model.action_quad(), order)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, w) in weights.iter().enumerate() {
        acc += Complex64::from_polar(*w, gamma_phase_space(model, n, surface, grid)?.raw);
    }
    let (dynamics_total, dynamics_geometric) = if spec.dynamics {
        let grid = model.grid(&circuit.sample_points(), weights.len())?;
        let ev = mixed_phase_numeric(model.backend(), &weights, schedule, &grid, hbar, &model.quantum_opts())?;
        (Some(ev.total), Some(ev.geometric))
    } else {
        (None, None)
    };
    Ok(Some(MixedPhaseReport {
        weights,
        surface_formula: surface_formula.into(),
        from_berry_phases: acc.arg().into(),
        dynamics_total,
        dynamics_geometric,
    }))
}

fn wz_holonomy(model: &Model, n: usize, circuit: &Circuit, grid: SpatialGrid) -> Res<Option<Vec<Vec<[f64; 2]>>>> {
    let Some(spec) = model.cfg.wz else {
        return Ok(None);
    };
    let family = OscillatorFrameFamily::constant_frame(n, model.hbar(), grid, spec.rank)?;
    let w = if spec.gauge_strength > 0.0 {
        let gauge = SmoothGauge::random(spec.rank, 3, spec.gauge_strength, model.cfg.seed);
        let gauged = GaugedFamily {
            inner: &family,
            gauge: Arc::new(move |x| gauge.at(x)),
        };
        wz_connection_loop(&gauged, circuit)?
    } else {
        wz_connection_loop(&family, circuit)?
    };
    Ok(Some(matrix_to_nested(&w)))
}

fn phase_for(
    model: &Model,
    n: usize,
    circuit: &Circuit,
    surface: &Surface,
    grid: SpatialGrid,
    schedule: &Schedule,
) -> Res<PhaseReport> {
    let hbar = model.hbar();
    let order = model.cfg.quadrature.surface_order;
    let gamma_q = model.route(grid).berry_phase(n, surface, order)?;
    let gamma_ps = gamma_phase_space(model, n, surface, &grid)?;
    let action = hbar * (n as f64 + DEFAULT_MASLOV);
    let hannay = hannay_angle(model.chart(), action, surface, &model.classical_opts()?, order)?;
    let dynamical_phase = integrated_energy(|x| model.energy(n, x, &grid), schedule, hbar)?;
    let profile = model.profile(n, &circuit.at(0.0), &grid)?;
    Ok(PhaseReport {
        circuit: circuit.label.clone(),
        surface: surface.label.clone(),
        level: n,
        hbar,
        gamma_q: gamma_q.into(),
        gamma_ps: gamma_ps.into(),
        hannay,
        wz_holonomy: wz_holonomy(model, n, circuit, grid)?,
        mixed_phase: mixed_report(model, circuit, surface, &grid, schedule)?,
        dynamical_phase,
        diagnostics: Diagnostics {
            surface_order: order,
            laguerre_order: model.cfg.quadrature.laguerre_order,
            plaquette_step: model.cfg.finite_difference.plaquette_step,
            profile_normalization: profile.normalization(model.cfg.quadrature.laguerre_order)?,
            conventions: convention_notes(),
        },
    })
}

fn sum_phase(a: PhaseValue, b: PhaseValue) -> PhaseValue {
    PhaseValue::from(a.raw + b.raw)
}

pub fn phase(model: &Model, out: &mut OutDir) -> Res<()> {
    let (circuit, surface) = model.circuit()?;
    let mut samples = surface_samples(&surface, 9);
    samples.extend(circuit.sample_points());
    for x in &samples {
        model.check_point(x)?;
    }
    let levels = model.levels().to_vec();
    let n_max = *levels.iter().max().expect("levels validated");
    let grid = model.grid(&samples, n_max + 1)?;
    let schedule = model.schedule(&circuit)?;

    if model.separable() {
        let mut total: Option<PhaseReport> = None;
        for &n in &levels {
            let r = phase_for(model, n, &circuit, &surface, grid, &schedule)?;
            total = Some(match total {
                None => r,
                Some(mut t) => {
                    t.gamma_q = sum_phase(t.gamma_q, r.gamma_q);
                    t.gamma_ps = sum_phase(t.gamma_ps, r.gamma_ps);
                    t.hannay += r.hannay;
                    t.dynamical_phase += r.dynamical_phase;
                    t
                }
            });
        }
        let mut report = total.expect("levels validated");
        report.level = levels.iter().sum();
        let output = PhaseOutput {
            report,
            mode_levels: Some(levels),
        };
        out.write_json("phase_report.json", &output)?;
        return Ok(());
    }
    let reports = levels
        .iter()
        .map(|&n| phase_for(model, n, &circuit, &surface, grid, &schedule))
        .collect::<Res<Vec<_>>>()?;
    let single = reports.len() == 1;
    for r in reports {
        if !r.is_finite() {
            return Err(CliError::Core(wignerphase::Error::Numerical(format!(
                "non-finite entries in the level {} report",
                r.level
            ))));
        }
        let name = level_name("phase_report", "json", r.level, single);
        out.write_json(
            &name,
            &PhaseOutput {
                report: r,
                mode_levels: None,
            },
        )?;
    }
    Ok(())
}

fn wigner_point(model: &Model) -> ParamPoint {
    if let Some(p) = model.cfg.wigner.point {
        return ParamPoint::from(p);
    }
    model
        .cfg
        .curvature_points()
        .into_iter()
        .next()
        .unwrap_or_else(|| ParamPoint::from([1.0, 0.0, 1.0]))
}

fn axis(half: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|k| -half + 2.0 * half * k as f64 / (count - 1) as f64)
        .collect()
}

pub fn wigner(model: &Model, out: &mut OutDir) -> Res<()> {
    let x = wigner_point(model);
    model.check_point(&x)?;
    let hbar = model.hbar();
    let spec = &model.cfg.wigner;
    let mut levels = model.levels().to_vec();
    levels.sort_unstable();
    levels.dedup();
    let n_max = *levels.last().expect("levels validated");
    let grid = model.grid(std::slice::from_ref(&x), n_max + 1)?;
    let set = eigenstates(model.backend(), &x, hbar, &grid, n_max + 1)?;
    let angles = QuadratureRule::periodic(model.cfg.quadrature.angle_nodes)?;
    let qs = axis(spec.q_half_width, spec.count);
    let ps = axis(spec.p_half_width, spec.count);
    let actions: Vec<f64> = (0..spec.radial_count)
        .map(|k| {
            if spec.radial_count == 1 {
                0.0
            } else {
                spec.radial_extent * hbar * k as f64 / (spec.radial_count - 1) as f64
            }
        })
        .collect();
    let single = levels.len() == 1;
    for &n in &levels {
        let map = wigner_transform(&set.states[n], &grid, hbar)?;
        let rows: Vec<Vec<[f64; 3]>> = qs
            .par_iter()
            .map(|&q| ps.iter().map(|&p| [q, p, map.eval(q, p)]).collect())
            .collect();
        let mut csv = Csv::new(&["q", "p", "W"]);
        for r in rows.iter().flatten() {
            csv.row(r);
        }
        out.write_csv(&level_name("wigner", "csv", n, single), csv)?;

        let radial = actions
            .par_iter()
            .map(|&i| -> Res<[f64; 2]> {
                let pts = model.chart().orbit(i, &angles.nodes, &x)?;
                let mut acc = 0.0;
                for ((q, p), w) in pts.into_iter().zip(&angles.weights) {
                    acc += w * map.eval(q, p);
                }
                Ok([i, acc / angles.weights.iter().sum::<f64>()])
            })
            .collect::<Res<Vec<_>>>()?;
        let mut csv = Csv::new(&["I", "W"]);
        for r in &radial {
            csv.row(r);
        }
        out.write_csv(&level_name("wigner_radial", "csv", n, single), csv)?;
    }
    Ok(())
}

pub fn hannay(model: &Model, out: &mut OutDir) -> Res<()> {
    let (circuit, surface) = model.circuit()?;
    for x in surface_samples(&surface, 9).iter().chain(&circuit.sample_points()) {
        model.check_point(x)?;
    }
    let hbar = model.hbar();
    let order = model.cfg.quadrature.surface_order;
    let opts = model.classical_opts()?;
    let mut levels = model.levels().to_vec();
    levels.sort_unstable();
    levels.dedup();
    let angles = levels
        .par_iter()
        .map(|&n| -> Res<[f64; 3]> {
            let action = hbar * (n as f64 + DEFAULT_MASLOV);
            Ok([n as f64, action, hannay_angle(model.chart(), action, &surface, &opts, order)?])
        })
        .collect::<Res<Vec<_>>>()?;
    let mut csv = Csv::new(&["n", "I", "hannay"]);
    for r in &angles {
        csv.row(r);
    }
    out.write_csv("hannay.csv", csv)?;

    if model.cfg.system != SystemKind::GridCustom {
        let sc_opts = SemiclassicalOptions {
            surface_order: order,
            classical: opts,
            quad: model.action_quad(),
            ..SemiclassicalOptions::default()
        };
        let reports = levels
            .par_iter()
            .map(|&n| semiclassical_check(&surface, n, hbar, &sc_opts))
            .collect::<wignerphase::Result<Vec<_>>>()?;
        let mut csv = Csv::new(&[
            "n",
            "hbar",
            "hannay",
            "level_difference",
            "action_derivative",
            "max_pairwise_difference",
        ]);
        for r in &reports {
            csv.row(&[
                r.level as f64,
                r.hbar,
                r.hannay,
                r.level_difference,
                r.action_derivative,
                r.max_pairwise_difference,
            ]);
        }
        out.write_csv("semiclassical.csv", csv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassicalSummary {
    action: f64,
    delta_theta: f64,
    hannay: f64,
    dynamical_angle: f64,
    action_drift: f64,
}

#[derive(Serialize)]
struct VerifySummary {
    level: usize,
    reference: f64,
    table: ConvergenceTable,
    classical: Option<ClassicalSummary>,
}

pub fn verify(model: &Model, out: &mut OutDir) -> Res<()> {
    let (circuit, surface) = model.circuit()?;
    let mut samples = surface_samples(&surface, 9);
    samples.extend(circuit.sample_points());
    for x in &samples {
        model.check_point(x)?;
    }
    let hbar = model.hbar();
    let mut levels = model.levels().to_vec();
    levels.sort_unstable();
    levels.dedup();
    let n_max = *levels.last().expect("levels validated");
    let grid = model.grid(&circuit.sample_points(), n_max + 1)?;
    let base = model.schedule(&circuit)?;
    let order = model.cfg.quadrature.surface_order;
    let single = levels.len() == 1;
    let mut summaries = Vec::with_capacity(levels.len());
    for &n in &levels {
        let reference = match model.cfg.system {
            SystemKind::GridCustom => model.route(grid).berry_phase(n, &surface, order)?.wrapped,
            _ => gamma_phase_space(model, n, &surface, &grid)?.wrapped,
        };
        let table = convergence_table(
            model.backend(),
            n,
            &base,
            &model.cfg.schedule.factors,
            &grid,
            hbar,
            reference,
            &model.quantum_opts(),
        )?;
        let mut csv = Csv::new(&["T", "leakage", "gamma_extracted", "error"]);
        for r in &table.rows {
            csv.row(&[r.total_time, r.leakage, r.gamma_extracted, r.error]);
        }
        out.write_csv(&level_name("verify", "csv", n, single), csv)?;

        let classical = if model.cfg.verify.classical {
            let last = table.rows.last().expect("factors validated");
            let sched = base.with_time(last.total_time, last.time_steps)?;
            let action = hbar * (n as f64 + DEFAULT_MASLOV);
            let ev = evolve_classical(
                model.chart(),
                action,
                &ensemble_angles(model.cfg.verify.ensemble),
                &sched,
                &TrajectoryOptions::default(),
            )?;
            let opts = model.classical_opts()?;
            Some(ClassicalSummary {
                action,
                delta_theta: ev.delta_theta,
                hannay: wrap_phase(hannay_angle(model.chart(), action, &surface, &opts, order)?),
                dynamical_angle: ev.dynamical_angle,
                action_drift: ev.action_drift,
            })
        } else {
            None
        };
        summaries.push(VerifySummary {
            level: n,
            reference,
            table,
            classical,
        });
    }
    out.write_json("verify_summary.json", &summaries)?;
    Ok(())
}

/// One golden check: name, pass flag and a short measurement.
type Check = (&'static str, bool, String);

fn golden_checks() -> wignerphase::Result<Vec<Check>> {
    let mut checks = Vec::new();
    let x = ParamPoint::from([1.0, 0.0, 1.0]);
    let want = [0.125, 0.0, 0.125];
    let dev = |f: [f64; 3]| f.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let grid = SpatialGrid::for_oscillator(std::slice::from_ref(&x), 1, 1.0)?;
    let f = HilbertRoute::new(Backend::AnalyticOscillator, grid, 1.0).curvature(0, &x)?;
    let d = dev(f.as_vector3());
    checks.push(("plaquette curvature n=0 at (1,0,1)", d < 2e-3, format!("max deviation {d:.2e}")));

    let opts = ClassicalOptions::default().with_periodic_order(64)?;
    let form = ChartForm::new(&OscillatorChart, opts.clone());
    let f = curvature_from_wigner(&oscillator_radial_wigner(0, 1.0)?, &form, &x, 1.0, &ActionQuadrature::default())?;
    let d = dev(f.as_vector3());
    checks.push(("phase-space curvature n=0 at (1,0,1)", d < 1e-6, format!("max deviation {d:.2e}")));

    let cap = wignerphase::make_cap_surface(1.0, 1.0)?;
    let k = PI * (1f64.cosh() - 1.0);
    let source = ConstantProfile(oscillator_radial_wigner(0, 1.0)?);
    let g = WignerCurvatureField {
        profiles: &source,
        form: &form,
        hbar: 1.0,
        quad: ActionQuadrature::default(),
    }
    .berry_phase(&cap, 8)?;
    let d = (g.raw + 0.5 * k).abs();
    checks.push(("cap r=1 phase-space gamma_0 = -0.85307", d < 1e-5, format!("gamma {:.6}", g.raw)));

    let cgrid = SpatialGrid::for_oscillator(&surface_samples(&cap, 9), 1, 1.0)?;
    let g = HilbertRoute::new(Backend::AnalyticOscillator, cgrid, 1.0).berry_phase(0, &cap, 8)?;
    let d = (g.raw + 0.5 * k).abs();
    checks.push(("cap r=1 plaquette gamma_0 = -0.85307", d < 1e-3, format!("gamma {:.6}", g.raw)));

    let h = hannay_angle(&OscillatorChart, 0.5, &cap, &opts, 8)?;
    let d = (h - k).abs();
    checks.push(("cap r=1 Hannay angle = 1.70614", d < 1e-5, format!("hannay {h:.6}")));

    let set = eigenstates(Backend::AnalyticOscillator, &x, 1.0, &grid, 2)?;
    let w = wigner_transform(&set.states[1], &grid, 1.0)?.eval(0.0, 0.0);
    let d = (w + 1.0 / PI).abs();
    checks.push(("Wigner n=1 at the origin = -1/pi", d < 1e-6, format!("W(0,0) {w:.8}")));

    let small = wignerphase::make_cap_surface(1.0, 0.5)?;
    let sc = semiclassical_check(&small, 1, 1.0, &SemiclassicalOptions::default())?;
    checks.push((
        "semiclassical agreement r=0.5 n=1",
        sc.max_pairwise_difference < 1e-4,
        format!("max pairwise {:.2e}", sc.max_pairwise_difference),
    ));

    let thermal = thermal_weights(1.0, 1.0, 1.0, 1e-12)?;
    let profiles = (0..thermal.len())
        .map(|n| oscillator_radial_wigner(n, 1.0))
        .collect::<wignerphase::Result<Vec<_>>>()?;
    let mix = mixed_radial_wigner(&thermal, &profiles)?;
    let mean: f64 = thermal.iter().enumerate().map(|(n, p)| p * (n as f64 + 0.5)).sum();
    let phi = mixed_phase(&mix, &wignerphase::phasespace::OscillatorExactForm, &cap, 1.0, &ActionQuadrature::default(), 8)?;
    let d = (phi - mean * k).abs();
    checks.push(("thermal mixed phase = <n + 1/2> pi (cosh r - 1)", d < 1e-8, format!("phi {phi:.8}")));
    Ok(checks)
}

/// Print one PASS/FAIL line per golden check; true when all pass.
pub fn selftest() -> Res<bool> {
    let checks = golden_checks()?;
    let mut ok = true;
    for (name, pass, detail) in &checks {
        println!("{} {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
        ok &= *pass;
    }
    Ok(ok)
}
