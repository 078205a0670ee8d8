//! Eigenstates of the quantized system on a periodic grid, gauge-invariant
//! Berry curvature from plaquette overlaps, Berry phases and Wilczek-Zee
//! loop holonomies of degenerate families.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{oscillator_frequency, DisplacedAnharmonic, NaturalSystem};
use crate::error::{Error, Result};
use crate::geometry::{surface_integral, Circuit, ParamPoint, Surface, TwoForm, TwoFormField};
use crate::specfun::hermite_functions;

/// Default relative plaquette step.
pub const DEFAULT_PLAQUETTE_STEP: f64 = 1e-2;
/// Largest admissible edge amplitude of a state on the grid.
pub const EDGE_TOLERANCE: f64 = 1e-12;
/// Smallest admissible overlap magnitude between neighbouring states.
pub const MIN_OVERLAP: f64 = 0.1;
/// Smallest admissible singular value of a loop overlap matrix.
pub const MIN_SINGULAR_VALUE: f64 = 0.1;
pub const MIN_GRID_POINTS: usize = 128;
pub const MAX_GRID_POINTS: usize = 4096;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Uniform periodic grid `q_j = q_min + j h`, `j = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub n_points: usize,
}

impl SpatialGrid {
    pub fn new(q_min: f64, q_max: f64, n_points: usize) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite() && q_max > q_min) {
            return Err(Error::Domain(format!("grid interval [{q_min}, {q_max}) is empty")));
        }
        if n_points < MIN_GRID_POINTS || !n_points.is_power_of_two() || n_points > MAX_GRID_POINTS {
            return Err(Error::Domain(format!(
                "grid size must be a power of two in [{MIN_GRID_POINTS}, {MAX_GRID_POINTS}], got {n_points}"
            )));
        }
        Ok(Self {
            q_min,
            q_max,
            n_points,
        })
    }

    /// Grid on `[centre - half_width, centre + half_width)`.
    pub fn centered(centre: f64, half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(centre - half_width, centre + half_width, n_points)
    }

    /// Smallest grid resolving oscillator levels `0..=n_max` at every point
    /// of `points` to the edge tolerance, in both position and momentum.
    pub fn for_oscillator(points: &[ParamPoint], n_max: usize, hbar: f64) -> Result<Self> {
        check_hbar(hbar)?;
        let c = ((2 * n_max + 1) as f64).sqrt() + 10.0;
        let mut half = 0.0f64;
        let mut p_ext = 0.0f64;
        for x in points {
            let w = oscillator_frequency(x)?;
            half = half.max(c * (hbar * x[2] / w).sqrt());
            p_ext = p_ext.max(c * (hbar * x[0] / w).sqrt());
        }
        half *= 1.05;
        p_ext *= 1.05;
        // Nyquist momentum pi hbar / h must exceed p_ext
        let needed = 2.0 * half * p_ext / (PI * hbar);
        let mut n = MIN_GRID_POINTS;
        while (n as f64) < needed {
            n *= 2;
        }
        Self::centered(0.0, half, n)
    }

    pub fn spacing(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_points as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.q_min + j as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.point(j)).collect()
    }

    /// Angular wavenumbers in FFT order; the Nyquist entry is negative.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (n as f64 * self.spacing());
        (0..n)
            .map(|m| {
                let s = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                s * dk
            })
            .collect()
    }

    /// `h sum conj(a) b`.
    pub fn inner(&self, a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
        a.dotc(b) * self.spacing()
    }

    pub fn norm(&self, a: &DVector<Complex64>) -> f64 {
        self.inner(a, a).re.sqrt()
    }
}

fn check_hbar(hbar: f64) -> Result<()> {
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::Domain(format!("hbar must be positive, got {hbar}")));
    }
    Ok(())
}

/// Largest modulus at the two ends of the grid.
pub fn edge_amplitude(psi: &DVector<Complex64>) -> f64 {
    let n = psi.len();
    psi[0].norm().max(psi[n - 1].norm())
}

fn check_edges(psi: &DVector<Complex64>) -> Result<()> {
    let a = edge_amplitude(psi);
    if !(a < EDGE_TOLERANCE) {
        return Err(Error::GridTooNarrow {
            amplitude: a,
            limit: EDGE_TOLERANCE,
        });
    }
    Ok(())
}

/// Closed-form eigenfunction `sqrt(a) chi_n(a q) exp(-i Y q^2 / 2 Z hbar)`,
/// `a = sqrt(w / Z hbar)`, sampled on the grid.
pub fn analytic_oscillator_state(
    n: usize,
    x: &ParamPoint,
    hbar: f64,
    grid: &SpatialGrid,
) -> Result<DVector<Complex64>> {
    Ok(analytic_oscillator_states(n, x, hbar, grid)?.pop().expect("n + 1 states"))
}

/// Levels `0..=n_max` of the closed form, sharing one Hermite recurrence.
pub fn analytic_oscillator_states(
    n_max: usize,
    x: &ParamPoint,
    hbar: f64,
    grid: &SpatialGrid,
) -> Result<Vec<DVector<Complex64>>> {
    check_hbar(hbar)?;
    let w = oscillator_frequency(x)?;
    let (y, z) = (x[1], x[2]);
    let alpha = (w / (z * hbar)).sqrt();
    let scale = alpha.sqrt();
    let mut states = vec![DVector::from_element(grid.n_points, ZERO); n_max + 1];
    for j in 0..grid.n_points {
        let q = grid.point(j);
        let chi = hermite_functions(n_max, alpha * q);
        let chirp = Complex64::from_polar(scale, -y * q * q / (2.0 * z * hbar));
        for (k, s) in states.iter_mut().enumerate() {
            s[j] = chirp * chi[k];
        }
    }
    for s in &states {
        check_edges(s)?;
        let norm = grid.norm(s);
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Aliasing(format!(
                "closed-form state has grid norm {norm}; the grid does not resolve it"
            )));
        }
    }
    Ok(states)
}

/// Spectral momentum operators `(P, P^2)` on the grid. The Nyquist mode is
/// dropped from `P` (keeping it hermitian) and kept in `P^2`.
pub fn momentum_matrices(grid: &SpatialGrid, hbar: f64) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = grid.n_points;
    let h = grid.spacing();
    let ks = grid.wavenumbers();
    let mut c1 = vec![ZERO; n];
    let mut c2 = vec![ZERO; n];
    for (d, (a, b)) in c1.iter_mut().zip(c2.iter_mut()).enumerate() {
        for (m, &k) in ks.iter().enumerate() {
            let e = Complex64::from_polar(1.0, k * d as f64 * h);
            if m != n / 2 {
                *a += e * k;
            }
            *b += e * (k * k);
        }
        *a *= hbar / n as f64;
        *b *= hbar * hbar / n as f64;
    }
    let p = DMatrix::from_fn(n, n, |j, l| c1[(j + n - l) % n]);
    let p2 = DMatrix::from_fn(n, n, |j, l| c2[(j + n - l) % n]);
    (p, p2)
}

fn hermitize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)].im = 0.0;
        for l in (j + 1)..n {
            let v = 0.5 * (m[(j, l)] + m[(l, j)].conj());
            m[(j, l)] = v;
            m[(l, j)] = v.conj();
        }
    }
}

/// Grid matrices `(q^2, qp + pq, p^2) / 2`, so that `H(X) = X A + Y B + Z C`.
pub fn oscillator_hamiltonian_parts(hbar: f64, grid: &SpatialGrid) -> Result<[DMatrix<Complex64>; 3]> {
    check_hbar(hbar)?;
    let (p, p2) = momentum_matrices(grid, hbar);
    let q = grid.points();
    let n = grid.n_points;
    let a = DMatrix::from_fn(n, n, |j, l| {
        if j == l {
            Complex64::new(0.5 * q[j] * q[j], 0.0)
        } else {
            ZERO
        }
    });
    let mut b = DMatrix::from_fn(n, n, |j, l| 0.5 * (q[j] + q[l]) * p[(j, l)]);
    let mut c = p2 * Complex64::new(0.5, 0.0);
    hermitize(&mut b);
    hermitize(&mut c);
    Ok([a, b, c])
}

/// Weyl-ordered `(X q^2 + Y (qp + pq) + Z p^2) / 2` on the grid.
pub fn grid_hamiltonian(x: &ParamPoint, hbar: f64, grid: &SpatialGrid) -> Result<DMatrix<Complex64>> {
    oscillator_frequency(x)?;
    let [a, b, c] = oscillator_hamiltonian_parts(hbar, grid)?;
    Ok(a * Complex64::new(x[0], 0.0) + b * Complex64::new(x[1], 0.0) + c * Complex64::new(x[2], 0.0))
}

/// Quantum system with an explicit grid Hamiltonian.
pub trait QuantumSystem: Sync {
    fn param_dim(&self) -> usize;
    fn check_domain(&self, x: &ParamPoint) -> Result<()>;
    fn hamiltonian(&self, x: &ParamPoint, hbar: f64, grid: &SpatialGrid) -> Result<DMatrix<Complex64>>;

    /// Matrices `H_k` with `H(X) = sum_k X_k H_k`, when the Hamiltonian is
    /// linear in the parameters.
    fn linear_parts(&self, _hbar: f64, _grid: &SpatialGrid) -> Option<Result<Vec<DMatrix<Complex64>>>> {
        None
    }
}

/// The generalized oscillator.
#[derive(Debug, Clone, Copy, Default)]
pub struct OscillatorSystem;

impl QuantumSystem for OscillatorSystem {
    fn param_dim(&self) -> usize {
        3
    }
    fn check_domain(&self, x: &ParamPoint) -> Result<()> {
        oscillator_frequency(x).map(|_| ())
    }
    fn hamiltonian(&self, x: &ParamPoint, hbar: f64, grid: &SpatialGrid) -> Result<DMatrix<Complex64>> {
        grid_hamiltonian(x, hbar, grid)
    }
    fn linear_parts(&self, hbar: f64, grid: &SpatialGrid) -> Option<Result<Vec<DMatrix<Complex64>>>> {
        Some(oscillator_hamiltonian_parts(hbar, grid).map(Vec::from))
    }
}

impl QuantumSystem for DisplacedAnharmonic {
    fn param_dim(&self) -> usize {
        3
    }
    fn check_domain(&self, x: &ParamPoint) -> Result<()> {
        NaturalSystem::check_domain(self, x)
    }
    fn hamiltonian(&self, x: &ParamPoint, hbar: f64, grid: &SpatialGrid) -> Result<DMatrix<Complex64>> {
        check_hbar(hbar)?;
        NaturalSystem::check_domain(self, x)?;
        let (p, p2) = momentum_matrices(grid, hbar);
        let b = self.momentum_shift(x);
        let m = NaturalSystem::mass(self, x);
        let n = grid.n_points;
        let mut h = (p2 - p * Complex64::new(2.0 * b, 0.0)) * Complex64::new(0.5 / m, 0.0);
        for j in 0..n {
            h[(j, j)] += b * b / (2.0 * m) + self.potential(grid.point(j), x);
        }
        hermitize(&mut h);
        Ok(h)
    }
}

/// Which eigenstate construction produced an [`EigenstateSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    AnalyticOscillator,
    Grid,
}

/// Source of eigenstates.
#[derive(Clone, Copy)]
pub enum Backend<'a> {
    /// Closed-form oscillator eigenfunctions sampled on the grid.
    AnalyticOscillator,
    /// Dense diagonalization of a grid Hamiltonian.
    Grid(&'a dyn QuantumSystem),
}

impl Backend<'_> {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::AnalyticOscillator => BackendKind::AnalyticOscillator,
            Backend::Grid(_) => BackendKind::Grid,
        }
    }
}

/// Lowest eigenpairs at one parameter point. States are grid function
/// values, orthonormal under [`SpatialGrid::inner`].
#[derive(Debug, Clone)]
pub struct EigenstateSet {
    pub x: ParamPoint,
    pub hbar: f64,
    pub energies: Vec<f64>,
    pub states: Vec<DVector<Complex64>>,
    pub backend: BackendKind,
    pub grid: SpatialGrid,
}

impl EigenstateSet {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// `max |<m|n> - delta_mn|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (m, a) in self.states.iter().enumerate() {
            for (n, b) in self.states.iter().enumerate().skip(m) {
                let target = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((self.grid.inner(a, b) - target).norm());
            }
        }
        worst
    }
}

/// Eigenstates `0..n_levels` at `x`.
pub fn eigenstates(
    backend: Backend<'_>,
    x: &ParamPoint,
    hbar: f64,
    grid: &SpatialGrid,
    n_levels: usize,
) -> Result<EigenstateSet> {
    if n_levels == 0 {
        return Err(Error::Domain("at least one level is required".into()));
    }
    check_hbar(hbar)?;
    match backend {
        Backend::AnalyticOscillator => {
            let w = oscillator_frequency(x)?;
            let states = analytic_oscillator_states(n_levels - 1, x, hbar, grid)?;
            let energies = (0..n_levels).map(|n| hbar * w * (n as f64 + 0.5)).collect();
            Ok(EigenstateSet {
                x: x.clone(),
                hbar,
                energies,
                states,
                backend: BackendKind::AnalyticOscillator,
                grid: *grid,
            })
        }
        Backend::Grid(system) => {
            system.check_domain(x)?;
            if n_levels > grid.n_points {
                return Err(Error::Domain(format!(
                    "{n_levels} levels requested on a {}-point grid",
                    grid.n_points
                )));
            }
            let h = system.hamiltonian(x, hbar, grid)?;
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..grid.n_points).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let scale = 1.0 / grid.spacing().sqrt();
            let mut energies = Vec::with_capacity(n_levels);
            let mut states = Vec::with_capacity(n_levels);
            for &k in order.iter().take(n_levels) {
                energies.push(eig.eigenvalues[k]);
                let mut v: DVector<Complex64> = eig.eigenvectors.column(k).into_owned();
                let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(ZERO);
                let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex64::new(1.0, 0.0) };
                v *= phase * scale;
                check_edges(&v)?;
                states.push(v);
            }
            Ok(EigenstateSet {
                x: x.clone(),
                hbar,
                energies,
                states,
                backend: BackendKind::Grid,
                grid: *grid,
            })
        }
    }
}

/// Closed form `(n + 1/2) / (4 w^3) (X dY^dZ + Y dZ^dX + Z dX^dY)`.
pub fn oscillator_curvature_exact(n: usize, x: &ParamPoint) -> Result<TwoForm> {
    let w = oscillator_frequency(x)?;
    Ok(TwoForm::from_vector3([x[0], x[1], x[2]]).scaled((n as f64 + 0.5) / (4.0 * w.powi(3))))
}

/// Berry phase of a surface, raw and reduced to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryPhase {
    pub raw: f64,
    pub wrapped: f64,
}

impl BerryPhase {
    pub fn new(raw: f64) -> Self {
        Self {
            raw,
            wrapped: wrap_phase(raw),
        }
    }
}

/// Reduce to `(-pi, pi]`.
pub fn wrap_phase(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Hilbert-space route to the Berry curvature: plaquette overlaps around a
/// small square centred on the evaluation point, of side
/// `delta * max(1, |X|_inf)`, giving `F_ij = arg(product) / side^2`.
#[derive(Clone, Copy)]
pub struct HilbertRoute<'a> {
    pub backend: Backend<'a>,
    pub grid: SpatialGrid,
    pub hbar: f64,
    pub delta: f64,
}

impl<'a> HilbertRoute<'a> {
    pub fn new(backend: Backend<'a>, grid: SpatialGrid, hbar: f64) -> Self {
        Self {
            backend,
            grid,
            hbar,
            delta: DEFAULT_PLAQUETTE_STEP,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn side(&self, x: &ParamPoint) -> f64 {
        self.delta * x.max_abs().max(1.0)
    }

    fn corners(&self, x: &ParamPoint, i: usize, j: usize) -> [ParamPoint; 4] {
        let s = 0.5 * self.side(x);
        [
            x.shifted2(i, -s, j, -s),
            x.shifted2(i, s, j, -s),
            x.shifted2(i, s, j, s),
            x.shifted2(i, -s, j, s),
        ]
    }

    fn solve_corners(&self, corners: &[ParamPoint], n_levels: usize) -> Result<Vec<EigenstateSet>> {
        corners
            .par_iter()
            .map(|c| {
                eigenstates(self.backend, c, self.hbar, &self.grid, n_levels).map_err(|e| match e {
                    Error::Domain(msg) => Error::Validation(format!(
                        "plaquette corner {c} leaves the domain: {msg}"
                    )),
                    other => other,
                })
            })
            .collect()
    }

    fn plaquette(&self, sets: &[EigenstateSet], n: usize, side: f64) -> Result<f64> {
        // gap check: how far the smaller neighbouring gap moves across the square
        let gaps: Vec<f64> = sets
            .iter()
            .map(|s| {
                let up = s.energies[n + 1] - s.energies[n];
                if n > 0 {
                    up.min(s.energies[n] - s.energies[n - 1])
                } else {
                    up
                }
            })
            .collect();
        let gmin = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let gmax = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let threshold = 10.0 * (gmax - gmin);
        if !(gmin > threshold) || !(gmin > 0.0) {
            return Err(Error::GapCollapse {
                level: n,
                gap: gmin,
                threshold,
            });
        }
        let mut prod = Complex64::new(1.0, 0.0);
        for k in 0..4 {
            let o = self.grid.inner(&sets[k].states[n], &sets[(k + 1) % 4].states[n]);
            if o.norm() < MIN_OVERLAP {
                return Err(Error::SmallOverlap(o.norm()));
            }
            prod *= o / o.norm();
        }
        Ok(prod.arg() / (side * side))
    }

    /// One component `F_ij` of the curvature of level `n`.
    pub fn curvature_component(&self, n: usize, x: &ParamPoint, i: usize, j: usize) -> Result<f64> {
        if i >= x.dim() || j >= x.dim() || i == j {
            return Err(Error::Domain(format!("invalid plane ({i}, {j})")));
        }
        let corners = self.corners(x, i, j);
        let sets = self.solve_corners(&corners, n + 2)?;
        self.plaquette(&sets, n, self.side(x))
    }

    /// Curvature of level `n` in every coordinate plane.
    pub fn curvature(&self, n: usize, x: &ParamPoint) -> Result<TwoForm> {
        Ok(self.curvature_levels(&[n], x)?.pop().expect("one level"))
    }

    /// Curvatures of several levels, sharing the corner eigen-solves.
    pub fn curvature_levels(&self, levels: &[usize], x: &ParamPoint) -> Result<Vec<TwoForm>> {
        let top = levels.iter().copied().max().ok_or_else(|| {
            Error::Domain("empty level list".into())
        })?;
        let d = x.dim();
        let side = self.side(x);
        let mut out = vec![TwoForm::zeros(d); levels.len()];
        for i in 0..d {
            for j in (i + 1)..d {
                let sets = self.solve_corners(&self.corners(x, i, j), top + 2)?;
                for (form, &n) in out.iter_mut().zip(levels) {
                    form.set(i, j, self.plaquette(&sets, n, side)?);
                }
            }
        }
        Ok(out)
    }

    /// `gamma_n = -int int_Sigma F`.
    pub fn berry_phase(&self, n: usize, surface: &Surface, order: usize) -> Result<BerryPhase> {
        let field = LevelCurvature { route: self, level: n };
        Ok(BerryPhase::new(-surface_integral(&field, surface, order)?))
    }
}

/// Curvature field of one level along a [`HilbertRoute`].
pub struct LevelCurvature<'r, 'a> {
    pub route: &'r HilbertRoute<'a>,
    pub level: usize,
}

impl TwoFormField for LevelCurvature<'_, '_> {
    fn eval(&self, x: &ParamPoint) -> Result<TwoForm> {
        self.route.curvature(self.level, x)
    }
}

/// A smooth family of `rank` orthonormal states, e.g. a degenerate
/// eigenspace. Frames are grid function values of length
/// `internal_dim * n_points` (internal index major), orthonormal under
/// `h V^dagger V = 1`.
pub trait DegenerateFamily: Sync {
    fn rank(&self) -> usize;
    fn internal_dim(&self) -> usize;
    fn grid(&self) -> &SpatialGrid;
    fn frame(&self, x: &ParamPoint) -> Result<DMatrix<Complex64>>;

    /// `h V^dagger V`.
    fn gram(&self, x: &ParamPoint) -> Result<DMatrix<Complex64>> {
        let v = self.frame(x)?;
        Ok(v.adjoint() * &v * Complex64::new(self.grid().spacing(), 0.0))
    }
}

/// Internal frame as a function of the parameters: columns orthonormal.
pub type FrameFn = Arc<dyn Fn(&ParamPoint) -> DMatrix<Complex64> + Send + Sync>;

/// Oscillator level `n` tensored with an internal frame.
pub struct OscillatorFrameFamily {
    pub level: usize,
    pub hbar: f64,
    pub grid: SpatialGrid,
    pub internal: FrameFn,
    internal_dim: usize,
    rank: usize,
}

impl OscillatorFrameFamily {
    pub fn new(
        level: usize,
        hbar: f64,
        grid: SpatialGrid,
        internal_dim: usize,
        rank: usize,
        internal: FrameFn,
    ) -> Result<Self> {
        if rank == 0 || rank > internal_dim {
            return Err(Error::Domain(format!(
                "rank {rank} impossible with internal dimension {internal_dim}"
            )));
        }
        Ok(Self {
            level,
            hbar,
            grid,
            internal,
            internal_dim,
            rank,
        })
    }

    /// Family with an X-independent internal frame `e_1..e_rank`.
    pub fn constant_frame(level: usize, hbar: f64, grid: SpatialGrid, rank: usize) -> Result<Self> {
        let frame = DMatrix::from_fn(rank, rank, |a, b| if a == b { Complex64::new(1.0, 0.0) } else { ZERO });
        Self::new(level, hbar, grid, rank, rank, Arc::new(move |_| frame.clone()))
    }
}

impl DegenerateFamily for OscillatorFrameFamily {
    fn rank(&self) -> usize {
        self.rank
    }
    fn internal_dim(&self) -> usize {
        self.internal_dim
    }
    fn grid(&self) -> &SpatialGrid {
        &self.grid
    }
    fn frame(&self, x: &ParamPoint) -> Result<DMatrix<Complex64>> {
        let psi = analytic_oscillator_state(self.level, x, self.hbar, &self.grid)?;
        let u = (self.internal)(x);
        if u.nrows() != self.internal_dim || u.ncols() != self.rank {
            return Err(Error::Validation(format!(
                "internal frame is {}x{}, expected {}x{}",
                u.nrows(),
                u.ncols(),
                self.internal_dim,
                self.rank
            )));
        }
        let n = self.grid.n_points;
        Ok(DMatrix::from_fn(self.internal_dim * n, self.rank, |r, a| {
            u[(r / n, a)] * psi[r % n]
        }))
    }
}

/// Smooth unitary `U(X) = exp(i (H_0 + sum_k X_k H_k))` with hermitian
/// generators.
#[derive(Debug, Clone)]
pub struct SmoothGauge {
    pub base: DMatrix<Complex64>,
    pub slopes: Vec<DMatrix<Complex64>>,
}

impl SmoothGauge {
    /// Generators with independent Gaussian entries of standard deviation
    /// `strength`, drawn from a seeded stream.
    pub fn random(rank: usize, param_dim: usize, strength: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || random_hermitian(rank, strength, &mut rng);
        let base = draw();
        let slopes = (0..param_dim).map(|_| draw()).collect();
        Self { base, slopes }
    }

    pub fn rank(&self) -> usize {
        self.base.nrows()
    }

    pub fn at(&self, x: &ParamPoint) -> DMatrix<Complex64> {
        let mut g = self.base.clone();
        for (k, s) in self.slopes.iter().enumerate() {
            g += s * Complex64::new(x[k], 0.0);
        }
        unitary_exp(&g)
    }
}

fn random_hermitian<R: Rng>(n: usize, strength: f64, rng: &mut R) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(n, n, ZERO);
    for a in 0..n {
        m[(a, a)] = Complex64::new(strength * rng.sample::<f64, _>(StandardNormal), 0.0);
        for b in (a + 1)..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let v = Complex64::new(re, im) * (strength / 2f64.sqrt());
            m[(a, b)] = v;
            m[(b, a)] = v.conj();
        }
    }
    m
}

/// `exp(i G)` for hermitian `G`, via its eigen-decomposition.
pub fn unitary_exp(g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(g.clone());
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, l)));
    v * d * v.adjoint()
}

/// Gauge-transformed family: frame `V(X) U(X)^dagger`, so that holonomies
/// and curvatures transform as `U W U^dagger`.
pub struct GaugedFamily<'a> {
    pub inner: &'a dyn DegenerateFamily,
    pub gauge: Arc<dyn Fn(&ParamPoint) -> DMatrix<Complex64> + Send + Sync + 'a>,
}

impl DegenerateFamily for GaugedFamily<'_> {
    fn rank(&self) -> usize {
        self.inner.rank()
    }
    fn internal_dim(&self) -> usize {
        self.inner.internal_dim()
    }
    fn grid(&self) -> &SpatialGrid {
        self.inner.grid()
    }
    fn frame(&self, x: &ParamPoint) -> Result<DMatrix<Complex64>> {
        Ok(self.inner.frame(x)? * (self.gauge)(x).adjoint())
    }
}

/// Wilczek-Zee holonomy of a family around a circuit: the ordered product
/// `P` of polar-unitarized overlap matrices `<a; X_k | b; X_k+1>`, returned
/// as `P^dagger` (a rank-one family gives `exp(i gamma)`).
pub fn wz_connection_loop(family: &dyn DegenerateFamily, circuit: &Circuit) -> Result<DMatrix<Complex64>> {
    let pts = circuit.sample_points();
    let frames: Vec<DMatrix<Complex64>> = pts
        .par_iter()
        .map(|x| family.frame(x))
        .collect::<Result<_>>()?;
    let h = Complex64::new(family.grid().spacing(), 0.0);
    let rank = family.rank();
    let mut p = DMatrix::<Complex64>::identity(rank, rank);
    for k in 0..frames.len() - 1 {
        let m = frames[k].adjoint() * &frames[k + 1] * h;
        let svd = m.svd(true, true);
        let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
        if smin < MIN_SINGULAR_VALUE {
            return Err(Error::IllConditioned { step: k, sigma_min: smin });
        }
        let u = svd.u.expect("left vectors");
        let vt = svd.v_t.expect("right vectors");
        p *= u * vt;
    }
    Ok(p.adjoint())
}
