//! Parameter-space geometry: points, circuits, spanning surfaces, two-forms
//! and their surface integrals.
//!
//! Orientation convention: a surface `(u, v) -> X` is oriented by
//! `du ^ dv`. For disc-like surfaces the edge `u = 1` traversed with `v`
//! increasing is the boundary circuit, the edge `u = 0` collapses to a
//! point and the edges `v = 0`, `v = 1` coincide. The cap surfaces below
//! use `u = rho / r`, `v = phi / 2 pi`, so their orientation is
//! `d rho ^ d phi`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::QuadratureRule;

/// Central-difference step used for pullback Jacobians in `(u, v)`.
pub const PULLBACK_STEP: f64 = 1e-5;

/// A point of the parameter manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter point {coords:?}")));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Copy of this point displaced by `h` along coordinate `i`.
    pub fn shifted(&self, i: usize, h: f64) -> Self {
        let mut c = self.0.clone();
        c[i] += h;
        Self(c)
    }

    /// Copy displaced by `hi` along `i` and `hj` along `j`.
    pub fn shifted2(&self, i: usize, hi: f64, j: usize, hj: f64) -> Self {
        let mut c = self.0.clone();
        c[i] += hi;
        c[j] += hj;
        Self(c)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn distance(&self, other: &ParamPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl From<[f64; 3]> for ParamPoint {
    fn from(c: [f64; 3]) -> Self {
        Self(c.to_vec())
    }
}

impl From<Vec<f64>> for ParamPoint {
    fn from(c: Vec<f64>) -> Self {
        Self(c)
    }
}

impl std::ops::Index<usize> for ParamPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub type PathFn = Arc<dyn Fn(f64) -> ParamPoint + Send + Sync>;
pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> ParamPoint + Send + Sync>;

/// Closed loop `s in [0, 1] -> X(s)` in parameter space.
#[derive(Clone)]
pub struct Circuit {
    path: PathFn,
    pub samples: usize,
    pub label: String,
}

impl fmt::Debug for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Circuit")
            .field("label", &self.label)
            .field("samples", &self.samples)
            .finish()
    }
}

impl Circuit {
    /// Wraps a closed path; fails if `path(0) != path(1)` to 1e-12.
    pub fn new(path: PathFn, samples: usize, label: impl Into<String>) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Domain("circuit needs at least one sample".into()));
        }
        let c = Self {
            path,
            samples,
            label: label.into(),
        };
        let gap = c.at(0.0).distance(&c.at(1.0));
        if gap > 1e-12 {
            return Err(Error::Validation(format!(
                "circuit '{}' is not closed: |X(1) - X(0)| = {gap:.3e}",
                c.label
            )));
        }
        Ok(c)
    }

    pub fn at(&self, s: f64) -> ParamPoint {
        (self.path)(s)
    }

    pub fn dim(&self) -> usize {
        self.at(0.0).dim()
    }

    /// `samples + 1` points at `s = k / samples`; the last repeats the first
    /// exactly.
    pub fn sample_points(&self) -> Vec<ParamPoint> {
        let mut pts: Vec<ParamPoint> = (0..self.samples)
            .map(|k| self.at(k as f64 / self.samples as f64))
            .collect();
        pts.push(pts[0].clone());
        pts
    }

    /// The same loop traversed backwards.
    pub fn reversed(&self) -> Circuit {
        let path = self.path.clone();
        Circuit {
            path: Arc::new(move |s| path(1.0 - s)),
            samples: self.samples,
            label: format!("{} (reversed)", self.label),
        }
    }

    /// True when every sample coincides with `X(0)`.
    pub fn is_degenerate(&self) -> bool {
        let x0 = self.at(0.0);
        self.sample_points().iter().all(|p| p.distance(&x0) == 0.0)
    }
}

/// How a surface's boundary relates to the edges of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceKind {
    /// `u = 1` is the boundary, `u = 0` collapses, `v = 0 ~ v = 1`.
    Disc,
    /// The boundary is the full perimeter of the unit square.
    Patch,
}

/// A smooth map of the unit square into parameter space.
#[derive(Clone)]
pub struct Surface {
    map: SurfaceFn,
    pub boundary: Circuit,
    pub kind: SurfaceKind,
    pub label: String,
}

impl fmt::Debug for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Surface")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .finish()
    }
}

impl Surface {
    /// Disc-like surface spanning `boundary`. The boundary correspondence is
    /// checked at sample points to 1e-9.
    pub fn disc(map: SurfaceFn, boundary: Circuit, label: impl Into<String>) -> Result<Self> {
        let s = Self {
            map,
            boundary,
            kind: SurfaceKind::Disc,
            label: label.into(),
        };
        s.validate_boundary()?;
        Ok(s)
    }

    /// Rectangular patch; its boundary is the image of the square perimeter
    /// traversed counter-clockwise in `(u, v)`.
    pub fn patch(map: SurfaceFn, label: impl Into<String>) -> Self {
        let label = label.into();
        let m = map.clone();
        let perimeter: PathFn = Arc::new(move |s: f64| {
            let t = 4.0 * s.clamp(0.0, 1.0);
            if t < 1.0 {
                m(t, 0.0)
            } else if t < 2.0 {
                m(1.0, t - 1.0)
            } else if t < 3.0 {
                m(3.0 - t, 1.0)
            } else {
                m(0.0, 4.0 - t)
            }
        });
        let boundary = Circuit {
            path: perimeter,
            samples: 256,
            label: format!("boundary of {label}"),
        };
        Self {
            map,
            boundary,
            kind: SurfaceKind::Patch,
            label,
        }
    }

    pub fn at(&self, u: f64, v: f64) -> ParamPoint {
        (self.map)(u, v)
    }

    pub fn dim(&self) -> usize {
        self.at(0.5, 0.5).dim()
    }

    pub fn validate_boundary(&self) -> Result<()> {
        let n = 64;
        let mut worst: f64 = 0.0;
        match self.kind {
            SurfaceKind::Disc => {
                let centre = self.at(0.0, 0.0);
                for k in 0..=n {
                    let v = k as f64 / n as f64;
                    worst = worst.max(self.at(1.0, v).distance(&self.boundary.at(v)));
                    worst = worst.max(self.at(0.0, v).distance(&centre));
                    worst = worst.max(self.at(v, 0.0).distance(&self.at(v, 1.0)));
                }
            }
            SurfaceKind::Patch => {
                for k in 0..n {
                    let s = k as f64 / n as f64;
                    let t = 4.0 * s;
                    let p = if t < 1.0 {
                        self.at(t, 0.0)
                    } else if t < 2.0 {
                        self.at(1.0, t - 1.0)
                    } else if t < 3.0 {
                        self.at(3.0 - t, 1.0)
                    } else {
                        self.at(0.0, 4.0 - t)
                    };
                    worst = worst.max(p.distance(&self.boundary.at(s)));
                }
            }
        }
        if worst > 1e-9 {
            return Err(Error::Validation(format!(
                "surface '{}' does not trace its boundary (mismatch {worst:.3e})",
                self.label
            )));
        }
        Ok(())
    }

    /// Opposite orientation via `v -> 1 - v`; keeps the disc convention and
    /// reverses the boundary circuit.
    pub fn reversed(&self) -> Surface {
        let m = self.map.clone();
        Surface {
            map: Arc::new(move |u, v| m(u, 1.0 - v)),
            boundary: self.boundary.reversed(),
            kind: self.kind,
            label: format!("{} (reversed)", self.label),
        }
    }

    /// Opposite orientation via `u <-> v`; the result is a patch.
    pub fn transposed(&self) -> Surface {
        let m = self.map.clone();
        Surface::patch(Arc::new(move |u, v| m(v, u)), format!("{} (transposed)", self.label))
    }

    /// Sub-surface `u in [a, b]`, rescaled to the unit square.
    pub fn restrict_u(&self, a: f64, b: f64) -> Surface {
        let m = self.map.clone();
        Surface::patch(
            Arc::new(move |u, v| m(a + (b - a) * u, v)),
            format!("{} [u in {a}..{b}]", self.label),
        )
    }
}

/// An antisymmetric `d x d` real matrix, stored by its upper triangle so
/// that `F_ij = -F_ji` holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoForm {
    dim: usize,
    upper: Vec<f64>,
}

fn pair_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < dim);
    i * dim - i * (i + 1) / 2 + (j - i - 1)
}

impl TwoForm {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![0.0; dim * dim.saturating_sub(1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Less => self.upper[pair_index(self.dim, i, j)],
            Greater => -self.upper[pair_index(self.dim, j, i)],
        }
    }

    /// Sets `F_ij = value` (and so `F_ji = -value`). Ignores `i == j`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => {}
            Less => self.upper[pair_index(self.dim, i, j)] = value,
            Greater => self.upper[pair_index(self.dim, j, i)] = -value,
        }
    }

    /// Components for a three-dimensional parameter space in the order
    /// `(F_23, F_31, F_12)`, i.e. `(F_YZ, F_ZX, F_XY)` for `X = (X, Y, Z)`.
    pub fn as_vector3(&self) -> [f64; 3] {
        assert_eq!(self.dim, 3, "as_vector3 needs a 3-dimensional form");
        [self.get(1, 2), self.get(2, 0), self.get(0, 1)]
    }

    pub fn from_vector3(v: [f64; 3]) -> Self {
        let mut f = Self::zeros(3);
        f.set(1, 2, v[0]);
        f.set(2, 0, v[1]);
        f.set(0, 1, v[2]);
        f
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            upper: self.upper.iter().map(|x| x * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &TwoForm) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            *a += s * b;
        }
    }

    pub fn max_abs_diff(&self, other: &TwoForm) -> f64 {
        self.upper
            .iter()
            .zip(&other.upper)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// Contraction with the tangent bivector `du ^ dv`.
    pub fn pullback(&self, du: &[f64], dv: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                acc += self.get(i, j) * (du[i] * dv[j] - du[j] * dv[i]);
            }
        }
        acc
    }
}

/// Hermitian-matrix-valued two-form: one `N x N` matrix per pair `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTwoForm {
    dim: usize,
    rank: usize,
    upper: Vec<DMatrix<Complex64>>,
}

impl MatrixTwoForm {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        Self {
            dim,
            rank,
            upper: vec![DMatrix::zeros(rank, rank); dim * dim.saturating_sub(1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn get(&self, i: usize, j: usize) -> DMatrix<Complex64> {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => DMatrix::zeros(self.rank, self.rank),
            Less => self.upper[pair_index(self.dim, i, j)].clone(),
            Greater => -self.upper[pair_index(self.dim, j, i)].clone(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: DMatrix<Complex64>) {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => {}
            Less => self.upper[pair_index(self.dim, i, j)] = value,
            Greater => self.upper[pair_index(self.dim, j, i)] = -value,
        }
    }

    /// Largest `|F_ij - F_ij^dagger|` entry over all components.
    pub fn hermiticity_defect(&self) -> f64 {
        self.upper
            .iter()
            .map(|m| (m - m.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm())))
            .fold(0.0, f64::max)
    }

    /// `U F U^dagger` componentwise.
    pub fn conjugated(&self, u: &DMatrix<Complex64>) -> Self {
        Self {
            dim: self.dim,
            rank: self.rank,
            upper: self.upper.iter().map(|m| u * m * u.adjoint()).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &MatrixTwoForm) -> f64 {
        self.upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| (a - b).iter().fold(0.0f64, |m, z| m.max(z.norm())))
            .fold(0.0, f64::max)
    }

    /// Contraction with `du ^ dv`.
    pub fn pullback(&self, du: &[f64], dv: &[f64]) -> DMatrix<Complex64> {
        let mut acc = DMatrix::zeros(self.rank, self.rank);
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let w = du[i] * dv[j] - du[j] * dv[i];
                acc += &self.upper[pair_index(self.dim, i, j)] * Complex64::new(w, 0.0);
            }
        }
        acc
    }
}

/// A two-form field on parameter space.
pub trait TwoFormField: Sync {
    fn eval(&self, x: &ParamPoint) -> Result<TwoForm>;
}

/// Matrix-valued (non-abelian) two-form field.
pub trait MatrixTwoFormField: Sync {
    fn eval(&self, x: &ParamPoint) -> Result<MatrixTwoForm>;
}

/// Adapter turning a closure into a [`TwoFormField`].
pub struct FnField<F>(pub F);

impl<F> TwoFormField for FnField<F>
where
    F: Fn(&ParamPoint) -> Result<TwoForm> + Sync,
{
    fn eval(&self, x: &ParamPoint) -> Result<TwoForm> {
        (self.0)(x)
    }
}

/// Node data for the pullback quadrature on the unit square.
struct PullbackNode {
    point: ParamPoint,
    du: Vec<f64>,
    dv: Vec<f64>,
    weight: f64,
}

fn pullback_nodes(surface: &Surface, order: usize) -> Result<Vec<PullbackNode>> {
    if order < 1 {
        return Err(Error::Domain("quadrature order must be at least 1".into()));
    }
    let rule = QuadratureRule::gauss_legendre(order, 0.0, 1.0)?;
    let h = PULLBACK_STEP;
    let mut nodes = Vec::with_capacity(order * order);
    for (u, wu) in rule.pairs() {
        for (v, wv) in rule.pairs() {
            let xp = surface.at(u + h, v);
            let xm = surface.at(u - h, v);
            let yp = surface.at(u, v + h);
            let ym = surface.at(u, v - h);
            let du = xp.coords().iter().zip(xm.coords()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let dv = yp.coords().iter().zip(ym.coords()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            nodes.push(PullbackNode {
                point: surface.at(u, v),
                du,
                dv,
                weight: wu * wv,
            });
        }
    }
    Ok(nodes)
}

fn as_validation(e: Error, x: &ParamPoint, label: &str) -> Error {
    match e {
        Error::Domain(msg) => Error::Validation(format!(
            "surface '{label}' leaves the valid domain at {x}: {msg}"
        )),
        other => other,
    }
}

/// `int int_Sigma F` via pullback and a tensor-product Gauss-Legendre rule.
///
/// Node evaluations run in parallel; the reduction sums in node order.
pub fn surface_integral(field: &dyn TwoFormField, surface: &Surface, order: usize) -> Result<f64> {
    let nodes = pullback_nodes(surface, order)?;
    let values: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|n| {
            if n.du.iter().chain(&n.dv).all(|c| *c == 0.0) {
                return Ok(0.0);
            }
            let f = field
                .eval(&n.point)
                .map_err(|e| as_validation(e, &n.point, &surface.label))?;
            Ok(n.weight * f.pullback(&n.du, &n.dv))
        })
        .collect();
    let mut total = 0.0;
    for v in values {
        total += v?;
    }
    Ok(total)
}

/// Matrix-valued counterpart of [`surface_integral`].
pub fn surface_integral_matrix(
    field: &dyn MatrixTwoFormField,
    surface: &Surface,
    order: usize,
) -> Result<DMatrix<Complex64>> {
    let nodes = pullback_nodes(surface, order)?;
    let values: Vec<Result<Option<DMatrix<Complex64>>>> = nodes
        .par_iter()
        .map(|n| {
            if n.du.iter().chain(&n.dv).all(|c| *c == 0.0) {
                return Ok(None);
            }
            let f = field
                .eval(&n.point)
                .map_err(|e| as_validation(e, &n.point, &surface.label))?;
            Ok(Some(f.pullback(&n.du, &n.dv) * Complex64::new(n.weight, 0.0)))
        })
        .collect();
    let mut total: Option<DMatrix<Complex64>> = None;
    for v in values {
        if let Some(m) = v? {
            total = Some(match total {
                Some(t) => t + m,
                None => m,
            });
        }
    }
    Ok(total.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

fn cap_point(omega0: f64, rho: f64, phi: f64) -> ParamPoint {
    let (ch, sh) = (rho.cosh(), rho.sinh());
    ParamPoint(vec![
        omega0 * (ch + sh * phi.cos()),
        omega0 * sh * phi.sin(),
        omega0 * (ch - sh * phi.cos()),
    ])
}

fn check_cap_args(omega0: f64, r: f64) -> Result<()> {
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(Error::Domain(format!("cap needs omega0 > 0, got {omega0}")));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Domain(format!("cap needs r >= 0, got {r}")));
    }
    Ok(())
}

/// Loop of constant frequency `omega0` on the hyperboloid `XZ - Y^2 = omega0^2`.
pub fn make_cap_circuit(omega0: f64, r: f64, samples: usize) -> Result<Circuit> {
    check_cap_args(omega0, r)?;
    Circuit::new(
        Arc::new(move |s| cap_point(omega0, r, 2.0 * std::f64::consts::PI * s)),
        samples,
        format!("cap(omega0={omega0}, r={r})"),
    )
}

/// Hyperbolic cap spanning [`make_cap_circuit`], `rho in [0, r]`.
pub fn make_cap_surface(omega0: f64, r: f64) -> Result<Surface> {
    let boundary = make_cap_circuit(omega0, r, 256)?;
    Surface::disc(
        Arc::new(move |u, v| cap_point(omega0, r * u, 2.0 * std::f64::consts::PI * v)),
        boundary,
        format!("cap(omega0={omega0}, r={r})"),
    )
}

/// Flat disc `centre + rho (cos phi e1 + sin phi e2)`, `rho in [0, radius]`.
pub fn make_disc_surface(
    centre: ParamPoint,
    e1: Vec<f64>,
    e2: Vec<f64>,
    radius: f64,
    samples: usize,
) -> Result<Surface> {
    let d = centre.dim();
    if e1.len() != d || e2.len() != d {
        return Err(Error::Domain("disc axes must match the parameter dimension".into()));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::Domain(format!("disc radius must be >= 0, got {radius}")));
    }
    let point = {
        let (c, e1, e2) = (centre.clone(), e1.clone(), e2.clone());
        move |rho: f64, phi: f64| {
            ParamPoint(
                (0..c.dim())
                    .map(|k| c[k] + rho * (phi.cos() * e1[k] + phi.sin() * e2[k]))
                    .collect(),
            )
        }
    };
    let p1 = point.clone();
    let boundary = Circuit::new(
        Arc::new(move |s| p1(radius, 2.0 * std::f64::consts::PI * s)),
        samples,
        format!("circle(r={radius}) about {centre}"),
    )?;
    Surface::disc(
        Arc::new(move |u, v| point(radius * u, 2.0 * std::f64::consts::PI * v)),
        boundary,
        format!("disc(r={radius}) about {centre}"),
    )
}

/// Disc in the `Y = 0` plane of the oscillator parameter space, centred at
/// `(x0, 0, z0)`.
pub fn make_planar_y0_surface(x0: f64, z0: f64, radius: f64, samples: usize) -> Result<Surface> {
    make_disc_surface(
        ParamPoint(vec![x0, 0.0, z0]),
        vec![1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0],
        radius,
        samples,
    )
}
