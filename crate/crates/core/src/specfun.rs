//! Weighted Hermite functions, Laguerre polynomials and the quadrature rules
//! used by every integral in the crate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default orders, used wherever a caller does not pick one.
pub const DEFAULT_LEGENDRE_ORDER: usize = 64;
pub const DEFAULT_LAGUERRE_ORDER: usize = 64;
pub const DEFAULT_PERIODIC_ORDER: usize = 256;

/// Largest Gauss-Laguerre order whose folded weights `w e^u` stay finite.
pub const MAX_LAGUERRE_ORDER: usize = 160;

// Rescale threshold for the Hermite recurrence.
const BIG: f64 = 1e150;

/// Normalized Hermite function `chi_n(xi) = N_n exp(-xi^2/2) H_n(xi)`.
///
/// The recurrence runs on the weighted functions themselves, with a running
/// logarithmic scale so that neither `H_n` nor the Gaussian factor overflow.
pub fn hermite_function(n: usize, xi: f64) -> f64 {
    hermite_functions(n, xi)[n]
}

/// All of `chi_0(xi) ..= chi_n(xi)`.
pub fn hermite_functions(n_max: usize, xi: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    // log of the common scale factor; values carried as r_k * exp(log_scale)
    let mut log_scale = -0.5 * xi * xi - 0.25 * PI.ln();
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut raw = vec![0.0; n_max + 1];
    let mut scale_at = vec![0.0; n_max + 1];
    raw[0] = cur;
    scale_at[0] = log_scale;
    for k in 0..n_max {
        let kf = k as f64;
        let next = xi * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > BIG {
            prev /= BIG;
            cur /= BIG;
            log_scale += BIG.ln();
        }
        raw[k + 1] = cur;
        scale_at[k + 1] = log_scale;
    }
    for k in 0..=n_max {
        out[k] = if raw[k] == 0.0 {
            0.0
        } else {
            raw[k].signum() * (raw[k].abs().ln() + scale_at[k]).exp()
        };
    }
    out
}

/// Laguerre polynomial `L_n(x)` by the three-term recurrence.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let (l, _) = laguerre_pair(n, x);
    l
}

/// Returns `(L_n(x), L_{n-1}(x))`, with `L_{-1} = 0`.
fn laguerre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Family of a quadrature rule together with its domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuadratureKind {
    /// Gauss-Legendre on the finite interval `[a, b]`.
    LegendreOnInterval { a: f64, b: f64 },
    /// Gauss-Laguerre for `int_0^inf f(I) dI`, with the exponential weight
    /// folded into the weights. `scale` is the decay length the rule is
    /// built for: nodes are `scale * u_k`.
    LaguerreOnHalfline { scale: f64 },
    /// Uniform rule over one period `[0, period)`.
    TrapezoidPeriodic { period: f64 },
}

/// Nodes and positive weights of a quadrature rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: QuadratureKind,
}

impl QuadratureRule {
    pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Result<Self> {
        quadrature(QuadratureKind::LegendreOnInterval { a, b }, order)
    }

    /// Gauss-Laguerre rule for `int_0^inf f(I) dI` with decay length `scale`.
    pub fn gauss_laguerre(order: usize, scale: f64) -> Result<Self> {
        quadrature(QuadratureKind::LaguerreOnHalfline { scale }, order)
    }

    /// Uniform rule on `[0, 2 pi)`.
    pub fn periodic(order: usize) -> Result<Self> {
        quadrature(QuadratureKind::TrapezoidPeriodic { period: 2.0 * PI }, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Builds a quadrature rule of the given kind and order.
pub fn quadrature(kind: QuadratureKind, order: usize) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::Domain("quadrature order must be at least 1".into()));
    }
    let (nodes, weights) = match kind {
        QuadratureKind::LegendreOnInterval { a, b } => {
            if !(a.is_finite() && b.is_finite()) || b <= a {
                return Err(Error::Unsupported(format!(
                    "legendre rule needs a finite interval with a < b, got [{a}, {b}]"
                )));
            }
            let (x, w) = legendre_reference(order);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            (
                x.iter().map(|&t| mid + half * t).collect(),
                w.iter().map(|&v| half * v).collect(),
            )
        }
        QuadratureKind::LaguerreOnHalfline { scale } => {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::Unsupported(format!(
                    "laguerre rule needs a positive finite scale, got {scale}"
                )));
            }
            if order > MAX_LAGUERRE_ORDER {
                return Err(Error::Unsupported(format!(
                    "laguerre order {order} exceeds {MAX_LAGUERRE_ORDER}"
                )));
            }
            let (u, log_w) = laguerre_reference(order)?;
            (
                u.iter().map(|&t| scale * t).collect(),
                u.iter()
                    .zip(&log_w)
                    .map(|(&t, &lw)| scale * (lw + t).exp())
                    .collect(),
            )
        }
        QuadratureKind::TrapezoidPeriodic { period } => {
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::Unsupported(format!("bad period {period}")));
            }
            let h = period / order as f64;
            ((0..order).map(|k| k as f64 * h).collect(), vec![h; order])
        }
    };
    Ok(QuadratureRule {
        nodes,
        weights,
        kind,
    })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
fn legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Laguerre nodes (weight `e^{-u}`) and the logarithms of the weights.
///
/// Nodes come from the Jacobi matrix eigenvalues and are polished by Newton
/// steps on `L_n`; weights use `u / ((n+1)^2 L_{n+1}(u)^2)` in log form.
fn laguerre_reference(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let nf = n as f64;
    let jacobi = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * i as f64 + 1.0
        } else if i + 1 == j || j + 1 == i {
            i.max(j) as f64
        } else {
            0.0
        }
    });
    let mut u: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    u.sort_by(|a, b| a.total_cmp(b));
    let mut log_w = vec![0.0; n];
    for (i, z) in u.iter_mut().enumerate() {
        for _ in 0..8 {
            let (l, lm1) = laguerre_pair(n, *z);
            let dl = nf * (l - lm1) / *z;
            let dz = l / dl;
            if !dz.is_finite() {
                break;
            }
            *z -= dz;
            if dz.abs() <= 1e-15 * z.abs() {
                break;
            }
        }
        if !(z.is_finite() && *z > 0.0) {
            return Err(Error::Numerical(format!(
                "gauss-laguerre node {i} of order {n} is invalid"
            )));
        }
        let (lp1, _) = laguerre_pair(n + 1, *z);
        log_w[i] = z.ln() - 2.0 * (nf + 1.0).ln() - 2.0 * lp1.abs().ln();
    }
    Ok((u, log_w))
}
