//! Tensor-product quadrature over balls and spheres in `R^n`, `3 <= n <= 6`.
//!
//! The sphere `S^(n-1)` is parametrized by hyperspherical angles
//! `theta_1..theta_(n-2)` in `[0, pi]` and `phi` in `[0, 2 pi)`. In `t = cos theta`
//! the Jacobian factor `sin^p(theta) d theta` becomes the Gegenbauer weight
//! `(1 - t^2)^((p-1)/2) dt`, so each `theta` uses Gauss-Gegenbauer nodes and the
//! rule is exact for polynomials up to the stated degree. `phi` uses the
//! periodic trapezoid rule. Balls add a Gauss-Legendre radial factor with
//! weight `rho^(n-1)`.
//!
//! Sums are formed per fixed-size chunk and then combined pairwise in chunk
//! order, so a result is bit-identical for a fixed rule regardless of how the
//! chunks are scheduled across threads.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 6;
const CHUNK: usize = 4096;
const MAX_REFINEMENTS: usize = 3;
const MAX_NODES: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes on `[0, r]`.
    pub radial_nodes: usize,
    /// Polynomial degree the angular rule is sized for.
    pub angular_degree: usize,
    pub target_rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            radial_nodes: 8,
            angular_degree: 8,
            target_rel_tol: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 4 || self.angular_degree < 2 {
            return Err(Error::Precondition(format!(
                "quadrature spec needs radial_nodes >= 4 and angular_degree >= 2, got ({}, {})",
                self.radial_nodes, self.angular_degree
            )));
        }
        if !(self.target_rel_tol > 0.0) {
            return Err(Error::Precondition(
                "target_rel_tol must be positive".into(),
            ));
        }
        Ok(())
    }

    fn refined(&self) -> Self {
        Self {
            radial_nodes: 2 * self.radial_nodes,
            angular_degree: 2 * self.angular_degree,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    /// Absolute error estimate.
    pub err_est: f64,
    pub nodes_used: usize,
    /// False when the target tolerance was not reached at the finest rule.
    pub tolerance_met: bool,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..(k + 1) / 2 {
        // Tricomi initial guess, then Newton on P_k.
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(k, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[k - 1 - i] = x;
        weights[i] = w;
        weights[k - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Gegenbauer nodes and weights on `[-1, 1]` for the weight
/// `(1 - t^2)^a`, `a = 0, 1/2, 1, ...`, via the Golub-Welsch eigenproblem.
pub fn gauss_gegenbauer(k: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let g = a + 0.5;
    let jacobi = DMatrix::from_fn(k, k, |i, j| {
        if i.abs_diff(j) == 1 {
            let m = i.max(j) as f64;
            (m * (m + 2.0 * g - 1.0) / (4.0 * (m + g) * (m + g - 1.0))).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mass = gegenbauer_mass(a);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| (eig.eigenvalues[i], mass * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

/// `int_{-1}^{1} (1 - t^2)^a dt` for integer or half-integer `a >= 0`.
fn gegenbauer_mass(a: f64) -> f64 {
    let (mut m, mut b) = if a.fract() == 0.0 {
        (2.0, 0.0)
    } else {
        (0.5 * PI, 0.5)
    };
    while b < a {
        b += 1.0;
        m *= 2.0 * b / (2.0 * b + 1.0);
    }
    m
}

fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Surface area of the unit sphere `S^(n-1)` in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n - 2) as f64 * sphere_area(n - 2),
    }
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// A tensor-product rule on `B_r` or `S_r` in `R^n`.
#[derive(Debug, Clone)]
pub struct TensorRule {
    n: usize,
    radius: f64,
    /// `(rho, w * rho^(n-1))` pairs; `None` for sphere rules.
    radial: Option<Vec<(f64, f64)>>,
    /// `(cos, sin, w)` for each theta node, one table per angle; the weights
    /// include the Jacobian.
    theta: Vec<Vec<(f64, f64, f64)>>,
    /// `(cos, sin)` for each phi node, equal weights.
    phi: Vec<(f64, f64)>,
    phi_weight: f64,
}

impl TensorRule {
    pub fn sphere(n: usize, radius: f64, angular_degree: usize) -> Self {
        Self::build(n, radius, angular_degree, None)
    }

    pub fn ball(n: usize, radius: f64, radial_nodes: usize, angular_degree: usize) -> Self {
        Self::build(n, radius, angular_degree, Some(radial_nodes))
    }

    fn build(n: usize, radius: f64, degree: usize, radial_nodes: Option<usize>) -> Self {
        let theta = (0..n - 2)
            .map(|i| {
                let power = (n - 2 - i) as f64;
                let (tn, tw) = gauss_gegenbauer(degree + 2, 0.5 * (power - 1.0));
                tn.iter()
                    .zip(&tw)
                    .map(|(&t, &w)| (t, (1.0 - t * t).sqrt(), w))
                    .collect()
            })
            .collect();
        let np = 2 * degree + 2;
        let phi = (0..np)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / np as f64;
                (a.cos(), a.sin())
            })
            .collect();
        let radial = radial_nodes.map(|k| {
            let (rn, rw) = gauss_legendre(k);
            rn.iter()
                .zip(&rw)
                .map(|(&t, &w)| {
                    let rho = 0.5 * radius * (t + 1.0);
                    (rho, 0.5 * radius * w * rho.powi(n as i32 - 1))
                })
                .collect()
        });
        Self {
            n,
            radius,
            radial,
            theta,
            phi,
            phi_weight: 2.0 * PI / np as f64,
        }
    }

    fn angular_len(&self) -> usize {
        self.theta.iter().map(Vec::len).product::<usize>() * self.phi.len()
    }

    pub fn len(&self) -> usize {
        self.angular_len() * self.radial.as_ref().map_or(1, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes node `idx` into `out` (length `n`) and returns its weight.
    pub fn node(&self, idx: usize, out: &mut [f64]) -> f64 {
        let n = self.n;
        let na = self.angular_len();
        let (rho, mut w) = match &self.radial {
            Some(r) => r[idx / na],
            None => (self.radius, self.radius.powi(n as i32 - 1)),
        };
        let mut rest = idx % na;
        let (pc, ps) = self.phi[rest % self.phi.len()];
        rest /= self.phi.len();
        w *= self.phi_weight;
        let mut sin_prod = rho;
        for (table, slot) in self.theta.iter().zip(out.iter_mut()) {
            let (c, s, tw) = table[rest % table.len()];
            rest /= table.len();
            *slot = sin_prod * c;
            sin_prod *= s;
            w *= tw;
        }
        out[n - 2] = sin_prod * pc;
        out[n - 1] = sin_prod * ps;
        w
    }

    /// Deterministic parallel sum of `f(node) * weight`.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let len = self.len();
        let partials: Vec<f64> = (0..len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut buf = vec![0.0; self.n];
                let mut acc = Vec::with_capacity(CHUNK);
                for idx in c * CHUNK..((c + 1) * CHUNK).min(len) {
                    let w = self.node(idx, &mut buf);
                    acc.push(w * f(&buf));
                }
                pairwise_sum(&acc)
            })
            .collect();
        pairwise_sum(&partials)
    }
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

fn check_domain(n: usize, r: f64) -> Result<()> {
    if !(3..=MAX_DIM).contains(&n) {
        return Err(Error::Precondition(format!(
            "quadrature supports 3 <= n <= {MAX_DIM}, got n = {n}"
        )));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Precondition(format!(
            "radius must lie in (0, 1], got {r}"
        )));
    }
    Ok(())
}

fn nested<F>(spec: &QuadratureSpec, mut rule_value: F) -> Result<IntegralResult>
where
    F: FnMut(&QuadratureSpec) -> (f64, usize),
{
    spec.validate()?;
    let mut current = *spec;
    let (mut coarse, mut used) = rule_value(&current);
    let mut result = None;
    for _ in 0..=MAX_REFINEMENTS {
        let next = current.refined();
        if used > MAX_NODES {
            break;
        }
        let (fine, fine_used) = rule_value(&next);
        used += fine_used;
        let err = (fine - coarse).abs();
        let met = err <= spec.target_rel_tol * fine.abs();
        result = Some(IntegralResult {
            value: fine,
            err_est: err,
            nodes_used: used,
            tolerance_met: met,
        });
        if met {
            break;
        }
        coarse = fine;
        current = next;
    }
    result.ok_or_else(|| Error::Precondition("quadrature rule exceeds the node budget".into()))
}

/// Integral of `f` over the sphere `|x| = r` in `R^n`, with an error estimate
/// from successive rule doublings.
pub fn integrate_sphere<F>(n: usize, f: F, r: f64, spec: &QuadratureSpec) -> Result<IntegralResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_domain(n, r)?;
    nested(spec, |s| {
        let rule = TensorRule::sphere(n, r, s.angular_degree);
        (rule.integrate(&f), rule.len())
    })
}

/// Integral of `f` over the ball `|x| <= r` in `R^n`.
pub fn integrate_ball<F>(n: usize, f: F, r: f64, spec: &QuadratureSpec) -> Result<IntegralResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_domain(n, r)?;
    nested(spec, |s| {
        let rule = TensorRule::ball(n, r, s.radial_nodes, s.angular_degree);
        (rule.integrate(&f), rule.len())
    })
}
