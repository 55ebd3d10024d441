//! The harmonic family `u = |X|^2 - ell*y^2 + eta*exp(lambda*x1)*cos(lambda*z)`,
//! the projected function `Phi`, the unperturbed cone `Q`, and the rescaled
//! field in which the exponentially small holes have unit size.
//!
//! `eta = exp(-lambda) * lambda^-4` underflows double precision near `m = 28`,
//! so it is stored as a logarithm. The perturbation is always evaluated in the
//! shifted form `exp(lambda*(x1 - 1)) * lambda^-4`, which is finite on the whole
//! closed unit ball for every desk-scale `m`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Radius of the `X`-disk in the projected window.
pub const SIGMA: f64 = 1.0 / 16.0;

/// Half-height of the projected window in `z`.
pub const Z_HALF_WIDTH: f64 = 0.25;

/// Default radius of the rescaled `xi` window.
pub const DEFAULT_XI_RADIUS: f64 = 4.0;

// Points slightly outside the unit ball due to rounding are accepted.
const BALL_SLACK: f64 = 4.0 * f64::EPSILON;

/// Parameters `(n, ell, m)` together with the derived quantities of the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub n: usize,
    pub ell: usize,
    pub m: usize,
    /// `8 * pi * m`
    pub lambda: f64,
    /// `ln(eta) = -lambda - 4 ln(lambda)`
    pub log_eta: f64,
    pub sigma: f64,
    pub z_window: (f64, f64),
    /// `eta * exp(lambda)`, equal to `lambda^-4` for the canonical family.
    pert_scale: f64,
}

impl FamilyParams {
    pub fn new(n: usize, ell: usize, m: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Parameter(format!("n >= 3 violated (n = {n})")));
        }
        if ell < 1 {
            return Err(Error::Parameter(format!("1 <= ell violated (ell = {ell})")));
        }
        if ell > n - 2 {
            return Err(Error::Parameter(format!(
                "ell <= n - 2 violated (ell = {ell}, n = {n})"
            )));
        }
        if m < 1 {
            return Err(Error::Parameter("m >= 1 violated (m = 0)".into()));
        }
        let lambda = 8.0 * PI * m as f64;
        Ok(Self {
            n,
            ell,
            m,
            lambda,
            log_eta: -lambda - 4.0 * lambda.ln(),
            sigma: SIGMA,
            z_window: (-Z_HALF_WIDTH, Z_HALF_WIDTH),
            pert_scale: lambda.powi(-4),
        })
    }

    /// Replaces the perturbation amplitude. Used for controls that need a
    /// non-canonical `eta`; every derived quantity follows the new value.
    pub fn with_log_eta(mut self, log_eta: f64) -> Self {
        self.log_eta = log_eta;
        self.pert_scale = (log_eta + self.lambda).exp();
        self
    }

    /// Number of `w` coordinates (`n - ell - 2`).
    pub fn w_dim(&self) -> usize {
        self.n - self.ell - 2
    }

    /// `eta`, or `None` when it underflows to a subnormal or zero.
    pub fn eta(&self) -> Option<f64> {
        let eta = self.log_eta.exp();
        (eta >= f64::MIN_POSITIVE).then_some(eta)
    }

    /// `sqrt(eta)`, computed from the logarithm.
    pub fn sqrt_eta(&self) -> f64 {
        (0.5 * self.log_eta).exp()
    }

    /// True when `sqrt(eta)` is not a normal double, so raw coordinates can no
    /// longer resolve the holes at all.
    pub fn sqrt_eta_underflows(&self) -> bool {
        self.sqrt_eta() < f64::MIN_POSITIVE
    }

    /// `ln(lambda * sqrt(eta)) = -lambda/2 - ln(lambda)` for the canonical family.
    pub fn log_coupling(&self) -> f64 {
        self.lambda.ln() + 0.5 * self.log_eta
    }

    /// The rescaled coupling `k = lambda * sqrt(eta)`; the rescaled perturbation
    /// is `exp(k * xi_1) * cos(lambda * z)`.
    pub fn coupling(&self) -> f64 {
        self.log_coupling().exp()
    }

    /// `eta * exp(lambda)`; equals `lambda^-4` for the canonical family.
    pub fn pert_scale(&self) -> f64 {
        self.pert_scale
    }

    /// `eta * exp(lambda * x1)` in the shifted, overflow-free form.
    pub fn amplitude(&self, x1: f64) -> f64 {
        (self.lambda * (x1 - 1.0)).exp() * self.pert_scale
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if p.x.len() != self.ell || p.w.len() != self.w_dim() {
            return Err(Error::Domain(format!(
                "point has blocks ({}, 1, 1, {}), expected ({}, 1, 1, {})",
                p.x.len(),
                p.w.len(),
                self.ell,
                self.w_dim()
            )));
        }
        let r = p.norm();
        if !(r <= 1.0 + BALL_SLACK) {
            return Err(Error::Domain(format!("|p| = {r} exceeds 1")));
        }
        Ok(())
    }
}

/// Derives the family parameters; see [`FamilyParams::new`].
pub fn derive_params(n: usize, ell: usize, m: usize) -> Result<FamilyParams> {
    FamilyParams::new(n, ell, m)
}

/// A point `(X, y, z, w)` of `R^ell x R x R x R^(n-ell-2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: f64,
    pub z: f64,
    pub w: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, y: f64, z: f64, w: Vec<f64>) -> Self {
        Self { x, y, z, w }
    }

    pub fn origin(params: &FamilyParams) -> Self {
        Self::new(vec![0.0; params.ell], 0.0, 0.0, vec![0.0; params.w_dim()])
    }

    /// Splits an `n`-vector laid out as `(X, y, z, w)`.
    pub fn from_coords(params: &FamilyParams, coords: &[f64]) -> Result<Self> {
        if coords.len() != params.n {
            return Err(Error::Domain(format!(
                "expected {} coordinates, got {}",
                params.n,
                coords.len()
            )));
        }
        let ell = params.ell;
        Ok(Self::new(
            coords[..ell].to_vec(),
            coords[ell],
            coords[ell + 1],
            coords[ell + 2..].to_vec(),
        ))
    }

    pub fn to_coords(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.x.len() + 2 + self.w.len());
        v.extend_from_slice(&self.x);
        v.push(self.y);
        v.push(self.z);
        v.extend_from_slice(&self.w);
        v
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.x) + self.y * self.y + self.z * self.z + norm_sq(&self.w)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// Value and full gradient (ordered as `(X, y, z, w)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// Evaluates `u` and its gradient on the closed unit ball.
pub fn eval_u(params: &FamilyParams, p: &Point) -> Result<EvalResult> {
    params.check_point(p)?;
    Ok(eval_u_unchecked(params, p))
}

pub(crate) fn eval_u_unchecked(params: &FamilyParams, p: &Point) -> EvalResult {
    let ell = params.ell;
    let lambda = params.lambda;
    let amp = params.amplitude(p.x[0]);
    let (s, c) = (lambda * p.z).sin_cos();

    let value = norm_sq(&p.x) - ell as f64 * p.y * p.y + amp * c;

    let mut gradient = vec![0.0; params.n];
    for (g, xi) in gradient.iter_mut().zip(&p.x) {
        *g = 2.0 * xi;
    }
    gradient[0] += lambda * amp * c;
    gradient[ell] = -2.0 * ell as f64 * p.y;
    gradient[ell + 1] = -lambda * amp * s;
    EvalResult { value, gradient }
}

/// Diagonal of the Hessian of `u` from the closed-form second partials.
/// The remaining mixed partial `d2u/dx1 dz = -lambda^2 A sin` is not needed
/// for the Laplacian.
pub fn hessian_diagonal(params: &FamilyParams, p: &Point) -> Result<Vec<f64>> {
    params.check_point(p)?;
    let ell = params.ell;
    let lambda = params.lambda;
    let pert = params.amplitude(p.x[0]) * (lambda * p.z).cos();
    let mut d = vec![0.0; params.n];
    for v in d.iter_mut().take(ell) {
        *v = 2.0;
    }
    d[0] += lambda * lambda * pert;
    d[ell] = -2.0 * ell as f64;
    d[ell + 1] = -lambda * lambda * pert;
    Ok(d)
}

/// Laplacian assembled from [`hessian_diagonal`].
pub fn laplacian(params: &FamilyParams, p: &Point) -> Result<f64> {
    Ok(hessian_diagonal(params, p)?.iter().sum())
}

/// The cone `Q = |X|^2 - ell*y^2` and its gradient, on coordinates `(X, y, z, w)`.
pub fn eval_cone(ell: usize, coords: &[f64]) -> EvalResult {
    let x = &coords[..ell];
    let y = coords[ell];
    let mut gradient = vec![0.0; coords.len()];
    for (g, xi) in gradient.iter_mut().zip(x) {
        *g = 2.0 * xi;
    }
    gradient[ell] = -2.0 * ell as f64 * y;
    EvalResult {
        value: norm_sq(x) - ell as f64 * y * y,
        gradient,
    }
}

/// `Phi`, its gradient in `(X, z)`, and its `X`-Hessian (row-major `ell x ell`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_x: Vec<f64>,
}

impl PhiEval {
    /// Smallest eigenvalue of the `X`-Hessian. The Hessian is `2I` plus a rank-one
    /// term along `e1`, so the spectrum is `{2, H_11}`.
    pub fn hessian_min_eigenvalue(&self) -> f64 {
        let ell = (self.hessian_x.len() as f64).sqrt() as usize;
        if ell == 1 {
            self.hessian_x[0]
        } else {
            self.hessian_x[0].min(2.0)
        }
    }
}

fn check_window(params: &FamilyParams, x: &[f64], z: f64) -> Result<()> {
    if x.len() != params.ell {
        return Err(Error::Domain(format!(
            "X has {} components, expected {}",
            x.len(),
            params.ell
        )));
    }
    let r = norm_sq(x).sqrt();
    if !(r <= params.sigma * (1.0 + BALL_SLACK)) || !(z.abs() <= Z_HALF_WIDTH * (1.0 + BALL_SLACK))
    {
        return Err(Error::Domain(format!(
            "(|X|, z) = ({r}, {z}) outside the window |X| <= 1/16, |z| <= 1/4"
        )));
    }
    Ok(())
}

/// `Phi(X, z) = |X|^2 + eta*exp(lambda*x1)*cos(lambda*z)` on the window `R_ell`.
pub fn eval_phi(params: &FamilyParams, x: &[f64], z: f64) -> Result<f64> {
    check_window(params, x, z)?;
    Ok(norm_sq(x) + params.amplitude(x[0]) * (params.lambda * z).cos())
}

/// [`eval_phi`] with gradient and `X`-Hessian.
pub fn eval_phi_full(params: &FamilyParams, x: &[f64], z: f64) -> Result<PhiEval> {
    check_window(params, x, z)?;
    let ell = params.ell;
    let lambda = params.lambda;
    let amp = params.amplitude(x[0]);
    let (s, c) = (lambda * z).sin_cos();
    let mut gradient: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    gradient[0] += lambda * amp * c;
    gradient.push(-lambda * amp * s);
    let mut hessian_x = vec![0.0; ell * ell];
    for i in 0..ell {
        hessian_x[i * ell + i] = 2.0;
    }
    hessian_x[0] += lambda * lambda * amp * c;
    Ok(PhiEval {
        value: norm_sq(x) + amp * c,
        gradient,
        hessian_x,
    })
}

/// The rescaled field `u(sqrt(eta) xi, sqrt(eta) upsilon, z, 0) / eta` and the
/// rescaled projected function `Phi(sqrt(eta) xi, z) / eta`.
///
/// Both are computed from the exact identity
/// `|xi|^2 - ell*upsilon^2 + exp(k xi_1) cos(lambda z)` with `k = lambda sqrt(eta)`,
/// where `exp(k xi_1) - 1` goes through `exp_m1` because `k` is tiny.
#[derive(Debug, Clone, Copy)]
pub struct RescaledField {
    pub ell: usize,
    pub lambda: f64,
    pub coupling: f64,
    pub xi_radius: f64,
}

impl RescaledField {
    pub fn new(params: &FamilyParams) -> Self {
        Self::with_radius(params, DEFAULT_XI_RADIUS)
    }

    pub fn with_radius(params: &FamilyParams, xi_radius: f64) -> Self {
        Self {
            ell: params.ell,
            lambda: params.lambda,
            coupling: params.coupling(),
            xi_radius,
        }
    }

    pub fn check(&self, xi: &[f64], z: f64) -> Result<()> {
        if xi.len() != self.ell {
            return Err(Error::Domain(format!(
                "xi has {} components, expected {}",
                xi.len(),
                self.ell
            )));
        }
        let inf_norm = xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(inf_norm <= self.xi_radius) || !(z.abs() <= Z_HALF_WIDTH * (1.0 + BALL_SLACK)) {
            return Err(Error::Domain(format!(
                "rescaled point (|xi|_inf = {inf_norm}, z = {z}) outside window of radius {}",
                self.xi_radius
            )));
        }
        Ok(())
    }

    /// `exp(k xi_1) - 1`
    #[inline]
    fn growth_m1(&self, xi1: f64) -> f64 {
        (self.coupling * xi1).exp_m1()
    }

    /// Rescaled `Phi` without window checks.
    #[inline]
    pub fn phi(&self, xi: &[f64], z: f64) -> f64 {
        let c = (self.lambda * z).cos();
        (norm_sq(xi) + c) + self.growth_m1(xi[0]) * c
    }

    /// Gradient of rescaled `Phi` in `(xi, z)`.
    pub fn phi_gradient(&self, xi: &[f64], z: f64) -> Vec<f64> {
        let (s, c) = (self.lambda * z).sin_cos();
        let growth = 1.0 + self.growth_m1(xi[0]);
        let mut g: Vec<f64> = xi.iter().map(|v| 2.0 * v).collect();
        g[0] += self.coupling * growth * c;
        g.push(-self.lambda * growth * s);
        g
    }

    /// Rescaled `u` without window checks.
    #[inline]
    pub fn value(&self, xi: &[f64], upsilon: f64, z: f64) -> f64 {
        let c = (self.lambda * z).cos();
        (norm_sq(xi) - self.ell as f64 * upsilon * upsilon + c) + self.growth_m1(xi[0]) * c
    }

    /// Gradient of rescaled `u` in `(xi, upsilon, z)`.
    pub fn gradient(&self, xi: &[f64], upsilon: f64, z: f64) -> Vec<f64> {
        let mut g = self.phi_gradient(xi, z);
        g.insert(self.ell, -2.0 * self.ell as f64 * upsilon);
        g
    }
}

/// The rescaled field `eta^-1 u(sqrt(eta) xi, sqrt(eta) upsilon, z, 0)` on the
/// default window `|xi|_inf <= 4`.
pub fn eval_u_rescaled(params: &FamilyParams, xi: &[f64], upsilon: f64, z: f64) -> Result<f64> {
    let f = RescaledField::new(params);
    f.check(xi, z)?;
    Ok(f.value(xi, upsilon, z))
}
