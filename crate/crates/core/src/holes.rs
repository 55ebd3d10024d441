//! The `2m` negative intervals of `cos(lambda z)` in the window, the convex
//! negative slices of the projected function, and the holes they sweep out.
//!
//! Everything is computed for the rescaled projected function
//! `Phi~(xi, z) = |xi|^2 + exp(k xi_1) cos(lambda z)`, in which the holes have
//! radius close to one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::field::{FamilyParams, RescaledField, SIGMA, Z_HALF_WIDTH};
use crate::mesh::{Label, SimplicialMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeInterval {
    pub j: i64,
    pub z_minus: f64,
    pub z_plus: f64,
    /// Where `cos(lambda z) = -1`.
    pub z_center: f64,
}

impl NegativeInterval {
    pub fn contains_open(&self, z: f64) -> bool {
        self.z_minus < z && z < self.z_plus
    }
}

/// The intervals `((pi/2 + 2 pi j)/lambda, (3 pi/2 + 2 pi j)/lambda)` for
/// `j = -m .. m-1`, sorted by `z`.
pub fn negative_intervals(params: &FamilyParams) -> Vec<NegativeInterval> {
    let lambda = params.lambda;
    (-(params.m as i64)..params.m as i64)
        .map(|j| {
            let base = 2.0 * PI * j as f64;
            NegativeInterval {
                j,
                z_minus: (0.5 * PI + base) / lambda,
                z_plus: (1.5 * PI + base) / lambda,
                z_center: (PI + base) / lambda,
            }
        })
        .collect()
}

fn check_z(z: f64) -> Result<()> {
    if !(z.abs() <= Z_HALF_WIDTH) {
        return Err(Error::Domain(format!("z = {z} outside [-1/4, 1/4]")));
    }
    Ok(())
}

/// Minimizer `c(z)` of the strictly convex slice `xi -> Phi~(xi, z)`. Only the
/// first component is nonzero; it solves `2t + k cos(lambda z) e^(kt) = 0`.
pub fn slice_minimizer(params: &FamilyParams, z: f64) -> Result<Vec<f64>> {
    check_z(z)?;
    let k = params.coupling();
    let c = (params.lambda * z).cos();
    let mut t = 0.0f64;
    for _ in 0..100 {
        let e = (k * t).exp();
        let f = 2.0 * t + k * c * e;
        if f.abs() <= 1e-15 {
            let mut out = vec![0.0; params.ell];
            out[0] = t;
            return Ok(out);
        }
        t -= f / (2.0 + k * k * c * e);
    }
    Err(Error::Numerical(format!(
        "slice minimizer at z = {z} did not converge"
    )))
}

/// The unique `rho > 0` with `Phi~(c(z) + rho omega, z) = 0`.
pub fn radial_root(params: &FamilyParams, z: f64, omega: &[f64]) -> Result<f64> {
    let c = slice_minimizer(params, z)?;
    radial_root_from(
        &RescaledField::with_radius(params, f64::INFINITY),
        &c,
        z,
        omega,
    )
}

/// Brackets the sign change of `g` on `t > 0` to relative width `1e-14`,
/// given `g(0) < 0` and `g` convex.
fn bracket_radius(g: &dyn Fn(f64) -> f64, z: f64) -> Result<(f64, f64)> {
    let g0 = g(0.0);
    if !(g0 < 0.0) {
        return Err(Error::NoRoot(format!(
            "slice at z = {z} is not negative at its minimizer (value {g0})"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NoRoot(format!(
                "no sign change along ray at z = {z}"
            )));
        }
    }
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

fn radial_root_from(f: &RescaledField, c: &[f64], z: f64, omega: &[f64]) -> Result<f64> {
    if omega.len() != c.len() {
        return Err(Error::Domain("direction has the wrong dimension".into()));
    }
    let norm = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() < 1e-9) {
        return Err(Error::Domain(format!(
            "direction is not a unit vector (|omega| = {norm})"
        )));
    }
    let point = |t: f64| -> Vec<f64> { c.iter().zip(omega).map(|(a, w)| a + t * w).collect() };
    let g = |t: f64| f.phi(&point(t), z);
    let (lo, hi) = bracket_radius(&g, z)?;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..3 {
        let p = point(t);
        let grad = f.phi_gradient(&p, z);
        let slope: f64 = grad.iter().zip(omega).map(|(a, b)| a * b).sum();
        let step = f.phi(&p, z) / slope;
        if !step.is_finite() || (t - step) <= 0.0 {
            break;
        }
        t -= step;
    }
    let residual = g(t).abs();
    if residual > 1e-12 {
        return Err(Error::Numerical(format!(
            "radial root residual {residual:e} at z = {z}"
        )));
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleResolution {
    /// Number of interior `z` samples; rounded up to odd so the center is one.
    pub n_z: usize,
    /// Directions per circle for `ell = 2`; sets the refinement of the
    /// direction sphere for larger `ell`.
    pub n_omega: usize,
}

impl Default for HoleResolution {
    fn default() -> Self {
        Self {
            n_z: 33,
            n_omega: 32,
        }
    }
}

impl HoleResolution {
    pub fn doubled(&self) -> Self {
        Self {
            n_z: 2 * self.n_z,
            n_omega: 2 * self.n_omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSample {
    pub z: f64,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleDescriptor {
    pub interval: NegativeInterval,
    pub center_curve: Vec<CenterSample>,
    /// Oriented `ell`-sphere in `(xi, z)` space, enclosing `witness` with
    /// degree `+1`.
    pub boundary: SimplicialMesh,
    /// `(c(z_center), z_center)` in `(xi, z)`.
    pub witness: Vec<f64>,
    /// `-Phi~(witness)`, i.e. `-Phi(p_j)` in units of `eta`.
    pub depth: f64,
    /// `max |rho(z_(i+1), omega) - rho(z_i, omega)| / (z_(i+1) - z_i)`.
    pub rho_lipschitz: f64,
    /// Largest `|Phi~|` over the boundary vertices.
    pub max_residual: f64,
}

/// Triangulated direction sphere `S^(ell-1)` in `R^ell`. For `ell = 1` the two
/// points are returned as 0-simplices.
pub fn direction_sphere(ell: usize, n_omega: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    match ell {
        1 => (vec![vec![-1.0], vec![1.0]], vec![vec![0], vec![1]]),
        2 => {
            let verts = (0..n_omega)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / n_omega as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect();
            let tops = (0..n_omega)
                .map(|i| {
                    let mut e = vec![i, (i + 1) % n_omega];
                    e.sort_unstable();
                    e
                })
                .collect();
            (verts, tops)
        }
        3 => subdivided_octahedron((n_omega / 8).max(1)),
        _ => cross_polytope(ell),
    }
}

fn subdivided_octahedron(s: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let corners: Vec<[f64; 3]> = (0..6)
        .map(|i| {
            let mut v = [0.0; 3];
            v[i / 2] = if i % 2 == 0 { 1.0 } else { -1.0 };
            v
        })
        .collect();
    let mut index: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut tops = Vec::new();
    for a in [0, 1] {
        for b in [2, 3] {
            for c in [4, 5] {
                let face = [a, b, c];
                // Lattice point (i, j) of the face has weights (s - i - j, i, j).
                let mut id = |i: usize, j: usize| -> usize {
                    let w = [s - i - j, i, j];
                    let mut key: Vec<(usize, usize)> = face
                        .iter()
                        .zip(w)
                        .filter(|(_, w)| *w > 0)
                        .map(|(&v, w)| (v, w))
                        .collect();
                    key.sort_unstable();
                    *index.entry(key).or_insert_with(|| {
                        let mut p = [0.0; 3];
                        for (&v, &wv) in face.iter().zip(&w) {
                            for d in 0..3 {
                                p[d] += wv as f64 * corners[v][d];
                            }
                        }
                        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                        verts.push(p.iter().map(|x| x / n).collect());
                        verts.len() - 1
                    })
                };
                for i in 0..s {
                    for j in 0..s - i {
                        tops.push(vec![id(i, j), id(i + 1, j), id(i, j + 1)]);
                        if i + j + 1 < s {
                            tops.push(vec![id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
                        }
                    }
                }
            }
        }
    }
    for t in &mut tops {
        t.sort_unstable();
    }
    (verts, tops)
}

fn cross_polytope(ell: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let verts: Vec<Vec<f64>> = (0..2 * ell)
        .map(|i| {
            let mut v = vec![0.0; ell];
            v[i / 2] = if i % 2 == 0 { 1.0 } else { -1.0 };
            v
        })
        .collect();
    let tops = (0..1usize << ell)
        .map(|mask| (0..ell).map(|a| 2 * a + ((mask >> a) & 1)).collect())
        .collect();
    (verts, tops)
}

/// Triangulated `ell`-sphere swept by the star-shaped slices
/// `{c_i + rho_i(omega) omega}` at heights `zs`, capped by two apexes, and
/// oriented to have degree `+1` about `inside`.
fn sweep_sphere(
    zs: &[f64],
    slices: &[(Vec<f64>, Vec<f64>)],
    omegas: &[Vec<f64>],
    wtops: &[Vec<usize>],
    apexes: [Vec<f64>; 2],
    label: Label,
    inside: &[f64],
) -> Result<SimplicialMesh> {
    let nz = zs.len();
    let nw = omegas.len();
    let ell = inside.len() - 1;
    let mut vertices = Vec::with_capacity(nz * nw + 2);
    for (&z, (c, rho)) in zs.iter().zip(slices) {
        for (w, r) in omegas.iter().zip(rho) {
            let mut v: Vec<f64> = c.iter().zip(w).map(|(a, b)| a + r * b).collect();
            v.push(z);
            vertices.push(v);
        }
    }
    let apex_minus = nz * nw;
    let apex_plus = apex_minus + 1;
    let [lo, hi] = apexes;
    vertices.push(lo);
    vertices.push(hi);

    let id = |i: usize, a: usize| i * nw + a;
    let mut tops = Vec::new();
    for sigma in wtops {
        for i in 0..nz - 1 {
            // Staircase triangulation of the prism over sigma.
            for r in 0..sigma.len() {
                let mut t: Vec<usize> = sigma[..=r].iter().map(|&a| id(i, a)).collect();
                t.extend(sigma[r..].iter().map(|&a| id(i + 1, a)));
                tops.push(t);
            }
        }
        let mut lower = vec![apex_minus];
        lower.extend(sigma.iter().map(|&a| id(0, a)));
        tops.push(lower);
        let mut upper = vec![apex_plus];
        upper.extend(sigma.iter().map(|&a| id(nz - 1, a)));
        tops.push(upper);
    }
    let ntops = tops.len();
    let mut boundary =
        SimplicialMesh::from_top(ell + 1, vertices, tops, vec![label; ntops], vec![])?;
    if !boundary.orient_coherently()? {
        return Err(Error::Structure("hole boundary is not orientable".into()));
    }
    if boundary.signed_volume(inside)? < 0.0 {
        boundary.reverse_orientation();
    }
    Ok(boundary)
}

/// Builds hole `j` (`-m <= j < m`): center curve, boundary sphere, witness.
pub fn build_hole(
    params: &FamilyParams,
    j: i64,
    resolution: HoleResolution,
) -> Result<HoleDescriptor> {
    let m = params.m as i64;
    if !(-m..m).contains(&j) {
        return Err(Error::Parameter(format!(
            "hole index j = {j} outside [-{m}, {m})"
        )));
    }
    if resolution.n_z < 8 || resolution.n_omega < 8 {
        return Err(Error::Precondition(format!(
            "hole resolution must be at least (8, 8), got ({}, {})",
            resolution.n_z, resolution.n_omega
        )));
    }
    let ell = params.ell;
    let interval = negative_intervals(params)[(j + m) as usize];
    let field = RescaledField::with_radius(params, f64::INFINITY);
    let nz = resolution.n_z | 1;
    let half = 0.5 * PI / params.lambda;
    let zs: Vec<f64> = (1..=nz)
        .map(|i| {
            if 2 * i == nz + 1 {
                interval.z_center
            } else {
                interval.z_center - half * (PI * i as f64 / (nz + 1) as f64).cos()
            }
        })
        .collect();
    let (omegas, wtops) = direction_sphere(ell, resolution.n_omega);
    let nw = omegas.len();

    let slices: Vec<(Vec<f64>, Vec<f64>)> = zs
        .par_iter()
        .map(|&z| {
            let c = slice_minimizer(params, z)?;
            let rho = omegas
                .iter()
                .map(|w| radial_root_from(&field, &c, z, w))
                .collect::<Result<Vec<f64>>>()?;
            Ok((c, rho))
        })
        .collect::<Result<Vec<_>>>()?;

    let center_idx = nz / 2;
    let mut witness = slices[center_idx].0.clone();
    witness.push(interval.z_center);
    let mut apex_minus = vec![0.0; ell];
    apex_minus.push(interval.z_minus);
    let mut apex_plus = vec![0.0; ell];
    apex_plus.push(interval.z_plus);
    let boundary = sweep_sphere(
        &zs,
        &slices,
        &omegas,
        &wtops,
        [apex_minus, apex_plus],
        Label::GammaCycle((j + m) as usize),
        &witness,
    )?;
    let depth = -field.phi(&witness[..ell], interval.z_center);

    let mut lip = 0.0f64;
    for i in 0..nz - 1 {
        let dz = zs[i + 1] - zs[i];
        for a in 0..nw {
            lip = lip.max((slices[i + 1].1[a] - slices[i].1[a]).abs() / dz);
        }
    }
    let max_residual = boundary
        .vertices
        .iter()
        .map(|v| field.phi(&v[..ell], v[ell]).abs())
        .fold(0.0, f64::max);
    let center_curve = zs
        .iter()
        .zip(&slices)
        .map(|(&z, (c, _))| CenterSample { z, c: c.clone() })
        .collect();
    Ok(HoleDescriptor {
        interval,
        center_curve,
        boundary,
        witness,
        depth,
        rho_lipschitz: lip,
        max_residual,
    })
}

/// Boundary of the component of `{xi : Phi~(xi, z) < level(xi, z)}` around
/// hole `j`, oriented to have degree `+1` about the hole witness. The level
/// must stay above `-depth` at the witness and make the slices of
/// `Phi~ - level` convex; slowly varying levels of size below the hole depth
/// qualify.
pub fn level_cycle<L>(
    params: &FamilyParams,
    hole: &HoleDescriptor,
    resolution: HoleResolution,
    level: L,
) -> Result<SimplicialMesh>
where
    L: Fn(&[f64], f64) -> f64 + Sync,
{
    if resolution.n_z < 8 || resolution.n_omega < 8 {
        return Err(Error::Precondition(format!(
            "hole resolution must be at least (8, 8), got ({}, {})",
            resolution.n_z, resolution.n_omega
        )));
    }
    let ell = params.ell;
    let field = RescaledField::with_radius(params, f64::INFINITY);
    let g = |xi: &[f64], z: f64| field.phi(xi, z) - level(xi, z);
    let zc = hole.interval.z_center;
    let on_center = |z: f64| -> Result<f64> {
        let c = slice_minimizer(params, z)?;
        Ok(g(&c, z))
    };
    if !(on_center(zc)? < 0.0) {
        return Err(Error::NoRoot(format!(
            "level is below the hole floor at z = {zc}"
        )));
    }
    // The center value rises monotonically to about +1 half a period away.
    let reach = PI / params.lambda;
    let tip = |dir: f64| -> Result<f64> {
        let (mut inner, mut outer) = (zc, (zc + dir * reach).clamp(-Z_HALF_WIDTH, Z_HALF_WIDTH));
        if !(on_center(outer)? > 0.0) {
            return Err(Error::NoRoot(format!(
                "level set of hole {} does not close in z",
                hole.interval.j
            )));
        }
        while (outer - inner).abs() > 1e-15 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if on_center(mid)? < 0.0 {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        Ok(if on_center(inner)?.abs() <= on_center(outer)?.abs() {
            inner
        } else {
            outer
        })
    };
    let (a, b) = (tip(-1.0)?, tip(1.0)?);

    let nz = resolution.n_z | 1;
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let zs: Vec<f64> = (1..=nz)
        .map(|i| mid - half * (PI * i as f64 / (nz + 1) as f64).cos())
        .collect();
    let (omegas, wtops) = direction_sphere(ell, resolution.n_omega);
    let slices: Vec<(Vec<f64>, Vec<f64>)> = zs
        .par_iter()
        .map(|&z| {
            let c = slice_minimizer(params, z)?;
            let rho = omegas
                .iter()
                .map(|w| {
                    let point =
                        |t: f64| -> Vec<f64> { c.iter().zip(w).map(|(x, d)| x + t * d).collect() };
                    let (lo, hi) = bracket_radius(&|t| g(&point(t), z), z)?;
                    Ok(if g(&point(lo), z).abs() <= g(&point(hi), z).abs() {
                        lo
                    } else {
                        hi
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((c, rho))
        })
        .collect::<Result<Vec<_>>>()?;
    let apex = |z: f64| -> Result<Vec<f64>> {
        let mut v = slice_minimizer(params, z)?;
        v.push(z);
        Ok(v)
    };
    sweep_sphere(
        &zs,
        &slices,
        &omegas,
        &wtops,
        [apex(a)?, apex(b)?],
        Label::GammaCycle((hole.interval.j + params.m as i64) as usize),
        &hole.witness,
    )
}

/// All `2m` holes, in interval order.
pub fn build_holes(
    params: &FamilyParams,
    resolution: HoleResolution,
) -> Result<Vec<HoleDescriptor>> {
    let m = params.m as i64;
    (-m..m)
        .into_par_iter()
        .map(|j| build_hole(params, j, resolution))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutReport {
    pub holes: usize,
    /// Smallest gap between consecutive intervals.
    pub min_gap: f64,
    /// `min Phi~` over sampled points of the slices `z = +-1/4`.
    pub horizontal_min: f64,
    /// `sigma^2 - exp(-(1 - sigma) lambda) lambda^-4`, the lower bound on
    /// `Phi` along `|X| = sigma`.
    pub vertical_bound: f64,
    /// Lower bound of `2 ln r - ln eta - lambda r` over
    /// `sqrt(eta) xi_radius <= r <= sigma`; positive means `Phi > 0` there.
    pub annulus_log_margin: f64,
    pub samples: usize,
    pub negative_samples: usize,
    pub negatives_outside_holes: usize,
    pub min_depth: f64,
}

/// Checks hole count, disjointness, positivity of the projected function on
/// the boundary of the window, and that every sampled negative point lies
/// over a negative interval.
pub fn verify_hole_layout(
    params: &FamilyParams,
    holes: &[HoleDescriptor],
    xi_radius: f64,
) -> Result<LayoutReport> {
    let expected = 2 * params.m;
    if holes.len() != expected {
        return Err(Error::Layout(format!(
            "expected {expected} holes, found {}",
            holes.len()
        )));
    }
    let mut min_gap = f64::INFINITY;
    for w in holes.windows(2) {
        let gap = w[1].interval.z_minus - w[0].interval.z_plus;
        if !(gap > 0.0) {
            return Err(Error::Layout(format!(
                "holes j = {} and j = {} overlap",
                w[0].interval.j, w[1].interval.j
            )));
        }
        min_gap = min_gap.min(gap);
    }
    for h in holes {
        let iv = h.interval;
        if !(-Z_HALF_WIDTH < iv.z_minus && iv.z_plus < Z_HALF_WIDTH) {
            return Err(Error::Layout(format!(
                "hole j = {} leaves the window",
                iv.j
            )));
        }
        let ell = params.ell;
        let (lo, hi) = h
            .boundary
            .vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v[ell]), b.max(v[ell]))
            });
        if lo != iv.z_minus || hi != iv.z_plus {
            return Err(Error::Layout(format!(
                "hole j = {} does not span its interval",
                iv.j
            )));
        }
        if !(h.depth > 0.0) {
            return Err(Error::Layout(format!(
                "witness of hole j = {} is not negative",
                iv.j
            )));
        }
    }

    let field = RescaledField::with_radius(params, xi_radius);
    let ell = params.ell;
    let per_axis = match ell {
        1 => 401,
        2 => 61,
        _ => 17,
    };
    let xi_grid: Vec<Vec<f64>> = lattice(ell, per_axis, xi_radius);

    let horizontal_min = xi_grid
        .iter()
        .flat_map(|xi| [field.phi(xi, Z_HALF_WIDTH), field.phi(xi, -Z_HALF_WIDTH)])
        .fold(f64::INFINITY, f64::min);
    if !(horizontal_min > 0.0) {
        return Err(Error::Layout(format!(
            "Phi <= 0 on z = +-1/4 ({horizontal_min})"
        )));
    }
    let vertical_bound = SIGMA * SIGMA - params.amplitude(SIGMA);
    if !(vertical_bound > 0.0) {
        return Err(Error::Layout(format!(
            "Phi bound on |X| = sigma is {vertical_bound}"
        )));
    }
    // 2 ln r - lambda r is concave in r, so its minimum over the annulus sits
    // at an endpoint.
    let g = |ln_r: f64| 2.0 * ln_r - params.log_eta - params.lambda * ln_r.exp();
    let annulus_log_margin = g(xi_radius.ln() + 0.5 * params.log_eta).min(g(SIGMA.ln()));
    if !(annulus_log_margin > 0.0) {
        return Err(Error::Layout(format!(
            "Phi may vanish between the rescaled window and |X| = sigma (margin {annulus_log_margin})"
        )));
    }

    let nz = 64 * params.m + 1;
    let intervals: Vec<NegativeInterval> = holes.iter().map(|h| h.interval).collect();
    let (negative, outside) = (0..nz)
        .into_par_iter()
        .map(|i| {
            let z = -Z_HALF_WIDTH + 2.0 * Z_HALF_WIDTH * i as f64 / (nz - 1) as f64;
            let mut neg = 0;
            let mut out = 0;
            // Grid points can land on an endpoint, where cos(lambda z) rounds
            // to a tiny negative number.
            let inside = intervals
                .iter()
                .any(|iv| iv.z_minus - 1e-14 < z && z < iv.z_plus + 1e-14);
            for xi in &xi_grid {
                if field.phi(xi, z) < 0.0 {
                    neg += 1;
                    if !inside {
                        out += 1;
                    }
                }
            }
            (neg, out)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if outside > 0 {
        return Err(Error::Layout(format!(
            "{outside} negative samples lie outside every hole"
        )));
    }
    Ok(LayoutReport {
        holes: holes.len(),
        min_gap,
        horizontal_min,
        vertical_bound,
        annulus_log_margin,
        samples: nz * xi_grid.len(),
        negative_samples: negative,
        negatives_outside_holes: outside,
        min_depth: holes.iter().map(|h| h.depth).fold(f64::INFINITY, f64::min),
    })
}

/// Points of `[-r, r]^dim` on a regular lattice with `per_axis` points per axis.
fn lattice(dim: usize, per_axis: usize, r: f64) -> Vec<Vec<f64>> {
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            (0..dim)
                .map(|_| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    -r + 2.0 * r * i as f64 / (per_axis - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Writes hole boundaries as CSV rows `j,vertex_order,xi_1..xi_ell,z`. For
/// `ell = 1` each boundary is written as a closed polyline (first vertex
/// repeated at the end) in its orientation; otherwise the vertices are listed
/// in index order.
pub fn write_hole_curves_csv<W: Write>(holes: &[HoleDescriptor], out: &mut W) -> Result<()> {
    let Some(first) = holes.first() else {
        return Ok(());
    };
    let ell = first.boundary.ambient_dim - 1;
    let header: Vec<String> = (1..=ell).map(|i| format!("xi_{i}")).collect();
    writeln!(out, "j,vertex_order,{},z", header.join(","))?;
    for h in holes {
        let order = if ell == 1 {
            closed_walk(&h.boundary)?
        } else {
            (0..h.boundary.vertices.len()).collect()
        };
        for (k, &v) in order.iter().enumerate() {
            let coords: Vec<String> = h.boundary.vertices[v]
                .iter()
                .map(|x| format!("{x:?}"))
                .collect();
            writeln!(out, "{},{k},{}", h.interval.j, coords.join(","))?;
        }
    }
    Ok(())
}

/// Vertex sequence of an oriented closed polyline, starting at its smallest
/// vertex and ending where it started.
pub fn closed_walk(curve: &SimplicialMesh) -> Result<Vec<usize>> {
    let n = curve.count(1);
    let mut next: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let e = curve.oriented_top(i);
        if next.insert(e[0], e[1]).is_some() {
            return Err(Error::Structure(
                "polyline is not a simple oriented cycle".into(),
            ));
        }
    }
    let Some(&start) = next.keys().min() else {
        return Ok(Vec::new());
    };
    let mut walk = vec![start];
    let mut cur = start;
    for _ in 0..n {
        cur = *next
            .get(&cur)
            .ok_or_else(|| Error::Structure("polyline is not closed".into()))?;
        walk.push(cur);
        if cur == start {
            break;
        }
    }
    if walk.len() != n + 1 || cur != start {
        return Err(Error::Structure(
            "polyline is not a single closed cycle".into(),
        ));
    }
    Ok(walk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::eval_phi_full;
    use crate::homology::{betti_numbers, degree, is_cycle};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_m_intervals() {
        for m in 1..=32 {
            let p = FamilyParams::new(3, 1, m).unwrap();
            let iv = negative_intervals(&p);
            assert_eq!(iv.len(), 2 * m);
            for w in iv.windows(2) {
                assert!(w[0].z_plus < w[1].z_minus);
            }
            for i in &iv {
                assert!(-0.25 < i.z_minus && i.z_plus < 0.25);
                assert_relative_eq!(i.z_plus - i.z_minus, PI / p.lambda, max_relative = 1e-12);
                assert!((p.lambda * i.z_center).cos() + 1.0 < 1e-12);
            }
            let top = iv.last().unwrap().z_plus;
            assert_relative_eq!(
                top,
                (2.0 * PI * m as f64 - 0.5 * PI) / (8.0 * PI * m as f64),
                max_relative = 1e-14
            );
        }
        let p = FamilyParams::new(3, 1, 1).unwrap();
        let iv = negative_intervals(&p);
        assert_relative_eq!(iv[1].z_minus, 1.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(iv[1].z_plus, 3.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(iv[0].z_minus, -3.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(iv[0].z_plus, -1.0 / 16.0, max_relative = 1e-14);
    }

    #[test]
    fn minimizer_at_zero_cosine_and_center() {
        let p = FamilyParams::new(4, 2, 3).unwrap();
        let z0 = 0.5 * PI / p.lambda;
        assert!(slice_minimizer(&p, z0)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-20));
        let zc = PI / p.lambda;
        let c = slice_minimizer(&p, zc).unwrap();
        // Bisection oracle for 2t = k e^(kt).
        let k = p.coupling();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * mid - k * (k * mid).exp() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(c[0], lo, max_relative = 1e-14);
        assert_relative_eq!(c[0], 0.5 * k, max_relative = 1e-6);
        assert_eq!(c[1], 0.0);
    }

    #[test]
    fn minimizer_is_stationary() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(ell, m) in &[(1usize, 1usize), (2, 4), (3, 8)] {
            let p = FamilyParams::new(ell + 2, ell, m).unwrap();
            let f = RescaledField::new(&p);
            for _ in 0..100 {
                let z = rng.gen_range(-0.25..0.25);
                let c = slice_minimizer(&p, z).unwrap();
                let g = f.phi_gradient(&c, z);
                let gn = g[..ell].iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!(gn <= 1e-12, "{gn}");
            }
        }
    }

    #[test]
    fn slice_hessian_dominates_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = FamilyParams::new(4, 2, 2).unwrap();
        for _ in 0..1000 {
            let r = rng.gen_range(0.0..SIGMA);
            let a = rng.gen_range(0.0..2.0 * PI);
            let x = [r * a.cos(), r * a.sin()];
            let z = rng.gen_range(-0.25..0.25);
            let e = eval_phi_full(&p, &x, z).unwrap();
            assert!(e.hessian_min_eigenvalue() >= 1.0);
        }
    }

    #[test]
    fn radial_root_oracle_and_sign_structure() {
        let p = FamilyParams::new(3, 1, 2).unwrap();
        let f = RescaledField::new(&p);
        let zc = negative_intervals(&p)[1].z_center;
        for w in [1.0, -1.0] {
            let rho = radial_root(&p, zc, &[w]).unwrap();
            // Bisection oracle on u~ along the ray at upsilon = 0.
            let c = slice_minimizer(&p, zc).unwrap()[0];
            let (mut lo, mut hi) = (0.0, 4.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f.value(&[c + w * mid], 0.0, zc) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert_relative_eq!(rho, lo, max_relative = 1e-12);
            assert!((rho - 1.0).abs() < 1e-6);
            for t in [0.25, 0.5, 0.9] {
                assert!(f.phi(&[c + w * t * rho], zc) < 0.0);
            }
            for t in [1.1, 2.0, 3.0] {
                assert!(f.phi(&[c + w * t * rho], zc) > 0.0);
            }
        }
        let iv = negative_intervals(&p)[1];
        let near = radial_root(&p, iv.z_minus + 1e-9, &[1.0]).unwrap();
        assert!(near < 1e-3);
        assert!(matches!(
            radial_root(&p, 0.0, &[1.0]),
            Err(Error::NoRoot(_))
        ));
    }

    #[test]
    fn boundaries_are_spheres_enclosing_witnesses() {
        for &(ell, m) in &[(1usize, 1usize), (2, 1), (3, 1), (1, 3)] {
            let p = FamilyParams::new(ell + 2, ell, m).unwrap();
            let holes = build_holes(&p, HoleResolution::default()).unwrap();
            assert_eq!(holes.len(), 2 * m);
            let chi = if ell % 2 == 0 { 2 } else { 0 };
            for h in &holes {
                let b = &h.boundary;
                b.check_face_closure().unwrap();
                assert_eq!(b.euler_characteristic(), chi);
                assert!(is_cycle(b));
                let betti = betti_numbers(b).unwrap();
                assert_eq!(betti.get(0), 1);
                assert_eq!(betti.get(ell), 1);
                assert_eq!(degree(b, &h.witness).unwrap(), 1);
                assert!(h.max_residual <= 1e-12);
                // depth = exp(k c) - c^2 with 2c = k exp(k c), i.e. 1 + k^2/4 + O(k^4)
                let k = p.coupling();
                assert!((0.9..=1.0 + k * k).contains(&h.depth), "{}", h.depth);
                assert_relative_eq!(h.depth, 1.0 + 0.25 * k * k, max_relative = 1e-15);
                let zmin = b
                    .vertices
                    .iter()
                    .map(|v| v[ell])
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(zmin, h.interval.z_minus);
            }
        }
    }

    #[test]
    fn rho_is_lipschitz_away_from_endpoints() {
        let p = FamilyParams::new(3, 1, 1).unwrap();
        let h = build_hole(&p, 0, HoleResolution::default()).unwrap();
        assert!(h.rho_lipschitz.is_finite() && h.rho_lipschitz > 0.0);
    }

    #[test]
    fn resolution_and_index_preconditions() {
        let p = FamilyParams::new(3, 1, 1).unwrap();
        assert!(matches!(
            build_hole(&p, 0, HoleResolution { n_z: 4, n_omega: 8 }),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            build_hole(&p, 1, HoleResolution::default()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn layout_passes_for_small_m() {
        for m in 1..=8 {
            let p = FamilyParams::new(3, 1, m).unwrap();
            let holes = build_holes(&p, HoleResolution::default()).unwrap();
            let r = verify_hole_layout(&p, &holes, 4.0).unwrap();
            assert_eq!(r.holes, 2 * m);
            assert!(r.negative_samples > 0);
            assert!(r.vertical_bound > 0.0 && r.horizontal_min > 0.0);
        }
    }

    #[test]
    fn layout_rejects_missing_hole() {
        let p = FamilyParams::new(3, 1, 2).unwrap();
        let mut holes = build_holes(&p, HoleResolution::default()).unwrap();
        holes.pop();
        assert!(matches!(
            verify_hole_layout(&p, &holes, 4.0),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn csv_has_closed_curves() {
        let p = FamilyParams::new(3, 1, 4).unwrap();
        let holes = build_holes(&p, HoleResolution::default()).unwrap();
        let mut out = Vec::new();
        write_hole_curves_csv(&holes, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut curves: HashMap<i64, Vec<String>> = HashMap::new();
        for line in text.lines().skip(1) {
            let (j, rest) = line.split_once(',').unwrap();
            let (_, coords) = rest.split_once(',').unwrap();
            curves
                .entry(j.parse().unwrap())
                .or_default()
                .push(coords.to_string());
        }
        assert_eq!(curves.len(), 8);
        for c in curves.values() {
            assert_eq!(c.first(), c.last());
            assert!(c.len() > 8);
        }
    }

    #[test]
    fn level_cycles_shrink_and_grow() {
        let p = FamilyParams::new(3, 1, 2).unwrap();
        let res = HoleResolution::default();
        let holes = build_holes(&p, res).unwrap();
        let f = RescaledField::with_radius(&p, f64::INFINITY);
        let span = |c: &SimplicialMesh| {
            let zs = c.vertices.iter().map(|v| v[1]);
            zs.clone().fold(f64::NEG_INFINITY, f64::max) - zs.fold(f64::INFINITY, f64::min)
        };
        for h in &holes {
            let zero = level_cycle(&p, h, res, |_, _| 0.0).unwrap();
            let inner = level_cycle(&p, h, res, |_, _| -0.25).unwrap();
            let outer = level_cycle(&p, h, res, |_, _| 0.25).unwrap();
            assert!(span(&inner) < span(&zero) && span(&zero) < span(&outer));
            // The zero level reproduces the hole span.
            assert!((span(&zero) - span(&h.boundary)).abs() < 1e-12);
            for (c, lvl) in [(&inner, -0.25), (&outer, 0.25)] {
                let worst = c
                    .vertices
                    .iter()
                    .map(|v| (f.phi(&v[..1], v[1]) - lvl).abs())
                    .fold(0.0, f64::max);
                assert!(worst < 1e-12, "{worst}");
                assert_eq!(crate::homology::degree(c, &h.witness).unwrap(), 1);
            }
        }
        assert!(matches!(
            level_cycle(&p, &holes[0], res, |_, _| -2.0),
            Err(Error::NoRoot(_))
        ));
    }
}
