//! Triangulations of the rescaled nodal set, of the cycles `Gamma_j`, and of
//! the regularized level sets `u^2 + eps^2 |V|^2 = theta^2`.
//!
//! The nodal set in `(xi, upsilon, z)` is the graph `upsilon = +-sqrt(Phi~ / ell)`
//! over `D = {Phi~ >= 0}`. `D` is triangulated by cut cells: the window grid is
//! split into Kuhn simplices and each simplex is clipped to its positive part.
//! If a simplex has positive vertices `P` and nonpositive vertices `N`, the
//! positive part is combinatorially `Delta(P) x Delta({*} u N)`, where `(p, *)`
//! is `p` itself and `(p, q)` is the zero of `Phi~` on the edge `pq`; it is
//! triangulated by monotone lattice paths with `P` and `N` in global order, so
//! neighbouring simplices agree on shared faces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::{FamilyParams, RescaledField, DEFAULT_XI_RADIUS, Z_HALF_WIDTH};
use crate::holes::{level_cycle, HoleDescriptor, HoleResolution};
use crate::homology::{degree, independence_matrix_seeded, is_cycle, IndependenceMatrix};
use crate::mesh::{determinant, Label, SimplicialMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub xi_radius: f64,
    pub z_range: (f64, f64),
    /// Cells per `xi` axis.
    pub n_xi: usize,
    /// Cells along `z`.
    pub n_z: usize,
}

impl WindowSpec {
    /// Default grid: 64m cells in `z`; 32, 16 or 8 cells per `xi` axis for
    /// `ell = 1`, `2`, `>= 3`.
    pub fn for_params(params: &FamilyParams) -> Self {
        let n_xi = match params.ell {
            1 => 32,
            2 => 16,
            _ => 8,
        };
        Self {
            xi_radius: DEFAULT_XI_RADIUS,
            z_range: (-Z_HALF_WIDTH, Z_HALF_WIDTH),
            n_xi,
            n_z: 64 * params.m,
        }
    }

    pub fn with_xi_radius(mut self, r: f64) -> Self {
        self.xi_radius = r;
        self
    }

    pub fn refined(&self) -> Self {
        Self {
            n_xi: 2 * self.n_xi,
            n_z: 2 * self.n_z,
            ..*self
        }
    }

    pub fn validate(&self, params: &FamilyParams) -> Result<()> {
        if !(self.xi_radius >= 1.5) {
            return Err(Error::Precondition(format!(
                "xi_radius = {} does not cover the holes (rescaled radius about 1)",
                self.xi_radius
            )));
        }
        if self.z_range != (-Z_HALF_WIDTH, Z_HALF_WIDTH) {
            return Err(Error::Precondition("z_range must be [-1/4, 1/4]".into()));
        }
        if self.n_xi < 2 || self.n_xi % 2 != 0 {
            return Err(Error::Resolution(format!(
                "n_xi must be even and at least 2 so the axis xi = 0 is a grid line, got {}",
                self.n_xi
            )));
        }
        // The window holds 2m periods of cos(lambda z); adjacent holes are
        // separated only if every half-period gets 8 cells.
        let per_half_period = self.n_z as f64 / (4 * params.m) as f64;
        if per_half_period < 8.0 {
            return Err(Error::Resolution(format!(
                "n_z = {} gives {per_half_period} cells per half-period; need at least 8 (n_z >= {})",
                self.n_z,
                32 * params.m
            )));
        }
        Ok(())
    }
}

/// A vertex of the triangulated domain: a grid point, or the zero of `Phi~`
/// on the grid edge from a positive to a nonpositive grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum DomainVertex {
    Grid(u64),
    Cut(u64, u64),
}

/// Height offset `L(xi, upsilon, z)`: the meshed set is `u~ = L`.
type Level<'a> = &'a (dyn Fn(&[f64], f64, f64) -> f64 + Sync);

struct Grid<'a> {
    ell: usize,
    n_xi: usize,
    n_z: usize,
    xi_radius: f64,
    z0: f64,
    z1: f64,
    field: RescaledField,
    level: Level<'a>,
}

impl<'a> Grid<'a> {
    fn new(params: &FamilyParams, w: &WindowSpec, level: Level<'a>) -> Self {
        Self {
            ell: params.ell,
            n_xi: w.n_xi,
            n_z: w.n_z,
            xi_radius: w.xi_radius,
            z0: w.z_range.0,
            z1: w.z_range.1,
            field: RescaledField::with_radius(params, f64::INFINITY),
            level,
        }
    }

    fn stride(&self) -> u64 {
        (self.n_xi as u64 + 1).pow(self.ell as u32)
    }

    /// Multi-index `(i_1 .. i_ell, i_z)` to linear index.
    fn linear(&self, idx: &[usize]) -> u64 {
        let mut lin = idx[self.ell] as u64 * self.stride();
        let mut mul = 1u64;
        for &i in &idx[..self.ell] {
            lin += i as u64 * mul;
            mul *= self.n_xi as u64 + 1;
        }
        lin
    }

    fn coords(&self, lin: u64) -> Vec<f64> {
        let per = self.n_xi as u64 + 1;
        let mut rest = lin % self.stride();
        let iz = lin / self.stride();
        let mut out: Vec<f64> = (0..self.ell)
            .map(|_| {
                let i = rest % per;
                rest /= per;
                -self.xi_radius + 2.0 * self.xi_radius * i as f64 / self.n_xi as f64
            })
            .collect();
        out.push(if iz as usize == self.n_z {
            self.z1
        } else {
            self.z0 + (self.z1 - self.z0) * iz as f64 / self.n_z as f64
        });
        out
    }

    /// `Phi~ - L` at `upsilon = 0`; the meshed set is a graph over where it is
    /// nonnegative.
    fn phi(&self, p: &[f64]) -> f64 {
        let xi = &p[..self.ell];
        let z = p[self.ell];
        self.field.phi(xi, z) - (self.level)(xi, 0.0, z)
    }

    /// `upsilon >= 0` with `ell upsilon^2 = Phi~ - L(xi, upsilon, z)`.
    fn lift(&self, p: &[f64]) -> f64 {
        let xi = &p[..self.ell];
        let z = p[self.ell];
        let phi = self.field.phi(xi, z);
        let mut ups = 0.0;
        for _ in 0..4 {
            ups = ((phi - (self.level)(xi, ups, z)) / self.ell as f64)
                .max(0.0)
                .sqrt();
        }
        ups
    }

    /// Zero of `Phi~` on the segment from a positive point `a` to a
    /// nonpositive point `b`.
    fn edge_root(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let at = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.phi(&at(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (pl, ph) = (at(lo), at(hi));
        if self.phi(&pl).abs() <= self.phi(&ph).abs() {
            pl
        } else {
            ph
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Positive part of one Kuhn simplex, as domain simplices.
fn clip_simplex(verts: &[u64], positive: &[bool], out: &mut Vec<Vec<DomainVertex>>) {
    let mut p: Vec<u64> = verts
        .iter()
        .zip(positive)
        .filter(|(_, &s)| s)
        .map(|(&v, _)| v)
        .collect();
    let mut n: Vec<u64> = verts
        .iter()
        .zip(positive)
        .filter(|(_, &s)| !s)
        .map(|(&v, _)| v)
        .collect();
    if p.is_empty() {
        return;
    }
    p.sort_unstable();
    n.sort_unstable();
    let (a, b) = (p.len(), n.len());
    let vertex = |i: usize, j: usize| {
        if j == 0 {
            DomainVertex::Grid(p[i])
        } else {
            DomainVertex::Cut(p[i], n[j - 1])
        }
    };
    // Monotone paths from (0, 0) to (a - 1, b): choose which of the a - 1 + b
    // steps advance in P.
    let steps = a - 1 + b;
    for mask in 0u32..(1 << steps) {
        if mask.count_ones() as usize != a - 1 {
            continue;
        }
        let (mut i, mut j) = (0, 0);
        let mut simplex = vec![vertex(0, 0)];
        for s in 0..steps {
            if mask >> s & 1 == 1 {
                i += 1;
            } else {
                j += 1;
            }
            simplex.push(vertex(i, j));
        }
        out.push(simplex);
    }
}

/// Cut-cell triangulation of `{Phi~ >= 0}` in the window, lifted to the two
/// sheets `upsilon = +-sqrt(Phi~ / ell)` and glued along `Phi~ = 0`.
/// Vertices are `(xi, upsilon, z)`.
pub fn mesh_nodal_set(params: &FamilyParams, window: &WindowSpec) -> Result<SimplicialMesh> {
    mesh_graph(params, window, &|_, _, _| 0.0)
}

/// Mesh of `{u~ = L}` as the two graphs `upsilon = +-sqrt((Phi~ - L) / ell)`.
fn mesh_graph(
    params: &FamilyParams,
    window: &WindowSpec,
    level: Level<'_>,
) -> Result<SimplicialMesh> {
    window.validate(params)?;
    let grid = Grid::new(params, window, level);
    let ell = params.ell;
    let dim = ell + 1;
    let perms = permutations(dim);
    let cells_per_slab = window.n_xi.pow(ell as u32);

    // Sign of Phi~ at every grid point, one z-layer at a time.
    let layer = grid.stride() as usize;
    let positive: Vec<bool> = (0..layer * (window.n_z + 1))
        .into_par_iter()
        .map(|lin| grid.phi(&grid.coords(lin as u64)) > 0.0)
        .collect();

    let simplices: Vec<Vec<DomainVertex>> = (0..window.n_z)
        .into_par_iter()
        .flat_map_iter(|iz| {
            let mut out = Vec::new();
            let mut base = vec![0usize; dim];
            let mut verts = vec![0u64; dim + 1];
            let mut signs = vec![false; dim + 1];
            for cell in 0..cells_per_slab {
                let mut rest = cell;
                for b in base.iter_mut().take(ell) {
                    *b = rest % window.n_xi;
                    rest /= window.n_xi;
                }
                base[ell] = iz;
                for perm in &perms {
                    let mut idx = base.clone();
                    verts[0] = grid.linear(&idx);
                    for (k, &axis) in perm.iter().enumerate() {
                        idx[axis] += 1;
                        verts[k + 1] = grid.linear(&idx);
                    }
                    for (s, v) in signs.iter_mut().zip(&verts) {
                        *s = positive[*v as usize];
                    }
                    clip_simplex(&verts, &signs, &mut out);
                }
            }
            out
        })
        .collect();

    let mut keys: Vec<DomainVertex> = simplices.iter().flatten().copied().collect();
    keys.par_sort_unstable();
    keys.dedup();
    let index: HashMap<DomainVertex, usize> =
        keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let points: Vec<(Vec<f64>, f64)> = keys
        .par_iter()
        .map(|k| {
            let p = match *k {
                DomainVertex::Grid(g) => grid.coords(g),
                DomainVertex::Cut(a, b) => grid.edge_root(&grid.coords(a), &grid.coords(b)),
            };
            let ups = match k {
                DomainVertex::Grid(_) => grid.lift(&p),
                DomainVertex::Cut(..) => 0.0,
            };
            (p, ups)
        })
        .collect();

    // Lifted vertex ids: grid points get an upper and a lower copy, cut points
    // a single branch vertex.
    let mut upper = vec![0usize; keys.len()];
    let mut lower = vec![0usize; keys.len()];
    let mut vertices = Vec::with_capacity(2 * keys.len());
    let mut vertex_labels = Vec::with_capacity(2 * keys.len());
    let lift = |p: &[f64], ups: f64| -> Vec<f64> {
        let mut v = p[..ell].to_vec();
        v.push(ups);
        v.push(p[ell]);
        v
    };
    for (i, (k, (p, ups))) in keys.iter().zip(&points).enumerate() {
        let ups = *ups;
        match k {
            DomainVertex::Grid(_) => {
                upper[i] = vertices.len();
                vertices.push(lift(p, ups));
                vertex_labels.push(Label::UpperSheet);
                lower[i] = vertices.len();
                vertices.push(lift(p, -ups));
                vertex_labels.push(Label::LowerSheet);
            }
            DomainVertex::Cut(..) => {
                upper[i] = vertices.len();
                lower[i] = vertices.len();
                vertices.push(lift(p, 0.0));
                vertex_labels.push(Label::BranchSet);
            }
        }
    }

    let oriented: Vec<Vec<usize>> = simplices
        .par_iter()
        .map(|s| {
            let mut ids: Vec<usize> = s.iter().map(|k| index[k]).collect();
            let v0 = &points[ids[0]].0;
            let cols: Vec<Vec<f64>> = ids[1..]
                .iter()
                .map(|&i| points[i].0.iter().zip(v0).map(|(a, b)| a - b).collect())
                .collect();
            if determinant(&cols) < 0.0 {
                ids.swap(0, 1);
            }
            ids
        })
        .collect();
    let mut tops = Vec::with_capacity(2 * oriented.len());
    let mut labels = Vec::with_capacity(2 * oriented.len());
    for ids in &oriented {
        tops.push(ids.iter().map(|&i| upper[i]).collect::<Vec<_>>());
        labels.push(Label::UpperSheet);
        // The lower sheet carries the opposite orientation so that the glued
        // surface is coherently oriented.
        let mut low: Vec<usize> = ids.iter().map(|&i| lower[i]).collect();
        low.swap(0, 1);
        tops.push(low);
        labels.push(Label::LowerSheet);
    }
    let mut mesh = SimplicialMesh::from_top(ell + 2, vertices, tops, labels, vertex_labels)?;
    if !mesh.orient_coherently()? {
        return Err(Error::Structure("nodal mesh is not orientable".into()));
    }
    // Keep the convention that the upper sheet projects with positive orientation.
    let mut votes = 0i64;
    for ids in &oriented {
        let mut sorted = ids.iter().map(|&k| upper[k]).collect::<Vec<_>>();
        let sign = crate::mesh::sort_with_sign(&mut sorted);
        if let Ok(i) = mesh.tops().binary_search(&sorted) {
            votes += i64::from(sign * mesh.orientation[i]);
        }
    }
    if votes < 0 {
        mesh.reverse_orientation();
    }
    Ok(mesh)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalDiagnostics {
    pub vertices: usize,
    pub top_simplices: usize,
    /// `max |u~|` over vertices.
    pub max_residual: f64,
    /// `max |upsilon|` over branch vertices.
    pub branch_max_upsilon: f64,
    /// `min |grad u~|` over vertices, rescaled units.
    pub min_grad_rescaled: f64,
    /// `min ln |grad u|` over vertices, raw units.
    pub min_log_grad_raw: f64,
    /// Interior facets that do not bound exactly two top simplices.
    pub nonmanifold_interior_facets: usize,
    /// True when `upsilon -> -upsilon` maps the vertex set onto itself.
    pub sheet_symmetric: bool,
}

pub fn nodal_diagnostics(
    params: &FamilyParams,
    window: &WindowSpec,
    mesh: &SimplicialMesh,
) -> NodalDiagnostics {
    let ell = params.ell;
    let f = RescaledField::with_radius(params, f64::INFINITY);
    let per_vertex: Vec<(f64, f64, f64)> = mesh
        .vertices
        .par_iter()
        .map(|v| {
            let (xi, ups, z) = (&v[..ell], v[ell], v[ell + 1]);
            let r = f.value(xi, ups, z).abs();
            let g = f.gradient(xi, ups, z);
            let transverse: f64 = g[..=ell].iter().map(|a| a * a).sum();
            let along_z = g[ell + 1] * g[ell + 1];
            let grad = (transverse + along_z).sqrt();
            // |grad u|^2 = eta |grad_(xi, upsilon) u~|^2 + eta^2 (d_z u~)^2
            let ln_raw =
                0.5 * params.log_eta + 0.5 * (transverse + params.log_eta.exp() * along_z).ln();
            (
                r,
                grad,
                if transverse > 0.0 {
                    ln_raw
                } else {
                    params.log_eta + 0.5 * along_z.ln()
                },
            )
        })
        .collect();
    let branch_max_upsilon = mesh
        .vertices
        .iter()
        .zip(&mesh.vertex_labels)
        .filter(|(_, l)| **l == Label::BranchSet)
        .map(|(v, _)| v[ell].abs())
        .fold(0.0, f64::max);

    let on_window_edge = |v: &[f64]| {
        v[..ell]
            .iter()
            .any(|x| (x.abs() - window.xi_radius).abs() < 1e-12)
            || (v[ell + 1].abs() - Z_HALF_WIDTH).abs() < 1e-12
    };
    let nonmanifold = mesh
        .facet_incidence()
        .iter()
        .filter(|(facet, c)| *c != 2 && !facet.iter().all(|&i| on_window_edge(&mesh.vertices[i])))
        .count();

    let key = |v: &[f64], flip: bool| -> Vec<u64> {
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                if flip && i == ell {
                    (-x + 0.0).to_bits()
                } else {
                    (x + 0.0).to_bits()
                }
            })
            .collect()
    };
    let mut a: Vec<Vec<u64>> = mesh.vertices.iter().map(|v| key(v, false)).collect();
    let mut b: Vec<Vec<u64>> = mesh.vertices.iter().map(|v| key(v, true)).collect();
    a.sort_unstable();
    b.sort_unstable();

    NodalDiagnostics {
        vertices: mesh.vertices.len(),
        top_simplices: mesh.tops().len(),
        max_residual: per_vertex.iter().map(|t| t.0).fold(0.0, f64::max),
        branch_max_upsilon,
        min_grad_rescaled: per_vertex.iter().map(|t| t.1).fold(f64::INFINITY, f64::min),
        min_log_grad_raw: per_vertex.iter().map(|t| t.2).fold(f64::INFINITY, f64::min),
        nonmanifold_interior_facets: nonmanifold,
        sheet_symmetric: a == b,
    }
}

/// The cycles `Gamma_j`: each hole boundary placed at `upsilon = 0`.
pub fn extract_gamma_cycles(
    params: &FamilyParams,
    holes: &[HoleDescriptor],
) -> Result<Vec<SimplicialMesh>> {
    let ell = params.ell;
    holes
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let b = &h.boundary;
            if b.ambient_dim != ell + 1 {
                return Err(Error::Structure(
                    "hole boundary has the wrong dimension".into(),
                ));
            }
            let mut g = b.clone();
            for v in &mut g.vertices {
                v.insert(ell, 0.0);
            }
            g.ambient_dim = ell + 2;
            g.top_labels = vec![Label::GammaCycle(j); g.tops().len()];
            g.vertex_labels = vec![Label::GammaCycle(j); g.vertices.len()];
            Ok(g)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCheck {
    pub cycles: usize,
    pub all_closed: bool,
    /// `max |u~|` over all cycle vertices.
    pub max_residual: f64,
    /// `max |X|^2 + y^2 + z^2` over all cycle vertices in raw coordinates.
    pub max_raw_norm_sq: f64,
    /// `1/256 + 1/16`
    pub containment_bound: f64,
    pub independence: IndependenceMatrix,
}

/// Cycle condition, nodal containment, ball containment, and the degree
/// matrix of the projected cycles against the hole witnesses.
pub fn check_gamma_cycles(
    params: &FamilyParams,
    cycles: &[SimplicialMesh],
    holes: &[HoleDescriptor],
    seed: u64,
) -> Result<GammaCheck> {
    let ell = params.ell;
    let f = RescaledField::with_radius(params, f64::INFINITY);
    let eta = params.log_eta.exp();
    let mut max_residual = 0.0f64;
    let mut max_raw = 0.0f64;
    for c in cycles {
        for v in &c.vertices {
            max_residual = max_residual.max(f.value(&v[..ell], v[ell], v[ell + 1]).abs());
            let xi_sq: f64 = v[..=ell].iter().map(|a| a * a).sum();
            max_raw = max_raw.max(eta * xi_sq + v[ell + 1] * v[ell + 1]);
        }
    }
    let projected: Vec<SimplicialMesh> = cycles.iter().map(|c| c.project_out(ell)).collect();
    let witnesses: Vec<Vec<f64>> = holes.iter().map(|h| h.witness.clone()).collect();
    Ok(GammaCheck {
        cycles: cycles.len(),
        all_closed: cycles.iter().all(is_cycle),
        max_residual,
        max_raw_norm_sq: max_raw,
        containment_bound: 1.0 / 256.0 + 1.0 / 16.0,
        independence: independence_matrix_seeded(&projected, &witnesses, seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedLevelSet {
    /// The components `u~ = +h` and `u~ = -h` as one complex, when a window
    /// was given.
    pub mesh: Option<SimplicialMesh>,
    /// Boundaries of `{Phi~ < h}` around each hole at `upsilon = 0`.
    pub gamma_outer: Vec<SimplicialMesh>,
    /// Boundaries of `{Phi~ < -h}` around each hole at `upsilon = 0`.
    pub gamma_inner: Vec<SimplicialMesh>,
    /// `min_j depth_j`, in units of `eta`.
    pub a_m: f64,
    pub theta: f64,
    pub eps: f64,
    /// `max |u~^2 + eps^2 |V|^2 - theta^2|` over vertices, cycles included.
    pub max_residual: f64,
    /// `a_m - theta`: over every witness `u~ <= -a_m < -theta`, so no point of
    /// the level set projects onto a witness.
    pub witness_margin: f64,
}

/// The level set `u^2 + eps^2 |V|^2 = theta^2` as its two components
/// `u~ = +-h`, `h = sqrt(theta^2 - eps^2 |V|^2)`, each meshed as a two-sheeted
/// graph like the nodal set, together with the cycles around the holes.
/// `theta` and `eps` are in units of `eta` (raw `theta = eta * theta`, raw
/// `eps = eta * eps`).
pub fn mesh_regularized_level_set(
    params: &FamilyParams,
    eps: f64,
    theta: f64,
    window: Option<&WindowSpec>,
    holes: &[HoleDescriptor],
    resolution: HoleResolution,
) -> Result<RegularizedLevelSet> {
    if holes.is_empty() {
        return Err(Error::Dependency(
            "regularized level set needs the holes".into(),
        ));
    }
    let a_m = holes.iter().map(|h| h.depth).fold(f64::INFINITY, f64::min);
    if !(theta > 0.0 && theta < 0.5 * a_m) {
        return Err(Error::Precondition(format!(
            "theta = {theta} must lie in (0, a_m / 2) with a_m = {a_m}"
        )));
    }
    if !(eps >= 0.0 && eps <= theta / 100.0) {
        return Err(Error::Precondition(format!(
            "eps = {eps} must lie in [0, theta / 100]"
        )));
    }
    let ell = params.ell;
    let eta = params.log_eta.exp();
    let h = move |xi: &[f64], ups: f64, z: f64| {
        let v_sq = eta * (xi.iter().map(|a| a * a).sum::<f64>() + ups * ups) + z * z;
        (theta * theta - eps * eps * v_sq).max(0.0).sqrt()
    };
    let neg_h = move |xi: &[f64], ups: f64, z: f64| -h(xi, ups, z);

    let mesh = match window {
        Some(w) => {
            let outer = mesh_graph(params, w, &h)?;
            let inner = mesh_graph(params, w, &neg_h)?;
            Some(outer.disjoint_union(&inner)?)
        }
        None => None,
    };
    let lift = |c: SimplicialMesh| -> SimplicialMesh {
        let mut g = c;
        for v in &mut g.vertices {
            v.insert(ell, 0.0);
        }
        g.ambient_dim = ell + 2;
        g
    };
    let gamma_outer = holes
        .par_iter()
        .map(|hole| level_cycle(params, hole, resolution, |xi, z| h(xi, 0.0, z)).map(lift))
        .collect::<Result<Vec<_>>>()?;
    let gamma_inner = holes
        .par_iter()
        .map(|hole| level_cycle(params, hole, resolution, |xi, z| -h(xi, 0.0, z)).map(lift))
        .collect::<Result<Vec<_>>>()?;

    let f = RescaledField::with_radius(params, f64::INFINITY);
    let residual = |v: &Vec<f64>| {
        let u = f.value(&v[..ell], v[ell], v[ell + 1]);
        let t = h(&v[..ell], v[ell], v[ell + 1]);
        (u * u - t * t).abs()
    };
    let max_residual = mesh
        .iter()
        .chain(&gamma_outer)
        .chain(&gamma_inner)
        .flat_map(|m| m.vertices.iter())
        .map(residual)
        .fold(0.0, f64::max);

    Ok(RegularizedLevelSet {
        mesh,
        gamma_outer,
        gamma_inner,
        a_m,
        theta,
        eps,
        max_residual,
        witness_margin: a_m - theta,
    })
}

/// Degree matrix of level-set cycles (projected to `(xi, z)`) against witnesses.
pub fn cycle_independence(
    params: &FamilyParams,
    cycles: &[SimplicialMesh],
    holes: &[HoleDescriptor],
    seed: u64,
) -> Result<IndependenceMatrix> {
    let projected: Vec<SimplicialMesh> = cycles.iter().map(|c| c.project_out(params.ell)).collect();
    let witnesses: Vec<Vec<f64>> = holes.iter().map(|h| h.witness.clone()).collect();
    independence_matrix_seeded(&projected, &witnesses, seed)
}

/// Degree of one projected cycle about one point; exposed for spot checks.
pub fn projected_degree(
    params: &FamilyParams,
    cycle: &SimplicialMesh,
    point: &[f64],
) -> Result<i64> {
    degree(&cycle.project_out(params.ell), point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holes::{build_holes, HoleResolution};
    use crate::homology::betti_numbers;

    fn union_find_components(mesh: &SimplicialMesh) -> usize {
        let n = mesh.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in mesh.tops() {
            for w in t.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    #[test]
    fn clip_counts() {
        // Triangle with one positive vertex: a single triangle; with two: a
        // quadrilateral split in two.
        let mut out = Vec::new();
        clip_simplex(&[0, 1, 2], &[true, false, false], &mut out);
        assert_eq!(out.len(), 1);
        out.clear();
        clip_simplex(&[0, 1, 2], &[true, true, false], &mut out);
        assert_eq!(out.len(), 2);
        out.clear();
        clip_simplex(&[0, 1, 2, 3], &[true, true, false, false], &mut out);
        assert_eq!(out.len(), 3);
        out.clear();
        clip_simplex(&[0, 1, 2], &[false, false, false], &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn surface_for_ell_one() {
        for m in 1..=2 {
            let p = FamilyParams::new(3, 1, m).unwrap();
            let w = WindowSpec::for_params(&p);
            let mesh = mesh_nodal_set(&p, &w).unwrap();
            mesh.check_face_closure().unwrap();
            assert_eq!(union_find_components(&mesh), 1);
            let b = betti_numbers(&mesh).unwrap();
            assert_eq!(b.0, vec![1, 4 * m - 1, 0]);
            // Double of a square with 2m holes, glued along the hole circles.
            assert_eq!(mesh.euler_characteristic(), 2 - 4 * m as i64);
            let d = nodal_diagnostics(&p, &w, &mesh);
            assert!(d.max_residual <= 1e-9, "{}", d.max_residual);
            assert!(d.branch_max_upsilon <= 1e-12);
            assert!(d.min_grad_rescaled > 0.0);
            assert_eq!(d.nonmanifold_interior_facets, 0);
            assert!(d.sheet_symmetric);
        }
    }

    #[test]
    fn surface_is_coherently_oriented() {
        let p = FamilyParams::new(3, 1, 1).unwrap();
        let mesh = mesh_nodal_set(&p, &WindowSpec::for_params(&p)).unwrap();
        let mut copy = mesh.clone();
        assert!(copy.orient_coherently().unwrap());
        let agree = mesh
            .orientation
            .iter()
            .zip(&copy.orientation)
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree == 0 || agree == mesh.orientation.len());
    }

    #[test]
    fn coarse_z_grid_is_rejected() {
        let p = FamilyParams::new(3, 1, 2).unwrap();
        let w = WindowSpec {
            n_z: 32,
            ..WindowSpec::for_params(&p)
        };
        assert!(matches!(mesh_nodal_set(&p, &w), Err(Error::Resolution(_))));
    }

    #[test]
    fn gamma_cycles_are_nodal_and_independent() {
        for &(ell, m) in &[(1usize, 2usize), (2, 1)] {
            let p = FamilyParams::new(ell + 2, ell, m).unwrap();
            let holes = build_holes(&p, HoleResolution::default()).unwrap();
            let cycles = extract_gamma_cycles(&p, &holes).unwrap();
            let c = check_gamma_cycles(&p, &cycles, &holes, 7).unwrap();
            assert!(c.all_closed);
            assert!(c.max_residual <= 1e-12);
            assert!(c.max_raw_norm_sq < c.containment_bound);
            assert!(c.independence.is_identity());
            assert_eq!(c.independence.rank, 2 * m);
            // A witness outside every hole gives a zero column.
            let mut far = vec![0.0; ell + 1];
            far[0] = 3.0;
            assert_eq!(projected_degree(&p, &cycles[0], &far).unwrap(), 0);
        }
    }

    #[test]
    fn regularized_cycles_keep_degrees() {
        for m in [1, 4, 7] {
            let p = FamilyParams::new(3, 1, m).unwrap();
            let res = HoleResolution::default();
            let holes = build_holes(&p, res).unwrap();
            let a_m = holes.iter().map(|h| h.depth).fold(f64::INFINITY, f64::min);
            let theta = a_m / 4.0;
            let r =
                mesh_regularized_level_set(&p, theta / 100.0, theta, None, &holes, res).unwrap();
            assert!(r.max_residual <= 1e-9, "{}", r.max_residual);
            assert!(r.witness_margin > 0.0);
            for cycles in [&r.gamma_outer, &r.gamma_inner] {
                assert!(cycles.iter().all(is_cycle));
                assert!(cycle_independence(&p, cycles, &holes, 7)
                    .unwrap()
                    .is_identity());
            }
        }
        let p = FamilyParams::new(3, 1, 1).unwrap();
        let res = HoleResolution::default();
        let holes = build_holes(&p, res).unwrap();
        let a_m = holes[0].depth;
        assert!(matches!(
            mesh_regularized_level_set(&p, 0.0, a_m, None, &holes, res),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            mesh_regularized_level_set(&p, 0.1, 0.1, None, &holes, res),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            mesh_regularized_level_set(&p, 0.0, 0.1, None, &[], res),
            Err(Error::Dependency(_))
        ));
    }

    #[test]
    fn regularized_components_carry_nodal_topology() {
        let m = 2;
        let p = FamilyParams::new(3, 1, m).unwrap();
        let res = HoleResolution::default();
        let holes = build_holes(&p, res).unwrap();
        let theta = holes[0].depth / 4.0;
        let w = WindowSpec::for_params(&p);
        let r =
            mesh_regularized_level_set(&p, theta / 100.0, theta, Some(&w), &holes, res).unwrap();
        let mesh = r.mesh.unwrap();
        assert_eq!(union_find_components(&mesh), 2);
        assert_eq!(betti_numbers(&mesh).unwrap().0, vec![2, 2 * (4 * m - 1), 0]);
        assert!(r.max_residual <= 1e-9, "{}", r.max_residual);
    }

    #[test]
    fn solid_case_has_spheres_around_holes() {
        let p = FamilyParams::new(4, 2, 1).unwrap();
        let w = WindowSpec::for_params(&p);
        let mesh = mesh_nodal_set(&p, &w).unwrap();
        assert_eq!(union_find_components(&mesh), 1);
        // Gluing along 2m spheres adds 2m - 1 loops through pairs of holes.
        assert_eq!(betti_numbers(&mesh).unwrap().0, vec![1, 1, 2, 0]);
        let d = nodal_diagnostics(&p, &w, &mesh);
        assert!(d.max_residual <= 1e-9);
        assert_eq!(d.nonmanifold_interior_facets, 0);
    }

    #[test]
    fn refinement_keeps_topology() {
        let p = FamilyParams::new(3, 1, 1).unwrap();
        let w = WindowSpec::for_params(&p);
        let coarse = betti_numbers(&mesh_nodal_set(&p, &w).unwrap()).unwrap();
        let fine = betti_numbers(&mesh_nodal_set(&p, &w.refined()).unwrap()).unwrap();
        assert_eq!(coarse, fine);
    }

    #[test]
    fn obj_export_for_surface() {
        let p = FamilyParams::new(3, 1, 4).unwrap();
        let mesh = mesh_nodal_set(&p, &WindowSpec::for_params(&p)).unwrap();
        let mut buf = Vec::new();
        mesh.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().filter(|l| l.starts_with("v ")).count(),
            mesh.vertices.len()
        );
        assert_eq!(
            text.lines().filter(|l| l.starts_with("f ")).count(),
            mesh.tops().len()
        );
    }
}
