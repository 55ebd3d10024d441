//! Betti numbers over GF(2), degrees of oriented `ell`-cycles about points of
//! `R^(ell+1)`, and the degree matrix of a family of cycles against witnesses.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{drop_index, SimplicialMesh};

/// Sparse GF(2) boundary matrix `C_k -> C_(k-1)`; each column lists the sorted
/// row indices of its nonzero entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMatrix {
    pub k: usize,
    pub rows: usize,
    pub columns: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BettiVector(pub Vec<usize>);

impl BettiVector {
    pub fn get(&self, k: usize) -> usize {
        self.0.get(k).copied().unwrap_or(0)
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.0
            .iter()
            .enumerate()
            .map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) })
            .sum()
    }
}

/// Boundary matrices `d_1 .. d_top` of the complex.
pub fn boundary_matrices(mesh: &SimplicialMesh) -> Result<Vec<BoundaryMatrix>> {
    let dims = mesh.simplices_by_dim.len();
    let mut out = Vec::with_capacity(dims.saturating_sub(1));
    for k in 1..dims {
        let index: HashMap<&[usize], u32> = mesh.simplices_by_dim[k - 1]
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_slice(), i as u32))
            .collect();
        let columns = mesh.simplices_by_dim[k]
            .par_iter()
            .map(|s| {
                let mut col = Vec::with_capacity(s.len());
                for i in 0..s.len() {
                    let face = drop_index(s, i);
                    match index.get(face.as_slice()) {
                        Some(&r) => col.push(r),
                        None => {
                            return Err(Error::Structure(format!(
                                "face {face:?} of {s:?} missing from dimension {}",
                                k - 1
                            )))
                        }
                    }
                }
                col.sort_unstable();
                Ok(col)
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(BoundaryMatrix {
            k,
            rows: mesh.simplices_by_dim[k - 1].len(),
            columns,
        });
    }
    Ok(out)
}

/// Symmetric difference of two sorted index lists.
fn xor_into(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Column reduction with the lowest row index as pivot, columns taken from
/// last to first. Returns the rank and the pivot row of each reduced nonzero
/// column. Columns listed in `cleared` are known to reduce to zero and are
/// skipped.
fn reduce(m: &BoundaryMatrix, cleared: &[bool]) -> (usize, Vec<u32>) {
    let mut owner: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut pivots = Vec::new();
    for (c, col) in m.columns.iter().enumerate().rev() {
        if cleared.get(c).copied().unwrap_or(false) {
            continue;
        }
        let mut col = col.clone();
        while let Some(&p) = col.first() {
            match owner.get(&p) {
                Some(other) => col = xor_into(&col, other),
                None => break,
            }
        }
        if let Some(&p) = col.first() {
            pivots.push(p);
            owner.insert(p, col);
        }
    }
    (pivots.len(), pivots)
}

/// GF(2) rank of each boundary matrix, top dimension first so that pivots of
/// `d_(k+1)` clear the matching columns of `d_k`.
pub fn boundary_ranks(mats: &[BoundaryMatrix]) -> Vec<usize> {
    let mut ranks = vec![0; mats.len()];
    let mut cleared: Vec<bool> = Vec::new();
    for (i, m) in mats.iter().enumerate().rev() {
        let (rank, pivots) = reduce(m, &cleared);
        ranks[i] = rank;
        cleared = vec![false; m.rows];
        for p in pivots {
            cleared[p as usize] = true;
        }
    }
    ranks
}

/// Betti numbers `b_0 .. b_top` over GF(2).
pub fn betti_numbers(mesh: &SimplicialMesh) -> Result<BettiVector> {
    mesh.check_face_closure()?;
    let mats = boundary_matrices(mesh)?;
    let ranks = boundary_ranks(&mats);
    let dims = mesh.simplices_by_dim.len();
    let betti = (0..dims)
        .map(|k| {
            let rank_k = if k == 0 { 0 } else { ranks[k - 1] };
            let rank_k1 = ranks.get(k).copied().unwrap_or(0);
            mesh.count(k) - rank_k - rank_k1
        })
        .collect();
    Ok(BettiVector(betti))
}

/// True when the GF(2) boundary of the top simplices vanishes.
pub fn is_cycle(mesh: &SimplicialMesh) -> bool {
    mesh.facet_incidence().iter().all(|(_, c)| c % 2 == 0)
}

const MAX_RAYS: usize = 10;
const DEGREE_SEED: u64 = 0x5eed_0dd5;

/// Degree of an oriented `ell`-cycle in `R^(ell+1)` about `point`, by signed
/// ray crossings. Ray directions come from a fixed seeded sequence.
pub fn degree(cycle: &SimplicialMesh, point: &[f64]) -> Result<i64> {
    degree_seeded(cycle, point, DEGREE_SEED)
}

pub fn degree_seeded(cycle: &SimplicialMesh, point: &[f64], seed: u64) -> Result<i64> {
    let d = cycle.ambient_dim;
    if point.len() != d || cycle.top_dim() != Some(d.wrapping_sub(1)) {
        return Err(Error::Structure(format!(
            "degree needs a {}-cycle in R^{d} and a point in R^{d}",
            d.wrapping_sub(1)
        )));
    }
    let ntop = cycle.count(d - 1);
    if cycle.orientation.len() != ntop {
        return Err(Error::Structure("degree needs an oriented cycle".into()));
    }
    let scale = cycle
        .vertices
        .iter()
        .flat_map(|v| v.iter().zip(point).map(|(a, b)| (a - b).abs()))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let carrier_tol = 1e-12 * scale;
    let nearest = cycle
        .vertices
        .iter()
        .map(|v| {
            v.iter()
                .zip(point)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    if nearest <= carrier_tol {
        return Err(Error::OnCarrier(nearest));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RAYS {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        dir.iter_mut().for_each(|x| *x /= norm);
        match cast(cycle, point, &dir, carrier_tol)? {
            Some(deg) => return Ok(deg),
            None => continue,
        }
    }
    Err(Error::Numerical(format!(
        "{MAX_RAYS} consecutive degenerate rays"
    )))
}

/// Signed crossing count along one ray; `None` when a hit is too close to a
/// simplex boundary to classify.
fn cast(cycle: &SimplicialMesh, p: &[f64], dir: &[f64], carrier_tol: f64) -> Result<Option<i64>> {
    const EDGE_TOL: f64 = 1e-9;
    let d = p.len();
    let mut total = 0i64;
    for i in 0..cycle.count(d - 1) {
        let t = cycle.oriented_top(i);
        let v: Vec<&Vec<f64>> = t.iter().map(|&k| &cycle.vertices[k]).collect();
        // p + s * dir = v0 + sum_i b_i (v_i - v0)
        let a = DMatrix::from_fn(d, d, |r, c| {
            if c < d - 1 {
                v[c + 1][r] - v[0][r]
            } else {
                -dir[r]
            }
        });
        let rhs = DVector::from_fn(d, |r, _| p[r] - v[0][r]);
        let Some(sol) = a.clone().lu().solve(&rhs) else {
            continue;
        };
        let s = sol[d - 1];
        let bary: Vec<f64> = (0..d - 1).map(|k| sol[k]).collect();
        let b0 = 1.0 - bary.iter().sum::<f64>();
        let min_b = bary.iter().copied().fold(b0, f64::min);
        if min_b < -EDGE_TOL {
            continue;
        }
        if s.abs() <= carrier_tol {
            return Err(Error::OnCarrier(s.abs()));
        }
        if s < 0.0 {
            continue;
        }
        if min_b <= EDGE_TOL {
            return Ok(None);
        }
        let cols: Vec<Vec<f64>> = v
            .iter()
            .map(|x| x.iter().zip(p).map(|(a, b)| a - b).collect())
            .collect();
        let det = crate::mesh::determinant(&cols);
        if det == 0.0 {
            return Ok(None);
        }
        total += if det > 0.0 { 1 } else { -1 };
    }
    Ok(Some(total))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndependenceMatrix {
    /// `entries[i][j]` = degree of cycle `i` about witness `j`.
    pub entries: Vec<Vec<i64>>,
    /// Rank over the rationals.
    pub rank: usize,
}

impl IndependenceMatrix {
    pub fn is_identity(&self) -> bool {
        self.entries.iter().enumerate().all(|(i, row)| {
            row.len() == self.entries.len()
                && row.iter().enumerate().all(|(j, &v)| v == i64::from(i == j))
        })
    }
}

/// Degree of every cycle about every witness, and the rational rank.
pub fn independence_matrix(
    cycles: &[SimplicialMesh],
    witnesses: &[Vec<f64>],
) -> Result<IndependenceMatrix> {
    independence_matrix_seeded(cycles, witnesses, DEGREE_SEED)
}

pub fn independence_matrix_seeded(
    cycles: &[SimplicialMesh],
    witnesses: &[Vec<f64>],
    seed: u64,
) -> Result<IndependenceMatrix> {
    let entries = cycles
        .par_iter()
        .map(|c| {
            witnesses
                .iter()
                .map(|w| degree_seeded(c, w, seed))
                .collect::<Result<Vec<i64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rank = rational_rank(&entries);
    Ok(IndependenceMatrix { entries, rank })
}

/// Rank of an integer matrix by fraction-free (Bareiss) elimination.
pub fn rational_rank(m: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| a[r][c] != 0) else {
            continue;
        };
        a.swap(rank, p);
        for r in rank + 1..rows {
            for k in c + 1..cols {
                a[r][k] = (a[rank][c] * a[r][k] - a[r][c] * a[rank][k]) / prev;
            }
            a[r][c] = 0;
        }
        prev = a[rank][c];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{simplex_boundary_sphere, Label};
    use proptest::prelude::*;

    fn complex(tops: Vec<Vec<usize>>) -> SimplicialMesh {
        let nv = tops.iter().flatten().max().map_or(0, |m| m + 1);
        SimplicialMesh::from_top(1, vec![vec![0.0]; nv], tops, vec![], vec![]).unwrap()
    }

    fn circle(n: usize, r: f64, center: (f64, f64)) -> SimplicialMesh {
        let vertices = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vec![center.0 + r * a.cos(), center.1 + r * a.sin()]
            })
            .collect();
        let tops = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
        SimplicialMesh::from_top(2, vertices, tops, vec![], vec![]).unwrap()
    }

    fn torus7() -> SimplicialMesh {
        let mut tops = Vec::new();
        for i in 0..7 {
            tops.push(vec![i, (i + 1) % 7, (i + 3) % 7]);
            tops.push(vec![i, (i + 2) % 7, (i + 3) % 7]);
        }
        complex(tops)
    }

    fn octahedron() -> SimplicialMesh {
        let mut vertices = Vec::new();
        for axis in 0..3 {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; 3];
                v[axis] = s;
                vertices.push(v);
            }
        }
        let mut tops = Vec::new();
        for a in [0, 1] {
            for b in [2, 3] {
                for c in [4, 5] {
                    tops.push(vec![a, b, c]);
                }
            }
        }
        let mut m = SimplicialMesh::from_top(3, vertices, tops, vec![], vec![]).unwrap();
        m.orient_coherently().unwrap();
        if m.signed_volume(&[0.0; 3]).unwrap() < 0.0 {
            m.reverse_orientation();
        }
        m
    }

    /// Dense GF(2) rank by Gaussian elimination (oracle).
    fn dense_rank(rows: usize, cols: &[Vec<u32>]) -> usize {
        let mut mat: Vec<Vec<u8>> = vec![vec![0; cols.len()]; rows];
        for (c, col) in cols.iter().enumerate() {
            for &r in col {
                mat[r as usize][c] ^= 1;
            }
        }
        let mut rank = 0;
        for c in 0..cols.len() {
            let Some(p) = (rank..rows).find(|&r| mat[r][c] == 1) else {
                continue;
            };
            mat.swap(rank, p);
            for r in 0..rows {
                if r != rank && mat[r][c] == 1 {
                    for k in 0..cols.len() {
                        mat[r][k] ^= mat[rank][k];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// Betti numbers from the Smith normal form of dense GF(2) boundary
    /// matrices: over a field the normal form is diag(1, ..., 1, 0, ...) with
    /// as many ones as the rank.
    fn smith_betti(mesh: &SimplicialMesh) -> Vec<usize> {
        let mats = boundary_matrices(mesh).unwrap();
        let ranks: Vec<usize> = mats
            .iter()
            .map(|m| dense_rank(m.rows, &m.columns))
            .collect();
        (0..mesh.simplices_by_dim.len())
            .map(|k| {
                let rk = if k == 0 { 0 } else { ranks[k - 1] };
                mesh.count(k) - rk - ranks.get(k).copied().unwrap_or(0)
            })
            .collect()
    }

    #[test]
    fn spheres() {
        for d in 1..=4 {
            let b = betti_numbers(&simplex_boundary_sphere(d)).unwrap();
            let mut expected = vec![0; d + 1];
            expected[0] = 1;
            expected[d] = 1;
            assert_eq!(b.0, expected, "S^{d}");
        }
    }

    #[test]
    fn seven_vertex_torus() {
        let t = torus7();
        assert_eq!(t.count(0), 7);
        assert_eq!(t.count(1), 21);
        assert_eq!(t.count(2), 14);
        assert_eq!(betti_numbers(&t).unwrap().0, vec![1, 2, 1]);
    }

    #[test]
    fn disjoint_circles() {
        let u = circle(5, 1.0, (0.0, 0.0))
            .disjoint_union(&circle(7, 1.0, (5.0, 0.0)))
            .unwrap();
        assert_eq!(betti_numbers(&u).unwrap().0, vec![2, 2]);
    }

    #[test]
    fn boundary_squares_to_zero() {
        let t = torus7();
        let mats = boundary_matrices(&t).unwrap();
        for col in &mats[1].columns {
            let mut acc: Vec<u32> = Vec::new();
            for &r in col {
                acc = xor_into(&acc, &mats[0].columns[r as usize]);
            }
            assert!(acc.is_empty());
        }
    }

    #[test]
    fn missing_face_is_structural_error() {
        let mut t = torus7();
        t.simplices_by_dim[1].remove(3);
        assert!(matches!(betti_numbers(&t), Err(Error::Structure(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn agrees_with_smith_normal_form(
            tris in proptest::collection::vec((0usize..9, 0usize..9, 0usize..9), 1..30),
            edges in proptest::collection::vec((0usize..9, 0usize..9), 0..10),
        ) {
            let mut tops: Vec<Vec<usize>> = Vec::new();
            for (a, b, c) in tris {
                if a != b && b != c && a != c {
                    tops.push(vec![a, b, c]);
                }
            }
            prop_assume!(!tops.is_empty());
            let mut m = complex(tops);
            // Extra edges, added as lower-dimensional maximal simplices.
            for (a, b) in edges {
                if a != b {
                    let e = vec![a.min(b), a.max(b)];
                    if !m.simplices_by_dim[1].contains(&e) && e[1] < m.count(0) {
                        m.simplices_by_dim[1].push(e);
                    }
                }
            }
            m.simplices_by_dim[1].sort();
            let total: usize = m.simplices_by_dim.iter().map(Vec::len).sum();
            prop_assume!(total <= 200);
            let b = betti_numbers(&m).unwrap();
            prop_assert_eq!(&b.0, &smith_betti(&m));
            prop_assert_eq!(b.euler_characteristic(), m.euler_characteristic());
        }
    }

    #[test]
    fn winding_numbers() {
        let c = circle(64, 1.0, (0.0, 0.0));
        assert_eq!(degree(&c, &[0.0, 0.0]).unwrap(), 1);
        assert_eq!(degree(&c, &[0.3, -0.2]).unwrap(), 1);
        assert_eq!(degree(&c, &[2.0, 0.0]).unwrap(), 0);
        let mut r = c.clone();
        r.reverse_orientation();
        assert_eq!(degree(&r, &[0.0, 0.0]).unwrap(), -1);
    }

    #[test]
    fn octahedron_degree() {
        let o = octahedron();
        assert_eq!(degree(&o, &[0.1, 0.05, -0.2]).unwrap(), 1);
        assert_eq!(degree(&o, &[3.0, 0.0, 0.0]).unwrap(), 0);
        let mut r = o.clone();
        r.reverse_orientation();
        assert_eq!(degree(&r, &[0.0, 0.0, 0.0]).unwrap(), -1);
    }

    #[test]
    fn degree_independent_of_ray() {
        let o = octahedron();
        let c = circle(64, 1.0, (0.0, 0.0));
        for seed in 0..5 {
            assert_eq!(degree_seeded(&o, &[0.1, 0.2, 0.1], seed).unwrap(), 1);
            assert_eq!(degree_seeded(&c, &[0.5, 0.1], seed).unwrap(), 1);
            assert_eq!(degree_seeded(&c, &[-1.5, 0.1], seed).unwrap(), 0);
        }
    }

    #[test]
    fn degree_invariant_under_subdivision() {
        // Barycentric subdivision of the octahedron: each triangle split into six.
        let o = octahedron();
        let mut vertices = o.vertices.clone();
        let mut tops = Vec::new();
        let mut edge_mid: HashMap<(usize, usize), usize> = HashMap::new();
        for i in 0..o.count(2) {
            let t = o.oriented_top(i);
            let bc: Vec<f64> = (0..3)
                .map(|k| t.iter().map(|&v| o.vertices[v][k]).sum::<f64>() / 3.0)
                .collect();
            vertices.push(bc);
            let c = vertices.len() - 1;
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let m = *edge_mid.entry(key).or_insert_with(|| {
                    let mid: Vec<f64> = (0..3)
                        .map(|k| 0.5 * (o.vertices[a][k] + o.vertices[b][k]))
                        .collect();
                    vertices.push(mid);
                    vertices.len() - 1
                });
                tops.push(vec![a, m, c]);
                tops.push(vec![m, b, c]);
            }
        }
        let sub = SimplicialMesh::from_top(3, vertices, tops, vec![], vec![]).unwrap();
        assert_eq!(sub.count(2), 48);
        assert_eq!(degree(&sub, &[0.1, 0.05, -0.2]).unwrap(), 1);
        assert_eq!(degree(&sub, &[0.0, 2.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn point_on_carrier() {
        let c = circle(8, 1.0, (0.0, 0.0));
        assert!(matches!(degree(&c, &[1.0, 0.0]), Err(Error::OnCarrier(_))));
        let mid = [
            0.5 * (1.0 + (std::f64::consts::PI / 4.0).cos()),
            0.5 * (std::f64::consts::PI / 4.0).sin(),
        ];
        assert!(matches!(degree(&c, &mid), Err(Error::OnCarrier(_))));
    }

    #[test]
    fn independence_of_separate_circles() {
        let cycles = vec![
            circle(32, 1.0, (0.0, 0.0)),
            circle(32, 1.0, (3.0, 0.0)),
            circle(32, 1.0, (3.0, 0.0)),
        ];
        let w = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![10.0, 0.0]];
        let m = independence_matrix(&cycles, &w).unwrap();
        assert_eq!(m.entries, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 1, 0]]);
        assert_eq!(m.rank, 2);
        let id = independence_matrix(&cycles[..2], &w[..2]).unwrap();
        assert!(id.is_identity());
        assert_eq!(id.rank, 2);
    }

    #[test]
    fn rank_of_integer_matrices() {
        assert_eq!(rational_rank(&[vec![2, 4], vec![1, 2]]), 1);
        assert_eq!(
            rational_rank(&[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 3]]),
            3
        );
        assert_eq!(
            rational_rank(&[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]]),
            2
        );
        assert_eq!(rational_rank(&[]), 0);
    }

    #[test]
    fn labels_do_not_affect_homology() {
        let mut t = torus7();
        t.vertex_labels[0] = Label::BranchSet;
        assert_eq!(betti_numbers(&t).unwrap().0, vec![1, 2, 1]);
    }
}
