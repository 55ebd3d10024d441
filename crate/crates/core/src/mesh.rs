//! Simplicial complexes embedded in `R^d`, with optional orientation of the top
//! simplices, and their text formats.
//!
//! Every simplex is stored as its sorted vertex tuple. The orientation of a top
//! simplex is a sign relative to that sorted order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    UpperSheet,
    LowerSheet,
    BranchSet,
    GammaCycle(usize),
    Unlabeled,
}

impl Label {
    fn token(&self) -> String {
        match self {
            Label::UpperSheet => "upper".into(),
            Label::LowerSheet => "lower".into(),
            Label::BranchSet => "branch".into(),
            Label::GammaCycle(j) => format!("gamma{j}"),
            Label::Unlabeled => "-".into(),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "upper" => Label::UpperSheet,
            "lower" => Label::LowerSheet,
            "branch" => Label::BranchSet,
            "-" => Label::Unlabeled,
            _ => match s.strip_prefix("gamma").and_then(|j| j.parse().ok()) {
                Some(j) => Label::GammaCycle(j),
                None => return Err(Error::Format(format!("unknown label {s:?}"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplicialMesh {
    pub ambient_dim: usize,
    pub vertices: Vec<Vec<f64>>,
    /// `simplices_by_dim[k]`: sorted list of sorted `(k+1)`-tuples.
    pub simplices_by_dim: Vec<Vec<Vec<usize>>>,
    /// Sign of each top simplex relative to its sorted order; empty when the
    /// complex carries no orientation.
    pub orientation: Vec<i8>,
    pub vertex_labels: Vec<Label>,
    pub top_labels: Vec<Label>,
}

/// Sorts `s` in place and returns the sign of the sorting permutation.
pub fn sort_with_sign(s: &mut [usize]) -> i8 {
    let mut sign = 1;
    for i in 1..s.len() {
        let mut j = i;
        while j > 0 && s[j - 1] > s[j] {
            s.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    sign
}

impl SimplicialMesh {
    pub fn empty(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            vertices: Vec::new(),
            simplices_by_dim: Vec::new(),
            orientation: Vec::new(),
            vertex_labels: Vec::new(),
            top_labels: Vec::new(),
        }
    }

    /// Builds the closure of the given top simplices. Each top simplex is taken
    /// in the listed vertex order, which fixes its orientation.
    pub fn from_top(
        ambient_dim: usize,
        vertices: Vec<Vec<f64>>,
        tops: Vec<Vec<usize>>,
        top_labels: Vec<Label>,
        vertex_labels: Vec<Label>,
    ) -> Result<Self> {
        if vertices.iter().any(|v| v.len() != ambient_dim) {
            return Err(Error::Structure(
                "vertex with wrong coordinate count".into(),
            ));
        }
        let nv = vertices.len();
        let Some(top_dim) = tops.first().map(|t| t.len() - 1) else {
            let mut m = Self::empty(ambient_dim);
            m.simplices_by_dim = vec![(0..nv).map(|v| vec![v]).collect()];
            m.vertex_labels = pad_labels(vertex_labels, nv);
            m.vertices = vertices;
            return Ok(m);
        };
        let mut entries: Vec<(Vec<usize>, i8, Label)> = Vec::with_capacity(tops.len());
        for (i, mut t) in tops.into_iter().enumerate() {
            if t.len() != top_dim + 1 {
                return Err(Error::Structure("top simplices of mixed dimension".into()));
            }
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::Structure(
                    "simplex references a missing vertex".into(),
                ));
            }
            let sign = sort_with_sign(&mut t);
            if t.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Structure(format!("degenerate simplex {t:?}")));
            }
            let label = top_labels.get(i).copied().unwrap_or(Label::Unlabeled);
            entries.push((t, sign, label));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|a, b| a.0 == b.0);

        let mut by_dim: Vec<Vec<Vec<usize>>> = vec![Vec::new(); top_dim + 1];
        by_dim[0] = (0..nv).map(|v| vec![v]).collect();
        for k in 1..top_dim {
            by_dim[k] = if k < KEY_WIDTH {
                let mut keys: Vec<[usize; KEY_WIDTH]> = entries
                    .par_iter()
                    .flat_map_iter(|(t, _, _)| {
                        let mut faces = Vec::new();
                        for_each_subset(t, k + 1, |s| {
                            let mut key = [usize::MAX; KEY_WIDTH];
                            key[..s.len()].copy_from_slice(s);
                            faces.push(key);
                        });
                        faces
                    })
                    .collect();
                keys.par_sort_unstable();
                keys.dedup();
                keys.par_iter().map(|key| key[..=k].to_vec()).collect()
            } else {
                let mut list: Vec<Vec<usize>> = entries
                    .par_iter()
                    .flat_map_iter(|(t, _, _)| {
                        let mut faces = Vec::new();
                        for_each_subset(t, k + 1, |s| faces.push(s.to_vec()));
                        faces
                    })
                    .collect();
                list.par_sort_unstable();
                list.dedup();
                list
            };
        }
        let (tops, rest): (Vec<Vec<usize>>, Vec<(i8, Label)>) =
            entries.into_iter().map(|(t, s, l)| (t, (s, l))).unzip();
        let (orientation, top_labels): (Vec<i8>, Vec<Label>) = rest.into_iter().unzip();
        if top_dim > 0 {
            by_dim[top_dim] = tops;
        }
        Ok(Self {
            ambient_dim,
            vertex_labels: pad_labels(vertex_labels, nv),
            vertices,
            simplices_by_dim: by_dim,
            orientation,
            top_labels,
        })
    }

    pub fn top_dim(&self) -> Option<usize> {
        self.simplices_by_dim.len().checked_sub(1)
    }

    pub fn count(&self, dim: usize) -> usize {
        self.simplices_by_dim.get(dim).map_or(0, Vec::len)
    }

    pub fn tops(&self) -> &[Vec<usize>] {
        self.top_dim().map_or(&[], |d| &self.simplices_by_dim[d])
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.simplices_by_dim
            .iter()
            .enumerate()
            .map(|(k, s)| {
                if k % 2 == 0 {
                    s.len() as i64
                } else {
                    -(s.len() as i64)
                }
            })
            .sum()
    }

    /// Checks that every face of every simplex is present.
    pub fn check_face_closure(&self) -> Result<()> {
        for k in 1..self.simplices_by_dim.len() {
            let lower: HashSet<&[usize]> = self.simplices_by_dim[k - 1]
                .iter()
                .map(Vec::as_slice)
                .collect();
            for s in &self.simplices_by_dim[k] {
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Structure(format!(
                        "simplex {s:?} is not strictly sorted"
                    )));
                }
                for i in 0..s.len() {
                    let face: Vec<usize> = s
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &v)| v)
                        .collect();
                    if !lower.contains(face.as_slice()) {
                        return Err(Error::Structure(format!(
                            "face {face:?} of {s:?} missing from dimension {}",
                            k - 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Top simplices incident to each facet: `(facet, [(top, dropped index)])`,
    /// sorted by facet.
    pub fn facet_groups(&self) -> Vec<(Vec<usize>, Vec<(usize, usize)>)> {
        let width = self.tops().first().map_or(0, Vec::len);
        if width <= KEY_WIDTH + 1 {
            group_facets(
                self.tops(),
                |t, i| {
                    let mut k = [usize::MAX; KEY_WIDTH];
                    let mut p = 0;
                    for (j, &v) in t.iter().enumerate() {
                        if j != i {
                            k[p] = v;
                            p += 1;
                        }
                    }
                    k
                },
                |k| k.iter().copied().take_while(|&v| v != usize::MAX).collect(),
            )
        } else {
            group_facets(self.tops(), drop_index, |k| k.clone())
        }
    }

    /// Number of top simplices incident to each facet `(top - 1)`-simplex.
    pub fn facet_incidence(&self) -> Vec<(Vec<usize>, usize)> {
        self.facet_groups()
            .into_iter()
            .map(|(f, inc)| (f, inc.len()))
            .collect()
    }

    /// Makes the top simplices coherently oriented across shared facets,
    /// component by component. Returns `false` for a non-orientable complex,
    /// leaving the orientation unspecified.
    pub fn orient_coherently(&mut self) -> Result<bool> {
        let ntops = self.tops().len();
        if ntops == 0 {
            return Ok(true);
        }
        let width = self.tops()[0].len();
        // neighbour[ti * width + i] is the top across the facet opposite vertex i.
        let mut neighbour: Vec<Option<(usize, usize)>> = vec![None; ntops * width];
        for (_, inc) in self.facet_groups() {
            match inc[..] {
                [_] => {}
                [(a, i), (b, j)] => {
                    neighbour[a * width + i] = Some((b, j));
                    neighbour[b * width + j] = Some((a, i));
                }
                _ => {
                    return Err(Error::Structure(
                        "facet shared by more than two top simplices".into(),
                    ))
                }
            }
        }
        let mut sign = vec![0i8; ntops];
        for start in 0..ntops {
            if sign[start] != 0 {
                continue;
            }
            sign[start] = 1;
            let mut queue = VecDeque::from([start]);
            while let Some(ti) = queue.pop_front() {
                for i in 0..width {
                    let Some((tj, j)) = neighbour[ti * width + i] else {
                        continue;
                    };
                    // Induced facet signs must cancel.
                    let induced_i = sign[ti] * parity(i);
                    let want = -induced_i * parity(j);
                    if sign[tj] == 0 {
                        sign[tj] = want;
                        queue.push_back(tj);
                    } else if sign[tj] != want {
                        return Ok(false);
                    }
                }
            }
        }
        self.orientation = sign;
        Ok(true)
    }

    pub fn reverse_orientation(&mut self) {
        for s in &mut self.orientation {
            *s = -*s;
        }
    }

    /// Top simplex `i` listed in its oriented vertex order.
    pub fn oriented_top(&self, i: usize) -> Vec<usize> {
        let mut t = self.tops()[i].clone();
        if self.orientation.get(i).copied().unwrap_or(1) < 0 && t.len() >= 2 {
            t.swap(0, 1);
        }
        t
    }

    /// `sum det[v_0 - p, ..., v_d - p] / (d+1)!` over oriented top simplices of a
    /// hypersurface `(top_dim = ambient_dim - 1)`: the enclosed signed volume.
    pub fn signed_volume(&self, about: &[f64]) -> Result<f64> {
        let d = self.ambient_dim;
        if self.top_dim() != Some(d.wrapping_sub(1)) || self.orientation.len() != self.count(d - 1)
        {
            return Err(Error::Structure(
                "signed volume needs an oriented hypersurface".into(),
            ));
        }
        let fact: f64 = (1..=d).map(|k| k as f64).product();
        let mut total = 0.0;
        for i in 0..self.count(d - 1) {
            let cols: Vec<Vec<f64>> = self
                .oriented_top(i)
                .iter()
                .map(|&v| {
                    self.vertices[v]
                        .iter()
                        .zip(about)
                        .map(|(a, b)| a - b)
                        .collect()
                })
                .collect();
            total += determinant(&cols);
        }
        Ok(total / fact)
    }

    /// Disjoint union; vertices of `other` are appended.
    pub fn disjoint_union(&self, other: &SimplicialMesh) -> Result<SimplicialMesh> {
        if self.ambient_dim != other.ambient_dim {
            return Err(Error::Structure(
                "union of meshes in different dimensions".into(),
            ));
        }
        if self.count(0) > 0 && other.count(0) > 0 && self.top_dim() != other.top_dim() {
            return Err(Error::Structure(
                "union of meshes of different dimension".into(),
            ));
        }
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(other.vertices.iter().cloned());
        let mut tops = Vec::new();
        let mut labels = Vec::new();
        for (mesh, shift) in [(self, 0), (other, off)] {
            for i in 0..mesh.tops().len() {
                tops.push(mesh.oriented_top(i).iter().map(|v| v + shift).collect());
                labels.push(mesh.top_labels.get(i).copied().unwrap_or(Label::Unlabeled));
            }
        }
        let mut vlabels = self.vertex_labels.clone();
        vlabels.extend(other.vertex_labels.iter().copied());
        let oriented = (self.orientation.len() == self.tops().len())
            && (other.orientation.len() == other.tops().len());
        let mut out = SimplicialMesh::from_top(self.ambient_dim, vertices, tops, labels, vlabels)?;
        if !oriented {
            out.orientation.clear();
        }
        Ok(out)
    }

    /// Drops coordinate `axis` from every vertex.
    pub fn project_out(&self, axis: usize) -> SimplicialMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            v.remove(axis);
        }
        out.ambient_dim -= 1;
        out
    }

    /// Wavefront OBJ for a 2-dimensional mesh in `R^3`.
    pub fn write_obj<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.ambient_dim != 3 || (self.count(0) > 0 && self.top_dim() != Some(2)) {
            return Err(Error::Format(format!(
                "OBJ needs a triangle mesh in R^3, got dimension {:?} in R^{}",
                self.top_dim(),
                self.ambient_dim
            )));
        }
        for v in &self.vertices {
            writeln!(w, "v {:?} {:?} {:?}", v[0], v[1], v[2])?;
        }
        for i in 0..self.count(2) {
            let t = self.oriented_top(i);
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn write_simplicial_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "simplicial 1")?;
        writeln!(w, "ambient {}", self.ambient_dim)?;
        writeln!(w, "vertices {}", self.vertices.len())?;
        for (v, l) in self.vertices.iter().zip(&self.vertex_labels) {
            let coords: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{} {}", coords.join(" "), l.token())?;
        }
        for (k, list) in self.simplices_by_dim.iter().enumerate() {
            writeln!(w, "dim {k} {}", list.len())?;
            let top = Some(k) == self.top_dim() && k > 0;
            for (i, s) in list.iter().enumerate() {
                let ids: Vec<String> = s.iter().map(usize::to_string).collect();
                if top {
                    let sign = self.orientation.get(i).copied().unwrap_or(0);
                    let label = self.top_labels.get(i).copied().unwrap_or(Label::Unlabeled);
                    writeln!(w, "{} {sign:+} {}", ids.join(" "), label.token())?;
                } else {
                    writeln!(w, "{}", ids.join(" "))?;
                }
            }
        }
        Ok(())
    }

    pub fn read_simplicial_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of input".into()))?
                .map_err(Error::from)
        };
        let bad = |what: &str| Error::Format(format!("malformed {what}"));
        if next()?.trim() != "simplicial 1" {
            return Err(bad("header"));
        }
        let field = |line: String, key: &str| -> Result<usize> {
            line.strip_prefix(key)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(key))
        };
        let ambient_dim = field(next()?, "ambient")?;
        let nv = field(next()?, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        let mut vertex_labels = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != ambient_dim + 1 {
                return Err(bad("vertex line"));
            }
            let v: Vec<f64> = parts[..ambient_dim]
                .iter()
                .map(|s| s.parse().map_err(|_| bad("coordinate")))
                .collect::<Result<_>>()?;
            vertices.push(v);
            vertex_labels.push(Label::parse(parts[ambient_dim])?);
        }
        let mut by_dim = Vec::new();
        let mut orientation = Vec::new();
        let mut top_labels = Vec::new();
        let mut rest: Vec<String> = Vec::new();
        while let Ok(line) = next() {
            rest.push(line);
        }
        let mut idx = 0;
        while idx < rest.len() {
            let head: Vec<&str> = rest[idx].split_whitespace().collect();
            if head.is_empty() {
                idx += 1;
                continue;
            }
            if head.len() != 3 || head[0] != "dim" {
                return Err(bad("dimension header"));
            }
            let k: usize = head[1].parse().map_err(|_| bad("dimension"))?;
            let count: usize = head[2].parse().map_err(|_| bad("count"))?;
            if k != by_dim.len() || idx + 1 + count > rest.len() {
                return Err(bad("dimension block"));
            }
            let mut list = Vec::with_capacity(count);
            for line in &rest[idx + 1..idx + 1 + count] {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() < k + 1 {
                    return Err(bad("simplex line"));
                }
                let s: Vec<usize> = parts[..k + 1]
                    .iter()
                    .map(|t| t.parse().map_err(|_| bad("vertex id")))
                    .collect::<Result<_>>()?;
                if s.iter().any(|&v| v >= nv) {
                    return Err(Error::Structure(
                        "simplex references a missing vertex".into(),
                    ));
                }
                if parts.len() == k + 3 {
                    orientation.push(parts[k + 1].parse::<i8>().map_err(|_| bad("orientation"))?);
                    top_labels.push(Label::parse(parts[k + 2])?);
                }
                list.push(s);
            }
            by_dim.push(list);
            idx += 1 + count;
        }
        let top = by_dim.len().saturating_sub(1);
        if orientation.len() != by_dim.get(top).map_or(0, Vec::len) || orientation.contains(&0) {
            orientation.clear();
        }
        if top_labels.len() != by_dim.get(top).map_or(0, Vec::len) {
            top_labels.clear();
        }
        let mesh = Self {
            ambient_dim,
            vertices,
            simplices_by_dim: by_dim,
            orientation,
            vertex_labels,
            top_labels,
        };
        mesh.check_face_closure()?;
        Ok(mesh)
    }
}

fn pad_labels(mut labels: Vec<Label>, n: usize) -> Vec<Label> {
    labels.resize(n, Label::Unlabeled);
    labels
}

fn parity(i: usize) -> i8 {
    if i % 2 == 0 {
        1
    } else {
        -1
    }
}

const KEY_WIDTH: usize = 8;

fn group_facets<K, F, G>(
    tops: &[Vec<usize>],
    key: F,
    unkey: G,
) -> Vec<(Vec<usize>, Vec<(usize, usize)>)>
where
    K: Ord + Send + PartialEq,
    F: Fn(&[usize], usize) -> K + Sync,
    G: Fn(&K) -> Vec<usize>,
{
    let mut all: Vec<(K, usize, usize)> = tops
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ti, t)| (0..t.len()).map(|i| (key(t, i), ti, i)).collect::<Vec<_>>())
        .collect();
    all.par_sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<(Vec<usize>, Vec<(usize, usize)>)> = Vec::new();
    let mut last: Option<&K> = None;
    for (k, ti, i) in &all {
        if last == Some(k) {
            out.last_mut().expect("group started").1.push((*ti, *i));
        } else {
            out.push((unkey(k), vec![(*ti, *i)]));
            last = Some(k);
        }
    }
    out
}

pub(crate) fn drop_index(s: &[usize], i: usize) -> Vec<usize> {
    s.iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .collect()
}

/// Calls `f` on every `k`-element subset of the sorted slice `s`, in
/// lexicographic order.
pub(crate) fn for_each_subset<F: FnMut(&[usize])>(s: &[usize], k: usize, mut f: F) {
    let n = s.len();
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf = vec![0; k];
    loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = s[i];
        }
        f(&buf);
        let mut p = k;
        while p > 0 && idx[p - 1] == n - k + p - 1 {
            p -= 1;
        }
        if p == 0 {
            return;
        }
        idx[p - 1] += 1;
        for q in p..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Determinant of the matrix whose columns are `cols`.
pub fn determinant(cols: &[Vec<f64>]) -> f64 {
    let n = cols.len();
    nalgebra::DMatrix::from_fn(n, n, |i, j| cols[j][i]).determinant()
}

/// Boundary of the standard `(d+1)`-simplex as a triangulated `d`-sphere in
/// `R^(d+1)`, oriented outward.
pub fn simplex_boundary_sphere(d: usize) -> SimplicialMesh {
    let dim = d + 1;
    let mut vertices: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    vertices.push(vec![-1.0; dim]);
    let all: Vec<usize> = (0..=dim).collect();
    let tops: Vec<Vec<usize>> = (0..=dim).map(|i| drop_index(&all, i)).collect();
    let mut m =
        SimplicialMesh::from_top(dim, vertices, tops, vec![], vec![]).expect("valid simplex");
    m.orient_coherently().expect("manifold");
    let centroid = vec![0.0; dim];
    if m.signed_volume(&centroid).expect("hypersurface") < 0.0 {
        m.reverse_orientation();
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize, r: f64) -> SimplicialMesh {
        let vertices = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vec![r * a.cos(), r * a.sin()]
            })
            .collect();
        let tops = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
        SimplicialMesh::from_top(2, vertices, tops, vec![], vec![]).unwrap()
    }

    #[test]
    fn closure_and_euler() {
        for d in 1..=4 {
            let s = simplex_boundary_sphere(d);
            s.check_face_closure().unwrap();
            let chi = if d % 2 == 0 { 2 } else { 0 };
            assert_eq!(s.euler_characteristic(), chi);
            assert!(s.signed_volume(&vec![0.0; d + 1]).unwrap() > 0.0);
        }
    }

    #[test]
    fn sort_sign() {
        let mut s = vec![2, 0, 1];
        assert_eq!(sort_with_sign(&mut s), 1);
        let mut s = vec![1, 0, 2];
        assert_eq!(sort_with_sign(&mut s), -1);
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn circle_orientation_follows_input_order() {
        let c = circle(16, 1.0);
        let area = c.signed_volume(&[0.0, 0.0]).unwrap();
        let exact = 0.5 * 16.0 * (2.0 * std::f64::consts::PI / 16.0).sin();
        assert!((area - exact).abs() < 1e-14);
        let mut c2 = c.clone();
        c2.orient_coherently().unwrap();
        let a2 = c2.signed_volume(&[0.0, 0.0]).unwrap();
        assert!((a2.abs() - exact).abs() < 1e-14);
    }

    #[test]
    fn mobius_strip_is_not_orientable() {
        // Five-vertex Moebius band.
        let tops = vec![
            vec![0, 1, 2],
            vec![1, 2, 3],
            vec![2, 3, 4],
            vec![3, 4, 0],
            vec![4, 0, 1],
        ];
        let vertices = vec![vec![0.0; 3]; 5];
        let mut m = SimplicialMesh::from_top(3, vertices, tops, vec![], vec![]).unwrap();
        assert!(!m.orient_coherently().unwrap());
    }

    #[test]
    fn subsets_in_order() {
        let mut out = Vec::new();
        for_each_subset(&[1, 4, 7, 9], 2, |s| out.push(s.to_vec()));
        assert_eq!(
            out,
            vec![
                vec![1, 4],
                vec![1, 7],
                vec![1, 9],
                vec![4, 7],
                vec![4, 9],
                vec![7, 9]
            ]
        );
    }

    #[test]
    fn text_round_trip_is_byte_stable() {
        let mut s = simplex_boundary_sphere(2);
        s.vertex_labels[1] = Label::BranchSet;
        s.top_labels[0] = Label::GammaCycle(3);
        let mut a = Vec::new();
        s.write_simplicial_text(&mut a).unwrap();
        let back = SimplicialMesh::read_simplicial_text(a.as_slice()).unwrap();
        assert_eq!(back, s);
        let mut b = Vec::new();
        back.write_simplicial_text(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loader_rejects_missing_faces() {
        let text = "simplicial 1\nambient 2\nvertices 3\n0.0 0.0 -\n1.0 0.0 -\n0.0 1.0 -\n\
                    dim 0 3\n0\n1\n2\ndim 1 1\n0 1\ndim 2 1\n0 1 2 +1 -\n";
        assert!(matches!(
            SimplicialMesh::read_simplicial_text(text.as_bytes()),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn obj_export() {
        let s = simplex_boundary_sphere(2);
        let mut out = Vec::new();
        s.write_obj(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 4);
        let empty = SimplicialMesh::empty(3);
        let mut out = Vec::new();
        empty.write_obj(&mut out).unwrap();
        assert!(out.is_empty());
        assert!(matches!(
            circle(5, 1.0).write_obj(&mut Vec::new()),
            Err(Error::Format(_))
        ));
    }
}
