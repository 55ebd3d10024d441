//! Verification runs over `(n, ell, m)` grids, JSON reports, and figure files.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::field::{FamilyParams, RescaledField, DEFAULT_XI_RADIUS};
use crate::frequency::{closed_form_cone_integrals, frequency, FieldChoice, FrequencyResult};
use crate::holes::{
    build_holes, negative_intervals, verify_hole_layout, write_hole_curves_csv, HoleDescriptor,
    HoleResolution,
};
use crate::homology::betti_numbers;
use crate::mesh::SimplicialMesh;
use crate::nodal_mesh::{
    check_gamma_cycles, cycle_independence, extract_gamma_cycles, mesh_nodal_set,
    mesh_regularized_level_set, nodal_diagnostics, WindowSpec,
};
use crate::quadrature::QuadratureSpec;
use crate::regularity::{
    certify_no_singular_zeros, critical_system_check, CertStatus, DEFAULT_BUDGET,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Frequency,
    Regularity,
    Holes,
    Topology,
    Regularized,
    Figures,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Frequency,
        Task::Regularity,
        Task::Holes,
        Task::Topology,
        Task::Regularized,
        Task::Figures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Frequency => "frequency",
            Task::Regularity => "regularity",
            Task::Holes => "holes",
            Task::Topology => "topology",
            Task::Regularized => "regularized",
            Task::Figures => "figures",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// `|N_1 - 2|`
    pub frequency: f64,
    /// `|N_r(Q) - 2|` and the relative error of the cone integrals.
    pub cone: f64,
    /// `|u~|` at mesh vertices.
    pub mesh_residual: f64,
    /// Certified lower bounds must exceed this.
    pub certification_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            frequency: 1e-3,
            cone: 1e-8,
            mesh_residual: 1e-9,
            certification_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n: Vec<usize>,
    pub ell: Vec<usize>,
    pub m: Vec<usize>,
    pub tasks: BTreeSet<Task>,
    pub quadrature: QuadratureSpec,
    pub xi_radius: f64,
    /// Overrides the default cells per `xi` axis.
    pub n_xi: Option<usize>,
    /// Overrides the default cells along `z`.
    pub n_z: Option<usize>,
    pub hole_resolution: HoleResolution,
    pub tolerances: Tolerances,
    /// Run the interval certification of `|u| + |grad u| > 0`.
    pub rigorous: bool,
    pub certification_radius: f64,
    pub certification_budget: usize,
    /// Full nodal meshes (and their Betti numbers) are built only below this
    /// many top simplices.
    pub max_mesh_simplices: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: vec![3],
            ell: vec![1],
            m: vec![1],
            tasks: [
                Task::Frequency,
                Task::Regularity,
                Task::Holes,
                Task::Topology,
            ]
            .into_iter()
            .collect(),
            quadrature: QuadratureSpec::default(),
            xi_radius: DEFAULT_XI_RADIUS,
            n_xi: None,
            n_z: None,
            hole_resolution: HoleResolution::default(),
            tolerances: Tolerances::default(),
            rigorous: false,
            certification_radius: 0.5,
            certification_budget: DEFAULT_BUDGET,
            max_mesh_simplices: 1_000_000,
            out: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("no tasks requested".into()));
        }
        if self.n.is_empty() || self.ell.is_empty() || self.m.is_empty() {
            return Err(Error::Config("n, ell and m ranges must be nonempty".into()));
        }
        for &n in &self.n {
            for &ell in &self.ell {
                if ell < 1 || ell + 2 > n {
                    return Err(Error::Config(format!(
                        "ell = {ell} violates 1 <= ell <= n - 2 for n = {n}"
                    )));
                }
            }
        }
        if let Some(&m) = self.m.iter().find(|&&m| m == 0) {
            return Err(Error::Config(format!("m = {m} must be at least 1")));
        }
        if !(self.certification_radius > 0.0 && self.certification_radius < 1.0) {
            return Err(Error::Config(
                "certification_radius must lie in (0, 1)".into(),
            ));
        }
        self.quadrature
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        for p in self.params()? {
            self.window(&p)
                .validate(&p)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Every `(n, ell, m)` combination, in lexicographic order.
    pub fn params(&self) -> Result<Vec<FamilyParams>> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &ell in &self.ell {
                for &m in &self.m {
                    out.push(
                        FamilyParams::new(n, ell, m).map_err(|e| Error::Config(e.to_string()))?,
                    );
                }
            }
        }
        Ok(out)
    }

    pub fn window(&self, params: &FamilyParams) -> WindowSpec {
        let mut w = WindowSpec::for_params(params).with_xi_radius(self.xi_radius);
        if let Some(n) = self.n_xi {
            w.n_xi = n;
        }
        if let Some(n) = self.n_z {
            w.n_z = n;
        }
        w
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Parses `4`, `1..8` (inclusive) or `1,2,5`.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse range '{s}'"));
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl ClaimStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            ClaimStatus::Pass => 0,
            ClaimStatus::Fail => 1,
            ClaimStatus::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub status: ClaimStatus,
    pub measured: Option<f64>,
    /// Positive when the claim holds with room to spare.
    pub margin: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

impl Claim {
    fn check(
        id: &str,
        ok: bool,
        measured: f64,
        margin: f64,
        tolerance: f64,
        detail: String,
    ) -> Self {
        Self {
            id: id.into(),
            status: if ok {
                ClaimStatus::Pass
            } else {
                ClaimStatus::Fail
            },
            measured: Some(measured),
            margin: Some(margin),
            tolerance,
            detail,
        }
    }

    fn inconclusive(id: &str, tolerance: f64, err: &Error) -> Self {
        Self {
            id: id.into(),
            status: ClaimStatus::Inconclusive,
            measured: None,
            margin: None,
            tolerance,
            detail: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub n: usize,
    pub ell: usize,
    pub m: usize,
    pub lambda: f64,
    pub log_eta: f64,
    pub claims: Vec<Claim>,
    pub notes: Vec<String>,
}

impl ConfigReport {
    pub fn label(&self) -> String {
        format!("n{}_l{}_m{}", self.n, self.ell, self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub created_unix: u64,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    /// Seconds per `<config>/<claim>`.
    pub runtimes: BTreeMap<String, f64>,
}

/// In-memory results kept for figure export.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub params: Option<FamilyParams>,
    pub holes: Vec<HoleDescriptor>,
    pub nodal_mesh: Option<SimplicialMesh>,
    pub frequency: Option<FrequencyResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub results: Vec<ConfigReport>,
    pub overall: ClaimStatus,
    pub metadata: Metadata,
    #[serde(skip)]
    pub artifacts: Vec<Artifacts>,
}

impl VerificationReport {
    pub fn claims(&self) -> impl Iterator<Item = (&ConfigReport, &Claim)> {
        self.results
            .iter()
            .flat_map(|r| r.claims.iter().map(move |c| (r, c)))
    }

    pub fn exit_code(&self) -> i32 {
        self.overall.exit_code()
    }

    /// The report without its metadata block; identical for identical
    /// configurations.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("metadata");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

fn overall(results: &[ConfigReport]) -> ClaimStatus {
    let statuses: Vec<ClaimStatus> = results
        .iter()
        .flat_map(|r| r.claims.iter().map(|c| c.status))
        .collect();
    if statuses.contains(&ClaimStatus::Fail) {
        ClaimStatus::Fail
    } else if statuses.contains(&ClaimStatus::Inconclusive) {
        ClaimStatus::Inconclusive
    } else {
        ClaimStatus::Pass
    }
}

fn estimated_mesh_size(params: &FamilyParams, w: &WindowSpec) -> usize {
    let fact: usize = (1..=params.ell + 1).product();
    2usize
        .saturating_mul(w.n_xi.saturating_pow(params.ell as u32))
        .saturating_mul(w.n_z)
        .saturating_mul(fact)
}

struct Run<'a> {
    config: &'a RunConfig,
    params: FamilyParams,
    claims: Vec<Claim>,
    notes: Vec<String>,
    runtimes: Vec<(String, f64)>,
    artifacts: Artifacts,
}

impl Run<'_> {
    fn timed<T>(&mut self, key: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.runtimes.push((key.into(), t.elapsed().as_secs_f64()));
        out
    }

    fn wants(&self, t: Task) -> bool {
        self.config.tasks.contains(&t)
    }

    fn frequency(&mut self) {
        let tol = self.config.tolerances;
        let spec = self.config.quadrature;
        let p = self.params;
        let res = self.timed("frequency.n1", || {
            frequency(&p, 1.0, &spec, FieldChoice::Family)
        });
        match &res {
            Ok(f) => {
                self.artifacts.frequency = Some(*f);
                if self.wants(Task::Frequency) {
                    let dev = (f.value - 2.0).abs();
                    self.claims.push(Claim::check(
                        "frequency.n1",
                        dev <= tol.frequency,
                        f.value,
                        tol.frequency - dev,
                        tol.frequency,
                        format!(
                            "N_1 = {:.12}, quadrature error estimate {:.3e}",
                            f.value, f.err_est
                        ),
                    ));
                }
            }
            Err(e) if self.wants(Task::Frequency) => {
                self.claims
                    .push(Claim::inconclusive("frequency.n1", tol.frequency, e))
            }
            Err(_) => {}
        }
        if !self.wants(Task::Frequency) {
            return;
        }
        let cone = self.timed("frequency.cone", || {
            let mut worst_n = 0.0f64;
            let mut worst_integral = 0.0f64;
            for r in [0.25, 0.5, 1.0] {
                let f = frequency(&p, r, &spec, FieldChoice::Cone)?;
                let exact = closed_form_cone_integrals(&p, r);
                worst_n = worst_n.max((f.value - 2.0).abs());
                worst_integral = worst_integral
                    .max((f.dirichlet.value - exact.dirichlet).abs() / exact.dirichlet)
                    .max((f.boundary_l2.value - exact.boundary_l2).abs() / exact.boundary_l2);
            }
            Ok::<_, Error>((worst_n, worst_integral))
        });
        match cone {
            Ok((dev, rel)) => self.claims.push(Claim::check(
                "frequency.cone",
                dev <= tol.cone && rel <= tol.cone,
                dev.max(rel),
                tol.cone - dev.max(rel),
                tol.cone,
                format!("max |N_r(Q) - 2| = {dev:.3e}, max relative integral error = {rel:.3e} over r in {{1/4, 1/2, 1}}"),
            )),
            Err(e) => self.claims.push(Claim::inconclusive("frequency.cone", tol.cone, &e)),
        }
    }

    fn regularity(&mut self) {
        let p = self.params;
        let report = self.timed("regularity.critical_system", || critical_system_check(&p));
        self.claims.push(Claim::check(
            "regularity.critical_system",
            !report.consistent && report.log_margin > 0.0,
            report.log_margin,
            report.log_margin,
            0.0,
            format!(
                "critical-point system inconsistent with log margin {:.12}; positive branch excluded: {}",
                report.log_margin, report.positive_branch_excluded
            ),
        ));
        if self.config.rigorous {
            let (radius, budget) = (
                self.config.certification_radius,
                self.config.certification_budget,
            );
            let tol = self.config.tolerances.certification_margin;
            match self.timed("regularity.certificate", || {
                certify_no_singular_zeros(&p, radius, budget)
            }) {
                Ok(c) => self.claims.push(Claim::check(
                    "regularity.certificate",
                    c.status == CertStatus::Proved && c.margin > tol,
                    c.margin,
                    c.margin - tol,
                    tol,
                    format!(
                        "{:?} on {} after {} boxes ({})",
                        c.status, c.region, c.boxes_processed, c.quantity
                    ),
                )),
                Err(e) => self
                    .claims
                    .push(Claim::inconclusive("regularity.certificate", tol, &e)),
            }
        }
    }

    fn holes(&mut self) -> Result<()> {
        let p = self.params;
        let res = self.config.hole_resolution;
        let holes = self.timed("holes.build", || build_holes(&p, res))?;
        if self.wants(Task::Holes) {
            let count = self.timed("holes.count", || negative_intervals(&p).len());
            self.claims.push(Claim::check(
                "holes.count",
                count == 2 * p.m,
                count as f64,
                0.0,
                0.0,
                format!("{count} negative intervals, expected {}", 2 * p.m),
            ));
            let xi_radius = self.config.xi_radius;
            match self.timed("holes.layout", || verify_hole_layout(&p, &holes, xi_radius)) {
                Ok(l) => self.claims.push(Claim::check(
                    "holes.layout",
                    true,
                    l.min_depth,
                    l.min_gap,
                    0.0,
                    format!(
                        "{} holes, min gap {:.3e}, min depth {:.6}, {} of {} samples negative, none outside holes",
                        l.holes, l.min_gap, l.min_depth, l.negative_samples, l.samples
                    ),
                )),
                Err(e @ Error::Layout(_)) => self.claims.push(Claim {
                    status: ClaimStatus::Fail,
                    ..Claim::inconclusive("holes.layout", 0.0, &e)
                }),
                Err(e) => self.claims.push(Claim::inconclusive("holes.layout", 0.0, &e)),
            }
        }
        self.artifacts.holes = holes;
        Ok(())
    }

    fn mesh_allowed(&mut self, w: &WindowSpec) -> bool {
        let size = estimated_mesh_size(&self.params, w);
        let ok = size <= self.config.max_mesh_simplices;
        if !ok
            && !self
                .notes
                .iter()
                .any(|n| n.starts_with("nodal mesh skipped"))
        {
            self.notes.push(format!(
                "nodal mesh skipped: about {size} top simplices exceeds max_mesh_simplices = {}",
                self.config.max_mesh_simplices
            ));
        }
        ok
    }

    fn topology(&mut self) {
        let p = self.params;
        let tol = self.config.tolerances;
        let w = self.config.window(&p);
        let seed = self.config.seed;
        let holes = std::mem::take(&mut self.artifacts.holes);

        let gamma = self.timed("topology.gamma", || {
            let cycles = extract_gamma_cycles(&p, &holes)?;
            check_gamma_cycles(&p, &cycles, &holes, seed)
        });
        match gamma {
            Ok(g) => {
                self.claims.push(Claim::check(
                    "topology.gamma_cycles",
                    g.all_closed && g.max_residual <= tol.mesh_residual,
                    g.max_residual,
                    tol.mesh_residual - g.max_residual,
                    tol.mesh_residual,
                    format!("{} cycles, all closed: {}", g.cycles, g.all_closed),
                ));
                self.claims.push(Claim::check(
                    "topology.containment",
                    g.max_raw_norm_sq < g.containment_bound && g.containment_bound < 0.25,
                    g.max_raw_norm_sq,
                    g.containment_bound - g.max_raw_norm_sq,
                    g.containment_bound,
                    "max |V|^2 over cycle vertices in raw coordinates".into(),
                ));
                let rank = g.independence.rank;
                self.claims.push(Claim::check(
                    "topology.independence",
                    g.independence.is_identity() && rank >= 2 * p.m,
                    rank as f64,
                    rank as f64 - (2 * p.m) as f64,
                    (2 * p.m) as f64,
                    format!(
                        "degree matrix is {}the identity; b_{} >= {rank}",
                        if g.independence.is_identity() {
                            ""
                        } else {
                            "not "
                        },
                        p.ell
                    ),
                ));
            }
            Err(e) => self.claims.push(Claim::inconclusive(
                "topology.independence",
                (2 * p.m) as f64,
                &e,
            )),
        }

        if self.mesh_allowed(&w) {
            match self.timed("topology.nodal_mesh", || mesh_nodal_set(&p, &w)) {
                Ok(mesh) => {
                    let d = self.timed("topology.nodal_gradient", || {
                        nodal_diagnostics(&p, &w, &mesh)
                    });
                    self.claims.push(Claim::check(
                        "regularity.nodal_gradient",
                        d.min_grad_rescaled > 0.0 && d.max_residual <= tol.mesh_residual,
                        d.min_grad_rescaled,
                        d.min_grad_rescaled,
                        0.0,
                        format!(
                            "{} vertices, {} top simplices, max |u~| = {:.3e}, min ln|grad u| = {:.3}",
                            d.vertices, d.top_simplices, d.max_residual, d.min_log_grad_raw
                        ),
                    ));
                    match self.timed("topology.mesh_betti", || betti_numbers(&mesh)) {
                        Ok(b) => {
                            let b_ell = b.get(p.ell);
                            self.claims.push(Claim::check(
                                "topology.mesh_betti",
                                b_ell >= 2 * p.m,
                                b_ell as f64,
                                b_ell as f64 - (2 * p.m) as f64,
                                (2 * p.m) as f64,
                                format!("Betti numbers of the meshed window {:?}", b.0),
                            ));
                        }
                        Err(e) => self.claims.push(Claim::inconclusive(
                            "topology.mesh_betti",
                            (2 * p.m) as f64,
                            &e,
                        )),
                    }
                    self.artifacts.nodal_mesh = Some(mesh);
                }
                Err(e) => {
                    self.claims
                        .push(Claim::inconclusive("regularity.nodal_gradient", 0.0, &e))
                }
            }
        } else {
            // Without a mesh, the cycle vertices stand in as nodal sample points.
            let f = RescaledField::with_radius(&p, f64::INFINITY);
            let min_grad = holes
                .iter()
                .flat_map(|h| h.boundary.vertices.iter())
                .map(|v| {
                    let g = f.gradient(&v[..p.ell], 0.0, v[p.ell]);
                    g.iter().map(|a| a * a).sum::<f64>().sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            self.claims.push(Claim::check(
                "regularity.nodal_gradient",
                min_grad > 0.0,
                min_grad,
                min_grad,
                0.0,
                "min |grad u~| over cycle vertices".into(),
            ));
        }
        self.artifacts.holes = holes;
    }

    fn regularized(&mut self) {
        let p = self.params;
        let tol = self.config.tolerances;
        let w = self.config.window(&p);
        let seed = self.config.seed;
        let with_mesh = self.mesh_allowed(&w);
        let res = self.config.hole_resolution;
        let holes = std::mem::take(&mut self.artifacts.holes);
        let res = self.timed("regularized", || {
            let a_m = holes.iter().map(|h| h.depth).fold(f64::INFINITY, f64::min);
            let theta = a_m / 4.0;
            let r = mesh_regularized_level_set(
                &p,
                theta / 100.0,
                theta,
                with_mesh.then_some(&w),
                &holes,
                res,
            )?;
            let outer = cycle_independence(&p, &r.gamma_outer, &holes, seed)?;
            let inner = cycle_independence(&p, &r.gamma_inner, &holes, seed)?;
            Ok::<_, Error>((r, outer, inner))
        });
        match res {
            Ok((r, outer, inner)) => {
                self.claims.push(Claim::check(
                    "regularized.independence",
                    outer.is_identity() && inner.is_identity() && r.witness_margin > 0.0,
                    outer.rank.min(inner.rank) as f64,
                    outer.rank.min(inner.rank) as f64 - (2 * p.m) as f64,
                    (2 * p.m) as f64,
                    format!(
                        "theta = a_m/4 = {:.6}, eps = theta/100; both cycle families give the identity: {}; witness margin {:.6}",
                        r.theta,
                        outer.is_identity() && inner.is_identity(),
                        r.witness_margin
                    ),
                ));
                self.claims.push(Claim::check(
                    "regularized.residual",
                    r.max_residual <= tol.mesh_residual,
                    r.max_residual,
                    tol.mesh_residual - r.max_residual,
                    tol.mesh_residual,
                    format!(
                        "max |u~^2 + eps^2|V|^2 - theta^2| over {} vertices",
                        if r.mesh.is_some() {
                            "surface and cycle"
                        } else {
                            "cycle"
                        }
                    ),
                ));
                if let Some(mesh) = &r.mesh {
                    match betti_numbers(mesh) {
                        Ok(b) => {
                            let b_ell = b.get(p.ell);
                            self.claims.push(Claim::check(
                                "regularized.mesh_betti",
                                b_ell >= 2 * p.m,
                                b_ell as f64,
                                b_ell as f64 - (2 * p.m) as f64,
                                (2 * p.m) as f64,
                                format!("Betti numbers of the meshed level set {:?}", b.0),
                            ));
                        }
                        Err(e) => self.claims.push(Claim::inconclusive(
                            "regularized.mesh_betti",
                            (2 * p.m) as f64,
                            &e,
                        )),
                    }
                }
            }
            Err(e) => self.claims.push(Claim::inconclusive(
                "regularized.independence",
                (2 * p.m) as f64,
                &e,
            )),
        }
        self.artifacts.holes = holes;
    }

    fn figures(&mut self) {
        let p = self.params;
        let w = self.config.window(&p);
        if self.artifacts.nodal_mesh.is_none() && self.mesh_allowed(&w) {
            match self.timed("figures.nodal_mesh", || mesh_nodal_set(&p, &w)) {
                Ok(m) => self.artifacts.nodal_mesh = Some(m),
                Err(e) => self.notes.push(format!("figure mesh failed: {e}")),
            }
        }
    }
}

fn run_one(
    config: &RunConfig,
    params: FamilyParams,
) -> (ConfigReport, Vec<(String, f64)>, Artifacts) {
    let mut run = Run {
        config,
        params,
        claims: Vec::new(),
        notes: Vec::new(),
        runtimes: Vec::new(),
        artifacts: Artifacts {
            params: Some(params),
            ..Artifacts::default()
        },
    };
    if run.wants(Task::Frequency) || run.wants(Task::Figures) {
        run.frequency();
    }
    if run.wants(Task::Regularity) {
        run.regularity();
    }
    let needs_holes = [
        Task::Holes,
        Task::Topology,
        Task::Regularized,
        Task::Figures,
    ]
    .iter()
    .any(|&t| run.wants(t));
    let holes_ok = if needs_holes {
        match run.holes() {
            Ok(()) => true,
            Err(e) => {
                for (t, id) in [
                    (Task::Holes, "holes.layout"),
                    (Task::Topology, "topology.independence"),
                    (Task::Regularized, "regularized.independence"),
                ] {
                    if run.wants(t) {
                        run.claims.push(Claim::inconclusive(id, 0.0, &e));
                    }
                }
                false
            }
        }
    } else {
        false
    };
    if holes_ok && run.wants(Task::Topology) {
        run.topology();
    }
    if holes_ok && run.wants(Task::Regularized) {
        run.regularized();
    }
    if run.wants(Task::Figures) {
        run.figures();
    }
    let report = ConfigReport {
        n: params.n,
        ell: params.ell,
        m: params.m,
        lambda: params.lambda,
        log_eta: params.log_eta,
        claims: run.claims,
        notes: run.notes,
    };
    (report, run.runtimes, run.artifacts)
}

/// Runs the requested tasks for every configuration. Configurations run
/// concurrently; results keep the lexicographic `(n, ell, m)` order.
pub fn run_verification(config: &RunConfig) -> Result<VerificationReport> {
    config.validate()?;
    let params = config.params()?;
    let outputs: Vec<_> = params.par_iter().map(|&p| run_one(config, p)).collect();

    let mut results = Vec::with_capacity(outputs.len());
    let mut artifacts = Vec::with_capacity(outputs.len());
    let mut runtimes = BTreeMap::new();
    for (report, times, art) in outputs {
        for (k, t) in times {
            runtimes.insert(format!("{}/{k}", report.label()), t);
        }
        results.push(report);
        artifacts.push(art);
    }
    let overall = overall(&results);
    Ok(VerificationReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        results,
        overall,
        metadata: Metadata {
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
            runtimes,
        },
        artifacts,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FigureOutput {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
}

/// Writes `meshes/*.obj` (n = 3), `meshes/*.smplx`, `curves/*.csv` and
/// `frequency.csv` under `out`.
pub fn emit_figures(report: &VerificationReport, out: &Path) -> Result<FigureOutput> {
    let has_any = report
        .artifacts
        .iter()
        .any(|a| !a.holes.is_empty() || a.nodal_mesh.is_some() || a.frequency.is_some());
    if !has_any {
        return Err(Error::Dependency(
            "report carries no holes, meshes or frequencies; run with the figures or topology task"
                .into(),
        ));
    }
    let mut output = FigureOutput::default();
    let create = |path: PathBuf| -> Result<(BufWriter<fs::File>, PathBuf)> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok((BufWriter::new(fs::File::create(&path)?), path))
    };

    for a in &report.artifacts {
        let Some(p) = a.params else { continue };
        let label = format!("n{}_l{}_m{}", p.n, p.ell, p.m);
        if !a.holes.is_empty() {
            let (mut w, path) = create(out.join("curves").join(format!("holes_{label}.csv")))?;
            write_hole_curves_csv(&a.holes, &mut w)?;
            w.flush()?;
            output.files.push(path);
        }
        if let Some(mesh) = &a.nodal_mesh {
            let (mut w, path) = create(out.join("meshes").join(format!("nodal_{label}.smplx")))?;
            mesh.write_simplicial_text(&mut w)?;
            w.flush()?;
            output.files.push(path);
            if p.n == 3 {
                let (mut w, path) = create(out.join("meshes").join(format!("nodal_{label}.obj")))?;
                mesh.write_obj(&mut w)?;
                w.flush()?;
                output.files.push(path);
            } else {
                output.notices.push(format!(
                    "{label}: OBJ skipped, surface export needs n = 3; wrote simplicial text only"
                ));
            }
        }
    }

    let rows: Vec<(FamilyParams, FrequencyResult)> = report
        .artifacts
        .iter()
        .filter_map(|a| Some((a.params?, a.frequency?)))
        .collect();
    if !rows.is_empty() {
        let (mut w, path) = create(out.join("frequency.csv"))?;
        writeln!(w, "n,ell,m,lambda,n1,err_est")?;
        for (p, f) in rows {
            writeln!(
                w,
                "{},{},{},{:?},{:?},{:?}",
                p.n, p.ell, p.m, p.lambda, f.value, f.err_est
            )?;
        }
        w.flush()?;
        output.files.push(path);
    }
    Ok(output)
}
