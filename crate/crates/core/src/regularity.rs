//! Regularity of the nodal set: no point has `u = 0` and `grad u = 0`.
//!
//! Two independent checks. The critical-system check reduces a singular zero to
//! `x1 = 2/lambda` and `4/lambda^2 = eta e^2` and compares both sides in log
//! space. The interval certificate proves `inf(|u| + |grad u|) > 0` on a box by
//! branch and bound.
//!
//! The certificate works in rescaled coordinates `X = sqrt(eta) xi`,
//! `y = sqrt(eta) upsilon` on the whole box. There `u = eta * u~` and the
//! gradient components are `sqrt(eta) d_xi u~`, `sqrt(eta) d_upsilon u~` and
//! `eta d_z u~`, so `(u, grad u)` vanishes exactly where `(u~, grad u~)` does,
//! while near the axis, where everything in raw units is of size `eta`, the
//! rescaled quantities are of order one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::field::{FamilyParams, Point};
use crate::interval::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSystemReport {
    /// `2 / lambda`
    pub x1_star: f64,
    /// `4 / lambda^2`
    pub lhs: f64,
    /// `ln(eta) + 2`
    pub rhs_log: f64,
    /// True iff `lhs = exp(rhs_log)`, i.e. a singular zero exists on the
    /// `cos = -1` branch.
    pub consistent: bool,
    /// `|ln(lhs) - rhs_log|`
    pub log_margin: f64,
    /// The `cos = +1` branch gives `u = x1^2 + eta e^(lambda x1) > 0`.
    pub positive_branch_excluded: bool,
}

/// Solves the critical system on the branch `cos(lambda z) = -1`.
pub fn critical_system_check(params: &FamilyParams) -> CriticalSystemReport {
    let lambda = params.lambda;
    let x1_star = 2.0 / lambda;
    let lhs = 4.0 / (lambda * lambda);
    let rhs_log = params.log_eta + 2.0;
    let log_margin = (lhs.ln() - rhs_log).abs();
    let tol = 1e-12 * (1.0 + rhs_log.abs());
    CriticalSystemReport {
        x1_star,
        lhs,
        rhs_log,
        consistent: log_margin <= tol && x1_star <= 1.0,
        log_margin,
        positive_branch_excluded: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertStatus {
    Proved,
    Failed,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub region: String,
    pub quantity: String,
    /// Smallest certified lower bound over all leaf boxes, in the units named
    /// by `quantity`.
    pub margin: f64,
    pub boxes_processed: usize,
    pub status: CertStatus,
    /// Raw-coordinate box `(X, y, z)` where the proof failed.
    pub failing_box: Option<Vec<(f64, f64)>>,
}

/// The field a certificate is run against.
#[derive(Debug, Clone, Copy)]
pub enum CertField {
    Family(FamilyParams),
    /// `Q = |X|^2 - ell y^2` without perturbation; singular along the `z`-axis.
    Cone {
        ell: usize,
    },
}

pub const DEFAULT_BUDGET: usize = 4_000_000;
const SUBDIVISION_FLOOR: f64 = 1e-14;
const BATCH: usize = 2048;

enum Outcome {
    Proved(f64),
    Split(Vec<Interval>, Vec<Interval>),
    Failed,
}

struct Setup {
    field: CertField,
    ell: usize,
    /// Multipliers turning a box width into a normalized width per dimension.
    width_scale: Vec<f64>,
    /// Maps box coordinates back to raw `(X, y, z)`.
    to_raw: Vec<f64>,
}

impl Setup {
    fn lower_bound(&self, b: &[Interval]) -> f64 {
        match self.field {
            CertField::Family(p) => family_lower_bound(&p, b),
            CertField::Cone { ell } => cone_lower_bound(ell, b),
        }
    }

    fn widest(&self, b: &[Interval]) -> (usize, f64) {
        b.iter()
            .zip(&self.width_scale)
            .map(|(iv, s)| iv.width() * s)
            .enumerate()
            .fold(
                (0, -1.0),
                |acc, (i, w)| if w > acc.1 { (i, w) } else { acc },
            )
    }

    fn process(&self, b: &[Interval]) -> Outcome {
        let g = self.lower_bound(b);
        if g > 0.0 {
            return Outcome::Proved(g);
        }
        let (dim, w) = self.widest(b);
        if w < SUBDIVISION_FLOOR {
            return Outcome::Failed;
        }
        let (l, r) = b[dim].split();
        let mut left = b.to_vec();
        let mut right = b.to_vec();
        left[dim] = l;
        right[dim] = r;
        Outcome::Split(left, right)
    }

    fn raw_box(&self, b: &[Interval]) -> Vec<(f64, f64)> {
        b.iter()
            .zip(&self.to_raw)
            .map(|(iv, s)| (iv.lo * s, iv.hi * s))
            .collect()
    }
}

/// Frontier entry. Boxes closest to the origin come out first, larger before
/// smaller, then in insertion order; the search order (and therefore the
/// reported failing box) is fully deterministic.
struct Pending {
    dist: f64,
    width: f64,
    seq: usize,
    b: Vec<Interval>,
}

impl Pending {
    fn new(b: Vec<Interval>, setup: &Setup, seq: usize) -> Self {
        let dist = b
            .iter()
            .zip(&setup.to_raw)
            .map(|(iv, s)| (iv.mig() * s).powi(2))
            .sum();
        let width = setup.widest(&b).1;
        Self {
            dist,
            width,
            seq,
            b,
        }
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Max-heap: "greater" means popped earlier.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(self.width.total_cmp(&other.width))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Lower bound of `|u~| + |grad u~|` over a rescaled box `(xi, upsilon, z)`.
fn family_lower_bound(p: &FamilyParams, b: &[Interval]) -> f64 {
    let ell = p.ell;
    let k = p.coupling();
    let lambda = Interval::point(p.lambda);
    let xi = &b[..ell];
    let ups = b[ell];
    let z = b[ell + 1];

    let growth = xi[0].scale(k).exp();
    let phase = lambda * z;
    let c = phase.cos();
    let s = phase.sin();
    let pert = growth * c;

    let mut value = pert - ups.sqr().scale(ell as f64);
    for x in xi {
        value = value + x.sqr();
    }
    let mut grad_sq = 0.0;
    let d_xi1 = xi[0].scale(2.0) + pert.scale(k);
    grad_sq += d_xi1.mig().powi(2);
    for x in &xi[1..] {
        grad_sq += x.scale(2.0).mig().powi(2);
    }
    grad_sq += ups.scale(2.0 * ell as f64).mig().powi(2);
    grad_sq += (lambda * growth * s).mig().powi(2);
    (value.mig() + grad_sq.sqrt() * (1.0 - 4.0 * f64::EPSILON))
        .next_down()
        .max(0.0)
}

fn cone_lower_bound(ell: usize, b: &[Interval]) -> f64 {
    let x = &b[..ell];
    let y = b[ell];
    let mut value = -y.sqr().scale(ell as f64);
    let mut grad_sq = 0.0;
    for xi in x {
        value = value + xi.sqr();
        grad_sq += xi.scale(2.0).mig().powi(2);
    }
    grad_sq += y.scale(2.0 * ell as f64).mig().powi(2);
    (value.mig() + grad_sq.sqrt() * (1.0 - 4.0 * f64::EPSILON))
        .next_down()
        .max(0.0)
}

/// Proves `inf(|u| + |grad u|) > 0` on `[-radius, radius]^(ell+2)` in the
/// `(X, y, z)` variables. `u` does not depend on `w`, so this covers the
/// corresponding slab of `R^n`.
pub fn certify_no_singular_zeros(
    params: &FamilyParams,
    radius: f64,
    budget: usize,
) -> Result<Certificate> {
    certify(CertField::Family(*params), radius, budget)
}

/// Runs the branch and bound for `field`.
pub fn certify(field: CertField, radius: f64, budget: usize) -> Result<Certificate> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(Error::Precondition(format!(
            "certification radius must lie in (0, 1), got {radius}"
        )));
    }
    let setup = match field {
        CertField::Family(p) => {
            if p.sqrt_eta_underflows() {
                return Err(Error::Precondition(format!(
                    "sqrt(eta) underflows at m = {}; rescaled box is not representable",
                    p.m
                )));
            }
            let s = p.sqrt_eta();
            let mut width_scale = vec![1.0; p.ell + 1];
            width_scale.push(p.lambda);
            let mut to_raw = vec![s; p.ell + 1];
            to_raw.push(1.0);
            Setup {
                field,
                ell: p.ell,
                width_scale,
                to_raw,
            }
        }
        CertField::Cone { ell } => Setup {
            field,
            ell,
            width_scale: vec![1.0; ell + 2],
            to_raw: vec![1.0; ell + 2],
        },
    };
    let dims = setup.ell + 2;
    let root: Vec<Interval> = (0..dims)
        .map(|i| {
            let half = (radius / setup.to_raw[i]).next_up();
            Interval::new(-half, half)
        })
        .collect();

    let mut seq = 0usize;
    let mut heap = BinaryHeap::new();
    heap.push(Pending::new(root, &setup, seq));
    let mut processed = 0usize;
    let mut margin = f64::INFINITY;
    let describe = |status, margin, processed, failing_box| Certificate {
        region: format!("[-{radius}, {radius}]^{dims} in (X, y, z)"),
        quantity: match field {
            CertField::Family(_) => "inf(|u~| + |grad u~|) in rescaled units".into(),
            CertField::Cone { .. } => "inf(|Q| + |grad Q|)".into(),
        },
        margin,
        boxes_processed: processed,
        status,
        failing_box,
    };

    while !heap.is_empty() {
        if processed >= budget {
            return Ok(describe(
                CertStatus::BudgetExhausted,
                margin,
                processed,
                None,
            ));
        }
        let take = heap.len().min(BATCH).min(budget - processed);
        let batch: Vec<Pending> = (0..take).filter_map(|_| heap.pop()).collect();
        let outcomes: Vec<Outcome> = batch.par_iter().map(|p| setup.process(&p.b)).collect();
        processed += take;
        for (p, outcome) in batch.iter().zip(outcomes) {
            match outcome {
                Outcome::Proved(g) => margin = margin.min(g),
                Outcome::Split(first, second) => {
                    for child in [first, second] {
                        seq += 1;
                        heap.push(Pending::new(child, &setup, seq));
                    }
                }
                Outcome::Failed => {
                    return Ok(describe(
                        CertStatus::Failed,
                        0.0,
                        processed,
                        Some(setup.raw_box(&p.b)),
                    ));
                }
            }
        }
    }
    Ok(describe(CertStatus::Proved, margin, processed, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    /// `sup |P|` over the closed unit ball, `= lambda^-4`.
    pub sup_value: f64,
    /// `sup |grad P|`, `= lambda^-3`.
    pub sup_grad: f64,
    /// `sup |d_z P|`, `= lambda^-3`.
    pub sup_grad_z: f64,
    pub grid_sup_value: f64,
    pub grid_sup_grad: f64,
    pub grid_points: usize,
}

/// Suprema of the perturbation `P = eta e^(lambda x1) cos(lambda z)` and its
/// gradient over the unit ball, with a grid cross-check on the `(x1, z)` disk.
///
/// `|grad P| = eta lambda e^(lambda x1)` exactly, since the `x1` and `z`
/// components carry `cos` and `sin`; both suprema sit at `x1 = 1`.
pub fn verify_perturbation_bounds(params: &FamilyParams) -> PerturbationBounds {
    verify_perturbation_bounds_on_grid(params, 1001)
}

pub fn verify_perturbation_bounds_on_grid(
    params: &FamilyParams,
    per_axis: usize,
) -> PerturbationBounds {
    let amp = params.amplitude(1.0);
    let lambda = params.lambda;
    // Odd counts put x1 = 1 and z = 0 exactly on the grid.
    let half = ((per_axis - 1) / 2) as f64;
    let (sup_v, sup_g, count) = (0..per_axis)
        .into_par_iter()
        .map(|i| {
            let x1 = (i as f64 - half) / half;
            let mut point = Point::origin(params);
            point.x[0] = x1;
            let (mut sv, mut sg, mut cnt) = (0.0f64, 0.0f64, 0usize);
            for j in 0..per_axis {
                let z = (j as f64 - half) / half;
                if x1 * x1 + z * z > 1.0 {
                    continue;
                }
                point.z = z;
                let a = params.amplitude(x1);
                let (s, c) = (lambda * z).sin_cos();
                sv = sv.max((a * c).abs());
                sg = sg.max(lambda * a * c.hypot(s));
                cnt += 1;
            }
            (sv, sg, cnt)
        })
        .reduce(
            || (0.0, 0.0, 0),
            |a, b| (a.0.max(b.0), a.1.max(b.1), a.2 + b.2),
        );
    PerturbationBounds {
        sup_value: amp,
        sup_grad: lambda * amp,
        sup_grad_z: lambda * amp,
        grid_sup_value: sup_v,
        grid_sup_grad: sup_g,
        grid_points: count,
    }
}
