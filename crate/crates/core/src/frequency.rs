//! Almgren frequency `N_r(u) = r * int_{B_r} |grad u|^2 / int_{dB_r} u^2`.
//!
//! For the family the integrands are split into the cone part (a polynomial,
//! integrated to near machine precision by the nested rules) and the remainder
//! involving the perturbation `P = eta exp(lambda x1) cos(lambda z)`. The
//! remainder oscillates at frequency `lambda` but has amplitude at most
//! `lambda^-3`; it is still summed on the finest rule, and its quadrature error
//! is bounded by `2 * sup|remainder| * measure` and folded into `err_est`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{eval_cone, FamilyParams, Point};
use crate::quadrature::{
    ball_volume, integrate_ball, integrate_sphere, sphere_area, IntegralResult, QuadratureSpec,
    TensorRule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    Family,
    Cone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResult {
    pub value: f64,
    pub err_est: f64,
    pub dirichlet: IntegralResult,
    pub boundary_l2: IntegralResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeIntegrals {
    pub dirichlet: f64,
    pub boundary_l2: f64,
}

/// Closed forms for `Q = |X|^2 - ell y^2`:
/// `int_{B_r} |grad Q|^2 = 4 ell (ell+1) V_n r^(n+2) / (n+2)` and
/// `int_{dB_r} Q^2 = 2 ell (ell+1) A_(n-1) r^(n+3) / (n (n+2))`.
pub fn closed_form_cone_integrals(params: &FamilyParams, r: f64) -> ConeIntegrals {
    let n = params.n as f64;
    let l = params.ell as f64;
    let k = l * (l + 1.0);
    ConeIntegrals {
        dirichlet: 4.0 * k * ball_volume(params.n) * r.powf(n + 2.0) / (n + 2.0),
        boundary_l2: 2.0 * k * sphere_area(params.n) * r.powf(n + 3.0) / (n * (n + 2.0)),
    }
}

fn quotient(r: f64, num: IntegralResult, den: IntegralResult) -> Result<FrequencyResult> {
    if !(den.value > 0.0) || den.err_est >= 0.5 * den.value.abs() {
        return Err(Error::UnreliableQuotient(format!(
            "boundary integral {} has error estimate {}",
            den.value, den.err_est
        )));
    }
    let value = r * num.value / den.value;
    let rel = num.err_est / num.value.abs() + den.err_est / den.value.abs();
    Ok(FrequencyResult {
        value,
        err_est: value.abs() * rel,
        dirichlet: num,
        boundary_l2: den,
    })
}

/// Frequency of an arbitrary field on `R^n` given as value-and-gradient.
pub fn field_frequency<F>(
    n: usize,
    r: f64,
    spec: &QuadratureSpec,
    field: F,
) -> Result<FrequencyResult>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    let num = integrate_ball(n, |x| field(x).1.iter().map(|g| g * g).sum(), r, spec)?;
    let den = integrate_sphere(
        n,
        |x| {
            let v = field(x).0;
            v * v
        },
        r,
        spec,
    )?;
    quotient(r, num, den)
}

fn cone_value_gradient(ell: usize) -> impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync {
    move |x: &[f64]| {
        let e = eval_cone(ell, x);
        (e.value, e.gradient)
    }
}

/// `N_r` of the family or of the cone `Q_ell`.
pub fn frequency(
    params: &FamilyParams,
    r: f64,
    spec: &QuadratureSpec,
    field: FieldChoice,
) -> Result<FrequencyResult> {
    let n = params.n;
    let ell = params.ell;
    match field {
        FieldChoice::Cone => field_frequency(n, r, spec, cone_value_gradient(ell)),
        FieldChoice::Family => {
            let mut num = integrate_ball(
                n,
                |x| eval_cone(ell, x).gradient.iter().map(|g| g * g).sum(),
                r,
                spec,
            )?;
            let mut den = integrate_sphere(
                n,
                |x| {
                    let q = eval_cone(ell, x).value;
                    q * q
                },
                r,
                spec,
            )?;

            let fine = QuadratureSpec {
                radial_nodes: 2 * spec.radial_nodes,
                angular_degree: 2 * spec.angular_degree,
                ..*spec
            };
            let ball = TensorRule::ball(n, r, fine.radial_nodes, fine.angular_degree);
            let sphere = TensorRule::sphere(n, r, fine.angular_degree);
            let remainder_num = ball.integrate(|x| {
                let (p, q) = family_and_cone(params, x);
                let gp: f64 = p.gradient.iter().map(|g| g * g).sum();
                let gq: f64 = q.gradient.iter().map(|g| g * g).sum();
                gp - gq
            });
            let remainder_den = sphere.integrate(|x| {
                let (p, q) = family_and_cone(params, x);
                p.value * p.value - q.value * q.value
            });

            let bounds = remainder_bounds(params, r);
            num.value += remainder_num;
            num.err_est += bounds.dirichlet;
            num.nodes_used += ball.len();
            den.value += remainder_den;
            den.err_est += bounds.boundary_l2;
            den.nodes_used += sphere.len();
            quotient(r, num, den)
        }
    }
}

fn family_and_cone(
    params: &FamilyParams,
    x: &[f64],
) -> (crate::field::EvalResult, crate::field::EvalResult) {
    let point = Point::from_coords(params, x).expect("rule node has n coordinates");
    (
        crate::field::eval_u_unchecked(params, &point),
        eval_cone(params.ell, x),
    )
}

/// Bounds on `|quadrature - exact|` for the perturbation-dependent remainders of
/// the two integrals on radius `r`.
pub fn remainder_bounds(params: &FamilyParams, r: f64) -> ConeIntegrals {
    let n = params.n;
    let l = params.ell as f64;
    let amp = params.amplitude(r);
    let grad_p = params.lambda * amp;
    let grad_q = 2.0 * l * r;
    let q_sup = l * r * r;
    let vol = ball_volume(n) * r.powi(n as i32);
    let area = sphere_area(n) * r.powi(n as i32 - 1);
    ConeIntegrals {
        dirichlet: 2.0 * (2.0 * grad_q * grad_p + grad_p * grad_p) * vol,
        boundary_l2: 2.0 * (2.0 * q_sup * amp + amp * amp) * area,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use mc_oracle::*;
    use rand::SeedableRng;

    /// Independent Monte Carlo estimates of `int_{S^(n-1)} Q^2` and
    /// `int_{B_1} |grad Q|^2` from uniform samples.
    mod mc_oracle {
        use rand::Rng;

        pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
            // Box-Muller
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }

        pub fn monte_carlo_cone<R: Rng>(
            rng: &mut R,
            n: usize,
            ell: usize,
            samples: usize,
        ) -> (f64, f64) {
            let (mut sphere_acc, mut ball_acc) = (0.0, 0.0);
            let mut g = vec![0.0; n];
            for _ in 0..samples {
                for v in g.iter_mut() {
                    *v = gaussian(rng);
                }
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let x2: f64 = g[..ell].iter().map(|v| v * v).sum::<f64>() / (norm * norm);
                let y2 = g[ell] * g[ell] / (norm * norm);
                let q = x2 - ell as f64 * y2;
                sphere_acc += q * q;
                let rho2 = rng.gen::<f64>().powf(2.0 / n as f64);
                ball_acc += rho2 * (4.0 * x2 + 4.0 * (ell * ell) as f64 * y2);
            }
            (sphere_acc / samples as f64, ball_acc / samples as f64)
        }
    }

    #[test]
    fn closed_forms_match_monte_carlo() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for (n, ell) in [(3, 1), (4, 1), (4, 2), (5, 3)] {
            let p = FamilyParams::new(n, ell, 1).unwrap();
            let cf = closed_form_cone_integrals(&p, 1.0);
            let (s, b) = monte_carlo_cone(&mut rng, n, ell, 10_000_000);
            let mc_sphere = s * sphere_area(n);
            let mc_ball = b * ball_volume(n);
            // Standard error of these means is below 0.1% at 1e7 samples.
            assert_relative_eq!(cf.boundary_l2, mc_sphere, max_relative = 5e-3);
            assert_relative_eq!(cf.dirichlet, mc_ball, max_relative = 5e-3);
        }
    }

    #[test]
    fn closed_form_examples() {
        let p = FamilyParams::new(3, 1, 1).unwrap();
        let cf = closed_form_cone_integrals(&p, 1.0);
        let v3 = 4.0 * std::f64::consts::PI / 3.0;
        assert_relative_eq!(cf.dirichlet, 8.0 * v3 / 5.0, max_relative = 1e-14);
        assert_relative_eq!(
            cf.boundary_l2,
            4.0 * 4.0 * std::f64::consts::PI / 15.0,
            max_relative = 1e-14
        );
        for r in [0.25, 0.5, 1.0] {
            for (n, ell) in [(3, 1), (5, 2), (6, 4)] {
                let p = FamilyParams::new(n, ell, 1).unwrap();
                let cf = closed_form_cone_integrals(&p, r);
                assert_relative_eq!(r * cf.dirichlet / cf.boundary_l2, 2.0, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let spec = QuadratureSpec::default();
        for (n, ell) in [(3, 1), (4, 1), (4, 2), (5, 1), (5, 3), (6, 2)] {
            let p = FamilyParams::new(n, ell, 1).unwrap();
            let cf = closed_form_cone_integrals(&p, 1.0);
            let f = frequency(&p, 1.0, &spec, FieldChoice::Cone).unwrap();
            assert_relative_eq!(f.dirichlet.value, cf.dirichlet, max_relative = 1e-8);
            assert_relative_eq!(f.boundary_l2.value, cf.boundary_l2, max_relative = 1e-8);
        }
    }

    #[test]
    fn homogeneous_harmonic_polynomials() {
        let spec = QuadratureSpec::default();
        let fields: [(f64, fn(&[f64]) -> (f64, Vec<f64>)); 3] = [
            (1.0, |x| (x[0], vec![1.0, 0.0, 0.0])),
            (2.0, |x| (x[0] * x[1], vec![x[1], x[0], 0.0])),
            (3.0, |x| {
                (
                    x[0].powi(3) - 3.0 * x[0] * x[1] * x[1],
                    vec![
                        3.0 * x[0] * x[0] - 3.0 * x[1] * x[1],
                        -6.0 * x[0] * x[1],
                        0.0,
                    ],
                )
            }),
        ];
        for (d, f) in fields {
            for r in [0.3, 1.0] {
                let res = field_frequency(3, r, &spec, f).unwrap();
                assert_relative_eq!(res.value, d, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn cone_frequency_is_two_at_every_scale() {
        let spec = QuadratureSpec::default();
        let p = FamilyParams::new(4, 2, 3).unwrap();
        for r in [0.25, 0.5, 1.0] {
            let f = frequency(&p, r, &spec, FieldChoice::Cone).unwrap();
            assert!((f.value - 2.0).abs() <= 1e-8, "r={r}: {}", f.value);
        }
    }

    #[test]
    fn family_frequency_close_to_two() {
        let spec = QuadratureSpec::default();
        for m in [1, 2, 4] {
            let p = FamilyParams::new(3, 1, m).unwrap();
            let f = frequency(&p, 1.0, &spec, FieldChoice::Family).unwrap();
            assert!((f.value - 2.0).abs() <= 1e-3, "m={m}: {}", f.value);
            assert!(f.err_est < 1e-3);
        }
    }

    #[test]
    fn family_frequency_within_perturbation_scale() {
        let spec = QuadratureSpec::default();
        for m in 1..=8 {
            let p = FamilyParams::new(3, 1, m).unwrap();
            let f = frequency(&p, 1.0, &spec, FieldChoice::Family).unwrap();
            assert!(
                (f.value - 2.0).abs() <= 10.0 * p.lambda.powi(-3),
                "m={m}: {}",
                f.value
            );
        }
    }

    #[test]
    fn tighter_tolerance_does_not_worsen_error() {
        let p = FamilyParams::new(4, 1, 1).unwrap();
        let cf = closed_form_cone_integrals(&p, 1.0);
        let mut spec = QuadratureSpec {
            radial_nodes: 4,
            angular_degree: 2,
            target_rel_tol: 1e-4,
        };
        let mut last = f64::INFINITY;
        for _ in 0..4 {
            let f = frequency(&p, 1.0, &spec, FieldChoice::Cone).unwrap();
            let err = (f.boundary_l2.value - cf.boundary_l2).abs();
            assert!(err <= last * (1.0 + 1e-12) + 1e-15);
            last = err;
            spec.target_rel_tol /= 2.0;
        }
    }

    #[test]
    fn remainder_bounds_shrink_with_m() {
        let b1 = remainder_bounds(&FamilyParams::new(3, 1, 1).unwrap(), 1.0);
        let b4 = remainder_bounds(&FamilyParams::new(3, 1, 4).unwrap(), 1.0);
        assert!(b4.dirichlet < b1.dirichlet && b4.boundary_l2 < b1.boundary_l2);
    }
}
