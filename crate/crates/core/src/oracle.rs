//! Closed-form exponents, exact persistence probabilities and regime
//! classification.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArModel, InitialDistribution, Innovation, MaModel, Model, SurvivalConvention};
use crate::quadrature::{AxisRule, Scheme};
use crate::rng::{Domain, StreamFamily};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("no closed form for initial law {0}")]
    UnsupportedInitial(String),
    #[error("no sign change of the root equation found while scanning down from 1 to {lowest}")]
    BracketNotFound { lowest: f64 },
}

/// 2b/(π(a+b)) for AR(1), a₁ = −1, Uniform(−a, b) innovations.
pub fn ar1_uniform_exponent(a: f64, b: f64) -> Result<f64, OracleError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(OracleError::Domain(format!("need a, b > 0, got ({a}, {b})")));
    }
    Ok(2.0 * b / (PI * (a + b)))
}

/// E[e^{a₁Z₀} 1{Z₀ ≥ 0}] for the supported initial laws.
fn tilted_initial_moment(a1: f64, initial: &InitialDistribution) -> Result<f64, OracleError> {
    match initial {
        InitialDistribution::PointMass { x } if x.len() == 1 => Ok(if x[0] >= 0.0 { (a1 * x[0]).exp() } else { 0.0 }),
        InitialDistribution::Iid { innovation } => match *innovation {
            Innovation::Exponential => Ok(1.0 / (1.0 - a1)),
            Innovation::Uniform { lo, hi } => {
                let from = lo.max(0.0);
                if hi <= from {
                    Ok(0.0)
                } else if a1 == 0.0 {
                    Ok((hi - from) / (hi - lo))
                } else {
                    Ok(((a1 * hi).exp() - (a1 * from).exp()) / (a1 * (hi - lo)))
                }
            }
            Innovation::Gaussian { sd } => Ok(gaussian_tilted_moment(a1, sd)),
            Innovation::Rademacher => Ok(0.5 * a1.exp()),
        },
        InitialDistribution::StationaryAr1Gaussian { a1: a } => {
            Ok(gaussian_tilted_moment(a1, 1.0 / (1.0 - a * a).sqrt()))
        }
        other => Err(OracleError::UnsupportedInitial(format!("{other:?}"))),
    }
}

/// E[e^{tZ} 1{Z ≥ 0}] for Z ~ N(0, sd²).
fn gaussian_tilted_moment(t: f64, sd: f64) -> f64 {
    (0.5 * t * t * sd * sd).exp() * crate::model::std_normal_cdf(t * sd)
}

/// Exact pₙ for AR(1) with a₁ < 0 and standard exponential innovations:
/// (1/(1−a₁))^{n−1} E[e^{a₁Z₀} 1{Z₀ ≥ 0}] for n ≥ 1, P(Z₀ ≥ 0) for n = 0.
pub fn ar1_exponential_pn(a1: f64, n: usize, initial: &InitialDistribution) -> Result<f64, OracleError> {
    if !(a1 < 0.0) {
        return Err(OracleError::Domain(format!("need a1 < 0, got {a1}")));
    }
    if n == 0 {
        return tilted_initial_moment(0.0, initial);
    }
    Ok((1.0 / (1.0 - a1)).powi(n as i32 - 1) * tilted_initial_moment(a1, initial)?)
}

/// 1/(1−a₁), the ratio pₙ₊₁/pₙ of [`ar1_exponential_pn`].
pub fn ar1_exponential_exponent(a1: f64) -> Result<f64, OracleError> {
    if !(a1 < 0.0) {
        return Err(OracleError::Domain(format!("need a1 < 0, got {a1}")));
    }
    Ok(1.0 / (1.0 - a1))
}

/// tan(a/((a+b)λ)) − (1 − c/λ)/(1 + c/λ) with c = 1 − 2a/(a+b).
pub fn ma1_uniform_equation(a: f64, b: f64, lambda: f64) -> f64 {
    let c = 1.0 - 2.0 * a / (a + b);
    (a / ((a + b) * lambda)).tan() - (1.0 - c / lambda) / (1.0 + c / lambda)
}

/// Exponent of MA(1), a₁ = 1, Uniform(−a, b) innovations.
///
/// For a ≥ b this is 4b/(π(a+b)). Otherwise it is the largest root in
/// (0, 1) of [`ma1_uniform_equation`], bracketed by walking down from 1 in
/// steps of 1e-3 and refined by bisection until the residual is below
/// `tol`. Sign changes across poles of tan are skipped.
pub fn ma1_uniform_exponent(a: f64, b: f64, tol: f64) -> Result<f64, OracleError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(OracleError::Domain(format!("need a, b > 0, got ({a}, {b})")));
    }
    if a >= b {
        return Ok(4.0 * b / (PI * (a + b)));
    }
    ma1_uniform_root(a, b, tol)
}

/// Largest root of the tan equation, without the a ≥ b shortcut.
pub fn ma1_uniform_root(a: f64, b: f64, tol: f64) -> Result<f64, OracleError> {
    let f = |l: f64| ma1_uniform_equation(a, b, l);
    const STEP: f64 = 1e-3;
    let mut hi = 1.0;
    let mut f_hi = f(hi);
    for k in 1..1000 {
        let lo = 1.0 - k as f64 * STEP;
        let f_lo = f(lo);
        if f_lo == 0.0 {
            return Ok(lo);
        }
        if f_lo.signum() != f_hi.signum() {
            let (mut l, mut h, mut fl) = (lo, hi, f_lo);
            let mut mid = 0.5 * (l + h);
            for _ in 0..200 {
                mid = 0.5 * (l + h);
                let fm = f(mid);
                if fm == 0.0 || h - l < 1e-300_f64.max(f64::EPSILON * mid) {
                    break;
                }
                if fm.signum() == fl.signum() {
                    l = mid;
                    fl = fm;
                } else {
                    h = mid;
                }
            }
            // A genuine root has a small residual; a pole does not.
            if f(mid).abs() <= tol.max(1e-12) {
                return Ok(mid);
            }
        }
        hi = lo;
        f_hi = f_lo;
    }
    Err(OracleError::BracketNotFound { lowest: hi })
}

/// Σ_{k=−T}^{T} 2/(π/2 + 2πk)^{c+2}: the probability that c consecutive
/// pairwise sums of i.i.d. symmetric innovations are all nonnegative.
pub fn ma1_symmetric_series(c: u32, terms: usize) -> f64 {
    let t = terms as i64;
    // Pair k with −k so the odd-power tails cancel before summing.
    let term = |k: i64| 2.0 / (0.5 * PI + 2.0 * PI * k as f64).powi(c as i32 + 2);
    (1..=t).rev().map(|k| term(k) + term(-k)).sum::<f64>() + term(0)
}

/// Exponent of MA(1) with a₁ = 1 and symmetric innovation density.
pub const MA1_SYMMETRIC_EXPONENT: f64 = FRAC_2_PI;

/// Exact pₙ for MA(1), a₁ = 1, Rademacher innovations.
pub fn rademacher_pn(n: usize, convention: SurvivalConvention) -> f64 {
    match convention {
        SurvivalConvention::StrictlyPositive => 0.5f64.powi(n as i32 + 2),
        SurvivalConvention::NonNegative => {
            let s5 = 5f64.sqrt();
            let k = n as i32 + 1;
            (0.5 + 1.0 / s5) * ((1.0 + s5) / 4.0).powi(k) + (0.5 - 1.0 / s5) * ((1.0 - s5) / 4.0).powi(k)
        }
    }
}

/// The same probability by propagating the law of the latest innovation:
/// state 0 is ξ = −1, state 1 is ξ = +1.
pub fn rademacher_transfer_pn(n: usize, convention: SurvivalConvention) -> f64 {
    // allowed[prev][next]: ξ_prev + ξ_next survives
    let allowed = |prev: usize, next: usize| {
        let z = [-1.0, 1.0][prev] + [-1.0, 1.0][next];
        convention.survives(z)
    };
    let mut mass = [0.5, 0.5];
    for _ in 0..=n {
        let mut next = [0.0; 2];
        for (p, m) in mass.iter().enumerate() {
            for (q, slot) in next.iter_mut().enumerate() {
                if allowed(p, q) {
                    *slot += 0.5 * m;
                }
            }
        }
        mass = next;
    }
    mass[0] + mass[1]
}

pub fn rademacher_exponent(convention: SurvivalConvention) -> f64 {
    match convention {
        SurvivalConvention::StrictlyPositive => 0.5,
        SurvivalConvention::NonNegative => (1.0 + 5f64.sqrt()) / 4.0,
    }
}

/// 1 + a₁ for MA(1) with standard exponential innovations.
pub fn ma1_exponential_exponent(a1: f64) -> Result<f64, OracleError> {
    if !(a1 > -1.0 && a1 < 0.0) {
        return Err(OracleError::Domain(format!("need a1 in (-1, 0), got {a1}")));
    }
    Ok(1.0 + a1)
}

/// Eigenfunction e^{a₁x/(1+a₁)} 1{x ≥ 0} + 1{x < 0} of the MA(1)
/// exponential operator.
pub fn ma1_exponential_eigenfunction(a1: f64, x: f64) -> f64 {
    if x >= 0.0 {
        (a1 * x / (1.0 + a1)).exp()
    } else {
        1.0
    }
}

/// 1/(n+2)!, the persistence probability of MA(1) with a₁ = −1.
pub fn degenerate_factorial_pn(n: usize) -> f64 {
    if n <= 18 {
        1.0 / (1..=(n as u64 + 2)).product::<u64>() as f64
    } else {
        (-libm::lgamma(n as f64 + 3.0)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// MA with Σaⱼ = −1: pₙ decays faster than any exponential.
    Degenerate,
    /// MA with Σaⱼ ≠ −1.
    Nondegenerate,
    /// AR with a ≥ 0 and Σaⱼ > 1: exponent 1.
    Supercritical,
    /// AR with Σ|aⱼ| < 1.
    Contractive,
    /// AR with a ≤ 0.
    Nonpositive,
    Unclassified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub label: String,
    /// ρ > 1 with Σⱼ aⱼ ρ^{−j} = 1, supercritical AR only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characteristic_root: Option<f64>,
    /// Whether existence of the exponent is covered by theory.
    pub supported: bool,
}

/// Unique ρ > 1 solving Σⱼ aⱼ ρ^{−j} = 1 when a ≥ 0 and Σaⱼ > 1.
pub fn characteristic_root(coeffs: &[f64]) -> Option<f64> {
    let sum: f64 = coeffs.iter().sum();
    if coeffs.iter().any(|&a| a < 0.0) || !(sum > 1.0) {
        return None;
    }
    if coeffs.len() == 1 {
        return Some(coeffs[0]);
    }
    let f = |r: f64| {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, a)| a * r.powi(-(j as i32 + 1)))
            .sum::<f64>()
            - 1.0
    };
    let (mut lo, mut hi) = (1.0, sum);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn classify_regime(model: &Model) -> RegimeReport {
    let coeffs = model.coeffs();
    let sum: f64 = coeffs.iter().sum();
    match model {
        Model::Ma(_) => {
            if (sum + 1.0).abs() <= 1e-12 {
                RegimeReport {
                    regime: Regime::Degenerate,
                    label: "degenerate, β=0".into(),
                    characteristic_root: None,
                    supported: true,
                }
            } else {
                RegimeReport {
                    regime: Regime::Nondegenerate,
                    label: "nondegenerate MA".into(),
                    characteristic_root: None,
                    supported: true,
                }
            }
        }
        Model::Ar(_) => {
            let abs_sum: f64 = coeffs.iter().map(|a| a.abs()).sum();
            if let Some(rho) = characteristic_root(coeffs) {
                RegimeReport {
                    regime: Regime::Supercritical,
                    label: "supercritical, θ=1".into(),
                    characteristic_root: Some(rho),
                    supported: true,
                }
            } else if abs_sum < 1.0 {
                RegimeReport {
                    regime: Regime::Contractive,
                    label: "contractive".into(),
                    characteristic_root: None,
                    supported: true,
                }
            } else if coeffs.iter().all(|&a| a <= 0.0) {
                RegimeReport {
                    regime: Regime::Nonpositive,
                    label: "nonpositive coefficients".into(),
                    characteristic_root: None,
                    supported: true,
                }
            } else {
                RegimeReport {
                    regime: Regime::Unclassified,
                    label: "unsupported regime — exploratory".into(),
                    characteristic_root: None,
                    supported: false,
                }
            }
        }
    }
}

/// Every configuration with a closed-form exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum OracleCase {
    /// AR(1), a₁ = −1, Uniform(−a, b).
    Ar1Uniform { a: f64, b: f64 },
    /// AR(1), a₁ < 0, standard exponential innovations.
    Ar1Exponential {
        a1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<InitialDistribution>,
    },
    /// MA(1), a₁ = 1, Uniform(−a, b).
    Ma1Uniform { a: f64, b: f64 },
    /// MA(1), a₁ = 1, symmetric innovation density.
    Ma1Symmetric,
    /// MA(1), a₁ = 1, Rademacher innovations.
    Ma1Rademacher {
        #[serde(default)]
        convention: SurvivalConvention,
    },
    /// MA(1), a₁ ∈ (−1, 0), standard exponential innovations.
    Ma1Exponential { a1: f64 },
    /// All coefficients zero.
    Iid {
        innovation: Innovation,
        #[serde(default)]
        convention: SurvivalConvention,
    },
    /// MA with Σaⱼ = −1.
    DegenerateMa { coeffs: Vec<f64> },
    /// AR with a ≥ 0, Σaⱼ > 1.
    SupercriticalAr { coeffs: Vec<f64> },
}

/// Root tolerance used by [`OracleCase::exponent`].
pub const ROOT_TOL: f64 = 1e-12;

impl OracleCase {
    pub fn name(&self) -> &'static str {
        match self {
            OracleCase::Ar1Uniform { .. } => "ar1-uniform",
            OracleCase::Ar1Exponential { .. } => "ar1-exponential",
            OracleCase::Ma1Uniform { .. } => "ma1-uniform",
            OracleCase::Ma1Symmetric => "ma1-symmetric",
            OracleCase::Ma1Rademacher { .. } => "ma1-rademacher",
            OracleCase::Ma1Exponential { .. } => "ma1-exponential",
            OracleCase::Iid { .. } => "iid",
            OracleCase::DegenerateMa { .. } => "degenerate-ma",
            OracleCase::SupercriticalAr { .. } => "supercritical-ar",
        }
    }

    pub fn exponent(&self) -> Result<f64, OracleError> {
        match self {
            OracleCase::Ar1Uniform { a, b } => ar1_uniform_exponent(*a, *b),
            OracleCase::Ar1Exponential { a1, .. } => ar1_exponential_exponent(*a1),
            OracleCase::Ma1Uniform { a, b } => ma1_uniform_exponent(*a, *b, ROOT_TOL),
            OracleCase::Ma1Symmetric => Ok(MA1_SYMMETRIC_EXPONENT),
            OracleCase::Ma1Rademacher { convention } => Ok(rademacher_exponent(*convention)),
            OracleCase::Ma1Exponential { a1 } => ma1_exponential_exponent(*a1),
            OracleCase::Iid { innovation, convention } => Ok(innovation.survival_mass(*convention)),
            OracleCase::DegenerateMa { coeffs } => {
                if (coeffs.iter().sum::<f64>() + 1.0).abs() > 1e-12 {
                    return Err(OracleError::Domain("coefficients must sum to -1".into()));
                }
                Ok(0.0)
            }
            OracleCase::SupercriticalAr { coeffs } => characteristic_root(coeffs)
                .map(|_| 1.0)
                .ok_or_else(|| OracleError::Domain("need a >= 0 and sum(a) > 1".into())),
        }
    }

    /// Exact pₙ where a closed form is known.
    pub fn pn(&self, n: usize) -> Option<f64> {
        match self {
            OracleCase::Ar1Exponential { a1, initial: Some(init) } => ar1_exponential_pn(*a1, n, init).ok(),
            OracleCase::Ma1Symmetric => Some(ma1_symmetric_series(n as u32 + 1, 200)),
            OracleCase::Ma1Rademacher { convention } => Some(rademacher_pn(n, *convention)),
            OracleCase::Iid { innovation, convention } => {
                Some(innovation.survival_mass(*convention).powi(n as i32 + 1))
            }
            OracleCase::DegenerateMa { coeffs } if coeffs.len() == 1 => Some(degenerate_factorial_pn(n)),
            _ => None,
        }
    }

    /// Closed-form case matching `model`, if any.
    pub fn lookup(model: &Model) -> Option<Self> {
        let coeffs = model.coeffs();
        let innovation = model.innovation();
        if coeffs.iter().all(|&a| a == 0.0) {
            let iid_start = match model {
                Model::Ma(_) => true,
                Model::Ar(ar) => matches!(ar.initial(), InitialDistribution::Iid { innovation: i } if i == innovation),
            };
            return iid_start.then(|| OracleCase::Iid {
                innovation: *innovation,
                convention: model.convention(),
            });
        }
        match model {
            Model::Ar(ar) => lookup_ar(ar),
            Model::Ma(ma) => lookup_ma(ma),
        }
    }
}

fn lookup_ar(model: &ArModel) -> Option<OracleCase> {
    let coeffs = model.coeffs();
    if characteristic_root(coeffs).is_some() {
        return Some(OracleCase::SupercriticalAr { coeffs: coeffs.to_vec() });
    }
    if coeffs.len() != 1 {
        return None;
    }
    let a1 = coeffs[0];
    match *model.innovation() {
        Innovation::Uniform { lo, hi } if a1 == -1.0 && lo < 0.0 && hi > 0.0 => Some(OracleCase::Ar1Uniform { a: -lo, b: hi }),
        Innovation::Exponential if a1 < 0.0 => Some(OracleCase::Ar1Exponential {
            a1,
            initial: tilted_initial_moment(a1, model.initial()).ok().map(|_| model.initial().clone()),
        }),
        _ => None,
    }
}

fn lookup_ma(model: &MaModel) -> Option<OracleCase> {
    let coeffs = model.coeffs();
    if (coeffs.iter().sum::<f64>() + 1.0).abs() <= 1e-12 {
        return Some(OracleCase::DegenerateMa { coeffs: coeffs.to_vec() });
    }
    if coeffs.len() != 1 {
        return None;
    }
    let a1 = coeffs[0];
    match *model.innovation() {
        Innovation::Rademacher if a1 == 1.0 => Some(OracleCase::Ma1Rademacher {
            convention: model.convention(),
        }),
        Innovation::Uniform { lo, hi } if a1 == 1.0 && lo < 0.0 && hi > 0.0 => Some(OracleCase::Ma1Uniform { a: -lo, b: hi }),
        Innovation::Gaussian { .. } if a1 == 1.0 => Some(OracleCase::Ma1Symmetric),
        Innovation::Exponential if a1 > -1.0 && a1 < 0.0 => Some(OracleCase::Ma1Exponential { a1 }),
        _ => None,
    }
}

/// ∫ᵤᵛ φ over the part of [u, v] inside the support (truncated to the
/// default bound), by 200-point Gauss–Legendre.
fn density_mass(innovation: &Innovation, u: f64, v: f64) -> f64 {
    let (lo, hi) = innovation.support();
    let m = innovation.default_truncation();
    let (u, v) = (u.max(lo).max(-m), v.min(hi).min(m));
    if !(u < v) {
        return 0.0;
    }
    let rule = AxisRule::<f64>::new(u, v, 200, Scheme::GaussLegendre).expect("valid interval");
    rule.integrate(|x| innovation.density(x).unwrap_or(0.0))
}

/// E[g(ξ+δ) | ξ+δ > 0] − E[g(ξ) | ξ > 0] for the step g = 1{· ≥ t},
/// computed by quadrature of the density. Nonnegative for log-concave φ.
pub fn conditional_mean_gap(innovation: &Innovation, threshold: f64, delta: f64) -> f64 {
    let big = innovation.default_truncation() + delta.abs() + threshold.abs();
    let shifted = density_mass(innovation, threshold.max(0.0) - delta, big) / density_mass(innovation, -delta, big);
    let plain = density_mass(innovation, threshold.max(0.0), big) / density_mass(innovation, 0.0, big);
    shifted - plain
}

/// P(Z₀ ≥ 0) for an MA process (or P(Z₀ > 0) under the strict
/// convention). Symmetric continuous laws give 1/2, Rademacher is
/// enumerated, q = 1 is integrated, anything else is estimated from 10⁶
/// seeded draws.
pub fn ma_marginal_survival(model: &MaModel) -> f64 {
    let coeffs = model.coeffs();
    let innovation = model.innovation();
    let convention = model.convention();
    if matches!(innovation, Innovation::Rademacher) {
        let q = coeffs.len();
        let total = 1usize << (q + 1);
        let hits = (0..total)
            .filter(|bits| {
                let xi = |k: usize| if bits >> k & 1 == 1 { 1.0 } else { -1.0 };
                let z = xi(0) + coeffs.iter().enumerate().map(|(j, a)| a * xi(j + 1)).sum::<f64>();
                convention.survives(z)
            })
            .count();
        return hits as f64 / total as f64;
    }
    if innovation.is_symmetric() {
        return 0.5;
    }
    if coeffs.len() == 1 {
        let a1 = coeffs[0];
        let (lo, hi) = innovation.support();
        let m = innovation.default_truncation();
        let rule = AxisRule::<f64>::new(lo.max(-m), hi.min(m), 400, Scheme::GaussLegendre).expect("valid support");
        return rule.integrate(|y| innovation.density(y).unwrap_or(0.0) * innovation.sf(-a1 * y));
    }
    let family = StreamFamily::new(0x5a30, Domain::Path);
    let mut stream = family.stream(0);
    const DRAWS: usize = 1_000_000;
    let hits = (0..DRAWS)
        .filter(|_| {
            let z = innovation.sample(&mut stream)
                + coeffs.iter().map(|a| a * innovation.sample(&mut stream)).sum::<f64>();
            convention.survives(z)
        })
        .count();
    hits as f64 / DRAWS as f64
}
