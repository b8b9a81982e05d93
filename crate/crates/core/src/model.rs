//! Innovation laws, initial laws and AR/MA process specifications.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("the Rademacher law has no density")]
    RequestedDensityOfAtomicLaw,
    #[error("invalid innovation parameters: {0}")]
    InvalidInnovation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a process needs at least one coefficient")]
    EmptyCoefficients,
    #[error("invalid initial distribution: {0}")]
    InvalidInitial(String),
    #[error("non-finite coefficient at index {0}")]
    NonFiniteCoefficient(usize),
}

/// Law of the i.i.d. driving noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "InnovationRepr")]
pub enum Innovation {
    Uniform { lo: f64, hi: f64 },
    /// Standard exponential, rate 1.
    Exponential,
    /// Centered normal with standard deviation `sd`.
    Gaussian { sd: f64 },
    /// ±1 with probability 1/2 each.
    Rademacher,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum InnovationRepr {
    Uniform { lo: f64, hi: f64 },
    Exponential,
    Gaussian { sd: f64 },
    Rademacher,
}

impl TryFrom<InnovationRepr> for Innovation {
    type Error = ModelError;

    fn try_from(r: InnovationRepr) -> Result<Self, ModelError> {
        match r {
            InnovationRepr::Uniform { lo, hi } => Innovation::uniform(lo, hi),
            InnovationRepr::Exponential => Ok(Innovation::Exponential),
            InnovationRepr::Gaussian { sd } => Innovation::gaussian(sd),
            InnovationRepr::Rademacher => Ok(Innovation::Rademacher),
        }
    }
}

impl Innovation {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, ModelError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ModelError::InvalidInnovation(format!(
                "uniform needs finite lo < hi, got lo={lo}, hi={hi}"
            )));
        }
        Ok(Innovation::Uniform { lo, hi })
    }

    pub fn gaussian(sd: f64) -> Result<Self, ModelError> {
        if !(sd.is_finite() && sd > 0.0) {
            return Err(ModelError::InvalidInnovation(format!(
                "gaussian needs sd > 0, got {sd}"
            )));
        }
        Ok(Innovation::Gaussian { sd })
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, Innovation::Rademacher)
    }

    /// Density φ(x).
    pub fn density(&self, x: f64) -> Result<f64, ModelError> {
        match *self {
            Innovation::Rademacher => Err(ModelError::RequestedDensityOfAtomicLaw),
            Innovation::Uniform { lo, hi } => Ok(if lo <= x && x <= hi {
                1.0 / (hi - lo)
            } else {
                0.0
            }),
            Innovation::Exponential => Ok(if x >= 0.0 { (-x).exp() } else { 0.0 }),
            Innovation::Gaussian { sd } => {
                let z = x / sd;
                Ok((-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt()))
            }
        }
    }

    /// Analytic continuation of the density's positive piece beyond its
    /// support edges. Quadrature weights next to a support edge may sit on a
    /// node just outside it; they must see the smooth integrand, not zero.
    pub(crate) fn density_piece<T: Real>(&self, x: T) -> T {
        match *self {
            Innovation::Uniform { lo, hi } => T::one() / T::of(hi - lo),
            Innovation::Exponential => (-x).exp(),
            Innovation::Gaussian { sd } => {
                let sd = T::of(sd);
                let z = x / sd;
                (-(z * z) / T::of(2.0)).exp() / (sd * T::of((2.0 * PI).sqrt()))
            }
            Innovation::Rademacher => T::zero(),
        }
    }

    /// Distribution function F(x) = P(ξ ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Innovation::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Innovation::Exponential => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x).exp_m1()
                }
            }
            Innovation::Gaussian { sd } => std_normal_cdf(x / sd),
            Innovation::Rademacher => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
        }
    }

    /// Survival function P(ξ > x), computed without cancellation in the tail.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Innovation::Exponential => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-x).exp()
                }
            }
            Innovation::Gaussian { sd } => std_normal_cdf(-x / sd),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Generalized inverse F⁻¹(u) = inf{x : F(x) ≥ u} for u ∈ (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Innovation::Uniform { lo, hi } => lo + (hi - lo) * u,
            Innovation::Exponential => -(-u).ln_1p(),
            Innovation::Gaussian { sd } => sd * std_normal_quantile(u),
            Innovation::Rademacher => {
                if u <= 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Support bounds, possibly infinite.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Innovation::Uniform { lo, hi } => (lo, hi),
            Innovation::Exponential => (0.0, f64::INFINITY),
            Innovation::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Innovation::Rademacher => (-1.0, 1.0),
        }
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, stream: &mut Stream) -> f64 {
        self.quantile(stream.next_open01())
    }

    /// P(ξ survives) under the given convention, i.e. P(ξ ≥ 0) or P(ξ > 0).
    pub fn survival_mass(&self, convention: SurvivalConvention) -> f64 {
        match (self, convention) {
            (Innovation::Rademacher, _) => 0.5,
            _ => self.sf(0.0),
        }
    }

    /// Smallest M with P(|ξ| > M) ≤ eps.
    pub fn tail_bound(&self, eps: f64) -> f64 {
        match *self {
            Innovation::Uniform { lo, hi } => lo.abs().max(hi.abs()),
            Innovation::Exponential => -eps.ln(),
            Innovation::Gaussian { sd } => -sd * std_normal_quantile(0.5 * eps),
            Innovation::Rademacher => 1.0,
        }
    }

    /// Default truncation: tail mass 1e-10 outside [-M, M], times 1.5.
    pub fn default_truncation(&self) -> f64 {
        1.5 * self.tail_bound(1e-10)
    }

    /// Exponential decay rate of the density tails; `None` for bounded
    /// support. The Gaussian decays faster than any exponential; its rate is
    /// reported as 1/sd.
    pub fn decay_rate(&self) -> Option<f64> {
        match *self {
            Innovation::Uniform { .. } | Innovation::Rademacher => None,
            Innovation::Exponential => Some(1.0),
            Innovation::Gaussian { sd } => Some(1.0 / sd),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match *self {
            Innovation::Uniform { lo, hi } => (lo + hi).abs() <= 1e-15 * (hi - lo),
            Innovation::Exponential => false,
            Innovation::Gaussian { .. } | Innovation::Rademacher => true,
        }
    }

    /// Log-concave density that is strictly positive on the whole line.
    pub fn is_strictly_positive_log_concave(&self) -> bool {
        matches!(self, Innovation::Gaussian { .. })
    }

    pub fn name(&self) -> String {
        match *self {
            Innovation::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            Innovation::Exponential => "exponential".to_string(),
            Innovation::Gaussian { sd } => format!("gaussian({sd})"),
            Innovation::Rademacher => "rademacher".to_string(),
        }
    }
}

/// Φ(x) for the standard normal.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Φ⁻¹(u), Wichura's AS241 rational approximation (about 1e-16 relative).
pub fn std_normal_quantile(u: f64) -> f64 {
    const CENTRAL: ([f64; 8], [f64; 8]) = (
        [
            2509.0809287301226727,
            33430.575583588128105,
            67265.770927008700853,
            45921.953931549871457,
            13731.693765509461125,
            1971.5909503065514427,
            133.14166789178437745,
            3.387132872796366608,
        ],
        [
            5226.495278852545925,
            28729.085735721942674,
            39307.89580009271061,
            21213.794301586595867,
            5394.1960214247511077,
            687.1870074920579083,
            42.313330701600911252,
            1.0,
        ],
    );
    const NEAR: ([f64; 8], [f64; 8]) = (
        [
            7.7454501427834140764e-4,
            0.0227238449892691845833,
            0.24178072517745061177,
            1.27045825245236838258,
            3.64784832476320460504,
            5.7694972214606914055,
            4.6303378461565452959,
            1.42343711074968357734,
        ],
        [
            1.05075007164441684324e-9,
            5.475938084995344946e-4,
            0.0151986665636164571966,
            0.14810397642748007459,
            0.68976733498510000455,
            1.6763848301838038494,
            2.05319162663775882187,
            1.0,
        ],
    );
    const FAR: ([f64; 8], [f64; 8]) = (
        [
            2.01033439929228813265e-7,
            2.71155556874348757815e-5,
            0.0012426609473880784386,
            0.026532189526576123093,
            0.29656057182850489123,
            1.7848265399172913358,
            5.4637849111641143699,
            6.6579046435011037772,
        ],
        [
            2.04426310338993978564e-15,
            1.4215117583164458887e-7,
            1.8463183175100546818e-5,
            7.868691311456132591e-4,
            0.0148753612908506148525,
            0.13692988092273580531,
            0.59983220655588793769,
            1.0,
        ],
    );
    fn ratio((num, den): &([f64; 8], [f64; 8]), r: f64) -> f64 {
        let horner = |c: &[f64; 8]| c.iter().fold(0.0, |acc, &k| acc * r + k);
        horner(num) / horner(den)
    }

    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        return q * ratio(&CENTRAL, 0.180625 - q * q);
    }
    let r = (-(if q < 0.0 { u } else { 1.0 - u }).ln()).sqrt();
    let val = if r <= 5.0 {
        ratio(&NEAR, r - 1.6)
    } else {
        ratio(&FAR, r - 5.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Whether a value counts as "still persisting".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum SurvivalConvention {
    /// Zᵢ ≥ 0.
    #[default]
    #[serde(rename = "ge")]
    NonNegative,
    /// Zᵢ > 0.
    #[serde(rename = "gt")]
    StrictlyPositive,
}

impl SurvivalConvention {
    #[inline]
    pub fn survives(self, z: f64) -> bool {
        match self {
            SurvivalConvention::NonNegative => z >= 0.0,
            SurvivalConvention::StrictlyPositive => z > 0.0,
        }
    }
}

/// Law of the first p values (Z₀, …, Z_{p−1}) of an AR process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    PointMass { x: Vec<f64> },
    /// Z₀..Z_{p−1} i.i.d. from the given law.
    Iid { innovation: Innovation },
    /// N(0, 1/(1 − a₁²)), the stationary law of a standard Gaussian AR(1).
    StationaryAr1Gaussian { a1: f64 },
}

impl InitialDistribution {
    pub fn validate(&self, p: usize) -> Result<(), ModelError> {
        match self {
            InitialDistribution::PointMass { x } => {
                if x.len() != p {
                    return Err(ModelError::DimensionMismatch {
                        expected: p,
                        found: x.len(),
                    });
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::InvalidInitial("non-finite point mass".into()));
                }
            }
            InitialDistribution::Iid { .. } => {}
            InitialDistribution::StationaryAr1Gaussian { a1 } => {
                if p != 1 {
                    return Err(ModelError::DimensionMismatch {
                        expected: 1,
                        found: p,
                    });
                }
                if !(a1.abs() < 1.0) {
                    return Err(ModelError::InvalidInitial(format!(
                        "stationary AR(1) law needs |a1| < 1, got {a1}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws (Z₀, …, Z_{p−1}) into `out`.
    pub fn sample_into(&self, out: &mut [f64], stream: &mut Stream) -> Result<(), ModelError> {
        self.validate(out.len())?;
        match self {
            InitialDistribution::PointMass { x } => out.copy_from_slice(x),
            InitialDistribution::Iid { innovation } => {
                for v in out.iter_mut() {
                    *v = innovation.sample(stream);
                }
            }
            InitialDistribution::StationaryAr1Gaussian { a1 } => {
                let sd = (1.0 - a1 * a1).sqrt().recip();
                out[0] = sd * std_normal_quantile(stream.next_open01());
            }
        }
        Ok(())
    }
}

/// Draws an initial vector of length `p`.
pub fn sample_initial(
    init: &InitialDistribution,
    p: usize,
    stream: &mut Stream,
) -> Result<Vec<f64>, ModelError> {
    let mut out = vec![0.0; p];
    init.sample_into(&mut out, stream)?;
    Ok(out)
}

fn check_coeffs(coeffs: &[f64]) -> Result<(), ModelError> {
    if coeffs.is_empty() {
        return Err(ModelError::EmptyCoefficients);
    }
    if let Some(i) = coeffs.iter().position(|a| !a.is_finite()) {
        return Err(ModelError::NonFiniteCoefficient(i));
    }
    Ok(())
}

/// Zᵢ = Σⱼ aⱼ Z_{i−j} + ξᵢ for i ≥ p, with (Z₀..Z_{p−1}) drawn from `initial`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArModel {
    coeffs: Vec<f64>,
    innovation: Innovation,
    initial: InitialDistribution,
    convention: SurvivalConvention,
}

impl ArModel {
    pub fn new(
        coeffs: Vec<f64>,
        innovation: Innovation,
        initial: InitialDistribution,
        convention: SurvivalConvention,
    ) -> Result<Self, ModelError> {
        check_coeffs(&coeffs)?;
        initial.validate(coeffs.len())?;
        if let InitialDistribution::StationaryAr1Gaussian { a1 } = initial {
            if a1 != coeffs[0] {
                return Err(ModelError::InvalidInitial(format!(
                    "stationary law built for a1={a1} but model has a1={}",
                    coeffs[0]
                )));
            }
        }
        Ok(Self {
            coeffs,
            innovation,
            initial,
            convention,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn innovation(&self) -> &Innovation {
        &self.innovation
    }
    pub fn initial(&self) -> &InitialDistribution {
        &self.initial
    }
    pub fn convention(&self) -> SurvivalConvention {
        self.convention
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self, ModelError> {
        let initial = match self.initial {
            InitialDistribution::StationaryAr1Gaussian { .. } if coeffs.len() == 1 => {
                InitialDistribution::StationaryAr1Gaussian { a1: coeffs[0] }
            }
            ref other => other.clone(),
        };
        Self::new(coeffs, self.innovation, initial, self.convention)
    }

    pub fn with_convention(&self, convention: SurvivalConvention) -> Self {
        Self {
            convention,
            ..self.clone()
        }
    }
}

/// Zᵢ = ξᵢ + Σⱼ aⱼ ξ_{i−j}, i ≥ 0, driven by ξ_{−q}, ξ_{−q+1}, ….
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaModel {
    coeffs: Vec<f64>,
    innovation: Innovation,
    convention: SurvivalConvention,
}

impl MaModel {
    pub fn new(
        coeffs: Vec<f64>,
        innovation: Innovation,
        convention: SurvivalConvention,
    ) -> Result<Self, ModelError> {
        check_coeffs(&coeffs)?;
        Ok(Self {
            coeffs,
            innovation,
            convention,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn innovation(&self) -> &Innovation {
        &self.innovation
    }
    pub fn convention(&self) -> SurvivalConvention {
        self.convention
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(coeffs, self.innovation, self.convention)
    }

    pub fn with_convention(&self, convention: SurvivalConvention) -> Self {
        Self {
            convention,
            ..self.clone()
        }
    }
}

/// Either process kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "process", rename_all = "lowercase")]
pub enum Model {
    Ar(ArModel),
    Ma(MaModel),
}

impl Model {
    pub fn order(&self) -> usize {
        match self {
            Model::Ar(m) => m.order(),
            Model::Ma(m) => m.order(),
        }
    }
    pub fn coeffs(&self) -> &[f64] {
        match self {
            Model::Ar(m) => m.coeffs(),
            Model::Ma(m) => m.coeffs(),
        }
    }
    pub fn innovation(&self) -> &Innovation {
        match self {
            Model::Ar(m) => m.innovation(),
            Model::Ma(m) => m.innovation(),
        }
    }
    pub fn convention(&self) -> SurvivalConvention {
        match self {
            Model::Ar(m) => m.convention(),
            Model::Ma(m) => m.convention(),
        }
    }
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self, ModelError> {
        Ok(match self {
            Model::Ar(m) => Model::Ar(m.with_coeffs(coeffs)?),
            Model::Ma(m) => Model::Ma(m.with_coeffs(coeffs)?),
        })
    }
    pub fn with_convention(&self, convention: SurvivalConvention) -> Self {
        match self {
            Model::Ar(m) => Model::Ar(m.with_convention(convention)),
            Model::Ma(m) => Model::Ma(m.with_convention(convention)),
        }
    }
}
