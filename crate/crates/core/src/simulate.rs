//! Path simulation and persistence-probability estimation.
//!
//! Both process kinds are driven through their Markov representation: an AR
//! process carries its last p values, an MA process its last q innovations.
//! The crude estimator follows independent replicate paths; the splitting
//! estimator keeps a population of particles, kills those that leave the
//! orthant and resamples the survivors every step.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArModel, MaModel, Model, SurvivalConvention};
use crate::rng::{Domain, Stream, StreamFamily};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("no replicate survived up to the smallest horizon n={horizon}; use splitting")]
    AllPathsDied { horizon: usize },
    #[error("all particles died at step {step}")]
    PopulationExtinct { step: usize },
    #[error("horizon grid must be non-empty and strictly increasing")]
    InvalidHorizons,
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("estimate at horizon index {index} is not positive")]
    NonPositiveProbabilityInWindow { index: usize },
    #[error("window {start}..{end} does not select at least two horizons out of {len}")]
    InvalidWindow { start: usize, end: usize, len: usize },
}

/// One-step dynamics of a persistence chain in its Markov representation.
///
/// `window` is the chain state: for AR the last p values, for MA the last q
/// innovations. `reveal` returns Z_t and advances the state.
pub trait PersistenceChain: Sync {
    fn order(&self) -> usize;
    fn convention(&self) -> SurvivalConvention;
    fn start(&self, window: &mut [f64], stream: &mut Stream);
    fn reveal(&self, window: &mut [f64], time: usize, stream: &mut Stream) -> f64;
}

impl PersistenceChain for ArModel {
    fn order(&self) -> usize {
        ArModel::order(self)
    }
    fn convention(&self) -> SurvivalConvention {
        ArModel::convention(self)
    }
    fn start(&self, window: &mut [f64], stream: &mut Stream) {
        self.initial()
            .sample_into(window, stream)
            .expect("initial law validated at construction");
    }
    #[inline]
    fn reveal(&self, window: &mut [f64], time: usize, stream: &mut Stream) -> f64 {
        let p = window.len();
        if time < p {
            return window[time];
        }
        let a = self.coeffs();
        let mut z = self.innovation().sample(stream);
        for j in 1..=p {
            z += a[j - 1] * window[p - j];
        }
        window.rotate_left(1);
        window[p - 1] = z;
        z
    }
}

impl PersistenceChain for MaModel {
    fn order(&self) -> usize {
        MaModel::order(self)
    }
    fn convention(&self) -> SurvivalConvention {
        MaModel::convention(self)
    }
    fn start(&self, window: &mut [f64], stream: &mut Stream) {
        for v in window.iter_mut() {
            *v = self.innovation().sample(stream);
        }
    }
    #[inline]
    fn reveal(&self, window: &mut [f64], _time: usize, stream: &mut Stream) -> f64 {
        let q = window.len();
        let a = self.coeffs();
        let xi = self.innovation().sample(stream);
        let mut z = xi;
        for j in 1..=q {
            z += a[j - 1] * window[q - j];
        }
        window.rotate_left(1);
        window[q - 1] = xi;
        z
    }
}

impl PersistenceChain for Model {
    fn order(&self) -> usize {
        Model::order(self)
    }
    fn convention(&self) -> SurvivalConvention {
        Model::convention(self)
    }
    fn start(&self, window: &mut [f64], stream: &mut Stream) {
        match self {
            Model::Ar(m) => m.start(window, stream),
            Model::Ma(m) => m.start(window, stream),
        }
    }
    #[inline]
    fn reveal(&self, window: &mut [f64], time: usize, stream: &mut Stream) -> f64 {
        match self {
            Model::Ar(m) => m.reveal(window, time, stream),
            Model::Ma(m) => m.reveal(window, time, stream),
        }
    }
}

/// Chain state plus the index of the next value to reveal.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovState {
    pub window: Vec<f64>,
    pub time: usize,
}

impl MarkovState {
    pub fn start<C: PersistenceChain + ?Sized>(chain: &C, stream: &mut Stream) -> Self {
        let mut window = vec![0.0; chain.order()];
        chain.start(&mut window, stream);
        Self { window, time: 0 }
    }

    pub fn advance<C: PersistenceChain + ?Sized>(&mut self, chain: &C, stream: &mut Stream) -> f64 {
        let z = chain.reveal(&mut self.window, self.time, stream);
        self.time += 1;
        z
    }
}

/// Z₀..Zₙ of an AR path.
pub fn simulate_ar_path(model: &ArModel, n: usize, stream: &mut Stream) -> Vec<f64> {
    let mut state = MarkovState::start(model, stream);
    (0..=n).map(|_| state.advance(model, stream)).collect()
}

/// An MA path together with the innovations ξ_{−q}..ξₙ that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaPath {
    pub innovations: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn simulate_ma_path_with_innovations(model: &MaModel, n: usize, stream: &mut Stream) -> MaPath {
    let mut state = MarkovState::start(model, stream);
    let mut innovations = state.window.clone();
    let values = (0..=n)
        .map(|_| {
            let z = state.advance(model, stream);
            innovations.push(*state.window.last().unwrap());
            z
        })
        .collect();
    MaPath {
        innovations,
        values,
    }
}

/// Z₀..Zₙ of an MA path.
pub fn simulate_ma_path(model: &MaModel, n: usize, stream: &mut Stream) -> Vec<f64> {
    simulate_ma_path_with_innovations(model, n, stream).values
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Crude,
    Splitting,
}

/// λ̂ = exp(slope of log p̂ₙ against n) over a window of the horizon grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub lambda: f64,
    pub half_width: f64,
    pub slope: f64,
    /// Horizons spanned by the window, inclusive.
    pub n_first: usize,
    pub n_last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceEstimate {
    pub method: Method,
    pub seed: u64,
    /// Replicates (crude) or particles (splitting).
    pub samples: usize,
    pub horizons: Vec<usize>,
    pub p_hat: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Surviving replicates (crude) or surviving particles at that step
    /// before resampling (splitting).
    pub counts: Vec<u64>,
    /// Log-slope between consecutive horizons; `None` where an estimate is 0.
    pub log_slopes: Vec<Option<f64>>,
    /// Fit over the last half of the horizons before the survivor count
    /// first drops below [`MIN_FIT_COUNT`], when defined.
    pub exponent: Option<ExponentFit>,
    /// Per-step survival fractions s_t of the splitting estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_fractions: Option<Vec<f64>>,
}

impl PersistenceEstimate {
    fn finish(mut self) -> Self {
        self.log_slopes = self
            .horizons
            .windows(2)
            .zip(self.p_hat.windows(2))
            .map(|(n, p)| {
                (p[0] > 0.0 && p[1] > 0.0).then(|| (p[1].ln() - p[0].ln()) / (n[1] - n[0]) as f64)
            })
            .collect();
        let resolved = self.counts.iter().take_while(|&&c| c >= MIN_FIT_COUNT).count();
        self.exponent = fit_exponent(&self, default_window(resolved)).ok();
        self
    }

    pub fn p_at(&self, n: usize) -> Option<f64> {
        self.horizons.iter().position(|&h| h == n).map(|i| self.p_hat[i])
    }
}

/// Horizons with fewer survivors are left out of the default fit window.
pub const MIN_FIT_COUNT: u64 = 100;

/// Last half of a grid with `len` horizons.
pub fn default_window(len: usize) -> Range<usize> {
    len / 2..len
}

fn check_horizons(horizons: &[usize]) -> Result<usize, SimulationError> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimulationError::InvalidHorizons);
    }
    Ok(*horizons.last().unwrap())
}

/// Crude Monte Carlo: p̂ₙ is the fraction of replicate paths with
/// Z₀..Zₙ all surviving. All horizons come from the same paths.
pub fn estimate_crude<C: PersistenceChain>(
    chain: &C,
    horizons: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<PersistenceEstimate, SimulationError> {
    let n_max = check_horizons(horizons)?;
    if replicates < 1 {
        return Err(SimulationError::TooFewSamples {
            min: 1,
            got: replicates,
        });
    }
    let convention = chain.convention();
    let order = chain.order();
    let family = StreamFamily::new(seed, Domain::Replicate);
    // deaths[t] = replicates whose first failure is at time t; the last slot
    // collects replicates that survive the whole horizon.
    let deaths = (0..replicates)
        .into_par_iter()
        .with_min_len(1024)
        .fold(
            || (vec![0u64; n_max + 2], vec![0.0; order]),
            |(mut hist, mut window): (Vec<u64>, Vec<f64>), r| {
                let mut stream = family.stream(r as u64);
                chain.start(&mut window, &mut stream);
                let mut death = n_max + 1;
                for t in 0..=n_max {
                    let z = chain.reveal(&mut window, t, &mut stream);
                    if !convention.survives(z) {
                        death = t;
                        break;
                    }
                }
                hist[death] += 1;
                (hist, window)
            },
        )
        .map(|(hist, _)| hist)
        .reduce(
            || vec![0u64; n_max + 2],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let r = replicates as f64;
    let mut counts = Vec::with_capacity(horizons.len());
    for &n in horizons {
        counts.push(deaths[n + 1..].iter().sum::<u64>());
    }
    if counts[0] == 0 {
        return Err(SimulationError::AllPathsDied {
            horizon: horizons[0],
        });
    }
    let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
    let std_err = p_hat.iter().map(|&p| (p * (1.0 - p) / r).sqrt()).collect();
    Ok(PersistenceEstimate {
        method: Method::Crude,
        seed,
        samples: replicates,
        horizons: horizons.to_vec(),
        p_hat,
        std_err,
        counts,
        log_slopes: Vec::new(),
        exponent: None,
        step_fractions: None,
    }
    .finish())
}

/// Survival resampling with a fixed population. Each step advances every
/// particle once, records the surviving fraction sₜ and refills the
/// population by drawing survivors uniformly with replacement;
/// p̂ₙ = Π_{t≤n} sₜ.
pub fn estimate_splitting<C: PersistenceChain>(
    chain: &C,
    horizons: &[usize],
    particles: usize,
    seed: u64,
) -> Result<PersistenceEstimate, SimulationError> {
    let n_max = check_horizons(horizons)?;
    if particles < 2 {
        return Err(SimulationError::TooFewSamples {
            min: 2,
            got: particles,
        });
    }
    let d = chain.order();
    let convention = chain.convention();
    let init = StreamFamily::new(seed, Domain::ParticleInit);
    let step = StreamFamily::new(seed, Domain::ParticleStep);
    let resample = StreamFamily::new(seed, Domain::Resample);

    let mut pop = vec![0.0; particles * d];
    pop.par_chunks_mut(d).enumerate().for_each(|(i, w)| {
        chain.start(w, &mut init.stream(i as u64));
    });
    let mut next = vec![0.0; particles * d];
    let mut alive = vec![false; particles];
    let mut fractions = Vec::with_capacity(n_max + 1);
    let mut log_p = 0.0;
    let mut var_log = 0.0;
    let mut p_hat = Vec::with_capacity(horizons.len());
    let mut std_err = Vec::with_capacity(horizons.len());
    let mut counts = Vec::with_capacity(horizons.len());
    let mut h = 0;

    for t in 0..=n_max {
        pop.par_chunks_mut(d)
            .zip(alive.par_iter_mut())
            .enumerate()
            .with_min_len(512)
            .for_each(|(i, (w, ok))| {
                let z = chain.reveal(w, t, &mut step.at(t as u64, i as u64));
                *ok = convention.survives(z);
            });
        let survivors: Vec<usize> = (0..particles).filter(|&i| alive[i]).collect();
        let k = survivors.len();
        if k == 0 {
            return Err(SimulationError::PopulationExtinct { step: t });
        }
        let s = k as f64 / particles as f64;
        fractions.push(s);
        log_p += s.ln();
        var_log += (1.0 - s) / (particles as f64 * s);
        if horizons[h] == t {
            let p = log_p.exp();
            p_hat.push(p);
            std_err.push(p * var_log.sqrt());
            counts.push(k as u64);
            h += 1;
        }
        if t < n_max && k < particles {
            let mut rs = resample.stream(t as u64);
            for slot in next.chunks_exact_mut(d) {
                let src = survivors[rs.next_index(k)];
                slot.copy_from_slice(&pop[src * d..(src + 1) * d]);
            }
            std::mem::swap(&mut pop, &mut next);
        }
    }

    Ok(PersistenceEstimate {
        method: Method::Splitting,
        seed,
        samples: particles,
        horizons: horizons.to_vec(),
        p_hat,
        std_err,
        counts,
        log_slopes: Vec::new(),
        exponent: None,
        step_fractions: Some(fractions),
    }
    .finish())
}

/// Weighted least-squares slope of log p̂ₙ against n over `window` (indices
/// into the horizon grid), with weights 1/(SE/p̂)²; λ̂ = exp(slope). Falls
/// back to equal weights when any standard error is zero. The half-width is
/// 1.96 standard errors of λ̂, treating horizons as independent.
pub fn fit_exponent(
    est: &PersistenceEstimate,
    window: Range<usize>,
) -> Result<ExponentFit, SimulationError> {
    let len = est.horizons.len();
    if window.end > len || window.len() < 2 {
        return Err(SimulationError::InvalidWindow {
            start: window.start,
            end: window.end,
            len,
        });
    }
    if let Some(i) = window.clone().find(|&i| !(est.p_hat[i] > 0.0)) {
        return Err(SimulationError::NonPositiveProbabilityInWindow { index: i });
    }
    let ns: Vec<f64> = window.clone().map(|i| est.horizons[i] as f64).collect();
    let ys: Vec<f64> = window.clone().map(|i| est.p_hat[i].ln()).collect();
    let rel: Vec<f64> = window.clone().map(|i| est.std_err[i] / est.p_hat[i]).collect();
    let weights: Vec<f64> = if rel.iter().all(|&r| r > 0.0) {
        rel.iter().map(|r| 1.0 / (r * r)).collect()
    } else {
        vec![1.0; rel.len()]
    };
    let w_sum: f64 = weights.iter().sum();
    let n_bar = ns.iter().zip(&weights).map(|(n, w)| n * w).sum::<f64>() / w_sum;
    let y_bar = ys.iter().zip(&weights).map(|(y, w)| y * w).sum::<f64>() / w_sum;
    let sxx: f64 = ns.iter().zip(&weights).map(|(n, w)| w * (n - n_bar).powi(2)).sum();
    let slope = ns
        .iter()
        .zip(&ys)
        .zip(&weights)
        .map(|((n, y), w)| w * (n - n_bar) * (y - y_bar))
        .sum::<f64>()
        / sxx;
    let var_slope: f64 = ns
        .iter()
        .zip(&rel)
        .zip(&weights)
        .map(|((n, r), w)| (w * (n - n_bar) / sxx).powi(2) * r * r)
        .sum();
    let lambda = slope.exp();
    Ok(ExponentFit {
        lambda,
        half_width: 1.96 * var_slope.sqrt() * lambda,
        slope,
        n_first: est.horizons[window.start],
        n_last: est.horizons[window.end - 1],
    })
}
