//! Perron root and eigenvector of nonnegative operators by power iteration.

use serde::Serialize;
use thiserror::Error;

use crate::real::Real;

/// Anything that maps a vector on a finite state space to its image.
pub trait LinearOperator<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, input: &[T], output: &mut [T]);
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

impl<T: Real> LinearOperator<T> for DenseMatrix<T> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, input: &[T], output: &mut [T]) {
        for (i, out) in output.iter_mut().enumerate() {
            *out = self.data[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(input)
                .map(|(&a, &x)| a * x)
                .sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for PowerConfig<T> {
    fn default() -> Self {
        // f32 cannot resolve 1e-10; scale the tolerance with the precision.
        let eps = T::epsilon().as_f64();
        Self {
            tol: T::of((eps * 100.0).max(1e-10)),
            max_iter: 20_000,
        }
    }
}

/// Largest eigenvalue and its sup-normalized nonnegative eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum<T> {
    pub lambda: T,
    #[serde(skip)]
    pub eigenvector: Vec<T>,
    /// ‖Kψ − λψ‖∞.
    pub residual: T,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError<T: Real> {
    #[error("power iteration did not converge in {iterations} iterations (λ≈{}, residual {})", best.lambda, best.residual)]
    MaxIterationsExceeded {
        iterations: usize,
        best: Box<Spectrum<T>>,
    },
    #[error("operator has no states")]
    Empty,
}

impl<T: Real> SpectralError<T> {
    /// The last iterate, when one exists.
    pub fn best(&self) -> Option<&Spectrum<T>> {
        match self {
            SpectralError::MaxIterationsExceeded { best, .. } => Some(best),
            SpectralError::Empty => None,
        }
    }
}

fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Power iteration from the all-ones vector with sup-norm normalization.
///
/// Stops once successive eigenvalue estimates differ by less than `tol` and
/// the eigen-residual is below `tol`. When the iterates settle into a
/// period-2 cycle (eigenvalues ±λ of equal modulus) the iteration restarts
/// from v + Kv/λ, which removes the negative-eigenvalue component.
pub fn spectral_radius<T: Real, K: LinearOperator<T> + ?Sized>(
    op: &K,
    config: PowerConfig<T>,
) -> Result<Spectrum<T>, SpectralError<T>> {
    let n = op.dim();
    if n == 0 {
        return Err(SpectralError::Empty);
    }
    let mut v = vec![T::one(); n];
    let mut w = vec![T::zero(); n];
    let mut prev_v = v.clone();
    op.apply(&v, &mut w);
    let mut lam = sup_norm(&w);
    let mut prev_lam;
    let mut residual = T::infinity();
    let mut restarts = 0;
    let mut stalled = 0usize;
    let mut best_residual = T::infinity();

    for it in 1..=config.max_iter {
        if lam == T::zero() {
            return Ok(Spectrum {
                lambda: T::zero(),
                eigenvector: v,
                residual: T::zero(),
                iterations: it,
                restarts,
                converged: true,
            });
        }
        std::mem::swap(&mut prev_v, &mut v);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = *wi / lam;
        }
        op.apply(&v, &mut w);
        let new_lam = sup_norm(&w);
        residual = w
            .iter()
            .zip(&v)
            .fold(T::zero(), |m, (&wi, &vi)| m.max((wi - new_lam * vi).abs()));
        let delta = (new_lam - lam).abs();
        prev_lam = lam;
        lam = new_lam;
        if delta < config.tol && residual < config.tol {
            return Ok(Spectrum {
                lambda: lam,
                eigenvector: v,
                residual,
                iterations: it,
                restarts,
                converged: true,
            });
        }

        if residual < best_residual * T::of(0.999) {
            best_residual = residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        // Period-2 cycle: the residual stopped improving while v keeps
        // flipping between two states.
        if stalled >= 10 && restarts < 8 {
            let flip = v
                .iter()
                .zip(&prev_v)
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
            if flip > T::of(10.0) * residual.min(T::one()) || flip > T::of(1e-3) {
                let two_step = (lam * prev_lam).sqrt();
                for (vi, wi) in v.iter_mut().zip(&w) {
                    *vi += *wi / two_step;
                }
                let norm = sup_norm(&v);
                if norm > T::zero() {
                    v.iter_mut().for_each(|x| *x /= norm);
                    op.apply(&v, &mut w);
                    lam = sup_norm(&w);
                    restarts += 1;
                    stalled = 0;
                    best_residual = T::infinity();
                }
            }
        }
    }

    Err(SpectralError::MaxIterationsExceeded {
        iterations: config.max_iter,
        best: Box::new(Spectrum {
            lambda: lam,
            eigenvector: v,
            residual,
            iterations: config.max_iter,
            restarts,
            converged: false,
        }),
    })
}
