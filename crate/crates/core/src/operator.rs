//! Nyström discretizations of the AR and MA persistence operators.
//!
//! A state is a point x = (x₁, …, x_d) of the tensor grid. Both operators
//! map g to a function whose value at x integrates g(x₂, …, x_d, y) over a
//! new last coordinate y, so each state owns one row of weights over the
//! N image states sharing (x₂, …, x_d). The full N^d × N^d matrix is never
//! formed unless asked for.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArModel, Innovation, MaModel, Model, ModelError};
use crate::quadrature::{build_grid, Grid, QuadratureError, Scheme};
use crate::real::Real;
use crate::spectral::{spectral_radius, DenseMatrix, LinearOperator, PowerConfig, SpectralError, Spectrum};

/// Largest state count for which [`Operator::materialize`] succeeds.
pub const DENSE_LIMIT: usize = 4096;

const PARALLEL_WORK: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("truncation bound must be positive and finite, got {0}")]
    InvalidTruncation(f64),
    #[error("AR grid axis must be [0, M], got [{lo}, {hi}]")]
    ArAxis { lo: f64, hi: f64 },
    #[error("grid dimension {grid} does not match model order {order}")]
    DimensionMismatch { grid: usize, order: usize },
    #[error("tilt must be finite and nonnegative, got {0}")]
    InvalidTilt(f64),
    #[error("{0} states exceed the dense limit of {DENSE_LIMIT}")]
    TooLargeToMaterialize(usize),
    #[error("sweep needs at least one truncation bound and one node count")]
    EmptySweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Ar,
    Ma,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorMeta {
    pub kind: ProcessKind,
    pub coeffs: Vec<f64>,
    pub innovation: String,
    pub tilt: f64,
    pub cut_correction: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Row<T> {
    /// Index of the first image state with nonzero weight.
    target: usize,
    weights: Vec<T>,
}

/// Discretized persistence operator on a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T> {
    pub grid: Grid<T>,
    pub meta: OperatorMeta,
    rows: Vec<Row<T>>,
}

/// Σⱼ aⱼ x_{d+1−j}: the deterministic part of the next value.
fn drift(coeffs: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    coeffs.iter().enumerate().map(|(j, a)| a * x[d - 1 - j]).sum()
}

fn check_dim<T: Real>(grid: &Grid<T>, order: usize) -> Result<(), OperatorError> {
    if grid.dim != order {
        return Err(OperatorError::DimensionMismatch {
            grid: grid.dim,
            order,
        });
    }
    Ok(())
}

fn build_rows<T: Real>(grid: &Grid<T>, row: impl Fn(&[f64]) -> (usize, Vec<T>) + Sync) -> Vec<Row<T>> {
    let n = grid.nodes_per_axis();
    let tail = grid.len() / n;
    (0..grid.len())
        .into_par_iter()
        .with_min_len(32)
        .map(|s| {
            let x = grid.coords_f64(s);
            let (start, weights) = row(&x);
            Row {
                target: (s % tail) * n + start,
                weights,
            }
        })
        .collect()
}

/// AR operator (Kg)(x) = ∫₀^M g(x₂, …, x_p, z) φ(z − s(x)) dz, optionally
/// conjugated by h(x) = e^{δ Σ xⱼ}, which multiplies the kernel by
/// e^{δ(z − x₁)}.
///
/// Edges of the innovation support that fall inside [0, M] are treated as
/// cuts; the density is continued smoothly past them.
pub fn assemble_ar<T: Real>(model: &ArModel, grid: &Grid<T>, tilt: f64) -> Result<Operator<T>, OperatorError> {
    let innovation = model.innovation();
    innovation.density(0.0)?;
    check_dim(grid, model.order())?;
    let (lo, hi) = grid.axis.bounds();
    if lo != 0.0 {
        return Err(OperatorError::ArAxis { lo, hi });
    }
    if !(tilt.is_finite() && tilt >= 0.0) {
        return Err(OperatorError::InvalidTilt(tilt));
    }
    let (slo, shi) = innovation.support();
    let coeffs = model.coeffs();
    let axis = &grid.axis;
    let delta = T::of(tilt);
    let rows = build_rows(grid, |x| {
        let s = drift(coeffs, x);
        let span = axis.interval_weights(s + slo, s + shi, true);
        let (s_t, x1) = (T::of(s), T::of(x[0]));
        let weights = span
            .weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let z = axis.nodes[span.start + i];
                let mut k = w * innovation.density_piece(z - s_t);
                if tilt > 0.0 {
                    k *= (delta * (z - x1)).exp();
                }
                k
            })
            .collect();
        (span.start, weights)
    });
    Ok(Operator {
        grid: grid.clone(),
        meta: OperatorMeta {
            kind: ProcessKind::Ar,
            coeffs: coeffs.to_vec(),
            innovation: innovation.name(),
            tilt,
            cut_correction: true,
        },
        rows,
    })
}

/// MA operator (Kg)(x) = ∫ 1{y + s(x) > 0} g(x₂, …, x_q, y) φ(y) dy on the
/// grid's innovation axis.
///
/// With `cut_correction` the cell straddling y = −s(x) contributes the
/// fraction above the cut, refined by a local moment correction on
/// Gauss–Legendre axes; without it each node counts fully or not at all.
pub fn assemble_ma<T: Real>(
    model: &MaModel,
    grid: &Grid<T>,
    cut_correction: bool,
) -> Result<Operator<T>, OperatorError> {
    let innovation = model.innovation();
    innovation.density(0.0)?;
    check_dim(grid, model.order())?;
    let coeffs = model.coeffs();
    let axis = &grid.axis;
    let (_, hi) = axis.bounds();
    let phi: Vec<T> = axis.nodes.iter().map(|&y| innovation.density_piece(y)).collect();
    let rows = build_rows(grid, |x| {
        let s = drift(coeffs, x);
        let span = axis.interval_weights(-s, hi, cut_correction);
        let weights = span
            .weights
            .iter()
            .enumerate()
            .map(|(i, &w)| w * phi[span.start + i])
            .collect();
        (span.start, weights)
    });
    Ok(Operator {
        grid: grid.clone(),
        meta: OperatorMeta {
            kind: ProcessKind::Ma,
            coeffs: coeffs.to_vec(),
            innovation: innovation.name(),
            tilt: 0.0,
            cut_correction,
        },
        rows,
    })
}

impl<T: Real> Operator<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of stored kernel weights.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.weights.len()).sum()
    }

    /// out = K g.
    pub fn apply(&self, g: &[T], out: &mut [T]) {
        assert_eq!(g.len(), self.len());
        assert_eq!(out.len(), self.len());
        let row = |(o, r): (&mut T, &Row<T>)| {
            *o = r
                .weights
                .iter()
                .zip(&g[r.target..r.target + r.weights.len()])
                .map(|(&w, &v)| w * v)
                .sum();
        };
        if self.nnz() >= PARALLEL_WORK {
            out.par_iter_mut().zip(&self.rows).with_min_len(64).for_each(row);
        } else {
            out.iter_mut().zip(&self.rows).for_each(row);
        }
    }

    /// K1, the row sums.
    pub fn row_sums(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.weights.iter().copied().sum()).collect()
    }

    /// f evaluated at every grid state.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<T> {
        (0..self.len()).map(|s| T::of(f(&self.grid.coords_f64(s)))).collect()
    }

    /// ‖Kg − λg‖∞.
    pub fn residual(&self, g: &[T], lambda: T) -> T {
        let mut kg = vec![T::zero(); self.len()];
        self.apply(g, &mut kg);
        kg.iter()
            .zip(g)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - lambda * b).abs()))
    }

    /// Dense matrix, only for small grids.
    pub fn materialize(&self) -> Result<DenseMatrix<T>, OperatorError> {
        let n = self.len();
        if n > DENSE_LIMIT {
            return Err(OperatorError::TooLargeToMaterialize(n));
        }
        let mut data = vec![T::zero(); n * n];
        for (s, r) in self.rows.iter().enumerate() {
            data[s * n + r.target..s * n + r.target + r.weights.len()].copy_from_slice(&r.weights);
        }
        Ok(DenseMatrix { n, data })
    }
}

impl<T: Real> LinearOperator<T> for Operator<T> {
    fn dim(&self) -> usize {
        self.len()
    }
    fn apply(&self, input: &[T], output: &mut [T]) {
        Operator::apply(self, input, output)
    }
}

/// Half the innovation's tail decay rate divided by p; zero for bounded
/// support.
pub fn default_tilt(innovation: &Innovation, p: usize) -> f64 {
    innovation.decay_rate().map_or(0.0, |r| 0.5 * r / p as f64)
}

/// Default nodes per axis for a d-dimensional grid.
pub fn default_nodes(dim: usize) -> usize {
    match dim {
        1 => 400,
        2 => 60,
        _ => 24,
    }
}

/// AR grid [0, M]^p.
pub fn ar_grid<T: Real>(model: &ArModel, m: f64, n: usize, scheme: Scheme) -> Result<Grid<T>, OperatorError> {
    if !(m.is_finite() && m > 0.0) {
        return Err(OperatorError::InvalidTruncation(m));
    }
    Ok(build_grid(0.0, m, n, model.order(), scheme)?)
}

/// MA grid over the innovation support intersected with [−M, M].
pub fn ma_grid<T: Real>(model: &MaModel, m: f64, n: usize, scheme: Scheme) -> Result<Grid<T>, OperatorError> {
    if !(m.is_finite() && m > 0.0) {
        return Err(OperatorError::InvalidTruncation(m));
    }
    let (lo, hi) = model.innovation().support();
    Ok(build_grid(lo.max(-m), hi.min(m), n, model.order(), scheme)?)
}

/// Knobs for one operator-route evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorOptions {
    /// Truncation bound; innovation default when absent.
    pub m: Option<f64>,
    /// Nodes per axis; dimension default when absent.
    pub n: Option<usize>,
    pub scheme: Scheme,
    /// AR tilt; when absent, [`default_tilt`] if some coefficient is
    /// positive and zero otherwise.
    pub tilt: Option<f64>,
    pub cut_correction: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        Self {
            m: None,
            n: None,
            scheme: Scheme::GaussLegendre,
            tilt: None,
            cut_correction: true,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridInfo {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub dim: usize,
    pub scheme: Scheme,
}

/// Spectral radius of one discretized operator with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorRun<T> {
    #[serde(flatten)]
    pub spectrum: Spectrum<T>,
    pub grid: GridInfo,
    pub tilt: f64,
    pub cut_correction: bool,
}

impl<T: Real> OperatorRun<T> {
    /// (node, ψ(node)) pairs for one-dimensional grids.
    pub fn eigenfunction_table(&self, op: &Operator<T>) -> Option<Vec<(f64, f64)>> {
        (op.grid.dim == 1).then(|| {
            (0..op.len())
                .map(|k| (op.grid.axis.node_f64(k), self.spectrum.eigenvector[k].as_f64()))
                .collect()
        })
    }
}

impl OperatorOptions {
    pub fn truncation(&self, model: &Model) -> f64 {
        self.m.unwrap_or_else(|| model.innovation().default_truncation())
    }

    pub fn nodes(&self, model: &Model) -> usize {
        self.n.unwrap_or_else(|| default_nodes(model.order()))
    }

    pub fn effective_tilt(&self, model: &Model) -> f64 {
        match model {
            Model::Ma(_) => 0.0,
            Model::Ar(ar) => self.tilt.unwrap_or_else(|| {
                if ar.coeffs().iter().any(|&a| a > 0.0) {
                    default_tilt(ar.innovation(), ar.order())
                } else {
                    0.0
                }
            }),
        }
    }
}

/// Assembles the operator described by `opts`.
pub fn assemble<T: Real>(model: &Model, opts: &OperatorOptions) -> Result<Operator<T>, OperatorError> {
    let m = opts.truncation(model);
    let n = opts.nodes(model);
    match model {
        Model::Ar(ar) => {
            let grid = ar_grid(ar, m, n, opts.scheme)?;
            assemble_ar(ar, &grid, opts.effective_tilt(model))
        }
        Model::Ma(ma) => {
            let grid = ma_grid(ma, m, n, opts.scheme)?;
            assemble_ma(ma, &grid, opts.cut_correction)
        }
    }
}

/// Power iteration on an assembled operator. Non-convergence is reported
/// through `spectrum.converged` with the last iterate.
pub fn solve_operator<T: Real>(op: &Operator<T>, m: f64, opts: &OperatorOptions) -> OperatorRun<T> {
    let config = PowerConfig {
        tol: T::of(opts.tol).max(PowerConfig::<T>::default().tol),
        max_iter: opts.max_iter,
    };
    let spectrum = match spectral_radius(op, config) {
        Ok(s) => s,
        Err(SpectralError::MaxIterationsExceeded { best, .. }) => *best,
        Err(SpectralError::Empty) => unreachable!("grids have at least 2 nodes"),
    };
    let (lo, hi) = op.grid.axis.bounds();
    OperatorRun {
        spectrum,
        grid: GridInfo {
            m,
            n: op.grid.nodes_per_axis(),
            lo,
            hi,
            dim: op.grid.dim,
            scheme: op.grid.axis.scheme,
        },
        tilt: op.meta.tilt,
        cut_correction: op.meta.cut_correction,
    }
}

/// Assemble and solve in one go.
pub fn solve<T: Real>(model: &Model, opts: &OperatorOptions) -> Result<(Operator<T>, OperatorRun<T>), OperatorError> {
    let op = assemble(model, opts)?;
    let run = solve_operator(&op, opts.truncation(model), opts);
    Ok((op, run))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// |λ(M, N) − λ(M_max, N_max)|.
    pub diff_to_reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub tilt: f64,
    pub reference_m: f64,
    pub reference_n: usize,
    pub entries: Vec<SweepEntry>,
}

impl ConvergenceTable {
    pub fn lambda(&self, m: f64, n: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.m == m && e.n == n)
            .map(|e| e.lambda)
    }

    /// Whether λ is nondecreasing in M at every fixed N, up to `tol`.
    /// Node positions move with M, so exact monotonicity only holds in the
    /// continuum limit.
    pub fn truncation_monotone(&self, tol: f64) -> bool {
        let mut ns: Vec<usize> = self.entries.iter().map(|e| e.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.iter().all(|&n| {
            let mut col: Vec<&SweepEntry> = self.entries.iter().filter(|e| e.n == n).collect();
            col.sort_by(|a, b| a.m.total_cmp(&b.m));
            col.windows(2).all(|w| w[1].lambda >= w[0].lambda - tol)
        })
    }
}

/// Full factorial table λ(M, N).
pub fn convergence_sweep(
    model: &Model,
    ms: &[f64],
    ns: &[usize],
    tilt: Option<f64>,
    base: &OperatorOptions,
) -> Result<ConvergenceTable, OperatorError> {
    if ms.is_empty() || ns.is_empty() {
        return Err(OperatorError::EmptySweep);
    }
    let cells: Vec<(f64, usize)> = ms.iter().flat_map(|&m| ns.iter().map(move |&n| (m, n))).collect();
    let runs: Vec<OperatorRun<f64>> = cells
        .par_iter()
        .map(|&(m, n)| {
            let opts = OperatorOptions {
                m: Some(m),
                n: Some(n),
                tilt: tilt.or(base.tilt),
                ..base.clone()
            };
            solve::<f64>(model, &opts).map(|(_, run)| run)
        })
        .collect::<Result<_, _>>()?;
    let m_max = ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_max = *ns.iter().max().unwrap();
    let reference = cells
        .iter()
        .zip(&runs)
        .find(|((m, n), _)| *m == m_max && *n == n_max)
        .map(|(_, r)| r.spectrum.lambda)
        .unwrap();
    let entries = cells
        .iter()
        .zip(&runs)
        .map(|(&(m, n), r)| SweepEntry {
            m,
            n,
            lambda: r.spectrum.lambda,
            residual: r.spectrum.residual,
            iterations: r.spectrum.iterations,
            converged: r.spectrum.converged,
            diff_to_reference: (r.spectrum.lambda - reference).abs(),
        })
        .collect();
    Ok(ConvergenceTable {
        tilt: runs[0].tilt,
        reference_m: m_max,
        reference_n: n_max,
        entries,
    })
}
