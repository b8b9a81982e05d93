//! Tensor quadrature grids and partial-interval weights.
//!
//! Every axis carries N nodes, positive weights and a partition of [lo, hi]
//! into N cells with cell k of length wₖ containing node k. For
//! Gauss–Legendre the cells come from cumulative weights (the
//! Chebyshev–Markov–Stieltjes separation puts node k strictly inside).
//!
//! Integrals over a sub-interval [a, b] use the same nodes. The cells cut by
//! a or b get the covered fraction of their weight; on Gauss–Legendre axes a
//! few nodes next to each cut then receive a moment correction that makes
//! the rule exact for low-degree polynomials centred at the cut. A
//! correction is only accepted while every weight stays nonnegative.

use serde::Serialize;
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid bounds [{lo}, {hi}]")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("need at least 2 nodes per axis, got {0}")]
    TooFewNodes(usize),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("grid with {nodes}^{dim} states is too large")]
    TooLarge { nodes: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    GaussLegendre,
    Midpoint,
}

/// Largest polynomial degree the cut correction tries to integrate exactly.
const CUT_DEGREE: usize = 2;

/// Standard Gauss–Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// One-dimensional rule on [lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisRule<T> {
    pub scheme: Scheme,
    pub lo: T,
    pub hi: T,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    #[serde(skip)]
    y: Vec<f64>,
    #[serde(skip)]
    w: Vec<f64>,
    /// Cell boundaries, N + 1 of them.
    #[serde(skip)]
    c: Vec<f64>,
    #[serde(skip)]
    lo64: f64,
    #[serde(skip)]
    hi64: f64,
}

/// Contiguous block of nonzero weights starting at node `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Span<T> {
    pub start: usize,
    pub weights: Vec<T>,
}

impl<T> Span<T> {
    pub fn empty() -> Self {
        Self {
            start: 0,
            weights: Vec::new(),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl<T: Real> AxisRule<T> {
    pub fn new(lo: f64, hi: f64, n: usize, scheme: Scheme) -> Result<Self, QuadratureError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(QuadratureError::InvalidBounds { lo, hi });
        }
        if n < 2 {
            return Err(QuadratureError::TooFewNodes(n));
        }
        let half = 0.5 * (hi - lo);
        let (y, w, c) = match scheme {
            Scheme::GaussLegendre => {
                let (t, tw) = gauss_legendre(n);
                let y: Vec<f64> = t.iter().map(|t| lo + (t + 1.0) * half).collect();
                let w: Vec<f64> = tw.iter().map(|w| w * half).collect();
                let mut c = Vec::with_capacity(n + 1);
                c.push(lo);
                // Accumulate from both ends so the partition is symmetric.
                let mut left = lo;
                let mut right = hi;
                let mut tail = Vec::with_capacity(n / 2);
                for k in 0..n / 2 {
                    left += w[k];
                    right -= w[n - 1 - k];
                    c.push(left);
                    tail.push(right);
                }
                if n % 2 == 0 {
                    tail.pop();
                    let mid = 0.5 * (lo + hi);
                    *c.last_mut().unwrap() = mid;
                }
                c.extend(tail.into_iter().rev());
                c.push(hi);
                (y, w, c)
            }
            Scheme::Midpoint => {
                let h = (hi - lo) / n as f64;
                let y = (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect();
                let c = (0..=n)
                    .map(|k| if k == n { hi } else { lo + k as f64 * h })
                    .collect();
                (y, vec![h; n], c)
            }
        };
        debug_assert_eq!(c.len(), n + 1);
        Ok(Self {
            scheme,
            lo: T::of(lo),
            hi: T::of(hi),
            nodes: y.iter().map(|&v| T::of(v)).collect(),
            weights: w.iter().map(|&v| T::of(v)).collect(),
            y,
            w,
            c,
            lo64: lo,
            hi64: hi,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn node_f64(&self, k: usize) -> f64 {
        self.y[k]
    }

    pub fn cell_bounds(&self) -> &[f64] {
        &self.c
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo64, self.hi64)
    }

    /// Σ wₖ f(yₖ).
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.y.iter().zip(&self.w).map(|(&y, &w)| w * f(y)).sum()
    }

    /// Cell containing x, clamped to the valid range.
    fn cell_of(&self, x: f64) -> usize {
        let n = self.len();
        // c[k] ≤ x < c[k+1]
        let k = self.c.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(n - 1)
    }

    /// Weights approximating ∫ₐᵇ f for f smooth on [lo, hi].
    ///
    /// Without `correct`, node k simply counts with weight wₖ when
    /// a < yₖ < b.
    pub fn interval_weights(&self, a: f64, b: f64, correct: bool) -> Span<T> {
        let (v, start) = self.interval_weights_f64(a, b, correct);
        Span {
            start,
            weights: v.into_iter().map(T::of).collect(),
        }
    }

    pub(crate) fn interval_weights_f64(&self, a: f64, b: f64, correct: bool) -> (Vec<f64>, usize) {
        let a = a.max(self.lo64);
        let b = b.min(self.hi64);
        if !(a < b) {
            return (Vec::new(), 0);
        }
        if !correct {
            let first = self.y.partition_point(|&y| y <= a);
            let end = self.y.partition_point(|&y| y < b);
            if first >= end {
                return (Vec::new(), 0);
            }
            return (self.w[first..end].to_vec(), first);
        }
        let ja = self.cell_of(a);
        let jb = self.cell_of(b).max(ja);
        let mut v: Vec<f64> = (ja..=jb)
            .map(|k| (b.min(self.c[k + 1]) - a.max(self.c[k])).max(0.0))
            .collect();
        if self.scheme == Scheme::GaussLegendre {
            let left = a > self.lo64;
            let right = b < self.hi64;
            if left && right && jb - ja < 3 {
                return self.short_interval(a, b);
            }
            for degree in (1..=CUT_DEGREE).rev() {
                // Left nodes ja..=ja+degree, right nodes jb-degree..=jb, disjoint.
                let need = if left && right { 2 * degree + 2 } else { degree + 1 };
                if jb - ja + 1 < need {
                    continue;
                }
                let mut trial = v.clone();
                if left {
                    let d = self.end_correction(a, ja, degree, false);
                    for (i, dv) in d.iter().enumerate() {
                        trial[i] += dv;
                    }
                }
                if right {
                    let d = self.end_correction(b, jb, degree, true);
                    let base = jb - ja - degree;
                    for (i, dv) in d.iter().enumerate() {
                        trial[base + i] += dv;
                    }
                }
                if trial.iter().all(|&x| x >= 0.0) {
                    v = trial;
                    break;
                }
            }
        }
        // trim zero weights at both ends
        let first = v.iter().position(|&x| x > 0.0).unwrap_or(v.len());
        let last = v.iter().rposition(|&x| x > 0.0).map_or(first, |i| i + 1);
        (v[first..last].to_vec(), ja + first)
    }

    /// Rule for an interval spanning only a few cells: its length times
    /// the linear interpolant at the midpoint.
    fn short_interval(&self, a: f64, b: f64) -> (Vec<f64>, usize) {
        let len = b - a;
        let m = 0.5 * (a + b);
        let n = self.len();
        let k = self.y.partition_point(|&y| y <= m);
        if k == 0 {
            return (vec![len], 0);
        }
        if k == n {
            return (vec![len], n - 1);
        }
        let t = (m - self.y[k - 1]) / (self.y[k] - self.y[k - 1]);
        (vec![len * (1.0 - t), len * t], k - 1)
    }

    /// Weight corrections for the nodes next to one cut of a one-sided
    /// interval: [cut, hi] when `mirrored` is false, [lo, cut] when true.
    /// Returned in ascending node order: nodes j..=j+deg for the left cut,
    /// j-deg..=j for the right cut.
    fn end_correction(&self, cut: f64, j: usize, deg: usize, mirrored: bool) -> Vec<f64> {
        let n = self.len();
        // Work in coordinates where the interval is [cut', hi'] with nodes
        // ascending: mirror x -> -x and reverse indices for the right cut.
        let y = |k: usize| if mirrored { -self.y[n - 1 - k] } else { self.y[k] };
        let w = |k: usize| if mirrored { self.w[n - 1 - k] } else { self.w[k] };
        let c = |k: usize| if mirrored { -self.c[n - k] } else { self.c[k] };
        let (lo, hi) = if mirrored {
            (-self.hi64, -self.lo64)
        } else {
            (self.lo64, self.hi64)
        };
        let cut = if mirrored { -cut } else { cut };
        let j = if mirrored { n - 1 - j } else { j };

        let sc = y(j + deg) - c(j);
        let p = |x: f64, d: usize| ((x - cut) / sc).powi(d as i32);
        // Error of the cell-fraction rule for ∫_cut^hi p_d, evaluated on the
        // shorter side of the cut; the full rule is exact for polynomials.
        let err: Vec<f64> = (0..=deg)
            .map(|d| {
                let dp1 = (d + 1) as f64;
                if cut - lo < hi - cut {
                    let exact_left = -sc * ((lo - cut) / sc).powi(d as i32 + 1) / dp1;
                    let mut s = (cut - c(j)) * p(y(j), d);
                    for k in 0..j {
                        s += w(k) * p(y(k), d);
                    }
                    exact_left - s
                } else {
                    let exact_right = sc * ((hi - cut) / sc).powi(d as i32 + 1) / dp1;
                    let mut s = (c(j + 1) - cut) * p(y(j), d);
                    for k in j + 1..n {
                        s += w(k) * p(y(k), d);
                    }
                    s - exact_right
                }
            })
            .collect();
        let mut mat: Vec<Vec<f64>> = (0..=deg)
            .map(|d| (0..=deg).map(|i| p(y(j + i), d)).collect())
            .collect();
        let mut rhs: Vec<f64> = err.iter().map(|e| -e).collect();
        let delta = solve_small(&mut mat, &mut rhs);
        if mirrored {
            delta.into_iter().rev().collect()
        } else {
            delta
        }
    }
}

/// Gaussian elimination with partial pivoting for tiny dense systems.
fn solve_small(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Tensor product of one axis rule with itself, `dim` times.
///
/// States are numbered row-major with the first coordinate most
/// significant, so dropping the first coordinate and appending a new last
/// one maps state s to (s mod N^(d−1))·N + k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid<T> {
    pub axis: AxisRule<T>,
    pub dim: usize,
}

impl<T: Real> Grid<T> {
    pub fn len(&self) -> usize {
        self.axis.len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.axis.len()
    }

    /// Per-axis node indices of state `s`, first coordinate first.
    pub fn multi_index(&self, mut s: usize, out: &mut [usize]) {
        let n = self.axis.len();
        for slot in out.iter_mut().rev() {
            *slot = s % n;
            s /= n;
        }
    }

    pub fn coords_f64(&self, s: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        self.multi_index(s, &mut idx);
        idx.iter().map(|&k| self.axis.node_f64(k)).collect()
    }

    /// Product of the per-axis weights of state `s`.
    pub fn weight(&self, s: usize) -> T {
        let mut idx = vec![0; self.dim];
        self.multi_index(s, &mut idx);
        idx.iter().map(|&k| self.axis.weights[k]).fold(T::one(), |a, b| a * b)
    }
}

/// Tensor grid on [lo, hi]^d with `n` nodes per axis.
pub fn build_grid<T: Real>(
    lo: f64,
    hi: f64,
    n: usize,
    d: usize,
    scheme: Scheme,
) -> Result<Grid<T>, QuadratureError> {
    if d == 0 {
        return Err(QuadratureError::ZeroDimension);
    }
    if n.checked_pow(d as u32).is_none_or(|s| s > 1 << 26) {
        return Err(QuadratureError::TooLarge { nodes: n, dim: d });
    }
    Ok(Grid {
        axis: AxisRule::new(lo, hi, n, scheme)?,
        dim: d,
    })
}
