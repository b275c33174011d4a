//! RBF-kernel C-SVM trained with sequential minimal optimization.
//!
//! The dual problem solved is
//!
//! ```text
//! min_a  f(a) = 1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_t <= C
//! Q_ij = y_i y_j K(x_i, x_j),   K(u, v) = exp(-gamma |u - v|^2)
//! ```
//!
//! Each step picks the maximal violating pair (first-order working-set
//! selection, lowest index on ties) and solves the two-variable subproblem
//! analytically. The solver stops once the violation `m(a) - M(a)` drops
//! below the tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of feature rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape mismatch");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data)
    }

    /// Columns at `idx`, in that order.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for r in self.iter_rows() {
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Matrix::new(self.rows, idx.len(), data)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1000.0,
            gamma: DEFAULT_GAMMA,
            tolerance: 1e-3,
            max_iterations: 10_000_000,
        }
    }
}

/// The detector's kernel setting, `alpha = 20.0`, read as the RBF width.
pub const DEFAULT_KERNEL_WIDTH: f64 = 20.0;
/// `K(u, v) = exp(-|u - v|^2 / width)`.
pub const DEFAULT_GAMMA: f64 = 1.0 / DEFAULT_KERNEL_WIDTH;

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("gamma", self.gamma), ("tolerance", self.tolerance)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("SVM parameter {name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Kernel rows over the training set; precomputed when it fits comfortably
/// in memory, recomputed on demand otherwise.
enum KernelRows<'a> {
    Dense(Vec<f64>, usize),
    OnDemand(&'a Matrix, f64),
}

const DENSE_KERNEL_LIMIT: usize = 3000;

impl<'a> KernelRows<'a> {
    fn new(x: &'a Matrix, gamma: f64) -> Self {
        let n = x.rows;
        if n > DENSE_KERNEL_LIMIT {
            return KernelRows::OnDemand(x, gamma);
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
            for j in 0..i {
                let v = rbf(x.row(i), x.row(j), gamma);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        KernelRows::Dense(k, n)
    }

    fn row<'b>(&'b self, i: usize, buf: &'b mut Vec<f64>) -> &'b [f64] {
        match self {
            KernelRows::Dense(k, n) => &k[i * n..(i + 1) * n],
            KernelRows::OnDemand(x, gamma) => {
                buf.clear();
                buf.extend(x.iter_rows().map(|r| rbf(x.row(i), r, *gamma)));
                buf
            }
        }
    }
}

/// Dual solution on the (already standardized) training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSolution {
    /// One multiplier per training row, each in `[0, C]`.
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// `m(a) - M(a)` at exit; zero violation means exact KKT.
    pub kkt_gap: f64,
    pub converged: bool,
    /// `sum(a) - 1/2 a'Qa`, the maximised dual objective.
    pub dual_objective: f64,
}

/// Box / label bookkeeping for the working-set rules.
#[inline]
fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Solves the C-SVM dual with SMO. `y` must hold only `+1` / `-1`.
pub fn solve_dual(x: &Matrix, y: &[f64], params: &SvmParams) -> Result<SvmSolution> {
    params.validate()?;
    let n = x.rows;
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if let Some(pos) = x.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / x.cols.max(1),
            col: pos % x.cols.max(1),
        });
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::InvalidInput("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }

    const TAU: f64 = 1e-12;
    let c = params.c;
    let kernel = KernelRows::new(x, params.gamma);
    let mut alpha = vec![0.0; n];
    // gradient of f: Qa - e
    let mut grad = vec![-1.0; n];
    let mut ki_buf = Vec::with_capacity(n);
    let mut kj_buf = Vec::with_capacity(n);
    let mut iterations = 0;
    // f = -y * grad; membership in I_up / I_low only changes at i and j
    let mut f: Vec<f64> = y.iter().zip(&grad).map(|(yt, g)| -yt * g).collect();
    let mut up: Vec<bool> = (0..n).map(|t| in_up(alpha[t], y[t], c)).collect();
    let mut low: Vec<bool> = (0..n).map(|t| in_low(alpha[t], y[t], c)).collect();
    // gradient part contributed by multipliers at C, for reactivating shrunk rows
    let mut gbar = vec![0.0; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut unshrunk = false;
    let shrink_every = n.min(1000);
    let mut countdown = shrink_every;
    let scan = |active: &[usize], f: &[f64], up: &[bool], low: &[bool]| {
        let (mut i, mut gmax, mut j, mut gmin) = (usize::MAX, f64::NEG_INFINITY, usize::MAX, f64::INFINITY);
        for &t in active {
            let v = f[t];
            if up[t] && v > gmax {
                gmax = v;
                i = t;
            }
            if low[t] && v < gmin {
                gmin = v;
                j = t;
            }
        }
        (i, gmax, j, gmin)
    };
    let reconstruct = |active: &[usize], f: &mut [f64], alpha: &[f64], gbar: &[f64], buf: &mut Vec<f64>| {
        if active.len() == n {
            return;
        }
        let mut is_active = vec![false; n];
        for &t in active {
            is_active[t] = true;
        }
        let inactive: Vec<usize> = (0..n).filter(|&t| !is_active[t]).collect();
        for &t in &inactive {
            f[t] = -y[t] * (gbar[t] - 1.0);
        }
        for j in 0..n {
            if alpha[j] > 0.0 && alpha[j] < c {
                let kj = kernel.row(j, buf);
                let s = alpha[j] * y[j];
                for &t in &inactive {
                    f[t] -= s * kj[t];
                }
            }
        }
    };
    let mut gap;
    loop {
        let (mut i, mut gmax, mut j, mut gmin) = scan(&active, &f, &up, &low);
        gap = gmax - gmin;
        countdown -= 1;
        if countdown == 0 {
            countdown = shrink_every;
            if !unshrunk && gap <= 10.0 * params.tolerance {
                unshrunk = true;
                reconstruct(&active, &mut f, &alpha, &gbar, &mut ki_buf);
                active = (0..n).collect();
                (i, gmax, j, gmin) = scan(&active, &f, &up, &low);
                gap = gmax - gmin;
            }
            // rows that cannot become violators soon
            active.retain(|&t| {
                if up[t] && !low[t] {
                    f[t] >= gmin
                } else if low[t] && !up[t] {
                    f[t] <= gmax
                } else {
                    true
                }
            });
        }
        if i == usize::MAX || j == usize::MAX || gap < params.tolerance {
            if active.len() < n {
                reconstruct(&active, &mut f, &alpha, &gbar, &mut ki_buf);
                active = (0..n).collect();
                countdown = shrink_every;
                continue;
            }
            break;
        }
        if iterations >= params.max_iterations {
            log::warn!("SMO stopped after {iterations} iterations with KKT gap {gap:.3e}");
            break;
        }
        iterations += 1;
        for t in [i, j] {
            grad[t] = -y[t] * f[t];
        }

        let ki = kernel.row(i, &mut ki_buf);
        let kj = kernel.row(j, &mut kj_buf);
        let qij = y[i] * y[j] * ki[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (ki[i] + kj[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (ki[i] + kj[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (si, sj) = (y[i] * (alpha[i] - old_i), y[j] * (alpha[j] - old_j));
        for &t in &active {
            f[t] -= ki[t] * si + kj[t] * sj;
        }
        for (t, kt, old) in [(i, ki, old_i), (j, kj, old_j)] {
            let (was, is) = (old >= c, alpha[t] >= c);
            if was != is {
                let s = if is { c * y[t] } else { -c * y[t] };
                for (u, g) in gbar.iter_mut().enumerate() {
                    *g += y[u] * s * kt[u];
                }
            }
            up[t] = in_up(alpha[t], y[t], c);
            low[t] = in_low(alpha[t], y[t], c);
        }
    }
    for t in 0..n {
        grad[t] = -y[t] * f[t];
    }

    let bias = -rho(&alpha, &grad, y, c);
    let dual_objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(SvmSolution {
        converged: gap < params.tolerance,
        alpha,
        bias,
        iterations,
        kkt_gap: gap.max(0.0),
        dual_objective,
    })
}

/// Offset from the free multipliers, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Kernel expansion on standardized inputs: `sum_i coef_i K(sv_i, x) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMachine {
    pub gamma: f64,
    pub support_vectors: Matrix,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

impl KernelMachine {
    pub fn from_solution(x: &Matrix, y: &[f64], sol: &SvmSolution, gamma: f64) -> Self {
        let sv: Vec<usize> = (0..x.rows).filter(|&t| sol.alpha[t] > 0.0).collect();
        KernelMachine {
            gamma,
            support_vectors: x.select_rows(&sv),
            dual_coef: sv.iter().map(|&t| sol.alpha[t] * y[t]).collect(),
            bias: sol.bias,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter_rows()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Matrix, Vec<f64>) {
        (
            Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]),
            vec![-1.0, -1.0, 1.0, 1.0],
        )
    }

    #[test]
    fn xor_is_separated_with_unit_gamma() {
        let (x, y) = xor();
        let params = SvmParams {
            gamma: 1.0,
            ..SvmParams::default()
        };
        let sol = solve_dual(&x, &y, &params).unwrap();
        assert!(sol.converged);
        let m = KernelMachine::from_solution(&x, &y, &sol, params.gamma);
        for (r, yi) in x.iter_rows().zip(&y) {
            assert!(m.decision(r) * yi > 0.0);
        }
    }

    #[test]
    fn contradictory_duplicates_stay_in_the_box() {
        let x = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]);
        let y = vec![1.0, -1.0, 1.0, -1.0];
        let params = SvmParams {
            c: 3.0,
            gamma: 1.0,
            ..SvmParams::default()
        };
        let sol = solve_dual(&x, &y, &params).unwrap();
        assert!(sol.alpha.iter().all(|a| (0.0..=3.0).contains(a)));
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-9);
    }

    #[test]
    fn rejects_single_class_and_non_finite() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert!(matches!(
            solve_dual(&x, &[1.0, 1.0], &SvmParams::default()),
            Err(Error::SingleClass)
        ));
        let bad = Matrix::from_rows(&[[0.0], [f64::NAN]]);
        assert!(matches!(
            solve_dual(&bad, &[1.0, -1.0], &SvmParams::default()),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn matrix_selection() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(m.select_cols(&[2, 0]).data, vec![3.0, 1.0, 6.0, 4.0]);
        assert_eq!(m.select_rows(&[1]).data, vec![4.0, 5.0, 6.0]);
        assert_eq!(m.column(1), vec![2.0, 5.0]);
    }
}
