//! Dense projected-gradient solver for the C-SVM dual, used as an oracle.

use shadowmarket::detection::svm::{rbf, Matrix};

pub fn gram(x: &Matrix, y: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    (0..x.rows)
        .map(|i| {
            (0..x.rows)
                .map(|j| y[i] * y[j] * rbf(x.row(i), x.row(j), gamma))
                .collect()
        })
        .collect()
}

pub fn objective(q: &[Vec<f64>], a: &[f64]) -> f64 {
    let quad: f64 = (0..a.len())
        .map(|i| a[i] * (0..a.len()).map(|j| q[i][j] * a[j]).sum::<f64>())
        .sum();
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y'a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let g = |lam: f64| at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent. Returns the multipliers and the
/// dual objective.
pub fn solve(x: &Matrix, y: &[f64], c: f64, gamma: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = x.rows;
    let q = gram(x, y, gamma);
    let lipschitz = q
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>())
            .collect();
        let moved: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&moved, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
    }
    let obj = objective(&q, &a);
    (a, obj)
}
