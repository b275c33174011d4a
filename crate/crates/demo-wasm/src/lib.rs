//! Browser bindings for three interactive pieces of the toolkit: unfollow
//! entropy, power-law fitting and a 2-D RBF SVM decision surface.

use shadowmarket::detection::svm::{solve_dual, KernelMachine, Matrix, SvmParams};
use shadowmarket::metrics;
use wasm_bindgen::prelude::*;

fn counts_of(values: &[f64]) -> Result<Vec<u64>, String> {
    values
        .iter()
        .map(|&v| {
            if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(format!("counts must be non-negative integers, got {v}"))
            }
        })
        .collect()
}

pub fn entropy_of(daily_counts: &[f64]) -> Result<f64, String> {
    metrics::unfollow_entropy(&counts_of(daily_counts)?).map_err(|e| e.to_string())
}

/// `[alpha, sigma, x_min, n]`
pub fn power_law_of(samples: &[f64]) -> Result<Vec<f64>, String> {
    let fit = metrics::fit_power_law(samples).map_err(|e| e.to_string())?;
    Ok(vec![fit.alpha, fit.sigma, fit.x_min, fit.n as f64])
}

/// Trains on `points` (x, y interleaved) with `labels` of +1 / -1 and
/// returns decision values on a `resolution` x `resolution` grid over the
/// unit square, row-major from the bottom-left corner.
pub fn svm_grid_of(points: &[f64], labels: &[f64], c: f64, gamma: f64, resolution: usize) -> Result<Vec<f64>, String> {
    if points.len() != 2 * labels.len() {
        return Err("need one label per point".into());
    }
    if !(2..=400).contains(&resolution) {
        return Err("resolution must be in 2..=400".into());
    }
    let x = Matrix::new(labels.len(), 2, points.to_vec());
    let params = SvmParams {
        c,
        gamma,
        ..SvmParams::default()
    };
    let sol = solve_dual(&x, labels, &params).map_err(|e| e.to_string())?;
    let machine = KernelMachine::from_solution(&x, labels, &sol, gamma);
    let step = 1.0 / (resolution - 1) as f64;
    let mut grid = Vec::with_capacity(resolution * resolution);
    for r in 0..resolution {
        for q in 0..resolution {
            grid.push(machine.decision(&[q as f64 * step, r as f64 * step]));
        }
    }
    Ok(grid)
}

#[wasm_bindgen]
pub fn unfollow_entropy(daily_counts: Vec<f64>) -> Result<f64, JsError> {
    entropy_of(&daily_counts).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fit_power_law(samples: Vec<f64>) -> Result<Vec<f64>, JsError> {
    power_law_of(&samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn svm_decision_grid(
    points: Vec<f64>,
    labels: Vec<f64>,
    c: f64,
    gamma: f64,
    resolution: usize,
) -> Result<Vec<f64>, JsError> {
    svm_grid_of(&points, &labels, c, gamma, resolution).map_err(|e| JsError::new(&e))
}
