#[path = "support/qp.rs"]
mod qp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shadowmarket::detection::eval::{auc, evaluate};
use shadowmarket::detection::features::{FeatureSet, SetMask};
use shadowmarket::detection::svm::{solve_dual, KernelMachine, Matrix, SvmParams};
use shadowmarket::detection::{predict, TrainedModel};
use shadowmarket::model::Label;

fn random_instance(rng: &mut ChaCha8Rng) -> (Matrix, Vec<f64>, f64, f64) {
    let n = rng.random_range(4..=30);
    let d = rng.random_range(2..=5);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let data: Vec<f64> = (0..n * d).map(|_| normal.sample(rng)).collect();
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let c = rng.random_range(0.5..5.0);
    let gamma = rng.random_range(0.1..2.0);
    (Matrix::new(n, d, data), y, c, gamma)
}

#[test]
fn smo_matches_projected_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let (x, y, c, gamma) = random_instance(&mut rng);
        let params = SvmParams {
            c,
            gamma,
            ..SvmParams::default()
        };
        let sol = solve_dual(&x, &y, &params).unwrap();
        let (_, oracle) = qp::solve(&x, &y, c, gamma, 20_000);
        let q = qp::gram(&x, &y, gamma);
        let recomputed = qp::objective(&q, &sol.alpha);
        assert!((recomputed - sol.dual_objective).abs() < 1e-9, "case {case}: reported objective");
        assert!(
            (sol.dual_objective - oracle).abs() < 1e-3,
            "case {case}: smo {} vs oracle {oracle} (n={}, C={c}, gamma={gamma})",
            sol.dual_objective,
            x.rows
        );
    }
}

#[test]
fn kkt_and_box_constraints_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (x, y, c, gamma) = random_instance(&mut rng);
        let params = SvmParams {
            c,
            gamma,
            ..SvmParams::default()
        };
        let sol = solve_dual(&x, &y, &params).unwrap();
        assert!(sol.converged);
        assert!(sol.kkt_gap <= params.tolerance);
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, yi)| a * yi).sum();
        assert!(balance.abs() <= 1e-6 * c, "sum alpha*y = {balance}");
    }
}

fn blobs(rng: &mut ChaCha8Rng, per_class: usize) -> (Matrix, Vec<f64>) {
    let normal = Normal::new(0.0, 0.3).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (cx, label) in [(-1.5, 1.0), (1.5, -1.0)] {
        for _ in 0..per_class {
            rows.push(vec![cx + normal.sample(rng), normal.sample(rng)]);
            y.push(label);
        }
    }
    (Matrix::from_rows(&rows), y)
}

#[test]
fn separable_blobs_are_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, y) = blobs(&mut rng, 10);
    let params = SvmParams {
        c: 10.0,
        gamma: 0.5,
        ..SvmParams::default()
    };
    let sol = solve_dual(&x, &y, &params).unwrap();
    let m = KernelMachine::from_solution(&x, &y, &sol, params.gamma);
    for (i, row) in x.iter_rows().enumerate() {
        assert_eq!(m.decision(row).signum(), y[i]);
    }
    let (_, oracle) = qp::solve(&x, &y, params.c, params.gamma, 20_000);
    assert!((sol.dual_objective - oracle).abs() < 1e-3);
    assert!(m.decision(&[-1.5, 0.0]) > 1.0);
}

#[test]
fn rbf_separates_xor() {
    let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
    let y = [1.0, 1.0, -1.0, -1.0];
    let params = SvmParams {
        c: 1000.0,
        gamma: 1.0,
        ..SvmParams::default()
    };
    let sol = solve_dual(&x, &y, &params).unwrap();
    let m = KernelMachine::from_solution(&x, &y, &sol, params.gamma);
    for (i, row) in x.iter_rows().enumerate() {
        assert_eq!(m.decision(row).signum(), y[i]);
    }
}

#[test]
fn contradictory_duplicates_stay_in_the_box() {
    let x = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5], [0.0, 1.0], [1.0, 0.0]]);
    let y = [1.0, -1.0, 1.0, -1.0];
    let params = SvmParams {
        c: 2.0,
        gamma: 1.0,
        ..SvmParams::default()
    };
    let sol = solve_dual(&x, &y, &params).unwrap();
    assert!(sol.converged);
    assert!(sol.alpha.iter().all(|&a| (0.0..=2.0).contains(&a)));
}

#[test]
fn interior_support_vectors_sit_on_the_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, y) = blobs(&mut rng, 12);
    let params = SvmParams {
        c: 1.0,
        gamma: 0.5,
        tolerance: 1e-6,
        ..SvmParams::default()
    };
    let sol = solve_dual(&x, &y, &params).unwrap();
    let m = KernelMachine::from_solution(&x, &y, &sol, params.gamma);
    let mut seen = 0;
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 1e-6 && a < params.c - 1e-6 {
            assert!((m.decision(x.row(i)).abs() - 1.0).abs() < 1e-3);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

fn mann_whitney(scores: &[f64], labels: &[Label]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == Label::Suspicious)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == Label::Legitimate)
        .map(|(s, _)| *s)
        .collect();
    let mut u = 0.0;
    for p in &pos {
        for n in &neg {
            u += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    u / (pos.len() * neg.len()) as f64
}

#[test]
fn auc_equals_mann_whitney() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let n = rng.random_range(2..200);
        // coarse scores so ties are common
        let coarse = rng.random::<bool>();
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(0..6) as f64
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let mut labels: Vec<Label> = (0..n)
            .map(|_| if rng.random::<bool>() { Label::Suspicious } else { Label::Legitimate })
            .collect();
        labels[0] = Label::Suspicious;
        labels[1] = Label::Legitimate;
        let a = auc(&scores, &labels).unwrap();
        assert!((a - mann_whitney(&scores, &labels)).abs() < 1e-9);
    }
}

#[test]
fn random_scores_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let labels: Vec<Label> = (0..1000)
        .map(|i| if i % 2 == 0 { Label::Suspicious } else { Label::Legitimate })
        .collect();
    let scores: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    let a = auc(&scores, &labels).unwrap();
    assert!((0.45..=0.55).contains(&a), "auc {a}");
}

#[test]
fn perfect_and_inverted_classifiers() {
    let labels = [Label::Suspicious, Label::Suspicious, Label::Legitimate, Label::Legitimate];
    let good = evaluate(&[2.0, 1.0, -1.0, -2.0], &labels).unwrap();
    assert_eq!((good.accuracy, good.f1, good.auc), (1.0, 1.0, Some(1.0)));
    assert_eq!(good.confusion_pct, [[100.0, 0.0], [0.0, 100.0]]);
    let bad = evaluate(&[-2.0, -1.0, 1.0, 2.0], &labels).unwrap();
    assert_eq!((bad.accuracy, bad.auc), (0.0, Some(0.0)));
}

#[test]
fn confusion_rows_sum_to_100() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(2..100);
        let mut labels: Vec<Label> = (0..n)
            .map(|_| if rng.random::<bool>() { Label::Suspicious } else { Label::Legitimate })
            .collect();
        labels[0] = Label::Suspicious;
        labels[1] = Label::Legitimate;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let m = evaluate(&scores, &labels).unwrap();
        for row in m.confusion_pct {
            assert!((row[0] + row[1] - 100.0).abs() <= 0.1);
        }
        assert!((0.0..=1.0).contains(&m.accuracy) && (0.0..=1.0).contains(&m.f1));
    }
}

#[test]
fn predictions_ignore_raw_input_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mask = SetMask::new(&[FeatureSet::A]);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 60;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let shift = if i % 2 == 0 { 1.0 } else { -1.0 };
            (0..mask.dim()).map(|_| shift + normal.sample(&mut rng)).collect()
        })
        .collect();
    let labels: Vec<Label> = (0..n)
        .map(|i| if i % 2 == 0 { Label::Suspicious } else { Label::Legitimate })
        .collect();
    let x = Matrix::from_rows(&rows);
    let scaled = Matrix::new(x.rows, x.cols, x.data.iter().map(|v| v * 250.0).collect());
    let params = SvmParams {
        c: 10.0,
        ..SvmParams::default()
    };
    let a = TrainedModel::fit(&x, &labels, mask, &params, 0, f64::INFINITY).unwrap();
    let b = TrainedModel::fit(&scaled, &labels, mask, &params, 0, f64::INFINITY).unwrap();
    for i in 0..n {
        let pa = predict(&a, x.row(i)).unwrap();
        let pb = predict(&b, scaled.row(i)).unwrap();
        assert_eq!(pa.label, pb.label);
    }
    assert!(predict(&a, &vec![0.0; mask.dim() + 1]).is_err());
}
