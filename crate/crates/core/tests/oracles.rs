//! Native algorithms checked against independent brute-force references.

use cpsflow::data::{Column, Dataset};
use cpsflow::learners::{fit_linear, fit_tree, IncrementalLearner, IncrementalLinear, Model, Node};
use cpsflow::metrics::{self, Metric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(prefix: &str, columns: &[Vec<f64>]) -> Dataset {
    Dataset::new(
        columns
            .iter()
            .enumerate()
            .map(|(j, c)| (format!("{prefix}{j}"), Column::from(c.clone())))
            .collect(),
    )
    .unwrap()
}

fn target(values: Vec<f64>) -> Dataset {
    Dataset::new(vec![("y", Column::from(values))]).unwrap()
}

mod naive {
    pub fn mae(p: &[f64], a: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..p.len() {
            s += (p[i] - a[i]).abs();
        }
        s / p.len() as f64
    }

    pub fn mse(p: &[f64], a: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..p.len() {
            s += (p[i] - a[i]) * (p[i] - a[i]);
        }
        s / p.len() as f64
    }

    pub fn max_error(p: &[f64], a: &[f64]) -> f64 {
        let mut m = 0.0;
        for i in 0..p.len() {
            let d = (p[i] - a[i]).abs();
            if d > m {
                m = d;
            }
        }
        m
    }

    pub fn r2(p: &[f64], a: &[f64]) -> f64 {
        let mut s = 0.0;
        for v in a {
            s += v;
        }
        let mean = s / a.len() as f64;
        let (mut tot, mut res) = (0.0, 0.0);
        for i in 0..a.len() {
            tot += (a[i] - mean) * (a[i] - mean);
            res += (a[i] - p[i]) * (a[i] - p[i]);
        }
        1.0 - res / tot
    }

    pub fn counts(p: &[f64], a: &[f64]) -> (f64, f64, f64, f64) {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for i in 0..p.len() {
            if p[i] == 1.0 && a[i] == 1.0 {
                tp += 1;
            } else if p[i] == 1.0 {
                fp += 1;
            } else if a[i] == 1.0 {
                fn_ += 1;
            } else {
                tn += 1;
            }
        }
        (tp as f64, fp as f64, fn_ as f64, tn as f64)
    }

    pub fn accuracy(p: &[f64], a: &[f64]) -> f64 {
        let (tp, fp, fn_, tn) = counts(p, a);
        (tp + tn) / (tp + fp + fn_ + tn)
    }

    pub fn precision(p: &[f64], a: &[f64]) -> f64 {
        let (tp, fp, _, _) = counts(p, a);
        if tp + fp == 0.0 {
            0.0
        } else {
            tp / (tp + fp)
        }
    }

    pub fn recall(p: &[f64], a: &[f64]) -> f64 {
        let (tp, _, fn_, _) = counts(p, a);
        if tp + fn_ == 0.0 {
            0.0
        } else {
            tp / (tp + fn_)
        }
    }

    pub fn f_beta(p: &[f64], a: &[f64], beta: f64) -> f64 {
        let pr = precision(p, a);
        let rc = recall(p, a);
        if pr == 0.0 && rc == 0.0 {
            return 0.0;
        }
        (1.0 + beta * beta) * pr * rc / (beta * beta * pr + rc)
    }
}

#[test]
fn metrics_match_naive_loops_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        if n == 1 {
            a[0] = p[0];
        }
        assert_eq!(metrics::mae(&p, &a).unwrap().to_bits(), naive::mae(&p, &a).to_bits());
        assert_eq!(metrics::mse(&p, &a).unwrap().to_bits(), naive::mse(&p, &a).to_bits());
        assert_eq!(metrics::max_error(&p, &a).unwrap().to_bits(), naive::max_error(&p, &a).to_bits());
        if n > 1 {
            assert_eq!(metrics::r2(&p, &a).unwrap().to_bits(), naive::r2(&p, &a).to_bits());
        }

        let pb: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let ab: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let beta = rng.gen_range(0.1..4.0);
        assert_eq!(metrics::accuracy(&pb, &ab).unwrap().to_bits(), naive::accuracy(&pb, &ab).to_bits());
        assert_eq!(
            metrics::precision(&pb, &ab).unwrap().value.to_bits(),
            naive::precision(&pb, &ab).to_bits()
        );
        assert_eq!(metrics::recall(&pb, &ab).unwrap().value.to_bits(), naive::recall(&pb, &ab).to_bits());
        assert_eq!(
            Metric::FBeta(beta).evaluate(&pb, &ab).unwrap().value.to_bits(),
            naive::f_beta(&pb, &ab, beta).to_bits()
        );
    }
}

#[test]
fn regression_metric_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let n = rng.gen_range(1..=30);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let mae = metrics::mae(&p, &a).unwrap();
        let mse = metrics::mse(&p, &a).unwrap();
        let max = metrics::max_error(&p, &a).unwrap();
        assert!(mae >= 0.0 && mse >= 0.0 && max >= 0.0);
        assert!(mae <= max * (1.0 + 1e-12));
        assert!(mae * mae <= mse * (1.0 + 1e-12));

        let c = rng.gen_range(-5.0..5.0);
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let as_: Vec<f64> = a.iter().map(|v| v + c).collect();
        assert!((metrics::mae(&ps, &as_).unwrap() - mae).abs() < 1e-9);
        assert!((metrics::mse(&ps, &as_).unwrap() - mse).abs() < 1e-8);
        assert!((metrics::max_error(&ps, &as_).unwrap() - max).abs() < 1e-9);

        let pb: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let ab: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let acc = metrics::accuracy(&pb, &ab).unwrap();
        assert!((acc - (1.0 - metrics::mae(&pb, &ab).unwrap())).abs() < 1e-12);
        let pr = metrics::precision(&pb, &ab).unwrap().value;
        let rc = metrics::recall(&pb, &ab).unwrap().value;
        if pr > 0.0 && rc > 0.0 {
            let f = metrics::f_beta(&pb, &ab, rng.gen_range(0.1..4.0)).unwrap().value;
            assert!(f >= pr.min(rc) - 1e-12 && f <= pr.max(rc) + 1e-12);
        }
    }
}

/// Exhaustive search over every feature and every threshold between
/// adjacent distinct values, scoring each split by direct two-pass SSE.
fn best_stump(features: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64, f64, f64, f64)> {
    fn sse(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum()
    }
    let mut best: Option<(usize, f64, f64, f64, f64)> = None;
    for (f, col) in features.iter().enumerate() {
        let mut values = col.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = (0..y.len()).filter(|&i| col[i] <= t).map(|i| y[i]).collect();
            let right: Vec<f64> = (0..y.len()).filter(|&i| col[i] > t).map(|i| y[i]).collect();
            let score = sse(&left) + sse(&right);
            if best.map_or(true, |b| score < b.2) {
                let lm = left.iter().sum::<f64>() / left.len() as f64;
                let rm = right.iter().sum::<f64>() / right.len() as f64;
                best = Some((f, t, score, lm, rm));
            }
        }
    }
    best
}

fn second_best_gap(features: &[Vec<f64>], y: &[f64], best: f64) -> f64 {
    // smallest score strictly distinct from the best one, by brute force
    let mut gap = f64::INFINITY;
    for col in features {
        let mut values = col.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut l, mut r) = (vec![], vec![]);
            for i in 0..y.len() {
                if col[i] <= t {
                    l.push(y[i])
                } else {
                    r.push(y[i])
                }
            }
            let s = |v: &Vec<f64>| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            };
            let score = s(&l) + s(&r);
            if score > best {
                gap = gap.min(score - best);
            }
        }
    }
    gap
}

#[test]
fn depth_one_tree_is_the_best_stump() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut compared = 0;
    for _ in 0..200 {
        let n = rng.gen_range(4..40);
        let p = rng.gen_range(1..4);
        let features: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| (rng.gen_range(-50.0f64..50.0) * 10.0).round() / 10.0).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let model = fit_tree(&dataset("f", &features), &target(y.clone()), 1, 1).unwrap();
        let oracle = best_stump(&features, &y).expect("random features have a split");
        let (f, t, score, lm, rm) = oracle;

        let rows: Vec<Vec<f64>> = (0..n).map(|i| features.iter().map(|c| c[i]).collect()).collect();
        let pred: Vec<f64> = rows.iter().map(|r| model.predict_row(r)).collect();
        let model_sse: f64 = pred.iter().zip(&y).map(|(p, a)| (p - a) * (p - a)).sum();
        assert!((model_sse - score).abs() <= 1e-9 * (1.0 + score), "{model_sse} vs {score}");

        if second_best_gap(&features, &y, score) > 1e-9 {
            compared += 1;
            match model.nodes()[0] {
                Node::Split { feature, threshold, .. } => {
                    assert_eq!(feature, f);
                    // same partition of the training rows
                    for v in &features[f] {
                        assert_eq!(*v <= threshold, *v <= t);
                    }
                }
                _ => panic!("expected a split"),
            }
            let leaves: Vec<f64> = model.leaves().map(|(v, _)| v).collect();
            assert!((leaves[0] - lm).abs() < 1e-9 && (leaves[1] - rm).abs() < 1e-9);
        }
    }
    assert!(compared > 150);
}

#[test]
fn ols_recovers_noiseless_generators() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let p = rng.gen_range(1..6);
        let n = rng.gen_range(p + 2..60);
        let w: Vec<f64> = (0..p).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b = rng.gen_range(-5.0..5.0);
        let x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| b + (0..p).map(|j| w[j] * x[j][i]).sum::<f64>()).collect();
        let m = fit_linear(&dataset("x", &x), &target(y)).unwrap();
        for (got, want) in m.weights().iter().zip(&w) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!((m.intercept() - b).abs() < 1e-8);
    }
}

#[test]
fn one_rls_pass_matches_batch_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let p = rng.gen_range(1..5);
        let n = rng.gen_range(20..200);
        let x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + (0..p).map(|j| (j as f64 - 1.5) * x[j][i]).sum::<f64>() + rng.gen_range(-0.5..0.5))
            .collect();
        let inputs = dataset("x", &x);
        let outputs = target(y);
        let ols = fit_linear(&inputs, &outputs).unwrap();
        let mut rls = IncrementalLinear::new(1.0, 1e-8).unwrap();
        let batch = rng.gen_range(1..n);
        let mut start = 0;
        while start < n {
            let end = (start + batch).min(n);
            rls.update(&inputs.slice_rows(start, end), &outputs.slice_rows(start, end)).unwrap();
            start = end;
        }
        let m = rls.finalize().unwrap();
        for (a, b) in m.weights().iter().zip(ols.weights()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((m.intercept() - ols.intercept()).abs() < 1e-6);
        assert!(rls.state().unwrap().is_symmetric(1e-9));
        let probe = inputs.slice_rows(0, 5);
        let (pa, pb) = (m.predict(&probe).unwrap(), ols.predict(&probe).unwrap());
        for (a, b) in pa.f64_column("y").unwrap().iter().zip(pb.f64_column("y").unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
