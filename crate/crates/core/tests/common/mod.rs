//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Brute-force CRQA result: (RR, DET, ENT, MaxL).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteCrqa {
    pub recurrent: usize,
    pub total: usize,
    pub rr: f64,
    pub det: f64,
    pub ent: f64,
    pub maxl: usize,
}

fn zscore(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    x.iter().map(|v| (v - m) / sd).collect()
}

/// Full recurrence plot as a boolean matrix, then line detection by looking
/// for line starts (recurrent cell whose up-left neighbour is not recurrent).
pub fn brute_crqa(x: &[f64], y: &[f64], dim: usize, delay: usize, radius: f64, min_line: usize) -> BruteCrqa {
    let (zx, zy) = (zscore(x), zscore(y));
    let span = (dim - 1) * delay;
    let nx = zx.len() - span;
    let ny = zy.len() - span;
    let plot: Vec<Vec<bool>> = (0..nx)
        .map(|i| {
            (0..ny)
                .map(|j| {
                    let d2: f64 = (0..dim).map(|k| (zx[i + k * delay] - zy[j + k * delay]).powi(2)).sum();
                    d2.sqrt() <= radius
                })
                .collect()
        })
        .collect();
    let recurrent = plot.iter().flatten().filter(|&&b| b).count();
    let mut lengths = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let starts = plot[i][j] && (i == 0 || j == 0 || !plot[i - 1][j - 1]);
            if starts {
                let mut l = 0;
                while i + l < nx && j + l < ny && plot[i + l][j + l] {
                    l += 1;
                }
                lengths.push(l);
            }
        }
    }
    let long: Vec<usize> = lengths.into_iter().filter(|&l| l >= min_line).collect();
    let on_lines: usize = long.iter().sum();
    let mut counts = std::collections::BTreeMap::new();
    for &l in &long {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let ent = counts
        .values()
        .map(|&c| {
            let p = c as f64 / long.len() as f64;
            -p * p.ln()
        })
        .sum::<f64>();
    BruteCrqa {
        recurrent,
        total: nx * ny,
        rr: recurrent as f64 / (nx * ny) as f64,
        det: if recurrent == 0 { 0.0 } else { on_lines as f64 / recurrent as f64 },
        ent: ent.max(0.0),
        maxl: long.iter().copied().max().unwrap_or(0),
    }
}

/// Log density of N(mean, cov) at `x` via a Cholesky factorization of a full
/// covariance matrix.
pub fn mvn_log_density(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let chol = cov.clone().cholesky().expect("positive definite covariance");
    let r = DVector::from_iterator(n, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol.l().solve_lower_triangular(&r).expect("invertible factor");
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (z.dot(&z) + log_det + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Lag-1 coupled pair: `y` follows `x` with the given coupling.
pub fn coupled_pair(seed: u64, len: usize, coupling: f64) -> (Vec<f64>, Vec<f64>) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut e = move || -> f64 { StandardNormal.sample(&mut rng) };
    let (mut x, mut y) = (vec![0.0; len], vec![0.0; len]);
    for t in 1..len {
        x[t] = 0.5 * x[t - 1] + e();
        y[t] = 0.3 * y[t - 1] + coupling * x[t - 1] + e();
    }
    (x, y)
}

use ctxmat::domain::{BehaviorFrame, ContextMatrix, DynamicsParams};
use ctxmat::features::{leader_strength, leader_switch_rate, relative_influence, summarize, Feature};
use ctxmat::inference::{log_likelihood, VarianceTable};
use ctxmat::metrics::{crqa, granger, CrqaConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: `Ok(detail)` or `Err(detail)`.
pub type Check = Result<String, String>;

/// All four CRQA metrics against the brute-force plot on random pairs.
pub fn check_crqa_oracle(pairs: usize) -> Check {
    let cfg = CrqaConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0A);
    let mut worst_ent = 0.0f64;
    let mut with_lines = 0;
    for k in 0..pairs {
        let len = rng.random_range(cfg.min_length()..=30);
        let len_y = if k % 3 == 0 { rng.random_range(cfg.min_length()..=30) } else { len };
        // alternate continuous and coarse-valued series so ties and long lines occur
        let mut draw = |n: usize| -> Vec<f64> {
            if k % 2 == 0 {
                (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
            } else {
                (0..n).map(|_| f64::from(rng.random_range(0..3u8))).collect()
            }
        };
        let (x, y) = (draw(len), draw(len_y));
        let got = match crqa(&x, &y, &cfg) {
            Ok(g) => g,
            Err(e) => return Err(format!("pair {k}: {e}")),
        };
        let want = brute_crqa(&x, &y, cfg.embed_dim, cfg.delay, cfg.radius, cfg.min_line);
        let points = (got.rr * want.total as f64).round() as usize;
        if points != want.recurrent || got.rr != want.rr || got.maxl != want.maxl {
            return Err(format!("pair {k}: RR/MaxL mismatch {got:?} vs {want:?}"));
        }
        if got.det != want.det {
            return Err(format!("pair {k}: DET {} vs {}", got.det, want.det));
        }
        let d = (got.ent - want.ent).abs();
        worst_ent = worst_ent.max(d);
        if d > 1e-12 {
            return Err(format!("pair {k}: ENT {} vs {}", got.ent, want.ent));
        }
        with_lines += usize::from(want.maxl > 0);
    }
    Ok(format!("{pairs} pairs ({with_lines} with lines), max ENT diff {worst_ent:.1e}"))
}

/// Log-likelihood against a full-covariance Cholesky evaluation, and the
/// multi-channel product property.
pub fn check_likelihood(cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11CE);
    let mut worst = 0.0f64;
    for k in 0..cases {
        let n = rng.random_range(1..=4usize);
        let h = rng.random_range(1..=3usize);
        let params = DynamicsParams {
            influence_scale: rng.random_range(0.1..1.0),
            decay: rng.random_range(0.0..1.0),
        };
        let c = ContextMatrix::new(n, (0..n * n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let prev: Vec<f64> = (0..n * h).map(|_| rng.random_range(-3.0..3.0)).collect();
        let obs: Vec<f64> = (0..n * h).map(|_| rng.random_range(-3.0..3.0)).collect();
        let var: Vec<f64> = (0..n * h).map(|_| rng.random_range(0.05..4.0)).collect();
        let table = VarianceTable::new(n, h, var.clone()).unwrap();
        let fp = BehaviorFrame::new(n, h, prev.clone()).unwrap();
        let fo = BehaviorFrame::new(n, h, obs.clone()).unwrap();
        let got = log_likelihood(&c, &fp, &fo, &table, &params).map_err(|e| e.to_string())?;

        let mut want = 0.0;
        let mut per_channel = 0.0;
        for ch in 0..h {
            let col = |v: &[f64]| -> Vec<f64> { (0..n).map(|a| v[a * h + ch]).collect() };
            let (p, o, s) = (col(&prev), col(&obs), col(&var));
            let mean: Vec<f64> = (0..n)
                .map(|i| {
                    let cb: f64 = (0..n).map(|j| c.get(i, j) * p[j]).sum();
                    params.influence_scale * cb - params.decay * p[i]
                })
                .collect();
            want += mvn_log_density(&o, &mean, &DMatrix::from_diagonal(&DVector::from_vec(s.clone())));

            let single = log_likelihood(
                &c,
                &BehaviorFrame::new(n, 1, p).unwrap(),
                &BehaviorFrame::new(n, 1, o).unwrap(),
                &VarianceTable::new(n, 1, s).unwrap(),
                &params,
            )
            .map_err(|e| e.to_string())?;
            per_channel += single;
        }
        let d = (got - want).abs();
        worst = worst.max(d);
        if d > 1e-12 {
            return Err(format!("case {k}: {got} vs closed form {want}"));
        }
        if got != per_channel {
            return Err(format!("case {k}: joint {got} != sum of channels {per_channel}"));
        }
    }
    Ok(format!("{cases} cases, max |log diff| {worst:.1e}, channel product exact"))
}

/// Direction and lag recovery on lag-1 coupled pairs.
pub fn check_granger(seeds: u64, coupling: f64, len: usize) -> Check {
    let (mut direction, mut lag1) = (0, 0);
    for s in 0..seeds {
        let (x, y) = coupled_pair(s, len, coupling);
        let g = granger(&x, &y).map_err(|e| format!("seed {s}: {e}"))?;
        direction += usize::from(g.gc_1to2 > g.gc_2to1);
        lag1 += usize::from(g.lag == 1);
    }
    let detail = format!("direction {direction}/{seeds}, lag 1 chosen {lag1}/{seeds}");
    if direction * 100 >= 95 * seeds as usize && lag1 * 100 >= 90 * seeds as usize {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn m2(e: [f64; 4]) -> ContextMatrix {
    ContextMatrix::new(2, e.to_vec()).unwrap()
}

/// The nine worked feature examples.
pub fn check_feature_examples() -> Check {
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: Option<f64>, want: f64| {
        if got != Some(want) {
            failures.push(format!("{name}: {got:?} != {want}"));
        }
    };
    expect("RI identity", relative_influence(&m2([1.0, 0.0, 0.0, 1.0])).ok(), 0.0);
    expect("RI swap", relative_influence(&m2([0.0, 1.0, 1.0, 0.0])).ok(), 1.0);
    expect("RI equal", relative_influence(&m2([0.5; 4])).ok(), 0.5);
    expect("LS pure leader", leader_strength(&m2([0.0, 1.0, 0.0, 0.0])).ok(), 1.0);
    expect("LS egalitarian", leader_strength(&m2([0.3, 0.7, 0.7, 0.3])).ok(), 0.0);
    // 0.3 and 0.1 are not binary fractions; 0.375 / 0.125 has the same ratio exactly
    expect("LS 3:1", leader_strength(&m2([0.0, 0.375, 0.125, 0.0])).ok(), 0.5);
    let ls = leader_strength(&m2([0.0, 0.3, 0.1, 0.0])).ok();
    expect("LS 0.3/0.1 within 2 ulp", ls.filter(|v| (v - 0.5).abs() <= 2.0 * f64::EPSILON).map(|_| 0.5), 0.5);
    let by_signs = |signs: &[i8]| -> Option<f64> {
        let series: Vec<ContextMatrix> = signs
            .iter()
            .map(|&s| if s > 0 { m2([0.0, 1.0, 0.5, 0.0]) } else { m2([0.0, 0.5, 1.0, 0.0]) })
            .collect();
        leader_switch_rate(&series, 0..series.len()).ok()
    };
    expect("switch ++++", by_signs(&[1, 1, 1, 1]), 0.0);
    expect("switch +-+-", by_signs(&[1, -1, 1, -1]), 1.0);
    expect("switch ++-+", by_signs(&[1, 1, -1, 1]), 2.0 / 3.0);
    if failures.is_empty() {
        Ok("9 examples exact (0.3/0.1 leader strength within 2 ulp)".into())
    } else {
        Err(failures.join("; "))
    }
}

/// Scale, sign and relabel invariance over random matrices.
pub fn check_feature_invariance(cases: u32) -> Check {
    use proptest::prelude::*;
    use proptest::test_runner::{Config, TestRunner};
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let entry = prop_oneof![Just(0.0), -10.0..10.0f64];
    let strategy = (
        proptest::array::uniform4(entry),
        prop_oneof![-100.0..-1e-3f64, 1e-3..100.0f64],
        0..4usize,
    );
    let result = runner.run(&strategy, |(e, lambda, flip)| {
        let c = m2(e);
        let scaled = c.scaled(lambda);
        let mut flipped_entries = e;
        flipped_entries[flip] = -flipped_entries[flip];
        let flipped = m2(flipped_entries);
        let swapped = c.relabeled(&[1, 0]).unwrap();
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        for f in [relative_influence, leader_strength] {
            let base = f(&c).ok();
            prop_assert!(close(base, f(&scaled).ok()), "scale");
            prop_assert!(close(base, f(&flipped).ok()), "sign");
            prop_assert!(close(base, f(&swapped).ok()), "relabel");
        }
        let (s, t) = (ctxmat::features::leader_sign(&c).unwrap(), ctxmat::features::leader_sign(&swapped).unwrap());
        prop_assert_eq!(s, -t);
        Ok(())
    });
    match result {
        Ok(()) => Ok(format!("{cases} random matrices")),
        Err(e) => Err(e.to_string()),
    }
}

/// Trial-mean relative influence of an alternating series.
pub fn alternating_trial_mean() -> Option<f64> {
    let series: Vec<ContextMatrix> = (0..8)
        .map(|k| if k % 2 == 0 { m2([0.0, 1.0, 1.0, 0.0]) } else { m2([1.0, 0.0, 0.0, 1.0]) })
        .collect();
    summarize(&series)
        .ok()?
        .get(Feature::RelativeInfluence, ctxmat::domain::AggregationSpec::TrialMean)
}
