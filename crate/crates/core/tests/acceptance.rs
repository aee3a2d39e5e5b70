//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr (not
//! captured by the harness) and then asserts.
//!
//! Run with `cargo test -p nle-core --test acceptance`.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use nle_core::codebook::{
    self, centroid_gradient, centroid_objective, class_statistics, init_logits,
    learn_kl, learn_l2, learn_skl, skl_divergence, CentroidTrainConfig, Codebook,
    LogitTable, Objective,
};
use nle_core::matrix::{softmax, Matrix};
use nle_core::nn::{gradient_check, Activation, Network, OutputBatch, TrainConfig};
use nle_core::pipeline::{
    self, adapt_nle, compare, distill, retrain_one_hot, train_source, ts_learn, AdaptMethod,
    CompareResult, ExperimentSpec,
};
use nle_core::synth::{self, DomainShiftSpec};
use nle_core::Method;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance {id:>2}] {verdict} {name}: {detail}");
}

/// Softmax of uniform logits in `[-scale, scale]`, labels cycling through the
/// classes so every class is covered.
fn random_outputs(n: usize, c: usize, scale: f64, seed: u64) -> (OutputBatch, Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits: Vec<f64> = (0..n * c).map(|_| rng.random_range(-scale..scale)).collect();
    let logits = Matrix::from_vec(n, c, logits).unwrap();
    let probs: Vec<f64> = logits.iter_rows().flat_map(softmax).collect();
    let labels = (0..n).map(|i| i % c).collect();
    (
        OutputBatch::new(Matrix::from_vec(n, c, probs).unwrap()).unwrap(),
        logits,
        labels,
    )
}

fn class_rows<'a>(out: &'a OutputBatch, labels: &'a [usize], k: usize) -> impl Iterator<Item = &'a [f64]> {
    (0..out.rows()).filter(move |&i| labels[i] == k).map(move |i| out.row(i))
}

fn mean_divergence(f: fn(&[f64], &[f64]) -> nle_core::Result<f64>, e: &[f64], rows: &[&[f64]]) -> f64 {
    rows.iter().map(|o| f(e, o).unwrap()).sum::<f64>() / rows.len() as f64
}

#[test]
fn c01_normalization() {
    let start = Instant::now();
    let (out, logits, labels) = random_outputs(2000, 10, 4.0, 1);
    let init = init_logits(&logits, &labels).unwrap();
    let cfg = CentroidTrainConfig::default();
    let books = [
        learn_l2(&out, &labels).unwrap(),
        learn_kl(&out, &labels, &init, &cfg).unwrap(),
        learn_skl(&out, &labels, &init, &cfg).unwrap(),
        Codebook::floored_one_hot(10),
    ];
    // also through a randomly initialised network
    let net = Network::new(&[5, 16, 10], Activation::Tanh, 3).unwrap();
    let task = DomainShiftSpec {
        num_classes: 10,
        feature_dim: 5,
        shift: nle_core::Shift::identity(5),
        ..DomainShiftSpec::default_task()
    };
    let src = synth::generate(&task).unwrap().source;
    let distilled: Vec<Codebook> = [Method::L2, Method::Kl, Method::Skl]
        .into_iter()
        .map(|m| distill(&net, &src, m, &cfg).unwrap())
        .collect();

    let mut worst_sum = 0.0f64;
    let mut min_entry = f64::MAX;
    for cb in books.iter().chain(&distilled) {
        for c in 0..10 {
            let row = cb.lookup(c).unwrap();
            worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
            min_entry = row.iter().fold(min_entry, |m, &v| m.min(v));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = min_entry > 0.0 && worst_sum <= 1e-9 && secs < 10.0;
    report(1, "normalization", pass, &format!(
        "min entry {min_entry:.3e}, max |sum-1| {worst_sum:.3e}, {secs:.2}s"
    ));
    assert!(pass);
}

#[test]
fn c02_l2_exactness() {
    let (out, _, labels) = random_outputs(10_000, 10, 3.0, 2);
    let cb = learn_l2(&out, &labels).unwrap();
    let mut identical = true;
    for k in 0..10 {
        // pass one counts, pass two sums in row order, then a single division
        let count = labels.iter().filter(|&&y| y == k).count() as f64;
        let mut sum = [0.0f64; 10];
        for row in class_rows(&out, &labels, k) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        let expected: Vec<f64> = sum.iter().map(|s| s / count).collect();
        identical &= cb
            .lookup(k)
            .unwrap()
            .iter()
            .zip(&expected)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    report(2, "L2 centroid exactness", identical, "10 classes, 1e4 frames, bitwise comparison");
    assert!(identical);
}

fn geometric_mean(rows: &[&[f64]]) -> Vec<f64> {
    let c = rows[0].len();
    let g: Vec<f64> = (0..c)
        .map(|j| (rows.iter().map(|r| r[j].ln()).sum::<f64>() / rows.len() as f64).exp())
        .collect();
    let z: f64 = g.iter().sum();
    g.into_iter().map(|v| v / z).collect()
}

#[test]
fn c03_kl_oracle() {
    let start = Instant::now();
    let cfg = CentroidTrainConfig::default();
    let mut worst = 0.0f64;
    let mut instances = 0;
    for seed in 0..24u64 {
        let c = 2 + (seed as usize % 4);
        let frames = 20 + (seed as usize * 37) % 181;
        let (out, logits, labels) = random_outputs(frames * c, c, 3.0, 100 + seed);
        // from the exact initial point and from the uniform distribution
        let inits = [
            init_logits(&logits, &labels).unwrap(),
            LogitTable::new(Matrix::zeros(c, c), vec![true; c]).unwrap(),
        ];
        for init in &inits {
            let cb = learn_kl(&out, &labels, init, &cfg).unwrap();
            for k in 0..c {
                let rows: Vec<&[f64]> = class_rows(&out, &labels, k).collect();
                let oracle = geometric_mean(&rows);
                for (a, b) in cb.lookup(k).unwrap().iter().zip(&oracle) {
                    worst = worst.max((a - b).abs());
                }
            }
            instances += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-4 && secs < 30.0;
    report(3, "KL centroid oracle", pass, &format!(
        "{instances} instances, max |e - geo| {worst:.2e}, {secs:.2}s"
    ));
    assert!(pass);
}

#[test]
fn c04_skl_oracle() {
    let cfg = CentroidTrainConfig::default();
    let mut worst_grid = 0.0f64;
    for seed in 0..10u64 {
        let (out, logits, labels) = random_outputs(2 * 60, 2, 3.0, 200 + seed);
        let init = init_logits(&logits, &labels).unwrap();
        let cb = learn_skl(&out, &labels, &init, &cfg).unwrap();
        for k in 0..2 {
            let rows: Vec<&[f64]> = class_rows(&out, &labels, k).collect();
            let best = (1..1000)
                .map(|i| i as f64 * 1e-3)
                .min_by(|&a, &b| {
                    let fa = mean_divergence(skl_divergence, &[a, 1.0 - a], &rows);
                    let fb = mean_divergence(skl_divergence, &[b, 1.0 - b], &rows);
                    fa.total_cmp(&fb)
                })
                .unwrap();
            let e = cb.lookup(k).unwrap();
            worst_grid = worst_grid.max((e[0] - best).abs()).max((e[1] - (1.0 - best)).abs());
        }
    }

    let mut three_class_ok = true;
    let mut margin = f64::MAX;
    for seed in 0..10u64 {
        let (out, logits, labels) = random_outputs(3 * 80, 3, 3.0, 300 + seed);
        let init = init_logits(&logits, &labels).unwrap();
        let cb = learn_skl(&out, &labels, &init, &cfg).unwrap();
        for k in 0..3 {
            let rows: Vec<&[f64]> = class_rows(&out, &labels, k).collect();
            let arith: Vec<f64> = (0..3)
                .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
                .collect();
            let geo = geometric_mean(&rows);
            let at = |e: &[f64]| mean_divergence(skl_divergence, e, &rows);
            let learned = at(cb.lookup(k).unwrap());
            three_class_ok &= learned <= at(&arith) && learned <= at(&geo);
            margin = margin.min(at(&arith).min(at(&geo)) - learned);
        }
    }
    let pass = worst_grid <= 2e-3 && three_class_ok;
    report(4, "SKL centroid oracle", pass, &format!(
        "2-class max |e - grid| {worst_grid:.2e}; 3-class min margin over mean/geo {margin:.2e}"
    ));
    assert!(pass);
}

fn centroid_fd_error(objective: Objective, z: &[f64], stats: &codebook::ClassStats) -> f64 {
    let analytic = centroid_gradient(objective, z, stats);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for j in 0..z.len() {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let numeric = (centroid_objective(objective, &zp, stats) - centroid_objective(objective, &zm, stats)) / (2.0 * h);
        let denom = analytic[j].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    worst
}

#[test]
fn c05_gradient_fidelity() {
    let mut worst = [0.0f64; 3];
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let (out, _, labels) = random_outputs(4 * 30, 4, 2.0, 500 + seed);
        let stats = class_statistics(&out, &labels).unwrap();
        for s in &stats {
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            worst[0] = worst[0].max(centroid_fd_error(Objective::Kl, &z, s));
            worst[1] = worst[1].max(centroid_fd_error(Objective::Skl, &z, s));
        }

        let net = Network::new(&[3, 7, 5, 4], Activation::Tanh, 600 + seed).unwrap();
        let x: Vec<f64> = (0..12 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::from_vec(12, 3, x).unwrap();
        let (soft, _, _) = random_outputs(12, 4, 1.5, 700 + seed);
        worst[2] = worst[2].max(gradient_check(&net, &x, &soft, 1e-5).unwrap());
        let hard = OutputBatch::one_hot(&(0..12).map(|i| i % 4).collect::<Vec<_>>(), 4).unwrap();
        worst[2] = worst[2].max(gradient_check(&net, &x, &hard, 1e-5).unwrap());
    }
    let pass = worst.iter().all(|&w| w < 1e-5);
    report(5, "gradient fidelity", pass, &format!(
        "10 seeds; max rel err KL {:.2e}, SKL {:.2e}, soft CE {:.2e}",
        worst[0], worst[1], worst[2]
    ));
    assert!(pass);
}

#[test]
fn c06_one_hot_degeneracy() {
    let task = DomainShiftSpec {
        source_frames_per_class: 200,
        adapt_frames_per_class: 40,
        test_frames_per_class: 100,
        ..DomainShiftSpec::default_task()
    }
    .with_seed(6);
    let data = synth::generate(&task).unwrap();
    let init = Network::new(&[8, 24, 10], Activation::Relu, 7).unwrap();
    let cfg = TrainConfig {
        max_epochs: 20,
        batch_size: 32,
        learning_rate: 3e-3,
        seed: 8,
        ..Default::default()
    };
    let source = train_source(&init, &data.source, &cfg).unwrap().network;
    let nle = adapt_nle(&source, &data.target_adapt, &Codebook::floored_one_hot(10), &cfg)
        .unwrap()
        .training;
    let oh = retrain_one_hot(&source, &data.target_adapt, &cfg).unwrap();

    let worst = nle
        .loss_curve
        .iter()
        .zip(&oh.loss_curve)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let a = pipeline::evaluate(&nle.network, &data.target_test).unwrap();
    let b = pipeline::evaluate(&oh.network, &data.target_test).unwrap();
    let same_len = nle.loss_curve.len() == oh.loss_curve.len();
    let pass = same_len && worst <= 1e-6 && a.decisions == b.decisions;
    report(6, "one-hot degeneracy", pass, &format!(
        "{} epochs, max per-epoch loss gap {worst:.2e}, decisions identical: {}",
        oh.epochs,
        a.decisions == b.decisions
    ));
    assert!(pass);
}

struct DefaultRun {
    result: CompareResult,
    secs: f64,
}

/// The default task over ten seeds, shared by criteria 7 and 8.
fn default_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let methods = [
            AdaptMethod::Unadapted,
            AdaptMethod::OneHot,
            AdaptMethod::NleL2,
            AdaptMethod::NleKl,
            AdaptMethod::NleSkl,
        ];
        let spec = ExperimentSpec::default();
        assert_eq!(spec.num_seeds, 10);
        let start = Instant::now();
        let result = compare(&methods, &spec).unwrap();
        DefaultRun { result, secs: start.elapsed().as_secs_f64() }
    })
}

fn mean_of(run: &DefaultRun, method: &str) -> f64 {
    run.result
        .summaries
        .iter()
        .find(|s| s.method == method)
        .unwrap()
        .mean_error
}

#[test]
fn c07_table_ordering() {
    let run = default_run();
    let [un, oh, skl] = ["unadapted", "one_hot", "nle_skl"].map(|m| mean_of(run, m));
    let reduction = 100.0 * (oh - skl) / oh;
    let pass = un > oh && oh >= skl && reduction > 0.0 && run.secs < 600.0;
    report(7, "directional ordering", pass, &format!(
        "unadapted {un:.4} > one_hot {oh:.4} >= nle_skl {skl:.4}; reduction {reduction:.2}%; {:.0}s",
        run.secs
    ));
    assert!(pass);
}

#[test]
fn c08_skl_best() {
    let run = default_run();
    let [l2, kl, skl] = ["nle_l2", "nle_kl", "nle_skl"].map(|m| mean_of(run, m));
    let pass = skl <= l2 + 0.005 && skl <= kl + 0.005;
    report(8, "SKL-best trend", pass, &format!(
        "nle_l2 {l2:.4}, nle_kl {kl:.4}, nle_skl {skl:.4} (slack 0.005)"
    ));
    assert!(pass);
}

#[test]
fn c09_lookup_cost() {
    let task = DomainShiftSpec::default_task().with_seed(9);
    let paired = synth::generate_paired(&task).unwrap();
    let spec = ExperimentSpec::default();
    let dims = spec.architecture.layer_dims(task.feature_dim, task.num_classes);
    let net = Network::new(&dims, spec.architecture.activation, 10).unwrap();
    let cb = Codebook::floored_one_hot(task.num_classes);
    // zero epochs: only the target construction is timed
    let cfg = TrainConfig { max_epochs: 0, ..Default::default() };

    let mut lookup = Vec::new();
    let mut forward = Vec::new();
    for _ in 0..7 {
        lookup.push(adapt_nle(&net, &paired.target, &cb, &cfg).unwrap().lookup_s);
        forward.push(
            ts_learn(&net, &net, &paired.source_features, paired.target.features(), &cfg)
                .unwrap()
                .teacher_forward_s,
        );
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (l, f) = (median(&mut lookup), median(&mut forward));
    let pass = l < 0.1 * f;
    report(9, "adaptation cost", pass, &format!(
        "{} frames: lookup {:.1}us vs teacher forward {:.1}us ({:.2}%)",
        paired.target.len(),
        l * 1e6,
        f * 1e6,
        100.0 * l / f
    ));
    assert!(pass);
}

#[test]
fn c10_determinism() {
    let mut spec = ExperimentSpec::default();
    spec.task.source_frames_per_class = 150;
    spec.task.adapt_frames_per_class = 30;
    spec.task.test_frames_per_class = 60;
    spec.architecture.hidden = vec![16];
    spec.source_train.max_epochs = 4;
    spec.adapt_train.max_epochs = 3;
    spec.num_seeds = 3;
    spec.master_seed = 42;
    let csv = |threads| {
        let spec = ExperimentSpec { threads, ..spec.clone() };
        let r = compare(&AdaptMethod::ALL, &spec).unwrap();
        let mut buf = Vec::new();
        pipeline::write_csv(&mut buf, &r.reports, &r.summaries).unwrap();
        buf
    };
    let first = csv(0);
    let second = csv(0);
    let serial = csv(1);
    let pass = first == second && first == serial;
    report(10, "determinism", pass, &format!(
        "{} CSV bytes; repeat identical: {}; serial identical: {}",
        first.len(),
        first == second,
        first == serial
    ));
    assert!(pass);
}
