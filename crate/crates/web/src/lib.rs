//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each exported function has a plain Rust counterpart so the logic can be
//! tested natively; the wrappers only convert errors for JavaScript.

use nle_core::codebook::{self, kl_divergence, skl_divergence, squared_l2, Objective};
use nle_core::matrix::{argmax, Matrix};
use nle_core::nn::{self, Activation, Network, Optimizer, OutputBatch, TrainConfig};
use nle_core::pipeline::{self, soft_targets};
use nle_core::seed::{stage_seed, Stage};
use nle_core::synth::{self, ClassMeans, DomainShiftSpec, Shift};
use nle_core::{CentroidTrainConfig, Method, Result, PROB_FLOOR};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: nle_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// L2, KL and SKL centroids of a cloud of 3-class distributions.
///
/// `points` is a flat list of probability triples. Returns nine numbers:
/// the L2, KL and SKL centroids in that order.
pub fn centroids(points: &[f64]) -> Result<Vec<f64>> {
    let n = points.len() / 3;
    let batch = OutputBatch::new(Matrix::from_vec(n, 3, points.to_vec())?)?;
    let labels = vec![0; n];
    // any logits whose softmax is the point will do
    let logits: Vec<f64> = points.iter().map(|p| p.max(PROB_FLOOR).ln()).collect();
    let init = codebook::init_logits(&Matrix::from_vec(n, 3, logits)?, &labels)?;
    let cfg = CentroidTrainConfig::default();

    let mut out = Vec::with_capacity(9);
    out.extend_from_slice(codebook::learn_l2(&batch, &labels)?.lookup(0)?);
    for objective in [Objective::Kl, Objective::Skl] {
        let fit = codebook::fit_centroids(objective, &batch, &labels, &init, &cfg)?;
        out.extend_from_slice(fit.codebook.lookup(0)?);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = simplexCentroids)]
pub fn simplex_centroids(points: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    centroids(points).map_err(js)
}

/// `[KL(p||q), KL(q||p), SKL(p, q), squared L2]`.
pub fn divergence_table(p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    Ok(vec![
        kl_divergence(p, q)?,
        kl_divergence(q, p)?,
        skl_divergence(p, q)?,
        squared_l2(p, q)?,
    ])
}

#[wasm_bindgen]
pub fn divergences(p: &[f64], q: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    divergence_table(p, q).map_err(js)
}

#[derive(Debug, Serialize)]
pub struct DemoResult {
    pub source_error: f64,
    pub unadapted_error: f64,
    pub one_hot_error: f64,
    pub nle_skl_error: f64,
    /// SKL l-vectors, one per class.
    pub codebook: Vec<Vec<f64>>,
    /// `[x, y, label]` for each adaptation frame.
    pub adapt: Vec<[f64; 3]>,
    /// Bounding box `[xmin, xmax, ymin, ymax]` of the decision grids.
    pub bounds: [f64; 4],
    pub grid_size: usize,
    /// Row-major class decisions over the grid, y from top to bottom.
    pub one_hot_grid: Vec<u8>,
    pub nle_skl_grid: Vec<u8>,
}

pub const DEMO_GRID: usize = 48;

fn demo_task(rotation_deg: f64, translation: f64, seed: u64) -> DomainShiftSpec {
    DomainShiftSpec {
        num_classes: 3,
        feature_dim: 2,
        source_frames_per_class: 300,
        adapt_frames_per_class: 15,
        test_frames_per_class: 300,
        class_means: ClassMeans::Explicit(vec![
            vec![0.0, 2.2],
            vec![-1.9, -1.1],
            vec![1.9, -1.1],
        ]),
        class_std: 1.0,
        shift: Shift {
            translation: vec![translation, 0.0],
            rotation: rotation_deg.to_radians(),
            scale: 1.0,
        },
        seed,
    }
}

/// Three Gaussian classes in the plane, a shifted target with 15 labelled
/// frames per class, and the source model adapted by one-hot retraining and
/// by SKL l-vectors.
pub fn run_demo(rotation_deg: f64, translation: f64, seed: u64) -> Result<DemoResult> {
    let task = demo_task(rotation_deg, translation, stage_seed(seed, Stage::Data));
    task.validate()?;
    let data = synth::generate(&task)?;
    let init = Network::new(&[2, 16, 16, 3], Activation::Tanh, stage_seed(seed, Stage::SourceInit))?;
    let train_cfg = |epochs, batch_size, stage| TrainConfig {
        optimizer: Optimizer::Adam,
        learning_rate: 0.01,
        batch_size,
        max_epochs: epochs,
        convergence_tol: 1e-7,
        seed: stage_seed(seed, stage),
    };
    let source = pipeline::train_source(&init, &data.source, &train_cfg(20, 32, Stage::SourceTrain))?.network;

    let centroid_cfg = CentroidTrainConfig {
        seed: stage_seed(seed, Stage::Centroids),
        ..Default::default()
    };
    let cb = pipeline::distill(&source, &data.source, Method::Skl, &centroid_cfg)?;
    let adapt_cfg = train_cfg(80, 8, Stage::Adapt);
    let tgt = &data.target_adapt;
    let one_hot = nn::train(
        &source,
        tgt.features(),
        &OutputBatch::one_hot(tgt.labels(), 3)?,
        &adapt_cfg,
    )?
    .network;
    let nle = nn::train(&source, tgt.features(), &soft_targets(&cb, tgt.labels())?, &adapt_cfg)?.network;

    let error = |net: &Network, ds| pipeline::evaluate(net, ds).map(|e| e.error_rate);
    let test = &data.target_test;

    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for r in test.features().iter_rows() {
        xmin = xmin.min(r[0]);
        xmax = xmax.max(r[0]);
        ymin = ymin.min(r[1]);
        ymax = ymax.max(r[1]);
    }
    let grid = |net: &Network| -> Result<Vec<u8>> {
        let n = DEMO_GRID;
        let mut pts = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            let y = ymax - (ymax - ymin) * (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                pts.push(xmin + (xmax - xmin) * (j as f64 + 0.5) / n as f64);
                pts.push(y);
            }
        }
        let out = net.forward(&Matrix::from_vec(n * n, 2, pts)?)?;
        Ok(out.matrix().iter_rows().map(|r| argmax(r) as u8).collect())
    };

    Ok(DemoResult {
        source_error: error(&source, &data.source)?,
        unadapted_error: error(&source, test)?,
        one_hot_error: error(&one_hot, test)?,
        nle_skl_error: error(&nle, test)?,
        codebook: (0..3).map(|c| cb.lookup(c).map(<[f64]>::to_vec)).collect::<Result<_>>()?,
        adapt: tgt
            .features()
            .iter_rows()
            .zip(tgt.labels())
            .map(|(r, &y)| [r[0], r[1], y as f64])
            .collect(),
        bounds: [xmin, xmax, ymin, ymax],
        grid_size: DEMO_GRID,
        one_hot_grid: grid(&one_hot)?,
        nle_skl_grid: grid(&nle)?,
    })
}

/// JSON-encoded [`DemoResult`].
#[wasm_bindgen(js_name = adaptationDemo)]
pub fn adaptation_demo(rotation_deg: f64, translation: f64, seed: u32) -> std::result::Result<String, JsError> {
    let r = run_demo(rotation_deg, translation, seed as u64).map_err(js)?;
    serde_json::to_string(&r).map_err(|e| JsError::new(&e.to_string()))
}
