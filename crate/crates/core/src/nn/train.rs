use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{relative_change, Error, Result};

use super::loss::{logit_cross_entropy, logit_gradient};
use super::network::{Gradients, Network, Workspace};
use super::OutputBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Zero makes [`train`] a no-op.
    pub max_epochs: usize,
    /// Stop once the relative change of the epoch loss drops below this.
    pub convergence_tol: f64,
    /// Seeds the minibatch shuffle order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 100,
            convergence_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    /// Full-dataset loss before training (index 0) and after every epoch.
    pub loss_curve: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState {
    m: Gradients,
    v: Gradients,
    step: i32,
}

/// Minimizes the mean soft-target cross-entropy of `net` on
/// `(features, targets)` with minibatch SGD or Adam.
///
/// Every epoch visits the rows in a fresh permutation drawn from `cfg.seed`,
/// so the result is a pure function of the inputs.
pub fn train(
    net: &Network,
    features: &Matrix,
    targets: &OutputBatch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_shapes(net, features, targets)?;

    let mut net = net.clone();
    let n = features.rows();
    let initial = dataset_loss(&net, features, targets);
    let mut loss_curve = vec![initial];
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            network: net,
            loss_curve,
            epochs: 0,
            converged: false,
        });
    }
    if !initial.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            reason: format!("initial loss is {initial}"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut ws = Workspace::new(&net);
    let mut grads = Gradients::zeros_like(&net);
    let mut d_logits = vec![0.0; net.output_dim()];
    let mut adam = match cfg.optimizer {
        Optimizer::Adam => Some(AdamState {
            m: Gradients::zeros_like(&net),
            v: Gradients::zeros_like(&net),
            step: 0,
        }),
        Optimizer::Sgd => None,
    };

    let mut converged = false;
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                net.forward_sample(features.row(i), &mut ws);
                logit_gradient(ws.probs(), targets.row(i), &mut d_logits);
                net.backward_sample(&d_logits, scale, &mut ws, &mut grads);
            }
            match adam.as_mut() {
                Some(state) => adam_step(&mut net, &grads, state, cfg.learning_rate),
                None => sgd_step(&mut net, &grads, cfg.learning_rate),
            }
        }

        let loss = dataset_loss(&net, features, targets);
        if !loss.is_finite() || !net.all_params_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: format!("loss became {loss}"),
            });
        }
        let prev = *loss_curve.last().unwrap();
        loss_curve.push(loss);
        epochs = epoch;
        if relative_change(prev, loss) < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(TrainOutcome {
        network: net,
        loss_curve,
        epochs,
        converged,
    })
}

fn check_shapes(net: &Network, features: &Matrix, targets: &OutputBatch) -> Result<()> {
    if features.cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns but the network expects {}",
            features.cols(),
            net.input_dim()
        )));
    }
    if targets.rows() != features.rows() || targets.num_classes() != net.output_dim() {
        return Err(Error::Shape(format!(
            "targets are {}x{} but {} rows with {} classes are needed",
            targets.rows(),
            targets.num_classes(),
            features.rows(),
            net.output_dim()
        )));
    }
    if features.rows() == 0 {
        return Err(Error::Shape("empty training set".into()));
    }
    Ok(())
}

fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64) {
    for (p, g) in net.param_slices_mut().zip(grads.slices()) {
        for (pi, gi) in p.iter_mut().zip(g) {
            *pi -= lr * gi;
        }
    }
}

fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step);
    let params = net.param_slices_mut();
    let moments = state.m.slices_mut().zip(state.v.slices_mut());
    for ((p, g), (m, v)) in params.zip(grads.slices()).zip(moments) {
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Mean cross-entropy over all rows, from logits.
pub(crate) fn dataset_loss(net: &Network, features: &Matrix, targets: &OutputBatch) -> f64 {
    let mut ws = Workspace::new(net);
    let mut total = 0.0;
    for i in 0..features.rows() {
        net.forward_sample(features.row(i), &mut ws);
        total += logit_cross_entropy(ws.logits(), targets.row(i));
    }
    total / features.rows() as f64
}

/// Mean loss and its gradient over the full batch.
pub(crate) fn loss_and_gradient(
    net: &Network,
    features: &Matrix,
    targets: &OutputBatch,
) -> (f64, Gradients) {
    let mut ws = Workspace::new(net);
    let mut grads = Gradients::zeros_like(net);
    let mut d_logits = vec![0.0; net.output_dim()];
    let scale = 1.0 / features.rows() as f64;
    let mut total = 0.0;
    for i in 0..features.rows() {
        net.forward_sample(features.row(i), &mut ws);
        total += logit_cross_entropy(ws.logits(), targets.row(i));
        logit_gradient(ws.probs(), targets.row(i), &mut d_logits);
        net.backward_sample(&d_logits, scale, &mut ws, &mut grads);
    }
    (total * scale, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    /// Two Gaussian blobs far apart along the first axis; the hyperplane
    /// x0 = 0 separates every sample.
    fn separable_blobs(n_per_class: usize, seed: u64) -> (Matrix, Vec<usize>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            let center = if c == 0 { -4.0 } else { 4.0 };
            for _ in 0..n_per_class {
                rows.push(vec![
                    center + rng.random_range(-1.0..1.0),
                    rng.random_range(-3.0..3.0),
                ]);
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = separable_blobs(100, 3);
        // oracle: the construction guarantees a margin around x0 = 0
        assert!(x.iter_rows().zip(&y).all(|(r, &c)| (r[0] > 0.0) == (c == 1)));
        let targets = OutputBatch::one_hot(&y, 2).unwrap();
        let net = Network::new(&[2, 8, 2], Activation::Tanh, 5).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            max_epochs: 200,
            ..TrainConfig::default()
        };
        let out = train(&net, &x, &targets, &cfg).unwrap();
        let pred = out.network.predict(&x).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert!(acc >= 0.99, "accuracy {acc}");
        assert!(out.loss_curve.last().unwrap() <= &out.loss_curve[0]);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (x, y) = separable_blobs(10, 1);
        let net = Network::new(&[2, 4, 2], Activation::Relu, 2).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&net, &x, &OutputBatch::one_hot(&y, 2).unwrap(), &cfg).unwrap();
        assert_eq!(out.network, net);
        assert_eq!(out.epochs, 0);
        assert_eq!(out.loss_curve.len(), 1);
    }

    #[test]
    fn huge_learning_rate_never_returns_nan_weights() {
        let (x, y) = separable_blobs(50, 4);
        let net = Network::new(&[2, 16, 2], Activation::Relu, 3).unwrap();
        for optimizer in [Optimizer::Sgd, Optimizer::Adam] {
            let cfg = TrainConfig {
                optimizer,
                learning_rate: 1e3,
                batch_size: 8,
                max_epochs: 20,
                ..TrainConfig::default()
            };
            match train(&net, &x, &OutputBatch::one_hot(&y, 2).unwrap(), &cfg) {
                Ok(out) => {
                    assert!(out.network.all_params_finite());
                    assert!(out.loss_curve.iter().all(|l| l.is_finite()));
                }
                Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn full_batch_gradient_descent_is_monotone() {
        let (x, y) = separable_blobs(40, 8);
        let net = Network::new(&[2, 6, 2], Activation::Tanh, 4).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.05,
            batch_size: x.rows(),
            max_epochs: 300,
            convergence_tol: 1e-15,
            seed: 0,
        };
        let out = train(&net, &x, &OutputBatch::one_hot(&y, 2).unwrap(), &cfg).unwrap();
        for w in out.loss_curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn same_seed_same_network() {
        let (x, y) = separable_blobs(30, 5);
        let t = OutputBatch::one_hot(&y, 2).unwrap();
        let net = Network::new(&[2, 5, 2], Activation::Relu, 6).unwrap();
        let cfg = TrainConfig {
            max_epochs: 5,
            seed: 77,
            ..TrainConfig::default()
        };
        assert_eq!(train(&net, &x, &t, &cfg).unwrap(), train(&net, &x, &t, &cfg).unwrap());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (x, y) = separable_blobs(3, 5);
        let t = OutputBatch::one_hot(&y, 2).unwrap();
        let net = Network::new(&[2, 2], Activation::Relu, 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&net, &x, &t, &cfg), Err(Error::InvalidConfig(_))));
    }
}
