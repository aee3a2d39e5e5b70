use crate::matrix::Matrix;
use crate::{Error, Result};

use super::train::{dataset_loss, loss_and_gradient};
use super::{Network, OutputBatch};

const MAX_PARAMS: usize = 10_000;

/// Largest relative disagreement between the backpropagated gradient of the
/// mean soft-target cross-entropy and a central finite difference with step
/// `epsilon`, over every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn gradient_check(
    net: &Network,
    features: &Matrix,
    targets: &OutputBatch,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    if net.num_params() > MAX_PARAMS {
        return Err(Error::InvalidConfig(format!(
            "gradient check is limited to {MAX_PARAMS} parameters, network has {}",
            net.num_params()
        )));
    }
    if features.cols() != net.input_dim()
        || targets.rows() != features.rows()
        || targets.num_classes() != net.output_dim()
        || features.rows() == 0
    {
        return Err(Error::Shape("features, targets and network disagree".into()));
    }

    let (_, analytic) = loss_and_gradient(net, features, targets);
    let analytic = analytic.flatten();

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for l in 0..probe.layers().len() {
        for which in 0..2 {
            let len = {
                let layer = &probe.layers()[l];
                if which == 0 {
                    layer.weights.len()
                } else {
                    layer.biases.len()
                }
            };
            for i in 0..len {
                let original = param(&mut probe, l, which, i);
                *param_mut(&mut probe, l, which, i) = original + epsilon;
                let plus = dataset_loss(&probe, features, targets);
                *param_mut(&mut probe, l, which, i) = original - epsilon;
                let minus = dataset_loss(&probe, features, targets);
                *param_mut(&mut probe, l, which, i) = original;

                let numeric = (plus - minus) / (2.0 * epsilon);
                let a = analytic[k];
                let denom = a.abs().max(numeric.abs()).max(1e-12);
                worst = worst.max((a - numeric).abs() / denom);
                k += 1;
            }
        }
    }
    Ok(worst)
}

fn param(net: &mut Network, l: usize, which: usize, i: usize) -> f64 {
    *param_mut(net, l, which, i)
}

fn param_mut(net: &mut Network, l: usize, which: usize, i: usize) -> &mut f64 {
    let layer = &mut net.layers_mut()[l];
    if which == 0 {
        &mut layer.weights[i]
    } else {
        &mut layer.biases[i]
    }
}
