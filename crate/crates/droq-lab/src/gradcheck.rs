//! Finite-difference gradient checking.
//!
//! The checker relies only on forward passes, so it is an oracle that is
//! independent of the backward implementation it validates. Stochastic layers
//! are handled with common random numbers: every forward during a check runs
//! from a clone of the same stream state, which reproduces dropout masks
//! bit-for-bit across perturbed evaluations.

use crate::error::Result;
use crate::layers::TrainOptions;
use crate::network::Network;
use crate::rng::RandomStream;
use crate::tensor::Tensor;

/// Central-difference step matching the checking protocol used throughout.
pub const FD_STEP: f64 = 1e-6;

/// Relative error between an analytic and a finite-difference gradient, with
/// a small floor so near-zero gradient pairs compare absolutely.
pub fn relative_error(analytic: f64, fd: f64) -> f64 {
    let scale = analytic.abs().max(fd.abs()).max(1e-3);
    (analytic - fd).abs() / scale
}

fn sum_loss(net: &mut Network, input: &Tensor, rng: &RandomStream, opts: TrainOptions) -> Result<f64> {
    let out = net.forward_train(input, &mut rng.clone(), opts)?;
    Ok(out.values().iter().sum())
}

/// Checks analytic gradients of `loss = sum(network(input))` against central
/// finite differences over every trainable parameter. Returns the maximum
/// relative error. Dropout masks and batch statistics are held fixed across
/// all evaluations; running statistics are never updated.
pub fn max_relative_grad_error(
    net: &mut Network,
    input: &Tensor,
    rng: &RandomStream,
    h: f64,
) -> Result<f64> {
    let opts = TrainOptions {
        dropout_active: true,
        update_running_stats: false,
    };

    net.zero_grads();
    let out = net.forward_train(input, &mut rng.clone(), opts)?;
    let ones = Tensor::from_fn(out.rows(), out.cols(), |_, _| 1.0);
    net.backward(&ones)?;
    let analytic = net.flat_grads();

    let mut max_err = 0.0f64;
    let mut flat_idx = 0;
    let n_layers = net.layers().len();
    for li in 0..n_layers {
        let n_params = net.layers()[li].params().len();
        for pi in 0..n_params {
            let n = net.layers()[li].params()[pi].len();
            for k in 0..n {
                let original = net.layers()[li].params()[pi].values()[k];

                net.layers_mut()[li].params_mut()[pi].values_mut()[k] = original + h;
                let plus = sum_loss(net, input, rng, opts)?;
                net.layers_mut()[li].params_mut()[pi].values_mut()[k] = original - h;
                let minus = sum_loss(net, input, rng, opts)?;
                net.layers_mut()[li].params_mut()[pi].values_mut()[k] = original;

                let fd = (plus - minus) / (2.0 * h);
                max_err = max_err.max(relative_error(analytic[flat_idx], fd));
                flat_idx += 1;
            }
        }
    }
    debug_assert_eq!(flat_idx, analytic.len());
    Ok(max_err)
}
