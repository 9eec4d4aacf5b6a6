//! Finite-difference validation of the autodiff core on the full dropout
//! Q-function stack (Linear -> Dropout -> LayerNorm -> ReLU, twice, then
//! Linear), with dropout masks held fixed by common random numbers.
//!
//! Run with: cargo run --example gradient_check

use droq_lab::gradcheck::{max_relative_grad_error, FD_STEP};
use droq_lab::layers::LayerSpec;
use droq_lab::network::Network;
use droq_lab::rng::RandomStream;
use droq_lab::tensor::Tensor;

fn main() {
    let w = 12;
    let specs = [
        LayerSpec::Linear { input: 6, output: w },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::LayerNorm { width: w },
        LayerSpec::Relu,
        LayerSpec::Linear { input: w, output: w },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::LayerNorm { width: w },
        LayerSpec::Relu,
        LayerSpec::Linear { input: w, output: 1 },
    ];
    let mut rng = RandomStream::new(2024);
    let mut net = Network::new(6, &specs).unwrap();
    net.init_params(&mut rng);
    let input = Tensor::from_fn(8, 6, |_, _| rng.uniform(-1.0, 1.0));
    let mask_stream = rng.split();

    let err = max_relative_grad_error(&mut net, &input, &mask_stream, FD_STEP).unwrap();
    println!(
        "max relative error, analytic vs central differences over {} parameters: {err:.3e}",
        net.count_params()
    );
    assert!(err < 1e-4);
    println!("gradient check passed (tolerance 1e-4)");
}
