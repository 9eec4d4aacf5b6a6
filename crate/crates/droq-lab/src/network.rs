//! Sequential dense network over the layer kinds in [`crate::layers`].
//!
//! A train-mode forward records per-layer caches (the tape); `backward`
//! consumes the tape, accumulates parameter gradients, and returns the
//! gradient with respect to the network input. Eval-mode forwards are pure:
//! no randomness, no cache, no running-statistic updates.

use crate::error::{Error, Result};
use crate::layers::{Layer, LayerSpec, TrainOptions};
use crate::rng::RandomStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct Network {
    input_width: usize,
    output_width: usize,
    layers: Vec<Layer>,
    mode: Mode,
    tape_live: bool,
}

impl Network {
    /// Builds a network from layer specs, validating width compatibility.
    pub fn new(input_width: usize, specs: &[LayerSpec]) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::Config("network input width must be positive".into()));
        }
        let mut width = input_width;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            width = spec.output_width(width)?;
            layers.push(Layer::new(*spec));
        }
        Ok(Self {
            input_width,
            output_width: width,
            layers,
            mode: Mode::Train,
            tape_live: false,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Draws fresh parameters for every layer from `rng`.
    pub fn init_params(&mut self, rng: &mut RandomStream) {
        for layer in &mut self.layers {
            layer.init(rng);
        }
    }

    /// Exact trainable parameter count.
    pub fn count_params(&self) -> usize {
        self.layers.iter().map(|l| l.spec().param_count()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params().iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut().iter_mut())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Flattens every parameter gradient into one vector (zeros where a
    /// parameter has no gradient yet).
    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count_params());
        for p in self.params() {
            match p.grad() {
                Some(g) => out.extend_from_slice(g),
                None => out.resize(out.len() + p.len(), 0.0),
            }
        }
        out
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.cols() != self.input_width {
            return Err(Error::Config(format!(
                "network expects input width {}, got {}",
                self.input_width,
                input.cols()
            )));
        }
        input.ensure_finite("network input")
    }

    /// Mode-dispatching forward. Train mode records the tape and applies
    /// dropout with fresh masks; eval mode is pure and consumes no rng.
    pub fn forward(&mut self, input: &Tensor, rng: &mut RandomStream) -> Result<Tensor> {
        match self.mode {
            Mode::Train => self.forward_train(input, rng, TrainOptions::default()),
            Mode::Eval => self.forward_eval(input),
        }
    }

    /// Train-mode forward with per-call dropout/running-stat control.
    pub fn forward_train(
        &mut self,
        input: &Tensor,
        rng: &mut RandomStream,
        opts: TrainOptions,
    ) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward_train(&x, rng, opts)?;
        }
        self.tape_live = true;
        Ok(x)
    }

    /// Pure eval-mode forward: safe for concurrent readers.
    pub fn forward_eval(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward_eval(&x)?;
        }
        Ok(x)
    }

    /// Marks the recorded tape as consumed without freeing its buffers, so a
    /// stray backward is rejected while the allocations stay warm for the
    /// next forward.
    pub fn invalidate_tape(&mut self) {
        self.tape_live = false;
    }

    /// Backpropagates `output_grad` through the recorded tape, accumulating
    /// parameter gradients. Returns the gradient w.r.t. the network input.
    /// The tape is consumed: calling backward again without a new train-mode
    /// forward is a usage error.
    pub fn backward(&mut self, output_grad: &Tensor) -> Result<Tensor> {
        if !self.tape_live {
            return Err(Error::Usage(
                "backward requires a live tape from a train-mode forward".into(),
            ));
        }
        if output_grad.cols() != self.output_width {
            return Err(Error::Config(format!(
                "output grad width {} does not match network output width {}",
                output_grad.cols(),
                self.output_width
            )));
        }
        self.tape_live = false;
        let mut g = output_grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Smallest |pre-activation| across all ReLU layers in the last recorded
    /// forward, if any ReLU is present.
    pub fn min_relu_margin(&self) -> Option<f64> {
        self.layers
            .iter()
            .filter_map(|l| l.relu_input_margin())
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::NORM_EPS;

    fn ones_grad(rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| 1.0)
    }

    #[test]
    fn linear_identity_passthrough() {
        let mut net = Network::new(3, &[LayerSpec::Linear { input: 3, output: 3 }]).unwrap();
        // identity weight, zero bias
        for (i, p) in net.layers_mut()[0].params_mut().iter_mut().enumerate() {
            if i == 0 {
                for r in 0..3 {
                    p.set(r, r, 1.0);
                }
            }
        }
        let x = Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.0, 0.5, -0.5]).unwrap();
        let mut rng = RandomStream::new(0);
        let y = net.forward(&x, &mut rng).unwrap();
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn linear_backward_matches_hand_result() {
        // loss = sum(output): weight grad = column sums of input broadcast,
        // bias grad = batch size.
        let mut net = Network::new(2, &[LayerSpec::Linear { input: 2, output: 3 }]).unwrap();
        let x = Tensor::from_vec(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let mut rng = RandomStream::new(0);
        let y = net.forward(&x, &mut rng).unwrap();
        net.backward(&ones_grad(y.rows(), y.cols())).unwrap();
        let w_grad = net.layers()[0].params()[0].grad().unwrap();
        // column sums of x are 16 and 20; each output column sees the same.
        assert_eq!(w_grad, &[16.0, 16.0, 16.0, 20.0, 20.0, 20.0]);
        let b_grad = net.layers()[0].params()[1].grad().unwrap();
        assert_eq!(b_grad, &[4.0, 4.0, 4.0]);
    }

    #[test]
    fn dropout_rate_zero_and_eval_are_exact_identity() {
        let mut net = Network::new(4, &[LayerSpec::Dropout { rate: 0.0 }]).unwrap();
        let x = Tensor::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, -2.0, -3.0, -4.0]).unwrap();
        let mut rng = RandomStream::new(1);
        let before = rng.clone();
        let y = net.forward(&x, &mut rng).unwrap();
        assert_eq!(y.values(), x.values());
        // rate 0 must not consume randomness
        assert_eq!(rng, before);

        let mut net = Network::new(4, &[LayerSpec::Dropout { rate: 0.7 }]).unwrap();
        net.set_mode(Mode::Eval);
        let y = net.forward(&x, &mut rng).unwrap();
        assert_eq!(y.values(), x.values());
        assert_eq!(rng, before);
    }

    #[test]
    fn dropout_is_unbiased_under_monte_carlo() {
        // E_mask[dropout(x)] = x, checked within 3 standard errors and 1%.
        let rate = 0.5;
        let mut net = Network::new(4, &[LayerSpec::Dropout { rate }]).unwrap();
        let x = Tensor::from_vec(1, 4, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let mut rng = RandomStream::new(77);
        let draws = 100_000;
        let mut sums = [0.0; 4];
        for _ in 0..draws {
            let y = net.forward(&x, &mut rng).unwrap();
            for (s, v) in sums.iter_mut().zip(y.values()) {
                *s += v;
            }
        }
        for (j, s) in sums.iter().enumerate() {
            let mean = s / draws as f64;
            let xj = x.values()[j];
            // per-coordinate std of inverted dropout is |x|*sqrt(rate/(1-rate))
            let se = xj.abs() * (rate / (1.0 - rate)).sqrt() / (draws as f64).sqrt();
            assert!(
                (mean - xj).abs() < 3.0 * se,
                "coordinate {j}: mean {mean} vs {xj} (3se {})",
                3.0 * se
            );
            assert!((mean - xj).abs() < 0.01 * xj.abs());
        }
    }

    #[test]
    fn same_stream_gives_bit_identical_masks() {
        let mut net = Network::new(8, &[LayerSpec::Dropout { rate: 0.3 }]).unwrap();
        let x = Tensor::from_fn(4, 8, |r, c| (r * 8 + c) as f64 * 0.1 - 1.0);
        let rng0 = RandomStream::new(42);
        let y1 = net.forward(&x, &mut rng0.clone()).unwrap();
        let y2 = net.forward(&x, &mut rng0.clone()).unwrap();
        assert_eq!(y1.values(), y2.values());
    }

    #[test]
    fn layer_norm_constant_row_is_zeroed() {
        let mut net = Network::new(5, &[LayerSpec::LayerNorm { width: 5 }]).unwrap();
        let x = Tensor::from_vec(1, 5, vec![3.7; 5]).unwrap();
        let mut rng = RandomStream::new(0);
        let y = net.forward(&x, &mut rng).unwrap();
        for v in y.values() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn layer_norm_output_statistics() {
        let mut net = Network::new(16, &[LayerSpec::LayerNorm { width: 16 }]).unwrap();
        let mut rng = RandomStream::new(5);
        let x = Tensor::from_fn(3, 16, |_, _| rng.uniform(-4.0, 4.0));
        let y = net.forward(&x, &mut rng).unwrap();
        for r in 0..y.rows() {
            let row = y.row_slice(r);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-9, "row mean {mean}");
            assert!((1.0 - 1e-4..=1.0).contains(&var), "row var {var}");
        }
    }

    #[test]
    fn layer_norm_is_invariant_to_positive_affine_input_maps() {
        let mut net = Network::new(8, &[LayerSpec::LayerNorm { width: 8 }]).unwrap();
        let mut rng = RandomStream::new(9);
        for _ in 0..20 {
            let x = Tensor::from_fn(1, 8, |_, _| rng.uniform(-2.0, 2.0));
            let a = rng.uniform(0.5, 5.0);
            let b = rng.uniform(-3.0, 3.0);
            let ax = Tensor::from_fn(1, 8, |r, c| a * x.at(r, c) + b);
            let y1 = net.forward(&x, &mut rng).unwrap();
            let y2 = net.forward(&ax, &mut rng).unwrap();
            for (v1, v2) in y1.values().iter().zip(y2.values()) {
                // identical up to the epsilon inside the sqrt, whose effect
                // scales as eps/(a^2 var)
                assert!((v1 - v2).abs() < 1e-4, "{v1} vs {v2}");
            }
        }
    }

    #[test]
    fn batch_norm_eval_uses_running_stats_and_stays_pure() {
        let mut net = Network::new(3, &[LayerSpec::BatchNorm { width: 3 }]).unwrap();
        let mut rng = RandomStream::new(2);
        let x = Tensor::from_fn(8, 3, |_, _| rng.uniform(-1.0, 1.0));
        // a few train passes move the running stats
        for _ in 0..5 {
            net.forward(&x, &mut rng).unwrap();
        }
        net.set_mode(Mode::Eval);
        let before = net.layers()[0].buffers()[0].clone();
        let y1 = net.forward(&x, &mut rng.clone()).unwrap();
        let y2 = net.forward(&x, &mut rng.clone()).unwrap();
        assert_eq!(y1.values(), y2.values());
        assert_eq!(before.values(), net.layers()[0].buffers()[0].values());
        // eval output differs from train output since stats differ
        net.set_mode(Mode::Train);
        let y3 = net.forward(&x, &mut rng).unwrap();
        assert_ne!(y1.values(), y3.values());
    }

    #[test]
    fn group_norm_normalizes_each_half() {
        let mut net = Network::new(6, &[LayerSpec::GroupNorm { width: 6, groups: 2 }]).unwrap();
        let x = Tensor::from_vec(1, 6, vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]).unwrap();
        let mut rng = RandomStream::new(0);
        let y = net.forward(&x, &mut rng).unwrap();
        for g in 0..2 {
            let seg = &y.values()[g * 3..(g + 1) * 3];
            let mean = seg.iter().sum::<f64>() / 3.0;
            let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3, "group var {var}");
        }
    }

    #[test]
    fn group_norm_width_must_divide() {
        assert!(Network::new(5, &[LayerSpec::GroupNorm { width: 5, groups: 2 }]).is_err());
    }

    #[test]
    fn repeated_backward_is_rejected() {
        let mut net = Network::new(2, &[LayerSpec::Linear { input: 2, output: 1 }]).unwrap();
        let x = Tensor::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let mut rng = RandomStream::new(0);
        net.forward(&x, &mut rng).unwrap();
        net.backward(&ones_grad(1, 1)).unwrap();
        assert!(matches!(
            net.backward(&ones_grad(1, 1)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn eval_forward_leaves_no_tape() {
        let mut net = Network::new(2, &[LayerSpec::Linear { input: 2, output: 1 }]).unwrap();
        net.set_mode(Mode::Eval);
        let x = Tensor::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let mut rng = RandomStream::new(0);
        net.forward(&x, &mut rng).unwrap();
        assert!(net.backward(&ones_grad(1, 1)).is_err());
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let mut net = Network::new(2, &[LayerSpec::Linear { input: 2, output: 1 }]).unwrap();
        let x = Tensor::from_vec(1, 2, vec![f64::NAN, 0.0]).unwrap();
        let mut rng = RandomStream::new(0);
        assert!(matches!(
            net.forward(&x, &mut rng),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn shape_mismatch_is_a_config_error() {
        let mut net = Network::new(3, &[LayerSpec::Linear { input: 3, output: 1 }]).unwrap();
        let x = Tensor::zeros(1, 2);
        let mut rng = RandomStream::new(0);
        assert!(matches!(net.forward(&x, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn layer_norm_variance_uses_epsilon_floor() {
        // for inputs with var >> eps the normalized variance sits just below 1
        let mut net = Network::new(64, &[LayerSpec::LayerNorm { width: 64 }]).unwrap();
        let mut rng = RandomStream::new(8);
        let x = Tensor::from_fn(1, 64, |_, _| rng.uniform(-100.0, 100.0));
        let y = net.forward(&x, &mut rng).unwrap();
        let row = y.row_slice(0);
        let mean = row.iter().sum::<f64>() / 64.0;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
        assert!((1.0 - 1e-6..=1.0).contains(&var), "var {var}");
        let _ = NORM_EPS;
    }
}
