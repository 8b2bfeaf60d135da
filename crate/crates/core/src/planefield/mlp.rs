use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Width of both hidden layers.
pub const HIDDEN_WIDTH: usize = 128;

/// Fully connected layer, `y = x W + b` with `W` stored `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Uniform in `[-1/sqrt(inputs), 1/sqrt(inputs)]` for weights and biases.
    pub fn random<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((inputs, outputs), || rng.gen_range(-bound..bound)),
            bias: Array1::from_shape_simple_fn(outputs, || rng.gen_range(-bound..bound)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// Three-layer perceptron: two ReLU hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDecoder {
    pub layers: [Linear; 3],
}

/// Activations cached by [`MlpDecoder::forward_trace`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub input: Array2<f64>,
    hidden1: Array2<f64>,
    hidden2: Array2<f64>,
    pub output: Array2<f64>,
}

/// Parameter gradients with the same shapes as the decoder.
pub type MlpGrad = MlpDecoder;

impl MlpDecoder {
    pub fn random<R: Rng>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            layers: [
                Linear::random(inputs, hidden, rng),
                Linear::random(hidden, hidden, rng),
                Linear::random(hidden, outputs, rng),
            ],
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            layers: [
                Linear::zeros(inputs, hidden),
                Linear::zeros(hidden, hidden),
                Linear::zeros(hidden, outputs),
            ],
        }
    }

    pub fn from_layers(layers: [Linear; 3]) -> Result<Self> {
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::invalid("bias length does not match layer width"));
            }
        }
        if layers[0].outputs() != layers[1].inputs() || layers[1].outputs() != layers[2].inputs() {
            return Err(Error::invalid("decoder layer shapes do not chain"));
        }
        Ok(Self { layers })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].outputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[2].outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weights then bias of each layer in order, row-major.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Rounds every parameter to the nearest `f32`, matching the stored form.
    pub fn round_to_f32(&mut self) {
        self.parameters_mut().for_each(|p| *p = f64::from(*p as f32));
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let h1 = self.layers[0].forward(x).mapv_into(relu);
        let h2 = self.layers[1].forward(&h1).mapv_into(relu);
        self.layers[2].forward(&h2)
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward(&x).into_raw_vec_and_offset().0
    }

    pub fn forward_trace(&self, x: Array2<f64>) -> MlpTrace {
        let hidden1 = self.layers[0].forward(&x).mapv_into(relu);
        let hidden2 = self.layers[1].forward(&hidden1).mapv_into(relu);
        let output = self.layers[2].forward(&hidden2);
        MlpTrace {
            input: x,
            hidden1,
            hidden2,
            output,
        }
    }

    /// Backpropagates `grad_output` (same shape as the trace output). Returns
    /// parameter gradients summed over the batch and the input gradient.
    pub fn backward(&self, trace: &MlpTrace, grad_output: &Array2<f64>) -> (MlpGrad, Array2<f64>) {
        let g3w = trace.hidden2.t().dot(grad_output);
        let g3b = grad_output.sum_axis(Axis(0));
        let mut d2 = grad_output.dot(&self.layers[2].weight.t());
        relu_mask(&mut d2, &trace.hidden2);

        let g2w = trace.hidden1.t().dot(&d2);
        let g2b = d2.sum_axis(Axis(0));
        let mut d1 = d2.dot(&self.layers[1].weight.t());
        relu_mask(&mut d1, &trace.hidden1);

        let g1w = trace.input.t().dot(&d1);
        let g1b = d1.sum_axis(Axis(0));
        let dx = d1.dot(&self.layers[0].weight.t());

        let grad = MlpDecoder {
            layers: [
                Linear { weight: g1w, bias: g1b },
                Linear { weight: g2w, bias: g2b },
                Linear { weight: g3w, bias: g3b },
            ],
        };
        (grad, dx)
    }

    /// Per-layer infinity-norm operator bound `max_out sum_in |W_io|`.
    pub fn layer_gains(&self) -> [f64; 3] {
        self.layers.each_ref().map(|l| {
            l.weight
                .axis_iter(Axis(1))
                .map(|col| col.iter().map(|w| w.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        })
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn relu_mask(grad: &mut Array2<f64>, activation: &Array2<f64>) {
    grad.zip_mut_with(activation, |g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}
