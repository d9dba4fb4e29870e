//! Forward MLP, mirrored backward MLP, activations, losses, and output-layer
//! error signals.
//!
//! Hidden units are Tanh throughout. The forward output is elementwise
//! sigmoid paired with summed binary cross-entropy, so the output-layer error
//! is exactly `prediction - target`. The backward (generative) net ends in an
//! identity output paired with squared error, which makes its output error
//! exactly `reconstruction - input` as well.

use crate::numerics::{Mat, RngState, Scalar, ShapeError};

pub fn tanh_mat<T: Scalar>(a: &Mat<T>) -> Mat<T> {
    a.map(|v| v.tanh())
}

/// Tanh derivative expressed through the activation value: 1 - h^2.
pub fn tanh_prime_from_output<T: Scalar>(h: &Mat<T>) -> Mat<T> {
    h.map(|v| T::one() - v * v)
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn sigmoid_mat<T: Scalar>(a: &Mat<T>) -> Mat<T> {
    a.map(sigmoid)
}

/// Glorot-style uniform init bound for a weight matrix.
fn init_scale<T: Scalar>(rows: usize, cols: usize) -> T {
    T::from_f64((6.0 / (rows + cols) as f64).sqrt())
}

/// The feedforward classifier: Tanh hidden layers, sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardNet<T> {
    sizes: Vec<usize>,
    weights: Vec<Mat<T>>,
    biases: Vec<Mat<T>>,
}

impl<T: Scalar> ForwardNet<T> {
    /// Fresh net with uniform `±sqrt(6/(fan_in+fan_out))` weights and zero
    /// biases. `sizes` is `[n_x, n_1, .., n_L, n_y]` and needs at least one
    /// hidden layer.
    pub fn new(sizes: &[usize], rng: &mut RngState) -> Self {
        assert!(
            sizes.len() >= 3,
            "need at least [input, hidden, output] sizes"
        );
        assert!(
            sizes.iter().all(|&s| s > 0),
            "all layer sizes must be positive"
        );
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            weights.push(Mat::init_uniform(
                fan_out,
                fan_in,
                rng,
                init_scale(fan_out, fan_in),
            ));
            biases.push(Mat::zeros(fan_out, 1));
        }
        ForwardNet {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// Rebuild a net from explicit parameters, checking the shape chain.
    pub fn from_parts(
        sizes: Vec<usize>,
        weights: Vec<Mat<T>>,
        biases: Vec<Mat<T>>,
    ) -> Result<Self, ShapeError> {
        if sizes.len() < 3 || weights.len() != sizes.len() - 1 || biases.len() != weights.len() {
            return Err(ShapeError::Empty {
                op: "ForwardNet::from_parts",
            });
        }
        for (i, w) in weights.iter().enumerate() {
            if w.shape() != (sizes[i + 1], sizes[i]) {
                return Err(ShapeError::Mismatch {
                    op: "ForwardNet::from_parts",
                    left: w.shape(),
                    right: (sizes[i + 1], sizes[i]),
                });
            }
            if biases[i].shape() != (sizes[i + 1], 1) {
                return Err(ShapeError::Mismatch {
                    op: "ForwardNet::from_parts",
                    left: biases[i].shape(),
                    right: (sizes[i + 1], 1),
                });
            }
        }
        Ok(ForwardNet {
            sizes,
            weights,
            biases,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of hidden layers L.
    pub fn hidden_layers(&self) -> usize {
        self.sizes.len() - 2
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Mat<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Mat<T>] {
        &self.biases
    }

    pub fn weight_mut(&mut self, i: usize) -> &mut Mat<T> {
        &mut self.weights[i]
    }

    pub fn bias_mut(&mut self, i: usize) -> &mut Mat<T> {
        &mut self.biases[i]
    }

    /// Run the net on a D x b input block, caching everything the delta rules
    /// need.
    pub fn forward(&self, x: &Mat<T>) -> Result<ActivationTrace<T>, ShapeError> {
        if x.rows() != self.input_dim() {
            return Err(ShapeError::Mismatch {
                op: "forward",
                left: x.shape(),
                right: (self.input_dim(), x.cols()),
            });
        }
        let hidden_count = self.hidden_layers();
        let mut pre = Vec::with_capacity(hidden_count);
        let mut hidden = Vec::with_capacity(hidden_count);
        let mut h = x.clone();
        for i in 0..hidden_count {
            let a = self.weights[i]
                .matmul(&h)?
                .add_col_broadcast(&self.biases[i])?;
            h = tanh_mat(&a);
            pre.push(a);
            hidden.push(h.clone());
        }
        let output_pre = self.weights[hidden_count]
            .matmul(&h)?
            .add_col_broadcast(&self.biases[hidden_count])?;
        let output = sigmoid_mat(&output_pre);
        Ok(ActivationTrace {
            input: x.clone(),
            pre,
            hidden,
            output_pre,
            output,
        })
    }
}

/// Cached pre-activations and activations for one minibatch.
#[derive(Debug, Clone)]
pub struct ActivationTrace<T> {
    pub input: Mat<T>,
    /// Hidden pre-activations, one per hidden layer.
    pub pre: Vec<Mat<T>>,
    /// Hidden activations (tanh of `pre`).
    pub hidden: Vec<Mat<T>>,
    pub output_pre: Mat<T>,
    /// Sigmoid predictions, entries in (0, 1).
    pub output: Mat<T>,
}

impl<T: Scalar> ActivationTrace<T> {
    pub fn batch_size(&self) -> usize {
        self.input.cols()
    }
}

/// The mirrored generative net used by bidirectional feedback alignment:
/// maps targets back toward inputs through Tanh hidden layers and an
/// identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardNet<T> {
    sizes: Vec<usize>,
    weights: Vec<Mat<T>>,
    biases: Vec<Mat<T>>,
}

impl<T: Scalar> BackwardNet<T> {
    /// Mirror of a forward net with sizes `[n_x, .., n_y]`: this net runs
    /// `[n_y, n_L, .., n_1, n_x]`, so each weight is shaped like the
    /// transpose of its forward counterpart.
    pub fn mirror_of(forward_sizes: &[usize], rng: &mut RngState) -> Self {
        assert!(forward_sizes.len() >= 3);
        let sizes: Vec<usize> = forward_sizes.iter().rev().copied().collect();
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            weights.push(Mat::init_uniform(
                fan_out,
                fan_in,
                rng,
                init_scale(fan_out, fan_in),
            ));
            biases.push(Mat::zeros(fan_out, 1));
        }
        BackwardNet {
            sizes,
            weights,
            biases,
        }
    }

    pub fn from_parts(
        sizes: Vec<usize>,
        weights: Vec<Mat<T>>,
        biases: Vec<Mat<T>>,
    ) -> Result<Self, ShapeError> {
        let inner = ForwardNet::from_parts(sizes, weights, biases)?;
        Ok(BackwardNet {
            sizes: inner.sizes,
            weights: inner.weights,
            biases: inner.biases,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_layers(&self) -> usize {
        self.sizes.len() - 2
    }

    /// Dimensionality of the generated reconstruction (the forward input).
    pub fn recon_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn target_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn weights(&self) -> &[Mat<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Mat<T>] {
        &self.biases
    }

    pub fn weight_mut(&mut self, i: usize) -> &mut Mat<T> {
        &mut self.weights[i]
    }

    pub fn bias_mut(&mut self, i: usize) -> &mut Mat<T> {
        &mut self.biases[i]
    }

    /// Generate reconstructions from targets: Tanh hidden chain, identity
    /// output.
    pub fn generate(&self, y: &Mat<T>) -> Result<BackwardTrace<T>, ShapeError> {
        if y.rows() != self.target_dim() {
            return Err(ShapeError::Mismatch {
                op: "generate",
                left: y.shape(),
                right: (self.target_dim(), y.cols()),
            });
        }
        let hidden_count = self.hidden_layers();
        let mut pre = Vec::with_capacity(hidden_count);
        let mut hidden = Vec::with_capacity(hidden_count);
        let mut h = y.clone();
        for i in 0..hidden_count {
            let a = self.weights[i]
                .matmul(&h)?
                .add_col_broadcast(&self.biases[i])?;
            h = tanh_mat(&a);
            pre.push(a);
            hidden.push(h.clone());
        }
        let recon = self.weights[hidden_count]
            .matmul(&h)?
            .add_col_broadcast(&self.biases[hidden_count])?;
        Ok(BackwardTrace {
            target: y.clone(),
            pre,
            hidden,
            recon,
        })
    }
}

/// Cached backward-pass activations: target in, reconstruction out.
#[derive(Debug, Clone)]
pub struct BackwardTrace<T> {
    pub target: Mat<T>,
    pub pre: Vec<Mat<T>>,
    pub hidden: Vec<Mat<T>>,
    /// Identity-output reconstruction of the forward input.
    pub recon: Mat<T>,
}

/// Mean over samples of the summed elementwise binary cross-entropy.
///
/// Predictions are clamped to `[eps, 1-eps]` with eps = 1e-12 before the
/// logs.
pub fn bce_loss<T: Scalar>(prediction: &Mat<T>, target: &Mat<T>) -> Result<T, ShapeError> {
    if prediction.shape() != target.shape() {
        return Err(ShapeError::Mismatch {
            op: "bce_loss",
            left: prediction.shape(),
            right: target.shape(),
        });
    }
    let eps = T::from_f64(1e-12);
    let one = T::one();
    let total: T = prediction
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| {
            // branchy clamp so a NaN prediction surfaces as a NaN loss
            let p = if p < eps {
                eps
            } else if p > one - eps {
                one - eps
            } else {
                p
            };
            -(t * p.ln()) - (one - t) * (one - p).ln()
        })
        .sum();
    Ok(total / T::from_usize(prediction.cols()))
}

/// Mean over samples of half the squared reconstruction error.
pub fn mse_loss<T: Scalar>(recon: &Mat<T>, input: &Mat<T>) -> Result<T, ShapeError> {
    if recon.shape() != input.shape() {
        return Err(ShapeError::Mismatch {
            op: "mse_loss",
            left: recon.shape(),
            right: input.shape(),
        });
    }
    let half = T::from_f64(0.5);
    let total: T = recon
        .as_slice()
        .iter()
        .zip(input.as_slice())
        .map(|(&r, &x)| {
            let d = r - x;
            half * d * d
        })
        .sum();
    Ok(total / T::from_usize(recon.cols()))
}

/// Output-layer error signal `prediction - target`.
///
/// Exact for sigmoid+BCE at the forward output and for identity+MSE at the
/// backward output.
pub fn output_error<T: Scalar>(prediction: &Mat<T>, target: &Mat<T>) -> Result<Mat<T>, ShapeError> {
    if prediction.shape() != target.shape() {
        return Err(ShapeError::Mismatch {
            op: "output_error",
            left: prediction.shape(),
            right: target.shape(),
        });
    }
    prediction.sub(target)
}

/// Per-hidden-layer alignment loss `1 - sigmoid(<a, h>)`, averaged over batch
/// columns. Column k of `transported` pairs with column k of `hidden`.
pub fn bdfa_hidden_loss<T: Scalar>(transported: &Mat<T>, hidden: &Mat<T>) -> Result<T, ShapeError> {
    if transported.shape() != hidden.shape() {
        return Err(ShapeError::Mismatch {
            op: "bdfa_hidden_loss",
            left: transported.shape(),
            right: hidden.shape(),
        });
    }
    let mut total = T::zero();
    for k in 0..transported.cols() {
        let mut dot = T::zero();
        for i in 0..transported.rows() {
            dot += transported.get(i, k) * hidden.get(i, k);
        }
        total += T::one() - sigmoid(dot);
    }
    Ok(total / T::from_usize(transported.cols()))
}
