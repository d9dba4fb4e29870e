//! The five error-transport rules and the per-minibatch training step.
//!
//! All rules share one update convention: a delta carries the descent
//! direction including its minus sign, batch columns are summed (each sample
//! contributes a full per-sample step, matching the per-sample form of the
//! update equations), and the caller applies `w <- w + lr * delta`.
//!
//! Transport matrices (the fixed FA/DFA channels and the trainable BDFA
//! channels) carry no biases: they move error signals, they do not add to
//! them.

use std::fmt;
use std::str::FromStr;

use crate::network::{
    bce_loss, bdfa_hidden_loss, mse_loss, output_error, sigmoid, tanh_prime_from_output,
    ActivationTrace, BackwardNet, BackwardTrace, ForwardNet,
};
use crate::numerics::{Mat, RngState, Scalar, ShapeError};

/// The training algorithm: one value per error-transport rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Bp,
    Fa,
    Dfa,
    Bfa,
    Bdfa,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Bp, Algo::Fa, Algo::Dfa, Algo::Bfa, Algo::Bdfa];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Bp => "bp",
            Algo::Fa => "fa",
            Algo::Dfa => "dfa",
            Algo::Bfa => "bfa",
            Algo::Bdfa => "bdfa",
        }
    }

    /// Whether the rule trains its feedback channel.
    pub fn has_backward_phase(self) -> bool {
        matches!(self, Algo::Bfa | Algo::Bdfa)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bp" => Ok(Algo::Bp),
            "fa" => Ok(Algo::Fa),
            "dfa" => Ok(Algo::Dfa),
            "bfa" => Ok(Algo::Bfa),
            "bdfa" => Ok(Algo::Bdfa),
            other => Err(format!(
                "unknown algorithm '{other}' (expected bp|fa|dfa|bfa|bdfa)"
            )),
        }
    }
}

/// How BDFA turns its per-layer alignment losses into feedback updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BdfaUpdateMode {
    /// Exact gradient of the alignment loss `1 - sigmoid(<a, h>)`.
    #[default]
    Analytic,
    /// Vector reading of the written update: elementwise loss times target^T.
    Literal,
}

impl fmt::Display for BdfaUpdateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BdfaUpdateMode::Analytic => "analytic",
            BdfaUpdateMode::Literal => "literal",
        })
    }
}

impl FromStr for BdfaUpdateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(BdfaUpdateMode::Analytic),
            "literal" => Ok(BdfaUpdateMode::Literal),
            other => Err(format!(
                "unknown bdfa mode '{other}' (expected analytic|literal)"
            )),
        }
    }
}

/// Errors raised by the rules layer.
#[derive(Debug)]
pub enum RuleError {
    Shape(ShapeError),
    /// The supplied feedback channel does not fit the algorithm.
    ChannelMismatch {
        algo: Algo,
        channel: &'static str,
    },
    BadHyper(String),
}

impl fmt::Display for RuleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleError::Shape(e) => write!(f, "{e}"),
            RuleError::ChannelMismatch { algo, channel } => {
                write!(
                    f,
                    "algorithm '{algo}' cannot use a {channel} feedback channel"
                )
            }
            RuleError::BadHyper(msg) => write!(f, "bad hyperparameter: {msg}"),
        }
    }
}

impl std::error::Error for RuleError {}

impl From<ShapeError> for RuleError {
    fn from(e: ShapeError) -> Self {
        RuleError::Shape(e)
    }
}

/// Training hyperparameters shared by all rules.
#[derive(Debug, Clone, Copy)]
pub struct TrainHyper<T> {
    pub lr: T,
    /// Mixing weight for the BDFA backward target `y + alpha * prediction`.
    pub alpha: T,
    pub bdfa_mode: BdfaUpdateMode,
}

impl<T: Scalar> TrainHyper<T> {
    pub fn new(lr: T, alpha: T, bdfa_mode: BdfaUpdateMode) -> Result<Self, RuleError> {
        if lr <= T::zero() || !lr.is_finite() {
            return Err(RuleError::BadHyper(format!(
                "lr must be positive and finite, got {lr}"
            )));
        }
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(RuleError::BadHyper(format!(
                "alpha must be in [0, 1], got {alpha}"
            )));
        }
        Ok(TrainHyper {
            lr,
            alpha,
            bdfa_mode,
        })
    }
}

/// The error-transport channel paired with an algorithm.
///
/// Direct matrices are stored in forward layer order: `mats[l]` transports
/// into hidden layer `l` (0-based). Chain matrices likewise: `mats[l]` feeds
/// hidden layer `l` from layer `l+1` (or from the output for the top one).
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackChannel<T> {
    /// Exact transposes of the forward weights (BP).
    Transpose,
    /// Fixed random chain, layer to layer (FA).
    FixedChain(Vec<Mat<T>>),
    /// Fixed random output-to-layer matrices (DFA).
    FixedDirect(Vec<Mat<T>>),
    /// Trainable mirrored generative net (BFA).
    TrainedMirror(BackwardNet<T>),
    /// Trainable output-to-layer matrices (BDFA).
    TrainedDirect(Vec<Mat<T>>),
}

impl<T: Scalar> FeedbackChannel<T> {
    /// Build the channel an algorithm expects, with the same uniform init
    /// scheme the forward weights use. Fixed and trained channels are
    /// initialized identically so that trainability is the only difference
    /// between them.
    pub fn for_algo(algo: Algo, sizes: &[usize], rng: &mut RngState) -> Self {
        let hidden = sizes.len() - 2;
        let n_y = *sizes.last().unwrap();
        let glorot = |rows: usize, cols: usize, rng: &mut RngState| {
            let s = T::from_f64((6.0 / (rows + cols) as f64).sqrt());
            Mat::init_uniform(rows, cols, rng, s)
        };
        match algo {
            Algo::Bp => FeedbackChannel::Transpose,
            Algo::Fa => {
                let mats = (0..hidden)
                    .map(|l| {
                        let rows = sizes[l + 1];
                        let cols = if l + 1 == hidden { n_y } else { sizes[l + 2] };
                        glorot(rows, cols, rng)
                    })
                    .collect();
                FeedbackChannel::FixedChain(mats)
            }
            Algo::Dfa => {
                let mats = (0..hidden)
                    .map(|l| glorot(sizes[l + 1], n_y, rng))
                    .collect();
                FeedbackChannel::FixedDirect(mats)
            }
            Algo::Bfa => FeedbackChannel::TrainedMirror(BackwardNet::mirror_of(sizes, rng)),
            Algo::Bdfa => {
                let mats = (0..hidden)
                    .map(|l| glorot(sizes[l + 1], n_y, rng))
                    .collect();
                FeedbackChannel::TrainedDirect(mats)
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeedbackChannel::Transpose => "transpose",
            FeedbackChannel::FixedChain(_) => "fixed-chain",
            FeedbackChannel::FixedDirect(_) => "fixed-direct",
            FeedbackChannel::TrainedMirror(_) => "trained-mirror",
            FeedbackChannel::TrainedDirect(_) => "trained-direct",
        }
    }

    pub fn matches(&self, algo: Algo) -> bool {
        matches!(
            (algo, self),
            (Algo::Bp, FeedbackChannel::Transpose)
                | (Algo::Fa, FeedbackChannel::FixedChain(_))
                | (Algo::Dfa, FeedbackChannel::FixedDirect(_))
                | (Algo::Bfa, FeedbackChannel::TrainedMirror(_))
                | (Algo::Bdfa, FeedbackChannel::TrainedDirect(_))
        )
    }
}

/// Exact backpropagation hidden deltas: transposed forward weights chain the
/// output error down, masked by the tanh derivative at each layer.
pub fn bp_hidden_deltas<T: Scalar>(
    net: &ForwardNet<T>,
    trace: &ActivationTrace<T>,
    error: &Mat<T>,
) -> Result<Vec<Mat<T>>, RuleError> {
    let hidden = trace.hidden.len();
    let mut deltas = vec![Mat::zeros(1, 1); hidden];
    let mut signal = net.weights()[hidden].transpose().matmul(error)?;
    for l in (0..hidden).rev() {
        let delta = signal.hadamard(&tanh_prime_from_output(&trace.hidden[l]))?;
        if l > 0 {
            signal = net.weights()[l].transpose().matmul(&delta)?;
        }
        deltas[l] = delta;
    }
    Ok(deltas)
}

/// Feedback-alignment hidden deltas: same chain structure as BP but through
/// fixed random matrices.
pub fn fa_hidden_deltas<T: Scalar>(
    chain: &[Mat<T>],
    trace: &ActivationTrace<T>,
    error: &Mat<T>,
) -> Result<Vec<Mat<T>>, RuleError> {
    let hidden = trace.hidden.len();
    if chain.len() != hidden {
        return Err(RuleError::Shape(ShapeError::Mismatch {
            op: "fa_hidden_deltas",
            left: (chain.len(), 0),
            right: (hidden, 0),
        }));
    }
    let mut deltas = vec![Mat::zeros(1, 1); hidden];
    let mut signal = chain[hidden - 1].matmul(error)?;
    for l in (0..hidden).rev() {
        let delta = signal.hadamard(&tanh_prime_from_output(&trace.hidden[l]))?;
        if l > 0 {
            signal = chain[l - 1].matmul(&delta)?;
        }
        deltas[l] = delta;
    }
    Ok(deltas)
}

/// Direct-feedback-alignment hidden deltas: the output error reaches every
/// hidden layer through its own matrix.
pub fn dfa_hidden_deltas<T: Scalar>(
    direct: &[Mat<T>],
    trace: &ActivationTrace<T>,
    error: &Mat<T>,
) -> Result<Vec<Mat<T>>, RuleError> {
    let hidden = trace.hidden.len();
    if direct.len() != hidden {
        return Err(RuleError::Shape(ShapeError::Mismatch {
            op: "dfa_hidden_deltas",
            left: (direct.len(), 0),
            right: (hidden, 0),
        }));
    }
    let mut deltas = Vec::with_capacity(hidden);
    for (mat, h) in direct.iter().zip(&trace.hidden) {
        let transported = mat.matmul(error)?;
        deltas.push(transported.hadamard(&tanh_prime_from_output(h))?);
    }
    Ok(deltas)
}

/// BFA forward-phase hidden deltas: the output error walks down through the
/// backward net's (trainable) weights instead of transposes.
pub fn bfa_forward_deltas<T: Scalar>(
    backward: &BackwardNet<T>,
    trace: &ActivationTrace<T>,
    error: &Mat<T>,
) -> Result<Vec<Mat<T>>, RuleError> {
    let hidden = trace.hidden.len();
    if backward.hidden_layers() != hidden {
        return Err(RuleError::Shape(ShapeError::Mismatch {
            op: "bfa_forward_deltas",
            left: (backward.hidden_layers(), 0),
            right: (hidden, 0),
        }));
    }
    let mut deltas = vec![Mat::zeros(1, 1); hidden];
    // backward weight j feeds forward hidden layer (hidden-1-j)
    let mut signal = backward.weights()[0].matmul(error)?;
    for l in (0..hidden).rev() {
        let delta = signal.hadamard(&tanh_prime_from_output(&trace.hidden[l]))?;
        if l > 0 {
            signal = backward.weights()[hidden - l].matmul(&delta)?;
        }
        deltas[l] = delta;
    }
    Ok(deltas)
}

/// BFA backward-phase hidden deltas: the reconstruction error walks back up
/// through the forward weights.
pub fn bfa_backward_deltas<T: Scalar>(
    net: &ForwardNet<T>,
    btrace: &BackwardTrace<T>,
    recon_error: &Mat<T>,
) -> Result<Vec<Mat<T>>, RuleError> {
    let hidden = btrace.hidden.len();
    if net.hidden_layers() != hidden {
        return Err(RuleError::Shape(ShapeError::Mismatch {
            op: "bfa_backward_deltas",
            left: (net.hidden_layers(), 0),
            right: (hidden, 0),
        }));
    }
    let mut deltas = vec![Mat::zeros(1, 1); hidden];
    // forward weight i feeds backward hidden layer (hidden-1-i)
    let mut signal = net.weights()[0].matmul(recon_error)?;
    for j in (0..hidden).rev() {
        let delta = signal.hadamard(&tanh_prime_from_output(&btrace.hidden[j]))?;
        if j > 0 {
            signal = net.weights()[hidden - j].matmul(&delta)?;
        }
        deltas[j] = delta;
    }
    Ok(deltas)
}

/// Parameter deltas, shaped exactly like the parameters they update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSet<T> {
    pub weights: Vec<Mat<T>>,
    /// Empty for bias-free transport matrices.
    pub biases: Vec<Mat<T>>,
}

impl<T: Scalar> UpdateSet<T> {
    pub fn is_zero(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|m| m.max_abs() == T::zero())
    }
}

fn layer_updates<T: Scalar>(
    inputs: &[&Mat<T>],
    deltas: &[&Mat<T>],
) -> Result<UpdateSet<T>, RuleError> {
    let minus_one = -T::one();
    let mut weights = Vec::with_capacity(deltas.len());
    let mut biases = Vec::with_capacity(deltas.len());
    for (delta, input) in deltas.iter().zip(inputs) {
        weights.push(delta.matmul(&input.transpose())?.scale(minus_one));
        biases.push(delta.row_sum().scale(minus_one));
    }
    Ok(UpdateSet { weights, biases })
}

/// Forward weight/bias deltas from hidden deltas and the output error, summed
/// over the batch: `dw_i = -delta_i * input_i^T`, `db_i = -row_sum(delta_i)`.
pub fn forward_weight_updates<T: Scalar>(
    trace: &ActivationTrace<T>,
    deltas: &[Mat<T>],
    error: &Mat<T>,
) -> Result<UpdateSet<T>, RuleError> {
    // inputs x, h_1, .., h_L pair with deltas delta_1, .., delta_L, e
    let mut all_deltas: Vec<&Mat<T>> = deltas.iter().collect();
    all_deltas.push(error);
    let mut inputs: Vec<&Mat<T>> = vec![&trace.input];
    inputs.extend(trace.hidden.iter());
    layer_updates(&inputs, &all_deltas)
}

/// Mirrored updates for the BFA backward net: the target plays the input
/// role, the reconstruction error plays the output error role.
pub fn bfa_feedback_weight_updates<T: Scalar>(
    btrace: &BackwardTrace<T>,
    deltas: &[Mat<T>],
    recon_error: &Mat<T>,
) -> Result<UpdateSet<T>, RuleError> {
    let mut all_deltas: Vec<&Mat<T>> = deltas.iter().collect();
    all_deltas.push(recon_error);
    let inputs = {
        let mut v: Vec<&Mat<T>> = vec![&btrace.target];
        v.extend(btrace.hidden.iter());
        v
    };
    layer_updates(&inputs, &all_deltas)
}

/// The modified backward target `y + alpha * prediction`, recomputed each
/// batch with current parameters.
pub fn bdfa_backward_target<T: Scalar>(
    target: &Mat<T>,
    prediction: &Mat<T>,
    alpha: T,
) -> Result<Mat<T>, ShapeError> {
    if target.shape() != prediction.shape() {
        return Err(ShapeError::Mismatch {
            op: "bdfa_backward_target",
            left: target.shape(),
            right: prediction.shape(),
        });
    }
    target.add(&prediction.scale(alpha))
}

/// BDFA feedback updates.
///
/// `mats[l] * y_target` pairs with hidden layer `l`, the same layer that
/// matrix transports gradients into during the forward phase.
///
/// Analytic mode descends the exact gradient of the alignment loss
/// `1 - sigmoid(<a, h>)` per batch column, which raises the alignment dot
/// product. Literal mode applies the written form: the elementwise loss
/// vector times `y_target^T`.
pub fn bdfa_feedback_updates<T: Scalar>(
    mats: &[Mat<T>],
    trace: &ActivationTrace<T>,
    y_target: &Mat<T>,
    mode: BdfaUpdateMode,
) -> Result<UpdateSet<T>, RuleError> {
    let hidden = trace.hidden.len();
    if mats.len() != hidden {
        return Err(RuleError::Shape(ShapeError::Mismatch {
            op: "bdfa_feedback_updates",
            left: (mats.len(), 0),
            right: (hidden, 0),
        }));
    }
    let one = T::one();
    let minus_one = -one;
    let mut weights = Vec::with_capacity(hidden);
    for (mat, h) in mats.iter().zip(&trace.hidden) {
        let transported = mat.matmul(y_target)?; // layer width x b
        let grad_like = match mode {
            BdfaUpdateMode::Analytic => {
                // per column: g = -sigmoid'(z) * h with z = <a, h>
                let mut g = Mat::zeros(h.rows(), h.cols());
                for k in 0..h.cols() {
                    let mut z = T::zero();
                    for i in 0..h.rows() {
                        z += transported.get(i, k) * h.get(i, k);
                    }
                    let s = sigmoid(z);
                    let factor = -(s * (one - s));
                    for i in 0..h.rows() {
                        g.set(i, k, factor * h.get(i, k));
                    }
                }
                g
            }
            BdfaUpdateMode::Literal => {
                // elementwise loss vector 1 - sigmoid(a ⊙ h), per column
                transported.hadamard(h)?.map(|v| one - sigmoid(v))
            }
        };
        weights.push(grad_like.matmul(&y_target.transpose())?.scale(minus_one));
    }
    Ok(UpdateSet {
        weights,
        biases: Vec::new(),
    })
}

/// Apply `w <- w + lr * delta` to a forward net.
pub fn apply_forward_updates<T: Scalar>(
    net: &mut ForwardNet<T>,
    updates: &UpdateSet<T>,
    lr: T,
) -> Result<(), ShapeError> {
    for (i, dw) in updates.weights.iter().enumerate() {
        net.weight_mut(i).add_scaled_assign(dw, lr)?;
    }
    for (i, db) in updates.biases.iter().enumerate() {
        net.bias_mut(i).add_scaled_assign(db, lr)?;
    }
    Ok(())
}

/// Apply `w <- w + lr * delta` to a backward net.
pub fn apply_backward_updates<T: Scalar>(
    net: &mut BackwardNet<T>,
    updates: &UpdateSet<T>,
    lr: T,
) -> Result<(), ShapeError> {
    for (i, dw) in updates.weights.iter().enumerate() {
        net.weight_mut(i).add_scaled_assign(dw, lr)?;
    }
    for (i, db) in updates.biases.iter().enumerate() {
        net.bias_mut(i).add_scaled_assign(db, lr)?;
    }
    Ok(())
}

/// Apply `w <- w + lr * delta` to a set of transport matrices.
pub fn apply_mat_updates<T: Scalar>(
    mats: &mut [Mat<T>],
    updates: &UpdateSet<T>,
    lr: T,
) -> Result<(), ShapeError> {
    for (m, dw) in mats.iter_mut().zip(&updates.weights) {
        m.add_scaled_assign(dw, lr)?;
    }
    Ok(())
}

/// Losses observed during one training step (reported per sample).
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics<T> {
    pub forward_loss: T,
    /// Defined for the bidirectional rules only.
    pub backward_loss: Option<T>,
}

/// One minibatch update under the given rule.
///
/// BP/FA/DFA run a single forward phase. The bidirectional rules then run
/// their backward phase on the same batch against the just-updated forward
/// weights: BFA regenerates the inputs and trains its mirror net; BDFA
/// trains its direct matrices toward the current hidden activations.
pub fn train_step<T: Scalar>(
    algo: Algo,
    net: &mut ForwardNet<T>,
    channel: &mut FeedbackChannel<T>,
    x: &Mat<T>,
    y: &Mat<T>,
    hyper: &TrainHyper<T>,
) -> Result<StepMetrics<T>, RuleError> {
    if !channel.matches(algo) {
        return Err(RuleError::ChannelMismatch {
            algo,
            channel: channel.kind_name(),
        });
    }

    let trace = net.forward(x)?;
    let error = output_error(&trace.output, y)?;
    let forward_loss = bce_loss(&trace.output, y)?;

    let deltas = match (&*channel, algo) {
        (FeedbackChannel::Transpose, Algo::Bp) => bp_hidden_deltas(net, &trace, &error)?,
        (FeedbackChannel::FixedChain(mats), Algo::Fa) => fa_hidden_deltas(mats, &trace, &error)?,
        (FeedbackChannel::FixedDirect(mats), Algo::Dfa) => dfa_hidden_deltas(mats, &trace, &error)?,
        (FeedbackChannel::TrainedMirror(backward), Algo::Bfa) => {
            bfa_forward_deltas(backward, &trace, &error)?
        }
        (FeedbackChannel::TrainedDirect(mats), Algo::Bdfa) => {
            dfa_hidden_deltas(mats, &trace, &error)?
        }
        _ => unreachable!("channel/algo pairing already validated"),
    };
    let updates = forward_weight_updates(&trace, &deltas, &error)?;
    apply_forward_updates(net, &updates, hyper.lr)?;

    let backward_loss = match (algo, channel) {
        (Algo::Bfa, FeedbackChannel::TrainedMirror(backward)) => {
            let btrace = backward.generate(y)?;
            let recon_error = output_error(&btrace.recon, x)?;
            let loss = mse_loss(&btrace.recon, x)?;
            let bdeltas = bfa_backward_deltas(net, &btrace, &recon_error)?;
            let bupdates = bfa_feedback_weight_updates(&btrace, &bdeltas, &recon_error)?;
            apply_backward_updates(backward, &bupdates, hyper.lr)?;
            Some(loss)
        }
        (Algo::Bdfa, FeedbackChannel::TrainedDirect(mats)) => {
            let y_target = if hyper.alpha > T::zero() {
                // prediction recomputed with the just-updated forward weights
                let fresh = net.forward(x)?;
                bdfa_backward_target(y, &fresh.output, hyper.alpha)?
            } else {
                y.clone()
            };
            let mut loss = T::zero();
            for (mat, h) in mats.iter().zip(&trace.hidden) {
                let transported = mat.matmul(&y_target)?;
                loss += bdfa_hidden_loss(&transported, h)?;
            }
            let bupdates = bdfa_feedback_updates(mats, &trace, &y_target, hyper.bdfa_mode)?;
            apply_mat_updates(mats, &bupdates, hyper.lr)?;
            Some(loss)
        }
        _ => None,
    };

    Ok(StepMetrics {
        forward_loss,
        backward_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(seed: u64, sizes: &[usize]) -> (ForwardNet<f64>, RngState) {
        let mut rng = RngState::new(seed);
        let net = ForwardNet::new(sizes, &mut rng);
        (net, rng)
    }

    fn transpose_channel(net: &ForwardNet<f64>) -> Vec<Mat<f64>> {
        // chain matrices set to the transposed forward weights above them
        (0..net.hidden_layers())
            .map(|l| net.weights()[l + 1].transpose())
            .collect()
    }

    #[test]
    fn zero_error_means_zero_deltas_everywhere() {
        let (net, mut rng) = small_net(3, &[4, 6, 5, 3]);
        let x = Mat::init_uniform(4, 2, &mut rng, 1.0);
        let trace = net.forward(&x).unwrap();
        let e = Mat::zeros(3, 2);

        for deltas in [
            bp_hidden_deltas(&net, &trace, &e).unwrap(),
            fa_hidden_deltas(&transpose_channel(&net), &trace, &e).unwrap(),
        ] {
            for d in &deltas {
                assert_eq!(d.max_abs(), 0.0);
            }
        }
        let updates =
            forward_weight_updates(&trace, &bp_hidden_deltas(&net, &trace, &e).unwrap(), &e)
                .unwrap();
        assert!(updates.is_zero());
    }

    #[test]
    fn fa_with_transposes_reduces_to_bp() {
        let (net, mut rng) = small_net(17, &[5, 8, 6, 4]);
        let x = Mat::init_uniform(5, 3, &mut rng, 1.0);
        let y = crate::datasets::one_hot::<f64>(1, 4).unwrap();
        let y = {
            let mut m = Mat::zeros(4, 3);
            for k in 0..3 {
                m.set(1, k, y.get(1, 0));
            }
            m
        };
        let trace = net.forward(&x).unwrap();
        let e = output_error(&trace.output, &y).unwrap();
        let bp = bp_hidden_deltas(&net, &trace, &e).unwrap();
        let fa = fa_hidden_deltas(&transpose_channel(&net), &trace, &e).unwrap();
        for (a, b) in bp.iter().zip(&fa) {
            assert!(a.sub(b).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn bfa_with_mirrored_transposes_reduces_to_bp() {
        let (net, mut rng) = small_net(29, &[5, 7, 6, 3]);
        // backward weights j := transpose of forward weight (count-1-j)
        let count = net.weights().len();
        let bw: Vec<Mat<f64>> = (0..count)
            .map(|j| net.weights()[count - 1 - j].transpose())
            .collect();
        let bsizes: Vec<usize> = net.sizes().iter().rev().copied().collect();
        let bb: Vec<Mat<f64>> = bw.iter().map(|w| Mat::zeros(w.rows(), 1)).collect();
        let backward = BackwardNet::from_parts(bsizes, bw, bb).unwrap();

        let x = Mat::init_uniform(5, 2, &mut rng, 1.0);
        let y = Mat::init_uniform(3, 2, &mut rng, 0.3).map(f64::abs);
        let trace = net.forward(&x).unwrap();
        let e = output_error(&trace.output, &y).unwrap();
        let bp = bp_hidden_deltas(&net, &trace, &e).unwrap();
        let bfa = bfa_forward_deltas(&backward, &trace, &e).unwrap();
        for (a, b) in bp.iter().zip(&bfa) {
            assert!(a.sub(b).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn depth_one_fa_equals_dfa() {
        let (net, mut rng) = small_net(41, &[6, 5, 3]);
        let shared = Mat::init_uniform(5, 3, &mut rng, 0.4);
        let x = Mat::init_uniform(6, 2, &mut rng, 1.0);
        let y = Mat::zeros(3, 2);
        let trace = net.forward(&x).unwrap();
        let e = output_error(&trace.output, &y).unwrap();
        let fa = fa_hidden_deltas(std::slice::from_ref(&shared), &trace, &e).unwrap();
        let dfa = dfa_hidden_deltas(std::slice::from_ref(&shared), &trace, &e).unwrap();
        assert_eq!(fa[0], dfa[0]);
    }

    #[test]
    fn deltas_are_linear_in_error_for_every_transport() {
        let (net, mut rng) = small_net(53, &[4, 6, 5, 3]);
        let x = Mat::init_uniform(4, 2, &mut rng, 1.0);
        let trace = net.forward(&x).unwrap();
        let e = Mat::init_uniform(3, 2, &mut rng, 0.5);
        let c = -2.5;
        let scaled = e.scale(c);

        let chain: Vec<Mat<f64>> = vec![
            Mat::init_uniform(6, 5, &mut rng, 0.4),
            Mat::init_uniform(5, 3, &mut rng, 0.4),
        ];
        let direct: Vec<Mat<f64>> = vec![
            Mat::init_uniform(6, 3, &mut rng, 0.4),
            Mat::init_uniform(5, 3, &mut rng, 0.4),
        ];
        let mirror = BackwardNet::mirror_of(net.sizes(), &mut rng);

        type DeltaPair = (Vec<Mat<f64>>, Vec<Mat<f64>>);
        let pairs: Vec<DeltaPair> = vec![
            (
                bp_hidden_deltas(&net, &trace, &e).unwrap(),
                bp_hidden_deltas(&net, &trace, &scaled).unwrap(),
            ),
            (
                fa_hidden_deltas(&chain, &trace, &e).unwrap(),
                fa_hidden_deltas(&chain, &trace, &scaled).unwrap(),
            ),
            (
                dfa_hidden_deltas(&direct, &trace, &e).unwrap(),
                dfa_hidden_deltas(&direct, &trace, &scaled).unwrap(),
            ),
            (
                bfa_forward_deltas(&mirror, &trace, &e).unwrap(),
                bfa_forward_deltas(&mirror, &trace, &scaled).unwrap(),
            ),
        ];
        for (base, with_scaled) in &pairs {
            for (b, s) in base.iter().zip(with_scaled) {
                assert!(b.scale(c).sub(s).unwrap().max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_rate_application_is_bitwise_identity() {
        let (mut net, mut rng) = small_net(59, &[4, 5, 3]);
        let x = Mat::init_uniform(4, 2, &mut rng, 1.0);
        let y = Mat::zeros(3, 2);
        let trace = net.forward(&x).unwrap();
        let e = output_error(&trace.output, &y).unwrap();
        let deltas = bp_hidden_deltas(&net, &trace, &e).unwrap();
        let updates = forward_weight_updates(&trace, &deltas, &e).unwrap();
        let before = net.clone();
        apply_forward_updates(&mut net, &updates, 0.0).unwrap();
        assert_eq!(net, before);
    }

    // Literal transcriptions of the delta equations, written as naive loops
    // independent of the Mat operation path.
    mod transcription {
        use super::*;

        pub fn fa(chain: &[Mat<f64>], trace: &ActivationTrace<f64>, e: &Mat<f64>) -> Vec<Mat<f64>> {
            let hidden = trace.hidden.len();
            let b = e.cols();
            let mut out: Vec<Mat<f64>> = vec![Mat::zeros(1, 1); hidden];
            let mut upstream = e.clone();
            for l in (0..hidden).rev() {
                let m = &chain[l];
                let mut d = Mat::zeros(trace.hidden[l].rows(), b);
                for k in 0..b {
                    for i in 0..d.rows() {
                        let mut acc = 0.0;
                        for j in 0..upstream.rows() {
                            acc += m.get(i, j) * upstream.get(j, k);
                        }
                        let h = trace.hidden[l].get(i, k);
                        d.set(i, k, acc * (1.0 - h * h));
                    }
                }
                upstream = d.clone();
                out[l] = d;
            }
            out
        }

        pub fn dfa(
            direct: &[Mat<f64>],
            trace: &ActivationTrace<f64>,
            e: &Mat<f64>,
        ) -> Vec<Mat<f64>> {
            let mut out = Vec::new();
            for (mat, hidden) in direct.iter().zip(&trace.hidden) {
                let mut d = Mat::zeros(hidden.rows(), e.cols());
                for k in 0..e.cols() {
                    for i in 0..d.rows() {
                        let mut acc = 0.0;
                        for j in 0..e.rows() {
                            acc += mat.get(i, j) * e.get(j, k);
                        }
                        let h = hidden.get(i, k);
                        d.set(i, k, acc * (1.0 - h * h));
                    }
                }
                out.push(d);
            }
            out
        }
    }

    #[test]
    fn fa_matches_literal_transcription() {
        let (net, mut rng) = small_net(67, &[5, 7, 6, 4]);
        let chain: Vec<Mat<f64>> = vec![
            Mat::init_uniform(7, 6, &mut rng, 0.4),
            Mat::init_uniform(6, 4, &mut rng, 0.4),
        ];
        let x = Mat::init_uniform(5, 3, &mut rng, 1.0);
        let y = Mat::init_uniform(4, 3, &mut rng, 0.4).map(f64::abs);
        let trace = net.forward(&x).unwrap();
        let e = output_error(&trace.output, &y).unwrap();
        let ours = fa_hidden_deltas(&chain, &trace, &e).unwrap();
        let reference = transcription::fa(&chain, &trace, &e);
        for (a, b) in ours.iter().zip(&reference) {
            assert!(a.sub(b).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn dfa_matches_literal_transcription_at_depth_three() {
        let (net, mut rng) = small_net(71, &[5, 7, 6, 5, 4]);
        let direct: Vec<Mat<f64>> = vec![
            Mat::init_uniform(7, 4, &mut rng, 0.4),
            Mat::init_uniform(6, 4, &mut rng, 0.4),
            Mat::init_uniform(5, 4, &mut rng, 0.4),
        ];
        let x = Mat::init_uniform(5, 2, &mut rng, 1.0);
        let y = Mat::init_uniform(4, 2, &mut rng, 0.4).map(f64::abs);
        let trace = net.forward(&x).unwrap();
        let e = output_error(&trace.output, &y).unwrap();
        let ours = dfa_hidden_deltas(&direct, &trace, &e).unwrap();
        let reference = transcription::dfa(&direct, &trace, &e);
        for (a, b) in ours.iter().zip(&reference) {
            assert!(a.sub(b).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn single_sample_output_update_is_outer_product() {
        let (net, mut rng) = small_net(83, &[4, 5, 3]);
        let x = Mat::init_uniform(4, 1, &mut rng, 1.0);
        let y = crate::datasets::one_hot::<f64>(2, 3).unwrap();
        let trace = net.forward(&x).unwrap();
        let e = output_error(&trace.output, &y).unwrap();
        let deltas = bp_hidden_deltas(&net, &trace, &e).unwrap();
        let updates = forward_weight_updates(&trace, &deltas, &e).unwrap();
        let dw_out = &updates.weights[1];
        for j in 0..3 {
            for k in 0..5 {
                let expected = -e.get(j, 0) * trace.hidden[0].get(k, 0);
                assert!((dw_out.get(j, k) - expected).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn one_bp_step_decreases_loss() {
        let (mut net, mut rng) = small_net(97, &[6, 8, 4]);
        let mut channel = FeedbackChannel::Transpose;
        let x = Mat::init_uniform(6, 4, &mut rng, 1.0);
        let mut y = Mat::zeros(4, 4);
        for k in 0..4 {
            y.set(k % 4, k, 1.0);
        }
        let hyper = TrainHyper::new(1e-4, 0.0, BdfaUpdateMode::Analytic).unwrap();
        let before = bce_loss(&net.forward(&x).unwrap().output, &y).unwrap();
        train_step(Algo::Bp, &mut net, &mut channel, &x, &y, &hyper).unwrap();
        let after = bce_loss(&net.forward(&x).unwrap().output, &y).unwrap();
        assert!(after < before, "loss did not decrease: {before} -> {after}");
    }

    #[test]
    fn one_symmetric_backward_step_decreases_reconstruction_loss() {
        let mut rng = RngState::new(101);
        let mut backward = BackwardNet::<f64>::mirror_of(&[6, 5, 3], &mut rng);
        // forward net = transposed mirror, so the backward phase is exact
        let fsizes = vec![6usize, 5, 3];
        let count = backward.weights().len();
        let fw: Vec<Mat<f64>> = (0..count)
            .map(|i| backward.weights()[count - 1 - i].transpose())
            .collect();
        let fb: Vec<Mat<f64>> = fw.iter().map(|w| Mat::zeros(w.rows(), 1)).collect();
        let net = ForwardNet::from_parts(fsizes, fw, fb).unwrap();

        let x = Mat::init_uniform(6, 3, &mut rng, 0.5).map(f64::abs);
        let y = Mat::init_uniform(3, 3, &mut rng, 0.5).map(f64::abs);

        let before = {
            let t = backward.generate(&y).unwrap();
            mse_loss(&t.recon, &x).unwrap()
        };
        let btrace = backward.generate(&y).unwrap();
        let recon_error = output_error(&btrace.recon, &x).unwrap();
        let bdeltas = bfa_backward_deltas(&net, &btrace, &recon_error).unwrap();
        let bupdates = bfa_feedback_weight_updates(&btrace, &bdeltas, &recon_error).unwrap();
        assert_eq!(bupdates.weights.len(), backward.weights().len());
        for (dw, w) in bupdates.weights.iter().zip(backward.weights()) {
            assert_eq!(dw.shape(), w.shape());
        }
        apply_backward_updates(&mut backward, &bupdates, 1e-3).unwrap();
        let after = {
            let t = backward.generate(&y).unwrap();
            mse_loss(&t.recon, &x).unwrap()
        };
        assert!(
            after < before,
            "reconstruction loss did not decrease: {before} -> {after}"
        );
    }

    #[test]
    fn bdfa_target_mixing() {
        let y = Mat::column(&[1.0f64, 0.0]).unwrap();
        let yhat = Mat::column(&[0.8, 0.2]).unwrap();
        let mixed = bdfa_backward_target(&y, &yhat, 0.25).unwrap();
        assert!((mixed.get(0, 0) - 1.2).abs() < 1e-15);
        assert!((mixed.get(1, 0) - 0.05).abs() < 1e-15);
        // alpha = 0 is exact identity
        assert_eq!(bdfa_backward_target(&y, &yhat, 0.0).unwrap(), y);
        assert!(bdfa_backward_target(&y, &Mat::zeros(3, 1), 0.25).is_err());
    }

    #[test]
    fn bdfa_analytic_update_vanishes_with_zero_hidden() {
        let mut rng = RngState::new(7);
        let mats = vec![Mat::<f64>::init_uniform(5, 3, &mut rng, 0.4)];
        let net = ForwardNet::from_parts(
            vec![4, 5, 3],
            vec![Mat::zeros(5, 4), Mat::zeros(3, 5)],
            vec![Mat::zeros(5, 1), Mat::zeros(3, 1)],
        )
        .unwrap();
        let x = Mat::init_uniform(4, 2, &mut rng, 1.0);
        let trace = net.forward(&x).unwrap(); // all-zero weights -> h = 0
        let y = Mat::zeros(3, 2);
        let updates = bdfa_feedback_updates(&mats, &trace, &y, BdfaUpdateMode::Analytic).unwrap();
        assert!(updates.is_zero());
        assert!(updates.biases.is_empty());
    }

    #[test]
    fn bdfa_analytic_step_decreases_alignment_loss() {
        let mut rng = RngState::new(113);
        let net = ForwardNet::<f64>::new(&[6, 5, 3], &mut rng);
        let mut mats = vec![Mat::<f64>::init_uniform(5, 3, &mut rng, 0.4)];
        let x = Mat::init_uniform(6, 4, &mut rng, 1.0);
        let mut y = Mat::zeros(3, 4);
        for k in 0..4 {
            y.set(k % 3, k, 1.0);
        }
        let trace = net.forward(&x).unwrap();
        let loss_at = |mats: &[Mat<f64>]| -> f64 {
            let t = mats[0].matmul(&y).unwrap();
            bdfa_hidden_loss(&t, &trace.hidden[0]).unwrap()
        };
        let before = loss_at(&mats);
        let updates = bdfa_feedback_updates(&mats, &trace, &y, BdfaUpdateMode::Analytic).unwrap();
        apply_mat_updates(&mut mats, &updates, 1e-3).unwrap();
        let after = loss_at(&mats);
        assert!(
            after < before,
            "alignment loss did not decrease: {before} -> {after}"
        );
    }

    #[test]
    fn bdfa_literal_matches_written_form() {
        let mut rng = RngState::new(7);
        let net = ForwardNet::<f64>::new(&[5, 4, 3], &mut rng);
        let mats = vec![Mat::<f64>::init_uniform(4, 3, &mut rng, 0.5)];
        let x = Mat::init_uniform(5, 3, &mut rng, 1.0);
        let mut y = Mat::zeros(3, 3);
        for k in 0..3 {
            y.set(k, k, 1.0);
        }
        let trace = net.forward(&x).unwrap();
        let literal = bdfa_feedback_updates(&mats, &trace, &y, BdfaUpdateMode::Literal).unwrap();
        // naive transcription: per column, elementwise loss vector times y^T
        let transported = mats[0].matmul(&y).unwrap();
        let mut expected = Mat::zeros(4, 3);
        for k in 0..3 {
            for i in 0..4 {
                let loss = 1.0 - sigmoid(transported.get(i, k) * trace.hidden[0].get(i, k));
                for j in 0..3 {
                    let cur = expected.get(i, j);
                    expected.set(i, j, cur - loss * y.get(j, k));
                }
            }
        }
        assert!(literal.weights[0].sub(&expected).unwrap().max_abs() <= 1e-12);

        // and it is genuinely a different rule from the analytic gradient
        let analytic = bdfa_feedback_updates(&mats, &trace, &y, BdfaUpdateMode::Analytic).unwrap();
        assert!(
            literal.weights[0]
                .sub(&analytic.weights[0])
                .unwrap()
                .max_abs()
                > 1e-6
        );
    }

    #[test]
    fn train_step_rejects_mismatched_channel() {
        let (mut net, mut rng) = small_net(5, &[4, 5, 3]);
        let mut channel = FeedbackChannel::for_algo(Algo::Dfa, &[4, 5, 3], &mut rng);
        let x = Mat::init_uniform(4, 2, &mut rng, 1.0);
        let y = Mat::zeros(3, 2);
        let hyper = TrainHyper::new(1e-3, 0.0, BdfaUpdateMode::Analytic).unwrap();
        match train_step(Algo::Bp, &mut net, &mut channel, &x, &y, &hyper) {
            Err(RuleError::ChannelMismatch { algo, channel }) => {
                assert_eq!(algo, Algo::Bp);
                assert_eq!(channel, "fixed-direct");
            }
            other => panic!("expected ChannelMismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_prediction_error_gives_zero_forward_updates_for_all_rules() {
        // drive e = 0 by using targets equal to predictions
        let mut rng = RngState::new(131);
        for algo in Algo::ALL {
            let sizes = [4, 6, 5, 3];
            let net = ForwardNet::<f64>::new(&sizes, &mut rng);
            let channel = FeedbackChannel::for_algo(algo, &sizes, &mut rng);
            let x = Mat::init_uniform(4, 2, &mut rng, 1.0);
            let trace = net.forward(&x).unwrap();
            let y = trace.output.clone();
            let e = output_error(&trace.output, &y).unwrap();
            let deltas = match &channel {
                FeedbackChannel::Transpose => bp_hidden_deltas(&net, &trace, &e).unwrap(),
                FeedbackChannel::FixedChain(m) => fa_hidden_deltas(m, &trace, &e).unwrap(),
                FeedbackChannel::FixedDirect(m) | FeedbackChannel::TrainedDirect(m) => {
                    dfa_hidden_deltas(m, &trace, &e).unwrap()
                }
                FeedbackChannel::TrainedMirror(b) => bfa_forward_deltas(b, &trace, &e).unwrap(),
            };
            let updates = forward_weight_updates(&trace, &deltas, &e).unwrap();
            assert!(updates.is_zero(), "{algo}: nonzero update at zero error");
        }
    }

    #[test]
    fn tanh_saturation_kills_delta_entries() {
        let net = ForwardNet::from_parts(
            vec![1, 2, 1],
            vec![
                Mat::from_vec(2, 1, vec![100.0f64, 0.1]).unwrap(),
                Mat::from_vec(1, 2, vec![1.0, 1.0]).unwrap(),
            ],
            vec![Mat::zeros(2, 1), Mat::zeros(1, 1)],
        )
        .unwrap();
        let x = Mat::column(&[1.0]).unwrap();
        let trace = net.forward(&x).unwrap();
        let y = Mat::zeros(1, 1);
        let e = output_error(&trace.output, &y).unwrap();
        let deltas = bp_hidden_deltas(&net, &trace, &e).unwrap();
        // unit 0 is saturated (pre-activation 100), unit 1 is not
        assert!(deltas[0].get(0, 0).abs() < 1e-12);
        assert!(deltas[0].get(1, 0).abs() > 1e-6);
    }

    #[test]
    fn lr_zero_is_rejected_and_tiny_lr_changes_nothing_meaningfully() {
        assert!(TrainHyper::<f64>::new(0.0, 0.0, BdfaUpdateMode::Analytic).is_err());
        assert!(TrainHyper::<f64>::new(1e-4, 1.5, BdfaUpdateMode::Analytic).is_err());
    }

    #[test]
    fn twenty_bfa_steps_decrease_both_losses() {
        let mut rng = RngState::new(151);
        let sizes = [5, 6, 3];
        let mut net = ForwardNet::<f64>::new(&sizes, &mut rng);
        let mut channel = FeedbackChannel::for_algo(Algo::Bfa, &sizes, &mut rng);
        let x = Mat::init_uniform(5, 2, &mut rng, 0.5).map(f64::abs);
        let mut y = Mat::zeros(3, 2);
        y.set(0, 0, 1.0);
        y.set(2, 1, 1.0);
        let hyper = TrainHyper::new(1e-2, 0.0, BdfaUpdateMode::Analytic).unwrap();

        let first = train_step(Algo::Bfa, &mut net, &mut channel, &x, &y, &hyper).unwrap();
        let mut last = first;
        for _ in 0..19 {
            last = train_step(Algo::Bfa, &mut net, &mut channel, &x, &y, &hyper).unwrap();
        }
        assert!(last.forward_loss < first.forward_loss);
        assert!(last.backward_loss.unwrap() < first.backward_loss.unwrap());
    }
}
