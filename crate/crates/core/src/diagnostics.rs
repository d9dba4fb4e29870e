//! Measurement tools for the asymmetric-transport story: finite-difference
//! gradient oracles, alignment angles between pseudo-gradients and true BP
//! gradients, feedback-fidelity scores, a ridge-regularized pseudoinverse
//! probe, the linear one-hidden-layer probe, and PGM feature-map rendering.

use std::fmt;

use crate::network::{output_error, ForwardNet};
use crate::numerics::{Mat, RngState, Scalar, ShapeError};
use crate::rules::{
    bfa_forward_deltas, bp_hidden_deltas, dfa_hidden_deltas, fa_hidden_deltas, FeedbackChannel,
    RuleError,
};

#[derive(Debug)]
pub enum DiagnosticsError {
    Shape(ShapeError),
    Rule(RuleError),
    /// Angle/cosine is undefined because an input vector is zero.
    ZeroVector {
        op: &'static str,
    },
    /// The normal-equations system is singular; retry with ridge > 0.
    Singular {
        dim: usize,
    },
    /// A probed loss evaluated to NaN or infinity.
    NonFinite {
        context: &'static str,
    },
    BadArgument(String),
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::Shape(e) => write!(f, "{e}"),
            DiagnosticsError::Rule(e) => write!(f, "{e}"),
            DiagnosticsError::ZeroVector { op } => {
                write!(f, "{op}: undefined for a zero vector")
            }
            DiagnosticsError::Singular { dim } => write!(
                f,
                "singular {dim}x{dim} system at ridge = 0; pass a positive ridge"
            ),
            DiagnosticsError::NonFinite { context } => {
                write!(f, "{context}: loss is not finite")
            }
            DiagnosticsError::BadArgument(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for DiagnosticsError {}

impl From<ShapeError> for DiagnosticsError {
    fn from(e: ShapeError) -> Self {
        DiagnosticsError::Shape(e)
    }
}

impl From<RuleError> for DiagnosticsError {
    fn from(e: RuleError) -> Self {
        DiagnosticsError::Rule(e)
    }
}

/// Central-difference gradient of `loss` with respect to every entry of
/// `theta`: `(f(t+s) - f(t-s)) / 2s`.
pub fn finite_diff_grads<T, F>(
    theta: &Mat<T>,
    step: T,
    mut loss: F,
) -> Result<Mat<T>, DiagnosticsError>
where
    T: Scalar,
    F: FnMut(&Mat<T>) -> Result<T, DiagnosticsError>,
{
    if step <= T::zero() || !step.is_finite() {
        return Err(DiagnosticsError::BadArgument(format!(
            "finite_diff_grads: step must be positive, got {step}"
        )));
    }
    let two = T::from_f64(2.0);
    let mut grads = Mat::zeros(theta.rows(), theta.cols());
    let mut probe = theta.clone();
    for i in 0..theta.rows() {
        for j in 0..theta.cols() {
            let original = theta.get(i, j);
            probe.set(i, j, original + step);
            let plus = loss(&probe)?;
            probe.set(i, j, original - step);
            let minus = loss(&probe)?;
            probe.set(i, j, original);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(DiagnosticsError::NonFinite {
                    context: "finite_diff_grads",
                });
            }
            grads.set(i, j, (plus - minus) / (two * step));
        }
    }
    Ok(grads)
}

fn dot_norms<T: Scalar>(a: &[T], b: &[T]) -> (T, T, T) {
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na.sqrt(), nb.sqrt())
}

/// Cosine between two equally-shaped matrices, flattened.
pub fn cosine<T: Scalar>(g1: &Mat<T>, g2: &Mat<T>) -> Result<T, DiagnosticsError> {
    if g1.shape() != g2.shape() {
        return Err(ShapeError::Mismatch {
            op: "cosine",
            left: g1.shape(),
            right: g2.shape(),
        }
        .into());
    }
    let (dot, n1, n2) = dot_norms(g1.as_slice(), g2.as_slice());
    if n1 == T::zero() || n2 == T::zero() {
        return Err(DiagnosticsError::ZeroVector { op: "cosine" });
    }
    // clamp against roundoff spill outside [-1, 1]
    Ok((dot / (n1 * n2)).max(-T::one()).min(T::one()))
}

/// Angle between two flattened matrices, in degrees.
pub fn alignment_angle<T: Scalar>(g1: &Mat<T>, g2: &Mat<T>) -> Result<T, DiagnosticsError> {
    let c = cosine(g1, g2)?;
    Ok(c.acos() * T::from_f64(180.0 / std::f64::consts::PI))
}

/// Fidelity of a transported signal against its target activation: mean
/// per-column cosine and mean per-column Euclidean distance.
pub fn feedback_fidelity<T: Scalar>(
    transported: &Mat<T>,
    target: &Mat<T>,
) -> Result<(T, T), DiagnosticsError> {
    if transported.shape() != target.shape() {
        return Err(ShapeError::Mismatch {
            op: "feedback_fidelity",
            left: transported.shape(),
            right: target.shape(),
        }
        .into());
    }
    let cols = transported.cols();
    let mut cos_total = T::zero();
    let mut l2_total = T::zero();
    for k in 0..cols {
        let t = transported.col(k);
        let h = target.col(k);
        let (dot, nt, nh) = dot_norms(&t, &h);
        if nt == T::zero() || nh == T::zero() {
            return Err(DiagnosticsError::ZeroVector {
                op: "feedback_fidelity",
            });
        }
        cos_total += dot / (nt * nh);
        let mut d2 = T::zero();
        for (a, b) in t.iter().zip(&h) {
            let d = *a - *b;
            d2 += d * d;
        }
        l2_total += d2.sqrt();
    }
    let n = T::from_usize(cols);
    Ok((cos_total / n, l2_total / n))
}

/// The output-to-hidden signal each channel transports, per hidden layer in
/// forward order, evaluated on targets `y`.
///
/// Chain channels (BP's transposes, FA) compose linearly down to each layer;
/// direct channels apply their per-layer matrix; the BFA mirror net
/// contributes its hidden activation at the mirrored depth, since its
/// transport is a deep map rather than a single matrix.
pub fn transported_signals<T: Scalar>(
    channel: &FeedbackChannel<T>,
    net: &ForwardNet<T>,
    y: &Mat<T>,
) -> Result<Vec<Mat<T>>, DiagnosticsError> {
    let hidden = net.hidden_layers();
    let mut signals = Vec::with_capacity(hidden);
    match channel {
        FeedbackChannel::Transpose => {
            let mut signal = net.weights()[hidden].transpose().matmul(y)?;
            for l in (0..hidden).rev() {
                signals.push(signal.clone());
                if l > 0 {
                    signal = net.weights()[l].transpose().matmul(&signal)?;
                }
            }
            signals.reverse();
        }
        FeedbackChannel::FixedChain(chain) => {
            let mut signal = chain[hidden - 1].matmul(y)?;
            for l in (0..hidden).rev() {
                signals.push(signal.clone());
                if l > 0 {
                    signal = chain[l - 1].matmul(&signal)?;
                }
            }
            signals.reverse();
        }
        FeedbackChannel::FixedDirect(mats) | FeedbackChannel::TrainedDirect(mats) => {
            for m in mats {
                signals.push(m.matmul(y)?);
            }
        }
        FeedbackChannel::TrainedMirror(backward) => {
            let btrace = backward.generate(y)?;
            for l in 0..hidden {
                signals.push(btrace.hidden[hidden - 1 - l].clone());
            }
        }
    }
    Ok(signals)
}

/// Least-squares application of the pseudoinverse: solves
/// `(W^T W + ridge I) h = W^T y` by dense Gaussian elimination.
///
/// For full-column-rank `W` and ridge -> 0 this equals `W^+ y`; for wide or
/// rank-deficient `W` a positive ridge is required.
pub fn pseudoinverse_apply<T: Scalar>(
    w: &Mat<T>,
    y: &Mat<T>,
    ridge: T,
) -> Result<Mat<T>, DiagnosticsError> {
    if ridge < T::zero() {
        return Err(DiagnosticsError::BadArgument(
            "ridge must be nonnegative".into(),
        ));
    }
    if w.rows() != y.rows() {
        return Err(ShapeError::Mismatch {
            op: "pseudoinverse_apply",
            left: w.shape(),
            right: y.shape(),
        }
        .into());
    }
    let wt = w.transpose();
    let mut gram = wt.matmul(w)?;
    for i in 0..gram.rows() {
        gram.set(i, i, gram.get(i, i) + ridge);
    }
    let rhs = wt.matmul(y)?;
    solve_dense(&mut gram, rhs)
}

/// Gaussian elimination with partial pivoting. Consumes the system matrix.
fn solve_dense<T: Scalar>(a: &mut Mat<T>, mut b: Mat<T>) -> Result<Mat<T>, DiagnosticsError> {
    let n = a.rows();
    let k = b.cols();
    let tiny = T::from_f64(1e-300);
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a.get(r, col).abs() > a.get(pivot, col).abs() {
                pivot = r;
            }
        }
        if a.get(pivot, col).abs() <= tiny {
            return Err(DiagnosticsError::Singular { dim: n });
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot, j));
                a.set(pivot, j, tmp);
            }
            for j in 0..k {
                let tmp = b.get(col, j);
                b.set(col, j, b.get(pivot, j));
                b.set(pivot, j, tmp);
            }
        }
        let diag = a.get(col, col);
        for r in col + 1..n {
            let factor = a.get(r, col) / diag;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                a.set(r, j, a.get(r, j) - factor * a.get(col, j));
            }
            for j in 0..k {
                b.set(r, j, b.get(r, j) - factor * b.get(col, j));
            }
        }
    }
    // back substitution
    let mut x = Mat::zeros(n, k);
    for j in 0..k {
        for row in (0..n).rev() {
            let mut acc = b.get(row, j);
            for col in row + 1..n {
                acc -= a.get(row, col) * x.get(col, j);
            }
            x.set(row, j, acc / a.get(row, row));
        }
    }
    Ok(x)
}

/// Per-layer agreement between a channel's pseudo-gradients and true BP
/// gradients, plus feedback-fidelity scores, on one probe batch.
#[derive(Debug, Clone)]
pub struct AlignmentReport<T> {
    /// Angle (degrees) between the channel's hidden delta and BP's, per
    /// hidden layer, flattened over the batch.
    pub angle_degrees: Vec<T>,
    pub cosine: Vec<T>,
    /// (cosine, l2) between the transported target signal and the actual
    /// hidden activation, per hidden layer.
    pub fidelity: Vec<(T, T)>,
    /// Cosine between the top-layer transported signal and the
    /// pseudoinverse direction of the output weights.
    pub pseudoinverse_cosine: Option<T>,
}

/// Build an [`AlignmentReport`] for a (net, channel) pair on a probe batch.
pub fn alignment_report<T: Scalar>(
    net: &ForwardNet<T>,
    channel: &FeedbackChannel<T>,
    x: &Mat<T>,
    y: &Mat<T>,
) -> Result<AlignmentReport<T>, DiagnosticsError> {
    let trace = net.forward(x)?;
    let error = output_error(&trace.output, y)?;
    let bp = bp_hidden_deltas(net, &trace, &error)?;
    let pseudo = match channel {
        FeedbackChannel::Transpose => bp.clone(),
        FeedbackChannel::FixedChain(mats) => fa_hidden_deltas(mats, &trace, &error)?,
        FeedbackChannel::FixedDirect(mats) | FeedbackChannel::TrainedDirect(mats) => {
            dfa_hidden_deltas(mats, &trace, &error)?
        }
        FeedbackChannel::TrainedMirror(backward) => bfa_forward_deltas(backward, &trace, &error)?,
    };

    let mut angle_degrees = Vec::with_capacity(bp.len());
    let mut cosines = Vec::with_capacity(bp.len());
    for (p, b) in pseudo.iter().zip(&bp) {
        let c = cosine(p, b)?;
        cosines.push(c);
        angle_degrees.push(c.acos() * T::from_f64(180.0 / std::f64::consts::PI));
    }

    let signals = transported_signals(channel, net, y)?;
    let mut fidelity = Vec::with_capacity(signals.len());
    for (s, h) in signals.iter().zip(&trace.hidden) {
        fidelity.push(feedback_fidelity(s, h)?);
    }

    let top = net.hidden_layers() - 1;
    let pinv_direction = pseudoinverse_apply(&net.weights()[top + 1], y, T::from_f64(1e-10))?;
    let pseudoinverse_cosine = cosine(&signals[top], &pinv_direction).ok();

    Ok(AlignmentReport {
        angle_degrees,
        cosine: cosines,
        fidelity,
        pseudoinverse_cosine,
    })
}

/// The linear one-hidden-layer probe: `h = A x`, `y = W h`, no activations.
/// A feedback matrix `B` is regressed so that `B y` approaches `h`, and the
/// trajectory records how collinear `B y` becomes with the pseudoinverse
/// direction `W^+ y`, which is the direction BP's hidden delta points along.
#[derive(Debug, Clone)]
pub struct LinearProbe<T> {
    input_map: Mat<T>,  // n_h x n_x
    output_map: Mat<T>, // n_y x n_h
    feedback: Mat<T>,   // n_h x n_y
    probe_targets: Mat<T>,
    probe_hidden: Mat<T>,
    pinv_targets: Mat<T>,
}

/// One point of the probe trajectory.
#[derive(Debug, Clone, Copy)]
pub struct LinearProbeRecord<T> {
    pub step: usize,
    /// cos(B y, W^+ y) on the fixed probe batch: collinearity of the FA-form
    /// delta with the BP-form delta.
    pub pseudoinverse_cosine: T,
    /// cos(B y, h) on the fixed probe batch: progress of the regression.
    pub fidelity_cosine: T,
}

const PROBE_BATCH: usize = 64;
const PROBE_RIDGE: f64 = 1e-10;

impl<T: Scalar> LinearProbe<T> {
    pub fn new(
        n_x: usize,
        n_h: usize,
        n_y: usize,
        rng: &mut RngState,
    ) -> Result<Self, DiagnosticsError> {
        let scale = |rows: usize, cols: usize| T::from_f64((6.0 / (rows + cols) as f64).sqrt());
        let input_map = Mat::init_uniform(n_h, n_x, rng, scale(n_h, n_x));
        let output_map = Mat::init_uniform(n_y, n_h, rng, scale(n_y, n_h));
        let feedback = Mat::init_uniform(n_h, n_y, rng, scale(n_h, n_y));
        let probe_x = Mat::init_uniform(n_x, PROBE_BATCH, rng, T::one());
        let probe_hidden = input_map.matmul(&probe_x)?;
        let probe_targets = output_map.matmul(&probe_hidden)?;
        let pinv_targets =
            pseudoinverse_apply(&output_map, &probe_targets, T::from_f64(PROBE_RIDGE))?;
        Ok(LinearProbe {
            input_map,
            output_map,
            feedback,
            probe_targets,
            probe_hidden,
            pinv_targets,
        })
    }

    pub fn feedback(&self) -> &Mat<T> {
        &self.feedback
    }

    pub fn output_map(&self) -> &Mat<T> {
        &self.output_map
    }

    /// Set `B := W^+`, built by applying the pseudoinverse columnwise to the
    /// identity.
    pub fn set_feedback_to_pseudoinverse(&mut self) -> Result<(), DiagnosticsError> {
        let eye = Mat::identity(self.output_map.rows());
        self.feedback = pseudoinverse_apply(&self.output_map, &eye, T::from_f64(PROBE_RIDGE))?;
        Ok(())
    }

    /// Current trajectory point on the fixed probe batch.
    pub fn record(&self, step: usize) -> Result<LinearProbeRecord<T>, DiagnosticsError> {
        let transported = self.feedback.matmul(&self.probe_targets)?;
        Ok(LinearProbeRecord {
            step,
            pseudoinverse_cosine: cosine(&transported, &self.pinv_targets)?,
            fidelity_cosine: cosine(&transported, &self.probe_hidden)?,
        })
    }

    /// Run `steps` regression steps of `B y -> h` over fresh random pairs,
    /// recording the trajectory (step 0 is the state before training).
    ///
    /// Each step draws a fresh input batch, forms the realizable targets
    /// `y = W A x`, and moves `B` down the mean squared regression gradient.
    pub fn run(
        &mut self,
        steps: usize,
        lr: T,
        batch: usize,
        rng: &mut RngState,
    ) -> Result<Vec<LinearProbeRecord<T>>, DiagnosticsError> {
        if batch == 0 {
            return Err(DiagnosticsError::BadArgument(
                "batch must be positive".into(),
            ));
        }
        let n_x = self.input_map.cols();
        let inv_batch = T::one() / T::from_usize(batch);
        let mut trajectory = Vec::with_capacity(steps + 1);
        trajectory.push(self.record(0)?);
        for step in 1..=steps {
            let x = Mat::init_uniform(n_x, batch, rng, T::one());
            let h = self.input_map.matmul(&x)?;
            let y = self.output_map.matmul(&h)?;
            let residual = h.sub(&self.feedback.matmul(&y)?)?;
            let grad = residual.matmul(&y.transpose())?.scale(inv_batch);
            self.feedback.add_scaled_assign(&grad, lr)?;
            trajectory.push(self.record(step)?);
        }
        Ok(trajectory)
    }
}

/// Convenience wrapper: build a probe and run it with default regression
/// hyperparameters.
pub fn linear_probe<T: Scalar>(
    n_x: usize,
    n_h: usize,
    n_y: usize,
    steps: usize,
    rng: &mut RngState,
) -> Result<Vec<LinearProbeRecord<T>>, DiagnosticsError> {
    let mut probe = LinearProbe::new(n_x, n_h, n_y, rng)?;
    probe.run(steps, T::from_f64(0.05), 16, rng)
}

/// Render a column vector as a binary PGM (P5) image: values clamped to
/// `[0, 1]` and scaled to 0-255.
pub fn render_feature_map<T: Scalar>(
    x: &Mat<T>,
    width: usize,
    height: usize,
) -> Result<Vec<u8>, DiagnosticsError> {
    if !x.is_column() {
        return Err(ShapeError::NotColumn {
            op: "render_feature_map",
            shape: x.shape(),
        }
        .into());
    }
    if x.rows() != width * height {
        return Err(DiagnosticsError::BadArgument(format!(
            "render_feature_map: vector length {} does not match {width}x{height}",
            x.rows()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    for &v in x.as_slice() {
        let clamped = v.max(T::zero()).min(T::one()).to_f64();
        bytes.push((clamped * 255.0).round() as u8);
    }
    Ok(bytes)
}
