//! Experiment orchestration: configuration, the training loop, evaluation,
//! metrics emission, checkpointing, and feature-map generation.
//!
//! Everything here is pinned to `f64` and fully determined by
//! (config, seed): weight init, subset selection, the diagnostics probe
//! batch, and each epoch's shuffle run on named child streams of the seed,
//! so a rerun or a checkpoint resume reproduces every emitted byte.

mod checkpoint;
mod table;

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use checkpoint::{
    encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError, TrainState,
};
pub use table::{arch_label, emit_results_table, TableCell};

use crate::datasets::{load_cifar10, load_mnist, minibatches, one_hot, DataError, Dataset};
use crate::diagnostics::{alignment_report, render_feature_map, DiagnosticsError};
use crate::network::{bce_loss, ForwardNet};
use crate::numerics::{argmax, Mat, RngState, ShapeError};
use crate::rules::{train_step, Algo, BdfaUpdateMode, FeedbackChannel, RuleError, TrainHyper};

type Mat64 = Mat<f64>;
type Dataset64 = Dataset<f64>;

/// Named child streams of the experiment seed.
const STREAM_INIT: u64 = 0;
const STREAM_FEEDBACK: u64 = 1;
const STREAM_SUBSET: u64 = 2;
const STREAM_PROBE: u64 = 3;
const STREAM_EPOCH_BASE: u64 = 1000;

/// Size of the fixed probe batch used for alignment/fidelity diagnostics.
const PROBE_BATCH: usize = 256;

#[derive(Debug)]
pub enum HarnessError {
    Io {
        path: PathBuf,
        source: io::Error,
    },
    Data(DataError),
    Rule(RuleError),
    Shape(ShapeError),
    Diagnostics(DiagnosticsError),
    Checkpoint(CheckpointError),
    Config(String),
    /// The divergence guard fired: training is aborted, not silently NaN.
    Diverged {
        seed: u64,
        epoch: usize,
        loss: f64,
    },
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            HarnessError::Data(e) => write!(f, "{e}"),
            HarnessError::Rule(e) => write!(f, "{e}"),
            HarnessError::Shape(e) => write!(f, "{e}"),
            HarnessError::Diagnostics(e) => write!(f, "{e}"),
            HarnessError::Checkpoint(e) => write!(f, "{e}"),
            HarnessError::Config(msg) => write!(f, "invalid config: {msg}"),
            HarnessError::Diverged { seed, epoch, loss } => write!(
                f,
                "run diverged (seed {seed}, epoch {epoch}): epoch-mean loss {loss}"
            ),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        HarnessError::Data(e)
    }
}
impl From<RuleError> for HarnessError {
    fn from(e: RuleError) -> Self {
        HarnessError::Rule(e)
    }
}
impl From<ShapeError> for HarnessError {
    fn from(e: ShapeError) -> Self {
        HarnessError::Shape(e)
    }
}
impl From<DiagnosticsError> for HarnessError {
    fn from(e: DiagnosticsError) -> Self {
        HarnessError::Diagnostics(e)
    }
}
impl From<CheckpointError> for HarnessError {
    fn from(e: CheckpointError) -> Self {
        HarnessError::Checkpoint(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" | "cifar-10" => Ok(DatasetKind::Cifar10),
            other => Err(format!(
                "unknown dataset '{other}' (expected mnist|cifar10)"
            )),
        }
    }
}

/// Full experiment description. Defaults mirror the reference protocol:
/// lr 1e-4, 300 epochs, batch 128, Tanh hidden units, 50k/10k split,
/// seeds 1-5.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub dataset: DatasetKind,
    /// Root containing `mnist/` and/or `cifar10/` subdirectories.
    pub data_dir: PathBuf,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// BDFA backward-target mixing weight.
    pub alpha: f64,
    pub seeds: Vec<u64>,
    /// Train on the first n samples of a seeded permutation.
    pub subset_n: Option<usize>,
    pub bdfa_mode: BdfaUpdateMode,
    /// Compute alignment/fidelity diagnostics every this many epochs
    /// (0 disables; epoch 0 is always included when enabled).
    pub diagnostics_every: usize,
    /// Additionally checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algo: Algo::Bp,
            dataset: DatasetKind::Mnist,
            data_dir: PathBuf::from("data"),
            hidden_layers: 1,
            hidden_width: 400,
            epochs: 300,
            batch_size: 128,
            lr: 1e-4,
            alpha: 0.0,
            seeds: vec![1, 2, 3, 4, 5],
            subset_n: Some(50_000),
            bdfa_mode: BdfaUpdateMode::Analytic,
            diagnostics_every: 10,
            checkpoint_every: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// The reference alpha for a (rule, dataset) pair: 0.25 for BDFA on
    /// CIFAR-10, zero everywhere else.
    pub fn reference_alpha(algo: Algo, dataset: DatasetKind) -> f64 {
        match (algo, dataset) {
            (Algo::Bdfa, DatasetKind::Cifar10) => 0.25,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.hidden_layers == 0 {
            return Err(HarnessError::Config(
                "hidden_layers must be at least 1".into(),
            ));
        }
        if self.hidden_width == 0 {
            return Err(HarnessError::Config("hidden_width must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be positive".into()));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(HarnessError::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(HarnessError::Config(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.alpha > 0.0 && self.algo != Algo::Bdfa {
            return Err(HarnessError::Config(format!(
                "alpha mixing only applies to bdfa, not {}",
                self.algo
            )));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    /// Parse a JSON config file (missing fields take defaults).
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Layer sizes for this config against a dataset: input, hidden stack,
    /// classes.
    pub fn layer_sizes(&self, input_dim: usize, n_classes: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers + 2);
        sizes.push(input_dim);
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(n_classes);
        sizes
    }

    pub fn arch_label(&self) -> String {
        arch_label(self.hidden_layers, self.hidden_width)
    }

    fn checkpoint_path(&self, seed: u64, epoch: Option<usize>) -> PathBuf {
        match epoch {
            None => self
                .out_dir
                .join(format!("ckpt_{}_seed{seed}.ckpt", self.algo)),
            Some(e) => self
                .out_dir
                .join(format!("ckpt_{}_seed{seed}_epoch{e}.ckpt", self.algo)),
        }
    }
}

/// Load the train/test pair named by a config.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset64, Dataset64), HarnessError> {
    match cfg.dataset {
        DatasetKind::Mnist => {
            let dir = cfg.data_dir.join("mnist");
            let train = load_mnist(
                dir.join("train-images-idx3-ubyte"),
                dir.join("train-labels-idx1-ubyte"),
            )?;
            let test = load_mnist(
                dir.join("t10k-images-idx3-ubyte"),
                dir.join("t10k-labels-idx1-ubyte"),
            )?;
            Ok((train, test))
        }
        DatasetKind::Cifar10 => {
            let dir = cfg.data_dir.join("cifar10");
            let train_paths: Vec<PathBuf> = (1..=5)
                .map(|i| dir.join(format!("data_batch_{i}.bin")))
                .collect();
            let train = load_cifar10(&train_paths)?;
            let test = load_cifar10(&[dir.join("test_batch.bin")])?;
            Ok((train, test))
        }
    }
}

/// One row of the per-epoch metrics table.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub seed: u64,
    pub epoch: usize,
    pub forward_loss: f64,
    pub backward_loss: Option<f64>,
    pub test_error_percent: f64,
    /// Per-hidden-layer alignment angles (degrees); empty on epochs without
    /// diagnostics.
    pub angles: Vec<f64>,
    /// Per-hidden-layer feedback-fidelity cosines.
    pub fidelity: Vec<f64>,
    /// Wall time of the epoch; reported to callers but kept out of the CSV
    /// so reruns stay byte-identical.
    pub wall_time_seconds: f64,
}

/// Classification error in percent: predicted class is the argmax output.
pub fn evaluate(net: &ForwardNet<f64>, ds: &Dataset64) -> Result<f64, HarnessError> {
    Ok(evaluate_with_loss(net, ds)?.0)
}

/// Error percent plus mean test BCE, in fixed evaluation chunks.
pub fn evaluate_with_loss(
    net: &ForwardNet<f64>,
    ds: &Dataset64,
) -> Result<(f64, f64), HarnessError> {
    if ds.dim() != net.input_dim() {
        return Err(HarnessError::Shape(ShapeError::Mismatch {
            op: "evaluate",
            left: (ds.dim(), 1),
            right: (net.input_dim(), 1),
        }));
    }
    let mut wrong = 0usize;
    let mut loss_sum = 0.0;
    let mut dummy_rng = RngState::new(0); // unused: shuffle off
    for batch in minibatches(ds, 512, &mut dummy_rng, false) {
        let trace = net.forward(&batch.x)?;
        loss_sum += bce_loss(&trace.output, &batch.y)? * batch.size() as f64;
        for k in 0..batch.size() {
            let predicted = argmax(&trace.output.col(k))?;
            let truth = argmax(&batch.y.col(k))?;
            if predicted != truth {
                wrong += 1;
            }
        }
    }
    let n = ds.len() as f64;
    Ok((100.0 * wrong as f64 / n, loss_sum / n))
}

/// Everything `run_experiment` produces besides the files on disk.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub records: Vec<MetricsRecord>,
    /// (seed, final test error) per seed.
    pub final_errors: Vec<(u64, f64)>,
    pub mean_final_error: f64,
    pub metrics_path: PathBuf,
}

/// Run the configured experiment for every seed: init, epoch loop over
/// seeded shuffled minibatches, per-epoch test evaluation, periodic
/// diagnostics, metrics CSV, and a final checkpoint per seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let (train_full, test) = load_datasets(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|source| HarnessError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;

    let mut records = Vec::new();
    let mut final_errors = Vec::new();
    for &seed in &cfg.seeds {
        let state = init_state(cfg, seed, &train_full)?;
        let (seed_records, final_state) = run_seed(cfg, state, &train_full, &test)?;
        let final_error = seed_records
            .last()
            .map(|r| r.test_error_percent)
            .expect("at least the epoch-0 record exists");
        final_errors.push((seed, final_error));
        save_checkpoint(&final_state, cfg.checkpoint_path(seed, None))?;
        records.extend(seed_records);
    }

    let metrics_path = cfg.out_dir.join("metrics.csv");
    write_metrics_csv(&metrics_path, &records, cfg.hidden_layers)?;

    let mean_final_error =
        final_errors.iter().map(|(_, e)| e).sum::<f64>() / final_errors.len() as f64;
    Ok(ExperimentOutput {
        records,
        final_errors,
        mean_final_error,
        metrics_path,
    })
}

/// Fresh training state for a seed: net and channel initialized from child
/// streams of the seed.
pub fn init_state(
    cfg: &ExperimentConfig,
    seed: u64,
    train_full: &Dataset64,
) -> Result<TrainState, HarnessError> {
    let sizes = cfg.layer_sizes(train_full.dim(), train_full.n_classes);
    let mut init_rng = RngState::new(RngState::child_seed(seed, STREAM_INIT));
    let net = ForwardNet::new(&sizes, &mut init_rng);
    let mut feedback_rng = RngState::new(RngState::child_seed(seed, STREAM_FEEDBACK));
    let channel = FeedbackChannel::for_algo(cfg.algo, &sizes, &mut feedback_rng);
    Ok(TrainState {
        algo: cfg.algo,
        seed,
        completed_epochs: 0,
        net,
        channel,
    })
}

/// The seed-deterministic training subset for one seed.
fn seed_train_subset(
    cfg: &ExperimentConfig,
    seed: u64,
    train_full: &Dataset64,
) -> Result<Dataset64, HarnessError> {
    match cfg.subset_n {
        Some(n) => {
            let mut rng = RngState::new(RngState::child_seed(seed, STREAM_SUBSET));
            Ok(train_full.subset(n, &mut rng)?)
        }
        None => Ok(train_full.clone()),
    }
}

/// The fixed diagnostics probe batch for one seed.
fn probe_batch(seed: u64, train: &Dataset64) -> Result<(Mat64, Mat64), HarnessError> {
    let mut rng = RngState::new(RngState::child_seed(seed, STREAM_PROBE));
    let n = PROBE_BATCH.min(train.len());
    let perm = rng.permutation(train.len());
    let idx: Vec<usize> = perm.into_iter().take(n).collect();
    let mut xp = Mat::zeros(train.dim(), n);
    let mut yp = Mat::zeros(train.n_classes, n);
    for (k, &sample) in idx.iter().enumerate() {
        for (i, &px) in train.images.row(sample).iter().enumerate() {
            xp.set(i, k, px);
        }
        yp.set(train.labels[sample], k, 1.0);
    }
    Ok((xp, yp))
}

/// Advance a training state to `cfg.epochs`, emitting one record per epoch
/// (plus the epoch-0 evaluation record when starting fresh).
pub fn run_seed(
    cfg: &ExperimentConfig,
    mut state: TrainState,
    train_full: &Dataset64,
    test: &Dataset64,
) -> Result<(Vec<MetricsRecord>, TrainState), HarnessError> {
    let seed = state.seed;
    let train = seed_train_subset(cfg, seed, train_full)?;
    let (probe_x, probe_y) = probe_batch(seed, &train)?;
    let hyper = TrainHyper::new(cfg.lr, cfg.alpha, cfg.bdfa_mode)?;

    let mut records = Vec::new();
    let diagnostics_due =
        |epoch: usize| cfg.diagnostics_every > 0 && epoch.is_multiple_of(cfg.diagnostics_every);

    if state.completed_epochs == 0 {
        // evaluation-only record of the initialized net
        let started = Instant::now();
        let (err, test_loss) = evaluate_with_loss(&state.net, test)?;
        let (angles, fidelity) = if diagnostics_due(0) {
            diagnostics_row(&state, &probe_x, &probe_y)?
        } else {
            (Vec::new(), Vec::new())
        };
        records.push(MetricsRecord {
            seed,
            epoch: 0,
            forward_loss: test_loss,
            backward_loss: None,
            test_error_percent: err,
            angles,
            fidelity,
            wall_time_seconds: started.elapsed().as_secs_f64(),
        });
    }

    let mut epoch1_mean_loss: Option<f64> = None;
    for epoch in (state.completed_epochs as usize + 1)..=cfg.epochs {
        let started = Instant::now();
        let mut shuffle_rng =
            RngState::new(RngState::child_seed(seed, STREAM_EPOCH_BASE + epoch as u64));
        let mut loss_sum = 0.0;
        let mut backward_sum = 0.0;
        let mut batches = 0usize;
        for batch in minibatches(&train, cfg.batch_size, &mut shuffle_rng, true) {
            let metrics = train_step(
                cfg.algo,
                &mut state.net,
                &mut state.channel,
                &batch.x,
                &batch.y,
                &hyper,
            )?;
            loss_sum += metrics.forward_loss;
            backward_sum += metrics.backward_loss.unwrap_or(0.0);
            batches += 1;
        }
        state.completed_epochs = epoch as u64;
        let mean_loss = loss_sum / batches as f64;
        let mean_backward = cfg
            .algo
            .has_backward_phase()
            .then(|| backward_sum / batches as f64);

        // divergence guard: structured abort instead of NaN rows
        let reference = *epoch1_mean_loss.get_or_insert(mean_loss);
        if loss_diverged(mean_loss, reference) {
            return Err(HarnessError::Diverged {
                seed,
                epoch,
                loss: mean_loss,
            });
        }

        let (err, _) = evaluate_with_loss(&state.net, test)?;
        let (angles, fidelity) = if diagnostics_due(epoch) {
            diagnostics_row(&state, &probe_x, &probe_y)?
        } else {
            (Vec::new(), Vec::new())
        };
        records.push(MetricsRecord {
            seed,
            epoch,
            forward_loss: mean_loss,
            backward_loss: mean_backward,
            test_error_percent: err,
            angles,
            fidelity,
            wall_time_seconds: started.elapsed().as_secs_f64(),
        });

        if cfg.checkpoint_every > 0
            && epoch.is_multiple_of(cfg.checkpoint_every)
            && epoch < cfg.epochs
        {
            save_checkpoint(&state, cfg.checkpoint_path(seed, Some(epoch)))?;
        }
    }
    Ok((records, state))
}

/// Divergence predicate: the epoch-mean forward loss is non-finite or has
/// blown past 10x the first trained epoch's mean.
fn loss_diverged(epoch_mean: f64, first_epoch_mean: f64) -> bool {
    !epoch_mean.is_finite() || epoch_mean > 10.0 * first_epoch_mean.max(f64::MIN_POSITIVE)
}

fn diagnostics_row(
    state: &TrainState,
    probe_x: &Mat64,
    probe_y: &Mat64,
) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let report = alignment_report(&state.net, &state.channel, probe_x, probe_y)?;
    let fidelity = report.fidelity.iter().map(|(cos, _)| *cos).collect();
    Ok((report.angle_degrees, fidelity))
}

/// Write the metrics CSV: header
/// `seed,epoch,forward_loss,backward_loss,test_error,angle_l*,fidelity_l*`.
pub fn write_metrics_csv(
    path: &Path,
    records: &[MetricsRecord],
    hidden_layers: usize,
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str("seed,epoch,forward_loss,backward_loss,test_error");
    for l in 1..=hidden_layers {
        out.push_str(&format!(",angle_l{l}"));
    }
    for l in 1..=hidden_layers {
        out.push_str(&format!(",fidelity_l{l}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}", r.seed, r.epoch, r.forward_loss));
        match r.backward_loss {
            Some(v) => out.push_str(&format!(",{v}")),
            None => out.push_str(",n/a"),
        }
        out.push_str(&format!(",{}", r.test_error_percent));
        for l in 0..hidden_layers {
            match r.angles.get(l) {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        for l in 0..hidden_layers {
            match r.fidelity.get(l) {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Benchmark scale: quick desk runs or the full reference protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchScale {
    /// Minutes per cell: 20 epochs, lr 1e-3, 3 seeds, 10k-sample training
    /// subset.
    Desk,
    /// Hours per cell: 300 epochs, lr 1e-4, 5 seeds, 50k training samples.
    Full,
}

impl std::str::FromStr for BenchScale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(BenchScale::Desk),
            "full" => Ok(BenchScale::Full),
            other => Err(format!("unknown scale '{other}' (expected desk|full)")),
        }
    }
}

/// Base config for a benchmark grid at the given scale. Algorithm,
/// architecture, and alpha are filled per cell by [`run_bench`].
pub fn bench_preset(scale: BenchScale, dataset: DatasetKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset,
        ..ExperimentConfig::default()
    };
    match scale {
        BenchScale::Desk => {
            cfg.epochs = 20;
            cfg.lr = 1e-3;
            cfg.seeds = vec![1, 2, 3];
            cfg.subset_n = Some(10_000);
            cfg.diagnostics_every = 10;
        }
        BenchScale::Full => {
            cfg.epochs = 300;
            cfg.lr = 1e-4;
            cfg.seeds = vec![1, 2, 3, 4, 5];
            cfg.subset_n = Some(50_000);
            cfg.diagnostics_every = 50;
        }
    }
    cfg
}

/// Run an (architecture x algorithm) grid and emit `table.txt` and
/// `table.csv` under the base out directory. Cells report the mean final
/// test error across seeds; a failed cell (e.g. divergence guard) renders
/// as missing rather than aborting the rest of the grid.
pub fn run_bench(
    base: &ExperimentConfig,
    layer_counts: &[usize],
    widths: &[usize],
    algos: &[Algo],
) -> Result<(String, String), HarnessError> {
    fs::create_dir_all(&base.out_dir).map_err(|source| HarnessError::Io {
        path: base.out_dir.clone(),
        source,
    })?;
    let mut cells = Vec::new();
    for &layers in layer_counts {
        for &width in widths {
            for &algo in algos {
                let mut cfg = base.clone();
                cfg.algo = algo;
                cfg.hidden_layers = layers;
                cfg.hidden_width = width;
                cfg.alpha = ExperimentConfig::reference_alpha(algo, cfg.dataset);
                cfg.out_dir = base.out_dir.join(format!("{layers}x{width}_{algo}"));
                let label = arch_label(layers, width);
                let value = match run_experiment(&cfg) {
                    Ok(output) => Some(output.mean_final_error),
                    Err(HarnessError::Diverged { seed, epoch, loss }) => {
                        eprintln!(
                            "warning: {label} {algo} diverged (seed {seed}, epoch {epoch}, loss {loss})"
                        );
                        None
                    }
                    Err(other) => return Err(other),
                };
                cells.push(TableCell { label, algo, value });
            }
        }
    }
    let (table, csv) = emit_results_table(&cells, algos);
    let table_path = base.out_dir.join("table.txt");
    fs::write(&table_path, &table).map_err(|source| HarnessError::Io {
        path: table_path,
        source,
    })?;
    let csv_path = base.out_dir.join("table.csv");
    fs::write(&csv_path, &csv).map_err(|source| HarnessError::Io {
        path: csv_path,
        source,
    })?;
    Ok((table, csv))
}

/// Generate the ten class-conditional feature maps from a BFA checkpoint:
/// one-hot target -> backward generation -> PGM file per class.
pub fn generate_digits(
    checkpoint_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, HarnessError> {
    let state = load_checkpoint(checkpoint_path.as_ref())?;
    let backward = match &state.channel {
        FeedbackChannel::TrainedMirror(b) => b,
        other => {
            return Err(HarnessError::Config(format!(
                "checkpoint holds a {} channel; only bfa checkpoints have a generative path",
                other.kind_name()
            )))
        }
    };
    let dim = backward.recon_dim();
    if dim != 28 * 28 {
        return Err(HarnessError::Config(format!(
            "feature maps are 28x28 grayscale; checkpoint reconstructs {dim} values"
        )));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let n_classes = backward.target_dim();
    let mut paths = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let y = one_hot::<f64>(class, n_classes)?;
        let trace = backward.generate(&y)?;
        // identity output is unbounded; clamp into pixel range before render
        let clamped = trace.recon.map(|v| v.clamp(0.0, 1.0));
        let bytes = render_feature_map(&clamped, 28, 28)?;
        let path = out_dir.join(format!("digit_{class}.pgm"));
        fs::write(&path, bytes).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}
