use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bidirnet::diagnostics::alignment_report;
use bidirnet::harness::{
    bench_preset, evaluate, generate_digits, load_checkpoint, load_datasets, run_bench,
    run_experiment, run_seed, save_checkpoint, write_metrics_csv, BenchScale, DatasetKind,
    ExperimentConfig, HarnessError,
};
use bidirnet::numerics::{Mat, RngState};
use bidirnet::rules::{Algo, BdfaUpdateMode};

#[derive(Parser)]
#[command(
    name = "bidirnet",
    version,
    about = "Train MLPs with BP, FA, DFA, BFA, or BDFA error transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment (config file plus flag overrides).
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Generate the ten class-conditional feature maps from a BFA checkpoint.
    Generate(GenerateArgs),
    /// Alignment/fidelity report for a checkpoint on a probe batch.
    Diagnose(DiagnoseArgs),
    /// Run a full (architecture x algorithm) benchmark grid.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    /// Number of hidden layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden layer width.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// BDFA backward-target mixing weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed list (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Train on a seeded subset of this many samples.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(BdfaUpdateMode))]
    bdfa_mode: Option<BdfaUpdateMode>,
    /// Output directory for metrics, checkpoints, and images.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root directory holding mnist/ and cifar10/ data files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    diagnostics_every: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Resume a single-seed run from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

impl TrainArgs {
    fn build_config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.algo {
            cfg.algo = v;
        }
        if let Some(v) = self.dataset {
            cfg.dataset = v;
        }
        if let Some(v) = self.layers {
            cfg.hidden_layers = v;
        }
        if let Some(v) = self.width {
            cfg.hidden_width = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = &self.seed {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.subset {
            cfg.subset_n = Some(v);
        }
        if let Some(v) = self.bdfa_mode {
            cfg.bdfa_mode = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.data_dir {
            cfg.data_dir = v.clone();
        }
        if let Some(v) = self.diagnostics_every {
            cfg.diagnostics_every = v;
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "mnist")]
    dataset: DatasetKind,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "out/digits")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "mnist")]
    dataset: DatasetKind,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Probe batch size drawn from the test split.
    #[arg(long, default_value_t = 256)]
    probe: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "desk")]
    scale: BenchScale,
    #[arg(long, default_value = "mnist")]
    dataset: DatasetKind,
    /// Algorithms to include.
    #[arg(long, value_delimiter = ',', default_values_t = Algo::ALL)]
    algos: Vec<Algo>,
    /// Hidden widths to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![400usize])]
    widths: Vec<usize>,
    /// Hidden layer counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize])]
    layer_counts: Vec<usize>,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "out/bench")]
    out: PathBuf,
    /// Override the preset epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.build_config()?;
            match &args.resume {
                None => {
                    let output = run_experiment(&cfg)?;
                    for (seed, err) in &output.final_errors {
                        println!("seed {seed}: test error {err:.2}%");
                    }
                    println!(
                        "mean over {} seed(s): {:.2}%",
                        output.final_errors.len(),
                        output.mean_final_error
                    );
                    println!("metrics: {}", output.metrics_path.display());
                }
                Some(ckpt) => {
                    let state = load_checkpoint(ckpt)?;
                    if state.algo != cfg.algo {
                        return Err(HarnessError::Config(format!(
                            "checkpoint algorithm {} does not match configured {}",
                            state.algo, cfg.algo
                        )));
                    }
                    let (train, test) = load_datasets(&cfg)?;
                    let seed = state.seed;
                    let from = state.completed_epochs;
                    let (records, final_state) = run_seed(&cfg, state, &train, &test)?;
                    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| HarnessError::Io {
                        path: cfg.out_dir.clone(),
                        source,
                    })?;
                    let metrics_path = cfg.out_dir.join(format!("metrics_resumed_seed{seed}.csv"));
                    write_metrics_csv(&metrics_path, &records, cfg.hidden_layers)?;
                    let ckpt_path = cfg
                        .out_dir
                        .join(format!("ckpt_{}_seed{seed}.ckpt", cfg.algo));
                    save_checkpoint(&final_state, &ckpt_path)?;
                    if let Some(last) = records.last() {
                        println!(
                            "resumed seed {seed} from epoch {from} to {}: test error {:.2}%",
                            last.epoch, last.test_error_percent
                        );
                    } else {
                        println!("resumed seed {seed}: nothing to do (already at {from} epochs)");
                    }
                    println!("metrics: {}", metrics_path.display());
                }
            }
        }
        Command::Eval(args) => {
            let state = load_checkpoint(&args.checkpoint)?;
            let cfg = ExperimentConfig {
                dataset: args.dataset,
                data_dir: args.data_dir,
                ..ExperimentConfig::default()
            };
            let (_, test) = load_datasets(&cfg)?;
            let err = evaluate(&state.net, &test)?;
            println!(
                "{} checkpoint (seed {}, {} epochs): test error {err:.2}%",
                state.algo, state.seed, state.completed_epochs
            );
        }
        Command::Generate(args) => {
            let paths = generate_digits(&args.checkpoint, &args.out)?;
            for p in &paths {
                println!("{}", p.display());
            }
        }
        Command::Diagnose(args) => {
            let state = load_checkpoint(&args.checkpoint)?;
            let cfg = ExperimentConfig {
                dataset: args.dataset,
                data_dir: args.data_dir,
                ..ExperimentConfig::default()
            };
            let (_, test) = load_datasets(&cfg)?;
            // fixed probe drawn from the test split with the checkpoint seed
            let mut rng = RngState::new(RngState::child_seed(state.seed, 3));
            let n = args.probe.min(test.len());
            let idx: Vec<usize> = rng.permutation(test.len()).into_iter().take(n).collect();
            let mut x = Mat::zeros(test.dim(), n);
            let mut y = Mat::zeros(test.n_classes, n);
            for (k, &sample) in idx.iter().enumerate() {
                for (i, &px) in test.images.row(sample).iter().enumerate() {
                    x.set(i, k, px);
                }
                y.set(test.labels[sample], k, 1.0);
            }
            let report = alignment_report(&state.net, &state.channel, &x, &y)?;
            println!(
                "{} checkpoint (seed {}, {} epochs), probe of {n} test samples:",
                state.algo, state.seed, state.completed_epochs
            );
            for (l, ((angle, cos), (fcos, fl2))) in report
                .angle_degrees
                .iter()
                .zip(&report.cosine)
                .zip(&report.fidelity)
                .enumerate()
            {
                println!(
                    "  hidden layer {}: delta angle {angle:.2} deg (cos {cos:.4}), fidelity cos {fcos:.4}, fidelity l2 {fl2:.4}",
                    l + 1
                );
            }
            if let Some(pc) = report.pseudoinverse_cosine {
                println!("  top-layer transport vs pseudoinverse direction: cos {pc:.4}");
            }
        }
        Command::Bench(args) => {
            let mut base = bench_preset(args.scale, args.dataset);
            base.data_dir = args.data_dir;
            base.out_dir = args.out;
            if let Some(epochs) = args.epochs {
                base.epochs = epochs;
            }
            let (table, _) = run_bench(&base, &args.layer_counts, &args.widths, &args.algos)?;
            println!("{table}");
            println!("written to {}", base.out_dir.display());
        }
    }
    Ok(())
}
