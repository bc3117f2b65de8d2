use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tsca::evaluate::{avg_performance_jobs, contrastive_accuracy_jobs};
use tsca::harness::checkpoint::decode_header;
use tsca::harness::{
    decode_checkpoint, load_checkpoint, run_improvement_experiment, run_subset_experiment,
    save_checkpoint, ExperimentConfig, Overrides, Profile,
};
use tsca::training::pretrain_with;
use tsca::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tsca",
    version,
    about = "Contrastive time-series pre-training and contrastive accuracy"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory holding <Name>_TRAIN.tsv / <Name>_TEST.tsv files.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run single-threaded so output files are reproducible byte for byte.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train an encoder and write <out>/checkpoint.tsca.
    Pretrain {
        /// UCR name or synthetic:<family>[:train[:test[:seed[:noise]]]].
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Contrastive accuracy of a checkpoint on a dataset's train split.
    EvalCa {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Fine-tune a classifier per task and report mean accuracies.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "dataset", required = true)]
        datasets: Vec<String>,
        #[arg(long)]
        freeze_encoder: bool,
    },
    /// Subset-ratio experiment; writes report.json and report.csv.
    ExpSubset,
    /// Pre-training-set improvement experiment; writes report.json and report.csv.
    ExpImprove,
    /// Print a checkpoint header.
    InspectCheckpoint { path: PathBuf },
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    let over = Overrides {
        profile: common.profile.map(|p| match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }),
        seed: common.seed,
        data_root: common.data_root.clone(),
        jobs: common.jobs,
        deterministic: common.deterministic,
    };
    match &common.config {
        Some(path) => ExperimentConfig::from_file(path, &over),
        None => ExperimentConfig::resolve(None, &over),
    }
}

fn dataset_ref(flag: Option<String>, cfg: &ExperimentConfig) -> Result<String> {
    flag.or_else(|| cfg.dataset.clone()).ok_or_else(|| {
        Error::Config("no dataset given (use --dataset or \"dataset\" in the config)".into())
    })
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, _) = decode_header(&bytes)?;
    let ckpt = decode_checkpoint(&bytes)?;
    print_json(&json!({
        "path": path,
        "num_params": ckpt.params.num_params(),
        "header": header,
    }))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = config(&cli.common)?;
    let out = &cli.common.out;
    let jobs = cfg.exec().threads();
    match cli.command {
        Command::Pretrain { dataset, epochs } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
                cfg.validate()?;
            }
            let set = cfg.load_dataset(&dataset_ref(dataset, &cfg)?)?;
            let ckpt = pretrain_with(&set, &cfg.train, &cfg.encoder, &cfg.augment, cfg.exec())?;
            let path = out.join("checkpoint.tsca");
            save_checkpoint(&ckpt, &path)?;
            print_json(&json!({
                "checkpoint": path,
                "dataset": set.name,
                "num_series": set.train.len(),
                "epochs": ckpt.provenance.epochs_run,
                "final_loss": ckpt.provenance.final_loss,
            }))
        }
        Command::EvalCa {
            checkpoint,
            dataset,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let set = cfg.load_dataset(&dataset_ref(dataset, &cfg)?)?;
            let ca = contrastive_accuracy_jobs(&ckpt, &set.train, &cfg.ca, jobs)?;
            print_json(&json!({"dataset": set.name, "ca": ca, "ca_config": cfg.ca}))
        }
        Command::Probe {
            checkpoint,
            datasets,
            freeze_encoder,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            cfg.probe.freeze_encoder |= freeze_encoder;
            let tasks = datasets
                .iter()
                .map(|d| cfg.load_dataset(d))
                .collect::<Result<Vec<_>>>()?;
            let perf = avg_performance_jobs(&ckpt.params, &tasks, &cfg.probe, jobs)?;
            print_json(&serde_json::to_value(&perf)?)
        }
        Command::ExpSubset => {
            let report = run_subset_experiment(&cfg)?;
            report.write(out)?;
            print_json(&json!({"report": out.join("report.json"), "summary": report.summary}))
        }
        Command::ExpImprove => {
            let report = run_improvement_experiment(&cfg)?;
            report.write(out)?;
            print_json(&json!({"report": out.join("report.json"), "summary": report.summary}))
        }
        Command::InspectCheckpoint { path } => inspect(&path),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
