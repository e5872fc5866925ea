use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gnn_unlearn::backbones::BackboneKind;
use gnn_unlearn::cli::{run_pipeline, run_stage, FlatConfig, Stage};

#[derive(Parser)]
#[command(
    name = "gnn-unlearn",
    version,
    about = "Graph node unlearning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the backbone and save `model.json`.
    Train(Common),
    /// Sample a request, fit the rectifier and save unlearned embeddings.
    Unlearn(Common),
    /// Retrain from scratch on the pruned graph.
    Retrain(Common),
    /// Assemble `report.json` from the stage artifacts.
    Eval(Common),
    /// Membership-inference attack on ours and the retrain oracle.
    Attack(Common),
    /// Poison, train, unlearn the poisoned nodes and compare F1.
    Efficacy(Common),
    /// Write a synthetic SBM dataset.
    GenSynth(Common),
    /// Embedding densities of original, unlearned and retrained models.
    Kde(Common),
    /// Every stage for every seed.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    backbone: Option<BackboneKind>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn resolve(&self) -> gnn_unlearn::Result<gnn_unlearn::cli::ExperimentConfig> {
        let mut flat = match &self.config {
            Some(p) => FlatConfig::read(p)?,
            None => FlatConfig::default(),
        };
        for kv in &self.sets {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                gnn_unlearn::Error::Config(format!("--set expects key=value, got {kv:?}"))
            })?;
            flat.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            flat.set("seeds", s.to_string())?;
        }
        if let Some(o) = &self.out {
            flat.set("out", o.display().to_string())?;
        }
        if let Some(r) = self.ratio {
            flat.set("unlearn.ratio", r.to_string())?;
        }
        if let Some(b) = self.backbone {
            flat.set("backbone", b.to_string())?;
        }
        flat.resolve()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, common) = match &cli.command {
        Command::Train(c) => (Some(Stage::Train), c),
        Command::Unlearn(c) => (Some(Stage::Unlearn), c),
        Command::Retrain(c) => (Some(Stage::Retrain), c),
        Command::Eval(c) => (Some(Stage::Eval), c),
        Command::Attack(c) => (Some(Stage::Attack), c),
        Command::Efficacy(c) => (Some(Stage::Efficacy), c),
        Command::GenSynth(c) => (Some(Stage::GenSynth), c),
        Command::Kde(c) => (Some(Stage::Kde), c),
        Command::Pipeline(c) => (None, c),
    };
    let result = common.resolve().and_then(|cfg| match stage {
        Some(s) => run_stage(s, &cfg).map(|p| println!("{}", p.display())),
        None => run_pipeline(&cfg).map(|sweep| {
            for (k, v) in &sweep.mean {
                println!("{k:<26} {v:.4}");
            }
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
