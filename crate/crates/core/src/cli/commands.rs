//! Single-seed stages that communicate through files in the output
//! directory, so each step of the pipeline can be run on its own.
//!
//! | file                 | written by | contents                          |
//! |----------------------|------------|-----------------------------------|
//! | `dataset/`           | gen-synth  | interchange dataset               |
//! | `model.json`         | train      | backbone checkpoint               |
//! | `request.json`       | unlearn    | sampled unlearning request        |
//! | `rectifier.json`     | unlearn    | rectifier checkpoint              |
//! | `unlearned.bin`      | unlearn    | capture with `h_k` = unlearned    |
//! | `retrain.json`       | retrain    | retrained backbone checkpoint     |
//! | `*.timing.json`      | each stage | wall-clock seconds and test F1    |
//! | `report.json`        | eval       | [`EvalReport`]                    |
//! | `attack.json`        | attack     | membership-inference AUCs         |
//! | `kde_*.csv`, `kde.json` | kde     | densities and their distances     |
//! | `efficacy.json`      | efficacy   | poison-and-unlearn outcome        |

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backbones::{
    classify, extract_h, micro_f1, read_capture, train_model, write_capture, Capture, Checkpoint,
    TrainedModel,
};
use crate::cli::config::{DatasetSource, ExperimentConfig};
use crate::cli::pipeline::{
    attack, hyper_for, kde_triple, load_graph, mark_failed, pruned, rectifier_for, retrain,
    sample_request, write_json,
};
use crate::error::{Error, Result};
use crate::evalsuite::{run_efficacy, EvalReport, KdeTriple};
use crate::graph::{save_dataset, Graph, RequestKind, SplitSpec, UnlearnRequest};
use crate::unlearner::{unlearn, RectifierCheckpoint, UnlearnedEmbeddings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenSynth,
    Train,
    Unlearn,
    Retrain,
    Eval,
    Attack,
    Kde,
    Efficacy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub seconds: f64,
    pub f1: f64,
}

/// Runs `stage` for the first configured seed in `cfg.out`, returning the
/// main artifact's path. Failures leave a `FAILED` marker there.
pub fn run_stage(stage: Stage, cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let res = dispatch(stage, cfg, &dir);
    if let Err(e) = &res {
        mark_failed(&dir, e);
    }
    res
}

fn dispatch(stage: Stage, cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let seed = cfg.seeds[0];
    match stage {
        Stage::GenSynth => gen_synth(cfg, seed, dir),
        Stage::Train => train(cfg, seed, dir),
        Stage::Unlearn => unlearn_stage(cfg, seed, dir),
        Stage::Retrain => retrain_stage(cfg, seed, dir),
        Stage::Eval => eval(cfg, seed, dir),
        Stage::Attack => attack_stage(cfg, seed, dir),
        Stage::Kde => kde_stage(cfg, seed, dir),
        Stage::Efficacy => efficacy(cfg, seed, dir),
    }
}

fn gen_synth(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let DatasetSource::Synth(sbm) = &cfg.dataset else {
        return Err(Error::Config("gen-synth needs dataset = synth".into()));
    };
    let (g, split) = sbm.generate(seed)?;
    let path = dir.join("dataset");
    save_dataset(&path, &g, &split)?;
    Ok(path)
}

fn train(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let (g, split) = load_graph(cfg, seed)?;
    let out = train_model(&g, &split, cfg.backbone, &hyper_for(cfg, seed))?;
    let f1 = micro_f1(&classify(&out.model.capture.h_k), g.labels(), &split.test)?;
    let path = dir.join("model.json");
    out.model.checkpoint().save(&path)?;
    write_json(
        dir.join("train.timing.json"),
        &StageTiming {
            seconds: out.seconds,
            f1,
        },
    )?;
    Ok(path)
}

fn unlearn_stage(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let (g, split) = load_graph(cfg, seed)?;
    let model = load_model(dir, &g)?;
    let request = sample_request(cfg, &g, &split, seed)?;
    write_json(dir.join("request.json"), &request)?;
    let out = unlearn(&model, &g, &request, &rectifier_for(cfg, seed))?;
    RectifierCheckpoint::from_rectifier(&out.rectifier).save(dir.join("rectifier.json"))?;
    let path = dir.join("unlearned.bin");
    let cap = Capture {
        h_prev: model.capture.h_prev.clone(),
        h_k: out.embeddings.h_tilde.clone(),
    };
    write_capture(&path, &cap)?;
    let f1 = micro_f1(&classify(&out.embeddings.h_tilde), g.labels(), &split.test)?;
    write_json(
        dir.join("unlearn.timing.json"),
        &StageTiming {
            seconds: out.seconds,
            f1,
        },
    )?;
    Ok(path)
}

fn retrain_stage(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let (g, split) = load_graph(cfg, seed)?;
    let request: UnlearnRequest = read_json(&dir.join("request.json"))?;
    let r = retrain(&g, &split, &request, cfg, seed)?;
    let path = dir.join("retrain.json");
    r.model.checkpoint().save(&path)?;
    write_json(
        dir.join("retrain.timing.json"),
        &StageTiming {
            seconds: r.seconds,
            f1: r.f1()?,
        },
    )?;
    Ok(path)
}

/// Everything the evaluation stages read back.
struct Artifacts {
    g: Graph,
    split: SplitSpec,
    model: TrainedModel,
    request: UnlearnRequest,
    embeddings: UnlearnedEmbeddings,
    retrained: TrainedModel,
}

fn load_artifacts(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Artifacts> {
    let (g, split) = load_graph(cfg, seed)?;
    let model = load_model(dir, &g)?;
    let request: UnlearnRequest = read_json(&dir.join("request.json"))?;
    let h_tilde = read_capture(dir.join("unlearned.bin"))?.h_k;
    if h_tilde.shape() != model.capture.h_k.shape() {
        return Err(Error::Contract(
            "unlearned.bin does not match the model".into(),
        ));
    }
    // Sanity check that the rectifier still matches the model.
    RectifierCheckpoint::load(dir.join("rectifier.json"))?.into_rectifier(extract_h(&model)?)?;
    let retained = match &request.kind {
        RequestKind::Nodes(u) => (0..g.n()).filter(|i| u.binary_search(i).is_err()).collect(),
        RequestKind::Edges(_) => (0..g.n()).collect(),
    };
    let (pg, _, _) = pruned(&g, &split, &request)?;
    let retrained =
        TrainedModel::from_checkpoint(Checkpoint::load(dir.join("retrain.json"))?, &pg)?;
    Ok(Artifacts {
        g,
        split,
        model,
        request,
        embeddings: UnlearnedEmbeddings { h_tilde, retained },
        retrained,
    })
}

fn eval(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let a = load_artifacts(cfg, seed, dir)?;
    let unl: StageTiming = read_json(&dir.join("unlearn.timing.json"))?;
    let ret: StageTiming = read_json(&dir.join("retrain.timing.json"))?;
    let attack = match (cfg.eval.mia, &a.request.kind) {
        (true, RequestKind::Nodes(_)) => Some(attack(
            &a.g,
            &a.split,
            &a.request,
            &a.model,
            &a.embeddings.h_tilde,
            &a.retrained,
        )?),
        _ => None,
    };
    let kde = if cfg.eval.kde {
        let k = kde_triple(cfg, &a.model, &a.embeddings, &a.retrained)?;
        k.write_csvs(dir)?;
        Some(k.summary()?)
    } else {
        None
    };
    let efficacy_delta = if cfg.eval.efficacy {
        let e = run_efficacy(
            &a.g,
            &a.split,
            cfg.backbone,
            cfg.eval.poison_frac,
            &[seed],
            &cfg.hyper,
            &cfg.rectifier,
        )?;
        Some(e.delta)
    } else {
        None
    };
    let mut config = cfg.to_flat();
    config.insert("seeds".into(), seed.to_string());
    let report = EvalReport {
        seed,
        f1_original: micro_f1(&classify(&a.model.capture.h_k), a.g.labels(), &a.split.test)?,
        f1_unlearned: unl.f1,
        f1_retrain: ret.f1,
        rt_unlearn: unl.seconds,
        rt_retrain: ret.seconds,
        mia_auc_ours: attack.map(|x| x.mia_auc_ours),
        mia_auc_retrain: attack.map(|x| x.mia_auc_retrain),
        efficacy_delta,
        kde,
        config,
    };
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn attack_stage(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let a = load_artifacts(cfg, seed, dir)?;
    let res = attack(
        &a.g,
        &a.split,
        &a.request,
        &a.model,
        &a.embeddings.h_tilde,
        &a.retrained,
    )?;
    let path = dir.join("attack.json");
    write_json(path.clone(), &res)?;
    Ok(path)
}

fn kde_stage(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let a = load_artifacts(cfg, seed, dir)?;
    let k: KdeTriple = kde_triple(cfg, &a.model, &a.embeddings, &a.retrained)?;
    k.write_csvs(dir)?;
    let path = dir.join("kde.json");
    write_json(path.clone(), &k.summary()?)?;
    Ok(path)
}

fn efficacy(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<PathBuf> {
    let (g, split) = load_graph(cfg, seed)?;
    let e = run_efficacy(
        &g,
        &split,
        cfg.backbone,
        cfg.eval.poison_frac,
        &cfg.seeds,
        &cfg.hyper,
        &cfg.rectifier,
    )?;
    let path = dir.join("efficacy.json");
    write_json(path.clone(), &e)?;
    Ok(path)
}

fn load_model(dir: &Path, g: &Graph) -> Result<TrainedModel> {
    TrainedModel::from_checkpoint(Checkpoint::load(dir.join("model.json"))?, g)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
