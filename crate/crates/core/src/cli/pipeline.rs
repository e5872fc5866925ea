use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbones::{
    classify, micro_f1, train_model, write_capture, Capture, Hyper, TrainedModel,
};
use crate::cli::config::{DatasetSource, ExperimentConfig, UnlearnKind};
use crate::error::{Error, Result};
use crate::evalsuite::{
    mean_direction, mia_auc_among, record_runtime, run_efficacy, EvalReport, KdeTriple, SweepReport,
};
use crate::graph::{
    load_dataset, remove_edges, remove_nodes, sample_edge_request, sample_unlearn_set, Graph,
    Remap, RequestKind, SplitSpec, UnlearnRequest,
};
use crate::numerics::Matrix;
use crate::unlearner::{
    unlearn, RectifierCheckpoint, RectifierConfig, UnlearnOutcome, UnlearnedEmbeddings,
};

/// Marker written next to the artifacts of a stage that failed.
pub const FAILED_MARKER: &str = "FAILED";

/// Caps the worker threads of a seed sweep.
pub const THREADS_ENV: &str = "UNLEARN_THREADS";

/// The graph and split for `seed`: loaded from disk, or a fresh SBM.
pub fn load_graph(cfg: &ExperimentConfig, seed: u64) -> Result<(Graph, SplitSpec)> {
    match &cfg.dataset {
        DatasetSource::Synth(sbm) => sbm.generate(seed),
        DatasetSource::Dir(dir) => load_dataset(dir),
    }
}

pub fn hyper_for(cfg: &ExperimentConfig, seed: u64) -> Hyper {
    Hyper {
        seed,
        ..cfg.hyper.clone()
    }
}

pub fn rectifier_for(cfg: &ExperimentConfig, seed: u64) -> RectifierConfig {
    RectifierConfig {
        seed,
        ..cfg.rectifier.clone()
    }
}

pub fn sample_request(
    cfg: &ExperimentConfig,
    g: &Graph,
    split: &SplitSpec,
    seed: u64,
) -> Result<UnlearnRequest> {
    match cfg.unlearn_kind {
        UnlearnKind::Nodes => {
            cfg.check_request_size(split.train.len())?;
            sample_unlearn_set(split, cfg.ratio, seed)
        }
        UnlearnKind::Edges => {
            cfg.check_request_size(g.num_edges())?;
            sample_edge_request(g, cfg.ratio, seed)
        }
    }
}

/// A model trained from scratch on the graph with the request applied.
#[derive(Debug, Clone)]
pub struct Retrained {
    pub model: TrainedModel,
    pub graph: Graph,
    pub split: SplitSpec,
    pub remap: Remap,
    pub seconds: f64,
}

impl Retrained {
    pub fn f1(&self) -> Result<f64> {
        micro_f1(
            &classify(&self.model.capture.h_k),
            self.graph.labels(),
            &self.split.test,
        )
    }
}

/// The graph and split seen by the retrain oracle.
pub fn pruned(
    g: &Graph,
    split: &SplitSpec,
    request: &UnlearnRequest,
) -> Result<(Graph, SplitSpec, Remap)> {
    match &request.kind {
        RequestKind::Nodes(u) => {
            let (pg, remap) = remove_nodes(g, u)?;
            let ps = split.remap(&remap);
            Ok((pg, ps, remap))
        }
        RequestKind::Edges(e) => Ok((remove_edges(g, e)?, split.clone(), Remap::identity(g.n()))),
    }
}

/// Retrains with the same seed as the original model; the timer covers
/// pruning and training.
pub fn retrain(
    g: &Graph,
    split: &SplitSpec,
    request: &UnlearnRequest,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Retrained> {
    let timed = record_runtime("retrain", || -> Result<_> {
        let (graph, split, remap) = pruned(g, split, request)?;
        let model = train_model(&graph, &split, cfg.backbone, &hyper_for(cfg, seed))?.model;
        Ok((model, graph, split, remap))
    });
    let (model, graph, split, remap) = timed.value?;
    Ok(Retrained {
        model,
        graph,
        split,
        remap,
        seconds: timed.seconds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub mia_auc_ours: f64,
    pub mia_auc_retrain: f64,
}

/// Membership inference over the original training nodes: embeddings of the
/// original model against ours, and against the retrained weights run on
/// the full original graph.
pub fn attack(
    g: &Graph,
    split: &SplitSpec,
    request: &UnlearnRequest,
    model: &TrainedModel,
    h_tilde: &Matrix,
    retrained: &TrainedModel,
) -> Result<AttackResult> {
    let u = request.node_set();
    if u.is_empty() {
        return Err(Error::InvalidRequest(
            "membership inference needs a node request".into(),
        ));
    }
    let before = &model.capture.h_k;
    let ours = mia_auc_among(before, h_tilde, u, &split.train)?;
    let theirs = mia_auc_among(before, &retrained.forward(g)?.h_k, u, &split.train)?;
    Ok(AttackResult {
        mia_auc_ours: ours,
        mia_auc_retrain: theirs,
    })
}

/// Original, unlearned and retrained embedding densities over the retained
/// nodes, in polar form around the original mean direction.
pub fn kde_triple(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    embeddings: &UnlearnedEmbeddings,
    retrained: &TrainedModel,
) -> Result<KdeTriple> {
    let reference = mean_direction(&model.capture.h_k)?;
    KdeTriple::build(
        &model.capture.h_k.select_rows(&embeddings.retained),
        &embeddings.retained_view(),
        &retrained.capture.h_k,
        &reference,
        cfg.eval.kde_bandwidth,
        cfg.eval.kde_steps,
    )
}

/// Everything one seed produces.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub graph: Graph,
    pub split: SplitSpec,
    pub model: TrainedModel,
    pub request: UnlearnRequest,
    pub outcome: UnlearnOutcome,
    pub retrained: Retrained,
    pub kde: Option<KdeTriple>,
    pub report: EvalReport,
}

/// Train, unlearn, retrain and evaluate for one seed, in memory.
pub fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    data: Option<&(Graph, SplitSpec)>,
) -> Result<SeedRun> {
    let (g, split) = match data {
        Some((g, s)) => (g.clone(), s.clone()),
        None => load_graph(cfg, seed)?,
    };
    let model = train_model(&g, &split, cfg.backbone, &hyper_for(cfg, seed))?.model;
    let f1_original = micro_f1(&classify(&model.capture.h_k), g.labels(), &split.test)?;
    let request = sample_request(cfg, &g, &split, seed)?;
    let outcome = unlearn(&model, &g, &request, &rectifier_for(cfg, seed))?;
    let f1_unlearned = micro_f1(
        &classify(&outcome.embeddings.h_tilde),
        g.labels(),
        &split.test,
    )?;
    let retrained = retrain(&g, &split, &request, cfg, seed)?;

    let attack = match (cfg.eval.mia, &request.kind) {
        (true, RequestKind::Nodes(_)) => Some(attack(
            &g,
            &split,
            &request,
            &model,
            &outcome.embeddings.h_tilde,
            &retrained.model,
        )?),
        _ => None,
    };
    let kde = cfg
        .eval
        .kde
        .then(|| kde_triple(cfg, &model, &outcome.embeddings, &retrained.model))
        .transpose()?;
    let efficacy_delta = if cfg.eval.efficacy {
        let e = run_efficacy(
            &g,
            &split,
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
    let report = EvalReport {
        seed,
        f1_original,
        f1_unlearned,
        f1_retrain: retrained.f1()?,
        rt_unlearn: outcome.seconds,
        rt_retrain: retrained.seconds,
        mia_auc_ours: attack.map(|a| a.mia_auc_ours),
        mia_auc_retrain: attack.map(|a| a.mia_auc_retrain),
        efficacy_delta,
        kde: kde.as_ref().map(KdeTriple::summary).transpose()?,
        config: seed_config(cfg, seed),
    };
    report.validate()?;
    Ok(SeedRun {
        graph: g,
        split,
        model,
        request,
        outcome,
        retrained,
        kde,
        report,
    })
}

fn seed_config(cfg: &ExperimentConfig, seed: u64) -> std::collections::BTreeMap<String, String> {
    let mut flat = cfg.to_flat();
    flat.insert("seeds".into(), seed.to_string());
    flat
}

/// Writes a seed's checkpoints, embeddings, request, KDE grids and report.
pub fn write_seed(run: &SeedRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    run.model.checkpoint().save(dir.join("model.json"))?;
    write_json(dir.join("request.json"), &run.request)?;
    RectifierCheckpoint::from_rectifier(&run.outcome.rectifier).save(dir.join("rectifier.json"))?;
    let unlearned = Capture {
        h_prev: run.model.capture.h_prev.clone(),
        h_k: run.outcome.embeddings.h_tilde.clone(),
    };
    write_capture(dir.join("unlearned.bin"), &unlearned)?;
    run.retrained
        .model
        .checkpoint()
        .save(dir.join("retrain.json"))?;
    if let Some(k) = &run.kde {
        k.write_csvs(dir)?;
    }
    fs::write(dir.join("report.json"), run.report.to_json()?).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn mark_failed(dir: &Path, err: &Error) {
    // Best effort: the original error is what the caller reports.
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join(FAILED_MARKER), format!("{err}\n"));
}

/// Worker pool sized by `UNLEARN_THREADS`, or rayon's default when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| {
                Error::Config(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))
            })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every seed of `cfg` in parallel, writing `seed_<s>/` directories,
/// the resolved `config.txt` and the aggregate `report.json` under
/// `cfg.out`. A failing seed leaves its partial artifacts plus a `FAILED`
/// marker, and the sweep returns the first error.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    fs::write(out.join("config.txt"), cfg.to_text()).map_err(|e| Error::io(out, e))?;
    let result = sweep(cfg);
    if let Err(e) = &result {
        mark_failed(out, e);
    }
    result
}

fn sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let data = match &cfg.dataset {
        DatasetSource::Dir(dir) => {
            let loaded = load_dataset(dir)?;
            if cfg.unlearn_kind == UnlearnKind::Nodes {
                cfg.check_request_size(loaded.1.train.len())?;
            }
            Some(loaded)
        }
        DatasetSource::Synth(_) => None,
    };
    let pool = thread_pool()?;
    let results: Vec<Result<EvalReport>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let dir = cfg.out.join(format!("seed_{seed}"));
                let _ = fs::remove_file(dir.join(FAILED_MARKER));
                let res = run_seed(cfg, seed, data.as_ref()).and_then(|run| {
                    write_seed(&run, &dir)?;
                    Ok(run.report)
                });
                if let Err(e) = &res {
                    mark_failed(&dir, e);
                }
                res
            })
            .collect()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    let sweep = SweepReport::new(reports, cfg.to_flat())?;
    write_json(cfg.out.join("report.json"), &sweep)?;
    Ok(sweep)
}
