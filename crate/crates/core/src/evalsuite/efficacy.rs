use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbones::{classify, micro_f1, train_model, BackboneKind, Hyper};
use crate::error::{Error, Result};
use crate::graph::{poison_labels, sample_unlearn_set, Graph, SplitSpec};
use crate::unlearner::{unlearn, RectifierConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyRun {
    pub seed: u64,
    pub poisoned: usize,
    pub f1_poisoned: f64,
    pub f1_unlearned: f64,
}

impl EfficacyRun {
    pub fn delta(&self) -> f64 {
        self.f1_unlearned - self.f1_poisoned
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyOutcome {
    pub runs: Vec<EfficacyRun>,
    /// Mean over seeds of `f1_unlearned − f1_poisoned`.
    pub delta: f64,
}

impl EfficacyOutcome {
    pub fn improved(&self) -> usize {
        self.runs.iter().filter(|r| r.delta() > 0.0).count()
    }
}

/// Poisons a seeded `poison_frac` of the training labels, trains on the
/// poisoned graph, unlearns exactly the poisoned nodes and scores both
/// models on the clean test labels. Seeds run in parallel.
pub fn run_efficacy(
    g: &Graph,
    split: &SplitSpec,
    kind: BackboneKind,
    poison_frac: f64,
    seeds: &[u64],
    hyper: &Hyper,
    rectifier: &RectifierConfig,
) -> Result<EfficacyOutcome> {
    if !(poison_frac > 0.0 && poison_frac < 0.5) {
        return Err(Error::InvalidRequest(format!(
            "poison_frac must lie in (0, 0.5), got {poison_frac}"
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidRequest(
            "efficacy needs at least one seed".into(),
        ));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| efficacy_once(g, split, kind, poison_frac, seed, hyper, rectifier))
        .collect::<Result<Vec<_>>>()?;
    let delta = runs.iter().map(EfficacyRun::delta).sum::<f64>() / runs.len() as f64;
    Ok(EfficacyOutcome { runs, delta })
}

fn efficacy_once(
    g: &Graph,
    split: &SplitSpec,
    kind: BackboneKind,
    poison_frac: f64,
    seed: u64,
    hyper: &Hyper,
    rectifier: &RectifierConfig,
) -> Result<EfficacyRun> {
    let request = sample_unlearn_set(split, poison_frac, seed)?;
    let poisoned = poison_labels(g, request.node_set(), g.num_classes())?;
    let hyper = Hyper {
        seed,
        ..hyper.clone()
    };
    let model = train_model(&poisoned, split, kind, &hyper)?.model;
    let f1_poisoned = micro_f1(&classify(&model.capture.h_k), g.labels(), &split.test)?;
    let config = RectifierConfig {
        seed,
        ..rectifier.clone()
    };
    let out = unlearn(&model, &poisoned, &request, &config)?;
    let f1_unlearned = micro_f1(&classify(&out.embeddings.h_tilde), g.labels(), &split.test)?;
    Ok(EfficacyRun {
        seed,
        poisoned: request.len(),
        f1_poisoned,
        f1_unlearned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SbmConfig;

    fn small() -> (Graph, SplitSpec) {
        let cfg = SbmConfig {
            per_block: 30,
            ..SbmConfig::default()
        };
        cfg.generate(1).unwrap()
    }

    #[test]
    fn untrained_rectifier_changes_nothing() {
        let (g, split) = small();
        let hyper = Hyper {
            epochs: 30,
            ..Hyper::defaults(BackboneKind::Sgc)
        };
        let rc = RectifierConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = run_efficacy(&g, &split, BackboneKind::Sgc, 0.2, &[0, 1], &hyper, &rc).unwrap();
        assert_eq!(out.delta, 0.0);
        assert_eq!(out.runs.len(), 2);
        assert!(out.runs.iter().all(|r| r.poisoned == 27));
    }

    #[test]
    fn rejects_bad_fractions() {
        let (g, split) = small();
        let h = Hyper::defaults(BackboneKind::Sgc);
        let rc = RectifierConfig::default();
        for f in [0.0, 0.5, 0.7] {
            assert!(run_efficacy(&g, &split, BackboneKind::Sgc, f, &[0], &h, &rc).is_err());
        }
        assert!(run_efficacy(&g, &split, BackboneKind::Sgc, 0.1, &[], &h, &rc).is_err());
    }
}
