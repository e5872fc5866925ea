//! Measurements for an unlearning run: utility (micro-F1), running time,
//! poison-and-unlearn efficacy, membership-inference AUC and 2-D kernel
//! density estimates of the embedding distribution.

mod efficacy;
mod kde;
mod mia;

pub use crate::backbones::micro_f1;
pub use efficacy::{run_efficacy, EfficacyOutcome, EfficacyRun};
pub use kde::{
    embed_to_polar, kde_at, kde_distance, kde_pdf, mean_direction, GridSpec, KdeGrid,
    DEFAULT_KDE_STEPS, KDE_PAD,
};
pub use mia::{mia_auc, mia_auc_among};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A value with the wall-clock seconds it took to produce.
#[derive(Debug, Clone)]
pub struct Timed<T> {
    pub label: String,
    pub value: T,
    pub seconds: f64,
}

/// Runs `f` under a monotonic clock.
pub fn record_runtime<T>(label: &str, f: impl FnOnce() -> T) -> Timed<T> {
    let start = Instant::now();
    let value = f();
    Timed {
        label: label.to_string(),
        value,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Densities of the original, unlearned and retrained embeddings on one
/// shared lattice.
#[derive(Debug, Clone)]
pub struct KdeTriple {
    pub original: KdeGrid,
    pub unlearned: KdeGrid,
    pub retrain: KdeGrid,
}

impl KdeTriple {
    /// Maps each embedding set to polar form around `reference` and
    /// estimates all three densities on a grid covering every sample.
    pub fn build(
        original: &Matrix,
        unlearned: &Matrix,
        retrain: &Matrix,
        reference: &[f64],
        bandwidth: f64,
        steps: usize,
    ) -> Result<KdeTriple> {
        let po = embed_to_polar(original, reference)?;
        let pu = embed_to_polar(unlearned, reference)?;
        let pr = embed_to_polar(retrain, reference)?;
        let spec = GridSpec::covering(&[&po, &pu, &pr], bandwidth, steps)?;
        Ok(KdeTriple {
            original: kde_pdf(&po, bandwidth, &spec)?,
            unlearned: kde_pdf(&pu, bandwidth, &spec)?,
            retrain: kde_pdf(&pr, bandwidth, &spec)?,
        })
    }

    pub fn summary(&self) -> Result<KdeSummary> {
        Ok(KdeSummary {
            bandwidth: self.original.bandwidth,
            steps: self.original.mag_axis.len(),
            original_vs_retrain: kde_distance(&self.original, &self.retrain)?,
            unlearned_vs_retrain: kde_distance(&self.unlearned, &self.retrain)?,
        })
    }

    /// Writes `kde_original.csv`, `kde_unlearned.csv` and `kde_retrain.csv`.
    pub fn write_csvs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.original.write_csv(dir.join("kde_original.csv"))?;
        self.unlearned.write_csv(dir.join("kde_unlearned.csv"))?;
        self.retrain.write_csv(dir.join("kde_retrain.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeSummary {
    pub bandwidth: f64,
    pub steps: usize,
    pub original_vs_retrain: f64,
    pub unlearned_vs_retrain: f64,
}

/// Metrics of one seeded run. Optional entries are absent when the
/// corresponding evaluation is switched off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub f1_original: f64,
    pub f1_unlearned: f64,
    pub f1_retrain: f64,
    pub rt_unlearn: f64,
    pub rt_retrain: f64,
    pub mia_auc_ours: Option<f64>,
    pub mia_auc_retrain: Option<f64>,
    pub efficacy_delta: Option<f64>,
    pub kde: Option<KdeSummary>,
    /// Fully resolved configuration that produced the run.
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let mut floats = vec![
            self.f1_original,
            self.f1_unlearned,
            self.f1_retrain,
            self.rt_unlearn,
            self.rt_retrain,
        ];
        floats.extend(self.efficacy_delta);
        if let Some(k) = &self.kde {
            floats.extend([k.bandwidth, k.original_vs_retrain, k.unlearned_vs_retrain]);
        }
        if floats.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("report holds a non-finite value".into()));
        }
        let unit = [self.f1_original, self.f1_unlearned, self.f1_retrain]
            .into_iter()
            .chain(self.mia_auc_ours)
            .chain(self.mia_auc_retrain);
        for v in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Contract(format!("score {v} outside [0, 1]")));
            }
        }
        if self.rt_unlearn < 0.0 || self.rt_retrain < 0.0 {
            return Err(Error::Contract("negative running time".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-seed reports plus their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<EvalReport>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    pub config: BTreeMap<String, String>,
}

impl SweepReport {
    pub fn new(runs: Vec<EvalReport>, config: BTreeMap<String, String>) -> Result<SweepReport> {
        for r in &runs {
            r.validate()?;
        }
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &runs {
            let mut put = |k: &str, v: Option<f64>| {
                if let Some(v) = v {
                    columns.entry(k.to_string()).or_default().push(v);
                }
            };
            put("f1_original", Some(r.f1_original));
            put("f1_unlearned", Some(r.f1_unlearned));
            put("f1_retrain", Some(r.f1_retrain));
            put("f1_gap", Some((r.f1_unlearned - r.f1_retrain).abs()));
            put("rt_unlearn", Some(r.rt_unlearn));
            put("rt_retrain", Some(r.rt_retrain));
            put("mia_auc_ours", r.mia_auc_ours);
            put("mia_auc_retrain", r.mia_auc_retrain);
            put("efficacy_delta", r.efficacy_delta);
            put(
                "kde_original_vs_retrain",
                r.kde.as_ref().map(|k| k.original_vs_retrain),
            );
            put(
                "kde_unlearned_vs_retrain",
                r.kde.as_ref().map(|k| k.unlearned_vs_retrain),
            );
        }
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        for (k, v) in columns {
            let (m, s) = mean_std(&v);
            mean.insert(k.clone(), m);
            std.insert(k, s);
        }
        Ok(SweepReport {
            seeds: runs.iter().map(|r| r.seed).collect(),
            runs,
            mean,
            std,
            config,
        })
    }
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        EvalReport {
            seed: 3,
            f1_original: 0.9,
            f1_unlearned: 0.85,
            f1_retrain: 0.87,
            rt_unlearn: 0.1,
            rt_retrain: 1.0,
            mia_auc_ours: Some(0.5),
            mia_auc_retrain: None,
            efficacy_delta: None,
            kde: None,
            config: BTreeMap::from([("ratio".to_string(), "0.1".to_string())]),
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(micro_f1(&[0, 1, 2], &[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(micro_f1(&[1, 2, 0], &[0, 1, 2], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(
            micro_f1(&[0, 1, 1, 1], &[0, 1, 2, 1], &[0, 1, 2, 3]).unwrap(),
            0.75
        );
    }

    #[test]
    fn runtime_is_monotone_and_nests() {
        let outer = record_runtime("outer", || {
            let a = record_runtime("a", || (0..1000).sum::<u64>());
            let b = record_runtime("b", || a.value + 1);
            a.seconds + b.seconds
        });
        assert!(outer.value >= 0.0);
        assert!(outer.seconds >= outer.value);
        assert_eq!(outer.label, "outer");
    }

    #[test]
    fn report_round_trips_and_validates() {
        let r = report();
        let s = r.to_json().unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&s).unwrap(), r);
        let mut bad = r.clone();
        bad.mia_auc_ours = Some(1.5);
        assert!(bad.validate().is_err());
        let mut bad = r;
        bad.f1_retrain = f64::NAN;
        assert!(bad.to_json().is_err());
    }

    #[test]
    fn sweep_means() {
        let mut b = report();
        b.seed = 4;
        b.f1_unlearned = 0.95;
        let s = SweepReport::new(vec![report(), b], BTreeMap::new()).unwrap();
        assert!((s.mean["f1_unlearned"] - 0.9).abs() < 1e-12);
        assert!((s.std["f1_unlearned"] - 0.05).abs() < 1e-12);
        assert!((s.mean["f1_gap"] - 0.05).abs() < 1e-12);
        assert!(!s.mean.contains_key("efficacy_delta"));
        assert_eq!(s.seeds, vec![3, 4]);
    }
}
