use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backbones::{BackboneKind, Hyper};
use crate::error::{Error, Result};
use crate::evalsuite::DEFAULT_KDE_STEPS;
use crate::graph::SbmConfig;
use crate::unlearner::RectifierConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Fresh SBM per seed.
    Synth(SbmConfig),
    /// Interchange directory, loaded once.
    Dir(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnlearnKind {
    Nodes,
    Edges,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalToggles {
    pub mia: bool,
    pub kde: bool,
    pub efficacy: bool,
    pub poison_frac: f64,
    pub kde_bandwidth: f64,
    pub kde_steps: usize,
}

impl Default for EvalToggles {
    fn default() -> Self {
        EvalToggles {
            mia: true,
            kde: true,
            efficacy: false,
            poison_frac: 0.3,
            kde_bandwidth: 1.0,
            kde_steps: DEFAULT_KDE_STEPS,
        }
    }
}

/// Everything one experiment needs. Read from a flat `key = value` file
/// (see [`ExperimentConfig::keys`]); unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub backbone: BackboneKind,
    /// `seed` is replaced by each run's seed.
    pub hyper: Hyper,
    pub unlearn_kind: UnlearnKind,
    pub ratio: f64,
    /// `seed` is replaced by each run's seed.
    pub rectifier: RectifierConfig,
    pub eval: EvalToggles,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Synth(SbmConfig::default()),
            backbone: BackboneKind::Gcn,
            hyper: Hyper::defaults(BackboneKind::Gcn),
            unlearn_kind: UnlearnKind::Nodes,
            ratio: 0.1,
            rectifier: RectifierConfig::default(),
            eval: EvalToggles::default(),
            seeds: vec![0],
            out: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "dataset",
    "sbm.blocks",
    "sbm.per_block",
    "sbm.p_in",
    "sbm.p_out",
    "sbm.feat_dim",
    "sbm.noise_std",
    "sbm.signal",
    "sbm.train_frac",
    "backbone",
    "backbone.hidden_dim",
    "backbone.k_hops",
    "backbone.lr",
    "backbone.weight_decay",
    "backbone.epochs",
    "unlearn.kind",
    "unlearn.ratio",
    "rectifier.mlp_hidden",
    "rectifier.epochs",
    "rectifier.lr",
    "rectifier.local_top_frac",
    "rectifier.hop_radius",
    "rectifier.high_ratio_mode",
    "rectifier.inter_plus_mode",
    "rectifier.use_rnd",
    "rectifier.ascent_ceiling",
    "eval.mia",
    "eval.kde",
    "eval.efficacy",
    "eval.poison_frac",
    "eval.kde_bandwidth",
    "eval.kde_steps",
    "seeds",
    "out",
];

/// Ordered `key → value` pairs with the line each came from (0 for flags).
#[derive(Debug, Clone, Default)]
pub struct FlatConfig {
    entries: BTreeMap<String, (String, u64)>,
    origin: PathBuf,
}

impl FlatConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: impl Into<PathBuf>) -> Result<FlatConfig> {
        let origin = origin.into();
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line_no = no as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    &origin,
                    line_no,
                    format!("expected key = value, got {line:?}"),
                )
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::parse(&origin, line_no, format!("unknown key {k:?}")));
            }
            if entries
                .insert(k.to_string(), (v.to_string(), line_no))
                .is_some()
            {
                return Err(Error::parse(
                    &origin,
                    line_no,
                    format!("duplicate key {k:?}"),
                ));
            }
        }
        Ok(FlatConfig { entries, origin })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<FlatConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FlatConfig::parse(&text, path)
    }

    /// Sets `key`, replacing any file value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.entries.insert(key.to_string(), (value.into(), 0));
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| {
                Error::parse(
                    &self.origin,
                    *line,
                    format!("bad value {v:?} for {key}: {e}"),
                )
            }),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Resolves against defaults and validates.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        if let Some(kind) = self.get::<BackboneKind>("backbone")? {
            c.backbone = kind;
            c.hyper = Hyper::defaults(kind);
        }
        let mut sbm = SbmConfig::default();
        macro_rules! take {
            ($key:literal, $slot:expr) => {
                if let Some(v) = self.get($key)? {
                    $slot = v;
                }
            };
        }
        take!("sbm.blocks", sbm.blocks);
        take!("sbm.per_block", sbm.per_block);
        take!("sbm.p_in", sbm.p_in);
        take!("sbm.p_out", sbm.p_out);
        take!("sbm.feat_dim", sbm.feat_dim);
        take!("sbm.noise_std", sbm.noise_std);
        take!("sbm.signal", sbm.signal);
        take!("sbm.train_frac", sbm.train_frac);
        c.dataset = match self.raw("dataset") {
            None | Some("synth") => DatasetSource::Synth(sbm),
            Some(dir) => DatasetSource::Dir(PathBuf::from(dir)),
        };
        take!("backbone.hidden_dim", c.hyper.hidden_dim);
        take!("backbone.k_hops", c.hyper.k_hops);
        take!("backbone.lr", c.hyper.lr);
        take!("backbone.weight_decay", c.hyper.weight_decay);
        take!("backbone.epochs", c.hyper.epochs);
        c.unlearn_kind = match self.raw("unlearn.kind") {
            None | Some("nodes") => UnlearnKind::Nodes,
            Some("edges") => UnlearnKind::Edges,
            Some(other) => return Err(Error::Config(format!("unlearn.kind {other:?}"))),
        };
        take!("unlearn.ratio", c.ratio);
        let r = &mut c.rectifier;
        take!("rectifier.mlp_hidden", r.mlp_hidden);
        take!("rectifier.epochs", r.epochs);
        take!("rectifier.lr", r.lr);
        take!("rectifier.local_top_frac", r.local_top_frac);
        if let Some(v) = self.raw("rectifier.hop_radius") {
            r.hop_radius = parse_optional(v, "all", "rectifier.hop_radius")?;
        }
        take!("rectifier.high_ratio_mode", r.high_ratio_mode);
        take!("rectifier.inter_plus_mode", r.inter_plus_mode);
        take!("rectifier.use_rnd", r.use_rnd);
        if let Some(v) = self.raw("rectifier.ascent_ceiling") {
            r.ascent_ceiling = parse_optional(v, "none", "rectifier.ascent_ceiling")?;
        }
        take!("eval.mia", c.eval.mia);
        take!("eval.kde", c.eval.kde);
        take!("eval.efficacy", c.eval.efficacy);
        take!("eval.poison_frac", c.eval.poison_frac);
        take!("eval.kde_bandwidth", c.eval.kde_bandwidth);
        take!("eval.kde_steps", c.eval.kde_steps);
        if let Some(v) = self.raw("seeds") {
            c.seeds = parse_seeds(v)?;
        }
        if let Some(v) = self.raw("out") {
            c.out = PathBuf::from(v);
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_optional<T: FromStr>(v: &str, none: &str, key: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    if v == none {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|e| Error::Config(format!("bad value {v:?} for {key}: {e}")))
}

/// `"0,1,5"` or `"0..10"` (half-open).
pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let bad = |e: std::num::ParseIntError| Error::Config(format!("bad seed list {v:?}: {e}"));
    let seeds: Vec<u64> = if let Some((a, b)) = v.split_once("..") {
        (a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?).collect()
    } else {
        v.split(',')
            .map(|s| s.trim().parse().map_err(bad))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::Config(format!("seed list {v:?} is empty")));
    }
    Ok(seeds)
}

impl ExperimentConfig {
    /// Every accepted config key.
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    pub fn validate(&self) -> Result<()> {
        self.rectifier.validate()?;
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config(format!(
                "unlearn.ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seed list has duplicates".into()));
        }
        let h = &self.hyper;
        if h.epochs == 0 || h.k_hops == 0 || !(h.lr > 0.0) || !(h.weight_decay >= 0.0) {
            return Err(Error::Config(format!("bad backbone settings {h:?}")));
        }
        if self.backbone == BackboneKind::Gcn && h.hidden_dim == 0 {
            return Err(Error::Config(
                "backbone.hidden_dim must be >= 1 for gcn".into(),
            ));
        }
        let e = &self.eval;
        if e.efficacy && !(e.poison_frac > 0.0 && e.poison_frac < 0.5) {
            return Err(Error::Config(format!(
                "eval.poison_frac must lie in (0, 0.5), got {}",
                e.poison_frac
            )));
        }
        if e.kde && !(e.kde_bandwidth > 0.0 && e.kde_bandwidth.is_finite() && e.kde_steps >= 2) {
            return Err(Error::Config(
                "eval.kde_bandwidth must be > 0 and eval.kde_steps >= 2".into(),
            ));
        }
        match &self.dataset {
            DatasetSource::Synth(sbm) => {
                sbm.validate()?;
                let n = sbm.blocks * sbm.per_block;
                let train = (sbm.train_frac * n as f64).floor() as usize;
                if self.unlearn_kind == UnlearnKind::Nodes {
                    self.check_request_size(train)?;
                }
            }
            DatasetSource::Dir(dir) => {
                if !dir.is_dir() {
                    return Err(Error::Config(format!(
                        "dataset directory {} not found",
                        dir.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rejects ratios that select no node, or every node, of `pool`.
    pub fn check_request_size(&self, pool: usize) -> Result<()> {
        let k = (self.ratio * pool as f64).round() as usize;
        if k == 0 || k >= pool {
            return Err(Error::Config(format!(
                "unlearn.ratio {} selects {k} of {pool} candidates",
                self.ratio
            )));
        }
        Ok(())
    }

    /// The fully resolved configuration as flat key-value pairs. Parsing the
    /// output back yields the same configuration.
    pub fn to_flat(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match &self.dataset {
            DatasetSource::Synth(s) => {
                put("dataset", "synth".into());
                put("sbm.blocks", s.blocks.to_string());
                put("sbm.per_block", s.per_block.to_string());
                put("sbm.p_in", s.p_in.to_string());
                put("sbm.p_out", s.p_out.to_string());
                put("sbm.feat_dim", s.feat_dim.to_string());
                put("sbm.noise_std", s.noise_std.to_string());
                put("sbm.signal", s.signal.to_string());
                put("sbm.train_frac", s.train_frac.to_string());
            }
            DatasetSource::Dir(d) => put("dataset", d.display().to_string()),
        }
        put("backbone", self.backbone.to_string());
        put("backbone.hidden_dim", self.hyper.hidden_dim.to_string());
        put("backbone.k_hops", self.hyper.k_hops.to_string());
        put("backbone.lr", self.hyper.lr.to_string());
        put("backbone.weight_decay", self.hyper.weight_decay.to_string());
        put("backbone.epochs", self.hyper.epochs.to_string());
        put(
            "unlearn.kind",
            match self.unlearn_kind {
                UnlearnKind::Nodes => "nodes",
                UnlearnKind::Edges => "edges",
            }
            .into(),
        );
        put("unlearn.ratio", self.ratio.to_string());
        let r = &self.rectifier;
        put("rectifier.mlp_hidden", r.mlp_hidden.to_string());
        put("rectifier.epochs", r.epochs.to_string());
        put("rectifier.lr", r.lr.to_string());
        put("rectifier.local_top_frac", r.local_top_frac.to_string());
        put(
            "rectifier.hop_radius",
            r.hop_radius.map_or("all".into(), |h| h.to_string()),
        );
        put("rectifier.high_ratio_mode", r.high_ratio_mode.to_string());
        put("rectifier.inter_plus_mode", r.inter_plus_mode.to_string());
        put("rectifier.use_rnd", r.use_rnd.to_string());
        put(
            "rectifier.ascent_ceiling",
            r.ascent_ceiling.map_or("none".into(), |c| c.to_string()),
        );
        put("eval.mia", self.eval.mia.to_string());
        put("eval.kde", self.eval.kde.to_string());
        put("eval.efficacy", self.eval.efficacy.to_string());
        put("eval.poison_frac", self.eval.poison_frac.to_string());
        put("eval.kde_bandwidth", self.eval.kde_bandwidth.to_string());
        put("eval.kde_steps", self.eval.kde_steps.to_string());
        put(
            "seeds",
            self.seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("out", self.out.display().to_string());
        m
    }

    /// [`to_flat`](Self::to_flat) rendered in the config file format.
    pub fn to_text(&self) -> String {
        self.to_flat()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = FlatConfig::parse("", "x").unwrap().resolve().unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn parses_values_and_comments() {
        let text = "# smoke\nbackbone = sgc\nunlearn.ratio = 0.2  # fifth\nseeds = 3..6\n\
                    rectifier.hop_radius = all\nrectifier.ascent_ceiling = none\n";
        let c = FlatConfig::parse(text, "x").unwrap().resolve().unwrap();
        assert_eq!(c.backbone, BackboneKind::Sgc);
        assert_eq!(c.hyper, Hyper::defaults(BackboneKind::Sgc));
        assert_eq!(c.ratio, 0.2);
        assert_eq!(c.seeds, vec![3, 4, 5]);
        assert_eq!(c.rectifier.hop_radius, None);
        assert_eq!(c.rectifier.ascent_ceiling, None);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let e = FlatConfig::parse("ratio = 0.1", "cfg.txt").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        assert!(FlatConfig::parse("seeds = 1\nseeds = 2", "x").is_err());
        assert!(FlatConfig::parse("seeds 1", "x").is_err());
        let e = FlatConfig::parse("\nbackbone.epochs = many", "x")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(FlatConfig::default().set("nope", "1").is_err());
    }

    #[test]
    fn validation_happens_before_compute() {
        for text in [
            "unlearn.ratio = 0.0001", // selects no node
            "unlearn.ratio = 1.5",
            "seeds = 1,1",
            "seeds = 4..4",
            "rectifier.lr = 0",
            "dataset = /definitely/not/here",
            "eval.efficacy = true\neval.poison_frac = 0.6",
            "sbm.p_in = 0.001\nsbm.p_out = 0.01",
        ] {
            let r = FlatConfig::parse(text, "x").and_then(|f| f.resolve());
            assert!(r.is_err(), "{text}");
        }
    }

    #[test]
    fn flags_override_file_and_text_round_trips() {
        let mut f = FlatConfig::parse("unlearn.ratio = 0.2\nseeds = 0,1", "x").unwrap();
        f.set("unlearn.ratio", "0.3").unwrap();
        let c = f.resolve().unwrap();
        assert_eq!(c.ratio, 0.3);
        let back = FlatConfig::parse(&c.to_text(), "y")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_flat().len(), ExperimentConfig::keys().len());
    }
}
