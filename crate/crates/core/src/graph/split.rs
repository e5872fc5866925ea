use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Remap};

/// Disjoint train/test node sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn new(n: usize, mut train: Vec<usize>, mut test: Vec<usize>) -> Result<SplitSpec> {
        train.sort_unstable();
        test.sort_unstable();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n {
                return Err(Error::Index(format!("split id {i} outside 0..{n}")));
            }
            if seen[i] {
                return Err(Error::InvalidRequest(format!(
                    "node {i} listed twice in split"
                )));
            }
            seen[i] = true;
        }
        Ok(SplitSpec { train, test })
    }

    /// Re-expresses the split in the id space of a pruned graph, dropping
    /// removed nodes.
    pub fn remap(&self, remap: &Remap) -> SplitSpec {
        let map = |ids: &[usize]| ids.iter().filter_map(|&i| remap.new_id(i)).collect();
        SplitSpec {
            train: map(&self.train),
            test: map(&self.test),
        }
    }
}

/// Random `train_frac` / `1 - train_frac` partition of `0..n`; the train
/// side gets `floor(train_frac · n)` nodes.
pub fn split_train_test(n: usize, train_frac: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidRequest(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_frac * n as f64).floor() as usize;
    let test = ids.split_off(n_train);
    SplitSpec::new(n, ids, test)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "targets")]
pub enum RequestKind {
    Nodes(Vec<usize>),
    Edges(Vec<(usize, usize)>),
}

/// What to forget, together with the unlearning ratio β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnRequest {
    #[serde(flatten)]
    pub kind: RequestKind,
    pub beta: f64,
}

impl UnlearnRequest {
    /// Node request; `β = |U| / |train|`.
    pub fn nodes(split: &SplitSpec, mut nodes: Vec<usize>) -> Result<UnlearnRequest> {
        nodes.sort_unstable();
        nodes.dedup();
        if let Some(&bad) = nodes.iter().find(|i| split.train.binary_search(i).is_err()) {
            return Err(Error::InvalidRequest(format!(
                "node {bad} is not a training node"
            )));
        }
        let beta = nodes.len() as f64 / split.train.len().max(1) as f64;
        if nodes.is_empty() || beta >= 1.0 {
            return Err(Error::InvalidRequest(format!(
                "unlearn set of {} out of {} training nodes leaves nothing to do",
                nodes.len(),
                split.train.len()
            )));
        }
        Ok(UnlearnRequest {
            kind: RequestKind::Nodes(nodes),
            beta,
        })
    }

    /// Edge request; `β = |E_u| / |E|`.
    pub fn edges(g: &Graph, edges: Vec<(usize, usize)>) -> Result<UnlearnRequest> {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| !g.has_edge(u, v)) {
            return Err(Error::InvalidRequest(format!(
                "edge ({u}, {v}) is not in the graph"
            )));
        }
        let beta = edges.len() as f64 / g.num_edges().max(1) as f64;
        if edges.is_empty() || beta >= 1.0 {
            return Err(Error::InvalidRequest(format!(
                "edge request of {} out of {} edges leaves nothing to do",
                edges.len(),
                g.num_edges()
            )));
        }
        Ok(UnlearnRequest {
            kind: RequestKind::Edges(edges),
            beta,
        })
    }

    pub fn node_set(&self) -> &[usize] {
        match &self.kind {
            RequestKind::Nodes(u) => u,
            RequestKind::Edges(_) => &[],
        }
    }

    pub fn edge_set(&self) -> &[(usize, usize)] {
        match &self.kind {
            RequestKind::Edges(e) => e,
            RequestKind::Nodes(_) => &[],
        }
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            RequestKind::Nodes(u) => u.len(),
            RequestKind::Edges(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `round(ratio · |train|)` training nodes to forget.
pub fn sample_unlearn_set(split: &SplitSpec, ratio: f64, seed: u64) -> Result<UnlearnRequest> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidRequest(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let k = (ratio * split.train.len() as f64).round() as usize;
    if k == 0 || k >= split.train.len() {
        return Err(Error::InvalidRequest(format!(
            "ratio {ratio} selects {k} of {} training nodes",
            split.train.len()
        )));
    }
    let mut pool = split.train.clone();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.truncate(k);
    UnlearnRequest::nodes(split, pool)
}

/// Draws `round(ratio · |E|)` edges to forget.
pub fn sample_edge_request(g: &Graph, ratio: f64, seed: u64) -> Result<UnlearnRequest> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidRequest(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let k = (ratio * g.num_edges() as f64).round() as usize;
    let mut pool = g.edges().to_vec();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.truncate(k);
    UnlearnRequest::edges(g, pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_use_floor() {
        let s = split_train_test(2708, 0.9, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (2437, 271));
        let s = split_train_test(2708, 0.8, 0).unwrap();
        assert_eq!(s.train.len(), 2166);
        assert!(split_train_test(10, 1.0, 0).is_err());
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let a = split_train_test(100, 0.9, 7).unwrap();
        assert_eq!(a, split_train_test(100, 0.9, 7).unwrap());
        assert_ne!(a, split_train_test(100, 0.9, 8).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn unlearn_set_size_and_determinism() {
        let split = SplitSpec::new(120, (0..100).collect(), (100..120).collect()).unwrap();
        let r = sample_unlearn_set(&split, 0.1, 3).unwrap();
        assert_eq!(r.len(), 10);
        assert_eq!(r, sample_unlearn_set(&split, 0.1, 3).unwrap());
        assert!((r.beta - 0.1).abs() < 1e-15);
        assert!(r.node_set().iter().all(|&i| i < 100));
        assert!(sample_unlearn_set(&split, 0.001, 3).is_err());
        assert!(sample_unlearn_set(&split, 0.0, 3).is_err());
    }

    #[test]
    fn cora_sized_ratio_records_beta() {
        let split = split_train_test(2708, 0.9, 1).unwrap();
        let r = sample_unlearn_set(&split, 0.3, 1).unwrap();
        assert_eq!(r.len(), 731);
        assert!((r.beta - 0.3).abs() < 1e-3);
    }

    #[test]
    fn node_request_must_come_from_train() {
        let split = SplitSpec::new(5, vec![0, 1, 2], vec![3, 4]).unwrap();
        assert!(UnlearnRequest::nodes(&split, vec![3]).is_err());
        assert!(UnlearnRequest::nodes(&split, vec![]).is_err());
        assert!(SplitSpec::new(5, vec![0, 1], vec![1]).is_err());
    }

    #[test]
    fn request_json_shape() {
        let split = SplitSpec::new(5, vec![0, 1, 2], vec![3, 4]).unwrap();
        let r = UnlearnRequest::nodes(&split, vec![2]).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains(r#""kind":"nodes""#), "{s}");
        let back: UnlearnRequest = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
