use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Old-id → new-id table produced by [`remove_nodes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Remap {
    forward: Vec<Option<usize>>,
    backward: Vec<usize>,
}

impl Remap {
    pub fn identity(n: usize) -> Remap {
        Remap {
            forward: (0..n).map(Some).collect(),
            backward: (0..n).collect(),
        }
    }

    /// New id of an original node, `None` if it was removed.
    pub fn new_id(&self, old: usize) -> Option<usize> {
        self.forward.get(old).copied().flatten()
    }

    /// Original id of a surviving node.
    pub fn old_id(&self, new: usize) -> usize {
        self.backward[new]
    }

    /// Original ids of the survivors, ascending.
    pub fn survivors(&self) -> &[usize] {
        &self.backward
    }

    pub fn original_len(&self) -> usize {
        self.forward.len()
    }
}

/// Induced subgraph on the nodes not in `removed`. Survivors keep their
/// relative order.
pub fn remove_nodes(g: &Graph, removed: &[usize]) -> Result<(Graph, Remap)> {
    let n = g.n();
    let mut drop = vec![false; n];
    for &u in removed {
        if u >= n {
            return Err(Error::Index(format!("node {u} not in graph of {n} nodes")));
        }
        drop[u] = true;
    }
    let mut forward = vec![None; n];
    let mut backward = Vec::with_capacity(n);
    for i in 0..n {
        if !drop[i] {
            forward[i] = Some(backward.len());
            backward.push(i);
        }
    }
    let features = g.features().select_rows(&backward);
    let labels = backward.iter().map(|&i| g.labels()[i]).collect();
    let edges = g
        .edges()
        .iter()
        .filter_map(|&(u, v)| Some((forward[u]?, forward[v]?)))
        .collect();
    let sub = Graph::new(g.name(), features, labels, g.num_classes(), edges)?;
    Ok((sub, Remap { forward, backward }))
}

/// Same node set with the listed undirected edges deleted.
pub fn remove_edges(g: &Graph, removed: &[(usize, usize)]) -> Result<Graph> {
    let mut gone = HashSet::with_capacity(removed.len());
    for &(u, v) in removed {
        let e = (u.min(v), u.max(v));
        if !g.has_edge(e.0, e.1) {
            return Err(Error::InvalidRequest(format!(
                "edge ({u}, {v}) is not in the graph"
            )));
        }
        gone.insert(e);
    }
    let edges = g
        .edges()
        .iter()
        .copied()
        .filter(|e| !gone.contains(e))
        .collect();
    Graph::new(
        g.name(),
        g.features().clone(),
        g.labels().to_vec(),
        g.num_classes(),
        edges,
    )
}

/// Shifts the label of every node in `poisoned` to `(y + 1) mod num_classes`.
pub fn poison_labels(g: &Graph, poisoned: &[usize], num_classes: usize) -> Result<Graph> {
    if num_classes == 0 {
        return Err(Error::InvalidRequest("num_classes must be positive".into()));
    }
    let mut labels = g.labels().to_vec();
    for &i in poisoned {
        let y = labels
            .get_mut(i)
            .ok_or_else(|| Error::Index(format!("node {i} not in graph")))?;
        *y = (*y + 1) % num_classes;
    }
    Ok(g.with_labels(labels))
}
