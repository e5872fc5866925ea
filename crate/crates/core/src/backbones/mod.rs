//! Two-layer GCN and SGC backbones, trained from scratch, with capture of the
//! last two layers' node embeddings.
//!
//! Embeddings are stored one node per row. The operator `H` acts
//! on column vectors, so for a last layer `logits = prev · W` we have
//! `H = Wᵀ`; see [`DegenerateOperator`].

mod checkpoint;
mod operator;
mod predict;
mod train;

pub use checkpoint::{read_capture, write_capture, Checkpoint, CAPTURE_MAGIC};
pub use operator::{extract_h, DegenerateOperator};
pub use predict::{classify, micro_f1, predict, Prediction};
pub use train::{init_weights, train_model, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::graph::{normalize_adjacency, Graph, NormAdj};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Gcn,
    Sgc,
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(BackboneKind::Gcn),
            "sgc" => Ok(BackboneKind::Sgc),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackboneKind::Gcn => "gcn",
            BackboneKind::Sgc => "sgc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub hidden_dim: usize,
    pub k_hops: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Hyper {
    /// GCN: lr 0.05, weight decay 1e-4, hidden 16. SGC: lr 0.05, weight
    /// decay 1e-4, two hops.
    pub fn defaults(kind: BackboneKind) -> Hyper {
        match kind {
            BackboneKind::Gcn => Hyper {
                hidden_dim: 16,
                k_hops: 2,
                lr: 0.05,
                weight_decay: 1e-4,
                epochs: 200,
                seed: 0,
            },
            BackboneKind::Sgc => Hyper {
                hidden_dim: 0,
                k_hops: 2,
                lr: 0.05,
                weight_decay: 1e-4,
                epochs: 200,
                seed: 0,
            },
        }
    }
}

/// Last two layers' embeddings: `h_prev` is the (k−1)-layer input to the
/// final linear map, `h_k` the output logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub h_prev: Matrix,
    pub h_k: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: BackboneKind,
    pub hyper: Hyper,
    pub weights: Vec<Matrix>,
    /// Embeddings of the final forward pass on the training graph.
    pub capture: Capture,
    /// Training loss before each update.
    pub loss_curve: Vec<f64>,
}

impl TrainedModel {
    pub fn num_classes(&self) -> usize {
        self.weights.last().map_or(0, Matrix::cols)
    }

    /// Runs the stored weights on `g` (which may differ from the training
    /// graph, e.g. after pruning).
    pub fn forward(&self, g: &Graph) -> Result<Capture> {
        let adj = normalize_adjacency(g);
        forward_with(
            self.kind,
            &self.weights,
            &adj,
            g.features(),
            self.hyper.k_hops,
        )
    }

    /// Rebuilds a model from checkpointed weights, recomputing the capture
    /// on `g`.
    pub fn from_checkpoint(ckpt: Checkpoint, g: &Graph) -> Result<TrainedModel> {
        let mut m = TrainedModel {
            kind: ckpt.kind,
            hyper: ckpt.hyper,
            weights: ckpt.weights,
            capture: Capture {
                h_prev: Matrix::zeros(0, 0),
                h_k: Matrix::zeros(0, 0),
            },
            loss_curve: Vec::new(),
        };
        m.capture = m.forward(g)?;
        Ok(m)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: 1,
            kind: self.kind,
            hyper: self.hyper.clone(),
            weights: self.weights.clone(),
        }
    }
}

pub(crate) fn forward_with(
    kind: BackboneKind,
    weights: &[Matrix],
    adj: &NormAdj,
    x: &Matrix,
    k_hops: usize,
) -> Result<Capture> {
    match kind {
        BackboneKind::Gcn => {
            let (h_prev, h_k) = gcn_forward(weights, adj, x)?;
            Ok(Capture { h_prev, h_k })
        }
        BackboneKind::Sgc => {
            let (h_prev, h_k) = sgc_forward(weights, adj, x, k_hops)?;
            Ok(Capture { h_prev, h_k })
        }
    }
}

/// `h1 = relu(Â X W¹)`, `logits = Â h1 W²`.
pub fn gcn_forward(weights: &[Matrix], adj: &NormAdj, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let ax = adj.spmm(x)?;
    gcn_forward_propagated(weights, adj, &ax)
}

/// GCN forward with `Â X` already computed.
pub(crate) fn gcn_forward_propagated(
    weights: &[Matrix],
    adj: &NormAdj,
    ax: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let [w1, w2] = weights else {
        return Err(shape_err!(
            "gcn expects 2 weight matrices, got {}",
            weights.len()
        ));
    };
    let h1 = ax.matmul(w1)?.map(|z| z.max(0.0));
    let logits = adj.spmm(&h1)?.matmul(w2)?;
    Ok((h1, logits))
}

/// `Â^k X` by repeated sparse products.
pub fn propagate(adj: &NormAdj, x: &Matrix, k_hops: usize) -> Result<Matrix> {
    let mut p = x.clone();
    for _ in 0..k_hops {
        p = adj.spmm(&p)?;
    }
    Ok(p)
}

/// `propagated = Â^k X`, `logits = propagated · W`.
pub fn sgc_forward(
    weights: &[Matrix],
    adj: &NormAdj,
    x: &Matrix,
    k_hops: usize,
) -> Result<(Matrix, Matrix)> {
    if k_hops == 0 {
        return Err(Error::InvalidRequest("sgc needs k_hops >= 1".into()));
    }
    let [w] = weights else {
        return Err(shape_err!(
            "sgc expects 1 weight matrix, got {}",
            weights.len()
        ));
    };
    let p = propagate(adj, x, k_hops)?;
    let logits = p.matmul(w)?;
    Ok((p, logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::numerics::{softmax_norm, Matrix};

    fn path4() -> Graph {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.5],
            vec![0.0, 1.0, -0.5],
            vec![0.3, 0.2, 0.1],
            vec![-1.0, 0.4, 0.0],
        ])
        .unwrap();
        Graph::new("path", x, vec![0, 1, 0, 1], 2, vec![(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    fn assert_logits(got: &Matrix, want: &[[f64; 2]; 4]) {
        for (i, row) in want.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                assert!(
                    (got.get(i, j) - w).abs() < 1e-12,
                    "({i},{j}): {} vs {w}",
                    got.get(i, j)
                );
            }
        }
    }

    #[test]
    fn gcn_matches_reference_logits() {
        let g = path4();
        let w1 = Matrix::from_rows(&[
            vec![0.5, -0.2, 0.1, 0.3],
            vec![-0.4, 0.6, 0.2, -0.1],
            vec![0.25, 0.15, -0.35, 0.45],
        ])
        .unwrap();
        let w2 = Matrix::from_rows(&[
            vec![0.7, -0.3],
            vec![-0.2, 0.5],
            vec![0.4, 0.1],
            vec![-0.6, 0.8],
        ])
        .unwrap();
        let (_, logits) = gcn_forward(&[w1, w2], &normalize_adjacency(&g), g.features()).unwrap();
        assert_logits(
            &logits,
            &[
                [0.00510566279934006, 0.14911984659000205],
                [-0.00400630018692369, 0.1893107762184666],
                [-0.02650347186060774, 0.17455633294550546],
                [-0.03421648255176195, 0.14560664563723497],
            ],
        );
    }

    #[test]
    fn sgc_matches_reference_logits() {
        let g = path4();
        let w = Matrix::from_rows(&[vec![0.2, -0.1], vec![0.3, 0.4], vec![-0.5, 0.6]]).unwrap();
        let (_, logits) = sgc_forward(&[w], &normalize_adjacency(&g), g.features(), 2).unwrap();
        assert_logits(
            &logits,
            &[
                [0.17580625990676071, 0.13232312818899694],
                [0.2015474779294138, 0.16675623358417865],
                [0.11542375357245585, 0.18067034896476125],
                [0.06532667019543355, 0.15936436964131626],
            ],
        );
    }

    #[test]
    fn zero_weights_give_uniform_predictions() {
        let g = path4();
        let adj = normalize_adjacency(&g);
        let w = vec![Matrix::zeros(3, 4), Matrix::zeros(4, 2)];
        let (_, logits) = gcn_forward(&w, &adj, g.features()).unwrap();
        assert!(logits.data().iter().all(|&x| x == 0.0));
        assert_eq!(softmax_norm(logits.row(0)), vec![0.5, 0.5]);
        let (_, logits) = sgc_forward(&[Matrix::zeros(3, 2)], &adj, g.features(), 2).unwrap();
        assert!(logits.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let g = Graph::new("iso", x, vec![0; 3], 1, vec![(0, 1)]).unwrap();
        let adj = normalize_adjacency(&g);
        let w1 = Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let (h1, logits) = gcn_forward(&[w1.clone(), w2.clone()], &adj, g.features()).unwrap();
        let own = Matrix::from_rows(&[vec![0.5, 0.5]])
            .unwrap()
            .matmul(&w1)
            .unwrap();
        let own = own.map(|z| z.max(0.0));
        assert_eq!(h1.row(2), own.row(0));
        assert_eq!(logits.get(2, 0), own.matmul(&w2).unwrap().get(0, 0));
    }

    #[test]
    fn sgc_one_hop_on_edgeless_graph_is_identity() {
        let x = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let g = Graph::new("e", x.clone(), vec![0; 3], 1, vec![]).unwrap();
        let (p, _) = sgc_forward(&[Matrix::zeros(2, 1)], &normalize_adjacency(&g), &x, 1).unwrap();
        assert_eq!(p, x);
        assert!(sgc_forward(&[Matrix::zeros(2, 1)], &normalize_adjacency(&g), &x, 0).is_err());
    }

    #[test]
    fn sgc_two_hops_on_triangle_averages_features() {
        let x = Matrix::identity(3);
        let g = Graph::new(
            "tri",
            x.clone(),
            vec![0; 3],
            1,
            vec![(0, 1), (1, 2), (0, 2)],
        )
        .unwrap();
        let (p, _) = sgc_forward(&[Matrix::zeros(3, 1)], &normalize_adjacency(&g), &x, 2).unwrap();
        // Â = J/3 is idempotent, so Â² X = J/3
        for v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let g = path4();
        let adj = normalize_adjacency(&g);
        assert!(gcn_forward(&[Matrix::zeros(3, 4)], &adj, g.features()).is_err());
        assert!(gcn_forward(
            &[Matrix::zeros(2, 4), Matrix::zeros(4, 2)],
            &adj,
            g.features()
        )
        .is_err());
    }
}
