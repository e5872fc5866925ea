//! Embedding rectification for node and edge unlearning.
//!
//! A trained backbone is left untouched. Two small networks are fitted
//! instead: `f1(j, i)` models the influence of node `j` on node `i`'s output
//! embedding, and `f2` maps such an influence back to the previous layer.
//! `f2` is corrected so that `H·f2 = f1` holds on the range of the final
//! linear map `H`. The unlearned embedding of node `i` is
//!
//! ```text
//! h̃ᵢ = hᵢ − γ · Σ_{j ∈ sources(i)} f1(j, i)
//! ```
//!
//! where `sources(i)` are the unlearned nodes near `i` (see
//! [`source_lists`]) and `γ = 1 + 1/n_g` with `n_g` the mean degree of the
//! unlearned nodes.

mod checkpoint;
mod objective;
mod plan;
mod train;

pub use checkpoint::RectifierCheckpoint;
pub use objective::{loss_inter, loss_local, loss_plus, total_loss, LossParts};
pub use plan::{high_degree_set, source_lists};
pub use train::{
    apply_rectifier, edge_unlearn, high_ratio_unlearn, middle_embeddings, objective_gradients,
    train_rectifier, unlearn, RectifierOutcome, UnlearnOutcome,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbones::{Capture, DegenerateOperator};
use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, RequestKind};
use crate::numerics::{Activation, Matrix, Mlp};

/// Above this many unlearned nodes the reconstruction loss only targets the
/// unlearned set; below it every node is a target.
pub const INTER_PLUS_THRESHOLD: usize = 50;

/// Default cross-entropy cap for the ascent term, in nats.
pub const DEFAULT_ASCENT_CEILING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifierConfig {
    pub mlp_hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Fraction of retained nodes, by degree, in the local loss.
    pub local_top_frac: f64,
    /// `None` subtracts every unlearned node from every node.
    pub hop_radius: Option<usize>,
    /// Anchor on the original weights' embeddings of the pruned graph.
    pub high_ratio_mode: bool,
    /// Force every node to be a reconstruction target. Also switched on
    /// automatically for fewer than [`INTER_PLUS_THRESHOLD`] unlearned nodes.
    pub inter_plus_mode: bool,
    /// Range/null-space correction of `f2`; off only for ablations.
    pub use_rnd: bool,
    /// Per-node cap on the cross-entropy the ascent term pushes an unlearned
    /// node towards. Past the cap the node contributes no gradient. `None`
    /// leaves the ascent unbounded, which lets it dominate the objective.
    pub ascent_ceiling: Option<f64>,
    pub seed: u64,
}

impl Default for RectifierConfig {
    fn default() -> Self {
        RectifierConfig {
            mlp_hidden: 64,
            epochs: 200,
            lr: 1e-3,
            local_top_frac: 0.2,
            hop_radius: Some(2),
            high_ratio_mode: false,
            inter_plus_mode: false,
            use_rnd: true,
            ascent_ceiling: Some(DEFAULT_ASCENT_CEILING),
            seed: 0,
        }
    }
}

impl RectifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mlp_hidden == 0 {
            return Err(Error::Config("mlp_hidden must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.local_top_frac > 0.0 && self.local_top_frac <= 1.0) {
            return Err(Error::Config(format!(
                "local_top_frac must lie in (0, 1], got {}",
                self.local_top_frac
            )));
        }
        if let Some(c) = self
            .ascent_ceiling
            .filter(|c| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(Error::Config(format!(
                "ascent_ceiling must be >= 0, got {c}"
            )));
        }
        if self.hop_radius == Some(0) {
            return Err(Error::Config("hop_radius must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether the reconstruction loss targets every node for a request of
    /// `num_unlearned` nodes.
    pub fn inter_plus_for(&self, num_unlearned: usize) -> bool {
        self.inter_plus_mode || num_unlearned < INTER_PLUS_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rectifier {
    /// `[2·dim_{k−1} → hidden → dim_k]`
    pub mlp1: Mlp,
    /// `[dim_k → hidden → dim_{k−1}]`
    pub mlp2: Mlp,
    pub op: DegenerateOperator,
    pub gamma: f64,
    pub beta: f64,
    pub config: RectifierConfig,
}

impl Rectifier {
    /// Fresh networks seeded from `config.seed`. The output layer of `mlp1`
    /// starts at zero, so an untrained rectifier leaves embeddings unchanged.
    pub fn init(
        op: DegenerateOperator,
        gamma: f64,
        beta: f64,
        config: RectifierConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, c, h) = (op.in_dim(), op.out_dim(), config.mlp_hidden);
        let mut mlp1 = Mlp::new(&[2 * d, h, c], Activation::Relu, &mut rng)?;
        mlp1.zero_output_layer();
        let mlp2 = Mlp::new(&[c, h, d], Activation::Relu, &mut rng)?;
        Rectifier::from_parts(mlp1, mlp2, op, gamma, beta, config)
    }

    pub fn from_parts(
        mlp1: Mlp,
        mlp2: Mlp,
        op: DegenerateOperator,
        gamma: f64,
        beta: f64,
        config: RectifierConfig,
    ) -> Result<Self> {
        let (d, c) = (op.in_dim(), op.out_dim());
        if mlp1.in_dim() != 2 * d
            || mlp1.out_dim() != c
            || mlp2.in_dim() != c
            || mlp2.out_dim() != d
        {
            return Err(shape_err!(
                "rectifier nets {}→{} / {}→{} do not chain with operator {c}x{d}",
                mlp1.in_dim(),
                mlp1.out_dim(),
                mlp2.in_dim(),
                mlp2.out_dim()
            ));
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidRequest(format!(
                "gamma must be >= 1, got {gamma}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidRequest(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        Ok(Rectifier {
            mlp1,
            mlp2,
            op,
            gamma,
            beta,
            config,
        })
    }

    /// `dim_{k−1}`
    pub fn prev_dim(&self) -> usize {
        self.op.in_dim()
    }

    /// `dim_k`
    pub fn out_dim(&self) -> usize {
        self.op.out_dim()
    }
}

/// `f1(j, i) = mlp1(concat(h_prev_j, h_prev_i))`.
pub fn f1_interact(r: &Rectifier, h_prev_j: &[f64], h_prev_i: &[f64]) -> Result<Vec<f64>> {
    let d = r.prev_dim();
    if h_prev_j.len() != d || h_prev_i.len() != d {
        return Err(shape_err!(
            "f1 expects two vectors of length {d}, got {} and {}",
            h_prev_j.len(),
            h_prev_i.len()
        ));
    }
    let x: Vec<f64> = h_prev_j.iter().chain(h_prev_i).copied().collect();
    Ok(r.mlp1.forward(&x)?.0)
}

/// Preliminary previous-layer reconstruction `mlp2(f1_out)`.
pub fn f2_reconstruct(r: &Rectifier, f1_out: &[f64]) -> Result<Vec<f64>> {
    if f1_out.len() != r.out_dim() {
        return Err(shape_err!(
            "f2 expects length {}, got {}",
            r.out_dim(),
            f1_out.len()
        ));
    }
    Ok(r.mlp2.forward(f1_out)?.0)
}

/// `H†·f1 + (I − H†H)·f2`, evaluated as `f2 + H†(f1 − H·f2)`.
pub fn rnd_correct(op: &DegenerateOperator, f1_out: &[f64], f2_prelim: &[f64]) -> Result<Vec<f64>> {
    if f1_out.len() != op.out_dim() || f2_prelim.len() != op.in_dim() {
        return Err(shape_err!(
            "rnd_correct: operator is {}x{}, got f1 {} and f2 {}",
            op.out_dim(),
            op.in_dim(),
            f1_out.len(),
            f2_prelim.len()
        ));
    }
    let hf2 = op.apply(f2_prelim)?;
    let resid: Vec<f64> = f1_out.iter().zip(&hf2).map(|(a, b)| a - b).collect();
    let fix = op.apply_pinv(&resid)?;
    Ok(f2_prelim.iter().zip(&fix).map(|(a, b)| a + b).collect())
}

fn gamma_from_mean_degree(mean: f64) -> f64 {
    if mean > 0.0 {
        1.0 + 1.0 / mean
    } else {
        1.0
    }
}

/// `γ = 1 + 1/n_g` with `n_g` the mean original-graph degree of `unlearned`;
/// 1 when every unlearned node is isolated.
pub fn gamma_factor(g: &Graph, unlearned: &[usize]) -> Result<f64> {
    if unlearned.is_empty() {
        return Err(Error::InvalidRequest(
            "gamma needs a nonempty unlearn set".into(),
        ));
    }
    if let Some(&bad) = unlearned.iter().find(|&&j| j >= g.n()) {
        return Err(Error::Index(format!("node {bad} outside graph")));
    }
    let total: usize = unlearned.iter().map(|&j| g.degree(j)).sum();
    Ok(gamma_from_mean_degree(
        total as f64 / unlearned.len() as f64,
    ))
}

/// Edge counterpart of [`gamma_factor`]: mean degree over the endpoints of
/// the removed edges.
pub fn gamma_for_edges(g: &Graph, edges: &[(usize, usize)]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::InvalidRequest(
            "gamma needs a nonempty edge set".into(),
        ));
    }
    let total: usize = edges.iter().map(|&(a, b)| g.degree(a) + g.degree(b)).sum();
    Ok(gamma_from_mean_degree(
        total as f64 / (2 * edges.len()) as f64,
    ))
}

/// `γ` for either kind of request.
pub fn gamma_for_request(g: &Graph, kind: &RequestKind) -> Result<f64> {
    match kind {
        RequestKind::Nodes(u) => gamma_factor(g, u),
        RequestKind::Edges(e) => gamma_for_edges(g, e),
    }
}

/// Post-unlearning output embeddings for every original node.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnedEmbeddings {
    /// `n × dim_k`
    pub h_tilde: Matrix,
    /// Original ids of the nodes that survive the request, ascending.
    pub retained: Vec<usize>,
}

impl UnlearnedEmbeddings {
    /// Rows of the survivors, in [`Self::retained`] order.
    pub fn retained_view(&self) -> Matrix {
        self.h_tilde.select_rows(&self.retained)
    }
}

/// `h̃ᵢ` for a single node of a node request.
pub fn unlearned_embedding(
    r: &Rectifier,
    g: &Graph,
    capture: &Capture,
    unlearned: &[usize],
    i: usize,
) -> Result<Vec<f64>> {
    if i >= g.n() || capture.h_k.rows() != g.n() {
        return Err(Error::Index(format!("node {i} outside graph / capture")));
    }
    let mut h = capture.h_k.row(i).to_vec();
    if unlearned.is_empty() {
        return Ok(h);
    }
    let mut u = unlearned.to_vec();
    u.sort_unstable();
    u.dedup();
    let sources = match r.config.hop_radius {
        None => u,
        Some(radius) => {
            let mut near = g.within_hops(i, radius);
            near.push(i);
            near.sort_unstable();
            u.retain(|j| near.binary_search(j).is_ok());
            u
        }
    };
    if sources.is_empty() {
        return Ok(h);
    }
    let mut sum = vec![0.0; r.out_dim()];
    for &j in &sources {
        let f = f1_interact(r, capture.h_prev.row(j), capture.h_prev.row(i))?;
        crate::numerics::matrix::axpy(1.0, &f, &mut sum);
    }
    for (x, s) in h.iter_mut().zip(&sum) {
        *x -= r.gamma * s;
    }
    Ok(h)
}
