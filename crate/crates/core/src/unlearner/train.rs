use std::time::Instant;

use crate::backbones::{extract_h, Capture, DegenerateOperator, TrainedModel};
use crate::error::{shape_err, Error, Result};
use crate::graph::{remove_edges, remove_nodes, Graph, RequestKind, UnlearnRequest};
use crate::numerics::matrix::axpy;
use crate::numerics::{Adam, Matrix, MlpGrads};
use crate::unlearner::objective::{LossParts, Objective};
use crate::unlearner::plan::{retained_mask, source_lists, PairPlan};
use crate::unlearner::{gamma_for_request, Rectifier, RectifierConfig, UnlearnedEmbeddings};

/// Pairs per batched `f1` evaluation during inference.
const APPLY_CHUNK: usize = 1 << 15;

#[derive(Debug, Clone)]
pub struct RectifierOutcome {
    pub rectifier: Rectifier,
    /// Loss components before each update.
    pub history: Vec<LossParts>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub embeddings: UnlearnedEmbeddings,
    pub rectifier: Rectifier,
    pub history: Vec<LossParts>,
    /// Wall-clock of the whole unlearning step: operator extraction, anchor
    /// inference, rectifier training and the final rectification.
    pub seconds: f64,
}

/// Fits `mlp1`/`mlp2` on the combined loss with Adam.
///
/// `anchor` holds the output embeddings the local and gradient-ascent terms
/// start from: the captured `h_k`, or the pruned-graph inference in
/// high-ratio mode. Labels are taken from `g`.
pub fn train_rectifier(
    g: &Graph,
    capture: &Capture,
    anchor: &Matrix,
    op: DegenerateOperator,
    request: &UnlearnRequest,
    config: &RectifierConfig,
) -> Result<RectifierOutcome> {
    let start = Instant::now();
    config.validate()?;
    if request.is_empty() {
        return Err(Error::InvalidRequest("empty unlearn request".into()));
    }
    if capture.h_prev.rows() != g.n() || anchor.rows() != g.n() {
        return Err(shape_err!(
            "capture has {} rows, anchor {}, graph {} nodes",
            capture.h_prev.rows(),
            anchor.rows(),
            g.n()
        ));
    }
    let gamma = gamma_for_request(g, &request.kind)?;
    let mut rect = Rectifier::init(op, gamma, request.beta, config.clone())?;
    let op = rect.op.clone();
    let objective = build_objective(g, capture, anchor, &op, request, config, gamma)?;
    let mut opt = Adam::new(config.lr, 0.0);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (parts, grads) = objective.evaluate(&rect.mlp1, &rect.mlp2, true)?;
        if !parts.total.is_finite() {
            return Err(Error::Numerical(format!(
                "rectifier loss became {} at epoch {epoch}",
                parts.total
            )));
        }
        history.push(parts);
        let (g1, g2) = grads.expect("gradients requested");
        let mut grad_views = g1.slices();
        grad_views.extend(g2.slices());
        let mut params = rect.mlp1.param_slices_mut();
        params.extend(rect.mlp2.param_slices_mut());
        opt.step(&mut params, &grad_views)?;
    }
    let finite = |m: &crate::numerics::Mlp| {
        m.layers()
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    };
    if !finite(&rect.mlp1) || !finite(&rect.mlp2) {
        return Err(Error::Numerical("rectifier weights diverged".into()));
    }
    Ok(RectifierOutcome {
        rectifier: rect,
        history,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn build_objective<'a>(
    g: &'a Graph,
    capture: &'a Capture,
    anchor: &'a Matrix,
    op: &'a DegenerateOperator,
    request: &UnlearnRequest,
    config: &RectifierConfig,
    gamma: f64,
) -> Result<Objective<'a>> {
    let sources = source_lists(g, &request.kind, config.hop_radius)?;
    let inter_plus = match &request.kind {
        RequestKind::Nodes(u) => config.inter_plus_for(u.len()),
        RequestKind::Edges(_) => true,
    };
    let plan = PairPlan::build(g, request, &sources, config.local_top_frac, inter_plus)?;
    Objective::new(
        plan,
        &capture.h_prev,
        anchor,
        g.labels(),
        op,
        gamma,
        request.beta,
        config.use_rnd,
        config.ascent_ceiling,
    )
}

/// The training objective of `r` for `request` and its gradient with
/// respect to every parameter of `mlp1` and `mlp2`, using `r`'s γ, β and
/// config.
pub fn objective_gradients(
    r: &Rectifier,
    g: &Graph,
    capture: &Capture,
    anchor: &Matrix,
    request: &UnlearnRequest,
) -> Result<(LossParts, MlpGrads, MlpGrads)> {
    if request.is_empty() {
        return Err(Error::InvalidRequest("empty unlearn request".into()));
    }
    let request = UnlearnRequest {
        beta: r.beta,
        ..request.clone()
    };
    let obj = build_objective(g, capture, anchor, &r.op, &request, &r.config, r.gamma)?;
    let (parts, grads) = obj.evaluate(&r.mlp1, &r.mlp2, true)?;
    let (g1, g2) = grads.expect("gradients requested");
    Ok((parts, g1, g2))
}

/// `base − γ·Σ_{j∈sources[i]} f1(j, i)` for every row; rows without sources
/// are copied unchanged.
pub fn apply_rectifier(
    r: &Rectifier,
    h_prev: &Matrix,
    base: &Matrix,
    sources: &[Vec<usize>],
) -> Result<Matrix> {
    if h_prev.rows() != base.rows() || sources.len() != base.rows() || base.cols() != r.out_dim() {
        return Err(shape_err!(
            "apply: h_prev {} rows, base {}x{}, {} source lists, dim_k {}",
            h_prev.rows(),
            base.rows(),
            base.cols(),
            sources.len(),
            r.out_dim()
        ));
    }
    let pairs: Vec<(usize, usize)> = sources
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |&j| (j, i)))
        .collect();
    let mut out = base.clone();
    if pairs.is_empty() {
        return Ok(out);
    }
    let mut sums = Matrix::zeros(base.rows(), base.cols());
    for chunk in pairs.chunks(APPLY_CHUNK) {
        let (f1, _) = r.mlp1.forward_pairs(h_prev, h_prev, chunk)?;
        for (p, &(_, i)) in chunk.iter().enumerate() {
            axpy(1.0, f1.row(p), sums.row_mut(i));
        }
    }
    for (i, s) in sources.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        for (h, v) in out.row_mut(i).iter_mut().zip(sums.row(i)) {
            *h -= r.gamma * v;
        }
    }
    Ok(out)
}

/// The original weights run on the graph with the request applied.
/// Removed nodes keep their captured embedding.
pub fn middle_embeddings(model: &TrainedModel, g: &Graph, kind: &RequestKind) -> Result<Matrix> {
    match kind {
        RequestKind::Nodes(u) => {
            let (pruned, remap) = remove_nodes(g, u)?;
            if pruned.n() == 0 {
                return Err(Error::InvalidRequest("pruned graph is empty".into()));
            }
            let cap = model.forward(&pruned)?;
            let mut out = model.capture.h_k.clone();
            for (new, &old) in remap.survivors().iter().enumerate() {
                out.row_mut(old).copy_from_slice(cap.h_k.row(new));
            }
            Ok(out)
        }
        RequestKind::Edges(e) => Ok(model.forward(&remove_edges(g, e)?)?.h_k),
    }
}

/// Trains a rectifier for `request` against `model` and rectifies every
/// node's output embedding. `model.capture` must come from `g`.
pub fn unlearn(
    model: &TrainedModel,
    g: &Graph,
    request: &UnlearnRequest,
    config: &RectifierConfig,
) -> Result<UnlearnOutcome> {
    let start = Instant::now();
    config.validate()?;
    let capture = &model.capture;
    if capture.h_k.rows() != g.n() {
        return Err(shape_err!(
            "model capture has {} rows but graph has {} nodes",
            capture.h_k.rows(),
            g.n()
        ));
    }
    let op = extract_h(model)?;
    let middle;
    let anchor = if config.high_ratio_mode {
        middle = middle_embeddings(model, g, &request.kind)?;
        &middle
    } else {
        &capture.h_k
    };
    let trained = train_rectifier(g, capture, anchor, op, request, config)?;
    let sources = source_lists(g, &request.kind, config.hop_radius)?;
    let h_tilde = apply_rectifier(&trained.rectifier, &capture.h_prev, anchor, &sources)?;
    let keep = retained_mask(g.n(), &request.kind);
    let embeddings = UnlearnedEmbeddings {
        h_tilde,
        retained: (0..g.n()).filter(|&i| keep[i]).collect(),
    };
    Ok(UnlearnOutcome {
        embeddings,
        rectifier: trained.rectifier,
        history: trained.history,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// [`unlearn`] with the pruned-graph anchor switched on.
pub fn high_ratio_unlearn(
    model: &TrainedModel,
    g: &Graph,
    request: &UnlearnRequest,
    config: &RectifierConfig,
) -> Result<UnlearnOutcome> {
    let config = RectifierConfig {
        high_ratio_mode: true,
        ..config.clone()
    };
    unlearn(model, g, request, &config)
}

/// Removes the influence carried by `edges` (both directions) with an
/// already-trained rectifier.
pub fn edge_unlearn(
    r: &Rectifier,
    g: &Graph,
    capture: &Capture,
    edges: &[(usize, usize)],
) -> Result<UnlearnedEmbeddings> {
    let retained = (0..g.n()).collect();
    if edges.is_empty() {
        return Ok(UnlearnedEmbeddings {
            h_tilde: capture.h_k.clone(),
            retained,
        });
    }
    let sources = source_lists(g, &RequestKind::Edges(edges.to_vec()), None)?;
    let h_tilde = apply_rectifier(r, &capture.h_prev, &capture.h_k, &sources)?;
    Ok(UnlearnedEmbeddings { h_tilde, retained })
}
