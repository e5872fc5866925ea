//! The rectifier's training objective and its analytic gradient.

use serde::{Deserialize, Serialize};

use crate::backbones::DegenerateOperator;
use crate::error::{shape_err, Result};
use crate::graph::Graph;
use crate::numerics::funcs::{cross_entropy_with_grad, kl_to_softmax_with_grad};
use crate::numerics::matrix::axpy;
use crate::numerics::{cross_entropy, kl_div, softmax_norm, Matrix, Mlp, MlpGrads};
use crate::unlearner::plan::PairPlan;
use crate::unlearner::{f1_interact, f2_reconstruct, rnd_correct, Rectifier};

/// Component losses of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub inter: f64,
    pub local: f64,
    pub plus: f64,
    pub total: f64,
}

/// `β·(plus + inter) + (1 − β)·local`
pub fn total_loss(beta: f64, plus: f64, inter: f64, local: f64) -> f64 {
    beta * (plus + inter) + (1.0 - beta) * local
}

/// Mean over targets of `KL(softmax(h_prev[m]) ‖ softmax(Σ_{i∈N(m)} rnd(f2(f1(m, i)))))`.
///
/// Neighborless targets are skipped. Evaluated pair by pair through the
/// single-vector operations; training uses a batched equivalent.
pub fn loss_inter(r: &Rectifier, g: &Graph, h_prev: &Matrix, targets: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for &m in targets {
        if g.degree(m) == 0 {
            continue;
        }
        let mut s = vec![0.0; h_prev.cols()];
        for &i in g.neighbors(m) {
            let a = f1_interact(r, h_prev.row(m), h_prev.row(i))?;
            let b = f2_reconstruct(r, &a)?;
            let corrected = if r.config.use_rnd {
                rnd_correct(&r.op, &a, &b)?
            } else {
                b
            };
            axpy(1.0, &corrected, &mut s);
        }
        total += kl_div(&softmax_norm(h_prev.row(m)), &softmax_norm(&s))?;
        count += 1;
    }
    if count == 0 {
        return Err(crate::Error::InvalidRequest(
            "no reconstruction target has a neighbor".into(),
        ));
    }
    Ok(total / count as f64)
}

/// `Σ_{p∈P} KL(softmax(anchor[p]) ‖ softmax(h_tilde[p]))`.
pub fn loss_local(anchor: &Matrix, h_tilde: &Matrix, p_set: &[usize]) -> Result<f64> {
    if p_set.is_empty() {
        return Err(crate::Error::InvalidRequest("empty high-degree set".into()));
    }
    p_set
        .iter()
        .map(|&p| kl_div(&softmax_norm(anchor.row(p)), &softmax_norm(h_tilde.row(p))))
        .sum()
}

/// `−Σ_{j∈U} CE(h_tilde[j], y_j)`, each term capped at `ceiling` if given.
pub fn loss_plus(
    h_tilde: &Matrix,
    unlearned: &[usize],
    labels: &[usize],
    ceiling: Option<f64>,
) -> Result<f64> {
    let mut s = 0.0;
    for &j in unlearned {
        let ce = cross_entropy(h_tilde.row(j), labels[j])?;
        s -= ceiling.map_or(ce, |c| ce.min(c));
    }
    Ok(s)
}

/// Everything one training step needs that does not change between steps.
pub(crate) struct Objective<'a> {
    pub plan: PairPlan,
    pub h_prev: &'a Matrix,
    pub anchor: &'a Matrix,
    pub labels: &'a [usize],
    pub op: &'a DegenerateOperator,
    pub gamma: f64,
    pub beta: f64,
    pub use_rnd: bool,
    pub ceiling: Option<f64>,
    inter_p: Vec<Vec<f64>>,
    local_p: Vec<Vec<f64>>,
}

impl<'a> Objective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        plan: PairPlan,
        h_prev: &'a Matrix,
        anchor: &'a Matrix,
        labels: &'a [usize],
        op: &'a DegenerateOperator,
        gamma: f64,
        beta: f64,
        use_rnd: bool,
        ceiling: Option<f64>,
    ) -> Result<Self> {
        if h_prev.rows() != anchor.rows()
            || h_prev.cols() != op.in_dim()
            || anchor.cols() != op.out_dim()
        {
            return Err(shape_err!(
                "embeddings {}x{} / {}x{} do not match operator {}x{}",
                h_prev.rows(),
                h_prev.cols(),
                anchor.rows(),
                anchor.cols(),
                op.out_dim(),
                op.in_dim()
            ));
        }
        let inter_p = plan
            .inter
            .iter()
            .map(|g| softmax_norm(h_prev.row(g.node)))
            .collect();
        let local_p = plan
            .local
            .iter()
            .map(|g| softmax_norm(anchor.row(g.node)))
            .collect();
        Ok(Objective {
            plan,
            h_prev,
            anchor,
            labels,
            op,
            gamma,
            beta,
            use_rnd,
            ceiling,
            inter_p,
            local_p,
        })
    }

    /// Loss components and, if requested, gradients for both networks.
    pub fn evaluate(
        &self,
        mlp1: &Mlp,
        mlp2: &Mlp,
        want_grad: bool,
    ) -> Result<(LossParts, Option<(MlpGrads, MlpGrads)>)> {
        let plan = &self.plan;
        let c = self.op.out_dim();
        let (a, tape1) = mlp1.forward_pairs(self.h_prev, self.h_prev, &plan.pairs)?;
        let mut da = Matrix::zeros(a.rows(), c);

        // Reconstruction: f2 summed per target, then the range/null correction.
        let n_inter = plan.inter_rows();
        let inter_in = Matrix::from_vec(n_inter, c, a.data()[..n_inter * c].to_vec())?;
        let mut bounds: Vec<usize> = plan.inter.iter().map(|g| g.start).collect();
        bounds.push(n_inter);
        let (b_sum, tape2) = mlp2.forward_segments(&inter_in, &bounds)?;
        let mut db = Matrix::zeros(b_sum.rows(), b_sum.cols());
        let inter_scale = self.beta / plan.inter.len() as f64;
        let mut inter = 0.0;
        for (t, grp) in plan.inter.iter().enumerate() {
            let mut a_sum = vec![0.0; c];
            for r in grp.start..grp.end {
                axpy(1.0, a.row(r), &mut a_sum);
            }
            let s = if self.use_rnd {
                rnd_correct(self.op, &a_sum, b_sum.row(t))?
            } else {
                b_sum.row(t).to_vec()
            };
            let (kl, gs) = kl_to_softmax_with_grad(&self.inter_p[t], &s)?;
            inter += kl;
            if !want_grad {
                continue;
            }
            let gs: Vec<f64> = gs.iter().map(|x| x * inter_scale).collect();
            if self.use_rnd {
                // s = b + H†(a − H b): ds/da = H†, ds/db = I − H†H
                let g_a = self.op.h_pinv().t_matvec(&gs)?;
                let back = self.op.h().t_matvec(&g_a)?;
                for ((d, g), bk) in db.row_mut(t).iter_mut().zip(&gs).zip(&back) {
                    *d = g - bk;
                }
                for r in grp.start..grp.end {
                    axpy(1.0, &g_a, da.row_mut(r));
                }
            } else {
                db.row_mut(t).copy_from_slice(&gs);
            }
        }
        inter /= plan.inter.len() as f64;

        // Local search on high-degree retained nodes: h̃ = anchor − γ Σ f1.
        let mut local = 0.0;
        let local_scale = -self.gamma * (1.0 - self.beta);
        for (t, grp) in plan.local.iter().enumerate() {
            let h_t = self.rectified(&a, grp.node, grp.start, grp.end);
            let (kl, g) = kl_to_softmax_with_grad(&self.local_p[t], &h_t)?;
            local += kl;
            if want_grad {
                for r in grp.start..grp.end {
                    axpy(local_scale, &g, da.row_mut(r));
                }
            }
        }

        // Gradient ascent on the unlearned nodes' own cross-entropy.
        let mut plus = 0.0;
        let plus_scale = self.gamma * self.beta;
        for grp in &plan.plus {
            let h_t = self.rectified(&a, grp.node, grp.start, grp.end);
            let (ce, g) = cross_entropy_with_grad(&h_t, self.labels[grp.node])?;
            if let Some(cap) = self.ceiling.filter(|&cap| ce >= cap) {
                plus -= cap;
                continue;
            }
            plus -= ce;
            if want_grad {
                for r in grp.start..grp.end {
                    axpy(plus_scale, &g, da.row_mut(r));
                }
            }
        }

        let parts = LossParts {
            inter,
            local,
            plus,
            total: total_loss(self.beta, plus, inter, local),
        };
        if !want_grad {
            return Ok((parts, None));
        }
        let (g2, d_inter_in) = mlp2.backward_batch(&tape2, &db)?;
        for r in 0..n_inter {
            axpy(1.0, d_inter_in.row(r), da.row_mut(r));
        }
        let (g1, _) = mlp1.backward_batch(&tape1, &da)?;
        Ok((parts, Some((g1, g2))))
    }

    fn rectified(&self, a: &Matrix, node: usize, start: usize, end: usize) -> Vec<f64> {
        let mut sum = vec![0.0; a.cols()];
        for r in start..end {
            axpy(1.0, a.row(r), &mut sum);
        }
        self.anchor
            .row(node)
            .iter()
            .zip(&sum)
            .map(|(h, s)| h - self.gamma * s)
            .collect()
    }
}
