use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbones::{gcn_forward_propagated, propagate, BackboneKind, Hyper, TrainedModel};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, SplitSpec};
use crate::numerics::funcs::cross_entropy_with_grad;
use crate::numerics::{Adam, Matrix};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub seconds: f64,
}

/// Glorot-uniform initial weights for the given input width and class count.
pub fn init_weights(
    kind: BackboneKind,
    in_dim: usize,
    classes: usize,
    hyper: &Hyper,
) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut glorot = |r: usize, c: usize| {
        let limit = (6.0 / (r + c).max(1) as f64).sqrt();
        Matrix::from_fn(r, c, |_, _| rng.random_range(-limit..=limit))
    };
    match kind {
        BackboneKind::Gcn => {
            let w1 = glorot(in_dim, hyper.hidden_dim);
            let w2 = glorot(hyper.hidden_dim, classes);
            vec![w1, w2]
        }
        BackboneKind::Sgc => vec![glorot(in_dim, classes)],
    }
}

/// Full-batch training on the mean cross-entropy of the training nodes.
pub fn train_model(
    g: &Graph,
    split: &SplitSpec,
    kind: BackboneKind,
    hyper: &Hyper,
) -> Result<TrainOutcome> {
    if split.train.is_empty() {
        return Err(Error::InvalidRequest("no training nodes".into()));
    }
    if let Some(&bad) = split.train.iter().find(|&&i| i >= g.n()) {
        return Err(Error::Index(format!("training node {bad} outside graph")));
    }
    if kind == BackboneKind::Gcn && hyper.hidden_dim == 0 {
        return Err(Error::InvalidRequest("gcn needs hidden_dim >= 1".into()));
    }
    if hyper.k_hops == 0 {
        return Err(Error::InvalidRequest("k_hops must be >= 1".into()));
    }
    let start = Instant::now();
    let adj = normalize_adjacency(g);
    let mut weights = init_weights(kind, g.feature_dim(), g.num_classes(), hyper);
    let mut opt = Adam::new(hyper.lr, hyper.weight_decay);
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    let scale = 1.0 / split.train.len() as f64;

    // (Â X) for GCN, (Â^k X) for SGC, reused every epoch
    let base = match kind {
        BackboneKind::Gcn => adj.spmm(g.features())?,
        BackboneKind::Sgc => propagate(&adj, g.features(), hyper.k_hops)?,
    };

    for epoch in 0..hyper.epochs {
        match kind {
            BackboneKind::Gcn => {
                let z1 = base.matmul(&weights[0])?;
                let h1 = z1.map(|z| z.max(0.0));
                let a2 = adj.spmm(&h1)?;
                let logits = a2.matmul(&weights[1])?;
                let (loss, dlogits) = ce_grad(&logits, g.labels(), &split.train, scale)?;
                check_loss(loss, epoch)?;
                loss_curve.push(loss);
                let dw2 = a2.t_matmul(&dlogits)?;
                let da2 = dlogits.matmul_t(&weights[1])?;
                let mut dz1 = adj.spmm(&da2)?;
                for (d, &z) in dz1.data_mut().iter_mut().zip(z1.data()) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
                let dw1 = base.t_matmul(&dz1)?;
                let [w1, w2] = &mut weights[..] else {
                    unreachable!()
                };
                opt.step(
                    &mut [w1.data_mut(), w2.data_mut()],
                    &[dw1.data(), dw2.data()],
                )?;
            }
            BackboneKind::Sgc => {
                let logits = base.matmul(&weights[0])?;
                let (loss, dlogits) = ce_grad(&logits, g.labels(), &split.train, scale)?;
                check_loss(loss, epoch)?;
                loss_curve.push(loss);
                let dw = base.t_matmul(&dlogits)?;
                opt.step(&mut [weights[0].data_mut()], &[dw.data()])?;
            }
        }
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("backbone weights diverged".into()));
    }

    let capture = match kind {
        BackboneKind::Gcn => {
            let (h_prev, h_k) = gcn_forward_propagated(&weights, &adj, &base)?;
            crate::backbones::Capture { h_prev, h_k }
        }
        BackboneKind::Sgc => {
            let h_k = base.matmul(&weights[0])?;
            crate::backbones::Capture { h_prev: base, h_k }
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        model: TrainedModel {
            kind,
            hyper: hyper.clone(),
            weights,
            capture,
            loss_curve,
        },
        seconds,
    })
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "training loss became {loss} at epoch {epoch}"
        )))
    }
}

/// Mean cross-entropy over `ids` and its gradient w.r.t. all logits (zero
/// rows outside `ids`).
fn ce_grad(logits: &Matrix, labels: &[usize], ids: &[usize], scale: f64) -> Result<(f64, Matrix)> {
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for &i in ids {
        let (l, g) = cross_entropy_with_grad(logits.row(i), labels[i])?;
        total += l;
        for (d, x) in grad.row_mut(i).iter_mut().zip(&g) {
            *d = x * scale;
        }
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::{predict, TrainedModel};
    use crate::graph::gen_sbm;

    #[test]
    fn zero_epochs_keeps_initialization() {
        let (g, split) = gen_sbm(3, 10, 0.5, 0.05, 4, 0).unwrap();
        for kind in [BackboneKind::Gcn, BackboneKind::Sgc] {
            let mut hyper = Hyper::defaults(kind);
            hyper.epochs = 0;
            hyper.seed = 9;
            let out = train_model(&g, &split, kind, &hyper).unwrap();
            assert_eq!(out.model.weights, init_weights(kind, 4, 3, &hyper));
            assert!(out.model.loss_curve.is_empty());
        }
    }

    #[test]
    fn separable_sbm_reaches_high_f1() {
        let (g, split) = gen_sbm(5, 100, 0.1, 0.005, 16, 3).unwrap();
        for kind in [BackboneKind::Gcn, BackboneKind::Sgc] {
            let out = train_model(&g, &split, kind, &Hyper::defaults(kind)).unwrap();
            let f1 = predict(&out.model, &g, &split.test).unwrap().f1;
            assert!(f1 >= 0.9, "{kind}: test F1 {f1}");
            let c = &out.model.loss_curve;
            assert!(c[10] < c[0]);
            assert!(c.last().unwrap() < &c[0]);
        }
    }

    #[test]
    fn capture_is_reproducible_from_weights() {
        let (g, split) = gen_sbm(3, 20, 0.3, 0.02, 6, 1).unwrap();
        for kind in [BackboneKind::Gcn, BackboneKind::Sgc] {
            let mut hyper = Hyper::defaults(kind);
            hyper.epochs = 30;
            let m = train_model(&g, &split, kind, &hyper).unwrap().model;
            let again = m.forward(&g).unwrap();
            assert_eq!(again, m.capture);
            let rebuilt = TrainedModel::from_checkpoint(m.checkpoint(), &g).unwrap();
            assert_eq!(rebuilt.capture, m.capture);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (g, split) = gen_sbm(2, 10, 0.5, 0.05, 4, 0).unwrap();
        let mut hyper = Hyper::defaults(BackboneKind::Gcn);
        hyper.lr = f64::NAN;
        hyper.epochs = 3;
        assert!(matches!(
            train_model(&g, &split, BackboneKind::Gcn, &hyper),
            Err(Error::Numerical(_))
        ));
    }
}
