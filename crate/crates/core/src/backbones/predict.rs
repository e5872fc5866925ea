use crate::backbones::TrainedModel;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{argmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Predicted class for every node of the graph.
    pub classes: Vec<usize>,
    /// Micro-F1 on the requested ids.
    pub f1: f64,
}

/// Runs `model` on `g` and scores it on `ids`.
pub fn predict(model: &TrainedModel, g: &Graph, ids: &[usize]) -> Result<Prediction> {
    let logits = model.forward(g)?.h_k;
    let classes = classify(&logits);
    let f1 = micro_f1(&classes, g.labels(), ids)?;
    Ok(Prediction { classes, f1 })
}

/// Row-wise argmax.
pub fn classify(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

/// Micro-averaged F1 over `ids`. With one label per node, micro precision
/// and recall both equal accuracy, so this is the fraction of hits.
pub fn micro_f1(pred: &[usize], truth: &[usize], ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::InvalidRequest(
            "micro_f1 over an empty id set".into(),
        ));
    }
    let mut hits = 0usize;
    for &i in ids {
        let (p, t) = match (pred.get(i), truth.get(i)) {
            (Some(p), Some(t)) => (p, t),
            _ => return Err(Error::Index(format!("id {i} outside prediction range"))),
        };
        hits += usize::from(p == t);
    }
    Ok(hits as f64 / ids.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_closed_forms() {
        let truth = [0, 1, 2, 1];
        assert_eq!(micro_f1(&truth, &truth, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(micro_f1(&[1, 2, 0, 0], &truth, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(
            micro_f1(&[0, 1, 2, 0], &truth, &[0, 1, 2, 3]).unwrap(),
            0.75
        );
        assert!(matches!(
            micro_f1(&truth, &truth, &[]),
            Err(Error::InvalidRequest(_))
        ));
        assert!(micro_f1(&truth, &truth, &[9]).is_err());
    }
}
