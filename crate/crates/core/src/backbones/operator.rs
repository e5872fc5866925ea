use crate::backbones::TrainedModel;
use crate::error::{shape_err, Result};
use crate::numerics::{pinv, Matrix, DEFAULT_PINV_TOL};

/// The last layer's linear map `H` (column-vector convention, `dim_k ×
/// dim_{k−1}`) and its pseudoinverse.
///
/// The null-space projector `I − H†H` is `dim_{k−1} × dim_{k−1}`, which is
/// large for SGC on wide features, so it is applied in factored form and
/// only materialized on request.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateOperator {
    h: Matrix,
    h_pinv: Matrix,
}

/// `H = Wᵀ` for the final weight `W` (`dim_{k−1} × dim_k`).
pub fn extract_h(model: &TrainedModel) -> Result<DegenerateOperator> {
    let w = model
        .weights
        .last()
        .ok_or_else(|| shape_err!("model has no weights"))?;
    DegenerateOperator::new(w.transpose())
}

impl DegenerateOperator {
    pub fn new(h: Matrix) -> Result<Self> {
        let h_pinv = pinv(&h, DEFAULT_PINV_TOL)?;
        Ok(DegenerateOperator { h, h_pinv })
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn h_pinv(&self) -> &Matrix {
        &self.h_pinv
    }

    /// `dim_k`
    pub fn out_dim(&self) -> usize {
        self.h.rows()
    }

    /// `dim_{k−1}`
    pub fn in_dim(&self) -> usize {
        self.h.cols()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.h.matvec(v)
    }

    pub fn apply_pinv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.h_pinv.matvec(v)
    }

    /// `(I − H†H) v`
    pub fn null_project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let back = self.h_pinv.matvec(&self.h.matvec(v)?)?;
        Ok(v.iter().zip(&back).map(|(a, b)| a - b).collect())
    }

    /// Dense `I − H†H`.
    pub fn null_projector(&self) -> Matrix {
        let php = self.h_pinv.matmul(&self.h).expect("pinv shape matches");
        Matrix::identity(self.in_dim()).sub(&php).expect("square")
    }
}
