//! Pseudo-inverse of a rank-deficient matrix and the range-null-space
//! correction used by the rectifier.

use gnn_unlearn::backbones::DegenerateOperator;
use gnn_unlearn::numerics::{pinv, Matrix, DEFAULT_PINV_TOL};
use gnn_unlearn::unlearner::rnd_correct;

fn main() -> gnn_unlearn::Result<()> {
    let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]])?;
    let p = pinv(&a, DEFAULT_PINV_TOL)?;
    println!("pinv([[1,2],[2,4]]) = {:?}", p.data());

    // A 2x4 operator: corrected vectors hit f1 exactly under H while keeping
    // the null-space part of the preliminary vector f2.
    let op = DegenerateOperator::new(Matrix::from_rows(&[
        vec![1.0, 0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 1.0],
    ])?)?;
    let (f1, f2) = ([3.0, -1.0], [0.5, 0.5, 2.0, -2.0]);
    let s = rnd_correct(&op, &f1, &f2)?;
    println!("s = {s:?}");
    println!("H s = {:?} (target {f1:?})", op.apply(&s)?);
    println!("null part of s  = {:?}", op.null_project(&s)?);
    println!("null part of f2 = {:?}", op.null_project(&f2)?);
    Ok(())
}
