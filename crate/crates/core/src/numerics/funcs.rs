//! Normalization, divergence and classification losses, with the gradients
//! the rectifier and backbones need.

use crate::error::{shape_err, Error, Result};

/// Floor added to `q` before taking logs in [`kl_div`].
pub const KL_EPS: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax_norm(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `Σ pᵢ ln(pᵢ / (qᵢ + ε))`, with `pᵢ == 0` terms contributing nothing.
/// Clamped at zero so that floor effects cannot produce a negative value.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(shape_err!(
            "kl_div: p has {} entries, q has {}",
            p.len(),
            q.len()
        ));
    }
    Ok(kl_raw(p, q).max(0.0))
}

fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / (qi + KL_EPS)).ln())
        .sum()
}

/// KL(p ‖ softmax(z)) and its gradient with respect to the logits `z`.
pub fn kl_to_softmax_with_grad(p: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let q = softmax_norm(z);
    let loss = kl_div(p, &q)?;
    // dL/dq_k = -p_k / (q_k + ε); push through the softmax jacobian.
    let g: Vec<f64> = p
        .iter()
        .zip(&q)
        .map(|(&pk, &qk)| -pk / (qk + KL_EPS))
        .collect();
    Ok((loss, softmax_backward(&q, &g)))
}

/// Given `q = softmax(z)` and `dL/dq`, returns `dL/dz`.
pub fn softmax_backward(q: &[f64], dq: &[f64]) -> Vec<f64> {
    let inner: f64 = q.iter().zip(dq).map(|(a, b)| a * b).sum();
    q.iter()
        .zip(dq)
        .map(|(&qj, &gj)| qj * (gj - inner))
        .collect()
}

/// `-ln softmax(logits)[label]`, computed with log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Index(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Cross-entropy and its gradient `softmax(logits) - onehot(label)`.
pub fn cross_entropy_with_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy(logits, label)?;
    let mut g = softmax_norm(logits);
    g[label] -= 1.0;
    Ok((loss, g))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_norm(&[0.0, 0.0]), vec![0.5, 0.5]);
        for x in softmax_norm(&[1000.0, 1000.0, 1000.0]) {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let s = softmax_norm(&[1f64.ln(), 3f64.ln()]);
        assert_abs_diff_eq!(s[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_div(&p, &p).unwrap(), 0.0);
        // 0.5 ln 2 + 0.5 ln(2/3)
        let v = kl_div(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(v, 0.143_841_036_225_890_3, epsilon = 1e-10);
        let v = kl_div(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-10);
        assert!(matches!(kl_div(&[1.0], &[0.5, 0.5]), Err(Error::Shape(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        assert_abs_diff_eq!(
            cross_entropy(&[0.0, 0.0], 0).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert!(cross_entropy(&[10.0, -10.0], 0).unwrap() < 1e-8);
        // ln(e + e² + e³) - 3
        assert_abs_diff_eq!(
            cross_entropy(&[1.0, 2.0, 3.0], 2).unwrap(),
            0.407_605_964_444_380_1,
            epsilon = 1e-12
        );
        assert!(matches!(
            cross_entropy(&[0.0, 0.0], 2),
            Err(Error::Index(_))
        ));
    }

    fn fd<F: Fn(&[f64]) -> f64>(f: F, z: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..z.len())
            .map(|i| {
                let mut a = z.to_vec();
                let mut b = z.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = softmax_norm(&[0.3, -1.0, 2.0, 0.1]);
        let z = [1.0, 0.5, -0.3, 0.8];
        let (_, g) = kl_to_softmax_with_grad(&p, &z).unwrap();
        let num = fd(|z| kl_raw(&p, &softmax_norm(z)), &z);
        for (a, b) in g.iter().zip(&num) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        let (_, g) = cross_entropy_with_grad(&z, 2).unwrap();
        let num = fd(|z| cross_entropy(z, 2).unwrap(), &z);
        for (a, b) in g.iter().zip(&num) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_simplex_and_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 1..12),
            c in -100.0f64..100.0,
        ) {
            let s = softmax_norm(&v);
            prop_assert!(s.iter().all(|&x| x > 0.0));
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let t = softmax_norm(&shifted);
            for (a, b) in s.iter().zip(&t) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn kl_is_nonnegative(
            a in prop::collection::vec(-5.0f64..5.0, 2..8),
            b in prop::collection::vec(-5.0f64..5.0, 2..8),
        ) {
            let n = a.len().min(b.len());
            let p = softmax_norm(&a[..n]);
            let q = softmax_norm(&b[..n]);
            prop_assert!(kl_div(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_div(&p, &p).unwrap() < 1e-10);
        }
    }
}
