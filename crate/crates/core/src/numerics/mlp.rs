//! Fully connected networks with hand-derived reverse-mode gradients.
//!
//! Samples are rows. Weights are stored `in × out`, so a layer computes
//! `Z = X·W + 1·bᵀ`. The hidden activation is applied between layers and the
//! output layer is linear.
//!
//! Besides plain batched evaluation there is a pairwise entry point,
//! [`Mlp::forward_pairs`], for inputs of the form `concat(left[j], right[i])`.
//! It splits the first weight matrix into its `left` and `right` halves and
//! projects each distinct node once, which keeps pair batches cheap when the
//! per-node vectors are wide.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::matrix::Matrix;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in × out`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    fn zeros_like(&self) -> Layer {
        Layer {
            weight: Matrix::zeros(self.in_dim(), self.out_dim()),
            bias: vec![0.0; self.out_dim()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawMlp", into = "RawMlp")]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    version: u64,
}

#[derive(Serialize, Deserialize)]
struct RawMlp {
    activation: Activation,
    layers: Vec<Layer>,
}

impl TryFrom<RawMlp> for Mlp {
    type Error = Error;
    fn try_from(raw: RawMlp) -> Result<Self> {
        Mlp::from_layers(raw.layers, raw.activation)
    }
}

impl From<Mlp> for RawMlp {
    fn from(m: Mlp) -> Self {
        RawMlp {
            activation: m.activation,
            layers: m.layers,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.activation == other.activation && self.layers == other.layers
    }
}

/// Gradients with the same layout as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(shape_err!("gradient layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign(&b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Flat views in the same order as [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&x| x == 0.0))
    }
}

enum FirstInput {
    Dense(Matrix),
    Pairs {
        left_rows: Matrix,
        right_rows: Matrix,
        left_slot: Vec<usize>,
        right_slot: Vec<usize>,
    },
}

struct Segments {
    bounds: Vec<usize>,
    /// Per-segment sums of the output layer's input rows.
    summed: Matrix,
}

/// Activation cache from a forward pass, consumed by the matching backward.
pub struct Tape {
    version: u64,
    first: FirstInput,
    /// Pre-activations and activations of the hidden layers.
    pre: Vec<Matrix>,
    act: Vec<Matrix>,
    batch: usize,
    out_shape: (usize, usize),
    segments: Option<Segments>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    /// Glorot-uniform weights and zero biases for the layer widths in `dims`.
    pub fn new(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(shape_err!("an mlp needs at least input and output widths"));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                Layer {
                    weight: Matrix::from_fn(fan_in, fan_out, |_, _| {
                        rng.random_range(-limit..=limit)
                    }),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Mlp::from_layers(layers, activation)
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape_err!("an mlp needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(shape_err!(
                    "layer {i}: bias length {} vs out dim {}",
                    l.bias.len(),
                    l.out_dim()
                ));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(shape_err!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                ));
            }
        }
        Ok(Mlp {
            layers,
            activation,
            version: fresh_version(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Sets the output layer to zero, so the network outputs zero everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight.data_mut().fill(0.0);
        last.bias.fill(0.0);
        self.version = fresh_version();
    }

    /// Mutable flat parameter views: `[W₀, b₀, W₁, b₁, …]`. Invalidates
    /// outstanding tapes.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version = fresh_version();
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let (y, tape) = self.forward_batch(&Matrix::from_vec(1, x.len(), x.to_vec())?)?;
        Ok((y.into_data(), tape))
    }

    /// Single-sample backward pass: parameter gradients and `dL/dx`.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        let (g, dx) = self.backward_batch(tape, &up)?;
        Ok((g, dx.into_data()))
    }

    /// Evaluates without keeping a tape.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_batch(x)?.0)
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, Tape)> {
        if x.cols() != self.in_dim() {
            return Err(shape_err!(
                "mlp expects inputs of width {}, got {}",
                self.in_dim(),
                x.cols()
            ));
        }
        let mut z0 = x.matmul(&self.layers[0].weight)?;
        add_bias(&mut z0, &self.layers[0].bias);
        self.finish_forward(z0, FirstInput::Dense(x.clone()))
    }

    /// Forward pass on rows `concat(left[j], right[i])` for each `(j, i)` in
    /// `pairs`.
    pub fn forward_pairs(
        &self,
        left: &Matrix,
        right: &Matrix,
        pairs: &[(usize, usize)],
    ) -> Result<(Matrix, Tape)> {
        let (dl, dr) = (left.cols(), right.cols());
        if dl + dr != self.in_dim() {
            return Err(shape_err!(
                "pair widths {dl}+{dr} do not match mlp input width {}",
                self.in_dim()
            ));
        }
        for &(j, i) in pairs {
            if j >= left.rows() || i >= right.rows() {
                return Err(Error::Index(format!("pair ({j}, {i}) out of range")));
            }
        }
        let (left_ids, left_slot) = compact(pairs.iter().map(|p| p.0), left.rows());
        let (right_ids, right_slot) = compact(pairs.iter().map(|p| p.1), right.rows());
        let left_rows = left.select_rows(&left_ids);
        let right_rows = right.select_rows(&right_ids);

        let w = &self.layers[0].weight;
        let out = w.cols();
        let w_left = Matrix::from_vec(dl, out, w.data()[..dl * out].to_vec())?;
        let w_right = Matrix::from_vec(dr, out, w.data()[dl * out..].to_vec())?;
        let proj_left = left_rows.matmul(&w_left)?;
        let proj_right = right_rows.matmul(&w_right)?;

        let bias = &self.layers[0].bias;
        let mut z0 = Matrix::zeros(pairs.len(), out);
        for p in 0..pairs.len() {
            let a = proj_left.row(left_slot[p]);
            let b = proj_right.row(right_slot[p]);
            for (k, z) in z0.row_mut(p).iter_mut().enumerate() {
                *z = a[k] + b[k] + bias[k];
            }
        }
        self.finish_forward(
            z0,
            FirstInput::Pairs {
                left_rows,
                right_rows,
                left_slot,
                right_slot,
            },
        )
    }

    fn finish_forward(&self, z0: Matrix, first: FirstInput) -> Result<(Matrix, Tape)> {
        let batch = z0.rows();
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut act = Vec::with_capacity(self.layers.len() - 1);
        let mut z = z0;
        for layer in &self.layers[1..] {
            let a = z.map(|v| self.activation.apply(v));
            let mut next = a.matmul(&layer.weight)?;
            add_bias(&mut next, &layer.bias);
            pre.push(z);
            act.push(a);
            z = next;
        }
        let out_shape = z.shape();
        Ok((
            z,
            Tape {
                version: self.version,
                first,
                pre,
                act,
                batch,
                out_shape,
                segments: None,
            },
        ))
    }

    /// Runs the network on every row of `x` and returns, for each segment
    /// `bounds[s]..bounds[s+1]`, the sum of the outputs over its rows.
    ///
    /// The output layer is linear, so the sum is taken over its inputs and
    /// the last matrix product runs once per segment instead of once per row.
    pub fn forward_segments(&self, x: &Matrix, bounds: &[usize]) -> Result<(Matrix, Tape)> {
        if x.cols() != self.in_dim() {
            return Err(shape_err!(
                "mlp expects inputs of width {}, got {}",
                self.in_dim(),
                x.cols()
            ));
        }
        if bounds.first() != Some(&0)
            || bounds.last() != Some(&x.rows())
            || bounds.windows(2).any(|w| w[0] > w[1])
        {
            return Err(shape_err!(
                "segment bounds must rise from 0 to {}",
                x.rows()
            ));
        }
        let last = self.layers.len() - 1;
        let mut pre: Vec<Matrix> = Vec::with_capacity(last);
        let mut act: Vec<Matrix> = Vec::with_capacity(last);
        for (l, layer) in self.layers[..last].iter().enumerate() {
            let input = if l == 0 { x } else { &act[l - 1] };
            let mut z = input.matmul(&layer.weight)?;
            add_bias(&mut z, &layer.bias);
            act.push(z.map(|v| self.activation.apply(v)));
            pre.push(z);
        }
        let input = act.last().unwrap_or(x);
        let segs = bounds.len() - 1;
        let mut summed = Matrix::zeros(segs, input.cols());
        for s in 0..segs {
            let acc = summed.row_mut(s);
            for r in bounds[s]..bounds[s + 1] {
                for (a, v) in acc.iter_mut().zip(input.row(r)) {
                    *a += v;
                }
            }
        }
        let out_layer = &self.layers[last];
        let mut y = summed.matmul(&out_layer.weight)?;
        for s in 0..segs {
            let count = (bounds[s + 1] - bounds[s]) as f64;
            for (v, b) in y.row_mut(s).iter_mut().zip(&out_layer.bias) {
                *v += count * b;
            }
        }
        let out_shape = y.shape();
        Ok((
            y,
            Tape {
                version: self.version,
                first: FirstInput::Dense(x.clone()),
                pre,
                act,
                batch: x.rows(),
                out_shape,
                segments: Some(Segments {
                    bounds: bounds.to_vec(),
                    summed,
                }),
            },
        ))
    }

    pub fn backward_batch(&self, tape: &Tape, upstream: &Matrix) -> Result<(MlpGrads, Matrix)> {
        self.check_tape(tape, upstream)?;
        let mut grads = self.zero_grads();
        let mut delta = upstream.clone();
        let mut top = self.layers.len();
        if let Some(seg) = &tape.segments {
            // Output layer saw per-segment sums: y_s = (Σ_r a_r)·W + n_s·b.
            top -= 1;
            let out_layer = &self.layers[top];
            grads.layers[top].weight = seg.summed.t_matmul(&delta)?;
            for s in 0..delta.rows() {
                let count = (seg.bounds[s + 1] - seg.bounds[s]) as f64;
                for (g, d) in grads.layers[top].bias.iter_mut().zip(delta.row(s)) {
                    *g += count * d;
                }
            }
            let per_seg = delta.matmul_t(&out_layer.weight)?;
            let rows = *seg.bounds.last().expect("non-empty bounds");
            let mut expanded = Matrix::zeros(rows, per_seg.cols());
            for s in 0..per_seg.rows() {
                for r in seg.bounds[s]..seg.bounds[s + 1] {
                    expanded.row_mut(r).copy_from_slice(per_seg.row(s));
                }
            }
            if top == 0 {
                return Ok((grads, expanded));
            }
            for (b, &z) in expanded.data_mut().iter_mut().zip(tape.pre[top - 1].data()) {
                *b *= self.activation.derivative(z);
            }
            delta = expanded;
        }
        for l in (0..top).rev() {
            sum_rows_into(&delta, &mut grads.layers[l].bias);
            if l > 0 {
                grads.layers[l].weight = tape.act[l - 1].t_matmul(&delta)?;
                let mut back = delta.matmul_t(&self.layers[l].weight)?;
                for (b, &z) in back.data_mut().iter_mut().zip(tape.pre[l - 1].data()) {
                    *b *= self.activation.derivative(z);
                }
                delta = back;
            } else {
                return match &tape.first {
                    FirstInput::Dense(x) => {
                        grads.layers[0].weight = x.t_matmul(&delta)?;
                        let dx = delta.matmul_t(&self.layers[0].weight)?;
                        Ok((grads, dx))
                    }
                    FirstInput::Pairs {
                        left_rows,
                        right_rows,
                        left_slot,
                        right_slot,
                    } => {
                        let out = delta.cols();
                        let mut acc_left = Matrix::zeros(left_rows.rows(), out);
                        let mut acc_right = Matrix::zeros(right_rows.rows(), out);
                        for p in 0..delta.rows() {
                            let d = delta.row(p);
                            for (a, x) in acc_left.row_mut(left_slot[p]).iter_mut().zip(d) {
                                *a += x;
                            }
                            for (a, x) in acc_right.row_mut(right_slot[p]).iter_mut().zip(d) {
                                *a += x;
                            }
                        }
                        let gl = left_rows.t_matmul(&acc_left)?;
                        let gr = right_rows.t_matmul(&acc_right)?;
                        let mut data = gl.into_data();
                        data.extend_from_slice(gr.data());
                        grads.layers[0].weight = Matrix::from_vec(self.in_dim(), out, data)?;
                        Ok((grads, Matrix::zeros(delta.rows(), 0)))
                    }
                };
            }
        }
        unreachable!("loop returns at layer 0")
    }

    fn check_tape(&self, tape: &Tape, upstream: &Matrix) -> Result<()> {
        if tape.version != self.version || tape.pre.len() + 1 != self.layers.len() {
            return Err(Error::Contract(
                "tape was not produced by this network state".into(),
            ));
        }
        if upstream.shape() != tape.out_shape {
            return Err(shape_err!(
                "upstream gradient {}x{} vs output {}x{}",
                upstream.rows(),
                upstream.cols(),
                tape.out_shape.0,
                tape.out_shape.1
            ));
        }
        Ok(())
    }
}

fn add_bias(z: &mut Matrix, bias: &[f64]) {
    for r in 0..z.rows() {
        for (x, b) in z.row_mut(r).iter_mut().zip(bias) {
            *x += b;
        }
    }
}

fn sum_rows_into(m: &Matrix, out: &mut [f64]) {
    for r in 0..m.rows() {
        for (o, x) in out.iter_mut().zip(m.row(r)) {
            *o += x;
        }
    }
}

/// Distinct ids in first-seen order, and each element's slot in that list.
/// Ids are below `bound`.
fn compact(ids: impl Iterator<Item = usize>, bound: usize) -> (Vec<usize>, Vec<usize>) {
    let mut seen = vec![usize::MAX; bound];
    let mut uniq = Vec::new();
    let slots = ids
        .map(|id| {
            if seen[id] == usize::MAX {
                seen[id] = uniq.len();
                uniq.push(id);
            }
            seen[id]
        })
        .collect();
    (uniq, slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(dims: &[usize], act: Activation, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mlp::new(dims, act, &mut rng).unwrap();
        // non-zero biases so their gradients are exercised
        for s in m.param_slices_mut() {
            for x in s.iter_mut() {
                if *x == 0.0 {
                    *x = rng.random_range(-0.5..0.5);
                }
            }
        }
        m
    }

    /// Loss = Σ c_k y_k for a fixed vector c, so upstream = c.
    fn fd_check(m: &Mlp, x: &[f64], c: &[f64]) {
        let (_, tape) = m.forward(x).unwrap();
        let (g, dx) = m.backward(&tape, c).unwrap();
        let loss = |m: &Mlp, x: &[f64]| -> f64 {
            let y = m.forward(x).unwrap().0;
            y.iter().zip(c).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        let flat: Vec<Vec<f64>> = g.slices().iter().map(|s| s.to_vec()).collect();
        for (si, grad) in flat.iter().enumerate() {
            for k in 0..grad.len() {
                let mut plus = m.clone();
                plus.param_slices_mut()[si][k] += h;
                let mut minus = m.clone();
                minus.param_slices_mut()[si][k] -= h;
                let num = (loss(&plus, x) - loss(&minus, x)) / (2.0 * h);
                let err = (num - grad[k]).abs() / num.abs().max(grad[k].abs()).max(1e-6);
                assert!(err < 1e-4, "param {si}[{k}]: fd {num} vs {}", grad[k]);
            }
        }
        for k in 0..x.len() {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[k] += h;
            b[k] -= h;
            let num = (loss(m, &a) - loss(m, &b)) / (2.0 * h);
            assert!((num - dx[k]).abs() < 1e-4 * num.abs().max(1.0));
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let layer = Layer {
            weight: Matrix::zeros(3, 2),
            bias: vec![0.0; 2],
        };
        let m = Mlp::from_layers(vec![layer], Activation::Relu).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap().0, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_is_identity() {
        let layer = Layer {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        let m = Mlp::from_layers(vec![layer], Activation::Tanh).unwrap();
        assert_eq!(
            m.forward(&[1.0, -2.0, 3.0]).unwrap().0,
            vec![1.0, -2.0, 3.0]
        );
    }

    #[test]
    fn dims_must_chain() {
        let a = Layer {
            weight: Matrix::zeros(3, 4),
            bias: vec![0.0; 4],
        };
        let b = Layer {
            weight: Matrix::zeros(5, 2),
            bias: vec![0.0; 2],
        };
        assert!(Mlp::from_layers(vec![a, b], Activation::Relu).is_err());
        let m = net(&[3, 4, 2], Activation::Relu, 0);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let m = net(&[3, 2], Activation::Relu, 1);
        let x = [0.5, -1.0, 2.0];
        let up = [1.5, -0.25];
        let (_, tape) = m.forward(&x).unwrap();
        let (g, _) = m.backward(&tape, &up).unwrap();
        for i in 0..3 {
            for o in 0..2 {
                assert_eq!(g.layers[0].weight.get(i, o), x[i] * up[o]);
            }
        }
        assert_eq!(g.layers[0].bias, up.to_vec());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = net(&[4, 5, 3], Activation::Relu, 2);
        let (_, tape) = m.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let (g, dx) = m.backward(&tape, &[0.0; 3]).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        fd_check(
            &net(&[4, 6, 3], Activation::Relu, 3),
            &[0.3, -0.7, 1.1, 0.05],
            &[1.0, -2.0, 0.5],
        );
        fd_check(
            &net(&[3, 5, 4, 2], Activation::Tanh, 4),
            &[0.9, -0.4, 0.2],
            &[0.3, 0.8],
        );
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut m = net(&[2, 2], Activation::Relu, 5);
        let (_, tape) = m.forward(&[1.0, 1.0]).unwrap();
        m.param_slices_mut()[0][0] += 1.0;
        assert!(matches!(
            m.backward(&tape, &[1.0, 1.0]),
            Err(Error::Contract(_))
        ));
        let other = net(&[2, 2], Activation::Relu, 5);
        assert!(matches!(
            other.backward(&tape, &[1.0, 1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn pair_forward_matches_concatenated_batch() {
        let m = net(&[6, 5, 2], Activation::Relu, 6);
        let left = Matrix::from_fn(4, 3, |i, j| (i as f64 - j as f64) * 0.3);
        let right = Matrix::from_fn(5, 3, |i, j| (i * j) as f64 * 0.1 - 0.2);
        let pairs = [(0, 1), (3, 1), (0, 4), (2, 2), (3, 0)];
        let concat = Matrix::from_fn(pairs.len(), 6, |p, k| {
            let (j, i) = pairs[p];
            if k < 3 {
                left.get(j, k)
            } else {
                right.get(i, k - 3)
            }
        });
        let (y1, t1) = m.forward_pairs(&left, &right, &pairs).unwrap();
        let (y2, t2) = m.forward_batch(&concat).unwrap();
        assert!(y1.sub(&y2).unwrap().max_abs() < 1e-12);
        let up = Matrix::from_fn(pairs.len(), 2, |p, k| (p + k) as f64 * 0.5 - 1.0);
        let (g1, _) = m.backward_batch(&t1, &up).unwrap();
        let (g2, _) = m.backward_batch(&t2, &up).unwrap();
        for (a, b) in g1.slices().iter().zip(g2.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn segment_sums_match_summed_rows() {
        for dims in [&[3usize, 4, 2][..], &[3, 2][..]] {
            let m = net(dims, Activation::Relu, 8);
            let x = Matrix::from_fn(6, 3, |i, j| (i as f64 * 0.7 - j as f64).sin());
            let bounds = [0, 2, 2, 6];
            let (y, tape) = m.forward_segments(&x, &bounds).unwrap();
            let (rows, rows_tape) = m.forward_batch(&x).unwrap();
            let up = Matrix::from_fn(3, 2, |s, k| s as f64 - 0.5 * k as f64);
            let mut up_rows = Matrix::zeros(6, 2);
            for s in 0..3 {
                for r in bounds[s]..bounds[s + 1] {
                    up_rows.row_mut(r).copy_from_slice(up.row(s));
                }
                for k in 0..2 {
                    let direct: f64 = (bounds[s]..bounds[s + 1]).map(|r| rows.get(r, k)).sum();
                    assert!((y.get(s, k) - direct).abs() < 1e-12);
                }
            }
            let (g1, dx1) = m.backward_batch(&tape, &up).unwrap();
            let (g2, dx2) = m.backward_batch(&rows_tape, &up_rows).unwrap();
            assert!(dx1.sub(&dx2).unwrap().max_abs() < 1e-12);
            for (a, b) in g1.slices().iter().zip(g2.slices()) {
                for (p, q) in a.iter().zip(b) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
        let m = net(&[3, 2], Activation::Relu, 8);
        assert!(m.forward_segments(&Matrix::zeros(4, 3), &[0, 3]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let m = net(&[3, 4, 2], Activation::Tanh, 7);
        let s = serde_json::to_string(&m).unwrap();
        let back: Mlp = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
