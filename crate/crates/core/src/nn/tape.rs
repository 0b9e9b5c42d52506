//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] is a write-once list of matrix-valued operations recorded
//! eagerly during a forward pass. Every operation checks operand shapes and
//! rejects non-finite results immediately, so a NaN is reported at the op
//! that produced it rather than at the loss. [`Tape::backward`] walks the
//! list once in reverse and accumulates gradients for every recorded node;
//! parameters bound through [`Tape::bind`] are cached by identity, so a
//! weight used in several places (for example a shared encoder) accumulates
//! gradient contributions from all of its uses.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::mat::{Mat, Scalar};
use crate::nn::params::ParamSet;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One recorded operation; indices refer to earlier tape nodes.
enum Op<F> {
    /// Constant input or bound parameter. Only parameters receive gradients.
    Leaf { grad: bool },
    Add(usize, usize),
    Sub(usize, usize),
    /// Elementwise product of same-shape operands.
    Mul(usize, usize),
    Scale(usize, F),
    /// `[n,c] + [1,c]` broadcast over rows.
    AddBias(usize, usize),
    MatMul(usize, usize),
    ConcatCols(Vec<usize>),
    /// `out[i] = input[indices[i]]`.
    GatherRows(usize, Vec<usize>),
    /// `out[indices[i]] += input[i]` into `out_rows` rows.
    ScatterAddRows(usize, Vec<usize>),
    /// `[1,c]` repeated to `[n,c]`.
    RepeatRows(usize),
    /// `[n,c] * [n,1]` with the column broadcast across channels.
    MulColBroadcast(usize, usize),
    /// Per-row dot product of same-shape operands, `[n,c] -> [n,1]`.
    RowDot(usize, usize),
    /// Softmax of a `[n,1]` score column within receiver segments.
    SegmentSoftmax(usize, Vec<usize>),
    Tanh(usize),
    LeakyRelu(usize, F),
    /// Per-row standardisation `(x - mean) / sqrt(var + eps)`, no affine.
    LayerNormRows(usize, F),
    /// Sum of all entries, `[1,1]`.
    SumAll(usize),
    /// Per-row block matrix product: `out[e] = x[src[e]] @ W_e` where `W_e`
    /// is rows `e*in_dim .. (e+1)*in_dim` of the stacked weight matrix.
    BlockMatMul { x: usize, w: usize, src: Vec<usize>, in_dim: usize },
}

struct Node<F> {
    value: Mat<F>,
    op: Op<F>,
}

/// Gradients produced by one backward sweep.
pub struct Grads<F> {
    grads: Vec<Option<Mat<F>>>,
}

impl<F: Scalar> Grads<F> {
    /// Gradient of the loss with respect to a recorded node, if any path
    /// reached it.
    pub fn get(&self, var: Var) -> Option<&Mat<F>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

/// Eager reverse-mode tape.
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    /// Parameter-set index -> leaf node, so repeated binds share one leaf.
    bound: HashMap<usize, Var>,
    consumed: bool,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), bound: HashMap::new(), consumed: false }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a recorded node.
    pub fn value(&self, var: Var) -> &Mat<F> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Mat<F>, op: Op<F>, what: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numerical(format!("non-finite value produced by {what}")));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant; it never receives a gradient.
    pub fn constant(&mut self, value: Mat<F>) -> Result<Var> {
        self.push(value, Op::Leaf { grad: false }, "constant")
    }

    /// Binds a named parameter as a differentiable leaf. Binding the same
    /// parameter twice returns the same node.
    pub fn bind(&mut self, params: &ParamSet<F>, name: &str) -> Result<Var> {
        let idx = params
            .index_of(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))?;
        if let Some(&var) = self.bound.get(&idx) {
            return Ok(var);
        }
        let var = self.push(params.mat(idx).clone(), Op::Leaf { grad: true }, "bind")?;
        self.bound.insert(idx, var);
        Ok(var)
    }

    /// Parameter-set indices bound so far with their leaf nodes.
    pub fn bound_params(&self) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.bound.iter().map(|(&i, &v)| (i, v))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut value = self.nodes[a.0].value.clone();
        value.add_assign(&self.nodes[b.0].value)?;
        self.push(value, Op::Add(a.0, b.0), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let bv = &self.nodes[b.0].value;
        let mut value = self.nodes[a.0].value.clone();
        for (x, &y) in value.data_mut().iter_mut().zip(bv.data()) {
            *x = *x - y;
        }
        self.push(value, Op::Sub(a.0, b.0), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let bv = &self.nodes[b.0].value;
        let mut value = self.nodes[a.0].value.clone();
        for (x, &y) in value.data_mut().iter_mut().zip(bv.data()) {
            *x = *x * y;
        }
        self.push(value, Op::Mul(a.0, b.0), "mul")
    }

    pub fn scale(&mut self, a: Var, s: F) -> Result<Var> {
        let value = self.nodes[a.0].value.map(|x| x * s);
        self.push(value, Op::Scale(a.0, s), "scale")
    }

    /// `[n,c] + [1,c]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, c) = self.shape(a);
        if self.shape(bias) != (1, c) {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} for input {:?}", self.shape(bias), (n, c)),
            ));
        }
        let bv = self.nodes[bias.0].value.clone();
        let mut value = self.nodes[a.0].value.clone();
        for r in 0..n {
            for (x, &y) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *x += y;
            }
        }
        self.push(value, Op::AddBias(a.0, bias.0), "add_bias")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        self.push(value, Op::MatMul(a.0, b.0), "matmul")
    }

    /// Concatenates along columns; all operands need the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no operands".to_string()));
        }
        let n = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Mat::zeros(n, total);
        let mut col = 0;
        for &p in parts {
            let (pn, pc) = self.shape(p);
            if pn != n {
                return Err(Error::shape("concat_cols", format!("{pn} rows vs {n}")));
            }
            let pv = &self.nodes[p.0].value;
            for r in 0..n {
                value.row_mut(r)[col..col + pc].copy_from_slice(pv.row(r));
            }
            col += pc;
        }
        self.push(value, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), "concat_cols")
    }

    /// `out[i] = a[indices[i]]`.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (n, c) = self.shape(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::shape("gather_rows", format!("index {bad} out of {n} rows")));
        }
        let av = &self.nodes[a.0].value;
        let mut value = Mat::zeros(indices.len(), c);
        for (r, &i) in indices.iter().enumerate() {
            value.row_mut(r).copy_from_slice(av.row(i));
        }
        self.push(value, Op::GatherRows(a.0, indices.to_vec()), "gather_rows")
    }

    /// `out[indices[i]] += a[i]` with `out_rows` output rows.
    pub fn scatter_add_rows(&mut self, a: Var, indices: &[usize], out_rows: usize) -> Result<Var> {
        let (n, c) = self.shape(a);
        if indices.len() != n {
            return Err(Error::shape(
                "scatter_add_rows",
                format!("{} indices for {n} rows", indices.len()),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= out_rows) {
            return Err(Error::shape(
                "scatter_add_rows",
                format!("index {bad} out of {out_rows} rows"),
            ));
        }
        let av = &self.nodes[a.0].value;
        let mut value = Mat::zeros(out_rows, c);
        for (r, &i) in indices.iter().enumerate() {
            for (o, &x) in value.row_mut(i).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        self.push(value, Op::ScatterAddRows(a.0, indices.to_vec()), "scatter_add_rows")
    }

    /// `[1,c]` repeated into `[n,c]`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r != 1 {
            return Err(Error::shape("repeat_rows", format!("expected one row, got {r}")));
        }
        let row = self.nodes[a.0].value.row(0).to_vec();
        let mut value = Mat::zeros(n, c);
        for i in 0..n {
            value.row_mut(i).copy_from_slice(&row);
        }
        self.push(value, Op::RepeatRows(a.0), "repeat_rows")
    }

    /// `[n,c] * [n,1]`, broadcasting the column across channels.
    pub fn mul_col_broadcast(&mut self, a: Var, col: Var) -> Result<Var> {
        let (n, _) = self.shape(a);
        if self.shape(col) != (n, 1) {
            return Err(Error::shape(
                "mul_col_broadcast",
                format!("column {:?} for input {:?}", self.shape(col), self.shape(a)),
            ));
        }
        let cv = self.nodes[col.0].value.clone();
        let mut value = self.nodes[a.0].value.clone();
        for r in 0..n {
            let w = cv.get(r, 0);
            for x in value.row_mut(r) {
                *x = *x * w;
            }
        }
        self.push(value, Op::MulColBroadcast(a.0, col.0), "mul_col_broadcast")
    }

    /// Per-row dot product `[n,c] x [n,c] -> [n,1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "row_dot")?;
        let (n, _) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut value = Mat::zeros(n, 1);
        for r in 0..n {
            let mut acc = F::ZERO;
            for (&x, &y) in av.row(r).iter().zip(bv.row(r)) {
                acc += x * y;
            }
            value.set(r, 0, acc);
        }
        self.push(value, Op::RowDot(a.0, b.0), "row_dot")
    }

    /// Softmax of a `[n,1]` score column taken independently within each
    /// receiver segment (entries sharing `segments[i]`). Scores are shifted
    /// by the segment maximum before exponentiation.
    pub fn segment_softmax(&mut self, scores: Var, segments: &[usize]) -> Result<Var> {
        let (n, c) = self.shape(scores);
        if c != 1 || segments.len() != n {
            return Err(Error::shape(
                "segment_softmax",
                format!("scores {:?} with {} segment ids", (n, c), segments.len()),
            ));
        }
        let sv = &self.nodes[scores.0].value;
        let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut seg_max = vec![F::from_f64(f64::NEG_INFINITY); nseg];
        for (i, &s) in segments.iter().enumerate() {
            seg_max[s] = seg_max[s].max_val(sv.get(i, 0));
        }
        let mut seg_sum = vec![F::ZERO; nseg];
        let mut value = Mat::zeros(n, 1);
        for (i, &s) in segments.iter().enumerate() {
            let e = (sv.get(i, 0) - seg_max[s]).exp();
            value.set(i, 0, e);
            seg_sum[s] += e;
        }
        for (i, &s) in segments.iter().enumerate() {
            value.set(i, 0, value.get(i, 0) / seg_sum[s]);
        }
        self.push(value, Op::SegmentSoftmax(scores.0, segments.to_vec()), "segment_softmax")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.map(Scalar::tanh);
        self.push(value, Op::Tanh(a.0), "tanh")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: F) -> Result<Var> {
        let value = self.nodes[a.0].value.map(|x| if x > F::ZERO { x } else { x * slope });
        self.push(value, Op::LeakyRelu(a.0, slope), "leaky_relu")
    }

    /// Per-row standardisation to zero mean and unit variance (population
    /// convention, stabilised by `eps`); any affine rescale is applied by the
    /// caller through separate parameters.
    pub fn layer_norm_rows(&mut self, a: Var, eps: F) -> Result<Var> {
        let (n, c) = self.shape(a);
        if c == 0 {
            return Err(Error::shape("layer_norm_rows", "zero columns".to_string()));
        }
        let av = &self.nodes[a.0].value;
        let inv_c = F::ONE / F::from_f64(c as f64);
        let mut value = Mat::zeros(n, c);
        for r in 0..n {
            let row = av.row(r);
            let mean = row.iter().copied().sum::<F>() * inv_c;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>() * inv_c;
            let inv_std = F::ONE / (var + eps).sqrt();
            for (o, &x) in value.row_mut(r).iter_mut().zip(row) {
                *o = (x - mean) * inv_std;
            }
        }
        self.push(value, Op::LayerNormRows(a.0, eps), "layer_norm_rows")
    }

    /// Sum of all entries as a `[1,1]` scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let total = self.nodes[a.0].value.data().iter().copied().sum();
        self.push(Mat::from_vec(1, 1, vec![total])?, Op::SumAll(a.0), "sum_all")
    }

    /// Mean of squared entries, the building block of the training losses.
    pub fn mean_sq(&mut self, a: Var) -> Result<Var> {
        let (n, c) = self.shape(a);
        let sq = self.mul(a, a)?;
        let s = self.sum_all(sq)?;
        self.scale(s, F::ONE / F::from_f64((n * c) as f64))
    }

    /// Per-row block product `out[e] = x[src[e]] @ W_e`, where the stacked
    /// weight holds one `in_dim x out_dim` block per output row. Used for
    /// edge-specific transfer weights between hierarchy levels.
    pub fn block_matmul(&mut self, x: Var, w: Var, src: &[usize]) -> Result<Var> {
        let (xn, in_dim) = self.shape(x);
        let (wn, out_dim) = self.shape(w);
        let ne = src.len();
        if wn != ne * in_dim {
            return Err(Error::shape(
                "block_matmul",
                format!("stacked weight {wn}x{out_dim} for {ne} blocks of {in_dim} rows"),
            ));
        }
        if let Some(&bad) = src.iter().find(|&&i| i >= xn) {
            return Err(Error::shape("block_matmul", format!("index {bad} out of {xn} rows")));
        }
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let mut value = Mat::zeros(ne, out_dim);
        for (e, &s) in src.iter().enumerate() {
            let x_row = xv.row(s);
            let out_row = value.row_mut(e);
            for (k, &xk) in x_row.iter().enumerate() {
                let w_row = wv.row(e * in_dim + k);
                for (o, &wk) in out_row.iter_mut().zip(w_row) {
                    *o += xk * wk;
                }
            }
        }
        self.push(value, Op::BlockMatMul { x: x.0, w: w.0, src: src.to_vec(), in_dim }, "block_matmul")
    }

    /// Runs one reverse sweep from a scalar loss. A second call without
    /// rebuilding the tape is a contract violation.
    pub fn backward(&mut self, loss: Var) -> Result<Grads<F>> {
        if self.consumed {
            return Err(Error::Contract("backward called twice on one tape".to_string()));
        }
        self.consumed = true;
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Mat<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::from_vec(1, 1, vec![F::ONE])?);

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf { .. } => {
                    grads[i] = Some(g); // keep for the caller
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.map(|x| -x))?;
                }
                Op::Mul(a, b) => {
                    let ga = hadamard(&g, &self.nodes[*b].value);
                    let gb = hadamard(&g, &self.nodes[*a].value);
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, g.map(|x| x * s))?;
                }
                Op::AddBias(a, bias) => {
                    let (_, c) = g.shape();
                    let mut gb = Mat::zeros(1, c);
                    for r in 0..g.rows() {
                        for (o, &x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, g)?;
                    accumulate(&mut grads, *bias, gb)?;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(&self.nodes[*b].value)?;
                    let gb = self.nodes[*a].value.t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut col = 0;
                    for p in parts {
                        let (n, pc) = self.nodes[p].value.shape();
                        let mut gp = Mat::zeros(n, pc);
                        for r in 0..n {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[col..col + pc]);
                        }
                        accumulate(&mut grads, p, gp)?;
                        col += pc;
                    }
                }
                Op::GatherRows(a, indices) => {
                    let (n, c) = self.nodes[*a].value.shape();
                    let mut ga = Mat::zeros(n, c);
                    for (r, &idx) in indices.iter().enumerate() {
                        for (o, &x) in ga.row_mut(idx).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::ScatterAddRows(a, indices) => {
                    let (n, c) = self.nodes[*a].value.shape();
                    let mut ga = Mat::zeros(n, c);
                    for (r, &idx) in indices.iter().enumerate() {
                        ga.row_mut(r).copy_from_slice(g.row(idx));
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::RepeatRows(a) => {
                    let c = g.cols();
                    let mut ga = Mat::zeros(1, c);
                    for r in 0..g.rows() {
                        for (o, &x) in ga.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::MulColBroadcast(a, col) => {
                    let av = &self.nodes[*a].value;
                    let cv = &self.nodes[*col].value;
                    let (n, c) = av.shape();
                    let mut ga = Mat::zeros(n, c);
                    let mut gc = Mat::zeros(n, 1);
                    for r in 0..n {
                        let w = cv.get(r, 0);
                        let mut acc = F::ZERO;
                        for (k, (o, &x)) in ga.row_mut(r).iter_mut().zip(g.row(r)).enumerate() {
                            *o = x * w;
                            acc += x * av.get(r, k);
                        }
                        gc.set(r, 0, acc);
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *col, gc)?;
                }
                Op::RowDot(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    let (n, c) = av.shape();
                    let mut ga = Mat::zeros(n, c);
                    let mut gb = Mat::zeros(n, c);
                    for r in 0..n {
                        let w = g.get(r, 0);
                        for k in 0..c {
                            ga.set(r, k, w * bv.get(r, k));
                            gb.set(r, k, w * av.get(r, k));
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::SegmentSoftmax(scores, segments) => {
                    let alpha = &self.nodes[i].value;
                    let n = segments.len();
                    let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
                    let mut seg_dot = vec![F::ZERO; nseg];
                    for (r, &s) in segments.iter().enumerate() {
                        seg_dot[s] += alpha.get(r, 0) * g.get(r, 0);
                    }
                    let mut gs = Mat::zeros(n, 1);
                    for (r, &s) in segments.iter().enumerate() {
                        gs.set(r, 0, alpha.get(r, 0) * (g.get(r, 0) - seg_dot[s]));
                    }
                    accumulate(&mut grads, *scores, gs)?;
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = g.clone();
                    for (o, &yv) in ga.data_mut().iter_mut().zip(y.data()) {
                        *o = *o * (F::ONE - yv * yv);
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::LeakyRelu(a, slope) => {
                    let slope = *slope;
                    let x = &self.nodes[*a].value;
                    let mut ga = g.clone();
                    for (o, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                        if xv <= F::ZERO {
                            *o = *o * slope;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::LayerNormRows(a, eps) => {
                    let eps = *eps;
                    let x = &self.nodes[*a].value;
                    let y = &self.nodes[i].value;
                    let (n, c) = x.shape();
                    let inv_c = F::ONE / F::from_f64(c as f64);
                    let mut ga = Mat::zeros(n, c);
                    for r in 0..n {
                        let row = x.row(r);
                        let mean = row.iter().copied().sum::<F>() * inv_c;
                        let var =
                            row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_c;
                        let inv_std = F::ONE / (var + eps).sqrt();
                        let g_row = g.row(r);
                        let y_row = y.row(r);
                        let g_mean = g_row.iter().copied().sum::<F>() * inv_c;
                        let gy_mean = g_row
                            .iter()
                            .zip(y_row)
                            .map(|(&gv, &yv)| gv * yv)
                            .sum::<F>()
                            * inv_c;
                        for (k, o) in ga.row_mut(r).iter_mut().enumerate() {
                            *o = inv_std * (g_row[k] - g_mean - y_row[k] * gy_mean);
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::SumAll(a) => {
                    let (n, c) = self.nodes[*a].value.shape();
                    let ga = Mat::filled(n, c, g.get(0, 0));
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::BlockMatMul { x, w, src, in_dim } => {
                    let in_dim = *in_dim;
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let (xn, _) = xv.shape();
                    let (wn, out_dim) = wv.shape();
                    let mut gx = Mat::zeros(xn, in_dim);
                    let mut gw = Mat::zeros(wn, out_dim);
                    for (e, &s) in src.iter().enumerate() {
                        let g_row = g.row(e);
                        let x_row = xv.row(s);
                        for k in 0..in_dim {
                            let w_row = wv.row(e * in_dim + k);
                            let gw_row = gw.row_mut(e * in_dim + k);
                            let mut acc = F::ZERO;
                            for j in 0..out_dim {
                                acc += g_row[j] * w_row[j];
                                gw_row[j] += x_row[k] * g_row[j];
                            }
                            gx.row_mut(s)[k] += acc;
                        }
                    }
                    let (x, w) = (*x, *w);
                    accumulate(&mut grads, x, gx)?;
                    accumulate(&mut grads, w, gw)?;
                }
            }
        }
        // Drop gradients that reached non-parameter leaves.
        for (i, slot) in grads.iter_mut().enumerate() {
            if let Op::Leaf { grad: false } = self.nodes[i].op {
                *slot = None;
            }
        }
        Ok(Grads { grads })
    }
}

fn accumulate<F: Scalar>(grads: &mut [Option<Mat<F>>], node: usize, g: Mat<F>) -> Result<()> {
    match &mut grads[node] {
        Some(acc) => acc.add_assign(&g),
        slot => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn hadamard<F: Scalar>(a: &Mat<F>, b: &Mat<F>) -> Mat<F> {
    let mut out = a.clone();
    for (x, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *x = *x * y;
    }
    out
}
