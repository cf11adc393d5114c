use std::sync::Arc;

use crate::error::AutodiffError;
use crate::rng::RngKey;

use super::tensor::{matmul, matmul_nt, matmul_tn, Real, Tensor};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Gelu(Var),
    Logistic(Var),
    Softplus(Var),
    Softmax { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, inv_std: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    Dropout { x: Var, mask: Vec<T> },
    Concat(Vec<Var>),
    SliceCols { x: Var, start: usize },
    IndexLast(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// How a dropout site behaves on one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DropoutMode {
    /// Identity.
    Off,
    /// Inverted dropout at `rate`, mask drawn from `key`.
    On { rate: f64, key: RngKey },
}

/// Records primitive applications in topological order and replays them
/// backwards. Node ids are dense and every node is produced exactly once.
#[derive(Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients for the parameter leaves of a tape.
#[derive(Debug)]
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a parameter leaf; `None` for non-parameter nodes.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn dim_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Dimension { op, detail }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        let t = &self.nodes[v.0].value;
        [t.rows(), t.cols()]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool, name: &'static str) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::Numeric { op: name });
        }
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: impl Into<Arc<Tensor<T>>>) -> Var {
        self.nodes.push(Node {
            value: t.into(),
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient in [`Tape::backward`].
    pub fn param(&mut self, t: impl Into<Arc<Tensor<T>>>) -> Var {
        self.nodes.push(Node {
            value: t.into(),
            op: Op::Param,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let [m, k] = self.shape(a);
        let [k2, n] = self.shape(b);
        if k != k2 {
            return Err(dim_err("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), ng, "matmul")
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let [m, k] = self.shape(a);
        let [n, k2] = self.shape(b);
        if k != k2 {
            return Err(dim_err("matmul_nt", format!("[{m},{k}] x [{n},{k2}]^T")));
        }
        let out = matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b), ng, "matmul_nt")
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.zip(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        self.push(t, Op::Add(a, b), ng, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.zip(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        self.push(t, Op::Sub(a, b), ng, "sub")
    }

    /// Adds a `[1, n]` row to every row of `[m, n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let [m, n] = self.shape(a);
        if self.shape(row) != [1, n] {
            return Err(dim_err("add_row", format!("[{m},{n}] + {:?}", self.shape(row))));
        }
        let r = self.value(row).data().to_vec();
        let data = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(&r).map(|(&x, &y)| x + y))
            .collect();
        let ng = self.ng(a) || self.ng(row);
        self.push(Tensor::matrix(m, n, data)?, Op::AddRow(a, row), ng, "add_row")
    }

    fn map(&mut self, a: Var, op: Op<T>, name: &'static str, f: impl Fn(T) -> T) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())?;
        let ng = self.ng(a);
        self.push(out, op, ng, name)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        let c = T::narrow(c);
        self.map(a, Op::Scale(a, c), "scale", |x| x * c)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.map(a, Op::Tanh(a), "tanh", |x| x.tanh())
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.map(a, Op::Gelu(a), "gelu", |x| {
            let x = x.widen();
            T::narrow(0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
        })
    }

    pub fn logistic(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.map(a, Op::Logistic(a), "logistic", |x| T::narrow(logistic(x.widen())))
    }

    /// `ln(1 + e^x)` in a form that neither overflows nor loses the tail.
    pub fn softplus(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.map(a, Op::Softplus(a), "softplus", |x| T::narrow(softplus(x.widen())))
    }

    /// Row-wise softmax. With `causal`, row `i` only covers columns `0..=i`
    /// and the remaining entries are zero.
    pub fn softmax_rows(&mut self, a: Var, causal: bool) -> Result<Var, AutodiffError> {
        let [m, n] = self.shape(a);
        if causal && m > n {
            return Err(dim_err("softmax", format!("causal mask on [{m},{n}]")));
        }
        let t = self.value(a);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let width = if causal { n - m + i + 1 } else { n };
            let row = &t.data()[i * n..i * n + width];
            let max = row.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x.widen()));
            let mut z = 0.0;
            let exps: Vec<f64> = row
                .iter()
                .map(|&x| {
                    let e = (x.widen() - max).exp();
                    z += e;
                    e
                })
                .collect();
            for (o, e) in out[i * n..i * n + width].iter_mut().zip(exps) {
                *o = T::narrow(e / z);
            }
        }
        let ng = self.ng(a);
        self.push(Tensor::matrix(m, n, out)?, Op::Softmax { x: a }, ng, "softmax")
    }

    /// Per-row normalisation with learned `[1, n]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, AutodiffError> {
        let [m, n] = self.shape(x);
        if self.shape(gamma) != [1, n] || self.shape(beta) != [1, n] {
            return Err(dim_err("layer_norm", format!("[{m},{n}] with gain {:?}", self.shape(gamma))));
        }
        let (tx, g, b) = (self.value(x), self.value(gamma).data(), self.value(beta).data());
        let mut out = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        for row in tx.data().chunks(n) {
            let mean = row.iter().map(|v| v.widen()).sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v.widen() - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for j in 0..n {
                let xh = (row[j].widen() - mean) * is;
                out.push(T::narrow(xh * g[j].widen() + b[j].widen()));
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            Tensor::matrix(m, n, out)?,
            Op::LayerNorm { x, gamma, beta, inv_std },
            ng,
            "layer_norm",
        )
    }

    /// Gathers rows of `table` by id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let [v, d] = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(dim_err("embedding", format!("id {bad} outside table of {v} rows")));
        }
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(t.row_slice(i));
        }
        let ng = self.ng(table);
        self.push(
            Tensor::matrix(ids.len(), d, data)?,
            Op::Embedding { table, ids: ids.to_vec() },
            ng,
            "embedding",
        )
    }

    /// Inverted dropout. Element `i` is kept when `key.uniform(i) >= rate`
    /// and survivors are scaled by `1 / (1 - rate)`. Returns `a` unchanged
    /// when the mode is off or the rate is zero.
    pub fn dropout(&mut self, a: Var, mode: DropoutMode) -> Result<Var, AutodiffError> {
        let (rate, key) = match mode {
            DropoutMode::Off => return Ok(a),
            DropoutMode::On { rate, .. } if rate == 0.0 => return Ok(a),
            DropoutMode::On { rate, key } => (rate, key),
        };
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        let keep = T::narrow(1.0 / (1.0 - rate));
        let t = self.value(a);
        let mask: Vec<T> = (0..t.len() as u64)
            .map(|i| if key.uniform(i) >= rate { keep } else { T::zero() })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(&x, &k)| x * k).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let ng = self.ng(a);
        self.push(out, Op::Dropout { x: a, mask }, ng, "dropout")
    }

    /// Column-wise concatenation.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let m = parts.first().map(|&p| self.shape(p)[0]).unwrap_or(0);
        if parts.is_empty() || parts.iter().any(|&p| self.shape(p)[0] != m) {
            return Err(dim_err("concat", "parts must be non-empty with equal rows".into()));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::matrix(m, total, data)?, Op::Concat(parts.to_vec()), ng, "concat")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let [m, n] = self.shape(a);
        if start + len > n {
            return Err(dim_err("slice_cols", format!("{start}+{len} > {n}")));
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let ng = self.ng(a);
        self.push(Tensor::matrix(m, len, data)?, Op::SliceCols { x: a, start }, ng, "slice_cols")
    }

    /// Last row as a `[1, n]` tensor.
    pub fn index_last(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let [m, _] = self.shape(a);
        if m == 0 {
            return Err(dim_err("index_last", "empty tensor".into()));
        }
        let row = self.value(a).row_slice(m - 1).to_vec();
        let ng = self.ng(a);
        self.push(Tensor::row(row), Op::IndexLast(a), ng, "index_last")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s: f64 = self.value(a).data().iter().map(|x| x.widen()).sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(T::narrow(s)), Op::Sum(a), ng, "sum")
    }

    /// Reverse pass from a `[1, 1]` output. Returns gradients for every
    /// parameter leaf (zeros where the output does not depend on it).
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, AutodiffError> {
        if self.shape(output) != [1, 1] {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Param) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
        }

        let out = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match n.op {
                Op::Param => {
                    let shape = n.value.shape().to_vec();
                    let data = match grads.get_mut(i).and_then(|g| g.take()) {
                        Some(g) => g.into_iter().map(T::narrow).collect(),
                        None => vec![T::zero(); n.value.len()],
                    };
                    Some(Tensor::new(shape, data).expect("gradient shape matches value"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<(), AutodiffError> {
        let node = &self.nodes[id];
        let val = |v: Var| -> &Tensor<T> { &self.nodes[v.0].value };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        let gt: Vec<T> = g.iter().map(|&x| T::narrow(x)).collect();

        match &node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.ng(*a) {
                    // dA = dC · Bᵀ
                    let da = matmul_nt(&gt, tb.data(), m, n, k);
                    acc(*a, &mut |s| add_into(s, &da));
                }
                if self.ng(*b) {
                    // dB = Aᵀ · dC
                    let db = matmul_tn(ta.data(), &gt, m, k, n);
                    acc(*b, &mut |s| add_into(s, &db));
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                if self.ng(*a) {
                    // dA = dC · B
                    let da = matmul(&gt, tb.data(), m, n, k);
                    acc(*a, &mut |s| add_into(s, &da));
                }
                if self.ng(*b) {
                    // dB = dCᵀ · A
                    let db = matmul_tn(&gt, ta.data(), m, n, k);
                    acc(*b, &mut |s| add_into(s, &db));
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_f64(s, g));
                acc(*b, &mut |s| add_f64(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_f64(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(o, &x)| *o -= x));
            }
            Op::AddRow(a, row) => {
                acc(*a, &mut |s| add_f64(s, g));
                let n = val(*row).cols();
                acc(*row, &mut |s| {
                    for chunk in g.chunks(n) {
                        add_f64(s, chunk);
                    }
                });
            }
            Op::Scale(a, c) => {
                let c = c.widen();
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(o, &x)| *o += c * x));
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, &mut |s| {
                    for ((o, &x), &yv) in s.iter_mut().zip(g).zip(y) {
                        let yv = yv.widen();
                        *o += x * (1.0 - yv * yv);
                    }
                });
            }
            Op::Gelu(a) => {
                let xs = val(*a).data();
                acc(*a, &mut |s| {
                    for ((o, &gv), &xv) in s.iter_mut().zip(g).zip(xs) {
                        *o += gv * gelu_grad(xv.widen());
                    }
                });
            }
            Op::Logistic(a) => {
                let y = node.value.data();
                acc(*a, &mut |s| {
                    for ((o, &x), &yv) in s.iter_mut().zip(g).zip(y) {
                        let yv = yv.widen();
                        *o += x * yv * (1.0 - yv);
                    }
                });
            }
            Op::Softplus(a) => {
                let xs = val(*a).data();
                acc(*a, &mut |s| {
                    for ((o, &gv), &xv) in s.iter_mut().zip(g).zip(xs) {
                        *o += gv * logistic(xv.widen());
                    }
                });
            }
            Op::Softmax { x } => {
                let y = node.value.data();
                let n = node.value.cols();
                acc(*x, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dotp: f64 = grow.iter().zip(yrow).map(|(&a, &b)| a * b.widen()).sum();
                        for ((o, &gv), &yv) in srow.iter_mut().zip(grow).zip(yrow) {
                            *o += yv.widen() * (gv - dotp);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, inv_std } => {
                let tx = val(*x);
                let gam = val(*gamma).data();
                let n = tx.cols();
                let xhat: Vec<f64> = tx
                    .data()
                    .chunks(n)
                    .zip(inv_std)
                    .flat_map(|(row, &is)| {
                        let mean = row.iter().map(|v| v.widen()).sum::<f64>() / n as f64;
                        row.iter().map(move |v| (v.widen() - mean) * is)
                    })
                    .collect();
                acc(*beta, &mut |s| {
                    for chunk in g.chunks(n) {
                        add_f64(s, chunk);
                    }
                });
                acc(*gamma, &mut |s| {
                    for (grow, xrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for ((o, &gv), &xh) in s.iter_mut().zip(grow).zip(xrow) {
                            *o += gv * xh;
                        }
                    }
                });
                acc(*x, &mut |s| {
                    for (((srow, grow), xrow), &is) in
                        s.chunks_mut(n).zip(g.chunks(n)).zip(xhat.chunks(n)).zip(inv_std)
                    {
                        let dxh: Vec<f64> = grow.iter().zip(gam).map(|(&gv, &gm)| gv * gm.widen()).collect();
                        let mean_d = dxh.iter().sum::<f64>() / n as f64;
                        let mean_dx = dxh.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for ((o, &d), &xh) in srow.iter_mut().zip(&dxh).zip(xrow) {
                            *o += is * (d - mean_d - xh * mean_dx);
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = val(*table).cols();
                acc(*table, &mut |s| {
                    for (r, &i) in ids.iter().enumerate() {
                        add_f64(&mut s[i * d..(i + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::Dropout { x, mask } => {
                acc(*x, &mut |s| {
                    for ((o, &gv), &mk) in s.iter_mut().zip(g).zip(mask) {
                        *o += gv * mk.widen();
                    }
                });
            }
            Op::Concat(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    acc(p, &mut |s| {
                        for (srow, grow) in s.chunks_mut(w).zip(g.chunks(total)) {
                            add_f64(srow, &grow[offset..offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let n = val(*x).cols();
                let w = node.value.cols();
                let start = *start;
                acc(*x, &mut |s| {
                    for (srow, grow) in s.chunks_mut(n).zip(g.chunks(w)) {
                        add_f64(&mut srow[start..start + w], grow);
                    }
                });
            }
            Op::IndexLast(x) => {
                let t = val(*x);
                let (m, n) = (t.rows(), t.cols());
                acc(*x, &mut |s| add_f64(&mut s[(m - 1) * n..], g));
            }
            Op::Sum(x) => {
                acc(*x, &mut |s| s.iter_mut().for_each(|o| *o += g[0]));
            }
        }
        Ok(())
    }
}

fn add_f64(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(o, &x)| *o += x);
}

fn add_into<T: Real>(dst: &mut [f64], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(o, &x)| *o += x.widen());
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
