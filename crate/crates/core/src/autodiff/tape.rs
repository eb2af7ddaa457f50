//! Matrix-level reverse-mode tape.
//!
//! Every value is a row-major matrix; batches travel as rows. The tape is an
//! append-only list of nodes, so node order is already a topological order and
//! the reverse pass is a single backwards sweep.

use super::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn to_f64(&self) -> Mat<f64> {
        self.cast()
    }

    fn zip(&self, o: &Self, f: impl Fn(S, S) -> S) -> Self {
        debug_assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn add_in_place(&mut self, o: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }
}

/// `a · bᵀ` for `a: r×k`, `b: c×k`.
fn matmul_t<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let mut out = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            let br = b.row(j);
            let mut acc = S::zero();
            for k in 0..a.cols {
                acc += ar[k] * br[k];
            }
            out.data[i * b.rows + j] = acc;
        }
    }
    out
}

/// `a · b` for `a: r×k`, `b: k×c`.
fn matmul<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let av = a.data[i * a.cols + k];
            let br = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `aᵀ · b` for `a: r×c`, `b: r×k`.
fn t_matmul<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let mut out = Mat::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let br = b.row(r);
        for i in 0..a.cols {
            let av = a.data[r * a.cols + i];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Sum(Var),
}

struct Node<S> {
    op: Op,
    value: Mat<S>,
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Mat<S>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Mat<S>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Mat<S> {
        &self.nodes[v.0].value
    }

    /// `a · wᵀ`, the batched form of `W·x` when rows of `a` are samples.
    pub fn matmul_t(&mut self, a: Var, w: Var) -> Var {
        let (av, wv) = (self.value(a), self.value(w));
        assert_eq!(av.cols, wv.cols, "matmul_t inner dimension");
        let out = matmul_t(av, wv);
        self.push(Op::MatMulT(a, w), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    /// Adds a `1×c` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        assert_eq!((bv.rows, bv.cols), (1, av.cols), "bias shape");
        let mut out = av.clone();
        for row in out.data.chunks_mut(av.cols) {
            for (o, &b) in row.iter_mut().zip(&bv.data) {
                *o += b;
            }
        }
        self.push(Op::AddBias(a, bias), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(S::sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(S::tanh);
        self.push(Op::Tanh(a), out)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for row in out.data.chunks_mut(av.cols) {
            // Shift by the row maximum as a constant; softmax is shift-invariant.
            let m = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
            let m = S::from_f64(m);
            let mut z = S::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
        self.push(Op::Softmax(a), out)
    }

    /// Sum of all entries, as a `1×1` matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = S::zero();
        for &v in &self.value(a).data {
            acc += v;
        }
        self.push(Op::Sum(a), Mat::from_vec(1, 1, vec![acc]))
    }

    /// Reverse sweep from `out`, seeded with `seed` (same shape as `out`).
    pub fn backward(&self, out: Var, seed: Mat<S>) -> Gradients<S> {
        let ov = self.value(out);
        assert_eq!((seed.rows, seed.cols), (ov.rows, ov.cols), "seed shape");
        let mut grads: Vec<Option<Mat<S>>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(seed);

        fn acc<S: Scalar>(grads: &mut [Option<Mat<S>>], v: Var, g: Mat<S>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_in_place(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::MatMulT(a, w) => {
                    // y = a wᵀ: da = g w, dw = gᵀ a
                    let da = matmul(&g, self.value(w));
                    let dw = t_matmul(&g, self.value(a));
                    acc(&mut grads, a, da);
                    acc(&mut grads, w, dw);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let da = g.zip(self.value(b), |x, y| x * y);
                    let db = g.zip(self.value(a), |x, y| x * y);
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::AddBias(a, bias) => {
                    let mut db = Mat::zeros(1, g.cols);
                    for row in g.data.chunks(g.cols) {
                        for (d, &v) in db.data.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, bias, db);
                }
                Op::Sigmoid(a) => {
                    let da = g.zip(&node.value, |gv, y| gv * y * (S::one() - y));
                    acc(&mut grads, a, da);
                }
                Op::Tanh(a) => {
                    let da = g.zip(&node.value, |gv, y| gv * (S::one() - y * y));
                    acc(&mut grads, a, da);
                }
                Op::Softmax(a) => {
                    // dx_i = y_i (g_i − Σ_j g_j y_j), per row
                    let y = &node.value;
                    let mut da = Mat::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let mut dot = S::zero();
                        for k in 0..y.cols {
                            dot += gr[k] * yr[k];
                        }
                        for k in 0..y.cols {
                            da.data[r * y.cols + k] = yr[k] * (gr[k] - dot);
                        }
                    }
                    acc(&mut grads, a, da);
                }
                Op::Sum(a) => {
                    let av = self.value(a);
                    let s = g.data[0];
                    acc(&mut grads, a, Mat::from_vec(av.rows, av.cols, vec![s; av.data.len()]));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

/// Result of a reverse sweep. Nodes the output does not depend on have no entry.
pub struct Gradients<S> {
    grads: Vec<Option<Mat<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Mat<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or a `rows×cols` zero matrix when the output does not depend on it.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Mat<S> {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(rows, cols))
    }
}
