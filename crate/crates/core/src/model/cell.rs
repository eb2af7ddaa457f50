use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Mat, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    /// Gate names in parameter order.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "h"],
            CellKind::Lstm => &["i", "f", "g", "o"],
        }
    }

    pub fn gates(self) -> usize {
        self.gate_names().len()
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::Invalid(format!("unknown cell kind {other:?}"))),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        })
    }
}

/// Weights of one recurrent layer: per gate an input matrix (`hidden×input`),
/// a recurrent matrix (`hidden×hidden`) and a bias (`hidden`).
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentCellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w: Vec<Tensor>,
    pub u: Vec<Tensor>,
    pub b: Vec<Tensor>,
}

impl RecurrentCellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let g = kind.gates();
        RecurrentCellParams {
            kind,
            input_dim,
            hidden_dim,
            w: (0..g).map(|_| Tensor::zeros(&[hidden_dim, input_dim])).collect(),
            u: (0..g).map(|_| Tensor::zeros(&[hidden_dim, hidden_dim])).collect(),
            b: (0..g).map(|_| Tensor::zeros(&[hidden_dim])).collect(),
        }
    }

    /// Weights uniform in `[−1/√hidden, 1/√hidden]`, biases zero.
    pub fn init(kind: CellKind, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden_dim as f64).sqrt();
        let mut p = Self::zeros(kind, input_dim, hidden_dim);
        for t in p.w.iter_mut().chain(p.u.iter_mut()) {
            *t = Tensor::uniform(t.shape(), k, rng);
        }
        p
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(3 * self.kind.gates());
        for (i, gate) in self.kind.gate_names().iter().enumerate() {
            out.push((format!("{prefix}w_{gate}"), &self.w[i]));
            out.push((format!("{prefix}u_{gate}"), &self.u[i]));
            out.push((format!("{prefix}b_{gate}"), &self.b[i]));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(3 * self.kind.gates());
        for ((w, u), b) in self.w.iter_mut().zip(self.u.iter_mut()).zip(self.b.iter_mut()) {
            out.push(w);
            out.push(u);
            out.push(b);
        }
        out
    }

    pub fn bind<S: Scalar>(&self, tape: &mut Tape<S>, vars: &mut Vec<Var>) -> BoundCell {
        let g = self.kind.gates();
        let (mut w, mut u, mut b) = (Vec::with_capacity(g), Vec::with_capacity(g), Vec::with_capacity(g));
        for i in 0..g {
            w.push(tape.leaf(self.w[i].to_mat()));
            u.push(tape.leaf(self.u[i].to_mat()));
            b.push(tape.leaf(self.b[i].to_mat()));
            vars.extend([w[i], u[i], b[i]]);
        }
        BoundCell {
            kind: self.kind,
            hidden_dim: self.hidden_dim,
            w,
            u,
            b,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: Var,
    /// LSTM memory cell; `None` for GRU.
    pub c: Option<Var>,
}

/// Cell parameters placed on a tape.
#[derive(Clone, Debug)]
pub struct BoundCell {
    pub kind: CellKind,
    pub hidden_dim: usize,
    w: Vec<Var>,
    u: Vec<Var>,
    b: Vec<Var>,
}

impl BoundCell {
    fn pre<S: Scalar>(&self, tape: &mut Tape<S>, gate: usize, x: Var, h: Var) -> Var {
        let a = tape.matmul_t(x, self.w[gate]);
        let r = tape.matmul_t(h, self.u[gate]);
        let s = tape.add(a, r);
        tape.add_bias(s, self.b[gate])
    }

    /// Zero state for a batch of `rows` samples.
    pub fn zero_state<S: Scalar>(&self, tape: &mut Tape<S>, rows: usize) -> CellState {
        let h = tape.leaf(Mat::zeros(rows, self.hidden_dim));
        let c = match self.kind {
            CellKind::Gru => None,
            CellKind::Lstm => Some(tape.leaf(Mat::zeros(rows, self.hidden_dim))),
        };
        CellState { h, c }
    }

    pub fn step<S: Scalar>(&self, tape: &mut Tape<S>, x: Var, state: CellState) -> CellState {
        let h = state.h;
        match self.kind {
            CellKind::Gru => {
                // z = σ(Wz x + Uz h + bz), r = σ(Wr x + Ur h + br)
                // h̃ = tanh(Wh x + Uh (r∘h) + bh), h' = (1−z)∘h + z∘h̃
                let z = self.pre(tape, 0, x, h);
                let z = tape.sigmoid(z);
                let r = self.pre(tape, 1, x, h);
                let r = tape.sigmoid(r);
                let rh = tape.mul(r, h);
                let cand = self.pre(tape, 2, x, rh);
                let cand = tape.tanh(cand);
                let delta = tape.sub(cand, h);
                let upd = tape.mul(z, delta);
                CellState {
                    h: tape.add(h, upd),
                    c: None,
                }
            }
            CellKind::Lstm => {
                let c = state.c.expect("LSTM state carries a memory cell");
                let i = self.pre(tape, 0, x, h);
                let i = tape.sigmoid(i);
                let f = self.pre(tape, 1, x, h);
                let f = tape.sigmoid(f);
                let g = self.pre(tape, 2, x, h);
                let g = tape.tanh(g);
                let o = self.pre(tape, 3, x, h);
                let o = tape.sigmoid(o);
                let fc = tape.mul(f, c);
                let ig = tape.mul(i, g);
                let c_new = tape.add(fc, ig);
                let tc = tape.tanh(c_new);
                CellState {
                    h: tape.mul(o, tc),
                    c: Some(c_new),
                }
            }
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

fn row(v: &[f64]) -> Mat<f64> {
    Mat::from_vec(1, v.len(), v.to_vec())
}

/// Single GRU step on plain vectors.
pub fn gru_step(params: &RecurrentCellParams, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if params.kind != CellKind::Gru {
        return Err(Error::Invalid("gru_step needs GRU parameters".into()));
    }
    check_len("x", x.len(), params.input_dim)?;
    check_len("h", h.len(), params.hidden_dim)?;
    let mut tape = Tape::new();
    let cell = params.bind(&mut tape, &mut Vec::new());
    let xv = tape.leaf(row(x));
    let hv = tape.leaf(row(h));
    let out = cell.step(&mut tape, xv, CellState { h: hv, c: None });
    Ok(tape.value(out.h).data.clone())
}

/// Single LSTM step on plain vectors; returns `(h', c')`.
pub fn lstm_step(params: &RecurrentCellParams, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if params.kind != CellKind::Lstm {
        return Err(Error::Invalid("lstm_step needs LSTM parameters".into()));
    }
    check_len("x", x.len(), params.input_dim)?;
    check_len("h", h.len(), params.hidden_dim)?;
    check_len("c", c.len(), params.hidden_dim)?;
    let mut tape = Tape::new();
    let cell = params.bind(&mut tape, &mut Vec::new());
    let xv = tape.leaf(row(x));
    let hv = tape.leaf(row(h));
    let cv = tape.leaf(row(c));
    let out = cell.step(&mut tape, xv, CellState { h: hv, c: Some(cv) });
    let c_new = out.c.expect("LSTM step yields a memory cell");
    Ok((tape.value(out.h).data.clone(), tape.value(c_new).data.clone()))
}
