//! Bidirectional LSTM encoder with a single-logit output layer, forward and
//! backward passes written out by hand.
//!
//! Batches are laid out as `(batch * steps) x dim` with row `b * steps + t`.
//! Gate blocks in `w`, `u` and `b` are ordered `[i | f | o | g]`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `input x 4H`
    pub w: Array2<f64>,
    /// `H x 4H`
    pub u: Array2<f64>,
    /// `4H`
    pub b: Array1<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid bounds");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl LstmParams {
    pub fn zeros(input: usize, units: usize) -> Self {
        LstmParams {
            w: Array2::zeros((input, 4 * units)),
            u: Array2::zeros((units, 4 * units)),
            b: Array1::zeros(4 * units),
        }
    }

    /// Glorot-uniform weights, forget-gate bias 1.
    pub fn init(input: usize, units: usize, rng: &mut Rng) -> Self {
        let mut b = Array1::zeros(4 * units);
        b.slice_mut(s![units..2 * units]).fill(1.0);
        LstmParams {
            w: glorot(input, 4 * units, rng),
            u: glorot(units, 4 * units, rng),
            b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn units(&self) -> usize {
        self.u.nrows()
    }

    fn check(&self) -> Result<()> {
        let h = self.units();
        let ok = self.w.ncols() == 4 * h && self.u.ncols() == 4 * h && self.b.len() == 4 * h;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent LSTM shapes: w {:?}, u {:?}, b {}",
                self.w.dim(),
                self.u.dim(),
                self.b.len()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    /// `2H`
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

impl BiLstmParams {
    pub fn zeros(input: usize, units: usize) -> Self {
        BiLstmParams {
            fwd: LstmParams::zeros(input, units),
            bwd: LstmParams::zeros(input, units),
            w_out: Array1::zeros(2 * units),
            b_out: 0.0,
        }
    }

    pub fn init(input: usize, units: usize, rng: &mut Rng) -> Self {
        let fwd = LstmParams::init(input, units, rng);
        let bwd = LstmParams::init(input, units, rng);
        let w_out = glorot(2 * units, 1, rng)
            .into_shape_with_order(2 * units)
            .expect("column");
        BiLstmParams {
            fwd,
            bwd,
            w_out,
            b_out: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn units(&self) -> usize {
        self.fwd.units()
    }

    pub fn check(&self) -> Result<()> {
        self.fwd.check()?;
        self.bwd.check()?;
        if self.bwd.w.dim() != self.fwd.w.dim() || self.w_out.len() != 2 * self.units() {
            return Err(Error::InvalidArgument("inconsistent BiLSTM shapes".into()));
        }
        Ok(())
    }

    /// All tensors flattened, in a fixed order; `b_out` comes last.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.fwd.w.as_slice().expect("standard layout"),
            self.fwd.u.as_slice().expect("standard layout"),
            self.fwd.b.as_slice().expect("standard layout"),
            self.bwd.w.as_slice().expect("standard layout"),
            self.bwd.u.as_slice().expect("standard layout"),
            self.bwd.b.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        let LstmParams { w: fw, u: fu, b: fb } = &mut self.fwd;
        let LstmParams { w: bw, u: bu, b: bb } = &mut self.bwd;
        [
            fw.as_slice_mut().expect("standard layout"),
            fu.as_slice_mut().expect("standard layout"),
            fb.as_slice_mut().expect("standard layout"),
            bw.as_slice_mut().expect("standard layout"),
            bu.as_slice_mut().expect("standard layout"),
            bb.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b_out),
        ]
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Shape of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchShape {
    pub batch: usize,
    pub steps: usize,
}

impl BatchShape {
    fn rows(&self) -> usize {
        self.batch * self.steps
    }
}

struct DirCache {
    /// Activated gates, same row layout as the input.
    gates: Array2<f64>,
    /// States before step 0 and after every step, in processing order.
    c: Vec<Array2<f64>>,
    h: Vec<Array2<f64>>,
}

fn time_index(s: usize, steps: usize, reverse: bool) -> usize {
    if reverse {
        steps - 1 - s
    } else {
        s
    }
}

fn dir_forward(p: &LstmParams, x: ArrayView2<f64>, mask: &[bool], shape: BatchShape, reverse: bool) -> DirCache {
    let (nb, nt, hu) = (shape.batch, shape.steps, p.units());
    let xw = x.dot(&p.w) + &p.b;
    let mut gates = Array2::<f64>::zeros((shape.rows(), 4 * hu));
    let mut c: Vec<Array2<f64>> = vec![Array2::zeros((nb, hu))];
    let mut h: Vec<Array2<f64>> = vec![Array2::zeros((nb, hu))];
    for s in 0..nt {
        let t = time_index(s, nt, reverse);
        let z = h[s].dot(&p.u);
        let mut c_new = c[s].clone();
        let mut h_new = h[s].clone();
        for b in 0..nb {
            let row = b * nt + t;
            if !mask[row] {
                continue;
            }
            for k in 0..hu {
                let pre = |gate: usize| xw[[row, gate * hu + k]] + z[[b, gate * hu + k]];
                let i = sigmoid(pre(0));
                let f = sigmoid(pre(1));
                let o = sigmoid(pre(2));
                let g = pre(3).tanh();
                let cv = f * c[s][[b, k]] + i * g;
                c_new[[b, k]] = cv;
                h_new[[b, k]] = o * cv.tanh();
                gates[[row, k]] = i;
                gates[[row, hu + k]] = f;
                gates[[row, 2 * hu + k]] = o;
                gates[[row, 3 * hu + k]] = g;
            }
        }
        c.push(c_new);
        h.push(h_new);
    }
    DirCache { gates, c, h }
}

/// Accumulates parameter gradients into `grad` and returns the input gradient.
#[allow(clippy::too_many_arguments)]
fn dir_backward(
    p: &LstmParams,
    x: ArrayView2<f64>,
    mask: &[bool],
    shape: BatchShape,
    reverse: bool,
    cache: &DirCache,
    dh_last: Array2<f64>,
    grad: &mut LstmParams,
) -> Array2<f64> {
    let (nb, nt, hu) = (shape.batch, shape.steps, p.units());
    let mut dz_all = Array2::zeros((shape.rows(), 4 * hu));
    let mut dh = dh_last;
    let mut dc = Array2::<f64>::zeros((nb, hu));
    for s in (0..nt).rev() {
        let t = time_index(s, nt, reverse);
        let (c_prev, c_cur, h_prev) = (&cache.c[s], &cache.c[s + 1], &cache.h[s]);
        let mut dz = Array2::zeros((nb, 4 * hu));
        for b in 0..nb {
            let row = b * nt + t;
            if !mask[row] {
                continue;
            }
            for k in 0..hu {
                let i = cache.gates[[row, k]];
                let f = cache.gates[[row, hu + k]];
                let o = cache.gates[[row, 2 * hu + k]];
                let g = cache.gates[[row, 3 * hu + k]];
                let tc = c_cur[[b, k]].tanh();
                let dhv = dh[[b, k]];
                let dct = dc[[b, k]] + dhv * o * (1.0 - tc * tc);
                dz[[b, k]] = dct * g * i * (1.0 - i);
                dz[[b, hu + k]] = dct * c_prev[[b, k]] * f * (1.0 - f);
                dz[[b, 2 * hu + k]] = dhv * tc * o * (1.0 - o);
                dz[[b, 3 * hu + k]] = dct * i * (1.0 - g * g);
                dc[[b, k]] = dct * f;
            }
        }
        grad.u += &h_prev.t().dot(&dz);
        let dh_rec = dz.dot(&p.u.t());
        for b in 0..nb {
            let row = b * nt + t;
            if mask[row] {
                dh.row_mut(b).assign(&dh_rec.row(b));
                dz_all.row_mut(row).assign(&dz.row(b));
            }
        }
    }
    grad.w += &x.t().dot(&dz_all);
    grad.b += &dz_all.sum_axis(Axis(0));
    dz_all.dot(&p.w.t())
}

fn check_batch(p: &BiLstmParams, x: ArrayView2<f64>, mask: &[bool], shape: BatchShape) -> Result<()> {
    p.check()?;
    if x.nrows() != shape.rows() || mask.len() != shape.rows() || shape.steps == 0 {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: shape.rows(),
        });
    }
    if x.ncols() != p.input_dim() {
        return Err(Error::LengthMismatch {
            left: x.ncols(),
            right: p.input_dim(),
        });
    }
    Ok(())
}

fn encode(p: &BiLstmParams, x: ArrayView2<f64>, mask: &[bool], shape: BatchShape) -> (DirCache, DirCache, Array2<f64>) {
    let hu = p.units();
    let f = dir_forward(&p.fwd, x, mask, shape, false);
    let b = dir_forward(&p.bwd, x, mask, shape, true);
    let mut hidden = Array2::zeros((shape.batch, 2 * hu));
    hidden.slice_mut(s![.., ..hu]).assign(&f.h[shape.steps]);
    hidden.slice_mut(s![.., hu..]).assign(&b.h[shape.steps]);
    (f, b, hidden)
}

/// Final hidden states `[h_fwd ; h_bwd]` of one `steps x dim` sequence.
/// Masked steps leave the state untouched.
pub fn lstm_forward(p: &BiLstmParams, x: ArrayView2<f64>, mask: &[bool]) -> Result<Array1<f64>> {
    let shape = BatchShape {
        batch: 1,
        steps: x.nrows(),
    };
    check_batch(p, x, mask, shape)?;
    let (_, _, hidden) = encode(p, x, mask, shape);
    Ok(hidden.row(0).to_owned())
}

/// Output logits for a batch, without dropout.
pub fn logits(p: &BiLstmParams, x: ArrayView2<f64>, mask: &[bool], shape: BatchShape) -> Result<Array1<f64>> {
    check_batch(p, x, mask, shape)?;
    let (_, _, hidden) = encode(p, x, mask, shape);
    Ok(hidden.dot(&p.w_out) + p.b_out)
}

pub fn probability(logit: f64) -> f64 {
    sigmoid(logit)
}

pub struct BatchGrad {
    pub loss: f64,
    pub params: BiLstmParams,
    /// Gradient with respect to the input rows.
    pub input: Array2<f64>,
}

/// Mean binary cross-entropy of the sigmoid logit over the batch and its
/// gradient. `dropout` multiplies the concatenated hidden state elementwise
/// (already scaled by the inverse keep probability).
pub fn loss_and_grad(
    p: &BiLstmParams,
    x: ArrayView2<f64>,
    mask: &[bool],
    shape: BatchShape,
    targets: &[f64],
    dropout: Option<&Array2<f64>>,
) -> Result<BatchGrad> {
    check_batch(p, x, mask, shape)?;
    if targets.len() != shape.batch {
        return Err(Error::LengthMismatch {
            left: targets.len(),
            right: shape.batch,
        });
    }
    let hu = p.units();
    let (fc, bc, hidden) = encode(p, x, mask, shape);
    let dropped = match dropout {
        Some(d) => &hidden * d,
        None => hidden,
    };
    let logit = dropped.dot(&p.w_out) + p.b_out;
    let n = shape.batch as f64;
    let mut loss = 0.0;
    let mut dlogit = Array1::zeros(shape.batch);
    for (b, (&l, &y)) in logit.iter().zip(targets).enumerate() {
        loss += softplus(l) - y * l;
        dlogit[b] = (sigmoid(l) - y) / n;
    }
    loss /= n;

    let mut grad = BiLstmParams::zeros(p.input_dim(), hu);
    grad.b_out = dlogit.sum();
    grad.w_out = dropped.t().dot(&dlogit);
    let mut dhidden = dlogit.insert_axis(Axis(1)).dot(&p.w_out.view().insert_axis(Axis(0)));
    if let Some(d) = dropout {
        dhidden *= d;
    }
    let dh_f = dhidden.slice(s![.., ..hu]).to_owned();
    let dh_b = dhidden.slice(s![.., hu..]).to_owned();
    let dx_f = dir_backward(&p.fwd, x, mask, shape, false, &fc, dh_f, &mut grad.fwd);
    let dx_b = dir_backward(&p.bwd, x, mask, shape, true, &bc, dh_b, &mut grad.bwd);
    Ok(BatchGrad {
        loss,
        params: grad,
        input: dx_f + dx_b,
    })
}
