//! Recurrent network kernels: one LSTM layer, two fully connected ReLU
//! layers, a linear head, squared-error loss with exact backpropagation
//! through time, an adaptive-moment optimizer and a finite-difference
//! gradient check.
//!
//! All parameters live in one flat `Vec<f64>`; each block is exposed as an
//! ndarray view over its slice. Batched computations put one sequence per
//! row. Gate columns of the LSTM are ordered `[input, forget, cell, output]`.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl NetShape {
    pub const fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self { input, hidden, output }
    }

    pub fn param_count(&self) -> usize {
        Block::ALL.iter().map(|b| b.len(self)).sum()
    }
}

/// Parameter blocks in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    LstmWx,
    LstmWh,
    LstmB,
    Fc1W,
    Fc1B,
    Fc2W,
    Fc2B,
    HeadW,
    HeadB,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::LstmWx,
        Block::LstmWh,
        Block::LstmB,
        Block::Fc1W,
        Block::Fc1B,
        Block::Fc2W,
        Block::Fc2B,
        Block::HeadW,
        Block::HeadB,
    ];

    /// (rows, cols); biases are a single row.
    pub fn dims(self, s: &NetShape) -> (usize, usize) {
        let h = s.hidden;
        match self {
            Block::LstmWx => (s.input, 4 * h),
            Block::LstmWh => (h, 4 * h),
            Block::LstmB => (1, 4 * h),
            Block::Fc1W | Block::Fc2W => (h, h),
            Block::Fc1B | Block::Fc2B => (1, h),
            Block::HeadW => (h, s.output),
            Block::HeadB => (1, s.output),
        }
    }

    pub fn len(self, s: &NetShape) -> usize {
        let (r, c) = self.dims(s);
        r * c
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::LstmWx => "lstm.wx",
            Block::LstmWh => "lstm.wh",
            Block::LstmB => "lstm.b",
            Block::Fc1W => "fc1.w",
            Block::Fc1B => "fc1.b",
            Block::Fc2W => "fc2.w",
            Block::Fc2B => "fc2.b",
            Block::HeadW => "head.w",
            Block::HeadB => "head.b",
        }
    }

    fn fan_in(self, s: &NetShape) -> usize {
        match self {
            Block::LstmWx | Block::LstmWh | Block::LstmB => s.input + s.hidden,
            _ => s.hidden,
        }
    }
}

/// Network parameters (or a gradient with the same layout).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    shape: NetShape,
    data: Vec<f64>,
}

impl WeightSet {
    pub fn zeros(shape: NetShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.param_count()],
        }
    }

    pub fn from_flat(shape: NetShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Uniform ±1/√fan-in for every block, forget-gate bias set to +1.
    pub fn init<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let mut w = Self::zeros(shape);
        for block in Block::ALL {
            let bound = 1.0 / (block.fan_in(&shape) as f64).sqrt();
            for v in w.block_mut(block) {
                *v = bound * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        let h = shape.hidden;
        for v in &mut w.block_mut(Block::LstmB)[h..2 * h] {
            *v = 1.0;
        }
        w
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        let mut start = 0;
        for b in Block::ALL {
            let n = b.len(&self.shape);
            if b == block {
                return start..start + n;
            }
            start += n;
        }
        unreachable!()
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.data[self.range(block)]
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let r = self.range(block);
        &mut self.data[r]
    }

    pub fn mat(&self, block: Block) -> ArrayView2<'_, f64> {
        let dims = block.dims(&self.shape);
        ArrayView2::from_shape(dims, self.block(block)).expect("block dims")
    }

    pub fn mat_mut(&mut self, block: Block) -> ArrayViewMut2<'_, f64> {
        let dims = block.dims(&self.shape);
        ArrayViewMut2::from_shape(dims, self.block_mut(block)).expect("block dims")
    }

    pub fn vec(&self, block: Block) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.block(block))
    }

    pub fn vec_mut(&mut self, block: Block) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(self.block_mut(block))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    fn add_assign(&mut self, other: &WeightSet) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Recurrent state for a batch: one row per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl BatchState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
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

/// Everything one batched step needs for its backward pass.
struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// post-activation gates, [i, f, g, o]
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
    a1: Array2<f64>,
    a2: Array2<f64>,
}

fn check_batch(w: &WeightSet, x: &ArrayView2<f64>, state: &BatchState) -> Result<()> {
    let s = w.shape;
    let b = x.nrows();
    if x.ncols() != s.input {
        return Err(Error::ShapeMismatch(format!("input width {} != {}", x.ncols(), s.input)));
    }
    if state.h.dim() != (b, s.hidden) || state.c.dim() != (b, s.hidden) {
        return Err(Error::ShapeMismatch(format!(
            "state {:?}/{:?} does not match batch {b} × hidden {}",
            state.h.dim(),
            state.c.dim(),
            s.hidden
        )));
    }
    Ok(())
}

fn lstm_forward(w: &WeightSet, x: &ArrayView2<f64>, h: &Array2<f64>, c: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let hd = w.shape.hidden;
    let mut gates = x.dot(&w.mat(Block::LstmWx));
    general_mat_mul(1.0, h, &w.mat(Block::LstmWh), 1.0, &mut gates);
    gates += &w.vec(Block::LstmB);
    for mut row in gates.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = if (2 * hd..3 * hd).contains(&k) { v.tanh() } else { sigmoid(*v) };
        }
    }
    let mut c_new = Array2::zeros(c.raw_dim());
    let mut tanh_c = Array2::zeros(c.raw_dim());
    let mut h_new = Array2::zeros(c.raw_dim());
    Zip::from(c_new.rows_mut())
        .and(tanh_c.rows_mut())
        .and(h_new.rows_mut())
        .and(gates.rows())
        .and(c.rows())
        .for_each(|mut cn, mut tc, mut hn, g, cp| {
            for k in 0..hd {
                let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let cv = f * cp[k] + i * gg;
                let t = cv.tanh();
                cn[k] = cv;
                tc[k] = t;
                hn[k] = o * t;
            }
        });
    (gates, c_new, tanh_c, h_new)
}

fn dense_relu(input: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut z = input.dot(&w);
    z += &b;
    z.mapv_inplace(|v| v.max(0.0));
    z
}

fn head(input: &Array2<f64>, w: &WeightSet) -> Array2<f64> {
    let mut y = input.dot(&w.mat(Block::HeadW));
    y += &w.vec(Block::HeadB);
    y
}

fn step_cached(w: &WeightSet, x: ArrayView2<f64>, state: &mut BatchState) -> (Array2<f64>, StepCache) {
    let (gates, c_new, tanh_c, h_new) = lstm_forward(w, &x, &state.h, &state.c);
    let a1 = dense_relu(&h_new, w.mat(Block::Fc1W), w.vec(Block::Fc1B));
    let a2 = dense_relu(&a1, w.mat(Block::Fc2W), w.vec(Block::Fc2B));
    let y = head(&a2, w);
    let h_prev = std::mem::replace(&mut state.h, h_new.clone());
    let c_prev = std::mem::replace(&mut state.c, c_new);
    let cache = StepCache {
        x: x.to_owned(),
        h_prev,
        c_prev,
        gates,
        tanh_c,
        h: h_new,
        a1,
        a2,
    };
    (y, cache)
}

/// One batched forward step; advances `state` in place and returns the
/// head output (batch × output).
pub fn forward_batch(w: &WeightSet, x: ArrayView2<f64>, state: &mut BatchState) -> Result<Array2<f64>> {
    check_batch(w, &x, state)?;
    let (_, c_new, _, h_new) = lstm_forward(w, &x, &state.h, &state.c);
    let a1 = dense_relu(&h_new, w.mat(Block::Fc1W), w.vec(Block::Fc1B));
    let a2 = dense_relu(&a1, w.mat(Block::Fc2W), w.vec(Block::Fc2B));
    state.h = h_new;
    state.c = c_new;
    Ok(head(&a2, w))
}

fn row(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("row view")
}

/// Single LSTM cell update.
pub fn lstm_step(w: &WeightSet, input: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = w.shape;
    if input.len() != s.input || h.len() != s.hidden || c.len() != s.hidden {
        return Err(Error::ShapeMismatch(format!(
            "lstm_step got input {}, h {}, c {} for shape {:?}",
            input.len(),
            h.len(),
            c.len(),
            s
        )));
    }
    let (_, c_new, _, h_new) = lstm_forward(w, &row(input), &row(h).to_owned(), &row(c).to_owned());
    Ok((h_new.into_raw_vec_and_offset().0, c_new.into_raw_vec_and_offset().0))
}

/// LSTM → ReLU → ReLU → linear head for a single sequence element.
pub fn forward_pass(w: &WeightSet, input: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let s = w.shape;
    if h.len() != s.hidden || c.len() != s.hidden {
        return Err(Error::ShapeMismatch(format!("state length {}/{} != {}", h.len(), c.len(), s.hidden)));
    }
    let mut state = BatchState {
        h: row(h).to_owned(),
        c: row(c).to_owned(),
    };
    let y = forward_batch(w, row(input), &mut state)?;
    Ok((
        y.into_raw_vec_and_offset().0,
        state.h.into_raw_vec_and_offset().0,
        state.c.into_raw_vec_and_offset().0,
    ))
}

/// Per-step inputs and regression targets for one trajectory; recurrent
/// state starts from zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    /// steps × input
    pub inputs: Array2<f64>,
    /// steps × output
    pub targets: Array2<f64>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn validate_batch(w: &WeightSet, batch: &[&Sequence]) -> Result<usize> {
    let s = w.shape;
    let mut total = 0;
    for seq in batch {
        if seq.inputs.ncols() != s.input || seq.targets.ncols() != s.output || seq.targets.nrows() != seq.inputs.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "sequence inputs {:?} / targets {:?} do not fit {:?}",
                seq.inputs.dim(),
                seq.targets.dim(),
                s
            )));
        }
        total += seq.len();
    }
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(total)
}

/// Sequences grouped by length, in first-appearance order.
fn length_groups<'a>(batch: &[&'a Sequence]) -> Vec<Vec<&'a Sequence>> {
    let mut groups: Vec<Vec<&Sequence>> = Vec::new();
    for &seq in batch {
        if seq.is_empty() {
            continue;
        }
        match groups.iter_mut().find(|g| g[0].len() == seq.len()) {
            Some(g) => g.push(seq),
            None => groups.push(vec![seq]),
        }
    }
    groups
}

fn stack_step(group: &[&Sequence], t: usize, targets: bool) -> Array2<f64> {
    let width = if targets { group[0].targets.ncols() } else { group[0].inputs.ncols() };
    let mut out = Array2::zeros((group.len(), width));
    for (r, seq) in group.iter().enumerate() {
        let src = if targets { seq.targets.row(t) } else { seq.inputs.row(t) };
        out.row_mut(r).assign(&src);
    }
    out
}

/// Mean over all steps of all sequences of the squared Euclidean
/// prediction error.
pub fn loss(w: &WeightSet, batch: &[Sequence]) -> Result<f64> {
    let refs: Vec<&Sequence> = batch.iter().collect();
    loss_refs(w, &refs)
}

pub fn loss_refs(w: &WeightSet, batch: &[&Sequence]) -> Result<f64> {
    let total = validate_batch(w, batch)?;
    let mut sum = 0.0;
    for group in length_groups(batch) {
        let mut state = BatchState::zeros(group.len(), w.shape.hidden);
        for t in 0..group[0].len() {
            let x = stack_step(&group, t, false);
            let y = forward_batch(w, x.view(), &mut state)?;
            let target = stack_step(&group, t, true);
            sum += (&y - &target).mapv(|v| v * v).sum();
        }
    }
    Ok(sum / total as f64)
}

/// Exact gradient of [`loss`] by reverse-mode unrolling. Returns the loss
/// alongside the gradient.
pub fn bptt_gradients(w: &WeightSet, batch: &[Sequence]) -> Result<(f64, WeightSet)> {
    let refs: Vec<&Sequence> = batch.iter().collect();
    bptt_gradients_refs(w, &refs)
}

pub fn bptt_gradients_refs(w: &WeightSet, batch: &[&Sequence]) -> Result<(f64, WeightSet)> {
    let total = validate_batch(w, batch)?;
    let norm = 1.0 / total as f64;
    let mut grads = WeightSet::zeros(w.shape);
    let mut sum = 0.0;
    for group in length_groups(batch) {
        let (s, g) = group_bptt(w, &group, norm);
        sum += s;
        grads.add_assign(&g);
    }
    Ok((sum * norm, grads))
}

fn group_bptt(w: &WeightSet, group: &[&Sequence], norm: f64) -> (f64, WeightSet) {
    let shape = w.shape;
    let hd = shape.hidden;
    let steps = group[0].len();
    let mut state = BatchState::zeros(group.len(), hd);
    let mut caches = Vec::with_capacity(steps);
    let mut dys = Vec::with_capacity(steps);
    let mut sum = 0.0;
    for t in 0..steps {
        let x = stack_step(group, t, false);
        let (y, cache) = step_cached(w, x.view(), &mut state);
        let diff = &y - &stack_step(group, t, true);
        sum += diff.mapv(|v| v * v).sum();
        dys.push(diff * (2.0 * norm));
        caches.push(cache);
    }

    let mut g = WeightSet::zeros(shape);
    let mut dh_next = Array2::<f64>::zeros((group.len(), hd));
    let mut dc_next = Array2::<f64>::zeros((group.len(), hd));
    for (cache, dy) in caches.iter().zip(&dys).rev() {
        // head
        general_mat_mul(1.0, &cache.a2.t(), dy, 1.0, &mut g.mat_mut(Block::HeadW));
        g.vec_mut(Block::HeadB).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        let mut dz2 = dy.dot(&w.mat(Block::HeadW).t());
        Zip::from(&mut dz2).and(&cache.a2).for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        // fc2
        general_mat_mul(1.0, &cache.a1.t(), &dz2, 1.0, &mut g.mat_mut(Block::Fc2W));
        g.vec_mut(Block::Fc2B).scaled_add(1.0, &dz2.sum_axis(Axis(0)));
        let mut dz1 = dz2.dot(&w.mat(Block::Fc2W).t());
        Zip::from(&mut dz1).and(&cache.a1).for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        // fc1
        general_mat_mul(1.0, &cache.h.t(), &dz1, 1.0, &mut g.mat_mut(Block::Fc1W));
        g.vec_mut(Block::Fc1B).scaled_add(1.0, &dz1.sum_axis(Axis(0)));
        let mut dh = dz1.dot(&w.mat(Block::Fc1W).t());
        dh += &dh_next;

        // lstm cell
        let mut dgates = Array2::<f64>::zeros((group.len(), 4 * hd));
        let mut dc_prev = Array2::<f64>::zeros((group.len(), hd));
        for r in 0..group.len() {
            let gt = cache.gates.row(r);
            let tc = cache.tanh_c.row(r);
            let cp = cache.c_prev.row(r);
            for k in 0..hd {
                let (i, f, gg, o) = (gt[k], gt[hd + k], gt[2 * hd + k], gt[3 * hd + k]);
                let t = tc[k];
                let dc = dh[[r, k]] * o * (1.0 - t * t) + dc_next[[r, k]];
                let d_o = dh[[r, k]] * t;
                dc_prev[[r, k]] = dc * f;
                dgates[[r, k]] = dc * gg * i * (1.0 - i);
                dgates[[r, hd + k]] = dc * cp[k] * f * (1.0 - f);
                dgates[[r, 2 * hd + k]] = dc * i * (1.0 - gg * gg);
                dgates[[r, 3 * hd + k]] = d_o * o * (1.0 - o);
            }
        }
        general_mat_mul(1.0, &cache.x.t(), &dgates, 1.0, &mut g.mat_mut(Block::LstmWx));
        general_mat_mul(1.0, &cache.h_prev.t(), &dgates, 1.0, &mut g.mat_mut(Block::LstmWh));
        g.vec_mut(Block::LstmB).scaled_add(1.0, &dgates.sum_axis(Axis(0)));
        dh_next = dgates.dot(&w.mat(Block::LstmWh).t());
        dc_next = dc_prev;
    }
    (sum, g)
}

/// Largest relative discrepancy between `analytic` and central finite
/// differences of [`loss`]: `|a - n| / max(|a|, |n|, 1e-6)`. The floor sits
/// well above the roundoff of a difference quotient (about 1e-11 here), so
/// components that are numerically zero do not dominate.
const GRAD_FLOOR: f64 = 1e-6;

pub fn gradient_discrepancy(w: &WeightSet, batch: &[Sequence], analytic: &WeightSet, step: f64) -> Result<f64> {
    if analytic.shape != w.shape {
        return Err(Error::ShapeMismatch("gradient shape differs from weights".into()));
    }
    let mut probe = w.clone();
    let mut worst = 0.0f64;
    for k in 0..w.data.len() {
        let orig = probe.data[k];
        probe.data[k] = orig + step;
        let up = loss(&probe, batch)?;
        probe.data[k] = orig - step;
        let down = loss(&probe, batch)?;
        probe.data[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.data[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub fn finite_diff_check(w: &WeightSet, batch: &[Sequence], step: f64) -> Result<f64> {
    let (_, grads) = bptt_gradients(w, batch)?;
    gradient_discrepancy(w, batch, &grads, step)
}

/// Outcome of [`gradcheck_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub instances: usize,
    /// Worst relative error of the true gradients over all instances.
    pub max_error: f64,
    /// Smallest error seen when the fc2 weight gradient is doubled. A check
    /// that cannot see this corruption is not checking anything.
    pub control_min: f64,
}

/// Smallest |pre-activation| of either ReLU layer over every step of `batch`.
fn relu_margin(w: &WeightSet, batch: &[Sequence]) -> f64 {
    let mut margin = f64::INFINITY;
    for seq in batch {
        let mut h = Array2::zeros((1, w.shape.hidden));
        let mut c = Array2::zeros((1, w.shape.hidden));
        for t in 0..seq.len() {
            let x = seq.inputs.slice(s![t..t + 1, ..]);
            let (_, c_new, _, h_new) = lstm_forward(w, &x, &h, &c);
            let mut z1 = h_new.dot(&w.mat(Block::Fc1W));
            z1 += &w.vec(Block::Fc1B);
            let a1 = z1.mapv(|v| v.max(0.0));
            let mut z2 = a1.dot(&w.mat(Block::Fc2W));
            z2 += &w.vec(Block::Fc2B);
            margin = z1.iter().chain(z2.iter()).fold(margin, |m, v| m.min(v.abs()));
            h = h_new;
            c = c_new;
        }
    }
    margin
}

/// Random small instance: hidden width 1..=8, one to three sequences of
/// 1..=6 steps, weights and data uniform in [-0.7, 0.7]. The ReLU biases are
/// drawn positive so the dense layers are not dead from the start, and draws
/// with a ReLU input within 1e-3 of its kink are rejected: a central
/// difference straddling the kink measures nothing useful.
pub fn gradcheck_instance(root_seed: u64, index: u64) -> (WeightSet, Vec<Sequence>) {
    let mut rng = crate::rng::stream_rng(root_seed, crate::rng::Stream::GradCheck, index);
    loop {
        let input = rng.random_range(1..=6);
        let output = rng.random_range(1..=3);
        let shape = NetShape::new(input, rng.random_range(1..=8), output);
        let mut w = WeightSet::zeros(shape);
        for v in w.as_mut_slice() {
            *v = rng.random_range(-0.7..0.7);
        }
        for block in [Block::Fc1B, Block::Fc2B] {
            for v in w.block_mut(block) {
                *v = rng.random_range(0.1..0.7);
            }
        }
        let batch: Vec<Sequence> = (0..rng.random_range(1..=3))
            .map(|_| {
                let steps = rng.random_range(1..=6);
                let inputs = Array2::from_shape_fn((steps, input), |_| rng.random_range(-0.7..0.7));
                let targets = Array2::from_shape_fn((steps, output), |_| rng.random_range(-0.7..0.7));
                Sequence { inputs, targets }
            })
            .collect();
        if relu_margin(&w, &batch) >= 1e-3 {
            return (w, batch);
        }
    }
}

pub fn gradcheck_suite(root_seed: u64, instances: usize, step: f64) -> Result<GradCheckReport> {
    let mut max_error = 0.0f64;
    let mut control_min = f64::INFINITY;
    for k in 0..instances {
        let (w, batch) = gradcheck_instance(root_seed, k as u64);
        let (_, mut g) = bptt_gradients(&w, &batch)?;
        max_error = max_error.max(gradient_discrepancy(&w, &batch, &g, step)?);
        for v in g.block_mut(Block::Fc2W) {
            *v *= 2.0;
        }
        control_min = control_min.min(gradient_discrepancy(&w, &batch, &g, step)?);
    }
    Ok(GradCheckReport {
        instances,
        max_error,
        control_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Trajectories per update.
    pub batch_size: usize,
    pub epochs: usize,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Stop after this many epochs without a relative loss improvement of
    /// `min_improvement`; 0 disables early stopping.
    pub patience: usize,
    pub min_improvement: f64,
    /// Learning rate at the final epoch as a fraction of the initial one
    /// (cosine schedule); 1 keeps it constant.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            epochs: 120,
            clip_norm: 5.0,
            patience: 0,
            min_improvement: 1e-3,
            final_lr_fraction: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("clip_norm", self.clip_norm),
            ("final_lr_fraction", self.final_lr_fraction),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("training.{key}"), "must be positive"));
            }
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) || v <= 0.0 {
                return Err(Error::config(format!("training.{key}"), "must lie in (0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("training.epochs", "must be positive"));
        }
        if !(self.min_improvement.is_finite() && self.min_improvement >= 0.0) {
            return Err(Error::config("training.min_improvement", "must be non-negative"));
        }
        Ok(())
    }
}

/// First and second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// Clip `grads` to `clip_norm` in global L2 norm, then take one
/// bias-corrected adaptive-moment step with learning rate `lr`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, config: &TrainConfig, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "optimizer got {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    let gnorm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    let clip = if gnorm > config.clip_norm { config.clip_norm / gnorm } else { 1.0 };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for k in 0..params.len() {
        let g = grads[k] * clip;
        state.m[k] = config.beta1 * state.m[k] + (1.0 - config.beta1) * g;
        state.v[k] = config.beta2 * state.v[k] + (1.0 - config.beta2) * g * g;
        let mhat = state.m[k] / bc1;
        let vhat = state.v[k] / bc2;
        params[k] -= lr * mhat / (vhat.sqrt() + config.epsilon);
    }
    Ok(())
}

pub fn optimizer_update(weights: &mut WeightSet, grads: &WeightSet, state: &mut OptimizerState, config: &TrainConfig) -> Result<()> {
    if grads.shape != weights.shape {
        return Err(Error::ShapeMismatch("gradient shape differs from weights".into()));
    }
    adam_step(&mut weights.data, &grads.data, state, config, config.learning_rate)
}

/// Flattened view helpers used by the checkpoint codec.
pub fn block_layout(shape: &NetShape) -> Vec<(Block, (usize, usize))> {
    Block::ALL.iter().map(|b| (*b, b.dims(shape))).collect()
}

/// `x` rows as an owned (rows × cols) matrix; convenience for building
/// sequences from per-step arrays.
pub fn rows_to_matrix<const N: usize>(rows: &[[f64; N]]) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), N));
    for (r, src) in rows.iter().enumerate() {
        m.slice_mut(s![r, ..]).assign(&Array1::from(src.to_vec()));
    }
    m
}
