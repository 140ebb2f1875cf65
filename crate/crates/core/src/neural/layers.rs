//! Layers over a flat parameter buffer. Each layer records offsets into the
//! buffer; gradients use the same layout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{gemm, matvec_acc, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum InitRule {
    Uniform(f64),
    /// Uniform, plus `shift` on rows `[from, to)`.
    UniformShifted { bound: f64, shift: f64, from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub(crate) init: InitRule,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub len: usize,
}

impl ParamLayout {
    fn add(&mut self, name: String, shape: Vec<usize>, init: InitRule) -> usize {
        let offset = self.len;
        let spec = TensorSpec { name, shape, offset, init };
        self.len += spec.len();
        self.tensors.push(spec);
        offset
    }

    pub(crate) fn initialize(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.len];
        for t in &self.tensors {
            let s = &mut p[t.offset..t.offset + t.len()];
            match t.init {
                InitRule::Uniform(b) => s.iter_mut().for_each(|v| *v = rng.random_range(-b..=b)),
                InitRule::UniformShifted { bound, shift, from, to } => {
                    for (i, v) in s.iter_mut().enumerate() {
                        *v = rng.random_range(-bound..=bound) + if (from..to).contains(&i) { shift } else { 0.0 };
                    }
                }
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// `y = act(W x + b)`, `W` stored outputs×inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    w: usize,
    b: usize,
}

impl DenseLayer {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, inputs: usize, outputs: usize, activation: Activation) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = layout.add(format!("{name}.weight"), vec![outputs, inputs], InitRule::Uniform(bound));
        let b = layout.add(format!("{name}.bias"), vec![outputs], InitRule::Uniform(bound));
        DenseLayer { inputs, outputs, activation, w, b }
    }

    fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.outputs * self.inputs]
    }

    pub(crate) fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.outputs]
    }

    /// `x` is rows×inputs, `y` rows×outputs.
    pub(crate) fn forward_batch(&self, p: &[f64], x: &[f64], rows: usize, y: &mut [f64]) {
        let bias = self.bias(p);
        for r in y[..rows * self.outputs].chunks_exact_mut(self.outputs) {
            r.copy_from_slice(bias);
        }
        gemm(rows, self.inputs, self.outputs, x, false, self.weight(p), true, y, true);
        if self.activation == Activation::Relu {
            y[..rows * self.outputs].iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// `dy` holds the gradient of the layer output and is turned into the
    /// pre-activation gradient. Parameter gradients accumulate into `grad`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_batch(
        &self,
        p: &[f64],
        x: &[f64],
        y: &[f64],
        dy: &mut [f64],
        rows: usize,
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let n = rows * self.outputs;
        if self.activation == Activation::Relu {
            for (d, v) in dy[..n].iter_mut().zip(&y[..n]) {
                if *v <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let gw = &mut grad[self.w..self.w + self.outputs * self.inputs];
        gemm(self.outputs, rows, self.inputs, dy, true, x, false, gw, true);
        let gb = &mut grad[self.b..self.b + self.outputs];
        for r in dy[..n].chunks_exact(self.outputs) {
            gb.iter_mut().zip(r).for_each(|(g, d)| *g += d);
        }
        if let Some(dx) = dx {
            gemm(rows, self.outputs, self.inputs, dy, false, self.weight(p), false, dx, false);
        }
    }

    pub(crate) fn forward_one(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(self.bias(p));
        matvec_acc(self.weight(p), x, y);
        if self.activation == Activation::Relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
}

/// Multilayer perceptron: ReLU hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStack {
    pub layers: Vec<DenseLayer>,
}

impl DenseStack {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, widths: &[usize]) -> Self {
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Linear } else { Activation::Relu };
                DenseLayer::new(layout, &format!("{name}.{i}"), w[0], w[1], act)
            })
            .collect();
        DenseStack { layers }
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Returns every layer's output (the last is the stack output).
    pub(crate) fn forward_batch(&self, p: &[f64], x: &[f64], rows: usize) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = vec![0.0; rows * l.outputs];
            l.forward_batch(p, if i == 0 { x } else { &acts[i - 1] }, rows, &mut y);
            acts.push(y);
        }
        acts
    }

    pub(crate) fn backward_batch(
        &self,
        p: &[f64],
        x: &[f64],
        acts: &[Vec<f64>],
        mut dy: Vec<f64>,
        rows: usize,
        grad: &mut [f64],
    ) {
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let input = if i == 0 { x } else { &acts[i - 1] };
            if i == 0 {
                l.backward_batch(p, input, &acts[i], &mut dy, rows, grad, None);
            } else {
                let mut dx = vec![0.0; rows * l.inputs];
                l.backward_batch(p, input, &acts[i], &mut dy, rows, grad, Some(&mut dx));
                dy = dx;
            }
        }
    }

    pub(crate) fn forward_one(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut y = vec![0.0; l.outputs];
            l.forward_one(p, &cur, &mut y);
            cur = y;
        }
        cur
    }
}

/// Four-gate recurrent cell, gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub inputs: usize,
    pub hidden: usize,
    w_ih: usize,
    w_hh: usize,
    b: usize,
}

/// Per-sequence forward values kept for backpropagation. Rows are
/// time-major: row `t·batch + k`.
pub(crate) struct LstmTrace {
    /// Activated gates, T·B × 4H.
    gates: Vec<f64>,
    /// Hidden states including the initial one, (T+1)·B × H.
    pub(crate) h: Vec<f64>,
    /// Cell states including the initial one, (T+1)·B × H.
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmTrace {
    pub(crate) fn outputs(&self, batch: usize, hidden: usize) -> &[f64] {
        &self.h[batch * hidden..]
    }
}

impl LstmLayer {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, inputs: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let g = 4 * hidden;
        let w_ih = layout.add(format!("{name}.w_ih"), vec![g, inputs], InitRule::Uniform(bound));
        let w_hh = layout.add(format!("{name}.w_hh"), vec![g, hidden], InitRule::Uniform(bound));
        let b = layout.add(
            format!("{name}.bias"),
            vec![g],
            InitRule::UniformShifted { bound, shift: 1.0, from: hidden, to: 2 * hidden },
        );
        LstmLayer { inputs, hidden, w_ih, w_hh, b }
    }

    fn w_ih<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w_ih..self.w_ih + 4 * self.hidden * self.inputs]
    }

    fn w_hh<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w_hh..self.w_hh + 4 * self.hidden * self.hidden]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + 4 * self.hidden]
    }

    fn activate(z: &mut [f64], hidden: usize) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = if (2 * hidden..3 * hidden).contains(&(i % (4 * hidden))) { v.tanh() } else { sigmoid(*v) };
        }
    }

    /// `x` is T·B × inputs; `h0`, `c0` are B × H.
    pub(crate) fn forward_seq(&self, p: &[f64], x: &[f64], steps: usize, batch: usize, h0: &[f64], c0: &[f64]) -> LstmTrace {
        let (hd, g) = (self.hidden, 4 * self.hidden);
        let rows = steps * batch;
        let mut gates = vec![0.0; rows * g];
        for r in gates.chunks_exact_mut(g) {
            r.copy_from_slice(self.bias(p));
        }
        gemm(rows, self.inputs, g, x, false, self.w_ih(p), true, &mut gates, true);
        let mut h = vec![0.0; (steps + 1) * batch * hd];
        let mut c = vec![0.0; (steps + 1) * batch * hd];
        let mut tanh_c = vec![0.0; rows * hd];
        h[..batch * hd].copy_from_slice(h0);
        c[..batch * hd].copy_from_slice(c0);
        let bh = batch * hd;
        for t in 0..steps {
            let z = &mut gates[t * batch * g..(t + 1) * batch * g];
            gemm(batch, hd, g, &h[t * bh..(t + 1) * bh], false, self.w_hh(p), true, z, true);
            Self::activate(z, hd);
            for k in 0..batch {
                let zk = &z[k * g..(k + 1) * g];
                for j in 0..hd {
                    let (ig, fg, gg, og) = (zk[j], zk[hd + j], zk[2 * hd + j], zk[3 * hd + j]);
                    let cn = fg * c[t * bh + k * hd + j] + ig * gg;
                    let tc = cn.tanh();
                    c[(t + 1) * bh + k * hd + j] = cn;
                    tanh_c[t * bh + k * hd + j] = tc;
                    h[(t + 1) * bh + k * hd + j] = og * tc;
                }
            }
        }
        LstmTrace { gates, h, c, tanh_c }
    }

    /// Backpropagation through time. `dh_out` (T·B × H) is the gradient of
    /// the per-step outputs. Returns the gradients of `h0` and `c0`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_seq(
        &self,
        p: &[f64],
        trace: &LstmTrace,
        x: &[f64],
        dh_out: &[f64],
        steps: usize,
        batch: usize,
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) -> (Vec<f64>, Vec<f64>) {
        let (hd, g) = (self.hidden, 4 * self.hidden);
        let bh = batch * hd;
        let rows = steps * batch;
        let mut dz = vec![0.0; rows * g];
        let mut dh_next = vec![0.0; bh];
        let mut dc_next = vec![0.0; bh];
        for t in (0..steps).rev() {
            let zt = &trace.gates[t * batch * g..(t + 1) * batch * g];
            let dzt = &mut dz[t * batch * g..(t + 1) * batch * g];
            for k in 0..batch {
                for j in 0..hd {
                    let s = k * hd + j;
                    let (ig, fg, gg, og) = (zt[k * g + j], zt[k * g + hd + j], zt[k * g + 2 * hd + j], zt[k * g + 3 * hd + j]);
                    let tc = trace.tanh_c[t * bh + s];
                    let dh = dh_out[t * bh + s] + dh_next[s];
                    let dc = dc_next[s] + dh * og * (1.0 - tc * tc);
                    dzt[k * g + j] = dc * gg * ig * (1.0 - ig);
                    dzt[k * g + hd + j] = dc * trace.c[t * bh + s] * fg * (1.0 - fg);
                    dzt[k * g + 2 * hd + j] = dc * ig * (1.0 - gg * gg);
                    dzt[k * g + 3 * hd + j] = dh * tc * og * (1.0 - og);
                    dc_next[s] = dc * fg;
                }
            }
            gemm(batch, g, hd, dzt, false, self.w_hh(p), false, &mut dh_next, false);
        }
        gemm(g, rows, self.inputs, &dz, true, x, false, &mut grad[self.w_ih..self.w_ih + g * self.inputs], true);
        gemm(g, rows, hd, &dz, true, &trace.h[..rows * hd], false, &mut grad[self.w_hh..self.w_hh + g * hd], true);
        let gb = &mut grad[self.b..self.b + g];
        for r in dz.chunks_exact(g) {
            gb.iter_mut().zip(r).for_each(|(a, d)| *a += d);
        }
        if let Some(dx) = dx {
            gemm(rows, g, self.inputs, &dz, false, self.w_ih(p), false, dx, false);
        }
        (dh_next, dc_next)
    }

    /// One streaming step updating `h`, `c` in place; `z` is 4H scratch.
    pub(crate) fn step(&self, p: &[f64], x: &[f64], h: &mut [f64], c: &mut [f64], z: &mut [f64]) {
        let hd = self.hidden;
        z.copy_from_slice(self.bias(p));
        matvec_acc(self.w_ih(p), x, z);
        matvec_acc(self.w_hh(p), h, z);
        Self::activate(z, hd);
        for j in 0..hd {
            let cn = z[hd + j] * c[j] + z[j] * z[2 * hd + j];
            c[j] = cn;
            h[j] = z[3 * hd + j] * cn.tanh();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentStack {
    pub layers: Vec<LstmLayer>,
}

/// Per-layer `(h, c)` of a running sequence plus step scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl RecurrentStack {
    pub(crate) fn new(layout: &mut ParamLayout, name: &str, inputs: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|i| LstmLayer::new(layout, &format!("{name}.{i}"), if i == 0 { inputs } else { hidden }, hidden))
            .collect();
        RecurrentStack { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn zero_state(&self) -> RecurrentState {
        let hd = self.hidden();
        let n = self.layers.len();
        RecurrentState { h: vec![vec![0.0; hd]; n], c: vec![vec![0.0; hd]; n], scratch: vec![0.0; 4 * hd] }
    }

    /// Returns the top-layer hidden output.
    pub(crate) fn step<'s>(&self, p: &[f64], x: &[f64], state: &'s mut RecurrentState) -> &'s [f64] {
        let RecurrentState { h, c, scratch } = state;
        for (i, l) in self.layers.iter().enumerate() {
            let (below, rest) = h.split_at_mut(i);
            let input: &[f64] = if i == 0 { x } else { &below[i - 1] };
            l.step(p, input, &mut rest[0], &mut c[i], scratch);
        }
        &h[self.layers.len() - 1]
    }

    /// `h0[l]`, `c0[l]` are B × H per layer.
    pub(crate) fn forward_seq(
        &self,
        p: &[f64],
        x: &[f64],
        steps: usize,
        batch: usize,
        h0: &[Vec<f64>],
        c0: &[Vec<f64>],
    ) -> Vec<LstmTrace> {
        let mut traces: Vec<LstmTrace> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let input: &[f64] = if i == 0 { x } else { traces[i - 1].outputs(batch, l.inputs) };
            let tr = l.forward_seq(p, input, steps, batch, &h0[i], &c0[i]);
            traces.push(tr);
        }
        traces
    }

    /// Returns per-layer gradients of the initial `(h, c)`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_seq(
        &self,
        p: &[f64],
        traces: &[LstmTrace],
        x: &[f64],
        dh_top: Vec<f64>,
        steps: usize,
        batch: usize,
        grad: &mut [f64],
    ) -> Vec<(Vec<f64>, Vec<f64>)> {
        let n = self.layers.len();
        let mut init_grads = vec![(Vec::new(), Vec::new()); n];
        let mut dh = dh_top;
        for i in (0..n).rev() {
            let l = &self.layers[i];
            let input: &[f64] = if i == 0 { x } else { traces[i - 1].outputs(batch, l.inputs) };
            if i == 0 {
                init_grads[i] = l.backward_seq(p, &traces[i], input, &dh, steps, batch, grad, None);
            } else {
                let mut dx = vec![0.0; steps * batch * l.inputs];
                init_grads[i] = l.backward_seq(p, &traces[i], input, &dh, steps, batch, grad, Some(&mut dx));
                dh = dx;
            }
        }
        init_grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn streaming_step_matches_sequence_forward() {
        let mut layout = ParamLayout::default();
        let stack = RecurrentStack::new(&mut layout, "core", 3, 5, 2);
        let p = layout.initialize(&mut ChaCha8Rng::seed_from_u64(1));
        let steps = 6;
        let x: Vec<f64> = (0..steps * 3).map(|i| (i as f64 * 0.7).sin()).collect();
        let zeros = vec![vec![0.0; 5]; 2];
        let traces = stack.forward_seq(&p, &x, steps, 1, &zeros, &zeros);
        let mut st = stack.zero_state();
        for t in 0..steps {
            let out = stack.step(&p, &x[t * 3..(t + 1) * 3], &mut st).to_vec();
            let seq = &traces[1].outputs(1, 5)[t * 5..(t + 1) * 5];
            for (a, b) in out.iter().zip(seq) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut layout = ParamLayout::default();
        let l = LstmLayer::new(&mut layout, "l", 2, 4);
        let p = layout.initialize(&mut ChaCha8Rng::seed_from_u64(0));
        let b = l.bias(&p);
        let bound = 0.5;
        assert!(b[4..8].iter().all(|v| (v - 1.0).abs() <= bound));
        assert!(b[..4].iter().chain(&b[8..]).all(|v| v.abs() <= bound));
    }
}
