use super::Tensor;
use crate::{Error, Result};

/// Handle to a tensor recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Distance from a ReLU or pooling switch treated as sitting on it.
const BRANCH_TIE: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        k: Var,
        b: Var,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    Relu {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
    Sum {
        x: Var,
    },
    AffineRows {
        x: Var,
        maps: Vec<[f64; 6]>,
    },
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    LandmarkError {
        pred: Var,
        target: Vec<f64>,
        norms: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Eagerly evaluated record of tensor operations.
///
/// Nodes are appended as operations execute, so the node order is a topological
/// order. [`Graph::backward`] visits every node at most once, in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Its `requires_grad` flag is kept as given.
    pub fn leaf(&mut self, mut t: Tensor) -> Var {
        t.zero_grad();
        self.push(t, Op::Leaf)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.push(t, Op::Leaf)
    }

    /// Records a copy of `t` as a differentiable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let t = Tensor::new(t.shape().to_vec(), t.values().to_vec())
            .expect("shape already validated")
            .with_grad();
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn values(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.values()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Graph::backward`], if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn output(&mut self, shape: Vec<usize>, values: Vec<f64>, inputs: &[Var], op: Op) -> Var {
        let mut t = Tensor::new(shape, values).expect("op produced consistent shape");
        if inputs.iter().any(|&v| self.needs_grad(v)) {
            t.set_requires_grad(true);
        }
        self.push(t, op)
    }

    /// `out[b,o] = sum_i x[b,i] * w[i,o] + bias[o]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::ShapeMismatch {
                op: "dense",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        if bs != [ws[1]] {
            return Err(Error::ShapeMismatch {
                op: "dense bias",
                lhs: ws.to_vec(),
                rhs: bs.to_vec(),
            });
        }
        let (batch, inputs, outputs) = (xs[0], xs[1], ws[1]);
        let (xv, wv, bv) = (self.values(x), self.values(w), self.values(b));
        let mut out = vec![0.0; batch * outputs];
        for (row, orow) in xv.chunks_exact(inputs).zip(out.chunks_exact_mut(outputs)) {
            orow.copy_from_slice(bv);
            for (&xi, wrow) in row.iter().zip(wv.chunks_exact(outputs)) {
                if xi == 0.0 {
                    continue;
                }
                for (o, &wio) in orow.iter_mut().zip(wrow) {
                    *o += xi * wio;
                }
            }
        }
        Ok(self.output(vec![batch, outputs], out, &[x, w, b], Op::Dense { x, w, b }))
    }

    /// 3x3 cross-correlation, stride 1, zero padding 1.
    /// `x: [B,C,H,W]`, `k: [F,C,3,3]`, `b: [F]` gives `[B,F,H,W]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x), self.shape(k), self.shape(b));
        if xs.len() != 4 || ks.len() != 4 || ks[2] != 3 || ks[3] != 3 || xs[1] != ks[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xs.to_vec(),
                rhs: ks.to_vec(),
            });
        }
        if bs != [ks[0]] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                lhs: ks.to_vec(),
                rhs: bs.to_vec(),
            });
        }
        let dims = ConvDims {
            batch: xs[0],
            channels: xs[1],
            filters: ks[0],
            height: xs[2],
            width: xs[3],
        };
        let (xv, kv, bv) = (self.values(x), self.values(k), self.values(b));
        let plane = dims.height * dims.width;
        let mut out = vec![0.0; dims.batch * dims.filters * plane];
        for bi in 0..dims.batch {
            for f in 0..dims.filters {
                let dst = &mut out[(bi * dims.filters + f) * plane..][..plane];
                dst.fill(bv[f]);
                for c in 0..dims.channels {
                    let src = &xv[(bi * dims.channels + c) * plane..][..plane];
                    let kern = &kv[(f * dims.channels + c) * 9..][..9];
                    conv_plane_forward(src, kern, dst, dims.height, dims.width);
                }
            }
        }
        Ok(self.output(
            vec![dims.batch, dims.filters, dims.height, dims.width],
            out,
            &[x, k, b],
            Op::Conv2d { x, k, b },
        ))
    }

    /// Non-overlapping 2x2 max pooling. Ties go to the first element in row-major order.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 4 || !xs[2].is_multiple_of(2) || !xs[3].is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "maxpool2 needs [B,C,H,W] with even H and W, got {xs:?}"
            )));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.values(x);
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let top = base + 2 * oy * w + 2 * ox;
                    let mut best = top;
                    for idx in [top + 1, top + w, top + w + 1] {
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        let shape = vec![xs[0], xs[1], oh, ow];
        Ok(self.output(shape, out, &[x], Op::MaxPool2 { x, argmax }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.values(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        self.output(shape, out, &[x], Op::Relu { x })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        let out = self.values(x).to_vec();
        Ok(self.output(shape, out, &[x], Op::Reshape { x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = zip_map(self.values(a), self.values(b), |p, q| p + q);
        let shape = self.shape(a).to_vec();
        Ok(self.output(shape, out, &[a, b], Op::Add { a, b }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip_map(self.values(a), self.values(b), |p, q| p * q);
        let shape = self.shape(a).to_vec();
        Ok(self.output(shape, out, &[a, b], Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.values(x).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.output(shape, out, &[x], Op::Scale { x, c })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.values(x).iter().sum();
        self.output(vec![], vec![s], &[x], Op::Sum { x })
    }

    /// Applies one 2-D affine map per row to the interleaved `(x, y)` pairs of
    /// `x: [B, 2N]`. Each map is `[m00, m01, m10, m11, tx, ty]`.
    pub fn affine_rows(&mut self, x: Var, maps: Vec<[f64; 6]>) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 2 || !xs[1].is_multiple_of(2) || xs[0] != maps.len() {
            return Err(Error::ShapeMismatch {
                op: "affine_rows",
                lhs: xs.to_vec(),
                rhs: vec![maps.len(), 6],
            });
        }
        let cols = xs[1];
        let mut out = self.values(x).to_vec();
        for (row, m) in out.chunks_exact_mut(cols).zip(&maps) {
            for p in row.chunks_exact_mut(2) {
                let (px, py) = (p[0], p[1]);
                p[0] = m[0] * px + m[1] * py + m[4];
                p[1] = m[2] * px + m[3] * py + m[5];
            }
        }
        let shape = xs.to_vec();
        Ok(self.output(shape, out, &[x], Op::AffineRows { x, maps }))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits);
        if ls.len() != 2 || ls[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "softmax_ce",
                lhs: ls.to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let classes = ls[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let batch = labels.len();
        let mut probs = Vec::with_capacity(batch * classes);
        let mut total = 0.0;
        for (row, &label) in self.values(logits).chunks_exact(classes).zip(labels) {
            let (p, log_z) = softmax_row(row);
            total += log_z - row[label];
            probs.extend(p);
        }
        let loss = total / batch as f64;
        Ok(self.output(
            vec![],
            vec![loss],
            &[logits],
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Mean over the batch of the per-row normalised landmark error
    /// `(1/N) sum_i |pred_i - target_i| / norm_row`, with `pred: [B, 2N]`.
    /// `target` and `norms` are constants.
    pub fn landmark_error(&mut self, pred: Var, target: &[f64], norms: &[f64]) -> Result<Var> {
        let ps = self.shape(pred);
        if ps.len() != 2
            || !ps[1].is_multiple_of(2)
            || ps[0] * ps[1] != target.len()
            || ps[0] != norms.len()
        {
            return Err(Error::ShapeMismatch {
                op: "landmark_error",
                lhs: ps.to_vec(),
                rhs: vec![norms.len(), target.len()],
            });
        }
        if let Some(d) = norms.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::Degenerate(format!("landmark normaliser {d}")));
        }
        let cols = ps[1];
        let batch = ps[0];
        let points = cols / 2;
        let mut total = 0.0;
        for ((row, trow), d) in self
            .values(pred)
            .chunks_exact(cols)
            .zip(target.chunks_exact(cols))
            .zip(norms)
        {
            let dist: f64 = row
                .chunks_exact(2)
                .zip(trow.chunks_exact(2))
                .map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1]))
                .sum();
            total += dist / (points as f64 * d);
        }
        Ok(self.output(
            vec![],
            vec![total / batch as f64],
            &[pred],
            Op::LandmarkError {
                pred,
                target: target.to_vec(),
                norms: norms.to_vec(),
            },
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// Which linear piece every ReLU and max-pool landed on: per ReLU input its sign,
    /// per pooling window the position of the maximum. Values within `BRANCH_TIE`
    /// of a switch are recorded as ties, so rounding-level flips between equal values
    /// do not count as a change. Two evaluations with equal patterns differ only
    /// smoothly.
    pub fn branch_pattern(&self) -> Vec<u8> {
        const TIE: u8 = u8::MAX;
        let mut pattern = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => pattern.extend(self.values(*x).iter().map(|&v| {
                    if v.abs() <= BRANCH_TIE {
                        TIE
                    } else {
                        u8::from(v > 0.0)
                    }
                })),
                Op::MaxPool2 { x, argmax } => {
                    let xv = self.values(*x);
                    let w = self.shape(*x)[3];
                    for &best in argmax {
                        let plane = best / w;
                        let top = (plane / 2 * 2) * w + (best % w) / 2 * 2;
                        let window = [top, top + 1, top + w, top + w + 1];
                        let runner_up = window
                            .iter()
                            .filter(|&&i| i != best)
                            .map(|&i| xv[i])
                            .fold(f64::NEG_INFINITY, f64::max);
                        pattern.push(if xv[best] - runner_up <= BRANCH_TIE {
                            TIE
                        } else {
                            window.iter().position(|&i| i == best).expect("in window") as u8
                        });
                    }
                }
                _ => {}
            }
        }
        pattern
    }

    /// Back-propagates from the scalar `out`, replacing any previous gradients.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        if self.value(out).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(out)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.needs_grad(out) {
            grads[out.0] = Some(vec![1.0]);
        }
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.value.zero_grad();
            if let (true, Some(g)) = (node.value.requires_grad(), g) {
                node.value.accumulate_grad(&g);
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let (batch, inputs) = (self.shape(*x)[0], self.shape(*x)[1]);
                let outputs = self.shape(*w)[1];
                let (xv, wv) = (self.values(*x), self.values(*w));
                if self.needs_grad(*x) {
                    let gx = grad_slot(grads, *x, xv.len());
                    for (grow, gxrow) in g.chunks_exact(outputs).zip(gx.chunks_exact_mut(inputs)) {
                        for (gxi, wrow) in gxrow.iter_mut().zip(wv.chunks_exact(outputs)) {
                            *gxi += dot(wrow, grow);
                        }
                    }
                }
                if self.needs_grad(*w) {
                    let gw = grad_slot(grads, *w, wv.len());
                    for (xrow, grow) in xv.chunks_exact(inputs).zip(g.chunks_exact(outputs)) {
                        for (&xi, gwrow) in xrow.iter().zip(gw.chunks_exact_mut(outputs)) {
                            if xi == 0.0 {
                                continue;
                            }
                            for (a, &go) in gwrow.iter_mut().zip(grow) {
                                *a += xi * go;
                            }
                        }
                    }
                }
                if self.needs_grad(*b) {
                    let gb = grad_slot(grads, *b, outputs);
                    for grow in g.chunks_exact(outputs).take(batch) {
                        gb.iter_mut().zip(grow).for_each(|(a, &go)| *a += go);
                    }
                }
            }
            Op::Conv2d { x, k, b } => {
                let xs = self.shape(*x);
                let dims = ConvDims {
                    batch: xs[0],
                    channels: xs[1],
                    filters: self.shape(*k)[0],
                    height: xs[2],
                    width: xs[3],
                };
                let plane = dims.height * dims.width;
                let (xv, kv) = (self.values(*x), self.values(*k));
                if self.needs_grad(*x) {
                    let gx = grad_slot(grads, *x, xv.len());
                    for bi in 0..dims.batch {
                        for f in 0..dims.filters {
                            let gout = &g[(bi * dims.filters + f) * plane..][..plane];
                            for c in 0..dims.channels {
                                let kern = &kv[(f * dims.channels + c) * 9..][..9];
                                let gsrc = &mut gx[(bi * dims.channels + c) * plane..][..plane];
                                conv_plane_input_grad(gout, kern, gsrc, dims.height, dims.width);
                            }
                        }
                    }
                }
                if self.needs_grad(*k) {
                    let gk = grad_slot(grads, *k, kv.len());
                    for bi in 0..dims.batch {
                        for f in 0..dims.filters {
                            let gout = &g[(bi * dims.filters + f) * plane..][..plane];
                            for c in 0..dims.channels {
                                let src = &xv[(bi * dims.channels + c) * plane..][..plane];
                                let gkern = &mut gk[(f * dims.channels + c) * 9..][..9];
                                conv_plane_kernel_grad(gout, src, gkern, dims.height, dims.width);
                            }
                        }
                    }
                }
                if self.needs_grad(*b) {
                    let gb = grad_slot(grads, *b, dims.filters);
                    for (idx, gplane) in g.chunks_exact(plane).enumerate() {
                        gb[idx % dims.filters] += gplane.iter().sum::<f64>();
                    }
                }
            }
            Op::MaxPool2 { x, argmax } => {
                if self.needs_grad(*x) {
                    let gx = grad_slot(grads, *x, self.value(*x).len());
                    for (&src, &go) in argmax.iter().zip(g) {
                        gx[src] += go;
                    }
                }
            }
            Op::Relu { x } => {
                if self.needs_grad(*x) {
                    let xv = self.values(*x);
                    let gx = grad_slot(grads, *x, xv.len());
                    for ((a, &v), &go) in gx.iter_mut().zip(xv).zip(g) {
                        if v > 0.0 {
                            *a += go;
                        }
                    }
                }
            }
            Op::Reshape { x } => self.pass_through(*x, g, 1.0, grads),
            Op::Add { a, b } => {
                self.pass_through(*a, g, 1.0, grads);
                self.pass_through(*b, g, 1.0, grads);
            }
            Op::Mul { a, b } => {
                for (target, other) in [(*a, *b), (*b, *a)] {
                    if self.needs_grad(target) {
                        let ov = self.values(other);
                        let gt = grad_slot(grads, target, ov.len());
                        for ((acc, &o), &go) in gt.iter_mut().zip(ov).zip(g) {
                            *acc += o * go;
                        }
                    }
                }
            }
            Op::Scale { x, c } => self.pass_through(*x, g, *c, grads),
            Op::Sum { x } => {
                if self.needs_grad(*x) {
                    let gx = grad_slot(grads, *x, self.value(*x).len());
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
            Op::AffineRows { x, maps } => {
                if self.needs_grad(*x) {
                    let cols = self.shape(*x)[1];
                    let gx = grad_slot(grads, *x, self.value(*x).len());
                    for ((grow, gxrow), m) in g
                        .chunks_exact(cols)
                        .zip(gx.chunks_exact_mut(cols))
                        .zip(maps)
                    {
                        for (go, acc) in grow.chunks_exact(2).zip(gxrow.chunks_exact_mut(2)) {
                            acc[0] += m[0] * go[0] + m[2] * go[1];
                            acc[1] += m[1] * go[0] + m[3] * go[1];
                        }
                    }
                }
            }
            Op::SoftmaxCe {
                logits,
                labels,
                probs,
            } => {
                if self.needs_grad(*logits) {
                    let classes = self.shape(*logits)[1];
                    let batch = labels.len() as f64;
                    let gl = grad_slot(grads, *logits, probs.len());
                    for (r, (prow, &label)) in probs.chunks_exact(classes).zip(labels).enumerate() {
                        for (k, &p) in prow.iter().enumerate() {
                            let onehot = if k == label { 1.0 } else { 0.0 };
                            gl[r * classes + k] += g[0] * (p - onehot) / batch;
                        }
                    }
                }
            }
            Op::LandmarkError {
                pred,
                target,
                norms,
            } => {
                if self.needs_grad(*pred) {
                    let cols = self.shape(*pred)[1];
                    let batch = norms.len() as f64;
                    let points = (cols / 2) as f64;
                    let pv = self.values(*pred);
                    let gp = grad_slot(grads, *pred, pv.len());
                    for (((prow, trow), gprow), d) in pv
                        .chunks_exact(cols)
                        .zip(target.chunks_exact(cols))
                        .zip(gp.chunks_exact_mut(cols))
                        .zip(norms)
                    {
                        let coef = g[0] / (batch * points * d);
                        for ((p, t), acc) in prow
                            .chunks_exact(2)
                            .zip(trow.chunks_exact(2))
                            .zip(gprow.chunks_exact_mut(2))
                        {
                            let (dx, dy) = (p[0] - t[0], p[1] - t[1]);
                            let dist = dx.hypot(dy);
                            // Subgradient 0 at coincident points.
                            if dist > 0.0 {
                                acc[0] += coef * dx / dist;
                                acc[1] += coef * dy / dist;
                            }
                        }
                    }
                }
            }
        }
    }

    fn pass_through(&self, x: Var, g: &[f64], c: f64, grads: &mut [Option<Vec<f64>>]) {
        if self.needs_grad(x) {
            let gx = grad_slot(grads, x, g.len());
            gx.iter_mut().zip(g).for_each(|(a, &go)| *a += c * go);
        }
    }
}

/// Numerically stable softmax; also returns `log(sum(exp(row)))`.
pub(crate) fn softmax_row(row: &[f64]) -> (Vec<f64>, f64) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / z).collect(), max + z.ln())
}

/// Softmax of one row of logits.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    softmax_row(row).0
}

/// `-log softmax(row)[label]`, evaluated without a graph.
pub fn log_softmax_ce(row: &[f64], label: usize) -> f64 {
    softmax_row(row).1 - row[label]
}

fn grad_slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    batch: usize,
    channels: usize,
    filters: usize,
    height: usize,
    width: usize,
}

/// Visits every (kernel tap, output row, valid column span) of a padded 3x3 conv.
/// `f(tap, out_row, src_row, out_cols, src_cols_start)`.
#[inline]
fn for_each_tap(
    h: usize,
    w: usize,
    mut f: impl FnMut(usize, usize, usize, std::ops::Range<usize>, usize),
) {
    for ky in 0..3 {
        for kx in 0..3 {
            let tap = ky * 3 + kx;
            let x_lo = if kx == 0 { 1 } else { 0 };
            let x_hi = if kx == 2 { w - 1 } else { w };
            for y in 0..h {
                let sy = y + ky;
                if sy < 1 || sy > h {
                    continue;
                }
                f(tap, y, sy - 1, x_lo..x_hi, x_lo + kx - 1);
            }
        }
    }
}

fn conv_plane_forward(src: &[f64], kern: &[f64], dst: &mut [f64], h: usize, w: usize) {
    for_each_tap(h, w, |tap, y, sy, cols, sx0| {
        let k = kern[tap];
        if k == 0.0 {
            return;
        }
        let n = cols.len();
        let d = &mut dst[y * w + cols.start..][..n];
        let s = &src[sy * w + sx0..][..n];
        for (a, &v) in d.iter_mut().zip(s) {
            *a += k * v;
        }
    });
}

fn conv_plane_input_grad(gout: &[f64], kern: &[f64], gsrc: &mut [f64], h: usize, w: usize) {
    for_each_tap(h, w, |tap, y, sy, cols, sx0| {
        let k = kern[tap];
        if k == 0.0 {
            return;
        }
        let n = cols.len();
        let g = &gout[y * w + cols.start..][..n];
        let s = &mut gsrc[sy * w + sx0..][..n];
        for (a, &go) in s.iter_mut().zip(g) {
            *a += k * go;
        }
    });
}

fn conv_plane_kernel_grad(gout: &[f64], src: &[f64], gkern: &mut [f64], h: usize, w: usize) {
    for_each_tap(h, w, |tap, y, sy, cols, sx0| {
        let n = cols.len();
        let g = &gout[y * w + cols.start..][..n];
        let s = &src[sy * w + sx0..][..n];
        gkern[tap] += dot(g, s);
    });
}
