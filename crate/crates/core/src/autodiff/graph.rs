use super::Array;

/// Floor applied to log operands and division denominators. Probability
/// renormalization denominators and log arguments can reach zero early in
/// training; clamping keeps every forward value finite.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Handle to a node in a [`Graph`]. Only valid for the graph that issued it.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// a / max(b, CLAMP_FLOOR); b may be an N×1 column broadcast across a's columns.
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// ln(max(x, CLAMP_FLOOR))
    Log(NodeId),
    Exp(NodeId),
    /// Row-wise softmax.
    Softmax(NodeId),
    /// Column-wise max over rows, N×d → 1×d; the adjoint routes to the
    /// argmax row of each column (lowest row index on ties).
    MaxPoolCols(NodeId),
    /// Row-wise L2 norm with a floor, N×d → N×1.
    RowNorm(NodeId, f64),
    RowSum(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    ConcatCols(NodeId, NodeId),
    GatherRows(NodeId, Vec<usize>),
    /// Identity forward; the backward pass does not propagate through it.
    StopGradient(NodeId),
    /// Elementwise clamp to [lo, hi]; adjoint is zero outside the open interval.
    Clamp(NodeId, f64, f64),
    Scale(NodeId, f64),
}

struct Node {
    op: Op,
    value: Array,
    trainable: bool,
}

/// Define-by-run computation graph. Builder methods evaluate eagerly and
/// record the operation; [`Graph::backward`] replays the chain rule in
/// reverse topological (= insertion) order, which makes the adjoint
/// accumulation order fixed and the result bit-deterministic.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    relu_backward_fault: bool,
}

/// Adjoints produced by a backward pass, indexed by node. Nodes the loss
/// does not depend on (or that sit behind a stop_gradient) have no entry.
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Adjoint of `id`, or zeros of the given shape if none flowed to it.
    pub fn dense(&self, id: NodeId, shape: [usize; 2]) -> Array {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Array::zeros(shape[0], shape[1]),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Scale the ReLU adjoint by 1.01. Fault injection for verifying that
    /// the gradient checker actually detects a corrupted backward rule.
    #[doc(hidden)]
    pub fn debug_fault_relu_backward(&mut self, enabled: bool) {
        self.relu_backward_fault = enabled;
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.nodes[id.0].trainable
    }

    /// Register a constant (non-trainable) leaf.
    pub fn input(&mut self, value: Array) -> NodeId {
        self.push(Op::Input, value, false)
    }

    /// Register a trainable leaf.
    pub fn param(&mut self, value: Array) -> NodeId {
        self.push(Op::Input, value, true)
    }

    /// Replace a leaf's value (used by the finite-difference checker).
    /// Downstream values are stale until [`Graph::recompute`] runs.
    pub fn set_leaf_value(&mut self, id: NodeId, value: Array) {
        let node = &mut self.nodes[id.0];
        assert!(matches!(node.op, Op::Input), "set_leaf_value on a non-leaf node");
        assert_eq!(node.value.shape(), value.shape(), "set_leaf_value shape change");
        node.value = value;
    }

    // ── builders ─────────────────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.check_broadcast("add", a, b);
        self.push_eval(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.check_broadcast("sub", a, b);
        self.push_eval(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.check_broadcast("mul", a, b);
        self.push_eval(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let col_broadcast = sb[1] == 1 && sb[0] == sa[0];
        assert!(
            sa == sb || col_broadcast,
            "div: shapes {sa:?} and {sb:?} are incompatible"
        );
        self.push_eval(Op::Div(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(
            sa[1], sb[0],
            "matmul: inner dimensions of {sa:?} and {sb:?} differ"
        );
        self.push_eval(Op::MatMul(a, b))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::Sigmoid(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::Log(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::Exp(x))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::Softmax(x))
    }

    pub fn maxpool_cols(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::MaxPoolCols(x))
    }

    pub fn row_norm(&mut self, x: NodeId, floor: f64) -> NodeId {
        assert!(floor >= 0.0, "row_norm floor must be non-negative");
        self.push_eval(Op::RowNorm(x, floor))
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::RowSum(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::Mean(x))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(
            sa[0], sb[0],
            "concat_cols: row counts of {sa:?} and {sb:?} differ"
        );
        self.push_eval(Op::ConcatCols(a, b))
    }

    pub fn gather_rows(&mut self, x: NodeId, indices: &[usize]) -> NodeId {
        let rows = self.shape(x)[0];
        for &i in indices {
            assert!(i < rows, "gather_rows: index {i} out of range for {rows} rows");
        }
        self.push_eval(Op::GatherRows(x, indices.to_vec()))
    }

    pub fn stop_gradient(&mut self, x: NodeId) -> NodeId {
        self.push_eval(Op::StopGradient(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        assert!(lo <= hi, "clamp: lo {lo} exceeds hi {hi}");
        self.push_eval(Op::Clamp(x, lo, hi))
    }

    pub fn clamp_min(&mut self, x: NodeId, lo: f64) -> NodeId {
        self.clamp(x, lo, f64::INFINITY)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.push_eval(Op::Scale(x, factor))
    }

    // ── evaluation ───────────────────────────────────────────────────

    /// Distance from the nearest piecewise boundary (relu zero crossings,
    /// pooling argmax gaps, clamp edges, log/div floors) over the whole
    /// graph. Central differences are only a valid oracle when this margin
    /// comfortably exceeds the value shift a ±h parameter probe can cause.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        let val = |id: &NodeId| -> &Array { &self.nodes[id.0].value };
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in val(x).data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::MaxPoolCols(x) => {
                    let xv = val(x);
                    if xv.rows() < 2 {
                        continue;
                    }
                    for j in 0..xv.cols() {
                        let mut top = f64::NEG_INFINITY;
                        let mut second = f64::NEG_INFINITY;
                        for i in 0..xv.rows() {
                            let v = xv.get(i, j);
                            if v > top {
                                second = top;
                                top = v;
                            } else if v > second {
                                second = v;
                            }
                        }
                        // a tie of exact zeros is a column of flat relu
                        // outputs: it stays identically zero under small
                        // probes (the relu margins guard the crossings)
                        if top == 0.0 && second == 0.0 {
                            continue;
                        }
                        margin = margin.min(top - second);
                    }
                }
                Op::Clamp(x, lo, hi) => {
                    for v in val(x).data() {
                        if lo.is_finite() {
                            margin = margin.min((v - lo).abs());
                        }
                        if hi.is_finite() {
                            margin = margin.min((v - hi).abs());
                        }
                    }
                }
                Op::Log(x) => {
                    for v in val(x).data() {
                        margin = margin.min((v - CLAMP_FLOOR).abs());
                    }
                }
                Op::Div(_, b) => {
                    for v in val(b).data() {
                        margin = margin.min((v - CLAMP_FLOOR).abs());
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Recompute every non-leaf value in insertion order. stop_gradient
    /// nodes keep their captured value: they are constants of the function
    /// the backward pass differentiates, and the finite-difference checker
    /// must probe that same function.
    pub fn recompute(&mut self) {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Input | Op::StopGradient(_)) {
                continue;
            }
            let value = eval_op(&self.nodes, &self.nodes[i].op);
            self.nodes[i].value = value;
        }
    }

    fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].value.shape()
    }

    fn check_broadcast(&self, what: &str, a: NodeId, b: NodeId) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let row_broadcast = sb[0] == 1 && sb[1] == sa[1];
        assert!(
            sa == sb || row_broadcast,
            "{what}: shapes {sa:?} and {sb:?} are incompatible"
        );
    }

    fn push_eval(&mut self, op: Op) -> NodeId {
        let value = eval_op(&self.nodes, &op);
        self.push(op, value, false)
    }

    fn push(&mut self, op: Op, value: Array, trainable: bool) -> NodeId {
        self.nodes.push(Node { op, value, trainable });
        NodeId(self.nodes.len() - 1)
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss node. Returns the adjoint of
    /// every node the loss depends on; paths through stop_gradient nodes
    /// contribute nothing (their upstream adjoints stay absent/zero).
    pub fn backward(&self, loss: NodeId) -> Gradients {
        let loss_shape = self.shape(loss);
        assert_eq!(
            loss_shape,
            [1, 1],
            "backward: loss node must be a scalar, got shape {loss_shape:?}"
        );
        let mut adj: Vec<Option<Array>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Array::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if adj[i].is_none() {
                continue;
            }
            // Inputs reference strictly earlier nodes, so splitting at i
            // gives us the upstream adjoint and all downstream slots.
            let (lo, hi) = adj.split_at_mut(i);
            let upstream = hi[0].as_ref().expect("checked above");
            self.backprop_op(i, upstream, lo);
        }
        Gradients { grads: adj }
    }

    fn backprop_op(&self, idx: usize, u: &Array, adj: &mut [Option<Array>]) {
        let nodes = &self.nodes;
        let val = |id: NodeId| -> &Array { &nodes[id.0].value };
        match &nodes[idx].op {
            Op::Input | Op::StopGradient(_) => {}
            Op::Add(a, b) => {
                accumulate(adj, *a, val(*a).shape(), |d| add_assign(d, u));
                let sb = val(*b).shape();
                accumulate(adj, *b, sb, |d| broadcast_reduce_assign(d, u, 1.0));
            }
            Op::Sub(a, b) => {
                accumulate(adj, *a, val(*a).shape(), |d| add_assign(d, u));
                let sb = val(*b).shape();
                accumulate(adj, *b, sb, |d| broadcast_reduce_assign(d, u, -1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                accumulate(adj, *a, av.shape(), |d| {
                    let cols = d.cols();
                    let brows = bv.rows();
                    for i in 0..d.rows() {
                        let bi = if brows == 1 { 0 } else { i };
                        for j in 0..cols {
                            let g = u.get(i, j) * bv.get(bi, j);
                            d.set(i, j, d.get(i, j) + g);
                        }
                    }
                });
                accumulate(adj, *b, bv.shape(), |d| {
                    if bv.shape() == av.shape() {
                        for i in 0..d.rows() {
                            for j in 0..d.cols() {
                                d.set(i, j, d.get(i, j) + u.get(i, j) * av.get(i, j));
                            }
                        }
                    } else {
                        // b was broadcast across a's rows
                        for i in 0..av.rows() {
                            for j in 0..d.cols() {
                                d.set(0, j, d.get(0, j) + u.get(i, j) * av.get(i, j));
                            }
                        }
                    }
                });
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let col_broadcast = bv.shape() != av.shape();
                accumulate(adj, *a, av.shape(), |d| {
                    for i in 0..d.rows() {
                        for j in 0..d.cols() {
                            let be = clamped(bv.get(i, if col_broadcast { 0 } else { j }));
                            d.set(i, j, d.get(i, j) + u.get(i, j) / be);
                        }
                    }
                });
                accumulate(adj, *b, bv.shape(), |d| {
                    for i in 0..av.rows() {
                        for j in 0..av.cols() {
                            let braw = bv.get(i, if col_broadcast { 0 } else { j });
                            if braw <= CLAMP_FLOOR {
                                continue; // clamped region: constant in b
                            }
                            let g = -u.get(i, j) * av.get(i, j) / (braw * braw);
                            let jj = if col_broadcast { 0 } else { j };
                            d.set(i, jj, d.get(i, jj) + g);
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                accumulate(adj, *a, av.shape(), |d| {
                    // dA += U · Bᵀ
                    dgemm_acc(m, n, k, u.data(), n as isize, 1, bv.data(), 1, n as isize, d);
                });
                accumulate(adj, *b, bv.shape(), |d| {
                    // dB += Aᵀ · U
                    dgemm_acc(k, m, n, av.data(), 1, k as isize, u.data(), n as isize, 1, d);
                });
            }
            Op::Relu(x) => {
                let xv = val(*x);
                let fault = if self.relu_backward_fault { 1.01 } else { 1.0 };
                accumulate(adj, *x, xv.shape(), |d| {
                    for (dv, (xe, ue)) in d.data_mut().iter_mut().zip(xv.data().iter().zip(u.data())) {
                        if *xe > 0.0 {
                            *dv += ue * fault;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let yv = &nodes[idx].value;
                accumulate(adj, *x, val(*x).shape(), |d| {
                    for (dv, (ye, ue)) in d.data_mut().iter_mut().zip(yv.data().iter().zip(u.data())) {
                        *dv += ue * ye * (1.0 - ye);
                    }
                });
            }
            Op::Log(x) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    for (dv, (xe, ue)) in d.data_mut().iter_mut().zip(xv.data().iter().zip(u.data())) {
                        if *xe > CLAMP_FLOOR {
                            *dv += ue / xe;
                        }
                    }
                });
            }
            Op::Exp(x) => {
                let yv = &nodes[idx].value;
                accumulate(adj, *x, val(*x).shape(), |d| {
                    for (dv, (ye, ue)) in d.data_mut().iter_mut().zip(yv.data().iter().zip(u.data())) {
                        *dv += ue * ye;
                    }
                });
            }
            Op::Softmax(x) => {
                let yv = &nodes[idx].value;
                accumulate(adj, *x, val(*x).shape(), |d| {
                    for i in 0..d.rows() {
                        let dot: f64 = (0..d.cols()).map(|j| u.get(i, j) * yv.get(i, j)).sum();
                        for j in 0..d.cols() {
                            let g = yv.get(i, j) * (u.get(i, j) - dot);
                            d.set(i, j, d.get(i, j) + g);
                        }
                    }
                });
            }
            Op::MaxPoolCols(x) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    for j in 0..xv.cols() {
                        let arg = col_argmax(xv, j);
                        d.set(arg, j, d.get(arg, j) + u.get(0, j));
                    }
                });
            }
            Op::RowNorm(x, floor) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    for i in 0..xv.rows() {
                        let norm = row_l2(xv, i);
                        if norm <= *floor || norm == 0.0 {
                            continue;
                        }
                        let ui = u.get(i, 0);
                        for j in 0..xv.cols() {
                            d.set(i, j, d.get(i, j) + ui * xv.get(i, j) / norm);
                        }
                    }
                });
            }
            Op::RowSum(x) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    for i in 0..d.rows() {
                        let ui = u.get(i, 0);
                        for j in 0..d.cols() {
                            d.set(i, j, d.get(i, j) + ui);
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    let u0 = u.scalar_value();
                    for dv in d.data_mut() {
                        *dv += u0;
                    }
                });
            }
            Op::Mean(x) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    let u0 = u.scalar_value() / xv.len() as f64;
                    for dv in d.data_mut() {
                        *dv += u0;
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let ca = av.cols();
                accumulate(adj, *a, av.shape(), |d| {
                    for i in 0..d.rows() {
                        for j in 0..ca {
                            d.set(i, j, d.get(i, j) + u.get(i, j));
                        }
                    }
                });
                accumulate(adj, *b, bv.shape(), |d| {
                    for i in 0..d.rows() {
                        for j in 0..d.cols() {
                            d.set(i, j, d.get(i, j) + u.get(i, ca + j));
                        }
                    }
                });
            }
            Op::GatherRows(x, indices) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    for (r, &src) in indices.iter().enumerate() {
                        for j in 0..xv.cols() {
                            d.set(src, j, d.get(src, j) + u.get(r, j));
                        }
                    }
                });
            }
            Op::Clamp(x, lo, hi) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    for (dv, (xe, ue)) in d.data_mut().iter_mut().zip(xv.data().iter().zip(u.data())) {
                        if *xe > *lo && *xe < *hi {
                            *dv += ue;
                        }
                    }
                });
            }
            Op::Scale(x, factor) => {
                let xv = val(*x);
                accumulate(adj, *x, xv.shape(), |d| {
                    for (dv, ue) in d.data_mut().iter_mut().zip(u.data()) {
                        *dv += factor * ue;
                    }
                });
            }
        }
    }
}

#[inline]
fn clamped(v: f64) -> f64 {
    v.max(CLAMP_FLOOR)
}

fn row_l2(a: &Array, i: usize) -> f64 {
    a.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn col_argmax(a: &Array, j: usize) -> usize {
    let mut best = 0;
    for i in 1..a.rows() {
        if a.get(i, j) > a.get(best, j) {
            best = i;
        }
    }
    best
}

fn accumulate(
    adj: &mut [Option<Array>],
    id: NodeId,
    shape: [usize; 2],
    write: impl FnOnce(&mut Array),
) {
    let slot = &mut adj[id.0];
    let dst = slot.get_or_insert_with(|| Array::zeros(shape[0], shape[1]));
    write(dst);
}

fn add_assign(dst: &mut Array, src: &Array) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

/// Accumulate `sign * u` into dst, column-summing when dst is a broadcast
/// 1×d row and u is N×d.
fn broadcast_reduce_assign(dst: &mut Array, u: &Array, sign: f64) {
    if dst.shape() == u.shape() {
        for (d, s) in dst.data_mut().iter_mut().zip(u.data()) {
            *d += sign * s;
        }
    } else {
        for i in 0..u.rows() {
            for j in 0..u.cols() {
                dst.set(0, j, dst.get(0, j) + sign * u.get(i, j));
            }
        }
    }
}

/// dst(m×n) += A(m×k with strides rsa/csa) · B(k×n with strides rsb/csb)
#[allow(clippy::too_many_arguments)]
fn dgemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    dst: &mut Array,
) {
    debug_assert_eq!(dst.shape(), [m, n]);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            dst.data_mut().as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn matmul_values(a: &Array, b: &Array) -> Array {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Array::zeros(m, n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            k as isize,
            1,
            b.data().as_ptr(),
            n as isize,
            1,
            0.0,
            out.data_mut().as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

fn eval_op(nodes: &[Node], op: &Op) -> Array {
    let val = |id: &NodeId| -> &Array { &nodes[id.0].value };
    match op {
        Op::Input => unreachable!("inputs are never re-evaluated"),
        Op::Add(a, b) => ewise_broadcast(val(a), val(b), |x, y| x + y),
        Op::Sub(a, b) => ewise_broadcast(val(a), val(b), |x, y| x - y),
        Op::Mul(a, b) => ewise_broadcast(val(a), val(b), |x, y| x * y),
        Op::Div(a, b) => {
            let (av, bv) = (val(a), val(b));
            let col_broadcast = bv.shape() != av.shape();
            let mut out = Array::zeros(av.rows(), av.cols());
            for i in 0..av.rows() {
                for j in 0..av.cols() {
                    let be = clamped(bv.get(i, if col_broadcast { 0 } else { j }));
                    out.set(i, j, av.get(i, j) / be);
                }
            }
            out
        }
        Op::MatMul(a, b) => matmul_values(val(a), val(b)),
        Op::Relu(x) => val(x).map(|v| v.max(0.0)),
        Op::Sigmoid(x) => val(x).map(|v| 1.0 / (1.0 + (-v).exp())),
        Op::Log(x) => val(x).map(|v| clamped(v).ln()),
        Op::Exp(x) => val(x).map(f64::exp),
        Op::Softmax(x) => {
            let xv = val(x);
            let mut out = Array::zeros(xv.rows(), xv.cols());
            for i in 0..xv.rows() {
                let row = xv.row_slice(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..xv.cols() {
                    let e = (row[j] - max).exp();
                    out.set(i, j, e);
                    total += e;
                }
                for j in 0..xv.cols() {
                    out.set(i, j, out.get(i, j) / total);
                }
            }
            out
        }
        Op::MaxPoolCols(x) => {
            let xv = val(x);
            let mut out = Array::zeros(1, xv.cols());
            for j in 0..xv.cols() {
                out.set(0, j, xv.get(col_argmax(xv, j), j));
            }
            out
        }
        Op::RowNorm(x, floor) => {
            let xv = val(x);
            let mut out = Array::zeros(xv.rows(), 1);
            for i in 0..xv.rows() {
                out.set(i, 0, row_l2(xv, i).max(*floor));
            }
            out
        }
        Op::RowSum(x) => {
            let xv = val(x);
            let mut out = Array::zeros(xv.rows(), 1);
            for i in 0..xv.rows() {
                out.set(i, 0, xv.row_slice(i).iter().sum());
            }
            out
        }
        Op::Sum(x) => Array::scalar(val(x).data().iter().sum()),
        Op::Mean(x) => {
            let xv = val(x);
            Array::scalar(xv.data().iter().sum::<f64>() / xv.len() as f64)
        }
        Op::ConcatCols(a, b) => {
            let (av, bv) = (val(a), val(b));
            let mut out = Array::zeros(av.rows(), av.cols() + bv.cols());
            for i in 0..av.rows() {
                for j in 0..av.cols() {
                    out.set(i, j, av.get(i, j));
                }
                for j in 0..bv.cols() {
                    out.set(i, av.cols() + j, bv.get(i, j));
                }
            }
            out
        }
        Op::GatherRows(x, indices) => {
            let xv = val(x);
            let mut out = Array::zeros(indices.len(), xv.cols());
            for (r, &src) in indices.iter().enumerate() {
                for j in 0..xv.cols() {
                    out.set(r, j, xv.get(src, j));
                }
            }
            out
        }
        Op::StopGradient(x) => val(x).clone(),
        Op::Clamp(x, lo, hi) => val(x).map(|v| v.clamp(*lo, *hi)),
        Op::Scale(x, factor) => val(x).map(|v| factor * v),
    }
}

fn ewise_broadcast(a: &Array, b: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
    let mut out = Array::zeros(a.rows(), a.cols());
    let brows = b.rows();
    for i in 0..a.rows() {
        let bi = if brows == 1 { 0 } else { i };
        for j in 0..a.cols() {
            out.set(i, j, f(a.get(i, j), b.get(bi, j)));
        }
    }
    out
}
