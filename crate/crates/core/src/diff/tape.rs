use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::tensor::{Shape, Tensor};
use crate::{Error, Result};

/// Below this distance the L2 gradient is replaced by zero.
pub const DIST_GRAD_EPS: f64 = 1e-12;

/// Index of a record on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef(pub(crate) usize);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `w x + b`
    Affine {
        w: NodeRef,
        x: NodeRef,
        b: NodeRef,
    },
    Relu(NodeRef),
    Tanh(NodeRef),
    L2(NodeRef, NodeRef),
    /// Vector of `-d_j - logsumexp(-d)` over scalar distances.
    NegDistLogSoftmax(Vec<NodeRef>),
    LogSumExp(Vec<NodeRef>),
    Index(NodeRef, usize),
    Add(NodeRef, NodeRef),
    Sub(NodeRef, NodeRef),
    Mul(NodeRef, NodeRef),
    Neg(NodeRef),
    Sum(NodeRef),
}

#[derive(Debug, Clone)]
struct Record<'a> {
    op: Op,
    shape: Shape,
    value: Cow<'a, [f64]>,
    requires_grad: bool,
}

/// Append-only record of a computation, differentiated by [`Tape::backward`].
///
/// Records only reference earlier records, so the tape is topologically ordered by
/// construction. Leaves may borrow their data (parameters, raw inputs) for the
/// lifetime `'a` of the tape.
#[derive(Debug, Clone, Default)]
pub struct Tape<'a> {
    records: Vec<Record<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, op: Op, shape: Shape, value: Cow<'a, [f64]>, requires_grad: bool) -> NodeRef {
        debug_assert_eq!(shape.len(), value.len());
        self.records.push(Record {
            op,
            shape,
            value,
            requires_grad,
        });
        NodeRef(self.records.len() - 1)
    }

    fn rec(&self, n: NodeRef) -> &Record<'a> {
        &self.records[n.0]
    }

    /// Differentiable leaf borrowing `t`.
    pub fn param(&mut self, t: &'a Tensor) -> NodeRef {
        self.push(Op::Leaf, t.shape(), Cow::Borrowed(t.data()), true)
    }

    /// Differentiable leaf owning `t`.
    pub fn variable(&mut self, t: Tensor) -> NodeRef {
        let shape = t.shape();
        self.push(Op::Leaf, shape, Cow::Owned(t.into_data()), true)
    }

    /// Constant vector leaf borrowing `data`; receives no gradient.
    pub fn constant_ref(&mut self, data: &'a [f64]) -> NodeRef {
        self.push(Op::Leaf, Shape::Vector(data.len()), Cow::Borrowed(data), false)
    }

    /// Constant leaf owning `t`; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> NodeRef {
        let shape = t.shape();
        self.push(Op::Leaf, shape, Cow::Owned(t.into_data()), false)
    }

    pub fn value(&self, n: NodeRef) -> &[f64] {
        &self.rec(n).value
    }

    pub fn shape(&self, n: NodeRef) -> Shape {
        self.rec(n).shape
    }

    /// Value of a one-element node.
    pub fn scalar(&self, n: NodeRef) -> f64 {
        let v = self.value(n);
        assert_eq!(v.len(), 1, "scalar() on node of shape {}", self.shape(n));
        v[0]
    }

    pub fn to_tensor(&self, n: NodeRef) -> Tensor {
        let r = self.rec(n);
        Tensor::new(r.shape, r.value.to_vec()).expect("record shape matches value")
    }

    fn grad_any(&self, inputs: &[NodeRef]) -> bool {
        inputs.iter().any(|n| self.rec(*n).requires_grad)
    }

    fn expect_scalar(&self, n: NodeRef, operand: &'static str) -> Result<f64> {
        match self.shape(n) {
            Shape::Vector(1) => Ok(self.value(n)[0]),
            s => Err(Error::dimension(operand, Shape::SCALAR, s)),
        }
    }

    /// Affine map `w x + b`, `w` of shape `(m, n)`, `x` of shape `(n)`, `b` of shape `(m)`.
    pub fn matmul_add(&mut self, w: NodeRef, x: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (m, n) = match self.shape(w) {
            Shape::Matrix(m, n) => (m, n),
            s => return Err(Error::dimension("W", "(m, n) matrix", s)),
        };
        if self.shape(x) != Shape::Vector(n) {
            return Err(Error::dimension("x", Shape::Vector(n), self.shape(x)));
        }
        if self.shape(b) != Shape::Vector(m) {
            return Err(Error::dimension("b", Shape::Vector(m), self.shape(b)));
        }
        let mut out = vec![0.0; m];
        kernels::affine(self.value(w), m, n, self.value(x), self.value(b), &mut out);
        let rg = self.grad_any(&[w, x, b]);
        Ok(self.push(Op::Affine { w, x, b }, Shape::Vector(m), Cow::Owned(out), rg))
    }

    pub fn relu(&mut self, x: NodeRef) -> NodeRef {
        let out: Vec<f64> = self.value(x).iter().map(|v| kernels::relu(*v)).collect();
        let rg = self.grad_any(&[x]);
        let shape = self.shape(x);
        self.push(Op::Relu(x), shape, Cow::Owned(out), rg)
    }

    pub fn tanh(&mut self, x: NodeRef) -> NodeRef {
        let out: Vec<f64> = self.value(x).iter().map(|v| kernels::tanh(*v)).collect();
        let rg = self.grad_any(&[x]);
        let shape = self.shape(x);
        self.push(Op::Tanh(x), shape, Cow::Owned(out), rg)
    }

    /// Euclidean distance between two vectors of equal shape.
    ///
    /// When the distance is below [`DIST_GRAD_EPS`] the backward rule passes a zero
    /// gradient instead of dividing by (nearly) zero.
    pub fn l2_distance(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension("b", self.shape(a), self.shape(b)));
        }
        let d = kernels::l2(self.value(a), self.value(b));
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(Op::L2(a, b), Shape::SCALAR, Cow::Owned(vec![d]), rg))
    }

    /// Log-probabilities `-d_j - logsumexp(-d)` of a softmax over negative distances.
    ///
    /// Returns one scalar node per input distance.
    pub fn neg_dist_log_softmax(&mut self, dists: &[NodeRef]) -> Result<Vec<NodeRef>> {
        if dists.is_empty() {
            return Err(Error::usage("softmax over an empty candidate list"));
        }
        let mut neg = Vec::with_capacity(dists.len());
        for &d in dists {
            neg.push(-self.expect_scalar(d, "distance")?);
        }
        let lse = kernels::logsumexp(&neg);
        let out: Vec<f64> = neg.iter().map(|z| z - lse).collect();
        let rg = self.grad_any(dists);
        let k = out.len();
        let vec_node = self.push(
            Op::NegDistLogSoftmax(dists.to_vec()),
            Shape::Vector(k),
            Cow::Owned(out),
            rg,
        );
        Ok((0..k).map(|i| self.index(vec_node, i)).collect())
    }

    /// `log(sum(exp(s)))` over scalar nodes.
    pub fn logsumexp(&mut self, terms: &[NodeRef]) -> Result<NodeRef> {
        if terms.is_empty() {
            return Err(Error::usage("logsumexp over an empty list"));
        }
        let mut vals = Vec::with_capacity(terms.len());
        for &t in terms {
            vals.push(self.expect_scalar(t, "logsumexp term")?);
        }
        let v = kernels::logsumexp(&vals);
        let rg = self.grad_any(terms);
        Ok(self.push(Op::LogSumExp(terms.to_vec()), Shape::SCALAR, Cow::Owned(vec![v]), rg))
    }

    /// Element `i` of a vector node, as a scalar.
    pub fn index(&mut self, src: NodeRef, i: usize) -> NodeRef {
        let v = self.value(src)[i];
        let rg = self.grad_any(&[src]);
        self.push(Op::Index(src, i), Shape::SCALAR, Cow::Owned(vec![v]), rg)
    }

    fn binary(&mut self, a: NodeRef, b: NodeRef, f: impl Fn(f64, f64) -> f64) -> Result<(Shape, Vec<f64>)> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension("rhs", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok((self.shape(a), out))
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (shape, out) = self.binary(a, b, |x, y| x + y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(Op::Add(a, b), shape, Cow::Owned(out), rg))
    }

    pub fn sub(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (shape, out) = self.binary(a, b, |x, y| x - y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(Op::Sub(a, b), shape, Cow::Owned(out), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (shape, out) = self.binary(a, b, |x, y| x * y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(Op::Mul(a, b), shape, Cow::Owned(out), rg))
    }

    pub fn neg(&mut self, a: NodeRef) -> NodeRef {
        let out: Vec<f64> = self.value(a).iter().map(|v| -v).collect();
        let rg = self.grad_any(&[a]);
        let shape = self.shape(a);
        self.push(Op::Neg(a), shape, Cow::Owned(out), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: NodeRef) -> NodeRef {
        let s: f64 = self.value(a).iter().sum();
        let rg = self.grad_any(&[a]);
        self.push(Op::Sum(a), Shape::SCALAR, Cow::Owned(vec![s]), rg)
    }

    /// Sum of scalar nodes; `None` for an empty list.
    pub fn add_all(&mut self, terms: &[NodeRef]) -> Result<Option<NodeRef>> {
        let mut iter = terms.iter();
        let Some(&first) = iter.next() else {
            return Ok(None);
        };
        let mut acc = first;
        for &t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(Some(acc))
    }

    /// Reverse sweep from the scalar `loss`, seeding `dloss/dloss = 1`.
    pub fn backward(&self, loss: NodeRef) -> Result<Gradients> {
        if self.shape(loss) != Shape::SCALAR {
            return Err(Error::dimension("loss", Shape::SCALAR, self.shape(loss)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.records.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let rec = &self.records[i];
            if !rec.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(rec, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.records)
                .map(|(g, r)| g.map(|g| Tensor::new(r.shape, g).expect("gradient shape")))
                .collect(),
        })
    }

    fn wants(&self, n: NodeRef) -> bool {
        self.records[n.0].requires_grad
    }

    fn propagate(&self, rec: &Record<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |n: NodeRef, f: &mut dyn FnMut(&mut [f64])| {
            if !self.wants(n) {
                return;
            }
            let slot = grads[n.0].get_or_insert_with(|| vec![0.0; self.records[n.0].value.len()]);
            f(slot);
        };
        match &rec.op {
            Op::Leaf => {}
            Op::Affine { w, x, b } => {
                let (m, n) = match self.shape(*w) {
                    Shape::Matrix(m, n) => (m, n),
                    _ => unreachable!("affine weight is a matrix"),
                };
                let wv = self.value(*w);
                let xv = self.value(*x);
                acc(*w, &mut |dw| {
                    let nz = kernels::nonzero_indices(xv);
                    for (i, gi) in g.iter().enumerate().take(m) {
                        if *gi == 0.0 {
                            continue;
                        }
                        let row = &mut dw[i * n..(i + 1) * n];
                        for &j in &nz {
                            row[j] += gi * xv[j];
                        }
                    }
                });
                acc(*x, &mut |dx| {
                    for (i, gi) in g.iter().enumerate() {
                        if *gi == 0.0 {
                            continue;
                        }
                        let row = &wv[i * n..(i + 1) * n];
                        for (d, wij) in dx.iter_mut().zip(row) {
                            *d += wij * gi;
                        }
                    }
                });
                acc(*b, &mut |db| {
                    for (d, gi) in db.iter_mut().zip(g) {
                        *d += gi;
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |dx| {
                    for ((d, xi), gi) in dx.iter_mut().zip(xv).zip(g) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &rec.value;
                acc(*x, &mut |dx| {
                    for ((d, yi), gi) in dx.iter_mut().zip(y.iter()).zip(g) {
                        *d += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::L2(a, b) => {
                let dist = rec.value[0];
                if dist < DIST_GRAD_EPS {
                    return;
                }
                let av = self.value(*a);
                let bv = self.value(*b);
                let scale = g[0] / dist;
                acc(*a, &mut |da| {
                    for ((d, x), y) in da.iter_mut().zip(av).zip(bv) {
                        *d += scale * (x - y);
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, x), y) in db.iter_mut().zip(av).zip(bv) {
                        *d -= scale * (x - y);
                    }
                });
            }
            Op::NegDistLogSoftmax(dists) => {
                // out_j = z_j - lse(z), z = -d: dz_j = g_j - p_j * sum(g)
                let total: f64 = g.iter().sum();
                for (j, d) in dists.iter().enumerate() {
                    let p = libm::exp(rec.value[j]);
                    let dz = g[j] - p * total;
                    acc(*d, &mut |dd| dd[0] -= dz);
                }
            }
            Op::LogSumExp(terms) => {
                let out = rec.value[0];
                for t in terms {
                    let p = libm::exp(self.value(*t)[0] - out);
                    acc(*t, &mut |dt| dt[0] += g[0] * p);
                }
            }
            Op::Index(src, i) => acc(*src, &mut |ds| ds[*i] += g[0]),
            Op::Add(a, b) => {
                acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi));
                acc(*b, &mut |db| db.iter_mut().zip(g).for_each(|(d, gi)| *d += gi));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi));
                acc(*b, &mut |db| db.iter_mut().zip(g).for_each(|(d, gi)| *d -= gi));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(*a, &mut |da| {
                    for ((d, y), gi) in da.iter_mut().zip(bv).zip(g) {
                        *d += gi * y;
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, x), gi) in db.iter_mut().zip(av).zip(g) {
                        *d += gi * x;
                    }
                });
            }
            Op::Neg(a) => acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, gi)| *d -= gi)),
            Op::Sum(a) => acc(*a, &mut |da| da.iter_mut().for_each(|d| *d += g[0])),
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`NodeRef`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `n`, if `n` was reached by the backward sweep.
    pub fn get(&self, n: NodeRef) -> Option<&Tensor> {
        self.grads.get(n.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `n`, or zeros of `shape` when `n` is not reachable from the loss.
    pub fn wrt(&self, n: NodeRef, shape: Shape) -> Tensor {
        self.get(n).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    /// Moves the gradient out, leaving `None`.
    pub fn take(&mut self, n: NodeRef) -> Option<Tensor> {
        self.grads.get_mut(n.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn affine_identity_and_zero_weight() {
        let mut t = Tape::new();
        let w = t.constant(Tensor::identity(2));
        let x = t.constant(Tensor::vector(vec![3.0, 4.0]));
        let b = t.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = t.matmul_add(w, x, b).unwrap();
        assert_eq!(t.value(y), &[3.0, 4.0]);

        let w0 = t.constant(Tensor::zeros(Shape::Matrix(2, 2)));
        let b1 = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let x2 = t.constant(Tensor::vector(vec![-7.5, 11.0]));
        let y = t.matmul_add(w0, x2, b1).unwrap();
        assert_eq!(t.value(y), &[1.0, 2.0]);
    }

    #[test]
    fn affine_shape_errors_name_operand() {
        let mut t = Tape::new();
        let w = t.constant(Tensor::zeros(Shape::Matrix(2, 3)));
        let x = t.constant(Tensor::vector(vec![0.0; 2]));
        let b = t.constant(Tensor::vector(vec![0.0; 2]));
        match t.matmul_add(w, x, b) {
            Err(Error::Dimension { operand, expected, .. }) => {
                assert_eq!(operand, "x");
                assert_eq!(expected, "(3)");
            }
            other => panic!("unexpected {other:?}"),
        }
        let x3 = t.constant(Tensor::vector(vec![0.0; 3]));
        let b3 = t.constant(Tensor::vector(vec![0.0; 3]));
        assert!(matches!(
            t.matmul_add(w, x3, b3),
            Err(Error::Dimension { operand: "b", .. })
        ));
        assert!(matches!(
            t.matmul_add(x3, x3, b3),
            Err(Error::Dimension { operand: "W", .. })
        ));
    }

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y), &[0.0, 0.0, 2.0]);
        let p = t.constant(Tensor::vector(vec![0.5, 3.0]));
        let y = t.relu(p);
        assert_eq!(t.value(y), &[0.5, 3.0]);
    }

    #[test]
    fn relu_subgradient_is_zero_at_zero() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn l2_distance_values() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::vector(vec![3.0, 4.0]));
        let b = t.variable(Tensor::vector(vec![0.0, 0.0]));
        let d = t.l2_distance(a, b).unwrap();
        assert_eq!(t.scalar(d), 5.0);
        let g = t.backward(d).unwrap();
        let ga = g.get(a).unwrap().data();
        let gb = g.get(b).unwrap().data();
        for (got, want) in ga.iter().chain(gb).zip([0.6, 0.8, -0.6, -0.8]) {
            assert!(close(*got, want, 1e-15));
        }
    }

    #[test]
    fn l2_coincident_points_have_zero_gradient() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::vector(vec![1.5, -2.0]));
        let b = t.variable(Tensor::vector(vec![1.5, -2.0]));
        let d = t.l2_distance(a, b).unwrap();
        assert_eq!(t.scalar(d), 0.0);
        let g = t.backward(d).unwrap();
        assert_eq!(g.wrt(a, Shape::Vector(2)).data(), &[0.0, 0.0]);
        assert!(g.wrt(b, Shape::Vector(2)).is_finite());
    }

    #[test]
    fn log_softmax_small_cases() {
        let mut t = Tape::new();
        let d = t.constant(Tensor::scalar(3.7));
        let lp = t.neg_dist_log_softmax(&[d]).unwrap();
        assert_eq!(t.scalar(lp[0]), 0.0);

        let d1 = t.constant(Tensor::scalar(1.0));
        let d2 = t.constant(Tensor::scalar(1.0));
        let lp = t.neg_dist_log_softmax(&[d1, d2]).unwrap();
        assert!(close(t.scalar(lp[0]), libm::log(0.5), 1e-15));
        assert!(close(t.scalar(lp[1]), libm::log(0.5), 1e-15));

        let d3 = t.constant(Tensor::scalar(2.0));
        let lp = t.neg_dist_log_softmax(&[d1, d3]).unwrap();
        // exp(-1) / (exp(-1) + exp(-2)) = 1 / (1 + e^-1)
        assert!(close(libm::exp(t.scalar(lp[0])), 0.73106, 1e-5));
        assert!(close(libm::exp(t.scalar(lp[1])), 0.26894, 1e-5));
    }

    #[test]
    fn log_softmax_rejects_empty() {
        let mut t = Tape::new();
        assert!(matches!(t.neg_dist_log_softmax(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn log_softmax_survives_huge_distances() {
        let mut t = Tape::new();
        let d1 = t.constant(Tensor::scalar(5000.0));
        let d2 = t.constant(Tensor::scalar(5001.0));
        let lp = t.neg_dist_log_softmax(&[d1, d2]).unwrap();
        let s = libm::exp(t.scalar(lp[0])) + libm::exp(t.scalar(lp[1]));
        assert!(close(s, 1.0, 1e-12));
    }

    #[test]
    fn backward_identity_and_fan_out() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::scalar(0.25));
        let g = t.backward(a).unwrap();
        assert_eq!(g.get(a).unwrap().item(), 1.0);

        let s = t.add(a, a).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().item(), 2.0);
    }

    #[test]
    fn unreachable_leaf_gets_zeros() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::scalar(1.0));
        let unused = t.variable(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let l = t.neg(a);
        let g = t.backward(l).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused, Shape::Vector(3)).data(), &[0.0; 3]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(a), Err(Error::Dimension { operand: "loss", .. })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let w = t.variable(Tensor::identity(2));
        let x = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = t.variable(Tensor::vector(vec![0.0, 0.0]));
        let y = t.matmul_add(w, x, b).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(g.get(b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn every_reached_node_has_gradient_of_its_shape() {
        let mut t = Tape::new();
        let w = t.variable(Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap());
        let x = t.variable(Tensor::vector(vec![1.0, -1.0, 2.0]));
        let b = t.variable(Tensor::vector(vec![0.1, 0.2]));
        let h = t.matmul_add(w, x, b).unwrap();
        let r = t.tanh(h);
        let s = t.sum(r);
        let g = t.backward(s).unwrap();
        for n in [w, x, b, h, r, s] {
            assert_eq!(g.get(n).unwrap().shape(), t.shape(n));
        }
    }
}
