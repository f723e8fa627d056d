//! Tape-based reverse-mode differentiation over tensor kernels.
//!
//! Operations are recorded on a [`Tape`] in evaluation order; nodes can
//! only reference earlier nodes, so a single reverse sweep visits each node
//! once. Gradients flowing into a node from several consumers are summed in
//! tape order.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::{cst, DType, Scalar};
use crate::tensor::Tensor;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    id: usize,
}

impl Var {
    pub fn id(self) -> usize {
        self.id
    }
}

/// Primitive operations with their input handles.
#[derive(Debug, Clone)]
pub enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Hadamard(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Adds a `[d]` vector to every row of a `[.., d]` tensor.
    AddRow(Var, Var),
    /// Multiplies every row of a `[.., d]` tensor by a `[d]` vector.
    MulRow(Var, Var),
    Scale(Var, T),
    Roll(Var, i64),
    ReduceSum(Var, usize),
    SumAll(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    /// Mean softmax cross-entropy of `[B, C]` logits.
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
    /// Mean squared error over all elements.
    Mse(Var, Var),
}

/// Discriminant of [`Op`], used for reporting and fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpTag {
    Leaf,
    MatMul,
    Transpose,
    Hadamard,
    Add,
    Sub,
    AddRow,
    MulRow,
    Scale,
    Roll,
    ReduceSum,
    SumAll,
    Relu,
    Gelu,
    Sigmoid,
    CrossEntropy,
    Mse,
}

impl OpTag {
    pub const ALL: [OpTag; 17] = [
        OpTag::Leaf,
        OpTag::MatMul,
        OpTag::Transpose,
        OpTag::Hadamard,
        OpTag::Add,
        OpTag::Sub,
        OpTag::AddRow,
        OpTag::MulRow,
        OpTag::Scale,
        OpTag::Roll,
        OpTag::ReduceSum,
        OpTag::SumAll,
        OpTag::Relu,
        OpTag::Gelu,
        OpTag::Sigmoid,
        OpTag::CrossEntropy,
        OpTag::Mse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpTag::Leaf => "leaf",
            OpTag::MatMul => "matmul",
            OpTag::Transpose => "transpose",
            OpTag::Hadamard => "hadamard",
            OpTag::Add => "add",
            OpTag::Sub => "sub",
            OpTag::AddRow => "add_row",
            OpTag::MulRow => "mul_row",
            OpTag::Scale => "scale",
            OpTag::Roll => "roll",
            OpTag::ReduceSum => "reduce_sum",
            OpTag::SumAll => "sum_all",
            OpTag::Relu => "relu",
            OpTag::Gelu => "gelu",
            OpTag::Sigmoid => "sigmoid",
            OpTag::CrossEntropy => "cross_entropy",
            OpTag::Mse => "mse",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for OpTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl<T> Op<T> {
    pub fn tag(&self) -> OpTag {
        match self {
            Op::Leaf => OpTag::Leaf,
            Op::MatMul(..) => OpTag::MatMul,
            Op::Transpose(..) => OpTag::Transpose,
            Op::Hadamard(..) => OpTag::Hadamard,
            Op::Add(..) => OpTag::Add,
            Op::Sub(..) => OpTag::Sub,
            Op::AddRow(..) => OpTag::AddRow,
            Op::MulRow(..) => OpTag::MulRow,
            Op::Scale(..) => OpTag::Scale,
            Op::Roll(..) => OpTag::Roll,
            Op::ReduceSum(..) => OpTag::ReduceSum,
            Op::SumAll(..) => OpTag::SumAll,
            Op::Relu(..) => OpTag::Relu,
            Op::Gelu(..) => OpTag::Gelu,
            Op::Sigmoid(..) => OpTag::Sigmoid,
            Op::CrossEntropy { .. } => OpTag::CrossEntropy,
            Op::Mse(..) => OpTag::Mse,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Hadamard(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::Mse(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Roll(a, _)
            | Op::ReduceSum(a, _)
            | Op::SumAll(a)
            | Op::Relu(a)
            | Op::Gelu(a)
            | Op::Sigmoid(a) => vec![*a],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Append-only record of a computation. Single writer; independent tapes
/// can live on different threads.
pub struct Tape<T> {
    id: u64,
    nodes: RefCell<Vec<Node<T>>>,
    corrupted: Cell<Option<OpTag>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let inner = cst::<T>(SQRT_2_OVER_PI) * (x + cst::<T>(GELU_CUBIC) * x * x * x);
    cst::<T>(0.5) * x * (T::one() + inner.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = cst::<T>(SQRT_2_OVER_PI);
    let a = cst::<T>(GELU_CUBIC);
    let t = (c * (x + a * x * x * x)).tanh();
    let half = cst::<T>(0.5);
    half * (T::one() + t)
        + half * x * (T::one() - t * t) * c * (T::one() + cst::<T>(3.0) * a * x * x)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            corrupted: Cell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct operation kinds recorded so far, sorted.
    pub fn op_tags(&self) -> Vec<OpTag> {
        let mut tags: Vec<OpTag> = self.nodes.borrow().iter().map(|n| n.op.tag()).collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    /// Test fixture: makes the backward rule of `tag` return a scaled
    /// gradient so that gradient checks can be shown to catch it.
    #[doc(hidden)]
    pub fn corrupt_backward(&self, tag: OpTag) {
        self.corrupted.set(Some(tag));
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id {
            return Err(Error::usage(format!(
                "variable from tape {} used on tape {}",
                v.tape, self.id
            )));
        }
        Ok(())
    }

    /// Records `op` with its forward result. All inputs must belong to this
    /// tape.
    pub fn record(&self, op: Op<T>, value: Tensor<T>) -> Result<Var> {
        let inputs = op.inputs();
        for &v in &inputs {
            self.check(v)?;
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|v| nodes[v.id].requires_grad);
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            id: nodes.len() - 1,
        })
    }

    fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var {
            tape: self.id,
            id: nodes.len() - 1,
        }
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> Result<Tensor<T>> {
        self.check(v)?;
        Ok(self.nodes.borrow()[v.id].value.clone())
    }

    pub fn shape(&self, v: Var) -> Result<Vec<usize>> {
        self.check(v)?;
        Ok(self.nodes.borrow()[v.id].value.shape().to_vec())
    }

    fn unary<R>(&self, a: Var, f: impl FnOnce(&Tensor<T>) -> Result<R>) -> Result<R> {
        self.check(a)?;
        let nodes = self.nodes.borrow();
        f(&nodes[a.id].value)
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        f: impl FnOnce(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Tensor<T>> {
        self.check(a)?;
        self.check(b)?;
        let nodes = self.nodes.borrow();
        f(&nodes[a.id].value, &nodes[b.id].value)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x.matmul(y))?;
        self.record(Op::MatMul(a, b), v)
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let v = self.unary(a, |x| x.transpose())?;
        self.record(Op::Transpose(a), v)
    }

    pub fn hadamard(&self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x.hadamard(y))?;
        self.record(Op::Hadamard(a, b), v)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x.add(y))?;
        self.record(Op::Add(a, b), v)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x.sub(y))?;
        self.record(Op::Sub(a, b), v)
    }

    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let v = self.binary(a, row, |x, y| x.add_row(y))?;
        self.record(Op::AddRow(a, row), v)
    }

    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var> {
        let v = self.binary(a, row, |x, y| x.mul_row(y))?;
        self.record(Op::MulRow(a, row), v)
    }

    pub fn scale(&self, a: Var, s: T) -> Result<Var> {
        let v = self.unary(a, |x| Ok(x.scale(s)))?;
        self.record(Op::Scale(a, s), v)
    }

    pub fn roll(&self, a: Var, r: i64) -> Result<Var> {
        let v = self.unary(a, |x| x.roll(r))?;
        self.record(Op::Roll(a, r), v)
    }

    pub fn reduce_sum(&self, a: Var, axis: usize) -> Result<Var> {
        let v = self.unary(a, |x| x.reduce_sum(axis))?;
        self.record(Op::ReduceSum(a, axis), v)
    }

    pub fn sum_all(&self, a: Var) -> Result<Var> {
        let v = self.unary(a, |x| Ok(Tensor::scalar(x.sum_all())))?;
        self.record(Op::SumAll(a), v)
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        let v = self.unary(a, |x| Ok(x.map(|e| e.max(T::zero()))))?;
        self.record(Op::Relu(a), v)
    }

    pub fn gelu(&self, a: Var) -> Result<Var> {
        let v = self.unary(a, |x| Ok(x.map(gelu)))?;
        self.record(Op::Gelu(a), v)
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var> {
        let v = self.unary(a, |x| Ok(x.map(sigmoid)))?;
        self.record(Op::Sigmoid(a), v)
    }

    /// Mean over the batch of `-log softmax(logits)[label]`, stabilized by
    /// subtracting each row's maximum.
    pub fn cross_entropy(&self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = self.unary(logits, |x| {
            if x.ndim() != 2 || x.shape()[0] != labels.len() || x.shape()[1] == 0 {
                return Err(Error::dim(format!(
                    "cross_entropy: logits {:?} with {} labels",
                    x.shape(),
                    labels.len()
                )));
            }
            let c = x.shape()[1];
            if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                return Err(Error::data(format!("label {bad} outside [0, {c})")));
            }
            let mut probs = Vec::with_capacity(x.len());
            let mut total = T::zero();
            for (row, &label) in x.data().chunks(c).zip(labels) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut denom = T::zero();
                for &v in row {
                    denom += (v - max).exp();
                }
                let log_denom = denom.ln();
                total += log_denom - (row[label] - max);
                for &v in row {
                    probs.push((v - max).exp() / denom);
                }
            }
            let batch = cst::<T>(labels.len() as f64);
            Ok((total / batch, Tensor::from_raw(x.shape().to_vec(), probs)))
        })?;
        self.record(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            Tensor::scalar(loss),
        )
    }

    pub fn mse(&self, pred: Var, target: Var) -> Result<Var> {
        let v = self.binary(pred, target, |p, t| {
            let diff = p.sub(t)?;
            let n = cst::<T>(diff.len().max(1) as f64);
            Ok(Tensor::scalar(diff.dot(&diff)? / n))
        })?;
        self.record(Op::Mse(pred, target), v)
    }

    /// Propagates gradients from a rank-0 `loss` back to every node that
    /// requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.check(loss)?;
        let nodes = self.nodes.borrow();
        if !nodes[loss.id].value.shape().is_empty() {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::scalar(T::one()));
        let corrupted = self.corrupted.get();

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let contributions = self.rule(&nodes, node, &g)?;
            let factor = if corrupted == Some(node.op.tag()) {
                Some(cst::<T>(1.1))
            } else {
                None
            };
            for (input, contrib) in contributions {
                if !nodes[input.id].requires_grad {
                    continue;
                }
                let contrib = match factor {
                    Some(f) => contrib.scale(f),
                    None => contrib,
                };
                let slot = &mut grads[input.id];
                *slot = Some(match slot.take() {
                    Some(acc) => acc.add(&contrib)?,
                    None => contrib,
                });
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }

        let values: Vec<Option<Tensor<T>>> = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| match (&nodes[id].op, g) {
                (Op::Leaf, g) if nodes[id].requires_grad => {
                    Some(g.unwrap_or_else(|| Tensor::zeros(nodes[id].value.shape())))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads: values,
        })
    }

    fn rule(
        &self,
        nodes: &[Node<T>],
        node: &Node<T>,
        g: &Tensor<T>,
    ) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: Var| &nodes[v.id].value;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => vec![
                (*a, g.matmul(&val(*b).transpose()?)?),
                (*b, val(*a).transpose()?.matmul(g)?),
            ],
            Op::Transpose(a) => vec![(*a, g.transpose()?)],
            Op::Hadamard(a, b) => vec![(*a, g.hadamard(val(*b))?), (*b, g.hadamard(val(*a))?)],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-T::one()))],
            Op::AddRow(a, row) => vec![(*a, g.clone()), (*row, g.fold_rows()?)],
            Op::MulRow(a, row) => vec![
                (*a, g.mul_row(val(*row))?),
                (*row, g.hadamard(val(*a))?.fold_rows()?),
            ],
            Op::Scale(a, s) => vec![(*a, g.scale(*s))],
            Op::Roll(a, r) => vec![(*a, g.roll(-*r)?)],
            Op::ReduceSum(a, axis) => {
                let extent = val(*a).shape()[*axis];
                vec![(*a, g.broadcast_axis(*axis, extent)?)]
            }
            Op::SumAll(a) => vec![(*a, Tensor::full(val(*a).shape(), g.item()?))],
            Op::Relu(a) => {
                let mask = val(*a).map(|x| if x > T::zero() { T::one() } else { T::zero() });
                vec![(*a, g.hadamard(&mask)?)]
            }
            Op::Gelu(a) => vec![(*a, g.hadamard(&val(*a).map(gelu_grad))?)],
            Op::Sigmoid(a) => {
                let ds = node.value.map(|s| s * (T::one() - s));
                vec![(*a, g.hadamard(&ds)?)]
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let c = probs.shape()[1];
                let scale = g.item()? / cst::<T>(labels.len() as f64);
                let mut out = probs.data().to_vec();
                for (row, &label) in out.chunks_mut(c).zip(labels) {
                    row[label] -= T::one();
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                vec![(*logits, Tensor::from_raw(probs.shape().to_vec(), out))]
            }
            Op::Mse(p, t) => {
                let diff = val(*p).sub(val(*t))?;
                let k = cst::<T>(2.0) * g.item()? / cst::<T>(diff.len().max(1) as f64);
                let gp = diff.scale(k);
                let gt = gp.scale(-T::one());
                vec![(*p, gp), (*t, gt)]
            }
        })
    }
}

/// Gradients of trainable leaves, indexed by variable.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a trainable leaf. `None` for constants, interior nodes,
    /// leaves recorded after the loss, or variables from another tape.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn wrt(&self, v: Var) -> Result<Tensor<T>> {
        self.get(v)
            .cloned()
            .ok_or_else(|| Error::usage(format!("no gradient recorded for node {}", v.id)))
    }
}

/// Worst disagreement found for one checked parameter.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
    pub passed: bool,
    /// Operation kinds the checked function records.
    pub ops: Vec<OpTag>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares reverse-mode gradients of the scalar function `f` with central
/// differences `(f(w + h) - f(w - h)) / 2h`, entry by entry.
///
/// The relative error of an entry is `|a - n| / max(|a|, |n|, floor)` with
/// the floor from [`rel_err_floor`]. `f` receives a fresh tape and one variable per entry of `at`, in order.
pub fn gradcheck<T, F>(
    f: F,
    at: &[(String, Tensor<T>)],
    step: T,
    tol: f64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&Tape<T>, &[Var]) -> Result<Var>,
{
    compare(&f, &f, at, at.to_vec(), step, tol)
}

/// Denominator floor of the relative error: `1e-8` in double precision,
/// `sqrt(eps)` in single, below which an analytic gradient entry is at the
/// roundoff level of its precision.
pub fn rel_err_floor(dtype: DType) -> f64 {
    match dtype {
        DType::F64 => 1e-8,
        DType::F32 => f64::from(f32::EPSILON).sqrt(),
    }
}

/// Like [`gradcheck`], but the central differences evaluate `wide`, the same
/// function in double precision, at the widened point. This measures the
/// roundoff of the analytic gradient at precision `T` instead of the much
/// larger cancellation error of differencing at that precision.
pub fn gradcheck_widened<T, F, G>(
    f: F,
    wide: G,
    at: &[(String, Tensor<T>)],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&Tape<T>, &[Var]) -> Result<Var>,
    G: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let widened = at
        .iter()
        .map(|(n, t)| (n.clone(), t.cast::<f64>()))
        .collect();
    compare(&f, &wide, at, widened, step, tol)
}

fn compare<A, N, F, G>(
    f: &F,
    numeric_fn: &G,
    at: &[(String, Tensor<A>)],
    mut work: Vec<(String, Tensor<N>)>,
    step: N,
    tol: f64,
) -> Result<GradCheckReport>
where
    A: Scalar,
    N: Scalar,
    F: Fn(&Tape<A>, &[Var]) -> Result<Var>,
    G: Fn(&Tape<N>, &[Var]) -> Result<Var>,
{
    let eval = |params: &[(String, Tensor<N>)]| -> Result<N> {
        let tape = Tape::new();
        let vars: Vec<Var> = params
            .iter()
            .map(|(_, t)| tape.constant(t.clone()))
            .collect();
        let out = numeric_fn(&tape, &vars)?;
        tape.value(out)?.item()
    };

    let tape = Tape::new();
    let vars: Vec<Var> = at.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;

    let floor = rel_err_floor(A::DTYPE);
    let mut params = Vec::with_capacity(at.len());
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var)?;
        let name = at[p].0.clone();
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..analytic.len() {
            let original = work[p].1.data()[i];
            work[p].1.data_mut()[i] = original + step;
            let plus = eval(&work)?;
            work[p].1.data_mut()[i] = original - step;
            let minus = eval(&work)?;
            work[p].1.data_mut()[i] = original;

            let a = analytic.data()[i].to_f64_lossless();
            let n = ((plus - minus) / (step + step)).to_f64_lossless();
            if !a.is_finite() || !n.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradcheck of {name}"),
                    index: i,
                });
            }
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if rel > check.max_rel_err || i == 0 {
                check.max_rel_err = rel;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = n;
            }
        }
        params.push(check);
    }
    let max_rel_err = params.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        params,
        max_rel_err,
        tol,
        floor,
        passed: max_rel_err <= tol,
        ops: tape.op_tags(),
    })
}

/// Backward rules implicated by a set of check outcomes: operations used by
/// every failing check and by no passing one.
pub fn suspect_rules<'a>(reports: impl IntoIterator<Item = &'a GradCheckReport>) -> Vec<OpTag> {
    let mut suspects: Option<Vec<OpTag>> = None;
    let mut cleared: Vec<OpTag> = Vec::new();
    for r in reports {
        if r.passed {
            cleared.extend(&r.ops);
        } else {
            suspects = Some(match suspects {
                None => r.ops.clone(),
                Some(s) => s.into_iter().filter(|t| r.ops.contains(t)).collect(),
            });
        }
    }
    suspects
        .unwrap_or_default()
        .into_iter()
        .filter(|t| *t != OpTag::Leaf && !cleared.contains(t))
        .collect()
}

/// Draws entries with magnitude in `[0.5, 1.5]` and random sign, keeping
/// gradients away from zero and ReLU inputs away from the kink.
pub fn well_scaled<T: Scalar>(shape: &[usize], rng: &mut CounterRng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let m = rng.uniform_in(0.5, 1.5);
        cst(if rng.uniform() < 0.5 { -m } else { m })
    })
}

struct PrimitiveCase {
    tag: OpTag,
    weights: Tensor<f64>,
    scale: f64,
    shift: i64,
    labels: Vec<usize>,
}

impl PrimitiveCase {
    fn eval<S: Scalar>(&self, tape: &Tape<S>, v: &[Var], corrupt: Option<OpTag>) -> Result<Var> {
        if let Some(bad) = corrupt {
            tape.corrupt_backward(bad);
        }
        let out = match self.tag {
            OpTag::MatMul => tape.matmul(v[0], v[1])?,
            OpTag::Transpose => tape.transpose(v[0])?,
            OpTag::Hadamard => tape.hadamard(v[0], v[1])?,
            OpTag::Add => tape.add(v[0], v[1])?,
            OpTag::Sub => tape.sub(v[0], v[1])?,
            OpTag::AddRow => tape.add_row(v[0], v[1])?,
            OpTag::MulRow => tape.mul_row(v[0], v[1])?,
            OpTag::Scale => tape.scale(v[0], cst(self.scale))?,
            OpTag::Roll => tape.roll(v[0], self.shift)?,
            OpTag::ReduceSum => tape.reduce_sum(v[0], 1)?,
            OpTag::Relu => tape.relu(v[0])?,
            OpTag::Gelu => tape.gelu(v[0])?,
            OpTag::Sigmoid => tape.sigmoid(v[0])?,
            OpTag::SumAll => return tape.sum_all(v[0]),
            OpTag::CrossEntropy => return tape.cross_entropy(v[0], &self.labels),
            OpTag::Mse => return tape.mse(v[0], v[1]),
            OpTag::Leaf => return Err(Error::usage("leaves have no backward rule")),
        };
        let w = tape.constant(self.weights.cast());
        let weighted = tape.hadamard(out, w)?;
        tape.sum_all(weighted)
    }
}

/// Gradient check of one primitive's backward rule on a random instance,
/// via [`gradcheck_widened`].
///
/// Each primitive's output is reduced by `sum(out ⊙ C)` with a random
/// constant `C` unless the primitive is itself a scalar loss. `corrupt`
/// injects a faulty rule into every tape the check creates.
pub fn check_primitive<T: Scalar>(
    tag: OpTag,
    rng: &mut CounterRng,
    step: f64,
    tol: f64,
    corrupt: Option<OpTag>,
) -> Result<GradCheckReport> {
    let (r, c) = (3, 4);
    let mut inputs: Vec<(String, Tensor<T>)> = Vec::new();
    let mut input = |name: &str, shape: &[usize], rng: &mut CounterRng| {
        inputs.push((name.to_string(), well_scaled(shape, rng)));
    };
    let out_shape: Vec<usize> = match tag {
        OpTag::MatMul => {
            input("a", &[r, c], rng);
            input("b", &[c, 2], rng);
            vec![r, 2]
        }
        OpTag::Transpose => {
            input("a", &[r, c], rng);
            vec![c, r]
        }
        OpTag::Hadamard | OpTag::Add | OpTag::Sub | OpTag::Mse => {
            input("a", &[r, c], rng);
            input("b", &[r, c], rng);
            vec![r, c]
        }
        OpTag::AddRow | OpTag::MulRow => {
            input("a", &[r, c], rng);
            input("row", &[c], rng);
            vec![r, c]
        }
        OpTag::ReduceSum => {
            input("a", &[r, c], rng);
            vec![r]
        }
        OpTag::Leaf => return Err(Error::usage("leaves have no backward rule")),
        _ => {
            input("a", &[r, c], rng);
            vec![r, c]
        }
    };
    let case = PrimitiveCase {
        tag,
        weights: well_scaled(&out_shape, rng),
        scale: well_scaled::<f64>(&[1], rng).data()[0],
        shift: rng.below(21) as i64 - 10,
        labels: (0..r).map(|_| rng.below(c as u64) as usize).collect(),
    };
    gradcheck_widened(
        |tape, v| case.eval(tape, v, corrupt),
        |tape, v| case.eval(tape, v, corrupt),
        &inputs,
        step,
        tol,
    )
}
