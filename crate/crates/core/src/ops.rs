//! Deterministic operator set.
//!
//! Every operator supplies a forward rule and a vector-Jacobian product.
//! The VJP of a builtin is written as ops recorded on a [`Tape`], so the
//! backward pass can itself be differentiated (used for Hessian-vector
//! products). The plain numeric VJP is obtained by evaluating that rule on a
//! scratch tape.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{numel, Shape, Value};

/// Number of arguments an operator accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Exact(usize),
    AtLeast(usize),
}

impl Arity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Arity::Exact(k) => n == k,
            Arity::AtLeast(k) => n >= k,
        }
    }
}

pub trait Operator: Send + Sync + fmt::Debug {
    /// Canonical name; [`parse_op`] accepts it back for builtins.
    fn name(&self) -> String;

    fn arity(&self) -> Arity;

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Shape>;

    fn forward(&self, inputs: &[&Value]) -> Result<Value>;

    /// Whether the Jacobian with respect to argument `arg` exists (almost everywhere).
    fn differentiable(&self, _arg: usize) -> bool {
        true
    }

    /// Records the VJP on `tape`. Entry `k` of the result is the adjoint
    /// contribution for `inputs[k]`, or `None` for a nondifferentiable argument.
    fn vjp_graph(&self, _tape: &mut Tape, _inputs: &[Var], _output: Var, _grad: Var) -> Result<Vec<Option<Var>>> {
        Err(Error::SecondOrderUnsupported(self.name()))
    }

    /// Numeric VJP. Operators without a graph-level rule must override this.
    fn vjp(&self, inputs: &[&Value], output: &Value, grad: &Value) -> Result<Vec<Option<Value>>> {
        let mut scratch = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|v| scratch.variable((*v).clone())).collect();
        let out = scratch.variable(output.clone());
        let g = scratch.constant(grad.clone());
        let grads = self.vjp_graph(&mut scratch, &vars, out, g)?;
        Ok(grads.into_iter().map(|o| o.map(|v| scratch.value(v).clone())).collect())
    }
}

pub type OpSpec = Arc<dyn Operator>;

#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Identity,
    Neg,
    Exp,
    Log,
    Sqrt,
    Square,
    Pow(f64),
    Sigmoid,
    Tanh,
    Relu,
    /// Heaviside step, `1` for `x > 0`. Not differentiable.
    Step,
    Scale(f64),
    Offset(f64),
    Add,
    Sub,
    Mul,
    Div,
    Sum,
    Mean,
    Inner,
    MatVec,
    MatMul,
    /// `W x + b`
    Affine,
    Softmax,
    LogSoftmax,
    Concat,
    Slice { start: usize, end: usize },
    Pick(usize),
    Broadcast(Shape),
    /// Rank-0 category index to a one-hot vector. Not differentiable.
    OneHot(usize),
    /// `sum(v log sigmoid(l) + (1 - v) log sigmoid(-l))` for logits `l` and binary `v`.
    BernoulliLogPmf,
    Transpose,
    Outer,
    Pad { start: usize, len: usize },
}

impl Builtin {
    pub fn spec(self) -> OpSpec {
        Arc::new(self)
    }

    /// Every builtin, with representative parameters, for registry-wide tests.
    pub fn catalogue() -> Vec<Builtin> {
        use Builtin::*;
        vec![
            Identity, Neg, Exp, Log, Sqrt, Square, Pow(3.0), Pow(0.5), Sigmoid, Tanh, Relu, Step,
            Scale(-2.5), Offset(1.5), Add, Sub, Mul, Div, Sum, Mean, Inner, MatVec, MatMul, Affine,
            Softmax, LogSoftmax, Concat, Slice { start: 1, end: 3 }, Pick(2), Broadcast(vec![3]),
            OneHot(3), BernoulliLogPmf, Transpose, Outer, Pad { start: 1, len: 5 },
        ]
    }
}

pub fn identity() -> OpSpec {
    Builtin::Identity.spec()
}

fn shape_err(op: &Builtin, inputs: &[&[usize]]) -> Error {
    Error::Shape(format!("{} cannot take argument shapes {:?}", op.name(), inputs))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn broadcast_binary(a: &Value, b: &Value, f: impl Fn(f64, f64) -> f64) -> Value {
    if a.shape() == b.shape() {
        a.zip_map(b, f)
    } else if a.is_scalar() {
        let x = a.item();
        b.map(|y| f(x, y))
    } else {
        let y = b.item();
        a.map(|x| f(x, y))
    }
}

/// Reduces a broadcast adjoint back to the argument's shape.
fn reduce_to(tape: &mut Tape, g: Var, shape: &[usize]) -> Result<Var> {
    if shape.is_empty() && !tape.value(g).is_scalar() {
        tape.op(Builtin::Sum, &[g])
    } else {
        Ok(g)
    }
}

impl Operator for Builtin {
    fn name(&self) -> String {
        use Builtin::*;
        match self {
            Identity => "identity".into(),
            Neg => "neg".into(),
            Exp => "exp".into(),
            Log => "log".into(),
            Sqrt => "sqrt".into(),
            Square => "square".into(),
            Pow(p) => format!("pow:{p}"),
            Sigmoid => "sigmoid".into(),
            Tanh => "tanh".into(),
            Relu => "relu".into(),
            Step => "step".into(),
            Scale(c) => format!("scale:{c}"),
            Offset(c) => format!("offset:{c}"),
            Add => "add".into(),
            Sub => "sub".into(),
            Mul => "mul".into(),
            Div => "div".into(),
            Sum => "sum".into(),
            Mean => "mean".into(),
            Inner => "inner".into(),
            MatVec => "matvec".into(),
            MatMul => "matmul".into(),
            Affine => "affine".into(),
            Softmax => "softmax".into(),
            LogSoftmax => "log_softmax".into(),
            Concat => "concat".into(),
            Slice { start, end } => format!("slice:{start}:{end}"),
            Pick(k) => format!("pick:{k}"),
            Broadcast(s) => format!(
                "broadcast:{}",
                s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
            ),
            OneHot(n) => format!("onehot:{n}"),
            BernoulliLogPmf => "bernoulli_logpmf".into(),
            Transpose => "transpose".into(),
            Outer => "outer".into(),
            Pad { start, len } => format!("pad:{start}:{len}"),
        }
    }

    fn arity(&self) -> Arity {
        use Builtin::*;
        match self {
            Add | Sub | Mul | Div | Inner | MatVec | MatMul | BernoulliLogPmf | Outer => Arity::Exact(2),
            Affine => Arity::Exact(3),
            Concat => Arity::AtLeast(1),
            _ => Arity::Exact(1),
        }
    }

    fn output_shape(&self, s: &[&[usize]]) -> Result<Shape> {
        use Builtin::*;
        if !self.arity().accepts(s.len()) {
            return Err(Error::Shape(format!("{} got {} arguments", self.name(), s.len())));
        }
        let bad = || shape_err(self, s);
        match self {
            Identity | Neg | Exp | Log | Sqrt | Square | Pow(_) | Sigmoid | Tanh | Relu | Step | Scale(_)
            | Offset(_) => Ok(s[0].to_vec()),
            Add | Sub | Mul | Div => {
                if s[0] == s[1] || s[1].is_empty() {
                    Ok(s[0].to_vec())
                } else if s[0].is_empty() {
                    Ok(s[1].to_vec())
                } else {
                    Err(bad())
                }
            }
            Sum | Mean => Ok(vec![]),
            Inner | BernoulliLogPmf => (s[0] == s[1]).then(Vec::new).ok_or_else(bad),
            MatVec => match (s[0], s[1]) {
                ([m, n], [k]) if n == k => Ok(vec![*m]),
                _ => Err(bad()),
            },
            MatMul => match (s[0], s[1]) {
                ([m, k1], [k2, n]) if k1 == k2 => Ok(vec![*m, *n]),
                _ => Err(bad()),
            },
            Affine => match (s[0], s[1], s[2]) {
                ([m, n], [k], [mb]) if n == k && m == mb => Ok(vec![*m]),
                _ => Err(bad()),
            },
            Softmax | LogSoftmax => match s[0] {
                [n] if *n > 0 => Ok(vec![*n]),
                _ => Err(bad()),
            },
            Concat => {
                let mut total = 0;
                for shape in s {
                    match shape {
                        [] => total += 1,
                        [n] => total += n,
                        _ => return Err(bad()),
                    }
                }
                Ok(vec![total])
            }
            Slice { start, end } => match s[0] {
                [n] if start < end && end <= n => Ok(vec![end - start]),
                _ => Err(bad()),
            },
            Pick(k) => match s[0] {
                [n] if k < n => Ok(vec![]),
                _ => Err(bad()),
            },
            Broadcast(shape) => s[0].is_empty().then(|| shape.clone()).ok_or_else(bad),
            OneHot(n) => s[0].is_empty().then(|| vec![*n]).ok_or_else(bad),
            Transpose => match s[0] {
                [m, n] => Ok(vec![*n, *m]),
                _ => Err(bad()),
            },
            Outer => match (s[0], s[1]) {
                ([m], [n]) => Ok(vec![*m, *n]),
                _ => Err(bad()),
            },
            Pad { start, len } => match s[0] {
                [k] if start + k <= *len => Ok(vec![*len]),
                _ => Err(bad()),
            },
        }
    }

    fn forward(&self, x: &[&Value]) -> Result<Value> {
        use Builtin::*;
        let shapes: Vec<&[usize]> = x.iter().map(|v| v.shape()).collect();
        let out_shape = self.output_shape(&shapes)?;
        let out = match self {
            Identity => x[0].clone(),
            Neg => x[0].map(|a| -a),
            Exp => x[0].map(f64::exp),
            Log => x[0].map(f64::ln),
            Sqrt => x[0].map(f64::sqrt),
            Square => x[0].map(|a| a * a),
            Pow(p) => x[0].map(|a| a.powf(*p)),
            Sigmoid => x[0].map(sigmoid),
            Tanh => x[0].map(f64::tanh),
            Relu => x[0].map(|a| a.max(0.0)),
            Step => x[0].map(|a| if a > 0.0 { 1.0 } else { 0.0 }),
            Scale(c) => x[0].map(|a| c * a),
            Offset(c) => x[0].map(|a| a + c),
            Add => broadcast_binary(x[0], x[1], |a, b| a + b),
            Sub => broadcast_binary(x[0], x[1], |a, b| a - b),
            Mul => broadcast_binary(x[0], x[1], |a, b| a * b),
            Div => broadcast_binary(x[0], x[1], |a, b| a / b),
            Sum => Value::scalar(x[0].sum()),
            Mean => Value::scalar(x[0].sum() / x[0].len() as f64),
            Inner => Value::scalar(x[0].dot(x[1])),
            MatVec | Affine => {
                let (m, n) = (shapes[0][0], shapes[0][1]);
                let a = x[0].data();
                let v = x[1].data();
                let mut out: Vec<f64> = (0..m).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect();
                if *self == Affine {
                    for (o, b) in out.iter_mut().zip(x[2].data()) {
                        *o += b;
                    }
                }
                Value::vector(out)
            }
            MatMul => {
                let (m, k, n) = (shapes[0][0], shapes[0][1], shapes[1][1]);
                let (a, b) = (x[0].data(), x[1].data());
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        out[i * n + j] = (0..k).map(|l| a[i * k + l] * b[l * n + j]).sum();
                    }
                }
                Value::matrix(m, n, out)
            }
            Softmax | LogSoftmax => {
                let max = x[0].data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + x[0].data().iter().map(|a| (a - max).exp()).sum::<f64>().ln();
                if *self == Softmax {
                    x[0].map(|a| (a - lse).exp())
                } else {
                    x[0].map(|a| a - lse)
                }
            }
            Concat => Value::vector(x.iter().flat_map(|v| v.data().iter().copied()).collect()),
            Slice { start, end } => Value::vector(x[0].data()[*start..*end].to_vec()),
            Pick(k) => Value::scalar(x[0].data()[*k]),
            Broadcast(shape) => Value::filled(shape, x[0].item()),
            OneHot(n) => {
                let idx = x[0].item();
                if idx.fract() != 0.0 || idx < 0.0 || idx >= *n as f64 {
                    return Err(Error::InvalidArgument(format!("onehot:{n} got index {idx}")));
                }
                let mut v = vec![0.0; *n];
                v[idx as usize] = 1.0;
                Value::vector(v)
            }
            BernoulliLogPmf => Value::scalar(
                x[0].data()
                    .iter()
                    .zip(x[1].data())
                    .map(|(&l, &v)| v * log_sigmoid(l) + (1.0 - v) * log_sigmoid(-l))
                    .sum(),
            ),
            Transpose => {
                let (m, n) = (shapes[0][0], shapes[0][1]);
                let a = x[0].data();
                Value::matrix(n, m, (0..n * m).map(|idx| a[(idx % m) * n + idx / m]).collect())
            }
            Outer => {
                let (a, b) = (x[0].data(), x[1].data());
                Value::matrix(a.len(), b.len(), a.iter().flat_map(|p| b.iter().map(move |q| p * q)).collect())
            }
            Pad { start, len } => {
                let mut v = vec![0.0; *len];
                v[*start..*start + x[0].len()].copy_from_slice(x[0].data());
                Value::vector(v)
            }
        };
        debug_assert_eq!(out.shape(), &out_shape[..]);
        Ok(out)
    }

    fn differentiable(&self, _arg: usize) -> bool {
        !matches!(self, Builtin::Step | Builtin::OneHot(_))
    }

    fn vjp_graph(&self, t: &mut Tape, x: &[Var], out: Var, g: Var) -> Result<Vec<Option<Var>>> {
        use Builtin::*;
        let shape_of = |t: &Tape, v: Var| t.value(v).shape().to_vec();
        let grads = match self {
            Identity | Offset(_) => vec![Some(g)],
            Neg => vec![Some(t.op(Neg, &[g])?)],
            Scale(c) => vec![Some(t.op(Scale(*c), &[g])?)],
            Exp => vec![Some(t.op(Mul, &[g, out])?)],
            Log => vec![Some(t.op(Div, &[g, x[0]])?)],
            Sqrt => {
                let half = t.op(Scale(0.5), &[g])?;
                vec![Some(t.op(Div, &[half, out])?)]
            }
            Square => {
                let two_x = t.op(Scale(2.0), &[x[0]])?;
                vec![Some(t.op(Mul, &[g, two_x])?)]
            }
            Pow(p) => {
                let d = t.op(Pow(p - 1.0), &[x[0]])?;
                let d = t.op(Scale(*p), &[d])?;
                vec![Some(t.op(Mul, &[g, d])?)]
            }
            Sigmoid => {
                let one_minus = t.op(Neg, &[out])?;
                let one_minus = t.op(Offset(1.0), &[one_minus])?;
                let d = t.op(Mul, &[out, one_minus])?;
                vec![Some(t.op(Mul, &[g, d])?)]
            }
            Tanh => {
                let sq = t.op(Square, &[out])?;
                let d = t.op(Neg, &[sq])?;
                let d = t.op(Offset(1.0), &[d])?;
                vec![Some(t.op(Mul, &[g, d])?)]
            }
            Relu => {
                let mask = t.op(Step, &[x[0]])?;
                vec![Some(t.op(Mul, &[g, mask])?)]
            }
            Step | OneHot(_) => vec![None],
            Add | Sub => {
                let (sa, sb) = (shape_of(t, x[0]), shape_of(t, x[1]));
                let ga = reduce_to(t, g, &sa)?;
                let gb = if *self == Sub { t.op(Neg, &[g])? } else { g };
                let gb = reduce_to(t, gb, &sb)?;
                vec![Some(ga), Some(gb)]
            }
            Mul => {
                let (sa, sb) = (shape_of(t, x[0]), shape_of(t, x[1]));
                let ga = t.op(Mul, &[g, x[1]])?;
                let ga = reduce_to(t, ga, &sa)?;
                let gb = t.op(Mul, &[g, x[0]])?;
                let gb = reduce_to(t, gb, &sb)?;
                vec![Some(ga), Some(gb)]
            }
            Div => {
                let (sa, sb) = (shape_of(t, x[0]), shape_of(t, x[1]));
                let ga = t.op(Div, &[g, x[1]])?;
                let ga = reduce_to(t, ga, &sa)?;
                let go = t.op(Mul, &[g, out])?;
                let gb = t.op(Div, &[go, x[1]])?;
                let gb = t.op(Neg, &[gb])?;
                let gb = reduce_to(t, gb, &sb)?;
                vec![Some(ga), Some(gb)]
            }
            Sum => {
                let s = shape_of(t, x[0]);
                vec![Some(t.op(Broadcast(s), &[g])?)]
            }
            Mean => {
                let s = shape_of(t, x[0]);
                let n = numel(&s) as f64;
                let b = t.op(Broadcast(s), &[g])?;
                vec![Some(t.op(Scale(1.0 / n), &[b])?)]
            }
            Inner => vec![Some(t.op(Mul, &[g, x[1]])?), Some(t.op(Mul, &[g, x[0]])?)],
            MatVec | Affine => {
                let ga = t.op(Outer, &[g, x[1]])?;
                let at = t.op(Transpose, &[x[0]])?;
                let gx = t.op(MatVec, &[at, g])?;
                let mut v = vec![Some(ga), Some(gx)];
                if *self == Affine {
                    v.push(Some(g));
                }
                v
            }
            MatMul => {
                let bt = t.op(Transpose, &[x[1]])?;
                let ga = t.op(MatMul, &[g, bt])?;
                let at = t.op(Transpose, &[x[0]])?;
                let gb = t.op(MatMul, &[at, g])?;
                vec![Some(ga), Some(gb)]
            }
            Softmax => {
                let dot = t.op(Inner, &[g, out])?;
                let centered = t.op(Sub, &[g, dot])?;
                vec![Some(t.op(Mul, &[out, centered])?)]
            }
            LogSoftmax => {
                let p = t.op(Exp, &[out])?;
                let total = t.op(Sum, &[g])?;
                let pg = t.op(Mul, &[p, total])?;
                vec![Some(t.op(Sub, &[g, pg])?)]
            }
            Concat => {
                let mut offset = 0;
                let mut v = Vec::with_capacity(x.len());
                for &arg in x {
                    let s = shape_of(t, arg);
                    if s.is_empty() {
                        v.push(Some(t.op(Pick(offset), &[g])?));
                        offset += 1;
                    } else {
                        v.push(Some(t.op(Slice { start: offset, end: offset + s[0] }, &[g])?));
                        offset += s[0];
                    }
                }
                v
            }
            Slice { start, .. } => {
                let n = shape_of(t, x[0])[0];
                vec![Some(t.op(Pad { start: *start, len: n }, &[g])?)]
            }
            Pick(k) => {
                let n = shape_of(t, x[0])[0];
                let one = t.op(Broadcast(vec![1]), &[g])?;
                vec![Some(t.op(Pad { start: *k, len: n }, &[one])?)]
            }
            Broadcast(_) => vec![Some(t.op(Sum, &[g])?)],
            BernoulliLogPmf => {
                let p = t.op(Sigmoid, &[x[0]])?;
                let resid = t.op(Sub, &[x[1], p])?;
                // linear in the value: d/dv = log σ(l) - log σ(-l) = l
                vec![Some(t.op(Mul, &[g, resid])?), Some(t.op(Mul, &[g, x[0]])?)]
            }
            Transpose => vec![Some(t.op(Transpose, &[g])?)],
            Outer => {
                let ga = t.op(MatVec, &[g, x[1]])?;
                let gt = t.op(Transpose, &[g])?;
                let gb = t.op(MatVec, &[gt, x[0]])?;
                vec![Some(ga), Some(gb)]
            }
            Pad { start, .. } => {
                let k = shape_of(t, x[0])[0];
                vec![Some(t.op(Slice { start: *start, end: start + k }, &[g])?)]
            }
        };
        Ok(grads)
    }
}

/// Parses an op name as written in graph files, e.g. `"pow:3"` or `"slice:0:2"`.
pub fn parse_op(name: &str) -> Result<OpSpec> {
    let unknown = || Error::UnknownOp(name.to_string());
    let mut parts = name.split(':');
    let head = parts.next().unwrap_or_default();
    let args: Vec<&str> = parts.collect();
    let float = |i: usize| -> Result<f64> { args.get(i).and_then(|s| s.parse().ok()).ok_or_else(unknown) };
    let index = |i: usize| -> Result<usize> { args.get(i).and_then(|s| s.parse().ok()).ok_or_else(unknown) };
    let expect_args = |n: usize| if args.len() == n { Ok(()) } else { Err(unknown()) };
    use Builtin::*;
    let op = match head {
        "identity" => Identity,
        "neg" => Neg,
        "exp" => Exp,
        "log" => Log,
        "sqrt" => Sqrt,
        "square" => Square,
        "sigmoid" => Sigmoid,
        "tanh" => Tanh,
        "relu" => Relu,
        "step" => Step,
        "add" => Add,
        "sub" => Sub,
        "mul" => Mul,
        "div" => Div,
        "sum" => Sum,
        "mean" => Mean,
        "inner" => Inner,
        "matvec" => MatVec,
        "matmul" => MatMul,
        "affine" => Affine,
        "softmax" => Softmax,
        "log_softmax" => LogSoftmax,
        "concat" => Concat,
        "bernoulli_logpmf" => BernoulliLogPmf,
        "transpose" => Transpose,
        "outer" => Outer,
        "pow" => {
            expect_args(1)?;
            Pow(float(0)?)
        }
        "scale" => {
            expect_args(1)?;
            Scale(float(0)?)
        }
        "offset" => {
            expect_args(1)?;
            Offset(float(0)?)
        }
        "slice" => {
            expect_args(2)?;
            Slice { start: index(0)?, end: index(1)? }
        }
        "pick" => {
            expect_args(1)?;
            Pick(index(0)?)
        }
        "onehot" => {
            expect_args(1)?;
            OneHot(index(0)?)
        }
        "pad" => {
            expect_args(2)?;
            Pad { start: index(0)?, len: index(1)? }
        }
        "broadcast" => {
            expect_args(1)?;
            let dims = if args[0].is_empty() {
                vec![]
            } else {
                args[0].split('x').map(|d| d.parse().map_err(|_| unknown())).collect::<Result<Vec<usize>>>()?
            };
            Broadcast(dims)
        }
        _ => return Err(unknown()),
    };
    let plain = matches!(
        op,
        Identity | Neg | Exp | Log | Sqrt | Square | Sigmoid | Tanh | Relu | Step | Add | Sub | Mul | Div | Sum
            | Mean | Inner | MatVec | MatMul | Affine | Softmax | LogSoftmax | Concat | BernoulliLogPmf
            | Transpose | Outer
    );
    if plain && !args.is_empty() {
        return Err(unknown());
    }
    Ok(op.spec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_parser() {
        for op in Builtin::catalogue() {
            let parsed = parse_op(&op.name()).unwrap();
            assert_eq!(parsed.name(), op.name());
        }
        assert!(parse_op("frobnicate").is_err());
        assert!(parse_op("pow").is_err());
        assert!(parse_op("add:3").is_err());
    }

    #[test]
    fn broadcast_shape_rules() {
        let add = Builtin::Add;
        assert_eq!(add.output_shape(&[&[3], &[]]).unwrap(), vec![3]);
        assert_eq!(add.output_shape(&[&[], &[2, 2]]).unwrap(), vec![2, 2]);
        assert!(add.output_shape(&[&[3], &[2]]).is_err());
        assert!(Builtin::MatVec.output_shape(&[&[2, 3], &[2]]).is_err());
        assert!(Builtin::Affine.output_shape(&[&[2, 3], &[3]]).is_err());
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let v = Builtin::Softmax.forward(&[&Value::vector(vec![0.3; 4])]).unwrap();
        for p in v.data() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Value::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let at = Builtin::Transpose.forward(&[&a]).unwrap();
        assert_eq!(at, Value::matrix(3, 2, vec![1., 4., 2., 5., 3., 6.]));
        let p = Builtin::MatMul.forward(&[&a, &at]).unwrap();
        assert_eq!(p, Value::matrix(2, 2, vec![14., 32., 32., 77.]));
    }

    #[test]
    fn onehot_rejects_bad_index() {
        assert!(Builtin::OneHot(3).forward(&[&Value::scalar(3.0)]).is_err());
        assert!(Builtin::OneHot(3).forward(&[&Value::scalar(0.5)]).is_err());
        assert_eq!(Builtin::OneHot(3).forward(&[&Value::scalar(1.0)]).unwrap().data(), &[0., 1., 0.]);
    }
}
