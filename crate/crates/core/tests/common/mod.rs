//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use scg::ops::Operator;
use scg::tape::finite_difference;
use scg::{Builtin, Shape, Value};

/// Argument shapes that exercise each catalogue op, including broadcasting.
pub fn arg_shapes(op: &Builtin, rng: &mut impl Rng) -> Vec<Shape> {
    use Builtin::*;
    match op {
        Add | Sub | Mul | Div => match rng.gen_range(0..3) {
            0 => vec![vec![3], vec![3]],
            1 => vec![vec![3], vec![]],
            _ => vec![vec![], vec![3]],
        },
        Sum | Mean | Transpose => vec![vec![2, 3]],
        Inner | BernoulliLogPmf => vec![vec![3], vec![3]],
        MatVec => vec![vec![2, 3], vec![3]],
        MatMul => vec![vec![2, 3], vec![3, 2]],
        Affine => vec![vec![2, 3], vec![3], vec![2]],
        Softmax | LogSoftmax | Slice { .. } => vec![vec![4]],
        Concat => vec![vec![2], vec![], vec![3]],
        Broadcast(_) | OneHot(_) => vec![vec![]],
        Outer => vec![vec![2], vec![3]],
        _ => vec![vec![3]],
    }
}

/// Random arguments inside each op's smooth domain: magnitudes in
/// `[0.5, 2]` keep clear of the kinks of relu and step and the poles of
/// division; log, sqrt and fractional powers get positive inputs.
pub fn random_args(op: &Builtin, rng: &mut impl Rng) -> Vec<Value> {
    let positive = matches!(op, Builtin::Log | Builtin::Sqrt | Builtin::Pow(_));
    arg_shapes(op, rng)
        .into_iter()
        .map(|shape| {
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| {
                    if let Builtin::OneHot(k) = op {
                        return rng.gen_range(0..*k) as f64;
                    }
                    let m = rng.gen_range(0.5..2.0);
                    if positive || rng.gen_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            Value::new(shape, data).unwrap()
        })
        .collect()
}

/// Worst `|vjp - fd| - (rtol |fd| + atol)` over every component of every
/// differentiable argument of `<r, op(args)>`, for a random cotangent `r`.
/// Nonpositive means the check passes.
pub fn vjp_fd_excess(op: &Builtin, args: &[Value], rng: &mut impl Rng, rtol: f64, atol: f64) -> f64 {
    let refs: Vec<&Value> = args.iter().collect();
    let out = op.forward(&refs).unwrap();
    let r = Value::new(out.shape().to_vec(), (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let grads = op.vjp(&refs, &out, &r).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for (k, grad) in grads.iter().enumerate() {
        if !op.differentiable(k) {
            continue;
        }
        let f = |x: &Value| {
            let mut probe: Vec<Value> = args.to_vec();
            probe[k] = x.clone();
            let refs: Vec<&Value> = probe.iter().collect();
            op.forward(&refs).unwrap().dot(&r)
        };
        let fd = finite_difference(f, &args[k], 1e-6);
        let grad = grad.clone().unwrap_or_else(|| Value::zeros(args[k].shape()));
        for (a, b) in grad.data().iter().zip(fd.data()) {
            worst = worst.max((a - b).abs() - (rtol * b.abs() + atol));
        }
    }
    worst
}
