//! Distribution families for stochastic nodes.
//!
//! Parameters bind positionally to a node's parents. Each family provides
//! sampling, an exact log-probability, the analytic score (gradient of the
//! log-probability in each parameter), and an expansion of the log-probability
//! as ops on a [`Tape`] with the sampled value embedded as a constant.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeKind};
use crate::ops::{Builtin, OpSpec};
use crate::tape::{Tape, Var};
use crate::tensor::{numel, Shape, Value};
use crate::trace::Trace;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Bernoulli,
    Categorical,
    DiagonalGaussian,
}

/// Categorical whose probabilities are read from a fixed table indexed by the
/// (discrete) parent values. Registered without a differentiable log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDist {
    radices: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl TableDist {
    pub fn new(radices: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let expected: usize = radices.iter().product();
        if rows.len() != expected || rows.is_empty() {
            return Err(Error::InvalidParam(format!("table needs {expected} rows, got {}", rows.len())));
        }
        let width = rows[0].len();
        for row in &rows {
            if row.len() != width || width == 0 {
                return Err(Error::InvalidParam("table rows must share a nonzero width".into()));
            }
            check_probabilities(row)?;
        }
        Ok(Self { radices, rows })
    }

    pub fn outcomes(&self) -> usize {
        self.rows[0].len()
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn row(&self, parents: &[&Value]) -> Result<&[f64]> {
        let mut idx = 0;
        for (v, &radix) in parents.iter().zip(&self.radices) {
            let k = as_index(v.item(), radix)?;
            idx = idx * radix + k;
        }
        Ok(&self.rows[idx])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    /// Independent Bernoulli units; parent: success probabilities.
    Bernoulli,
    /// Independent Bernoulli units; parent: logits.
    BernoulliLogit,
    /// Rank-0 category index; parent: probability vector.
    Categorical,
    /// Rank-0 category index; parent: logit vector.
    CategoricalLogits,
    /// Parents: mean, scale.
    Gaussian,
    /// Parents: mean, log-scale.
    GaussianLogSigma,
    /// Parentless `N(0, I)` noise of the given shape.
    StandardNormal(Shape),
    CategoricalTable(TableDist),
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidParam(format!("probabilities outside [0, 1]: {p:?}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParam(format!("probabilities sum to {total}")));
    }
    Ok(())
}

fn as_index(x: f64, n: usize) -> Result<usize> {
    if x.fract() != 0.0 || x < 0.0 || x >= n as f64 {
        return Err(Error::OutOfSupport(format!("{x} is not a category index below {n}")));
    }
    Ok(x as usize)
}

fn as_binary(v: &Value) -> Result<()> {
    if v.data().iter().all(|&x| x == 0.0 || x == 1.0) {
        Ok(())
    } else {
        Err(Error::OutOfSupport(format!("Bernoulli value {v:?} not in {{0, 1}}")))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn sample_index(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the final partial sum
    p.iter().rposition(|&pk| pk > 0.0).unwrap_or(0)
}

impl DistributionSpec {
    pub fn name(&self) -> String {
        match self {
            DistributionSpec::Bernoulli => "bernoulli",
            DistributionSpec::BernoulliLogit => "bernoulli_logit",
            DistributionSpec::Categorical => "categorical",
            DistributionSpec::CategoricalLogits => "categorical_logits",
            DistributionSpec::Gaussian => "gaussian",
            DistributionSpec::GaussianLogSigma => "gaussian_meanlogsigma",
            DistributionSpec::StandardNormal(_) => "std_normal",
            DistributionSpec::CategoricalTable(_) => "categorical_table",
        }
        .to_string()
    }

    pub fn family(&self) -> Family {
        match self {
            DistributionSpec::Bernoulli | DistributionSpec::BernoulliLogit => Family::Bernoulli,
            DistributionSpec::Categorical
            | DistributionSpec::CategoricalLogits
            | DistributionSpec::CategoricalTable(_) => Family::Categorical,
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma | DistributionSpec::StandardNormal(_) => {
                Family::DiagonalGaussian
            }
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma => 2,
            DistributionSpec::StandardNormal(_) => 0,
            DistributionSpec::CategoricalTable(t) => t.radices.len(),
            _ => 1,
        }
    }

    pub fn is_finite_support(&self) -> bool {
        self.family() != Family::DiagonalGaussian
    }

    /// Whether the log-probability is registered as differentiable in parameter `arg`.
    pub fn param_differentiable(&self, _arg: usize) -> bool {
        !matches!(self, DistributionSpec::CategoricalTable(_))
    }

    pub fn output_shape(&self, parents: &[&[usize]]) -> Result<Shape> {
        if parents.len() != self.arity() {
            return Err(Error::Shape(format!("{} takes {} parents, got {}", self.name(), self.arity(), parents.len())));
        }
        let bad = || Error::Shape(format!("{} cannot take parameter shapes {parents:?}", self.name()));
        match self {
            DistributionSpec::Bernoulli | DistributionSpec::BernoulliLogit => Ok(parents[0].to_vec()),
            DistributionSpec::Categorical | DistributionSpec::CategoricalLogits => match parents[0] {
                [n] if *n > 0 => Ok(vec![]),
                _ => Err(bad()),
            },
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma => {
                if parents[0] == parents[1] && parents[0].len() <= 1 {
                    Ok(parents[0].to_vec())
                } else {
                    Err(bad())
                }
            }
            DistributionSpec::StandardNormal(shape) => Ok(shape.clone()),
            DistributionSpec::CategoricalTable(_) => {
                if parents.iter().all(|s| s.is_empty()) {
                    Ok(vec![])
                } else {
                    Err(bad())
                }
            }
        }
    }

    /// Validates the family invariants for concrete parameter values.
    pub fn check_params(&self, params: &[&Value]) -> Result<()> {
        match self {
            DistributionSpec::Bernoulli => {
                if params[0].data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::InvalidParam(format!("Bernoulli probability {:?} outside [0, 1]", params[0])));
                }
            }
            DistributionSpec::Categorical => check_probabilities(params[0].data())?,
            DistributionSpec::Gaussian if params[1].data().iter().any(|&s| s <= 0.0 || !s.is_finite()) => {
                return Err(Error::InvalidParam(format!("Gaussian scale {:?} must be positive", params[1])));
            }
            _ => {}
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite parameter for {}", self.name())));
        }
        Ok(())
    }

    fn probabilities(&self, params: &[&Value]) -> Result<Vec<f64>> {
        Ok(match self {
            DistributionSpec::Bernoulli | DistributionSpec::Categorical => params[0].data().to_vec(),
            DistributionSpec::BernoulliLogit => params[0].data().iter().map(|&l| sigmoid(l)).collect(),
            DistributionSpec::CategoricalLogits => softmax(params[0].data()),
            DistributionSpec::CategoricalTable(t) => t.row(params)?.to_vec(),
            _ => unreachable!("continuous family"),
        })
    }

    fn scale(&self, params: &[&Value]) -> Vec<f64> {
        match self {
            DistributionSpec::Gaussian => params[1].data().to_vec(),
            DistributionSpec::GaussianLogSigma => params[1].data().iter().map(|s| s.exp()).collect(),
            _ => unreachable!("not a parameterized Gaussian"),
        }
    }

    pub fn sample(&self, params: &[&Value], rng: &mut impl Rng) -> Result<Value> {
        self.check_params(params)?;
        Ok(match self {
            DistributionSpec::Bernoulli | DistributionSpec::BernoulliLogit => {
                let p = self.probabilities(params)?;
                let draws = p.iter().map(|&pk| if rng.gen::<f64>() < pk { 1.0 } else { 0.0 }).collect();
                Value::new(params[0].shape().to_vec(), draws)?
            }
            DistributionSpec::Categorical | DistributionSpec::CategoricalLogits | DistributionSpec::CategoricalTable(_) => {
                Value::scalar(sample_index(&self.probabilities(params)?, rng) as f64)
            }
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma => {
                let sigma = self.scale(params);
                let draws = params[0]
                    .data()
                    .iter()
                    .zip(&sigma)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Value::new(params[0].shape().to_vec(), draws)?
            }
            DistributionSpec::StandardNormal(shape) => {
                Value::new(shape.clone(), (0..numel(shape)).map(|_| rng.sample(StandardNormal)).collect())?
            }
        })
    }

    pub fn log_prob(&self, params: &[&Value], value: &Value) -> Result<f64> {
        self.check_params(params)?;
        match self {
            DistributionSpec::Bernoulli | DistributionSpec::BernoulliLogit => {
                as_binary(value)?;
                if value.shape() != params[0].shape() {
                    return Err(Error::OutOfSupport(format!("Bernoulli value shape {:?}", value.shape())));
                }
                let mut total = 0.0;
                match self {
                    DistributionSpec::Bernoulli => {
                        for (&p, &v) in params[0].data().iter().zip(value.data()) {
                            total += if v == 1.0 { p.ln() } else { (1.0 - p).ln() };
                        }
                    }
                    _ => {
                        for (&l, &v) in params[0].data().iter().zip(value.data()) {
                            // log sigmoid(+-l), stable in both tails
                            let z = if v == 1.0 { l } else { -l };
                            total += if z > 0.0 { -(-z).exp().ln_1p() } else { z - z.exp().ln_1p() };
                        }
                    }
                }
                Ok(total)
            }
            DistributionSpec::Categorical | DistributionSpec::CategoricalTable(_) => {
                let p = self.probabilities(params)?;
                Ok(p[as_index(value.item(), p.len())?].ln())
            }
            DistributionSpec::CategoricalLogits => {
                let l = params[0].data();
                let k = as_index(value.item(), l.len())?;
                let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + l.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                Ok(l[k] - lse)
            }
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma => {
                if value.shape() != params[0].shape() {
                    return Err(Error::OutOfSupport(format!("Gaussian value shape {:?}", value.shape())));
                }
                let sigma = self.scale(params);
                Ok(params[0]
                    .data()
                    .iter()
                    .zip(&sigma)
                    .zip(value.data())
                    .map(|((m, s), x)| {
                        let z = (x - m) / s;
                        -HALF_LN_2PI - s.ln() - 0.5 * z * z
                    })
                    .sum())
            }
            DistributionSpec::StandardNormal(shape) => {
                if value.shape() != &shape[..] {
                    return Err(Error::OutOfSupport(format!("noise value shape {:?}", value.shape())));
                }
                Ok(value.data().iter().map(|x| -HALF_LN_2PI - 0.5 * x * x).sum())
            }
        }
    }

    /// Analytic gradient of `log p(value | params)` in each parameter.
    /// `None` marks a parameter without a registered derivative.
    pub fn score(&self, params: &[&Value], value: &Value) -> Result<Vec<Option<Value>>> {
        self.log_prob(params, value)?;
        Ok(match self {
            DistributionSpec::Bernoulli => {
                vec![Some(params[0].zip_map(value, |p, v| if v == 1.0 { 1.0 / p } else { -1.0 / (1.0 - p) }))]
            }
            DistributionSpec::BernoulliLogit => vec![Some(params[0].zip_map(value, |l, v| v - sigmoid(l)))],
            DistributionSpec::Categorical => {
                let k = value.item() as usize;
                let mut g = Value::zeros(params[0].shape());
                g.data_mut()[k] = 1.0 / params[0].data()[k];
                vec![Some(g)]
            }
            DistributionSpec::CategoricalLogits => {
                let k = value.item() as usize;
                let mut g = Value::vector(softmax(params[0].data()).into_iter().map(|p| -p).collect());
                g.data_mut()[k] += 1.0;
                vec![Some(g)]
            }
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma => {
                let sigma = self.scale(params);
                let shape = params[0].shape().to_vec();
                let (mut gm, mut gs) = (Vec::new(), Vec::new());
                for ((m, s), x) in params[0].data().iter().zip(&sigma).zip(value.data()) {
                    let d = x - m;
                    gm.push(d / (s * s));
                    gs.push(match self {
                        DistributionSpec::Gaussian => -1.0 / s + d * d / (s * s * s),
                        _ => -1.0 + d * d / (s * s),
                    });
                }
                vec![Some(Value::new(shape.clone(), gm)?), Some(Value::new(shape, gs)?)]
            }
            DistributionSpec::StandardNormal(_) => vec![],
            DistributionSpec::CategoricalTable(t) => vec![None; t.radices.len()],
        })
    }

    /// Records `log p(value | params)` on `tape` from the parameter slots.
    /// The value enters as a constant, so no gradient flows into it.
    pub fn expand_log_prob(&self, tape: &mut Tape, params: &[Var], value: &Value) -> Result<Var> {
        let param_values: Vec<Value> = params.iter().map(|&p| tape.value(p).clone()).collect();
        let refs: Vec<&Value> = param_values.iter().collect();
        let lp = self.log_prob(&refs, value)?;
        use Builtin::*;
        match self {
            DistributionSpec::Bernoulli => {
                // q = v p + (1 - v)(1 - p), affine in p with constant coefficients
                let slope = tape.constant(value.map(|v| 2.0 * v - 1.0));
                let intercept = tape.constant(value.map(|v| 1.0 - v));
                let q = tape.op(Mul, &[slope, params[0]])?;
                let q = tape.op(Add, &[q, intercept])?;
                let lq = tape.op(Log, &[q])?;
                tape.op(Sum, &[lq])
            }
            DistributionSpec::BernoulliLogit => {
                let v = tape.constant(value.clone());
                tape.op(BernoulliLogPmf, &[params[0], v])
            }
            DistributionSpec::Categorical => {
                let p = tape.op(Pick(value.item() as usize), &[params[0]])?;
                tape.op(Log, &[p])
            }
            DistributionSpec::CategoricalLogits => {
                let ls = tape.op(LogSoftmax, &[params[0]])?;
                tape.op(Pick(value.item() as usize), &[ls])
            }
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma => {
                let x = tape.constant(value.clone());
                let (sigma, log_sigma) = match self {
                    DistributionSpec::Gaussian => (params[1], tape.op(Log, &[params[1]])?),
                    _ => (tape.op(Exp, &[params[1]])?, params[1]),
                };
                let d = tape.op(Sub, &[x, params[0]])?;
                let z = tape.op(Div, &[d, sigma])?;
                let q = tape.op(Square, &[z])?;
                let q = tape.op(Scale(-0.5), &[q])?;
                let terms = tape.op(Sub, &[q, log_sigma])?;
                let total = tape.op(Sum, &[terms])?;
                tape.op(Offset(-HALF_LN_2PI * value.len() as f64), &[total])
            }
            DistributionSpec::StandardNormal(_) | DistributionSpec::CategoricalTable(_) => Ok(tape.constant(Value::scalar(lp))),
        }
    }

    /// Every outcome with positive probability, or `None` for continuous families.
    pub fn support(&self, params: &[&Value]) -> Result<Option<Vec<(Value, f64)>>> {
        if !self.is_finite_support() {
            return Ok(None);
        }
        self.check_params(params)?;
        let p = self.probabilities(params)?;
        let outcomes = match self.family() {
            Family::Bernoulli => {
                let d = p.len();
                if d > 20 {
                    return Err(Error::SupportTooLarge(1u128 << d));
                }
                (0..1usize << d)
                    .filter_map(|bits| {
                        let v: Vec<f64> = (0..d).map(|i| ((bits >> (d - 1 - i)) & 1) as f64).collect();
                        let prob: f64 = v.iter().zip(&p).map(|(&x, &pk)| if x == 1.0 { pk } else { 1.0 - pk }).product();
                        (prob > 0.0).then(|| (Value::new(params[0].shape().to_vec(), v).expect("shape"), prob))
                    })
                    .collect()
            }
            _ => p
                .iter()
                .enumerate()
                .filter(|(_, &pk)| pk > 0.0)
                .map(|(k, &pk)| (Value::scalar(k as f64), pk))
                .collect(),
        };
        Ok(Some(outcomes))
    }
}

/// `log p(v̂ | params)` of one stochastic node as a standalone tape whose
/// leaves are the node's parameter values.
#[derive(Debug, Clone)]
pub struct LogProbExpansion {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub output: Var,
}

impl LogProbExpansion {
    pub fn build(graph: &Graph, node: NodeId, trace: &Trace) -> Result<Self> {
        let n = graph.try_node(node)?;
        let NodeKind::Stochastic(dist) = &n.kind else {
            return Err(Error::InvalidArgument(format!("node {node} is not stochastic")));
        };
        let mut tape = Tape::new();
        let params: Vec<Var> =
            n.parents.iter().map(|&p| Ok(tape.variable(trace.value(p)?.clone()))).collect::<Result<_>>()?;
        let output = dist.expand_log_prob(&mut tape, &params, trace.value(node)?)?;
        Ok(Self { tape, params, output })
    }

    pub fn value(&self) -> f64 {
        self.tape.value(self.output).item()
    }

    /// Gradient of the expansion with respect to each parameter.
    pub fn gradient(&self) -> Result<Vec<Value>> {
        let adj = self.tape.backward(&[(self.output, Value::scalar(1.0))])?;
        Ok(self.params.iter().map(|&p| adj.get_or_zeros(p, self.tape.value(p))).collect())
    }
}

/// Rewrites Gaussian node `node` as `h = mu + eps * sigma` with a new
/// parentless noise node `eps ~ N(0, I)`. The rewritten node keeps its id,
/// so downstream edges and params are unchanged.
pub fn reparameterize(graph: &Graph, node: NodeId) -> Result<Graph> {
    let n = graph.try_node(node)?;
    let dist = match &n.kind {
        NodeKind::Stochastic(d @ (DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma)) => d,
        _ => return Err(Error::NotReparameterizable(node)),
    };
    let (mu, scale_parent) = (n.parents[0], n.parents[1]);
    let mut b = graph.thaw();
    let eps = b.stoch(DistributionSpec::StandardNormal(n.shape.clone()), &[]);
    let base = n.name.clone().unwrap_or_else(|| format!("n{node}"));
    b.set_name(eps, &format!("{base}_eps"));
    let sigma = match dist {
        DistributionSpec::GaussianLogSigma => {
            let s = b.det(Builtin::Exp.spec(), &[scale_parent]);
            b.set_name(s, &format!("{base}_sigma"));
            s
        }
        _ => scale_parent,
    };
    let noise = b.det(Builtin::Mul.spec(), &[eps, sigma]);
    b.set_name(noise, &format!("{base}_noise"));
    let add: OpSpec = Builtin::Add.spec();
    b.redefine(node, NodeKind::Deterministic(add), vec![mu, noise]);
    b.freeze()
}
