//! Built-in example graphs.
//!
//! | name | structure |
//! |---|---|
//! | `fig1-1` | `θ → x ~ Cat(softmax θ) → f = x²` |
//! | `fig1-2` | `θ → x ~ Bern(σ θ) → y = exp x → f = y²` |
//! | `fig1-3` | `θ → x ~ Bern(σ θ) → y ~ table(x) → f = y²` |
//! | `fig1-4` | `θ → x ~ Bern(σ θ)`, `f = (x - θ)²` |
//! | `fig1-5` | `θ → x1 → x2` with `θ` also feeding `x2`, costs on both |
//! | `nn2layer` | deterministic two-layer classifier with cross-entropy loss |
//! | `bernoulli-chain` | three Bernoulli units in a chain, one cost each |
//! | `nvil-toy` | three binary latent layers (3, 2, 2) with an inference network |
//! | `gauss-reparam` | `x ~ N(θ, 1)`, `f = x²` |
//! | `mdp-toy` | 3 states, 2 actions, horizon 4, tabular dynamics |
//! | `pomdp-toy` | `mdp-toy` seen through a noisy observation per step |

use std::collections::BTreeMap;

use crate::baseline::BaselineSpec;
use crate::dist::{DistributionSpec, TableDist};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBuilder, NodeId};
use crate::ops::{Builtin, OpSpec};
use crate::oracle::{exact_gradients, SupportDescriptor};
use crate::tensor::Value;
use crate::trace::Inputs;

pub const BUILTIN_NAMES: [&str; 11] = [
    "fig1-1",
    "fig1-2",
    "fig1-3",
    "fig1-4",
    "fig1-5",
    "nn2layer",
    "bernoulli-chain",
    "nvil-toy",
    "gauss-reparam",
    "mdp-toy",
    "pomdp-toy",
];

#[derive(Debug, Clone)]
pub struct BuiltinExample {
    pub name: &'static str,
    pub description: &'static str,
    pub graph: Graph,
    pub inputs: Inputs,
    /// Suggested baselines; empty for most examples.
    pub baselines: BaselineSpec,
    /// Gaussian node to reparameterize when comparing estimators.
    pub reparam: Option<NodeId>,
}

impl BuiltinExample {
    /// Exact gradient for every param, when the graph is small enough to enumerate.
    pub fn reference_gradients(&self) -> Result<BTreeMap<NodeId, Value>> {
        exact_gradients(&self.graph, &self.inputs, self.graph.params(), &SupportDescriptor::default())
    }

    pub fn is_finite_support(&self) -> bool {
        self.graph.stochastic_nodes().all(|s| self.graph.node(s).kind.dist().is_some_and(|d| d.is_finite_support()))
    }
}

pub fn builtin(name: &str) -> Result<BuiltinExample> {
    let (description, build): (&'static str, fn() -> Result<Parts>) = match name {
        "fig1-1" => ("categorical choice with a quadratic cost", fig1_1),
        "fig1-2" => ("Bernoulli sample through a deterministic map", fig1_2),
        "fig1-3" => ("Bernoulli sample driving a second stochastic node", fig1_3),
        "fig1-4" => ("cost depending on the param both directly and through a sample", fig1_4),
        "fig1-5" => ("two chained samples, each with its own cost", fig1_5),
        "nn2layer" => ("deterministic two-layer network with cross-entropy loss", nn2layer),
        "bernoulli-chain" => ("chain of three Bernoulli units", bernoulli_chain),
        "nvil-toy" => ("three-layer binary latent model with an inference network", nvil_toy),
        "gauss-reparam" => ("Gaussian sample with a quadratic cost", gauss_reparam),
        "mdp-toy" => ("tabular MDP, 3 states, 2 actions, horizon 4", mdp_toy),
        "pomdp-toy" => ("partially observed version of mdp-toy", pomdp_toy),
        _ => return Err(Error::UnknownExample(name.to_string())),
    };
    let parts = build()?;
    let name = BUILTIN_NAMES.iter().find(|n| **n == name).expect("listed");
    Ok(BuiltinExample {
        name,
        description,
        graph: parts.graph,
        inputs: parts.inputs,
        baselines: parts.baselines,
        reparam: parts.reparam,
    })
}

struct Parts {
    graph: Graph,
    inputs: Inputs,
    baselines: BaselineSpec,
    reparam: Option<NodeId>,
}

impl Parts {
    fn new(graph: Graph, inputs: Inputs) -> Self {
        Self { graph, inputs, baselines: BaselineSpec::none(), reparam: None }
    }
}

/// Builder plus default input values, with named-node helpers.
#[derive(Default)]
struct Scratch {
    b: GraphBuilder,
    inputs: Vec<(NodeId, Value)>,
}

impl Scratch {
    fn param(&mut self, name: &str, value: Value) -> NodeId {
        let id = self.b.param(name, value.shape());
        self.inputs.push((id, value));
        id
    }

    fn input(&mut self, name: &str, value: Value) -> NodeId {
        let id = self.b.input(name, value.shape());
        self.inputs.push((id, value));
        id
    }

    fn det(&mut self, name: &str, op: Builtin, parents: &[NodeId]) -> NodeId {
        let id = self.b.det(op.spec(), parents);
        self.b.set_name(id, name);
        id
    }

    fn stoch(&mut self, name: &str, dist: DistributionSpec, parents: &[NodeId]) -> NodeId {
        let id = self.b.stoch(dist, parents);
        self.b.set_name(id, name);
        id
    }

    fn cost(&mut self, name: &str, op: Builtin, parents: &[NodeId]) -> NodeId {
        let op: OpSpec = op.spec();
        let id = self.b.cost(op, parents);
        self.b.set_name(id, name);
        id
    }

    fn finish(self) -> Result<(Graph, Inputs)> {
        Ok((self.b.freeze()?, self.inputs.into_iter().collect()))
    }
}

/// Fixed, irregular weights in `[-scale, scale]` so examples avoid symmetric points.
fn weights(shape: &[usize], salt: f64, scale: f64) -> Value {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|k| scale * ((k as f64 + 1.0) * 0.7 + salt).sin()).collect();
    Value::new(shape.to_vec(), data).expect("shape")
}

fn fig1_1() -> Result<Parts> {
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::vector(vec![0.2, -0.4, 0.1]));
    let x = s.stoch("x", DistributionSpec::CategoricalLogits, &[theta]);
    s.cost("f", Builtin::Square, &[x]);
    let (g, i) = s.finish()?;
    Ok(Parts::new(g, i))
}

fn fig1_2() -> Result<Parts> {
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::scalar(0.5));
    let x = s.stoch("x", DistributionSpec::BernoulliLogit, &[theta]);
    let y = s.det("y", Builtin::Exp, &[x]);
    s.cost("f", Builtin::Square, &[y]);
    let (g, i) = s.finish()?;
    Ok(Parts::new(g, i))
}

fn fig1_3() -> Result<Parts> {
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::scalar(-0.2));
    let x = s.stoch("x", DistributionSpec::BernoulliLogit, &[theta]);
    let table = TableDist::new(vec![2], vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]])?;
    let y = s.stoch("y", DistributionSpec::CategoricalTable(table), &[x]);
    s.cost("f", Builtin::Square, &[y]);
    let (g, i) = s.finish()?;
    Ok(Parts::new(g, i))
}

fn fig1_4() -> Result<Parts> {
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::scalar(0.4));
    let x = s.stoch("x", DistributionSpec::BernoulliLogit, &[theta]);
    let d = s.det("d", Builtin::Sub, &[x, theta]);
    s.cost("f", Builtin::Square, &[d]);
    let (g, i) = s.finish()?;
    Ok(Parts::new(g, i))
}

fn fig1_5() -> Result<Parts> {
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::scalar(0.1));
    let x1 = s.stoch("x1", DistributionSpec::BernoulliLogit, &[theta]);
    let l2 = s.det("logit2", Builtin::Sub, &[theta, x1]);
    let x2 = s.stoch("x2", DistributionSpec::BernoulliLogit, &[l2]);
    s.cost("f1", Builtin::Scale(2.0), &[x1]);
    s.cost("f2", Builtin::Scale(-3.0), &[x2]);
    let (g, i) = s.finish()?;
    Ok(Parts::new(g, i))
}

fn nn2layer() -> Result<Parts> {
    let mut s = Scratch::default();
    let x = s.input("x", Value::vector(vec![0.5, -1.0, 2.0]));
    let w1 = s.param("W1", weights(&[4, 3], 0.1, 0.5));
    let b1 = s.param("b1", weights(&[4], 1.3, 0.1));
    let w2 = s.param("W2", weights(&[3, 4], 2.9, 0.5));
    let b2 = s.param("b2", weights(&[3], 4.1, 0.1));
    let pre = s.det("pre", Builtin::Affine, &[w1, x, b1]);
    let h = s.det("h", Builtin::Tanh, &[pre]);
    let z = s.det("logits", Builtin::Affine, &[w2, h, b2]);
    let ls = s.det("log_probs", Builtin::LogSoftmax, &[z]);
    let lp = s.det("log_p_label", Builtin::Pick(1), &[ls]);
    s.cost("loss", Builtin::Neg, &[lp]);
    let (g, i) = s.finish()?;
    Ok(Parts::new(g, i))
}

fn bernoulli_chain() -> Result<Parts> {
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::vector(vec![0.3, -0.2, 0.5]));
    let mut prev = None;
    for (t, weight) in [1.0, -2.0, 3.0].into_iter().enumerate() {
        let base = s.det(&format!("bias{}", t + 1), Builtin::Pick(t), &[theta]);
        let logit = match prev {
            None => base,
            Some(p) => {
                let push = s.det(&format!("push{}", t + 1), Builtin::Scale(1.5), &[p]);
                s.det(&format!("logit{}", t + 1), Builtin::Sub, &[base, push])
            }
        };
        let x = s.stoch(&format!("x{}", t + 1), DistributionSpec::BernoulliLogit, &[logit]);
        s.cost(&format!("c{}", t + 1), Builtin::Scale(weight), &[x]);
        prev = Some(x);
    }
    let (g, i) = s.finish()?;
    Ok(Parts::new(g, i))
}

/// Costs are `c_i = log q(h_i | ·) - log p(· | h_i)`, the negated per-layer
/// rewards, so `Q̂_{h1} = c1 + c2 + c3`, `Q̂_{h2} = c2 + c3` and `Q̂_{h3} = c3`.
fn nvil_toy() -> Result<Parts> {
    use Builtin::{Add, Affine, BernoulliLogPmf, Sub};
    let mut s = Scratch::default();
    let x = s.input("x", Value::vector(vec![1.0, 0.0, 1.0]));
    // inference network q_phi
    let a1 = s.param("phi_W1", weights(&[3, 3], 0.3, 0.8));
    let c1 = s.param("phi_b1", weights(&[3], 0.9, 0.3));
    let a2 = s.param("phi_W2", weights(&[2, 3], 1.7, 0.8));
    let c2 = s.param("phi_b2", weights(&[2], 2.2, 0.3));
    let a3 = s.param("phi_W3", weights(&[2, 2], 3.1, 0.8));
    let c3 = s.param("phi_b3", weights(&[2], 3.8, 0.3));
    // generative model p_theta
    let b1 = s.param("theta_W1", weights(&[3, 3], 4.4, 0.8));
    let d1 = s.param("theta_b1", weights(&[3], 5.0, 0.3));
    let b2 = s.param("theta_W2", weights(&[3, 2], 5.6, 0.8));
    let d2 = s.param("theta_b2", weights(&[3], 6.1, 0.3));
    let b3 = s.param("theta_W3", weights(&[2, 2], 6.7, 0.8));
    let d3 = s.param("theta_b3", weights(&[2], 7.2, 0.3));
    let d4 = s.param("theta_prior", weights(&[2], 7.9, 0.3));

    let q1 = s.det("q1", Affine, &[a1, x, c1]);
    let h1 = s.stoch("h1", DistributionSpec::BernoulliLogit, &[q1]);
    let q2 = s.det("q2", Affine, &[a2, h1, c2]);
    let h2 = s.stoch("h2", DistributionSpec::BernoulliLogit, &[q2]);
    let q3 = s.det("q3", Affine, &[a3, h2, c3]);
    let h3 = s.stoch("h3", DistributionSpec::BernoulliLogit, &[q3]);

    let lq1 = s.det("log_q1", BernoulliLogPmf, &[q1, h1]);
    let lq2 = s.det("log_q2", BernoulliLogPmf, &[q2, h2]);
    let lq3 = s.det("log_q3", BernoulliLogPmf, &[q3, h3]);
    let p1 = s.det("p1", Affine, &[b1, h1, d1]);
    let lp1 = s.det("log_p_x", BernoulliLogPmf, &[p1, x]);
    let p2 = s.det("p2", Affine, &[b2, h2, d2]);
    let lp2 = s.det("log_p_h1", BernoulliLogPmf, &[p2, h1]);
    let p3 = s.det("p3", Affine, &[b3, h3, d3]);
    let lp3 = s.det("log_p_h2", BernoulliLogPmf, &[p3, h2]);
    let lp4 = s.det("log_p_h3", BernoulliLogPmf, &[d4, h3]);
    let top = s.det("log_p_top", Add, &[lp3, lp4]);

    s.cost("c1", Sub, &[lq1, lp1]);
    s.cost("c2", Sub, &[lq2, lp2]);
    s.cost("c3", Sub, &[lq3, top]);
    let (graph, inputs) = s.finish()?;

    let mut baselines = BaselineSpec::none();
    let sum = |v: &Value| v.data().iter().sum::<f64>();
    baselines.with_function(&graph, h1, &[x], move |a| 4.0 + 0.2 * sum(a[0]))?;
    baselines.with_function(&graph, h2, &[h1], move |a| 2.5 + 0.2 * sum(a[0]))?;
    baselines.with_function(&graph, h3, &[h2], move |a| 1.5 + 0.2 * sum(a[0]))?;
    Ok(Parts { baselines, ..Parts::new(graph, inputs) })
}

fn gauss_reparam() -> Result<Parts> {
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::scalar(1.0));
    let sigma = s.input("sigma", Value::scalar(1.0));
    let x = s.stoch("x", DistributionSpec::Gaussian, &[theta, sigma]);
    s.cost("f", Builtin::Square, &[x]);
    let (g, i) = s.finish()?;
    Ok(Parts { reparam: Some(x), ..Parts::new(g, i) })
}

const STATES: usize = 3;
const ACTIONS: usize = 2;
const HORIZON: usize = 4;

fn dynamics() -> Result<(TableDist, TableDist)> {
    let initial = TableDist::new(vec![], vec![vec![0.5, 0.3, 0.2]])?;
    let transition = TableDist::new(
        vec![STATES, ACTIONS],
        vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.6, 0.3],
            vec![0.3, 0.5, 0.2],
            vec![0.1, 0.2, 0.7],
            vec![0.5, 0.25, 0.25],
            vec![0.2, 0.2, 0.6],
        ],
    )?;
    Ok((initial, transition))
}

fn rewards() -> Value {
    Value::matrix(STATES, ACTIONS, vec![1.0, 0.0, 0.0, 2.0, -1.0, 1.0])
}

/// Adds `c_t = -R[s_t, a_t]` given the one-hot state and the action.
fn reward_cost(s: &mut Scratch, t: usize, reward: NodeId, state_hot: NodeId, action: NodeId) {
    let a_hot = s.det(&format!("a{t}_onehot"), Builtin::OneHot(ACTIONS), &[action]);
    let column = s.det(&format!("r{t}_by_state"), Builtin::MatVec, &[reward, a_hot]);
    let r = s.det(&format!("r{t}"), Builtin::Inner, &[state_hot, column]);
    s.cost(&format!("c{t}"), Builtin::Neg, &[r]);
}

/// Rough reward-to-go scale per remaining step, used by the default baselines.
const STATE_VALUE: [f64; STATES] = [0.6, 1.0, 0.2];

fn mdp_toy() -> Result<Parts> {
    let (initial, transition) = dynamics()?;
    let mut s = Scratch::default();
    let theta = s.param("theta", Value::matrix(ACTIONS, STATES, vec![0.1, -0.2, 0.3, -0.1, 0.2, 0.0]));
    let reward = s.input("reward", rewards());
    let mut state = s.stoch("s1", DistributionSpec::CategoricalTable(initial), &[]);
    let mut steps = Vec::new();
    for t in 1..=HORIZON {
        let hot = s.det(&format!("s{t}_onehot"), Builtin::OneHot(STATES), &[state]);
        let logits = s.det(&format!("logits{t}"), Builtin::MatVec, &[theta, hot]);
        let action = s.stoch(&format!("a{t}"), DistributionSpec::CategoricalLogits, &[logits]);
        reward_cost(&mut s, t, reward, hot, action);
        steps.push((state, action));
        if t < HORIZON {
            state = s.stoch(&format!("s{}", t + 1), DistributionSpec::CategoricalTable(transition.clone()), &[state, action]);
        }
    }
    let (graph, inputs) = s.finish()?;

    let mut baselines = BaselineSpec::none();
    for (t, &(state, action)) in steps.iter().enumerate() {
        let remaining = (HORIZON - t) as f64;
        baselines.with_function(&graph, action, &[state], move |a| -remaining * STATE_VALUE[a[0].item() as usize])?;
    }
    Ok(Parts { baselines, ..Parts::new(graph, inputs) })
}

/// The policy sees a one-hot window of the current and previous observation.
fn pomdp_toy() -> Result<Parts> {
    let (initial, transition) = dynamics()?;
    let observation = TableDist::new(vec![STATES], vec![vec![0.8, 0.2], vec![0.3, 0.7], vec![0.5, 0.5]])?;
    let mut s = Scratch::default();
    let theta = s.param("theta", weights(&[ACTIONS, 4], 0.5, 0.3));
    let reward = s.input("reward", rewards());
    let mut prev_hot = s.input("no_observation", Value::zeros(&[2]));
    let mut prev_obs = None;
    let mut state = s.stoch("s1", DistributionSpec::CategoricalTable(initial), &[]);
    let mut steps = Vec::new();
    for t in 1..=HORIZON {
        let obs = s.stoch(&format!("o{t}"), DistributionSpec::CategoricalTable(observation.clone()), &[state]);
        let obs_hot = s.det(&format!("o{t}_onehot"), Builtin::OneHot(2), &[obs]);
        let window = s.det(&format!("window{t}"), Builtin::Concat, &[obs_hot, prev_hot]);
        let logits = s.det(&format!("logits{t}"), Builtin::MatVec, &[theta, window]);
        let action = s.stoch(&format!("a{t}"), DistributionSpec::CategoricalLogits, &[logits]);
        let state_hot = s.det(&format!("s{t}_onehot"), Builtin::OneHot(STATES), &[state]);
        reward_cost(&mut s, t, reward, state_hot, action);
        let seen: Vec<NodeId> = std::iter::once(obs).chain(prev_obs).collect();
        steps.push((action, seen));
        prev_hot = obs_hot;
        prev_obs = Some(obs);
        if t < HORIZON {
            state = s.stoch(&format!("s{}", t + 1), DistributionSpec::CategoricalTable(transition.clone()), &[state, action]);
        }
    }
    let (graph, inputs) = s.finish()?;

    let mut baselines = BaselineSpec::none();
    for (t, (action, seen)) in steps.iter().enumerate() {
        let remaining = (HORIZON - t) as f64;
        baselines.with_function(&graph, *action, seen, move |obs| {
            let ones = obs.iter().map(|o| o.item()).sum::<f64>() / obs.len() as f64;
            -remaining * (0.6 - 0.3 * ones)
        })?;
    }
    Ok(Parts { baselines, ..Parts::new(graph, inputs) })
}
