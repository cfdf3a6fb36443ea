//! Monte Carlo gradient estimation.
//!
//! Samples are drawn in parallel but each is seeded by its index and the
//! per-sample results are reduced in index order, so an estimate is bitwise
//! identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineSpec;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::reverse::reverse_gradients;
use crate::surrogate::{surrogate_gradients, SurrogateForm};
use crate::tensor::Value;
use crate::trace::{all_downstream_costs, sample_trace, Inputs, Trace};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SCG_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Backpropagation through the surrogate loss.
    #[default]
    Surrogate,
    /// The explicit per-edge reverse pass.
    Algorithm1,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Surrogate => "surrogate",
            Method::Algorithm1 => "algorithm1",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surrogate" => Ok(Method::Surrogate),
            "algorithm1" | "alg1" => Ok(Method::Algorithm1),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub method: Method,
    pub form: SurrogateForm,
    /// Worker count; `None` reads [`THREADS_ENV`] and falls back to all cores.
    pub threads: Option<usize>,
    /// Index of the first trace; batches of one seed use disjoint ranges.
    pub first_sample: u64,
}

impl EstimateConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, method: Method::Surrogate, form: SurrogateForm::LogProb, threads: None, first_sample: 0 }
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn form(mut self, form: SurrogateForm) -> Self {
        self.form = form;
        self
    }

    pub fn first_sample(mut self, first_sample: u64) -> Self {
        self.first_sample = first_sample;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub mean: Value,
    /// Per-component sample variance; absent for a single sample.
    pub variance: Option<Value>,
    /// Per-component standard error of the mean; absent for a single sample.
    pub stderr: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub params: BTreeMap<NodeId, ParamEstimate>,
    pub n_samples: usize,
    pub method: Method,
    pub baseline: String,
    pub seed: u64,
}

impl GradientEstimate {
    pub fn param(&self, theta: NodeId) -> Result<&ParamEstimate> {
        self.params.get(&theta).ok_or(Error::NotAParam(theta))
    }

    pub fn mean(&self, theta: NodeId) -> Result<&Value> {
        Ok(&self.param(theta)?.mean)
    }
}

/// One trace's gradient estimate for each of `params`.
pub fn per_trace_gradient(
    graph: &Graph,
    trace: &Trace,
    baselines: &BaselineSpec,
    params: &[NodeId],
    method: Method,
) -> Result<BTreeMap<NodeId, Value>> {
    for &p in params {
        graph.check_param(p)?;
        graph.validate_differentiability(p)?.into_result()?;
    }
    baselines.validate(graph)?;
    trace_gradient(graph, trace, baselines, params, method, SurrogateForm::LogProb)
}

fn trace_gradient(
    graph: &Graph,
    trace: &Trace,
    baselines: &BaselineSpec,
    params: &[NodeId],
    method: Method,
    form: SurrogateForm,
) -> Result<BTreeMap<NodeId, Value>> {
    match method {
        Method::Surrogate => surrogate_gradients(graph, trace, baselines, params, form),
        Method::Algorithm1 => reverse_gradients(graph, trace, baselines, params),
    }
}

/// Worker count from an explicit request, then [`THREADS_ENV`], then all cores.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One trace's gradients, plus its downstream costs when baselines adapt.
type SampleResult = (BTreeMap<NodeId, Value>, Option<Vec<f64>>);

/// Averages per-trace estimates over `cfg.n_samples` independent traces.
///
/// Moving-average baselines in `baselines` are read as-is for every sample
/// and updated once at the end from the sample mean of each node's `Q̂`.
pub fn estimate(
    graph: &Graph,
    inputs: &Inputs,
    params: &[NodeId],
    cfg: &EstimateConfig,
    baselines: &mut BaselineSpec,
) -> Result<GradientEstimate> {
    if cfg.n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    if params.is_empty() {
        return Err(Error::InvalidArgument("no params to differentiate".into()));
    }
    for &p in params {
        graph.check_param(p)?;
        graph.validate_differentiability(p)?.into_result()?;
    }
    baselines.validate(graph)?;

    let track_q = baselines.has_moving_average();
    let shared: &BaselineSpec = baselines;
    let run = |i: usize| -> Result<SampleResult> {
        let trace = sample_trace(graph, inputs, cfg.seed, cfg.first_sample + i as u64)?;
        let g = trace_gradient(graph, &trace, shared, params, cfg.method, cfg.form)?;
        let q = if track_q { Some(all_downstream_costs(graph, &trace)?) } else { None };
        Ok((g, q))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(cfg.threads))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let samples: Vec<_> = pool.install(|| (0..cfg.n_samples).into_par_iter().map(run).collect::<Result<Vec<_>>>())?;

    let n = cfg.n_samples as f64;
    let mut out = BTreeMap::new();
    for &p in params {
        let mut mean = Value::zeros(&graph.node(p).shape);
        for (g, _) in &samples {
            mean.add_assign(&g[&p]);
        }
        let mean = mean.scaled(1.0 / n);
        let (variance, stderr) = if cfg.n_samples > 1 {
            let mut ss = Value::zeros(mean.shape());
            for (g, _) in &samples {
                let d = g[&p].zip_map(&mean, |a, b| a - b);
                ss.add_assign(&d.map(|x| x * x));
            }
            let var = ss.scaled(1.0 / (n - 1.0));
            let se = var.map(|v| (v / n).sqrt());
            (Some(var), Some(se))
        } else {
            (None, None)
        };
        out.insert(p, ParamEstimate { mean, variance, stderr });
    }

    let baseline_tag = baselines.tag();
    if track_q {
        let mut mean_q = BTreeMap::new();
        for s in graph.stochastic_nodes() {
            let total: f64 = samples.iter().map(|(_, q)| q.as_ref().expect("tracked")[s.index()]).sum();
            mean_q.insert(s, total / n);
        }
        baselines.update(&mean_q);
    }

    Ok(GradientEstimate { params: out, n_samples: cfg.n_samples, method: cfg.method, baseline: baseline_tag, seed: cfg.seed })
}
