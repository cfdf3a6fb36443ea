//! Command-line driver: argument parsing, runs and reports.
//!
//! The `scg` binary is a thin wrapper over [`run`], which returns the exit
//! code and the text to print so tests can call it in-process.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::baseline::{Baseline, BaselineSpec};
use crate::builtins::{builtin, BUILTIN_NAMES};
use crate::dist::reparameterize;
use crate::error::{Error, Result};
use crate::estimate::{estimate, EstimateConfig, GradientEstimate, Method, ParamEstimate};
use crate::format::{inputs_from_json, load_graph, load_value};
use crate::graph::{Graph, NodeId};
use crate::hvp::hessian_vector_product;
use crate::oracle::{exact_estimator_moments, exact_gradients, SupportDescriptor};
use crate::tensor::Value;
use crate::trace::{sample_trace, Inputs};

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for usage, IO and graph errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when `--compare-oracle` finds a component outside the band.
pub const EXIT_BAND: i32 = 2;

/// Half-width of the acceptance band, in standard errors.
pub const Z_BAND: f64 = 4.0;

/// Samples per batch when a moving-average baseline adapts between batches.
const AVG_BATCH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "scg", version, about = "Gradient estimates for stochastic computation graphs")]
pub struct Cli {
    /// Graph file in JSON.
    #[arg(long, conflicts_with = "builtin", required_unless_present_any = ["builtin", "list"])]
    pub graph: Option<PathBuf>,

    /// Built-in example graph.
    #[arg(long)]
    pub builtin: Option<String>,

    /// List the built-in examples and exit.
    #[arg(long)]
    pub list: bool,

    /// JSON object of input values overriding the defaults, keyed by node name or id.
    #[arg(long)]
    pub inputs: Option<PathBuf>,

    /// Param to differentiate, by name or id; all params when omitted.
    #[arg(long)]
    pub theta: Option<String>,

    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// surrogate or algorithm1.
    #[arg(long, default_value = "surrogate")]
    pub method: Method,

    /// none, const:<v>, avg:<decay>, or default (the example's own baselines).
    #[arg(long, default_value = "default")]
    pub baseline: String,

    /// Compare against the exact gradient and report z-scores.
    #[arg(long)]
    pub compare_oracle: bool,

    /// Compare the two gradient methods, and score-function against pathwise
    /// estimates when a Gaussian node can be reparameterized.
    #[arg(long)]
    pub compare_methods: bool,

    /// Report per-component sample variance, plus the exact variance when enumerable.
    #[arg(long)]
    pub variance_report: bool,

    /// Gaussian node to reparameterize before estimating.
    #[arg(long)]
    pub reparam: Option<String>,

    /// File with a direction vector; reports the Hessian-vector product estimate.
    #[arg(long)]
    pub hvp: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Worker threads; defaults to the SCG_THREADS variable, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// What a run prints and how it exits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn error(msg: impl std::fmt::Display) -> Self {
        Outcome { code: EXIT_ERROR, stdout: String::new(), stderr: format!("error: {msg}\n") }
    }
}

type Components = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Serialize)]
pub struct OracleSection {
    pub gradient: Components,
    pub z: Components,
    pub band: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathwiseSection {
    pub node: String,
    pub score_function: EstimateSection,
    pub pathwise: EstimateSection,
    /// `(sf - pd) / sqrt(se_sf^2 + se_pd^2)` per component.
    pub joint_z: Components,
    pub within_band: bool,
    pub pathwise_variance_lower: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodsSection {
    pub surrogate: Components,
    pub algorithm1: Components,
    pub max_abs_diff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sf_vs_pd: Option<PathwiseSection>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateSection {
    pub mean: Components,
    pub stderr: Components,
    pub variance: Components,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceSection {
    pub sample: Components,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<Components>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HvpSection {
    pub theta: String,
    pub mean: serde_json::Value,
    pub stderr: serde_json::Value,
}

/// The full report. Every field except `timestamp` is a function of the
/// arguments alone.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub graph: String,
    pub method: String,
    pub baseline: String,
    pub seed: u64,
    pub n: usize,
    pub mean: Components,
    pub stderr: Components,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<MethodsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hvp: Option<HvpSection>,
    pub timestamp: u64,
}

/// Parses `args` (program name first) and runs.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code: EXIT_ERROR, stdout: String::new(), stderr: text }
            } else {
                Outcome { code: EXIT_OK, stdout: text, stderr: String::new() }
            };
        }
    };
    if cli.list {
        let mut out = String::new();
        for name in BUILTIN_NAMES {
            let desc = builtin(name).map(|ex| ex.description).unwrap_or_default();
            out.push_str(&format!("{name:16} {desc}\n"));
        }
        return Outcome { code: EXIT_OK, stdout: out, stderr: String::new() };
    }
    match execute(&cli) {
        Ok(report) => {
            let stdout = match cli.format {
                Format::Json => match serde_json::to_string_pretty(&report) {
                    Ok(s) => s + "\n",
                    Err(e) => return Outcome::error(e),
                },
                Format::Text => render_text(&report),
            };
            let failed = report.oracle.as_ref().is_some_and(|o| !o.within_band);
            Outcome { code: if failed { EXIT_BAND } else { EXIT_OK }, stdout, stderr: String::new() }
        }
        Err(e) => Outcome::error(e),
    }
}

struct Problem {
    name: String,
    graph: Graph,
    inputs: Inputs,
    baselines: BaselineSpec,
    reparam: Option<NodeId>,
}

fn load(cli: &Cli) -> Result<Problem> {
    let mut p = match (&cli.graph, &cli.builtin) {
        (Some(path), _) => {
            let (graph, inputs) = load_graph(path).map_err(|e| file_error(e, path))?;
            Problem { name: path.display().to_string(), graph, inputs, baselines: BaselineSpec::none(), reparam: None }
        }
        (None, Some(name)) => {
            let ex = builtin(name)?;
            Problem { name: ex.name.to_string(), graph: ex.graph, inputs: ex.inputs, baselines: ex.baselines, reparam: ex.reparam }
        }
        (None, None) => return Err(Error::InvalidArgument("one of --graph or --builtin is required".into())),
    };
    if let Some(path) = &cli.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| file_error(e.into(), path))?;
        let overrides = inputs_from_json(&p.graph, &text)?;
        p.inputs.extend(overrides);
    }
    Ok(p)
}

fn file_error(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(source) => Error::File { path: path.display().to_string(), source },
        other => other,
    }
}

fn parse_baseline(text: &str, graph: &Graph, default: &BaselineSpec) -> Result<BaselineSpec> {
    let bad = || Error::InvalidArgument(format!("bad baseline {text:?}; expected none, const:<v>, avg:<decay> or default"));
    let number = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
    match text.split_once(':') {
        None if text == "none" => Ok(BaselineSpec::none()),
        None if text == "default" => Ok(default.clone()),
        Some(("const", v)) => BaselineSpec::uniform(graph, Baseline::Constant(number(v)?)),
        Some(("avg", d)) => {
            let decay = number(d)?;
            if !(0.0..1.0).contains(&decay) {
                return Err(Error::InvalidArgument(format!("decay must lie in [0, 1), got {decay}")));
            }
            BaselineSpec::uniform(graph, Baseline::moving_average(decay))
        }
        _ => Err(bad()),
    }
}

fn components(graph: &Graph, values: &BTreeMap<NodeId, Value>) -> Components {
    values.iter().map(|(&id, v)| (graph.label(id), v.to_json())).collect()
}

fn pick(graph: &Graph, est: &GradientEstimate, f: impl Fn(&ParamEstimate) -> Option<&Value>) -> BTreeMap<NodeId, Value> {
    est.params
        .iter()
        .map(|(&id, p)| (id, f(p).cloned().unwrap_or_else(|| Value::zeros(&graph.node(id).shape))))
        .collect()
}

/// Runs `estimate`, in batches when a moving average must adapt, and pools
/// the batch statistics into one estimate.
fn run_estimate(
    graph: &Graph,
    inputs: &Inputs,
    params: &[NodeId],
    cfg: &EstimateConfig,
    baselines: &BaselineSpec,
) -> Result<GradientEstimate> {
    let mut baselines = baselines.clone();
    if !baselines.has_moving_average() || cfg.n_samples <= AVG_BATCH {
        return estimate(graph, inputs, params, cfg, &mut baselines);
    }
    let tag = baselines.tag();
    let mut batches = Vec::new();
    let mut done = 0;
    while done < cfg.n_samples {
        let n = AVG_BATCH.min(cfg.n_samples - done);
        let mut batch_cfg = cfg.clone();
        batch_cfg.n_samples = n;
        batch_cfg.first_sample = cfg.first_sample + done as u64;
        batches.push(estimate(graph, inputs, params, &batch_cfg, &mut baselines)?);
        done += n;
    }
    let total = cfg.n_samples as f64;
    let mut out = BTreeMap::new();
    for &p in params {
        let shape = &graph.node(p).shape;
        let mut mean = Value::zeros(shape);
        for b in &batches {
            mean.add_scaled(&b.params[&p].mean, b.n_samples as f64 / total);
        }
        // Pooled sample variance, and the stderr of a weighted mean of
        // independent batch means.
        let mut ss = Value::zeros(shape);
        let mut mean_var = Value::zeros(shape);
        for b in &batches {
            let e = &b.params[&p];
            let nb = b.n_samples as f64;
            if let Some(var) = &e.variance {
                ss.add_scaled(var, nb - 1.0);
                mean_var.add_scaled(var, nb / (total * total));
            }
            ss.add_assign(&e.mean.zip_map(&mean, |a, m| nb * (a - m) * (a - m)));
        }
        let variance = ss.scaled(1.0 / (total - 1.0));
        let stderr = mean_var.map(f64::sqrt);
        out.insert(p, ParamEstimate { mean, variance: Some(variance), stderr: Some(stderr) });
    }
    Ok(GradientEstimate { params: out, n_samples: cfg.n_samples, method: cfg.method, baseline: tag, seed: cfg.seed })
}

fn z_scores(graph: &Graph, mean: &BTreeMap<NodeId, Value>, target: &BTreeMap<NodeId, Value>, se: &BTreeMap<NodeId, Value>) -> (Components, bool) {
    let mut ok = true;
    let mut out = Components::new();
    for (&id, m) in mean {
        let z: Vec<f64> = m
            .data()
            .iter()
            .zip(target[&id].data())
            .zip(se[&id].data())
            .map(|((&a, &b), &s)| {
                let d = a - b;
                if s > 0.0 {
                    d / s
                } else if d.abs() <= 1e-9 * b.abs().max(1.0) {
                    0.0
                } else {
                    d.signum() * f64::INFINITY
                }
            })
            .collect();
        ok &= z.iter().all(|z| z.abs() <= Z_BAND);
        let z = Value::new(m.shape().to_vec(), z).expect("same shape");
        out.insert(graph.label(id), z.to_json());
    }
    (out, ok)
}

fn section(graph: &Graph, est: &GradientEstimate) -> EstimateSection {
    EstimateSection {
        mean: components(graph, &pick(graph, est, |p| Some(&p.mean))),
        stderr: components(graph, &pick(graph, est, |p| p.stderr.as_ref())),
        variance: components(graph, &pick(graph, est, |p| p.variance.as_ref())),
    }
}

fn execute(cli: &Cli) -> Result<Report> {
    let mut p = load(cli)?;
    let baselines = parse_baseline(&cli.baseline, &p.graph, &p.baselines)?;
    let original = p.graph.clone();
    let reparam = match &cli.reparam {
        Some(key) => Some(p.graph.resolve(key)?),
        None => None,
    };
    // Example baselines name stochastic nodes of the original graph, so a
    // reparameterized run drops them unless the user chose a uniform kind.
    let mut main_baselines = baselines.clone();
    if let Some(node) = reparam {
        p.graph = reparameterize(&p.graph, node)?;
        main_baselines = parse_baseline(&cli.baseline, &p.graph, &BaselineSpec::none())?;
    }
    let graph = &p.graph;
    let params = match &cli.theta {
        Some(key) => {
            let id = graph.resolve(key)?;
            graph.check_param(id)?;
            vec![id]
        }
        None => graph.params().to_vec(),
    };
    let mut cfg = EstimateConfig::new(cli.samples, cli.seed).method(cli.method);
    cfg.threads = cli.threads;

    let est = run_estimate(graph, &p.inputs, &params, &cfg, &main_baselines)?;
    let mean = pick(graph, &est, |e| Some(&e.mean));
    let stderr = pick(graph, &est, |e| e.stderr.as_ref());

    let oracle = if cli.compare_oracle {
        let exact = exact_gradients(graph, &p.inputs, &params, &SupportDescriptor::default())?;
        let (z, within_band) = z_scores(graph, &mean, &exact, &stderr);
        Some(OracleSection { gradient: components(graph, &exact), z, band: Z_BAND, within_band })
    } else {
        None
    };

    let methods = if cli.compare_methods {
        let mut runs = BTreeMap::new();
        for method in [Method::Surrogate, Method::Algorithm1] {
            let run = run_estimate(graph, &p.inputs, &params, &cfg.clone().method(method), &main_baselines)?;
            runs.insert(method.tag(), pick(graph, &run, |e| Some(&e.mean)));
        }
        let max_abs_diff = params
            .iter()
            .map(|id| runs["surrogate"][id].max_abs_diff(&runs["algorithm1"][id]))
            .fold(0.0, f64::max);
        let sf_vs_pd = match reparam.or(p.reparam) {
            Some(node) => Some(sf_vs_pd(cli, &original, &p.inputs, &params, node, &cfg, &baselines)?),
            None => None,
        };
        Some(MethodsSection {
            surrogate: components(graph, &runs["surrogate"]),
            algorithm1: components(graph, &runs["algorithm1"]),
            max_abs_diff,
            sf_vs_pd,
        })
    } else {
        None
    };

    let variance = if cli.variance_report {
        let sample = components(graph, &pick(graph, &est, |e| e.variance.as_ref()));
        let exact = exact_variance(graph, &p.inputs, &params, &main_baselines, cli.method);
        Some(VarianceSection { sample, exact })
    } else {
        None
    };

    let hvp = match &cli.hvp {
        Some(path) => Some(hvp_section(graph, &p.inputs, &params, path, &cfg)?),
        None => None,
    };

    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok(Report {
        graph: p.name,
        method: cli.method.tag().into(),
        baseline: est.baseline.clone(),
        seed: cli.seed,
        n: cli.samples,
        mean: components(graph, &mean),
        stderr: components(graph, &stderr),
        oracle,
        methods,
        variance,
        hvp,
        timestamp,
    })
}

fn sf_vs_pd(
    cli: &Cli,
    graph: &Graph,
    inputs: &Inputs,
    params: &[NodeId],
    node: NodeId,
    cfg: &EstimateConfig,
    baselines: &BaselineSpec,
) -> Result<PathwiseSection> {
    let sf = run_estimate(graph, inputs, params, cfg, baselines)?;
    let pd_graph = reparameterize(graph, node)?;
    let pd_baselines = parse_baseline(&cli.baseline, &pd_graph, &BaselineSpec::none())?;
    let pd = run_estimate(&pd_graph, inputs, params, cfg, &pd_baselines)?;

    let sf_mean = pick(graph, &sf, |e| Some(&e.mean));
    let pd_mean = pick(graph, &pd, |e| Some(&e.mean));
    let sf_se = pick(graph, &sf, |e| e.stderr.as_ref());
    let pd_se = pick(graph, &pd, |e| e.stderr.as_ref());
    let joint: BTreeMap<NodeId, Value> =
        sf_se.iter().map(|(id, a)| (*id, a.zip_map(&pd_se[id], |x, y| x.hypot(y)))).collect();
    let (joint_z, within_band) = z_scores(graph, &sf_mean, &pd_mean, &joint);
    let sf_var = pick(graph, &sf, |e| e.variance.as_ref());
    let pd_var = pick(graph, &pd, |e| e.variance.as_ref());
    let pathwise_variance_lower = params
        .iter()
        .all(|id| pd_var[id].data().iter().zip(sf_var[id].data()).all(|(pd, sf)| pd < sf));
    Ok(PathwiseSection {
        node: graph.label(node),
        score_function: section(graph, &sf),
        pathwise: section(graph, &pd),
        joint_z,
        within_band,
        pathwise_variance_lower,
    })
}

/// Exact per-trace variance, when the graph enumerates and the baselines are fixed.
fn exact_variance(
    graph: &Graph,
    inputs: &Inputs,
    params: &[NodeId],
    baselines: &BaselineSpec,
    method: Method,
) -> Option<Components> {
    if baselines.has_moving_average() {
        return None;
    }
    let mut out = BTreeMap::new();
    for &p in params {
        let m = exact_estimator_moments(graph, inputs, p, baselines, method).ok()?;
        out.insert(p, m.variance);
    }
    Some(components(graph, &out))
}

fn hvp_section(graph: &Graph, inputs: &Inputs, params: &[NodeId], path: &Path, cfg: &EstimateConfig) -> Result<HvpSection> {
    let [theta] = params else {
        return Err(Error::InvalidArgument("--hvp needs a single param; pick one with --theta".into()));
    };
    let v = load_value(path).map_err(|e| file_error(e, path))?;
    let shape = graph.node(*theta).shape.clone();
    let mut sum = Value::zeros(&shape);
    let mut sum_sq = Value::zeros(&shape);
    for i in 0..cfg.n_samples {
        let trace = sample_trace(graph, inputs, cfg.seed, cfg.first_sample + i as u64)?;
        let h = hessian_vector_product(graph, &trace, *theta, &v)?;
        sum.add_assign(&h);
        sum_sq.add_assign(&h.map(|x| x * x));
    }
    let n = cfg.n_samples as f64;
    let mean = sum.scaled(1.0 / n);
    let stderr = if cfg.n_samples > 1 {
        sum_sq.zip_map(&mean, |s, m| ((s - n * m * m).max(0.0) / (n - 1.0) / n).sqrt())
    } else {
        Value::zeros(&shape)
    };
    Ok(HvpSection { theta: graph.label(*theta), mean: mean.to_json(), stderr: stderr.to_json() })
}

fn fmt_json(v: &serde_json::Value) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn render_text(r: &Report) -> String {
    let mut out = format!(
        "graph: {}\nmethod: {}  baseline: {}  samples: {}  seed: {}\n",
        r.graph, r.method, r.baseline, r.n, r.seed
    );
    for (label, mean) in &r.mean {
        out.push_str(&format!("param {label}\n  mean   {}\n  stderr {}\n", fmt_json(mean), fmt_json(&r.stderr[label])));
        if let Some(o) = &r.oracle {
            out.push_str(&format!("  oracle {}\n  z      {}\n", fmt_json(&o.gradient[label]), fmt_json(&o.z[label])));
        }
        if let Some(v) = &r.variance {
            out.push_str(&format!("  sample variance {}\n", fmt_json(&v.sample[label])));
            if let Some(exact) = &v.exact {
                out.push_str(&format!("  exact variance  {}\n", fmt_json(&exact[label])));
            }
        }
    }
    if let Some(o) = &r.oracle {
        let verdict = if o.within_band { "all within" } else { "OUTSIDE" };
        out.push_str(&format!("oracle: {verdict} +-{} standard errors\n", o.band));
    }
    if let Some(m) = &r.methods {
        out.push_str(&format!("methods: surrogate vs algorithm1 max abs diff {:e}\n", m.max_abs_diff));
        if let Some(s) = &m.sf_vs_pd {
            out.push_str(&format!("score function vs pathwise (reparameterized {}):\n", s.node));
            for label in s.score_function.mean.keys() {
                out.push_str(&format!(
                    "  {label}\n    sf mean {}  variance {}\n    pd mean {}  variance {}\n    joint z {}\n",
                    fmt_json(&s.score_function.mean[label]),
                    fmt_json(&s.score_function.variance[label]),
                    fmt_json(&s.pathwise.mean[label]),
                    fmt_json(&s.pathwise.variance[label]),
                    fmt_json(&s.joint_z[label]),
                ));
            }
            out.push_str(&format!(
                "  means agree within +-{Z_BAND} joint standard errors: {}\n  pathwise variance lower: {}\n",
                s.within_band, s.pathwise_variance_lower
            ));
        }
    }
    if let Some(h) = &r.hvp {
        out.push_str(&format!("hvp {}\n  mean   {}\n  stderr {}\n", h.theta, fmt_json(&h.mean), fmt_json(&h.stderr)));
    }
    out
}
