//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scg::oracle::{enumerate, mm_bound_gap, SupportDescriptor};
use scg::{
    builtin, estimate, exact_estimator_moments, exact_gradient, grad_algorithm1, grad_surrogate,
    hessian_vector_product, per_trace_gradient, reparameterize, sample_trace, Baseline, BaselineSpec, Builtin,
    DistributionSpec, Error, EstimateConfig, Graph, GraphBuilder, Inputs, Method, NodeId, Value, BUILTIN_NAMES,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T>(r: scg::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

const FINITE_BUILTINS: [&str; 9] =
    ["fig1-1", "fig1-2", "fig1-3", "fig1-4", "fig1-5", "bernoulli-chain", "nvil-toy", "mdp-toy", "pomdp-toy"];
const METHODS: [Method; 2] = [Method::Surrogate, Method::Algorithm1];

fn main() {
    let criteria: [Criterion; 9] = [
        ("exact estimator mean equals exact gradient", Duration::from_secs(10), exact_mean_identity),
        ("surrogate and reverse pass agree per trace", Duration::from_secs(5), method_equivalence),
        ("baselines keep the mean and cut variance", Duration::from_secs(5), baselines),
        ("score function vs pathwise on gauss-reparam", Duration::from_secs(30), sf_vs_pd),
        ("differentiability condition enforcement", Duration::from_secs(30), condition_enforcement),
        ("Hessian-vector products", Duration::from_secs(30), hvp),
        ("majorization bound on random graphs", Duration::from_secs(30), mm_bound),
        ("autodiff kernel and distribution identities", Duration::from_secs(30), kernel_identities),
        ("reproducibility across thread counts", Duration::from_secs(30), reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag} {name} [{:.2}s] {detail}", i + 1, elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}

fn exact_mean_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in FINITE_BUILTINS {
        let ex = builtin(name).unwrap();
        let exact = ok(ex.reference_gradients())?;
        for method in METHODS {
            for baselines in [BaselineSpec::none(), ex.baselines.clone()] {
                for (&p, g) in &exact {
                    let m = ok(exact_estimator_moments(&ex.graph, &ex.inputs, p, &baselines, method))?;
                    let d = m.mean.max_abs_diff(g);
                    worst = worst.max(d);
                    ensure!(d <= 1e-10, "{name} {} {}: off by {d:e}", method.tag(), ex.graph.label(p));
                }
            }
        }
    }
    Ok(format!("{} builtins, max abs diff {worst:.1e}", FINITE_BUILTINS.len()))
}

fn method_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut traces = 0;
    for name in BUILTIN_NAMES {
        let ex = builtin(name).unwrap();
        let params = ex.graph.params().to_vec();
        for i in 0..100 {
            let trace = ok(sample_trace(&ex.graph, &ex.inputs, 2024, i))?;
            let a = ok(per_trace_gradient(&ex.graph, &trace, &ex.baselines, &params, Method::Surrogate))?;
            let b = ok(per_trace_gradient(&ex.graph, &trace, &ex.baselines, &params, Method::Algorithm1))?;
            for p in &params {
                let d = a[p].max_abs_diff(&b[p]);
                worst = worst.max(d);
                ensure!(d <= 1e-12, "{name} trace {i} {}: off by {d:e}", ex.graph.label(*p));
            }
            traces += 1;
        }
    }
    // The single-param entry points take the same route.
    let ex = builtin("fig1-4").unwrap();
    let theta = ex.graph.params()[0];
    let trace = ok(sample_trace(&ex.graph, &ex.inputs, 1, 0))?;
    let none = BaselineSpec::none();
    let d = ok(grad_surrogate(&ex.graph, &trace, &none, theta))?
        .max_abs_diff(&ok(grad_algorithm1(&ex.graph, &trace, &none, theta))?);
    ensure!(d <= 1e-12, "single-param entry points differ by {d:e}");
    Ok(format!("{traces} traces, max abs diff {worst:.1e}"))
}

fn baselines() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut specs = 0;
    for name in ["fig1-2", "fig1-4", "fig1-5", "bernoulli-chain", "mdp-toy", "nvil-toy"] {
        let ex = builtin(name).unwrap();
        let g = &ex.graph;
        let mut candidates: Vec<BaselineSpec> = [-3.0, -1.0, 0.0, 1.5, 10.0]
            .into_iter()
            .map(|c| BaselineSpec::uniform(g, Baseline::Constant(c)).unwrap())
            .collect();
        candidates.push(BaselineSpec::uniform(g, Baseline::MovingAverage { decay: 0.9, value: 0.7 }).unwrap());
        candidates.push(ex.baselines.clone());
        if name == "fig1-5" {
            let (x1, x2) = (g.find("x1").unwrap(), g.find("x2").unwrap());
            let mut b = BaselineSpec::none();
            b.with_function(g, x2, &[x1], |a| 1.0 - 4.0 * a[0].item()).unwrap();
            candidates.push(b);
        }
        if name == "bernoulli-chain" {
            let (x1, x2, x3) = (g.find("x1").unwrap(), g.find("x2").unwrap(), g.find("x3").unwrap());
            let mut b = BaselineSpec::none();
            b.with_function(g, x3, &[x1, x2], |a| 2.0 * a[0].item() - a[1].item()).unwrap();
            b.set(x2, Baseline::Constant(-1.0));
            candidates.push(b);
            ensure!(
                matches!(b_scope_violation(g, x2, x3), Err(Error::BaselineScope { .. })),
                "baseline reading a downstream node was accepted"
            );
        }
        for &p in g.params() {
            let reference = ok(exact_estimator_moments(g, &ex.inputs, p, &BaselineSpec::none(), Method::Surrogate))?;
            for spec in &candidates {
                for method in METHODS {
                    let m = ok(exact_estimator_moments(g, &ex.inputs, p, spec, method))?;
                    let d = m.mean.max_abs_diff(&reference.mean);
                    worst = worst.max(d);
                    ensure!(d <= 1e-10, "{name} {} baseline {}: mean moved by {d:e}", g.label(p), spec.tag());
                    specs += 1;
                }
            }
        }
    }

    let (g, inputs) = shifted_cost();
    let x = g.find("x").unwrap();
    let theta = g.params()[0];
    let plain = ok(exact_estimator_moments(&g, &inputs, theta, &BaselineSpec::none(), Method::Surrogate))?;
    let mut b = BaselineSpec::none();
    b.set(x, Baseline::Constant(100.0));
    let shifted = ok(exact_estimator_moments(&g, &inputs, theta, &b, Method::Surrogate))?;
    let ratio = plain.variance.item() / shifted.variance.item();
    ensure!(ratio > 1e3, "variance ratio {ratio}");
    ensure!((plain.mean.item() - shifted.mean.item()).abs() <= 1e-10, "shifted-cost mean moved");
    Ok(format!(
        "{specs} baseline/param/method checks, max diff {worst:.1e}; shifted cost variance {:.4} -> {:.4} (x{ratio:.0})",
        plain.variance.item(),
        shifted.variance.item()
    ))
}

fn b_scope_violation(g: &Graph, node: NodeId, downstream: NodeId) -> scg::Result<()> {
    BaselineSpec::none().with_function(g, node, &[downstream], |_| 0.0).map(|_| ())
}

/// `x ~ Bernoulli(0.5)` via a zero logit, cost `100 + x`.
fn shifted_cost() -> (Graph, Inputs) {
    let mut b = GraphBuilder::new();
    let theta = b.param("theta", &[]);
    let x = b.stoch(DistributionSpec::BernoulliLogit, &[theta]);
    b.set_name(x, "x");
    b.cost(Builtin::Offset(100.0).spec(), &[x]);
    (b.freeze().unwrap(), Inputs::from([(theta, Value::scalar(0.0))]))
}

fn sf_vs_pd() -> Outcome {
    let ex = builtin("gauss-reparam").unwrap();
    let theta = ex.graph.params()[0];
    let oracle = ok(exact_gradient(&ex.graph, &ex.inputs, theta, &SupportDescriptor::default()))?.item();
    ensure!((oracle - 2.0).abs() < 1e-10, "quadrature oracle {oracle}");
    let pd_graph = ok(reparameterize(&ex.graph, ex.reparam.unwrap()))?;
    let cfg = EstimateConfig::new(100_000, 11);
    let sf = ok(estimate(&ex.graph, &ex.inputs, &[theta], &cfg, &mut BaselineSpec::none()))?;
    let pd = ok(estimate(&pd_graph, &ex.inputs, &[theta], &cfg, &mut BaselineSpec::none()))?;
    let summary = |e: &scg::GradientEstimate| {
        let p = &e.params[&theta];
        (p.mean.item(), p.stderr.as_ref().unwrap().item(), p.variance.as_ref().unwrap().item())
    };
    let (sf_mean, sf_se, sf_var) = summary(&sf);
    let (pd_mean, pd_se, pd_var) = summary(&pd);
    ensure!((sf_mean - oracle).abs() <= 4.0 * sf_se, "SF mean {sf_mean} vs {oracle}, se {sf_se}");
    ensure!((pd_mean - oracle).abs() <= 4.0 * pd_se, "PD mean {pd_mean} vs {oracle}, se {pd_se}");
    ensure!(pd_var < sf_var, "PD variance {pd_var} not below SF variance {sf_var}");
    Ok(format!("oracle {oracle:.6}; SF {sf_mean:.4}±{sf_se:.4} var {sf_var:.3}; PD {pd_mean:.4}±{pd_se:.4} var {pd_var:.3}"))
}

fn condition_enforcement() -> Outcome {
    // step on the deterministic path from theta
    let mut b = GraphBuilder::new();
    let theta = b.param("theta", &[]);
    let h = b.det(Builtin::Step.spec(), &[theta]);
    let x = b.stoch(DistributionSpec::BernoulliLogit, &[h]);
    b.cost(Builtin::Square.spec(), &[x]);
    let blocked = b.freeze().unwrap();
    let report = ok(blocked.validate_differentiability(theta))?;
    ensure!(!report.passes(), "step on a deterministic path was accepted");
    let inputs = Inputs::from([(theta, Value::scalar(0.3))]);
    let rejected = estimate(&blocked, &inputs, &[theta], &EstimateConfig::new(10, 0), &mut BaselineSpec::none());
    ensure!(matches!(rejected, Err(Error::ConditionViolated { .. })), "estimate ran on an invalid graph");

    // the same op applied to a sampled value
    let mut b = GraphBuilder::new();
    let theta = b.param("theta", &[4]);
    let x = b.stoch(DistributionSpec::CategoricalLogits, &[theta]);
    let shifted = b.det(Builtin::Offset(-1.5).spec(), &[x]);
    b.cost(Builtin::Step.spec(), &[shifted]);
    let allowed = b.freeze().unwrap();
    ensure!(ok(allowed.validate_differentiability(theta))?.passes(), "step behind a sample was rejected");
    let inputs = Inputs::from([(theta, Value::vector(vec![0.3, -0.1, 0.2, -0.5]))]);
    let oracle = ok(exact_gradient(&allowed, &inputs, theta, &SupportDescriptor::default()))?;
    let est = ok(estimate(&allowed, &inputs, &[theta], &EstimateConfig::new(40_000, 5), &mut BaselineSpec::none()))?;
    let p = &est.params[&theta];
    let se = p.stderr.as_ref().unwrap();
    let mut worst_z: f64 = 0.0;
    for ((m, o), s) in p.mean.data().iter().zip(oracle.data()).zip(se.data()) {
        worst_z = worst_z.max((m - o).abs() / s);
    }
    ensure!(worst_z <= 4.0, "estimate off by {worst_z:.2} standard errors");
    Ok(format!("{} violation(s) reported; discontinuous cost max |z| = {worst_z:.2}", report.violations.len()))
}

fn with_param(inputs: &Inputs, theta: NodeId, value: Value) -> Inputs {
    let mut i = inputs.clone();
    i.insert(theta, value);
    i
}

fn random_like(like: &Value, rng: &mut impl Rng) -> Value {
    Value::new(like.shape().to_vec(), (0..like.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_err(a: &Value, b: &Value) -> f64 {
    let scale = b.data().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-8);
    a.max_abs_diff(b) / scale
}

fn hvp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let ex = builtin("nn2layer").unwrap();
    let g = &ex.graph;
    let grad_at = |inputs: &Inputs, theta: NodeId| -> scg::Result<Value> {
        let trace = sample_trace(g, inputs, 0, 0)?;
        grad_surrogate(g, &trace, &BaselineSpec::none(), theta)
    };
    for &theta in g.params() {
        let base = ex.inputs[&theta].clone();
        for _ in 0..10 {
            let v = random_like(&base, &mut rng);
            let trace = ok(sample_trace(g, &ex.inputs, 0, 0))?;
            let hv = ok(hessian_vector_product(g, &trace, theta, &v))?;
            let h = 1e-5;
            let mut up = base.clone();
            up.add_scaled(&v, h);
            let mut down = base.clone();
            down.add_scaled(&v, -h);
            let mut fd = ok(grad_at(&with_param(&ex.inputs, theta, up), theta))?;
            fd.add_scaled(&ok(grad_at(&with_param(&ex.inputs, theta, down), theta))?, -1.0);
            let fd = fd.scaled(0.5 / h);
            let e = rel_err(&hv, &fd);
            worst = worst.max(e);
            ensure!(e <= 1e-4, "nn2layer {}: rel err {e:e}", g.label(theta));
        }
    }
    let deterministic_worst = worst;

    // Stochastic graphs: the enumeration-expected estimate against finite
    // differences of the exact gradient.
    let support = SupportDescriptor::default();
    for name in ["fig1-1", "fig1-2", "fig1-4", "fig1-5", "bernoulli-chain"] {
        let ex = builtin(name).unwrap();
        let g = &ex.graph;
        let theta = g.params()[0];
        let base = ex.inputs[&theta].clone();
        for _ in 0..3 {
            let v = random_like(&base, &mut rng);
            let mut expected = Value::zeros(base.shape());
            for c in ok(enumerate(g, &ex.inputs, &support))? {
                expected.add_scaled(&ok(hessian_vector_product(g, &c.trace, theta, &v))?, c.weight);
            }
            let h = 1e-5;
            let mut up = base.clone();
            up.add_scaled(&v, h);
            let mut down = base.clone();
            down.add_scaled(&v, -h);
            let mut fd = ok(exact_gradient(g, &with_param(&ex.inputs, theta, up), theta, &support))?;
            fd.add_scaled(&ok(exact_gradient(g, &with_param(&ex.inputs, theta, down), theta, &support))?, -1.0);
            let fd = fd.scaled(0.5 / h);
            let e = rel_err(&expected, &fd);
            worst = worst.max(e);
            ensure!(e <= 1e-4, "{name}: expected HVP {expected:?} vs FD {fd:?}");
        }
    }
    Ok(format!("deterministic max rel err {deterministic_worst:.1e}; stochastic max rel err {worst:.1e}"))
}

/// A random graph of discrete nodes whose logits depend on `theta` and on
/// earlier samples, with nonpositive costs that read samples only.
fn random_negative_cost_graph(rng: &mut impl Rng) -> (Graph, Inputs, NodeId) {
    let mut b = GraphBuilder::new();
    let theta = b.param("theta", &[]);
    let mut inputs = Inputs::from([(theta, Value::scalar(rng.gen_range(-1.5..1.5)))]);
    let mut samples: Vec<NodeId> = Vec::new();
    let n = rng.gen_range(1..=4);
    for _ in 0..n {
        let categorical = rng.gen_bool(0.35);
        let scaled = b.det(Builtin::Scale(rng.gen_range(-2.0..2.0)).spec(), &[theta]);
        let mut logit = if categorical {
            let spread = b.input("spread", &[3]);
            inputs.insert(spread, Value::vector((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()));
            let wide = b.det(Builtin::Broadcast(vec![3]).spec(), &[scaled]);
            b.det(Builtin::Mul.spec(), &[wide, spread])
        } else {
            scaled
        };
        if let Some(&parent) = samples.last().filter(|_| rng.gen_bool(0.7)) {
            let push = b.det(Builtin::Scale(rng.gen_range(-1.5..1.5)).spec(), &[parent]);
            logit = b.det(Builtin::Add.spec(), &[logit, push]);
        }
        let dist = if categorical { DistributionSpec::CategoricalLogits } else { DistributionSpec::BernoulliLogit };
        let x = b.stoch(dist, &[logit]);
        let scaled = b.det(Builtin::Scale(rng.gen_range(0.2..2.0)).spec(), &[x]);
        let shifted = b.det(Builtin::Offset(rng.gen_range(-1.0..1.0)).spec(), &[scaled]);
        let sq = b.det(Builtin::Square.spec(), &[shifted]);
        b.cost(Builtin::Neg.spec(), &[sq]);
        samples.push(x);
    }
    (b.freeze().unwrap(), inputs, theta)
}

fn mm_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst_violation, mut worst_equal, mut min_gap) = (f64::NEG_INFINITY, 0.0f64, f64::INFINITY);
    for i in 0..100 {
        let (g, inputs, theta) = random_negative_cost_graph(&mut rng);
        let old = Value::scalar(rng.gen_range(-2.0..2.0));
        let new = Value::scalar(rng.gen_range(-2.0..2.0));
        let bound = ok(mm_bound_gap(&g, &inputs, theta, &old, &new))?;
        worst_violation = worst_violation.max(bound.lhs - bound.rhs);
        min_gap = min_gap.min(bound.gap());
        ensure!(bound.holds(1e-12), "graph {i}: lhs {} > rhs {}", bound.lhs, bound.rhs);
        let same = ok(mm_bound_gap(&g, &inputs, theta, &old, &old))?;
        worst_equal = worst_equal.max((same.lhs - same.rhs).abs());
        ensure!((same.lhs - same.rhs).abs() <= 1e-12, "graph {i}: no equality at theta_new = theta_old");
    }
    Ok(format!("100 graphs, min gap {min_gap:.2e}, max equality error {worst_equal:.1e}"))
}

fn kernel_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ops = 0;
    for op in Builtin::catalogue() {
        for point in 0..10 {
            let args = common::random_args(&op, &mut rng);
            let excess = common::vjp_fd_excess(&op, &args, &mut rng, 1e-5, 1e-7);
            ensure!(excess <= 0.0, "{} at point {point}: vjp off by {excess:e} beyond tolerance", scg::Operator::name(&op));
        }
        ops += 1;
    }

    let mut dists = 0;
    for _ in 0..20 {
        let logits = Value::vector((0..4).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let probs = softmax(&logits);
        let bern = Value::vector((0..3).map(|_| rng.gen_range(0.05..0.95)).collect());
        let cases: Vec<(DistributionSpec, Vec<Value>)> = vec![
            (DistributionSpec::Bernoulli, vec![bern.clone()]),
            (DistributionSpec::BernoulliLogit, vec![logits.clone()]),
            (DistributionSpec::Categorical, vec![probs]),
            (DistributionSpec::CategoricalLogits, vec![logits.clone()]),
        ];
        for (dist, params) in cases {
            let refs: Vec<&Value> = params.iter().collect();
            let support = ok(dist.support(&refs))?.unwrap();
            let total: f64 = support.iter().map(|(_, p)| p).sum();
            ensure!((total - 1.0).abs() < 1e-12, "{} mass {total}", dist.name());
            let mut mean_score = Value::zeros(params[0].shape());
            for (v, p) in &support {
                ensure!((ok(dist.log_prob(&refs, v))?.exp() - p).abs() < 1e-12, "{} log_prob vs support", dist.name());
                mean_score.add_scaled(ok(dist.score(&refs, v))?[0].as_ref().unwrap(), *p);
            }
            // Probability vectors live on the simplex, so only the component of
            // the mean score along sum-zero directions has to vanish.
            let centre = match dist {
                DistributionSpec::Categorical => mean_score.sum() / mean_score.len() as f64,
                _ => 0.0,
            };
            ensure!(
                mean_score.data().iter().all(|s| (s - centre).abs() < 1e-12),
                "{} mean score {mean_score:?}",
                dist.name()
            );
            dists += 1;
        }

        // Gaussians via Gauss-Hermite: unit mass and zero mean score.
        let (z, w) = scg::oracle::quadrature::standard_normal_rule(30);
        let mu = rng.gen_range(-2.0..2.0);
        let sigma: f64 = rng.gen_range(0.3..2.0);
        for (dist, scale) in [(DistributionSpec::Gaussian, sigma), (DistributionSpec::GaussianLogSigma, sigma.ln())] {
            let params = [Value::scalar(mu), Value::scalar(scale)];
            let refs: Vec<&Value> = params.iter().collect();
            let (mut mass, mut s_mu, mut s_scale) = (0.0, 0.0, 0.0);
            for (zi, wi) in z.iter().zip(&w) {
                let x = Value::scalar(mu + sigma * zi);
                // density times the Jacobian of x = mu + sigma z over the N(0,1) weight
                let density = ok(dist.log_prob(&refs, &x))?.exp();
                mass += wi * density * sigma * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * zi * zi).exp();
                let s = ok(dist.score(&refs, &x))?;
                s_mu += wi * s[0].as_ref().unwrap().item();
                s_scale += wi * s[1].as_ref().unwrap().item();
            }
            ensure!((mass - 1.0).abs() < 1e-10, "{} mass {mass}", dist.name());
            ensure!(s_mu.abs() < 1e-10 && s_scale.abs() < 1e-10, "{} mean score ({s_mu}, {s_scale})", dist.name());
            dists += 1;
        }
    }
    Ok(format!("{ops} ops x 10 points; {dists} distribution instances"))
}

fn softmax(v: &Value) -> Value {
    let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = v.map(|x| (x - max).exp());
    let total = e.sum();
    e.map(|x| x / total)
}

fn reproducibility() -> Outcome {
    let many = std::thread::available_parallelism().map_or(1, |n| n.get()).max(8);
    for name in ["fig1-5", "nvil-toy", "mdp-toy", "gauss-reparam", "nn2layer"] {
        let ex = builtin(name).unwrap();
        let params = ex.graph.params().to_vec();
        let mut runs: Vec<(scg::GradientEstimate, BaselineSpec)> = Vec::new();
        for threads in [1, many] {
            let mut b = if name == "fig1-5" {
                BaselineSpec::uniform(&ex.graph, Baseline::moving_average(0.9)).unwrap()
            } else {
                ex.baselines.clone()
            };
            let cfg = EstimateConfig::new(3_000, 99).threads(threads);
            let first = ok(estimate(&ex.graph, &ex.inputs, &params, &cfg, &mut b))?;
            // a second call sees the updated moving averages
            let second = ok(estimate(&ex.graph, &ex.inputs, &params, &cfg, &mut b))?;
            ensure!(name != "fig1-5" || first != second, "moving average did not update");
            runs.push((second, b));
        }
        ensure!(runs[0].0 == runs[1].0, "{name}: estimates differ between 1 and {many} threads");
        {
            let method = Method::Algorithm1;
            let cfg = EstimateConfig::new(1_000, 3).method(method);
            let a = ok(estimate(&ex.graph, &ex.inputs, &params, &cfg.clone().threads(1), &mut ex.baselines.clone()))?;
            let b = ok(estimate(&ex.graph, &ex.inputs, &params, &cfg.threads(many), &mut ex.baselines.clone()))?;
            ensure!(a == b, "{name}: {} estimates differ across thread counts", method.tag());
        }
    }
    Ok(format!("5 builtins bitwise identical at 1 and {many} threads"))
}
