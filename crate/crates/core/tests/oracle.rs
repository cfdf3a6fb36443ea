use std::collections::BTreeMap;

use scg::oracle::configuration_bound;
use scg::{
    builtin, enumerate, exact_estimator_moments, exact_expectation, exact_gradient, exact_gradients, optimal_baseline,
    Baseline, BaselineSpec, Builtin, DistributionSpec, Error, Graph, GraphBuilder, Inputs, Method, NodeId,
    SupportDescriptor, TableDist, Value,
};

const FINITE: [&str; 9] =
    ["fig1-1", "fig1-2", "fig1-3", "fig1-4", "fig1-5", "bernoulli-chain", "nvil-toy", "mdp-toy", "pomdp-toy"];

fn coin(dist: DistributionSpec) -> (Graph, NodeId) {
    let mut b = GraphBuilder::new();
    let theta = b.param("theta", &[]);
    let x = b.stoch(dist, &[theta]);
    b.cost(Builtin::Identity.spec(), &[x]);
    (b.freeze().unwrap(), theta)
}

#[test]
fn bernoulli_expectation_and_gradient() {
    let (g, theta) = coin(DistributionSpec::Bernoulli);
    let inputs: Inputs = [(theta, Value::scalar(0.3))].into();
    let sd = SupportDescriptor::default();
    assert!((exact_expectation(&g, &inputs, &sd).unwrap() - 0.3).abs() < 1e-15);
    assert!((exact_gradient(&g, &inputs, theta, &sd).unwrap().item() - 1.0).abs() < 1e-12);
}

#[test]
fn table_chain_matches_a_hand_sum() {
    // x1 ~ Bernoulli(0.4), x2 | x1 from a table, cost 2 x1 - 3 x2.
    let mut b = GraphBuilder::new();
    let p = b.input("p", &[]);
    let x1 = b.stoch(DistributionSpec::Bernoulli, &[p]);
    let table = TableDist::new(vec![2], vec![vec![0.8, 0.2], vec![0.35, 0.65]]).unwrap();
    let x2 = b.stoch(DistributionSpec::CategoricalTable(table), &[x1]);
    b.cost(Builtin::Scale(2.0).spec(), &[x1]);
    b.cost(Builtin::Scale(-3.0).spec(), &[x2]);
    let g = b.freeze().unwrap();
    let inputs: Inputs = [(p, Value::scalar(0.4))].into();
    let configs = enumerate(&g, &inputs, &SupportDescriptor::default()).unwrap();
    assert_eq!(configs.len(), 4);
    let hand = 0.6 * 0.8 * 0.0 + 0.6 * 0.2 * -3.0 + 0.4 * 0.35 * 2.0 + 0.4 * 0.65 * (2.0 - 3.0);
    assert!((exact_expectation(&g, &inputs, &SupportDescriptor::default()).unwrap() - hand).abs() < 1e-15);
    let total: f64 = configs.iter().map(|c| c.weight).sum();
    assert!((total - 1.0).abs() < 1e-15);
}

#[test]
fn zero_probability_outcomes_are_skipped() {
    let mut b = GraphBuilder::new();
    let p = b.input("p", &[3]);
    let x = b.stoch(DistributionSpec::Categorical, &[p]);
    b.cost(Builtin::Identity.spec(), &[x]);
    let g = b.freeze().unwrap();
    let inputs: Inputs = [(p, Value::vector(vec![0.5, 0.0, 0.5]))].into();
    let configs = enumerate(&g, &inputs, &SupportDescriptor::default()).unwrap();
    assert_eq!(configs.len(), 2);
    assert!(configs.iter().all(|c| c.weight > 0.0));
}

#[test]
fn quadrature_integrates_a_gaussian_square() {
    let ex = builtin("gauss-reparam").unwrap();
    let theta = ex.graph.resolve("theta").unwrap();
    let sd = SupportDescriptor::default();
    assert!((exact_expectation(&ex.graph, &ex.inputs, &sd).unwrap() - 2.0).abs() < 1e-12);
    assert!((exact_gradient(&ex.graph, &ex.inputs, theta, &sd).unwrap().item() - 2.0).abs() < 1e-12);
    let coarse = exact_expectation(&ex.graph, &ex.inputs, &SupportDescriptor::with_order(10)).unwrap();
    let fine = exact_expectation(&ex.graph, &ex.inputs, &SupportDescriptor::with_order(20)).unwrap();
    assert!((coarse - fine).abs() < 1e-8);
}

#[test]
fn exact_gradient_matches_finite_differences_of_the_expectation() {
    let sd = SupportDescriptor::default();
    let h = 1e-6;
    for name in FINITE.iter().chain(&["gauss-reparam"]) {
        let ex = builtin(name).unwrap();
        let params = ex.graph.params().to_vec();
        let grads = exact_gradients(&ex.graph, &ex.inputs, &params, &sd).unwrap();
        for p in params {
            let base = ex.inputs[&p].clone();
            for k in 0..base.data().len() {
                let at = |delta: f64| {
                    let mut inputs = ex.inputs.clone();
                    let mut v = base.clone();
                    v.data_mut()[k] += delta;
                    inputs.insert(p, v);
                    exact_expectation(&ex.graph, &inputs, &sd).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let got = grads[&p].data()[k];
                assert!((got - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{name} param {p}[{k}]: {got} vs {fd}");
            }
        }
    }
}

#[test]
fn exact_estimator_mean_equals_the_exact_gradient() {
    let sd = SupportDescriptor::default();
    for name in FINITE {
        let ex = builtin(name).unwrap();
        for &p in ex.graph.params() {
            let exact = exact_gradient(&ex.graph, &ex.inputs, p, &sd).unwrap();
            for method in [Method::Surrogate, Method::Algorithm1] {
                let m = exact_estimator_moments(&ex.graph, &ex.inputs, p, &ex.baselines, method).unwrap();
                assert!(m.mean.max_abs_diff(&exact) < 1e-10, "{name} param {p} {method:?}");
            }
        }
    }
}

#[test]
fn optimal_constant_beats_a_grid_of_constants() {
    let ex = builtin("fig1-2").unwrap();
    let g = &ex.graph;
    let theta = g.resolve("theta").unwrap();
    let x = g.resolve("x").unwrap();
    let best = optimal_baseline(g, &ex.inputs, theta, x).unwrap();
    let variance = |b: f64| {
        let mut spec = BaselineSpec::none();
        spec.set(x, Baseline::Constant(b));
        exact_estimator_moments(g, &ex.inputs, theta, &spec, Method::Surrogate).unwrap().variance.item()
    };
    let at_best = variance(best);
    assert!(at_best < variance(0.0));
    for i in 0..100 {
        let b = 0.1 * i as f64;
        assert!(at_best <= variance(b) + 1e-12, "b = {b}: {} < {at_best}", variance(b));
    }
}

#[test]
fn deterministic_graphs_have_zero_estimator_variance() {
    let ex = builtin("nn2layer").unwrap();
    for &p in ex.graph.params() {
        let m = exact_estimator_moments(&ex.graph, &ex.inputs, p, &BaselineSpec::none(), Method::Surrogate).unwrap();
        assert!(m.variance.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn enumeration_limits_are_enforced() {
    let ex = builtin("gauss-reparam").unwrap();
    for order in [0, 1] {
        let err = exact_expectation(&ex.graph, &ex.inputs, &SupportDescriptor::with_order(order)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "order {order}");
    }
    let mdp = builtin("mdp-toy").unwrap();
    let tight = SupportDescriptor { max_configurations: 10, ..SupportDescriptor::default() };
    assert!(matches!(exact_expectation(&mdp.graph, &mdp.inputs, &tight), Err(Error::SupportTooLarge(_))));
    assert!(configuration_bound(&mdp.graph, &SupportDescriptor::default()).unwrap() > 10);

    let theta = ex.graph.resolve("theta").unwrap();
    let err = exact_estimator_moments(&ex.graph, &ex.inputs, theta, &BaselineSpec::none(), Method::Surrogate);
    assert!(matches!(err, Err(Error::UnsupportedContinuous(_))));

    let mut b = GraphBuilder::new();
    let mu = b.param("mu", &[3]);
    let sigma = b.input("sigma", &[3]);
    let x = b.stoch(DistributionSpec::Gaussian, &[mu, sigma]);
    let s = b.det(Builtin::Sum.spec(), &[x]);
    b.cost(Builtin::Square.spec(), &[s]);
    let g = b.freeze().unwrap();
    let inputs: Inputs = [(mu, Value::zeros(&[3])), (sigma, Value::vector(vec![1.0; 3]))].into();
    assert!(matches!(exact_expectation(&g, &inputs, &SupportDescriptor::default()), Err(Error::UnsupportedContinuous(_))));
}

#[test]
fn two_dimensional_gaussians_integrate_exactly() {
    let mut b = GraphBuilder::new();
    let mu = b.param("mu", &[2]);
    let sigma = b.input("sigma", &[2]);
    let x = b.stoch(DistributionSpec::Gaussian, &[mu, sigma]);
    let sq = b.det(Builtin::Square.spec(), &[x]);
    b.cost(Builtin::Sum.spec(), &[sq]);
    let g = b.freeze().unwrap();
    let inputs: BTreeMap<NodeId, Value> =
        [(mu, Value::vector(vec![0.5, -1.0])), (sigma, Value::vector(vec![2.0, 0.3]))].into();
    let e = exact_expectation(&g, &inputs, &SupportDescriptor::default()).unwrap();
    assert!((e - (0.25 + 4.0 + 1.0 + 0.09)).abs() < 1e-12);
    let grad = exact_gradient(&g, &inputs, mu, &SupportDescriptor::default()).unwrap();
    assert!(grad.max_abs_diff(&Value::vector(vec![1.0, -2.0])) < 1e-12);
}
