use std::ffi::{CStr, CString};
use std::ptr;

use scg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(scg_last_error()) }.to_str().unwrap().to_owned()
}

fn load(name: &str) -> *mut ScgGraph {
    let name = CString::new(name).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { scg_graph_builtin(name.as_ptr(), &mut g) }, ScgStatus::Ok, "{}", last_error());
    g
}

fn first_param(g: *const ScgGraph) -> usize {
    let mut theta = usize::MAX;
    assert_eq!(unsafe { scg_graph_param(g, 0, &mut theta) }, ScgStatus::Ok);
    theta
}

fn size_of(g: *const ScgGraph, node: usize) -> usize {
    let mut n = 0;
    assert_eq!(unsafe { scg_graph_node_size(g, node, &mut n) }, ScgStatus::Ok);
    n
}

#[test]
fn estimate_agrees_with_exact_gradient() {
    let g = load("bernoulli-chain");
    let theta = first_param(g);
    let n = size_of(g, theta);
    let mut exact = vec![0.0; n];
    assert_eq!(unsafe { scg_exact_gradient(g, theta, exact.as_mut_ptr(), n) }, ScgStatus::Ok);

    let mut est = ptr::null_mut();
    let status = unsafe { scg_estimate(g, theta, 20_000, 3, ScgMethod::Surrogate as u32, 2, &mut est) };
    assert_eq!(status, ScgStatus::Ok, "{}", last_error());
    let mut len = 0;
    let mut samples = 0;
    assert_eq!(unsafe { scg_estimate_size(est, &mut len) }, ScgStatus::Ok);
    assert_eq!(unsafe { scg_estimate_samples(est, &mut samples) }, ScgStatus::Ok);
    assert_eq!((len, samples), (n, 20_000));
    let mut mean = vec![0.0; n];
    let mut se = vec![0.0; n];
    assert_eq!(unsafe { scg_estimate_mean(est, mean.as_mut_ptr(), n) }, ScgStatus::Ok);
    assert_eq!(unsafe { scg_estimate_stderr(est, se.as_mut_ptr(), n) }, ScgStatus::Ok);
    for i in 0..n {
        assert!((mean[i] - exact[i]).abs() < 4.0 * se[i], "component {i}: {} vs {} (se {})", mean[i], exact[i], se[i]);
    }
    unsafe {
        scg_estimate_free(est);
        scg_graph_free(g);
    }
}

#[test]
fn methods_and_thread_counts_give_identical_estimates() {
    let g = load("fig1-5");
    let theta = first_param(g);
    let mut means = Vec::new();
    for (method, threads) in [(ScgMethod::Surrogate, 1), (ScgMethod::Algorithm1, 4)] {
        let mut est = ptr::null_mut();
        assert_eq!(unsafe { scg_estimate(g, theta, 500, 11, method as u32, threads, &mut est) }, ScgStatus::Ok);
        let mut m = 0.0;
        assert_eq!(unsafe { scg_estimate_mean(est, &mut m, 1) }, ScgStatus::Ok);
        means.push(m);
        unsafe { scg_estimate_free(est) };
    }
    assert!((means[0] - means[1]).abs() <= 1e-12, "{means:?}");
    unsafe { scg_graph_free(g) };
}

#[test]
fn json_round_trip_and_input_override() {
    let g = load("fig1-2");
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { scg_graph_to_json(g, &mut text) }, ScgStatus::Ok);
    let mut g2 = ptr::null_mut();
    assert_eq!(unsafe { scg_graph_from_json(text, &mut g2) }, ScgStatus::Ok, "{}", last_error());
    unsafe { scg_string_free(text) };

    let mut count = 0;
    assert_eq!(unsafe { scg_graph_node_count(g2, &mut count) }, ScgStatus::Ok);
    assert_eq!(count, 4);

    let theta = first_param(g2);
    let mut before = 0.0;
    assert_eq!(unsafe { scg_exact_expectation(g2, &mut before) }, ScgStatus::Ok);
    let value = [2.0];
    assert_eq!(unsafe { scg_graph_set_input(g2, theta, value.as_ptr(), 1) }, ScgStatus::Ok);
    let mut after = 0.0;
    assert_eq!(unsafe { scg_exact_expectation(g2, &mut after) }, ScgStatus::Ok);
    assert!(after != before);
    assert_eq!(unsafe { scg_graph_set_input(g2, theta, value.as_ptr(), 2) }, ScgStatus::BufferSize);
    unsafe {
        scg_graph_free(g);
        scg_graph_free(g2);
    }
}

#[test]
fn find_resolves_names_and_ids() {
    let g = load("fig1-2");
    let theta = first_param(g);
    let key = CString::new(theta.to_string()).unwrap();
    let mut found = usize::MAX;
    assert_eq!(unsafe { scg_graph_find(g, key.as_ptr(), &mut found) }, ScgStatus::Ok);
    assert_eq!(found, theta);
    let key = CString::new("theta").unwrap();
    assert_eq!(unsafe { scg_graph_find(g, key.as_ptr(), &mut found) }, ScgStatus::Ok);
    assert_eq!(found, theta);
    let key = CString::new("nope").unwrap();
    assert_eq!(unsafe { scg_graph_find(g, key.as_ptr(), &mut found) }, ScgStatus::InvalidArgument);
    unsafe { scg_graph_free(g) };
}

#[test]
fn errors_map_to_status_codes_with_messages() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { scg_graph_builtin(ptr::null(), &mut g) }, ScgStatus::NullPointer);
    assert!(last_error().contains("name"));

    let bad = CString::new("{\"nodes\": [{\"id\": 0, \"kind\": \"input\"}]}").unwrap();
    assert_eq!(unsafe { scg_graph_from_json(bad.as_ptr(), &mut g) }, ScgStatus::Graph);
    assert!(last_error().contains("node 0"), "{}", last_error());

    let invalid_utf8 = [0xffu8, 0];
    assert_eq!(unsafe { scg_graph_builtin(invalid_utf8.as_ptr().cast(), &mut g) }, ScgStatus::InvalidUtf8);

    let gauss = load("gauss-reparam");
    let theta = first_param(gauss);
    let mut est = ptr::null_mut();
    assert_eq!(unsafe { scg_estimate(gauss, theta, 10, 0, 7, 0, &mut est) }, ScgStatus::InvalidArgument);
    assert_eq!(unsafe { scg_estimate(gauss, theta, 0, 0, 0, 0, &mut est) }, ScgStatus::InvalidArgument);
    assert_eq!(unsafe { scg_estimate(gauss, 999, 10, 0, 0, 0, &mut est) }, ScgStatus::InvalidArgument);

    assert_eq!(unsafe { scg_estimate(gauss, theta, 1, 0, 0, 0, &mut est) }, ScgStatus::Ok);
    let mut se = 0.0;
    assert_eq!(unsafe { scg_estimate_stderr(est, &mut se, 1) }, ScgStatus::Unavailable);
    unsafe { scg_estimate_free(est) };

    let mdp = load("mdp-toy");
    let mut lone = ptr::null_mut();
    let text = CString::new(
        r#"{"nodes": [{"id": 0, "kind": "input", "shape": [], "value": 0.0},
                      {"id": 1, "kind": "stoch", "dist": "gaussian", "parents": [0, 0], "shape": []},
                      {"id": 2, "kind": "cost", "op": "step", "parents": [0]}],
            "params": [0]}"#,
    )
    .unwrap();
    assert_eq!(unsafe { scg_graph_from_json(text.as_ptr(), &mut lone) }, ScgStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { scg_estimate(lone, 0, 10, 0, 0, 0, &mut est) }, ScgStatus::Condition);

    let mdp_theta = first_param(mdp);
    assert!(size_of(mdp, mdp_theta) > 1);
    let mut exact = 0.0;
    assert_eq!(unsafe { scg_exact_gradient(mdp, mdp_theta, &mut exact, 1) }, ScgStatus::BufferSize);
    unsafe {
        scg_graph_free(gauss);
        scg_graph_free(mdp);
        scg_graph_free(lone);
    }

    // A successful call clears the message.
    let g = load("fig1-1");
    assert_eq!(unsafe { scg_graph_node_count(g, &mut 0) }, ScgStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { scg_graph_free(g) };
}

#[test]
fn null_handles_are_rejected_and_free_ignores_null() {
    let mut n = 0;
    assert_eq!(unsafe { scg_graph_node_count(ptr::null(), &mut n) }, ScgStatus::NullPointer);
    assert_eq!(unsafe { scg_estimate_size(ptr::null(), &mut n) }, ScgStatus::NullPointer);
    let g = load("fig1-1");
    assert_eq!(unsafe { scg_graph_node_count(g, ptr::null_mut()) }, ScgStatus::NullPointer);
    unsafe {
        scg_graph_free(g);
        scg_graph_free(ptr::null_mut());
        scg_estimate_free(ptr::null_mut());
        scg_string_free(ptr::null_mut());
    }
    assert!(!unsafe { CStr::from_ptr(scg_version()) }.to_str().unwrap().is_empty());
}
