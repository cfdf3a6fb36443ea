//! C ABI over the `scg` library.
//!
//! Graphs and estimates are opaque handles created and freed here. Every
//! fallible function returns an [`ScgStatus`]; on failure the message is
//! available from [`scg_last_error`] until the next call on that thread. Output buffers are
//! caller-allocated and sized with the matching `*_size` query.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use scg::{
    builtin, estimate, exact_expectation, exact_gradient, graph_from_json, graph_to_json, BaselineSpec,
    EstimateConfig, Error, Graph, GradientEstimate, Method, NodeId, SupportDescriptor, Value,
};
use scg::trace::Inputs;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScgStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was out of range or malformed.
    InvalidArgument = 3,
    /// An output buffer length did not match the value size.
    BufferSize = 4,
    /// The graph failed to load, validate or evaluate.
    Graph = 5,
    /// The differentiability requirements fail for the requested param.
    Condition = 6,
    /// The exact oracle cannot handle the graph.
    Oracle = 7,
    /// The requested quantity is undefined, such as a standard error from one sample.
    Unavailable = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

/// Gradient method selector for [`scg_estimate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScgMethod {
    Surrogate = 0,
    Algorithm1 = 1,
}

/// A frozen graph with its input values and baselines.
pub struct ScgGraph {
    graph: Graph,
    inputs: Inputs,
    baselines: BaselineSpec,
}

/// The result of one estimate for one param.
pub struct ScgEstimate {
    mean: Value,
    stderr: Option<Value>,
    n_samples: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(ScgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ConditionViolated { .. } => ScgStatus::Condition,
            Error::NonFiniteSupport(_)
            | Error::SupportTooLarge(_)
            | Error::UnsupportedContinuous(_)
            | Error::PositiveCost(_)
            | Error::DirectCostInfluence(_) => ScgStatus::Oracle,
            Error::InvalidArgument(_) | Error::NotAParam(_) | Error::UnknownNode(_) | Error::UnknownExample(_) => {
                ScgStatus::InvalidArgument
            }
            _ => ScgStatus::Graph,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ScgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            ScgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            ScgStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(ScgStatus::NullPointer, format!("{name} is null"))
}

unsafe fn borrow<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(name))
}

unsafe fn borrow_mut<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(name))
}

unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure(ScgStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_out(value: &Value, out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len != value.len() {
        return Err(Failure(ScgStatus::BufferSize, format!("buffer holds {len} values, need {}", value.len())));
    }
    std::ptr::copy_nonoverlapping(value.data().as_ptr(), out, len);
    Ok(())
}

fn node(graph: &Graph, index: usize) -> Result<NodeId, Failure> {
    Ok(graph.try_node(NodeId(index))?.id)
}

fn into_handle<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Error message of the most recent call on this thread, empty if it
/// succeeded. Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn scg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a built-in example graph by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_builtin(name: *const c_char, out: *mut *mut ScgGraph) -> ScgStatus {
    guard(|| {
        let ex = builtin(read_str(name, "name")?)?;
        let handle = ScgGraph { graph: ex.graph, inputs: ex.inputs, baselines: ex.baselines };
        write(out, into_handle(handle), "out")
    })
}

/// Parses a graph from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_from_json(json: *const c_char, out: *mut *mut ScgGraph) -> ScgStatus {
    guard(|| {
        let (graph, inputs) = graph_from_json(read_str(json, "json")?)?;
        write(out, into_handle(ScgGraph { graph, inputs, baselines: BaselineSpec::none() }), "out")
    })
}

/// Serializes a graph with its current input values. Free the result with
/// [`scg_string_free`].
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_to_json(graph: *const ScgGraph, out: *mut *mut c_char) -> ScgStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        let text = graph_to_json(&g.graph, &g.inputs)?;
        let c = CString::new(text).map_err(|e| Failure(ScgStatus::Graph, e.to_string()))?;
        write(out, c.into_raw(), "out")
    })
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn scg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Frees a graph handle. Null is ignored.
///
/// # Safety
/// `graph` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_free(graph: *mut ScgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of nodes in the graph.
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_node_count(graph: *const ScgGraph, out: *mut usize) -> ScgStatus {
    guard(|| write(out, borrow(graph, "graph")?.graph.len(), "out"))
}

/// Number of params (differentiation targets).
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_param_count(graph: *const ScgGraph, out: *mut usize) -> ScgStatus {
    guard(|| write(out, borrow(graph, "graph")?.graph.params().len(), "out"))
}

/// Node id of the `index`-th param.
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_param(graph: *const ScgGraph, index: usize, out: *mut usize) -> ScgStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        let id = g.graph.params().get(index).ok_or_else(|| {
            Failure(ScgStatus::InvalidArgument, format!("param index {index} out of range"))
        })?;
        write(out, id.index(), "out")
    })
}

/// Resolves a node by name or decimal id.
///
/// # Safety
/// `graph` must be a live handle, `key` a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_find(graph: *const ScgGraph, key: *const c_char, out: *mut usize) -> ScgStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        let id = g.graph.resolve(read_str(key, "key")?)?;
        write(out, id.index(), "out")
    })
}

/// Number of scalar components of a node's value.
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_node_size(graph: *const ScgGraph, node: usize, out: *mut usize) -> ScgStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        let id = self::node(&g.graph, node)?;
        write(out, g.graph.node(id).shape.iter().product(), "out")
    })
}

/// Replaces the value of an input node, in row-major order.
///
/// # Safety
/// `graph` must be a live handle and `data` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn scg_graph_set_input(graph: *mut ScgGraph, node: usize, data: *const f64, len: usize) -> ScgStatus {
    guard(|| {
        let g = borrow_mut(graph, "graph")?;
        let id = self::node(&g.graph, node)?;
        let n = g.graph.node(id);
        if !n.kind.is_input() {
            return Err(Failure(ScgStatus::InvalidArgument, format!("node {node} is not an input")));
        }
        let shape = n.shape.clone();
        let size: usize = shape.iter().product();
        if len != size {
            return Err(Failure(ScgStatus::BufferSize, format!("node {node} has {size} components, got {len}")));
        }
        if data.is_null() {
            return Err(null("data"));
        }
        let values = std::slice::from_raw_parts(data, len).to_vec();
        g.inputs.insert(id, Value::new(shape, values)?);
        Ok(())
    })
}

/// Estimates the gradient of the expected total cost with respect to param
/// `theta` from `n_samples` traces. `method` is an [`ScgMethod`] value and
/// `threads` the worker count, 0 for the default.
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_estimate(
    graph: *const ScgGraph,
    theta: usize,
    n_samples: usize,
    seed: u64,
    method: u32,
    threads: usize,
    out: *mut *mut ScgEstimate,
) -> ScgStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        let theta = self::node(&g.graph, theta)?;
        let method = match method {
            m if m == ScgMethod::Surrogate as u32 => Method::Surrogate,
            m if m == ScgMethod::Algorithm1 as u32 => Method::Algorithm1,
            m => return Err(Failure(ScgStatus::InvalidArgument, format!("unknown method {m}"))),
        };
        let mut cfg = EstimateConfig::new(n_samples, seed).method(method);
        if threads > 0 {
            cfg = cfg.threads(threads);
        }
        let mut baselines = g.baselines.clone();
        let est: GradientEstimate = estimate(&g.graph, &g.inputs, &[theta], &cfg, &mut baselines)?;
        let p = est.param(theta)?.clone();
        write(out, into_handle(ScgEstimate { mean: p.mean, stderr: p.stderr, n_samples }), "out")
    })
}

/// Frees an estimate handle. Null is ignored.
///
/// # Safety
/// `est` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn scg_estimate_free(est: *mut ScgEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Number of components of the estimated gradient.
///
/// # Safety
/// `est` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_estimate_size(est: *const ScgEstimate, out: *mut usize) -> ScgStatus {
    guard(|| write(out, borrow(est, "est")?.mean.len(), "out"))
}

/// Number of traces the estimate averages.
///
/// # Safety
/// `est` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_estimate_samples(est: *const ScgEstimate, out: *mut usize) -> ScgStatus {
    guard(|| write(out, borrow(est, "est")?.n_samples, "out"))
}

/// Copies the gradient mean into `out[0..len]`.
///
/// # Safety
/// `est` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn scg_estimate_mean(est: *const ScgEstimate, out: *mut f64, len: usize) -> ScgStatus {
    guard(|| copy_out(&borrow(est, "est")?.mean, out, len))
}

/// Copies the per-component standard error into `out[0..len]`. Fails with
/// `Unavailable` for a single-sample estimate.
///
/// # Safety
/// `est` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn scg_estimate_stderr(est: *const ScgEstimate, out: *mut f64, len: usize) -> ScgStatus {
    guard(|| {
        let e = borrow(est, "est")?;
        let se = e.stderr.as_ref().ok_or_else(|| {
            Failure(ScgStatus::Unavailable, "standard error needs at least two samples".into())
        })?;
        copy_out(se, out, len)
    })
}

/// Exact gradient of the expected total cost by enumeration, into `out[0..len]`.
///
/// # Safety
/// `graph` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn scg_exact_gradient(graph: *const ScgGraph, theta: usize, out: *mut f64, len: usize) -> ScgStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        let theta = self::node(&g.graph, theta)?;
        let grad = exact_gradient(&g.graph, &g.inputs, theta, &SupportDescriptor::default())?;
        copy_out(&grad, out, len)
    })
}

/// Exact expected total cost by enumeration.
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn scg_exact_expectation(graph: *const ScgGraph, out: *mut f64) -> ScgStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        write(out, exact_expectation(&g.graph, &g.inputs, &SupportDescriptor::default())?, "out")
    })
}
