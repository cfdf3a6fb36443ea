//! Reverse-mode tape.
//!
//! Values are computed eagerly as ops are recorded. [`Tape::backward`]
//! accumulates numeric adjoints; [`Tape::backward_graph`] records the
//! backward pass onto the same tape so its result can be differentiated again.

use crate::error::{Error, Result};
use crate::ops::{Builtin, OpSpec};
use crate::tensor::Value;

/// Handle to a slot on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Origin {
    Leaf,
    Op { op: OpSpec, inputs: Vec<Var> },
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    origin: Origin,
    /// Some tracked leaf reaches this entry.
    tracked: bool,
}

#[derive(Debug, Clone)]
pub struct Tape {
    entries: Vec<Entry>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Numeric adjoints from [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Adjoints(Vec<Option<Value>>);

impl Adjoints {
    /// `None` when nothing reached `v`.
    pub fn get(&self, v: Var) -> Option<&Value> {
        self.0.get(v.0).and_then(|o| o.as_ref())
    }

    pub fn get_or_zeros(&self, v: Var, like: &Value) -> Value {
        self.get(v).cloned().unwrap_or_else(|| Value::zeros(like.shape()))
    }
}

impl Tape {
    /// A tape in checked mode: non-finite op outputs are errors.
    pub fn new() -> Self {
        Self { entries: Vec::new(), checked: true }
    }

    pub fn unchecked() -> Self {
        Self { entries: Vec::new(), checked: false }
    }

    pub fn set_checked(&mut self, checked: bool) {
        self.checked = checked;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn leaf(&mut self, value: Value, tracked: bool) -> Var {
        self.entries.push(Entry { value, origin: Origin::Leaf, tracked });
        Var(self.entries.len() - 1)
    }

    /// Leaf that gradients are taken with respect to.
    pub fn variable(&mut self, value: Value) -> Var {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant by both backward passes.
    pub fn constant(&mut self, value: Value) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.entries[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.entries[v.0].tracked
    }

    pub fn apply(&mut self, op: &OpSpec, inputs: &[Var]) -> Result<Var> {
        if !op.arity().accepts(inputs.len()) {
            return Err(Error::Shape(format!("{} got {} arguments", op.name(), inputs.len())));
        }
        let args: Vec<&Value> = inputs.iter().map(|v| &self.entries[v.0].value).collect();
        let value = op.forward(&args)?;
        if self.checked && !value.is_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        let tracked = inputs.iter().any(|v| self.entries[v.0].tracked);
        self.entries.push(Entry { value, origin: Origin::Op { op: op.clone(), inputs: inputs.to_vec() }, tracked });
        Ok(Var(self.entries.len() - 1))
    }

    /// Shorthand for applying a builtin.
    pub fn op(&mut self, op: Builtin, inputs: &[Var]) -> Result<Var> {
        self.apply(&op.spec(), inputs)
    }

    fn check_seed(&self, v: Var, seed: &Value) -> Result<()> {
        if seed.shape() != self.value(v).shape() {
            return Err(Error::Shape(format!(
                "seed of shape {:?} for slot of shape {:?}",
                seed.shape(),
                self.value(v).shape()
            )));
        }
        Ok(())
    }

    /// Adjoints of `sum_i <seed_i, v_i>` with respect to every slot.
    pub fn backward(&self, seeds: &[(Var, Value)]) -> Result<Adjoints> {
        let mut adj: Vec<Option<Value>> = vec![None; self.entries.len()];
        for (v, seed) in seeds {
            self.check_seed(*v, seed)?;
            accumulate(&mut adj[v.0], seed);
        }
        for i in (0..self.entries.len()).rev() {
            let entry = &self.entries[i];
            let Origin::Op { op, inputs } = &entry.origin else { continue };
            if !entry.tracked {
                continue;
            }
            let Some(g) = &adj[i] else { continue };
            let args: Vec<&Value> = inputs.iter().map(|v| &self.entries[v.0].value).collect();
            let grads = op.vjp(&args, &entry.value, g)?;
            for (input, grad) in inputs.iter().zip(grads) {
                if let (true, Some(grad)) = (self.entries[input.0].tracked, grad) {
                    if grad.shape() != self.entries[input.0].value.shape() {
                        return Err(Error::Shape(format!("vjp of {} returned shape {:?}", op.name(), grad.shape())));
                    }
                    accumulate(&mut adj[input.0], &grad);
                }
            }
        }
        Ok(Adjoints(adj))
    }

    /// Records the backward pass of `sum_i <seed_i, v_i>` on this tape and
    /// returns the adjoint slot of every pre-existing entry (`None` if unreached).
    pub fn backward_graph(&mut self, seeds: &[(Var, Var)]) -> Result<Vec<Option<Var>>> {
        let n = self.entries.len();
        let mut adj: Vec<Option<Var>> = vec![None; n];
        for &(v, seed) in seeds {
            self.check_seed(v, &self.entries[seed.0].value.clone())?;
            self.accumulate_var(&mut adj[v.0], seed)?;
        }
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            let (op, inputs) = match &self.entries[i].origin {
                Origin::Op { op, inputs } if self.entries[i].tracked => (op.clone(), inputs.clone()),
                _ => continue,
            };
            let grads = op.vjp_graph(self, &inputs, Var(i), g)?;
            for (input, grad) in inputs.iter().zip(grads) {
                if let (true, Some(grad)) = (self.entries[input.0].tracked, grad) {
                    self.accumulate_var(&mut adj[input.0], grad)?;
                }
            }
        }
        Ok(adj)
    }

    fn accumulate_var(&mut self, slot: &mut Option<Var>, g: Var) -> Result<()> {
        *slot = Some(match *slot {
            None => g,
            Some(prev) => self.op(Builtin::Add, &[prev, g])?,
        });
        Ok(())
    }

    /// Re-executes every recorded op from the leaf values.
    pub fn replay(&self) -> Result<Vec<Value>> {
        let mut values: Vec<Value> = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let v = match &entry.origin {
                Origin::Leaf => entry.value.clone(),
                Origin::Op { op, inputs } => {
                    let args: Vec<&Value> = inputs.iter().map(|v| &values[v.0]).collect();
                    op.forward(&args)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }
}

fn accumulate(slot: &mut Option<Value>, g: &Value) {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}

/// Central-difference gradient of a scalar function, component-wise.
pub fn finite_difference(f: impl Fn(&Value) -> f64, x: &Value, h: f64) -> Value {
    let mut grad = Value::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}
