//! Reverse-mode tape over vector-valued nodes.
//!
//! Every node holds a `Vec<f64>`; length-1 nodes broadcast against longer
//! ones in binary operations. Two kinds of leaves carry trainable state:
//!
//! * network calls ([`Tape::network`]) which record a batched dual forward
//!   pass and expose `T`, `H` and, optionally, `dT/dt`, `dH/dt` as nodes;
//! * one parameter vector ([`Tape::parameters`]).
//!
//! [`Tape::gradient`] sweeps the nodes in reverse, then pushes the adjoints
//! of every network output back through the recorded batch to obtain
//! `∂loss/∂θ`. The resulting [`GradientVector`] lists θ first (network
//! order) followed by the parameter vector.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Mul, Neg, Sub};

use super::batch::{BatchRecording, OutputAdjoints};
use super::network::NetworkModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const,
    Parameters,
    NetOut,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Exp(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    Index(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

struct NetCall {
    recording: BatchRecording,
    /// Node ids of T, H, dT/dt, dH/dt.
    outputs: [Option<usize>; 4],
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape<'t>,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("len", &self.len())
            .finish()
    }
}

/// Nodes produced by one network call.
#[derive(Debug, Clone, Copy)]
pub struct NetVars<'t> {
    pub temperature: Var<'t>,
    pub humidity: Var<'t>,
    pub d_temperature: Option<Var<'t>>,
    pub d_humidity: Option<Var<'t>>,
}

/// `∂loss/∂(θ, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
    theta_len: usize,
}

impl GradientVector {
    pub fn theta(&self) -> &[f64] {
        &self.values[..self.theta_len]
    }

    pub fn phi(&self) -> &[f64] {
        &self.values[self.theta_len..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub struct Tape<'n> {
    net: Option<&'n NetworkModel>,
    nodes: RefCell<Vec<Node>>,
    calls: RefCell<Vec<NetCall>>,
    parameters: Cell<Option<usize>>,
    loss: Cell<Option<usize>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'n> Tape<'n> {
    /// A tape with no network attached; only constants and parameters.
    pub fn new() -> Self {
        Self {
            net: None,
            nodes: RefCell::new(Vec::new()),
            calls: RefCell::new(Vec::new()),
            parameters: Cell::new(None),
            loss: Cell::new(None),
        }
    }

    pub fn with_network(net: &'n NetworkModel) -> Self {
        Self {
            net: Some(net),
            ..Self::new()
        }
    }

    fn push(&self, value: Vec<f64>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn constant(&self, value: Vec<f64>) -> Var<'_> {
        self.push(value, Op::Const)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(vec![value])
    }

    /// Registers the trainable parameter vector (at most once per tape).
    pub fn parameters(&self, values: &[f64]) -> Result<Var<'_>> {
        if self.parameters.get().is_some() {
            return Err(Error::Usage("parameter vector already registered".into()));
        }
        let v = self.push(values.to_vec(), Op::Parameters);
        self.parameters.set(Some(v.id));
        Ok(v)
    }

    /// Evaluates the attached network at `times`, recording for backward.
    pub fn network(&self, times: &[f64], tangent: bool) -> Result<NetVars<'_>> {
        let net = self
            .net
            .ok_or_else(|| Error::Usage("tape has no network attached".into()))?;
        if times.is_empty() {
            return Err(Error::validation("times", "network call needs at least one time"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("times", "must be finite"));
        }
        let recording = BatchRecording::forward(net, times, tangent);
        let out = recording.outputs();
        if !out.all_finite() {
            return Err(Error::Evaluation("network output overflowed".into()));
        }
        let t = self.push(out.temperature, Op::NetOut);
        let h = self.push(out.humidity, Op::NetOut);
        let (dt, dh) = if tangent {
            (
                Some(self.push(out.d_temperature, Op::NetOut)),
                Some(self.push(out.d_humidity, Op::NetOut)),
            )
        } else {
            (None, None)
        };
        self.calls.borrow_mut().push(NetCall {
            recording,
            outputs: [Some(t.id), Some(h.id), dt.map(|v| v.id), dh.map(|v| v.id)],
        });
        Ok(NetVars {
            temperature: t,
            humidity: h,
            d_temperature: dt,
            d_humidity: dh,
        })
    }

    fn binary(&self, a: usize, b: usize, f: impl Fn(f64, f64) -> f64, op: Op) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a].value, &nodes[b].value);
            match (x.len(), y.len()) {
                (n, m) if n == m => x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect(),
                (1, _) => y.iter().map(|q| f(x[0], *q)).collect(),
                (_, 1) => x.iter().map(|p| f(*p, y[0])).collect(),
                (n, m) => panic!("tape shape mismatch: {n} vs {m}"),
            }
        };
        self.push(value, op)
    }

    fn unary(&self, a: usize, f: impl Fn(f64) -> f64, op: Op) -> Var<'_> {
        let value = self.nodes.borrow()[a].value.iter().map(|v| f(*v)).collect();
        self.push(value, op)
    }

    /// Marks `loss` as the scalar to differentiate.
    pub fn set_loss(&self, loss: Var<'_>) -> Result<()> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Usage("loss belongs to a different tape".into()));
        }
        if loss.len() != 1 {
            return Err(Error::Usage(format!(
                "loss must be a scalar, found length {}",
                loss.len()
            )));
        }
        self.loss.set(Some(loss.id));
        Ok(())
    }

    /// `set_loss` followed by [`Tape::gradient`].
    pub fn backward(&self, loss: Var<'_>) -> Result<GradientVector> {
        self.set_loss(loss)?;
        self.gradient()
    }

    /// Gradient of the recorded loss with respect to θ and the parameter
    /// vector.
    pub fn gradient(&self) -> Result<GradientVector> {
        let loss = self
            .loss
            .get()
            .ok_or_else(|| Error::Usage("backward called before a loss was recorded".into()))?;
        let nodes = self.nodes.borrow();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        adj[loss] = Some(vec![1.0]);

        fn accumulate(adj: &mut [Option<Vec<f64>>], target: usize, len: usize, g: &[f64]) {
            let slot = adj[target].get_or_insert_with(|| vec![0.0; len]);
            if g.len() == len {
                slot.iter_mut().zip(g).for_each(|(s, v)| *s += v);
            } else if len == 1 {
                slot[0] += g.iter().sum::<f64>();
            } else {
                debug_assert_eq!(g.len(), 1);
                slot.iter_mut().for_each(|s| *s += g[0]);
            }
        }

        for id in (0..=loss).rev() {
            let op = nodes[id].op;
            let g = match op {
                Op::Const | Op::Parameters | Op::NetOut => continue,
                _ => match adj[id].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            let len = |i: usize| nodes[i].value.len();
            let val = |i: usize| &nodes[i].value;
            // Value of operand `i` at position `k`, broadcasting scalars.
            let at = |i: usize, k: usize| {
                let v = &nodes[i].value;
                if v.len() == 1 {
                    v[0]
                } else {
                    v[k]
                }
            };
            match op {
                Op::Add(a, b) => {
                    accumulate(&mut adj, a, len(a), &g);
                    accumulate(&mut adj, b, len(b), &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, a, len(a), &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut adj, b, len(b), &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().enumerate().map(|(k, v)| v * at(b, k)).collect();
                    let gb: Vec<f64> = g.iter().enumerate().map(|(k, v)| v * at(a, k)).collect();
                    accumulate(&mut adj, a, len(a), &ga);
                    accumulate(&mut adj, b, len(b), &gb);
                }
                Op::Neg(a) => {
                    let ga: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut adj, a, len(a), &ga);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|v| v * c).collect();
                    accumulate(&mut adj, a, len(a), &ga);
                }
                Op::Exp(a) => {
                    let ga: Vec<f64> = g.iter().zip(val(id)).map(|(v, e)| v * e).collect();
                    accumulate(&mut adj, a, len(a), &ga);
                }
                Op::Square(a) => {
                    let ga: Vec<f64> = g.iter().zip(val(a)).map(|(v, x)| 2.0 * x * v).collect();
                    accumulate(&mut adj, a, len(a), &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; len(a)];
                    accumulate(&mut adj, a, len(a), &ga);
                }
                Op::Mean(a) => {
                    let n = len(a);
                    let ga = vec![g[0] / n as f64; n];
                    accumulate(&mut adj, a, n, &ga);
                }
                Op::Index(a, k) => {
                    let mut ga = vec![0.0; len(a)];
                    ga[k] = g[0];
                    accumulate(&mut adj, a, len(a), &ga);
                }
                Op::Const | Op::Parameters | Op::NetOut => unreachable!(),
            }
        }

        let theta_len = self.net.map_or(0, |n| n.param_count());
        let mut values = vec![0.0; theta_len];
        if let Some(net) = self.net {
            for call in self.calls.borrow().iter() {
                let pick = |slot: Option<usize>| slot.and_then(|i| adj[i].as_deref());
                let adjoints = OutputAdjoints {
                    temperature: pick(call.outputs[0]),
                    humidity: pick(call.outputs[1]),
                    d_temperature: pick(call.outputs[2]),
                    d_humidity: pick(call.outputs[3]),
                };
                call.recording.backward(net, &adjoints, &mut values);
            }
        }
        if let Some(p) = self.parameters.get() {
            match &adj[p] {
                Some(g) => values.extend_from_slice(g),
                None => values.extend(std::iter::repeat_n(0.0, nodes[p].value.len())),
            }
        }
        Ok(GradientVector { values, theta_len })
    }
}

impl<'t> Var<'t> {
    pub fn len(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self) -> Vec<f64> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Value of a length-1 node.
    pub fn item(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        assert_eq!(v.len(), 1, "item() on a node of length {}", v.len());
        v[0]
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self.id, f64::exp, Op::Exp(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self.id, |x| x * x, Op::Square(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().iter().sum();
        self.tape.push(vec![s], Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.tape.push(vec![m], Op::Mean(self.id))
    }

    pub fn index(self, k: usize) -> Var<'t> {
        let v = self.tape.nodes.borrow()[self.id].value[k];
        self.tape.push(vec![v], Op::Index(self.id, k))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.tape.unary(self.id, |x| c * x, Op::Scale(self.id, c))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self.id, rhs.id, |a, b| a + b, Op::Add(self.id, rhs.id))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self.id, rhs.id, |a, b| a - b, Op::Sub(self.id, rhs.id))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self.id, rhs.id, |a, b| a * b, Op::Mul(self.id, rhs.id))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self.id, |x| -x, Op::Neg(self.id))
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.scale(c)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v.scale(self)
    }
}
