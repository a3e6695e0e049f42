//! Scalar computation tape with spatial tangents.
//!
//! Every primal node carries its value and the two spatial tangents
//! `(d/dx, d/dy)` propagated forward from the lifted inputs. The tangent
//! arithmetic is itself recorded as tape nodes ("derivative nodes"), so a
//! single reverse sweep yields exact parameter gradients of expressions that
//! contain first spatial derivatives, e.g. `d/dtheta (d/dx u(x, y; theta))`.
//!
//! Derivative nodes do not carry tangents of their own; mixed orders beyond
//! one spatial plus one parameter derivative are not supported.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("division by zero while recording {0:?}")]
    DivisionByZero(OpKind),
    #[error("non-finite value produced by {0:?}")]
    NonFinite(OpKind),
    #[error("non-finite adjoint at node {0} during reverse sweep")]
    NonFiniteAdjoint(usize),
    #[error("node reference from generation {found} used on graph generation {current}")]
    StaleNode { found: u32, current: u32 },
    #[error("node index {0} out of range")]
    OutOfRange(usize),
    #[error("tangent requested on a derivative node {0}; only primal nodes carry tangents")]
    NoTangent(usize),
    #[error("coordinate index must be 0 or 1, got {0}")]
    BadCoordinate(usize),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Index of a node in a [`ScalarGraph`], tagged with the graph generation so
/// that references do not survive a [`ScalarGraph::reset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeRef {
    index: u32,
    generation: u32,
}

impl NodeRef {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Input(u8),
    Parameter,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Sin,
    Cos,
    Square,
    Scale,
    /// Recorded tangent arithmetic.
    Linearized,
}

/// Operation accepted by [`ScalarGraph::apply`].
#[derive(Debug, Clone, Copy)]
pub enum Operation<T> {
    Add(NodeRef, NodeRef),
    Sub(NodeRef, NodeRef),
    Mul(NodeRef, NodeRef),
    Div(NodeRef, NodeRef),
    Neg(NodeRef),
    Tanh(NodeRef),
    Sin(NodeRef),
    Cos(NodeRef),
    Square(NodeRef),
    Scale(NodeRef, T),
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node<T> {
    kind: OpKind,
    parents: [u32; 2],
    partials: [T; 2],
    value: T,
    /// `Some` for primal nodes; derivative nodes carry no tangent.
    tangent: Option<Tangent<T>>,
}

#[derive(Debug, Clone, Copy)]
struct Tangent<T> {
    value: [T; 2],
    /// Derivative node holding each tangent component; `None` is a structural zero.
    nodes: [Option<u32>; 2],
}

impl<T: Real> Tangent<T> {
    fn zero() -> Self {
        Tangent {
            value: [T::zero(); 2],
            nodes: [None, None],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LeafClass {
    Parameter,
    Input,
    Constant,
}

/// Append-only tape of scalar nodes in topological order.
#[derive(Debug, Clone)]
pub struct ScalarGraph<T> {
    nodes: Vec<Node<T>>,
    parameters: Vec<u32>,
    leaves: Vec<(u32, LeafClass)>,
    generation: u32,
    sweep_visits: usize,
}

impl<T: Real> Default for ScalarGraph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ScalarGraph<T> {
    pub fn new() -> Self {
        ScalarGraph {
            nodes: Vec::new(),
            parameters: Vec::new(),
            leaves: Vec::new(),
            generation: 0,
            sweep_visits: 0,
        }
    }

    pub fn with_capacity(nodes: usize) -> Self {
        let mut g = Self::new();
        g.nodes.reserve(nodes);
        g
    }

    /// Clears the tape. All previously issued [`NodeRef`]s become stale.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.parameters.clear();
        self.leaves.clear();
        self.generation = self.generation.wrapping_add(1);
        self.sweep_visits = 0;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters.len()
    }

    /// Number of nodes visited by the most recent reverse sweep.
    pub fn last_sweep_visits(&self) -> usize {
        self.sweep_visits
    }

    fn check(&self, r: NodeRef) -> Result<usize> {
        if r.generation != self.generation {
            return Err(AutodiffError::StaleNode {
                found: r.generation,
                current: self.generation,
            });
        }
        let i = r.index();
        if i >= self.nodes.len() {
            return Err(AutodiffError::OutOfRange(i));
        }
        Ok(i)
    }

    fn node_ref(&self, index: usize) -> NodeRef {
        NodeRef {
            index: index as u32,
            generation: self.generation,
        }
    }

    pub fn value(&self, r: NodeRef) -> Result<T> {
        Ok(self.nodes[self.check(r)?].value)
    }

    /// Spatial tangent `(d/dx, d/dy)` of a primal node.
    pub fn tangent(&self, r: NodeRef) -> Result<[T; 2]> {
        let i = self.check(r)?;
        self.nodes[i]
            .tangent
            .map(|t| t.value)
            .ok_or(AutodiffError::NoTangent(i))
    }

    pub fn kind(&self, r: NodeRef) -> Result<OpKind> {
        Ok(self.nodes[self.check(r)?].kind)
    }

    /// Stored local partial derivatives with respect to the parents.
    pub fn local_partials(&self, r: NodeRef) -> Result<Vec<T>> {
        let n = &self.nodes[self.check(r)?];
        Ok(n.parents
            .iter()
            .zip(n.partials.iter())
            .filter(|(p, _)| **p != NONE)
            .map(|(_, d)| *d)
            .collect())
    }

    /// Parent references of a node.
    pub fn parents(&self, r: NodeRef) -> Result<Vec<NodeRef>> {
        let n = &self.nodes[self.check(r)?];
        Ok(n.parents
            .iter()
            .filter(|p| **p != NONE)
            .map(|p| self.node_ref(*p as usize))
            .collect())
    }

    fn push(
        &mut self,
        kind: OpKind,
        parents: [u32; 2],
        partials: [T; 2],
        value: T,
        tangent: Option<Tangent<T>>,
    ) -> Result<u32> {
        if !value.is_finite() || !partials[0].is_finite() || !partials[1].is_finite() {
            return Err(AutodiffError::NonFinite(kind));
        }
        if let Some(t) = &tangent {
            if !t.value[0].is_finite() || !t.value[1].is_finite() {
                return Err(AutodiffError::NonFinite(kind));
            }
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            kind,
            parents,
            partials,
            value,
            tangent,
        });
        Ok(idx)
    }

    fn push_leaf(&mut self, value: T, tangent: Tangent<T>, class: LeafClass, kind: OpKind) -> Result<NodeRef> {
        let idx = self.push(kind, [NONE, NONE], [T::zero(); 2], value, Some(tangent))?;
        self.leaves.push((idx, class));
        if class == LeafClass::Parameter {
            self.parameters.push(idx);
        }
        Ok(self.node_ref(idx as usize))
    }

    fn derivative_constant(&mut self, value: T) -> Result<u32> {
        let idx = self.push(OpKind::Constant, [NONE, NONE], [T::zero(); 2], value, None)?;
        self.leaves.push((idx, LeafClass::Constant));
        Ok(idx)
    }

    /// Lifts a spatial coordinate; its tangent is the basis vector `e_coordinate`.
    pub fn lift_input(&mut self, coordinate: usize, value: T) -> Result<NodeRef> {
        if coordinate > 1 {
            return Err(AutodiffError::BadCoordinate(coordinate));
        }
        let one = self.derivative_constant(T::one())?;
        let mut t = Tangent::zero();
        t.value[coordinate] = T::one();
        t.nodes[coordinate] = Some(one);
        self.push_leaf(value, t, LeafClass::Input, OpKind::Input(coordinate as u8))
    }

    /// Lifts a trainable parameter. Gradients from [`Self::reverse_sweep`] are
    /// reported in the order parameters were lifted.
    pub fn lift_parameter(&mut self, value: T) -> Result<NodeRef> {
        self.push_leaf(value, Tangent::zero(), LeafClass::Parameter, OpKind::Parameter)
    }

    pub fn constant(&mut self, value: T) -> Result<NodeRef> {
        self.push_leaf(value, Tangent::zero(), LeafClass::Constant, OpKind::Constant)
    }

    // Derivative node with explicit local partials.
    fn lin(&mut self, parents: [u32; 2], partials: [T; 2], value: T) -> Result<u32> {
        self.push(OpKind::Linearized, parents, partials, value, None)
    }

    fn lin1(&mut self, parent: u32, partial: T, value: T) -> Result<u32> {
        self.lin([parent, NONE], [partial, T::zero()], value)
    }

    fn tan(&self, i: usize) -> Tangent<T> {
        self.nodes[i].tangent.unwrap_or_else(Tangent::zero)
    }

    /// Records `op` and its spatial tangent arithmetic.
    pub fn apply(&mut self, op: Operation<T>) -> Result<NodeRef> {
        let zero = T::zero();
        let one = T::one();
        let two = one + one;
        let idx = match op {
            Operation::Add(a, b) | Operation::Sub(a, b) => {
                let sub = matches!(op, Operation::Sub(..));
                let (ia, ib) = (self.check(a)?, self.check(b)?);
                let sign = if sub { -one } else { one };
                let value = self.nodes[ia].value + sign * self.nodes[ib].value;
                let (ta, tb) = (self.tan(ia), self.tan(ib));
                let mut t = Tangent::zero();
                for c in 0..2 {
                    t.value[c] = ta.value[c] + sign * tb.value[c];
                    t.nodes[c] = match (ta.nodes[c], tb.nodes[c]) {
                        (Some(x), Some(y)) => Some(self.lin([x, y], [one, sign], t.value[c])?),
                        (Some(x), None) => Some(x),
                        (None, Some(y)) if sub => Some(self.lin1(y, -one, t.value[c])?),
                        (None, Some(y)) => Some(y),
                        (None, None) => None,
                    };
                }
                let kind = if sub { OpKind::Sub } else { OpKind::Add };
                self.push(kind, [ia as u32, ib as u32], [one, sign], value, Some(t))?
            }
            Operation::Mul(a, b) => {
                let (ia, ib) = (self.check(a)?, self.check(b)?);
                let (va, vb) = (self.nodes[ia].value, self.nodes[ib].value);
                let (ta, tb) = (self.tan(ia), self.tan(ib));
                let mut t = Tangent::zero();
                for c in 0..2 {
                    t.value[c] = ta.value[c] * vb + va * tb.value[c];
                    let left = match ta.nodes[c] {
                        Some(x) => Some(self.lin([x, ib as u32], [vb, ta.value[c]], ta.value[c] * vb)?),
                        None => None,
                    };
                    let right = match tb.nodes[c] {
                        Some(y) => Some(self.lin([ia as u32, y], [tb.value[c], va], va * tb.value[c])?),
                        None => None,
                    };
                    t.nodes[c] = match (left, right) {
                        (Some(l), Some(r)) => Some(self.lin([l, r], [one, one], t.value[c])?),
                        (l, r) => l.or(r),
                    };
                }
                self.push(OpKind::Mul, [ia as u32, ib as u32], [vb, va], va * vb, Some(t))?
            }
            Operation::Div(a, b) => {
                let (ia, ib) = (self.check(a)?, self.check(b)?);
                let (va, vb) = (self.nodes[ia].value, self.nodes[ib].value);
                if vb == zero {
                    return Err(AutodiffError::DivisionByZero(OpKind::Div));
                }
                let value = va / vb;
                let inv = one / vb;
                // Reserve the primal index first so derivative nodes can reference it.
                let ic = self.push(OpKind::Div, [ia as u32, ib as u32], [inv, -value * inv], value, None)?;
                let (ta, tb) = (self.tan(ia), self.tan(ib));
                let mut t = Tangent::zero();
                for c in 0..2 {
                    // d(a/b) = (da - c db) / b
                    t.value[c] = (ta.value[c] - value * tb.value[c]) * inv;
                    let left = match ta.nodes[c] {
                        Some(x) => Some(self.lin([x, ib as u32], [inv, -ta.value[c] * inv * inv], ta.value[c] * inv)?),
                        None => None,
                    };
                    let right = match tb.nodes[c] {
                        Some(y) => {
                            let prod = value * tb.value[c];
                            let p = self.lin([ic, y], [tb.value[c], value], prod)?;
                            Some(self.lin([p, ib as u32], [inv, -prod * inv * inv], prod * inv)?)
                        }
                        None => None,
                    };
                    t.nodes[c] = match (left, right) {
                        (Some(l), Some(r)) => Some(self.lin([l, r], [one, -one], t.value[c])?),
                        (Some(l), None) => Some(l),
                        (None, Some(r)) => Some(self.lin1(r, -one, t.value[c])?),
                        (None, None) => None,
                    };
                }
                if !t.value[0].is_finite() || !t.value[1].is_finite() {
                    return Err(AutodiffError::NonFinite(OpKind::Div));
                }
                self.nodes[ic as usize].tangent = Some(t);
                ic
            }
            Operation::Neg(a) => self.unary_scaled(a, OpKind::Neg, -one)?,
            Operation::Scale(a, k) => self.unary_scaled(a, OpKind::Scale, k)?,
            Operation::Tanh(a) => {
                let ia = self.check(a)?;
                let va = self.nodes[ia].value;
                let value = va.tanh();
                let s = one - value * value;
                let ic = self.push(OpKind::Tanh, [ia as u32, NONE], [s, zero], value, None)?;
                // dc = (1 - c^2) da ; partial wrt c is -2 c da
                self.finish_unary(ic, ia, |ta| ([-two * value * ta, s], s * ta))?;
                ic
            }
            Operation::Sin(a) => {
                let ia = self.check(a)?;
                let va = self.nodes[ia].value;
                let (s, c) = (va.sin(), va.cos());
                let ic = self.push(OpKind::Sin, [ia as u32, NONE], [c, zero], s, None)?;
                self.finish_unary_on_input(ic, ia, |ta| ([-s * ta, c], c * ta))?;
                ic
            }
            Operation::Cos(a) => {
                let ia = self.check(a)?;
                let va = self.nodes[ia].value;
                let (s, c) = (va.sin(), va.cos());
                let ic = self.push(OpKind::Cos, [ia as u32, NONE], [-s, zero], c, None)?;
                self.finish_unary_on_input(ic, ia, |ta| ([-c * ta, -s], -s * ta))?;
                ic
            }
            Operation::Square(a) => {
                let ia = self.check(a)?;
                let va = self.nodes[ia].value;
                let ic = self.push(OpKind::Square, [ia as u32, NONE], [two * va, zero], va * va, None)?;
                self.finish_unary_on_input(ic, ia, |ta| ([two * ta, two * va], two * va * ta))?;
                ic
            }
        };
        Ok(self.node_ref(idx as usize))
    }

    fn unary_scaled(&mut self, a: NodeRef, kind: OpKind, k: T) -> Result<u32> {
        let ia = self.check(a)?;
        let value = k * self.nodes[ia].value;
        let ta = self.tan(ia);
        let mut t = Tangent::zero();
        for c in 0..2 {
            t.value[c] = k * ta.value[c];
            t.nodes[c] = match ta.nodes[c] {
                Some(x) => Some(self.lin1(x, k, t.value[c])?),
                None => None,
            };
        }
        self.push(kind, [ia as u32, NONE], [k, T::zero()], value, Some(t))
    }

    // Tangent of a unary op whose derivative depends on the OUTPUT node `ic`.
    // `rule(da)` returns ([partial wrt output, partial wrt da], tangent value).
    fn finish_unary<F>(&mut self, ic: u32, ia: usize, rule: F) -> Result<()>
    where
        F: Fn(T) -> ([T; 2], T),
    {
        self.finish_with_anchor(ic, ic, ia, rule)
    }

    // Same, with the derivative depending on the INPUT node `ia`.
    fn finish_unary_on_input<F>(&mut self, ic: u32, ia: usize, rule: F) -> Result<()>
    where
        F: Fn(T) -> ([T; 2], T),
    {
        self.finish_with_anchor(ic, ia as u32, ia, rule)
    }

    fn finish_with_anchor<F>(&mut self, ic: u32, anchor: u32, ia: usize, rule: F) -> Result<()>
    where
        F: Fn(T) -> ([T; 2], T),
    {
        let ta = self.tan(ia);
        let mut t = Tangent::zero();
        for c in 0..2 {
            let (partials, value) = rule(ta.value[c]);
            t.value[c] = value;
            t.nodes[c] = match ta.nodes[c] {
                Some(x) => Some(self.lin([anchor, x], partials, value)?),
                None => None,
            };
        }
        let kind = self.nodes[ic as usize].kind;
        if !t.value[0].is_finite() || !t.value[1].is_finite() {
            return Err(AutodiffError::NonFinite(kind));
        }
        self.nodes[ic as usize].tangent = Some(t);
        Ok(())
    }

    /// Node whose value is the `coordinate` component of `node`'s spatial
    /// tangent. The returned node is differentiable with respect to parameters.
    pub fn tangent_node(&mut self, node: NodeRef, coordinate: usize) -> Result<NodeRef> {
        if coordinate > 1 {
            return Err(AutodiffError::BadCoordinate(coordinate));
        }
        let i = self.check(node)?;
        let t = self.nodes[i].tangent.ok_or(AutodiffError::NoTangent(i))?;
        let idx = match t.nodes[coordinate] {
            Some(d) => d,
            None => self.derivative_constant(T::zero())?,
        };
        Ok(self.node_ref(idx as usize))
    }

    /// Gradient of `root`'s value with respect to every lifted parameter, in
    /// lifting order. One pass over nodes `root..=0`.
    pub fn reverse_sweep(&mut self, root: NodeRef) -> Result<Vec<T>> {
        let r = self.check(root)?;
        let mut adjoint = vec![T::zero(); r + 1];
        adjoint[r] = T::one();
        let mut visits = 0usize;
        for k in (0..=r).rev() {
            visits += 1;
            let a = adjoint[k];
            if a == T::zero() {
                continue;
            }
            if !a.is_finite() {
                self.sweep_visits = visits;
                return Err(AutodiffError::NonFiniteAdjoint(k));
            }
            let node = &self.nodes[k];
            for (p, d) in node.parents.iter().zip(node.partials.iter()) {
                if *p != NONE {
                    adjoint[*p as usize] = adjoint[*p as usize] + a * *d;
                }
            }
        }
        self.sweep_visits = visits;
        Ok(self
            .parameters
            .iter()
            .map(|&p| if (p as usize) <= r { adjoint[p as usize] } else { T::zero() })
            .collect())
    }

    // Convenience wrappers.

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Mul(a, b))
    }
    pub fn div(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Div(a, b))
    }
    pub fn neg(&mut self, a: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Neg(a))
    }
    pub fn tanh(&mut self, a: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Tanh(a))
    }
    pub fn sin(&mut self, a: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Sin(a))
    }
    pub fn cos(&mut self, a: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Cos(a))
    }
    pub fn square(&mut self, a: NodeRef) -> Result<NodeRef> {
        self.apply(Operation::Square(a))
    }
    pub fn scale(&mut self, a: NodeRef, k: T) -> Result<NodeRef> {
        self.apply(Operation::Scale(a, k))
    }

    /// `a + k`, recorded as an add with a constant leaf.
    pub fn add_constant(&mut self, a: NodeRef, k: T) -> Result<NodeRef> {
        let c = self.constant(k)?;
        self.add(a, c)
    }

    /// Sum of a slice of nodes; an empty slice yields a zero constant.
    pub fn sum(&mut self, terms: &[NodeRef]) -> Result<NodeRef> {
        let mut iter = terms.iter();
        let mut acc = match iter.next() {
            Some(&t) => t,
            None => return self.constant(T::zero()),
        };
        for &t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Checks the tape invariants: topological order and leaf tangent seeds.
    pub fn validate(&self) -> bool {
        for (k, n) in self.nodes.iter().enumerate() {
            if n.parents.iter().any(|&p| p != NONE && p as usize >= k) {
                return false;
            }
        }
        self.leaves.iter().all(|&(i, class)| {
            let n = &self.nodes[i as usize];
            match (class, n.tangent) {
                (LeafClass::Parameter, Some(t)) | (LeafClass::Constant, Some(t)) => {
                    t.value == [T::zero(); 2]
                }
                (LeafClass::Input, Some(t)) => match n.kind {
                    OpKind::Input(c) => {
                        let mut e = [T::zero(); 2];
                        e[c as usize] = T::one();
                        t.value == e
                    }
                    _ => false,
                },
                (LeafClass::Constant, None) => true,
                _ => false,
            }
        })
    }
}
