//! Fully connected `tanh` networks, one per field component.
//!
//! Parameters live in one flat vector. For each layer in order the weight
//! matrix is stored row-major (`fan_out x fan_in`), followed by its bias.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeRef, Result as AdResult, ScalarGraph};
use crate::elasticity::Tensor2;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("hidden_layers and width must be positive (got {hidden_layers} x {width})")]
    InvalidShape { hidden_layers: usize, width: usize },
    #[error("expected {expected} parameters, got {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("checkpoint parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub const INPUT_DIM: usize = 2;
pub const OUTPUT_DIM: usize = 1;

/// Architecture shared by the five field networks of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkShape {
    pub hidden_layers: usize,
    pub width: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        NetworkShape {
            hidden_layers: 4,
            width: 20,
        }
    }
}

impl NetworkShape {
    pub fn new(hidden_layers: usize, width: usize) -> Result<Self, NetworkError> {
        if hidden_layers == 0 || width == 0 {
            return Err(NetworkError::InvalidShape { hidden_layers, width });
        }
        Ok(NetworkShape { hidden_layers, width })
    }

    /// `(fan_in, fan_out)` for every layer including the linear output layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        dims.push((INPUT_DIM, self.width));
        for _ in 1..self.hidden_layers {
            dims.push((self.width, self.width));
        }
        dims.push((self.width, OUTPUT_DIM));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// A scalar-valued MLP `R^2 -> R` with `tanh` hidden layers and linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldNetwork<T> {
    shape: NetworkShape,
    params: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

impl<T: Real> FieldNetwork<T> {
    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn initialize(shape: NetworkShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); shape.parameter_count()];
        let mut net = FieldNetwork {
            shape,
            params: Vec::new(),
        };
        for span in net.spans() {
            let bound = (6.0 / (span.fan_in + span.fan_out) as f64).sqrt();
            for w in &mut params[span.weights..span.weights + span.fan_in * span.fan_out] {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        net.params = params;
        net
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        FieldNetwork {
            shape,
            params: vec![T::zero(); shape.parameter_count()],
        }
    }

    pub fn from_parameters(shape: NetworkShape, params: Vec<T>) -> Result<Self, NetworkError> {
        let expected = shape.parameter_count();
        if params.len() != expected {
            return Err(NetworkError::ParameterCount {
                expected,
                found: params.len(),
            });
        }
        Ok(FieldNetwork { shape, params })
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn parameters(&self) -> &[T] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn spans(&self) -> Vec<LayerSpan> {
        let mut off = 0;
        self.shape
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let span = LayerSpan {
                    fan_in,
                    fan_out,
                    weights: off,
                    bias: off + fan_in * fan_out,
                };
                off += fan_in * fan_out + fan_out;
                span
            })
            .collect()
    }

    fn layer_views(&self) -> Vec<(ArrayView2<'_, T>, ArrayView1<'_, T>)> {
        self.spans()
            .into_iter()
            .map(|sp| {
                let w = ArrayView2::from_shape(
                    (sp.fan_out, sp.fan_in),
                    &self.params[sp.weights..sp.weights + sp.fan_in * sp.fan_out],
                )
                .expect("layer span");
                let b = ArrayView1::from(&self.params[sp.bias..sp.bias + sp.fan_out]);
                (w, b)
            })
            .collect()
    }

    /// Plain evaluation: output value and spatial gradient.
    pub fn eval(&self, x: T, y: T) -> (T, [T; 2]) {
        let mut h = vec![x, y];
        let mut dh = [vec![T::one(), T::zero()], vec![T::zero(), T::one()]];
        let spans = self.spans();
        let last = spans.len() - 1;
        for (l, sp) in spans.iter().enumerate() {
            let mut z = vec![T::zero(); sp.fan_out];
            let mut dz = [vec![T::zero(); sp.fan_out], vec![T::zero(); sp.fan_out]];
            for o in 0..sp.fan_out {
                let row = &self.params[sp.weights + o * sp.fan_in..sp.weights + (o + 1) * sp.fan_in];
                let mut acc = self.params[sp.bias + o];
                let mut a0 = T::zero();
                let mut a1 = T::zero();
                for i in 0..sp.fan_in {
                    acc = acc + row[i] * h[i];
                    a0 = a0 + row[i] * dh[0][i];
                    a1 = a1 + row[i] * dh[1][i];
                }
                z[o] = acc;
                dz[0][o] = a0;
                dz[1][o] = a1;
            }
            if l < last {
                for o in 0..sp.fan_out {
                    let a = z[o].tanh();
                    let s = T::one() - a * a;
                    z[o] = a;
                    dz[0][o] = s * dz[0][o];
                    dz[1][o] = s * dz[1][o];
                }
            }
            h = z;
            dh = dz;
        }
        (h[0], [dh[0][0], dh[1][0]])
    }

    /// Lifts every parameter as a tape leaf.
    pub fn lift(&self, graph: &mut ScalarGraph<T>) -> AdResult<TapeNetwork<'_, T>> {
        let leaves = self
            .params
            .iter()
            .map(|&p| graph.lift_parameter(p))
            .collect::<AdResult<Vec<_>>>()?;
        Ok(TapeNetwork { net: self, leaves })
    }

    /// Records the network on `graph`, lifting its parameters first. The
    /// returned node's tangent channel carries `(d out/dx, d out/dy)`.
    pub fn forward(&self, graph: &mut ScalarGraph<T>, x: NodeRef, y: NodeRef) -> AdResult<NodeRef> {
        self.lift(graph)?.forward(graph, x, y)
    }

    /// Batched evaluation with value and the requested tangent channels.
    pub fn forward_batch(&self, points: &[[T; 2]], channels: Channels) -> BatchTrace<T> {
        let n = points.len();
        let dirs = channels.directions();
        let blocks = 1 + dirs.len();
        let cols = blocks * n;
        let mut h = Array2::<T>::zeros((INPUT_DIM, cols));
        for (k, p) in points.iter().enumerate() {
            h[[0, k]] = p[0];
            h[[1, k]] = p[1];
        }
        for (b, &d) in dirs.iter().enumerate() {
            h.slice_mut(s![d, (b + 1) * n..(b + 2) * n]).fill(T::one());
        }
        let layers = self.layer_views();
        let last = layers.len() - 1;
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(last);
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = Array2::<T>::zeros((w.nrows(), cols));
            general_mat_mul(T::one(), w, &h, T::zero(), &mut z);
            inputs.push(h);
            let zs = z.as_slice_mut().expect("standard layout");
            for (row, &bias) in zs.chunks_exact_mut(cols).zip(b.iter()) {
                row[..n].iter_mut().for_each(|v| *v = *v + bias);
            }
            if l == last {
                h = z;
                break;
            }
            let mut next = z.clone();
            let ns = next.as_slice_mut().expect("standard layout");
            for row in ns.chunks_exact_mut(cols) {
                let (val, tan) = row.split_at_mut(n);
                T::tanh_slice(val);
                for blk in tan.chunks_exact_mut(n) {
                    for (t, &a) in blk.iter_mut().zip(val.iter()) {
                        *t = (T::one() - a * a) * *t;
                    }
                }
            }
            pre.push(z);
            h = next;
        }
        BatchTrace {
            n,
            directions: dirs,
            inputs,
            pre,
            output: h,
        }
    }

    /// Accumulates `sum_cols upstream[col] * d output[col] / d theta` into `grad`.
    ///
    /// `upstream` has the column layout of [`BatchTrace::output`].
    pub fn backward_batch(&self, trace: &BatchTrace<T>, upstream: ArrayView2<'_, T>, grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len());
        let n = trace.n;
        let layers = self.layer_views();
        let spans = self.spans();
        let last = layers.len() - 1;
        let cols = trace.output.ncols();
        let two = T::lit(2.0);
        let mut g = upstream.as_standard_layout().into_owned();
        for l in (0..=last).rev() {
            if l < last {
                // through tanh: value block gets gA*S - 2 A S sum_k gAk * Zk,
                // tangent blocks gAk * S
                let act = trace.inputs[l + 1].as_slice().expect("standard layout");
                let z = trace.pre[l].as_slice().expect("standard layout");
                let gs = g.as_slice_mut().expect("standard layout");
                for ((grow, arow), zrow) in gs
                    .chunks_exact_mut(cols)
                    .zip(act.chunks_exact(cols))
                    .zip(z.chunks_exact(cols))
                {
                    let (gv, gt) = grow.split_at_mut(n);
                    let a = &arow[..n];
                    for (gblk, zblk) in gt.chunks_exact_mut(n).zip(zrow[n..].chunks_exact(n)) {
                        for j in 0..n {
                            let sd = T::one() - a[j] * a[j];
                            gv[j] = gv[j] - two * a[j] * gblk[j] * zblk[j];
                            gblk[j] = gblk[j] * sd;
                        }
                    }
                    for j in 0..n {
                        gv[j] = gv[j] * (T::one() - a[j] * a[j]);
                    }
                }
            }
            let sp = spans[l];
            let gw = &mut grad[sp.weights..sp.weights + sp.fan_in * sp.fan_out];
            let mut gw = ArrayViewMut2::from_shape((sp.fan_out, sp.fan_in), gw).expect("layer span");
            general_mat_mul(T::one(), &g, &trace.inputs[l].t(), T::one(), &mut gw);
            let gs = g.as_slice().expect("standard layout");
            for (dst, row) in grad[sp.bias..sp.bias + sp.fan_out].iter_mut().zip(gs.chunks_exact(cols)) {
                *dst = row[..n].iter().fold(*dst, |acc, &v| acc + v);
            }
            if l > 0 {
                let (w, _) = &layers[l];
                let mut next = Array2::<T>::zeros((sp.fan_in, cols));
                general_mat_mul(T::one(), &w.t(), &g, T::zero(), &mut next);
                g = next;
            }
        }
    }

    /// Writes the text checkpoint. Layout:
    ///
    /// ```text
    /// cre-pinn-network 1
    /// input_dim 2
    /// hidden_layers <L>
    /// width <W>
    /// output_dim 1
    /// parameters <P>
    /// <P lines, one parameter each, shortest round-trip exponent form>
    /// ```
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "cre-pinn-network 1");
        let _ = writeln!(out, "input_dim {INPUT_DIM}");
        let _ = writeln!(out, "hidden_layers {}", self.shape.hidden_layers);
        let _ = writeln!(out, "width {}", self.shape.width);
        let _ = writeln!(out, "output_dim {OUTPUT_DIM}");
        let _ = writeln!(out, "parameters {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{p:e}");
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, NetworkError> {
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<usize, NetworkError> {
            let (i, line) = lines.next().ok_or(NetworkError::Parse {
                line: 0,
                msg: format!("missing {key}"),
            })?;
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(k), Some(v), None) if k == key => v.parse().map_err(|_| NetworkError::Parse {
                    line: i + 1,
                    msg: format!("bad value for {key}"),
                }),
                _ => Err(NetworkError::Parse {
                    line: i + 1,
                    msg: format!("expected `{key} <n>`"),
                }),
            }
        };
        if header("cre-pinn-network")? != 1 {
            return Err(NetworkError::Parse {
                line: 1,
                msg: "unsupported version".into(),
            });
        }
        let input_dim = header("input_dim")?;
        let hidden_layers = header("hidden_layers")?;
        let width = header("width")?;
        let output_dim = header("output_dim")?;
        let count = header("parameters")?;
        if input_dim != INPUT_DIM || output_dim != OUTPUT_DIM {
            return Err(NetworkError::Parse {
                line: 2,
                msg: "only 2 -> 1 networks are supported".into(),
            });
        }
        let shape = NetworkShape::new(hidden_layers, width)?;
        let mut params = Vec::with_capacity(count);
        for (i, line) in lines {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            params.push(t.parse::<T>().map_err(|_| NetworkError::Parse {
                line: i + 1,
                msg: format!("bad parameter `{t}`"),
            })?);
        }
        if params.len() != count {
            return Err(NetworkError::ParameterCount {
                expected: count,
                found: params.len(),
            });
        }
        Self::from_parameters(shape, params)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}

/// A network whose parameters are leaves of a particular graph.
pub struct TapeNetwork<'a, T> {
    net: &'a FieldNetwork<T>,
    leaves: Vec<NodeRef>,
}

impl<T: Real> TapeNetwork<'_, T> {
    pub fn leaves(&self) -> &[NodeRef] {
        &self.leaves
    }

    pub fn forward(&self, graph: &mut ScalarGraph<T>, x: NodeRef, y: NodeRef) -> AdResult<NodeRef> {
        let spans = self.net.spans();
        let last = spans.len() - 1;
        let mut h = vec![x, y];
        for (l, sp) in spans.iter().enumerate() {
            let mut next = Vec::with_capacity(sp.fan_out);
            for o in 0..sp.fan_out {
                let mut acc = self.leaves[sp.bias + o];
                for (i, &hi) in h.iter().enumerate() {
                    let w = self.leaves[sp.weights + o * sp.fan_in + i];
                    let prod = graph.mul(w, hi)?;
                    acc = graph.add(acc, prod)?;
                }
                next.push(if l < last { graph.tanh(acc)? } else { acc });
            }
            h = next;
        }
        Ok(h[0])
    }
}

/// Which spatial tangent channels a batched evaluation carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Channels {
    pub dx: bool,
    pub dy: bool,
}

impl Channels {
    pub const VALUE: Channels = Channels { dx: false, dy: false };
    pub const ALL: Channels = Channels { dx: true, dy: true };

    pub fn directions(self) -> Vec<usize> {
        let mut d = Vec::new();
        if self.dx {
            d.push(0);
        }
        if self.dy {
            d.push(1);
        }
        d
    }

    pub fn union(self, o: Channels) -> Channels {
        Channels {
            dx: self.dx || o.dx,
            dy: self.dy || o.dy,
        }
    }
}

/// Forward record of a batched evaluation, kept for the backward pass.
///
/// Column layout: block 0 holds the values of the `n` points, block `1 + k`
/// the tangent along `directions[k]`.
#[derive(Debug, Clone)]
pub struct BatchTrace<T> {
    n: usize,
    directions: Vec<usize>,
    /// Input of each layer; entry `l + 1` holds the activations of layer `l`.
    inputs: Vec<Array2<T>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<T>>,
    output: Array2<T>,
}

impl<T: Real> BatchTrace<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn output(&self) -> &Array2<T> {
        &self.output
    }

    pub fn values(&self) -> ArrayView1<'_, T> {
        self.output.slice(s![0, 0..self.n])
    }

    /// Tangent along coordinate `dir`, if that channel was requested.
    pub fn tangent(&self, dir: usize) -> Option<ArrayView1<'_, T>> {
        let b = self.directions.iter().position(|&d| d == dir)?;
        Some(self.output.slice(s![0, (b + 1) * self.n..(b + 2) * self.n]))
    }

    /// Column offset of the block for `dir` (`None` is the value block).
    pub fn block_offset(&self, dir: Option<usize>) -> Option<usize> {
        match dir {
            None => Some(0),
            Some(d) => self
                .directions
                .iter()
                .position(|&x| x == d)
                .map(|b| (b + 1) * self.n),
        }
    }
}

/// Field component approximated by one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Ux,
    Uy,
    Sxx,
    Syy,
    Sxy,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::Ux,
        Component::Uy,
        Component::Sxx,
        Component::Syy,
        Component::Sxy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Ux => "u_x",
            Component::Uy => "u_y",
            Component::Sxx => "sigma_xx",
            Component::Syy => "sigma_yy",
            Component::Sxy => "sigma_xy",
        }
    }
}

/// The five independent networks of the mixed formulation. Stress symmetry
/// holds structurally: a single network serves both shear entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSolution<T> {
    nets: [FieldNetwork<T>; 5],
}

/// Plain-value samples of the mixed fields at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFields<T> {
    pub u: Vec<[T; 2]>,
    pub grad_u: Vec<Tensor2<T>>,
    pub sigma: Vec<Tensor2<T>>,
}

impl<T: Real> MixedSolution<T> {
    /// Network `k` is seeded with `seed * 5 + k`.
    pub fn initialize(shape: NetworkShape, seed: u64) -> Self {
        let net = |k: u64| FieldNetwork::initialize(shape, seed.wrapping_mul(5).wrapping_add(k));
        MixedSolution {
            nets: [net(0), net(1), net(2), net(3), net(4)],
        }
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        let z = FieldNetwork::zeros(shape);
        MixedSolution {
            nets: [z.clone(), z.clone(), z.clone(), z.clone(), z],
        }
    }

    pub fn from_networks(nets: [FieldNetwork<T>; 5]) -> Result<Self, NetworkError> {
        let shape = nets[0].shape();
        if let Some(bad) = nets.iter().find(|n| n.shape() != shape) {
            return Err(NetworkError::ParameterCount {
                expected: shape.parameter_count(),
                found: bad.parameters().len(),
            });
        }
        Ok(MixedSolution { nets })
    }

    pub fn shape(&self) -> NetworkShape {
        self.nets[0].shape()
    }

    pub fn net(&self, c: Component) -> &FieldNetwork<T> {
        &self.nets[c.index()]
    }

    pub fn net_mut(&mut self, c: Component) -> &mut FieldNetwork<T> {
        &mut self.nets[c.index()]
    }

    pub fn networks(&self) -> &[FieldNetwork<T>; 5] {
        &self.nets
    }

    pub fn parameter_count(&self) -> usize {
        self.nets.iter().map(|n| n.parameters().len()).sum()
    }

    /// Start offset of each network inside the concatenated parameter vector.
    pub fn offsets(&self) -> [usize; 5] {
        let mut off = [0; 5];
        let mut acc = 0;
        for (k, n) in self.nets.iter().enumerate() {
            off[k] = acc;
            acc += n.parameters().len();
        }
        off
    }

    pub fn flat_parameters(&self) -> Vec<T> {
        self.nets.iter().flat_map(|n| n.parameters().iter().copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[T]) -> Result<(), NetworkError> {
        let expected = self.parameter_count();
        if flat.len() != expected {
            return Err(NetworkError::ParameterCount {
                expected,
                found: flat.len(),
            });
        }
        let mut off = 0;
        for n in &mut self.nets {
            let len = n.parameters().len();
            n.parameters_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }

    /// Plain evaluation of all fields; `sigma` is assembled symmetric and
    /// `grad_u` comes from the displacement networks' tangent channels.
    pub fn evaluate_fields(&self, points: &[[T; 2]]) -> SampledFields<T> {
        let ux = self.net(Component::Ux).forward_batch(points, Channels::ALL);
        let uy = self.net(Component::Uy).forward_batch(points, Channels::ALL);
        let sxx = self.net(Component::Sxx).forward_batch(points, Channels::VALUE);
        let syy = self.net(Component::Syy).forward_batch(points, Channels::VALUE);
        let sxy = self.net(Component::Sxy).forward_batch(points, Channels::VALUE);
        let (uxv, uyv) = (ux.values(), uy.values());
        let (uxx, uxy) = (ux.tangent(0).unwrap(), ux.tangent(1).unwrap());
        let (uyx, uyy) = (uy.tangent(0).unwrap(), uy.tangent(1).unwrap());
        let (a, b, c) = (sxx.values(), syy.values(), sxy.values());
        let n = points.len();
        SampledFields {
            u: (0..n).map(|k| [uxv[k], uyv[k]]).collect(),
            grad_u: (0..n).map(|k| Tensor2::new(uxx[k], uxy[k], uyx[k], uyy[k])).collect(),
            sigma: (0..n).map(|k| Tensor2::symmetric(a[k], b[k], c[k])).collect(),
        }
    }

    /// Writes one checkpoint file per component (`<name>.net`) into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), NetworkError> {
        std::fs::create_dir_all(dir)?;
        for c in Component::ALL {
            self.net(c).save(&dir.join(format!("{}.net", c.name())))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self, NetworkError> {
        let load = |c: Component| FieldNetwork::load(&dir.join(format!("{}.net", c.name())));
        Self::from_networks([
            load(Component::Ux)?,
            load(Component::Uy)?,
            load(Component::Sxx)?,
            load(Component::Syy)?,
            load(Component::Sxy)?,
        ])
    }
}
