//! Oracle checks that need no training: differentiation, convex duality,
//! the error decomposition, the manufactured solution, and quadrature order.
//!
//! Every oracle here is written out independently of the library routine it
//! checks.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use cre_pinn::autodiff::{NodeRef, ScalarGraph};
use cre_pinn::cre::{
    bound_report, cre_psi, orthogonality_check, AdmissiblePair, DisplacementSample, QuadratureGrid, StressFn,
};
use cre_pinn::elasticity::{EnergyDensity, ManufacturedProblem, Material, Side, Tensor2};
use cre_pinn::network::{Component, FieldNetwork, NetworkShape};
use cre_pinn::pinn::{ClosedFormFields, TapeFields};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{mark}] {}: {} ({:.2}s)", self.name, self.detail, self.seconds)
    }
}

fn timed(name: &'static str, body: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (passed, detail) = body();
    Check {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

const STEP: f64 = 1e-6;
/// Derivatives below `FD_FLOOR * max(1, |f|)` are compared on that scale: a
/// central difference at `STEP` carries about `1e-10 * |f|` of roundoff.
const FD_FLOOR: f64 = 1e-4;

fn rel_err(ad: f64, fd: f64, f: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(FD_FLOOR * f.abs().max(1.0))
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a / (1 + b^2)`
    Ratio(usize, usize),
    Neg(usize),
    Tanh(usize),
    Sin(usize),
    Cos(usize),
    Square(usize),
    Scale(usize, f64),
}

const N_PARAMS: usize = 4;
/// x, y, parameters, one constant.
const N_LEAVES: usize = 2 + N_PARAMS + 1;

/// Value and one directional derivative, for the forward-mode oracle.
#[derive(Debug, Clone, Copy)]
struct Dual(f64, f64);

impl Dual {
    fn apply(op: Op, v: &[Dual]) -> Dual {
        match op {
            Op::Add(a, b) => Dual(v[a].0 + v[b].0, v[a].1 + v[b].1),
            Op::Sub(a, b) => Dual(v[a].0 - v[b].0, v[a].1 - v[b].1),
            Op::Mul(a, b) => Dual(v[a].0 * v[b].0, v[a].1 * v[b].0 + v[a].0 * v[b].1),
            Op::Ratio(a, b) => {
                let den = 1.0 + v[b].0 * v[b].0;
                let dden = 2.0 * v[b].0 * v[b].1;
                Dual(v[a].0 / den, (v[a].1 * den - v[a].0 * dden) / (den * den))
            }
            Op::Neg(a) => Dual(-v[a].0, -v[a].1),
            Op::Tanh(a) => {
                let t = v[a].0.tanh();
                Dual(t, (1.0 - t * t) * v[a].1)
            }
            Op::Sin(a) => Dual(v[a].0.sin(), v[a].0.cos() * v[a].1),
            Op::Cos(a) => Dual(v[a].0.cos(), -v[a].0.sin() * v[a].1),
            Op::Square(a) => Dual(v[a].0 * v[a].0, 2.0 * v[a].0 * v[a].1),
            Op::Scale(a, k) => Dual(k * v[a].0, k * v[a].1),
        }
    }
}

/// Random scalar expression of `x`, `y`, and `N_PARAMS` parameters; the root
/// is the sum of the last three nodes.
struct Expression {
    constant: f64,
    ops: Vec<Op>,
}

impl Expression {
    fn random(rng: &mut ChaCha8Rng, point: [f64; 2], params: &[f64]) -> Self {
        let mut e = Expression {
            constant: rng.random_range(-1.0..1.0),
            ops: Vec::new(),
        };
        // tie every parameter to a coordinate so mixed derivatives are nonzero
        for p in 0..N_PARAMS {
            let c = rng.random_range(0..2);
            e.ops.push(if rng.random_bool(0.5) {
                Op::Mul(2 + p, c)
            } else {
                Op::Add(2 + p, c)
            });
        }
        for _ in 0..rng.random_range(8..20) {
            let values = e.values(point, params, 0);
            let len = values.len();
            let pick = |rng: &mut ChaCha8Rng| {
                if rng.random_bool(0.7) {
                    rng.random_range(len.saturating_sub(6)..len)
                } else {
                    rng.random_range(0..len)
                }
            };
            let (a, b) = (pick(rng), pick(rng));
            let small = |i: usize| values[i].0.abs() <= 4.0;
            let op = match rng.random_range(0..10) {
                0 => Op::Add(a, b),
                1 => Op::Sub(a, b),
                2 if small(a) && small(b) => Op::Mul(a, b),
                3 => Op::Ratio(a, b),
                4 => Op::Neg(a),
                5 => Op::Sin(a),
                6 => Op::Cos(a),
                7 if small(a) => Op::Square(a),
                8 => Op::Scale(a, rng.random_range(-2.0..2.0)),
                _ => Op::Tanh(a),
            };
            e.ops.push(op);
        }
        e
    }

    /// Plain forward evaluation with a seed on coordinate `dir` (0 or 1), or
    /// on no input when `dir >= 2`.
    fn values(&self, point: [f64; 2], params: &[f64], dir: usize) -> Vec<Dual> {
        let mut v = vec![
            Dual(point[0], if dir == 0 { 1.0 } else { 0.0 }),
            Dual(point[1], if dir == 1 { 1.0 } else { 0.0 }),
        ];
        v.extend(params.iter().map(|&p| Dual(p, 0.0)));
        v.push(Dual(self.constant, 0.0));
        for &op in &self.ops {
            let d = Dual::apply(op, &v);
            v.push(d);
        }
        v
    }

    fn root(&self, point: [f64; 2], params: &[f64], dir: usize) -> Dual {
        let v = self.values(point, params, dir);
        v[v.len() - 3..].iter().fold(Dual(0.0, 0.0), |a, b| Dual(a.0 + b.0, a.1 + b.1))
    }

    fn record(&self, g: &mut ScalarGraph<f64>, point: [f64; 2], params: &[f64]) -> NodeRef {
        let mut n = vec![g.lift_input(0, point[0]).unwrap(), g.lift_input(1, point[1]).unwrap()];
        n.extend(params.iter().map(|&p| g.lift_parameter(p).unwrap()));
        n.push(g.constant(self.constant).unwrap());
        for &op in &self.ops {
            let r = match op {
                Op::Add(a, b) => g.add(n[a], n[b]),
                Op::Sub(a, b) => g.sub(n[a], n[b]),
                Op::Mul(a, b) => g.mul(n[a], n[b]),
                Op::Ratio(a, b) => {
                    let s = g.square(n[b]).unwrap();
                    let d = g.add_constant(s, 1.0).unwrap();
                    g.div(n[a], d)
                }
                Op::Neg(a) => g.neg(n[a]),
                Op::Tanh(a) => g.tanh(n[a]),
                Op::Sin(a) => g.sin(n[a]),
                Op::Cos(a) => g.cos(n[a]),
                Op::Square(a) => g.square(n[a]),
                Op::Scale(a, k) => g.scale(n[a], k),
            };
            n.push(r.unwrap());
        }
        debug_assert_eq!(n.len(), N_LEAVES + self.ops.len());
        g.sum(&n[n.len() - 3..]).unwrap()
    }
}

fn shifted<const N: usize>(v: [f64; N], i: usize, h: f64) -> [f64; N] {
    let mut w = v;
    w[i] += h;
    w
}

/// Worst relative errors `[parameter, spatial, mixed]` against central differences.
fn expression_errors(cases: usize, seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..cases {
        let point = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let params: [f64; N_PARAMS] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
        let expr = Expression::random(&mut rng, point, &params);
        let mut g = ScalarGraph::new();
        let root = expr.record(&mut g, point, &params);
        let f = g.value(root).unwrap();
        let tangent = g.tangent(root).unwrap();
        let grad = g.reverse_sweep(root).unwrap();
        for i in 0..N_PARAMS {
            let fd = (expr.root(point, &shifted(params, i, STEP), 2).0 - expr.root(point, &shifted(params, i, -STEP), 2).0)
                / (2.0 * STEP);
            worst[0] = worst[0].max(rel_err(grad[i], fd, f));
        }
        for c in 0..2 {
            let fd = (expr.root(shifted(point, c, STEP), &params, 2).0 - expr.root(shifted(point, c, -STEP), &params, 2).0)
                / (2.0 * STEP);
            worst[1] = worst[1].max(rel_err(tangent[c], fd, f));
            let d = g.tangent_node(root, c).unwrap();
            let mixed = g.reverse_sweep(d).unwrap();
            for i in 0..N_PARAMS {
                let fd = (expr.root(point, &shifted(params, i, STEP), c).1 - expr.root(point, &shifted(params, i, -STEP), c).1)
                    / (2.0 * STEP);
                worst[2] = worst[2].max(rel_err(mixed[i], fd, tangent[c]));
            }
        }
    }
    worst
}

/// Same three error kinds for random networks; the oracle is `FieldNetwork::eval`.
fn network_errors(cases: usize, seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..cases {
        let shape = NetworkShape::new(rng.random_range(1..5), rng.random_range(2..21)).unwrap();
        let mut net = FieldNetwork::<f64>::initialize(shape, rng.random());
        for p in net.parameters_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let mut g = ScalarGraph::new();
        let x = g.lift_input(0, p[0]).unwrap();
        let y = g.lift_input(1, p[1]).unwrap();
        let out = net.forward(&mut g, x, y).unwrap();
        let f = g.value(out).unwrap();
        let tangent = g.tangent(out).unwrap();
        let grad = g.reverse_sweep(out).unwrap();
        let picks: Vec<usize> = (0..8).map(|_| rng.random_range(0..grad.len())).collect();
        let perturbed = |i: usize, h: f64| {
            let mut n = net.clone();
            n.parameters_mut()[i] += h;
            n.eval(p[0], p[1])
        };
        for &i in &picks {
            let fd = (perturbed(i, STEP).0 - perturbed(i, -STEP).0) / (2.0 * STEP);
            worst[0] = worst[0].max(rel_err(grad[i], fd, f));
        }
        for c in 0..2 {
            let (a, b) = (shifted(p, c, STEP), shifted(p, c, -STEP));
            let fd = (net.eval(a[0], a[1]).0 - net.eval(b[0], b[1]).0) / (2.0 * STEP);
            worst[1] = worst[1].max(rel_err(tangent[c], fd, f));
            let d = g.tangent_node(out, c).unwrap();
            let mixed = g.reverse_sweep(d).unwrap();
            for &i in &picks {
                let fd = (perturbed(i, STEP).1[c] - perturbed(i, -STEP).1[c]) / (2.0 * STEP);
                worst[2] = worst[2].max(rel_err(mixed[i], fd, tangent[c]));
            }
        }
    }
    worst
}

/// Parameter gradients and spatial tangents to `1e-5`, mixed second order to
/// `1e-4`, on 100 random expressions and 50 random networks.
pub fn autodiff_check() -> Check {
    timed("autodiff vs central differences", || {
        let e = expression_errors(100, 101);
        let n = network_errors(50, 102);
        let passed = e[0] <= 1e-5 && e[1] <= 1e-5 && e[2] <= 1e-4 && n[0] <= 1e-5 && n[1] <= 1e-5 && n[2] <= 1e-4;
        let detail = format!(
            "expressions param {:.1e} spatial {:.1e} mixed {:.1e}; networks param {:.1e} spatial {:.1e} mixed {:.1e}",
            e[0], e[1], e[2], n[0], n[1], n[2]
        );
        (passed, detail)
    })
}

/// `W(eps) + W*(tau) - tau:eps >= 0` on random pairs, `= 0` for `tau = K:eps`.
pub fn fenchel_young_check(material: &Material<f64>) -> Check {
    timed("Fenchel-Young inequality", || {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let (mut min_gap, mut max_eq) = (f64::INFINITY, 0.0f64);
        for _ in 0..10_000 {
            let mut r = || rng.random_range(-3.0..3.0);
            let g = Tensor2::new(r(), r(), r(), r());
            let tau = Tensor2::symmetric(r(), r(), r());
            min_gap = min_gap.min(material.fenchel_young_gap(&g, &tau));
            max_eq = max_eq.max(material.fenchel_young_gap(&g, &material.constitutive(&g)).abs());
        }
        (
            min_gap >= 0.0 && max_eq <= 1e-12,
            format!("min gap {min_gap:.3e}, max equality gap {max_eq:.1e}"),
        )
    })
}

const AIRY: f64 = 0.3;

/// Bubble perturbation `sin(pi x) sin(pi y) (1, 1)`; vanishes on the boundary.
fn bubble(x: f64, y: f64) -> DisplacementSample<f64> {
    let b = (PI * x).sin() * (PI * y).sin();
    let bx = PI * (PI * x).cos() * (PI * y).sin();
    let by = PI * (PI * x).sin() * (PI * y).cos();
    DisplacementSample {
        u: [b, b],
        grad: Tensor2::new(bx, by, bx, by),
    }
}

/// Stress of the Airy potential `c sin^2(pi x) sin^2(pi y)`: divergence free,
/// traction free on the boundary.
fn airy(x: f64, y: f64) -> Tensor2<f64> {
    let (sx2, sy2) = ((PI * x).sin().powi(2), (PI * y).sin().powi(2));
    let axx = AIRY * 2.0 * PI * PI * (2.0 * PI * x).cos() * sy2;
    let ayy = AIRY * 2.0 * PI * PI * sx2 * (2.0 * PI * y).cos();
    let axy = AIRY * PI * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
    Tensor2::symmetric(ayy, axx, -axy)
}

/// Relative sum gap `<= 1e-3` and cross term `<= 1e-6` for an exactly
/// admissible pair on the `n x n` grid.
pub fn decomposition_check(problem: &ManufacturedProblem<f64>, n: usize) -> Check {
    timed("error decomposition for admissible pair", || {
        let grid = QuadratureGrid::new(n).expect("grid size is positive");
        let u = |x: f64, y: f64| {
            let e = problem.exact_solution(x, y);
            let b = bubble(x, y);
            DisplacementSample {
                u: [e.u[0] + b.u[0], e.u[1] + b.u[1]],
                grad: e.grad_u + b.grad,
            }
        };
        let s = StressFn(|x: f64, y: f64| problem.exact_solution(x, y).sigma + airy(x, y));
        let r = match bound_report(&AdmissiblePair::new(&u, &s), problem, &grid) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        let cross = match orthogonality_check(&bubble, &StressFn(airy), &grid) {
            Ok(c) => c,
            Err(e) => return (false, e.to_string()),
        };
        (
            r.sum_gap <= 1e-3 && cross.abs() <= 1e-6,
            format!(
                "psi {:.6e} phi {:.6e} varphi {:.6e} gap {:.1e}, cross term {:.1e}",
                r.psi, r.phi, r.varphi, r.sum_gap, cross
            ),
        )
    })
}

/// `div sigma + f` from second derivatives of the displacement, written out
/// here in Navier form.
fn navier_residual(problem: &ManufacturedProblem<f64>, x: f64, y: f64) -> [f64; 2] {
    let (l, m, q) = (problem.material.lambda, problem.material.mu, problem.q);
    let (s2x, c2x) = ((2.0 * PI * x).sin(), (2.0 * PI * x).cos());
    let (sx, cx) = ((PI * x).sin(), (PI * x).cos());
    let (sy, cy) = ((PI * y).sin(), (PI * y).cos());
    let ux_xx = -4.0 * PI * PI * c2x * sy;
    let ux_yy = -PI * PI * c2x * sy;
    let ux_xy = -2.0 * PI * PI * s2x * cy;
    let uy_xx = -PI * PI * sx * q * y.powi(4) / 4.0;
    let uy_yy = 3.0 * q * sx * y * y;
    let uy_xy = PI * cx * q * y.powi(3);
    let f = problem.body_force(x, y);
    [
        (l + 2.0 * m) * ux_xx + m * ux_yy + (l + m) * uy_xy + f[0],
        (l + m) * ux_xy + m * uy_xx + (l + 2.0 * m) * uy_yy + f[1],
    ]
}

/// Momentum balance to `1e-8` at 1000 random points (both from written-out
/// second derivatives and from tape tangents of the exact stress) and every
/// boundary condition to `1e-10`.
pub fn manufactured_check(problem: &ManufacturedProblem<f64>) -> Check {
    timed("manufactured solution consistency", || {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let fields = ClosedFormFields { problem: *problem };
        let mut worst_navier = 0.0f64;
        let mut worst_tape = 0.0f64;
        for _ in 0..1000 {
            let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let r = navier_residual(problem, x, y);
            worst_navier = worst_navier.max(r[0].abs()).max(r[1].abs());
            let mut g = ScalarGraph::new();
            let (xn, yn) = (g.lift_input(0, x).unwrap(), g.lift_input(1, y).unwrap());
            let [sxx, syy, sxy] = [Component::Sxx, Component::Syy, Component::Sxy]
                .map(|c| {
                    let node = fields.record(&mut g, c, xn, yn).unwrap();
                    g.tangent(node).unwrap()
                });
            let f = problem.body_force(x, y);
            let rx = sxx[0] + sxy[1] + f[0];
            let ry = sxy[0] + syy[1] + f[1];
            worst_tape = worst_tape.max(rx.abs()).max(ry.abs());
        }
        let mut worst_bc = 0.0f64;
        let bcs = problem.boundary_conditions();
        for side in Side::ALL {
            for k in 0..=100 {
                let (x, y) = side.point(k as f64 / 100.0);
                let e = problem.exact_solution(x, y);
                for bc in bcs.iter().filter(|b| b.side == side) {
                    worst_bc = worst_bc.max(bc.residual(e.u, &e.sigma, x, y).abs());
                }
            }
        }
        (
            worst_navier <= 1e-8 && worst_tape <= 1e-8 && worst_bc <= 1e-10,
            format!("balance {worst_navier:.1e} (tape {worst_tape:.1e}), boundary {worst_bc:.1e}"),
        )
    })
}

/// Gauss-Legendre nodes and weights on `[0, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut t = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, t);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
                let step = p1 / dp;
                t -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (0.5 * (t + 1.0), 1.0 / ((1.0 - t * t) * dp * dp))
        })
        .collect()
}

/// Richardson ratio of the midpoint error between grids 100 and 200 on a
/// smooth non-periodic pair, in `[3.5, 4.5]`.
pub fn quadrature_order_check(material: &Material<f64>) -> Check {
    timed("quadrature order", || {
        let (l, m) = (material.lambda, material.mu);
        let grad = |x: f64, y: f64| Tensor2::new(x * y * y, x.exp(), y.sin(), x * x);
        let stress = |x: f64, y: f64| Tensor2::symmetric(1.0 + x, y * y, x * y);
        // 1/2 r : K^-1 : r for r = stress - K:sym(grad), written out
        let density = |x: f64, y: f64| {
            let g = grad(x, y);
            let (exx, eyy, exy) = (g.xx(), g.yy(), 0.5 * (g.xy() + g.yx()));
            let tr = exx + eyy;
            let s = stress(x, y);
            let (rxx, ryy, rxy) = (s.xx() - l * tr - 2.0 * m * exx, s.yy() - l * tr - 2.0 * m * eyy, s.xy() - 2.0 * m * exy);
            let rt = rxx + ryy;
            (rxx * rxx + ryy * ryy + 2.0 * rxy * rxy - l / (2.0 * (l + m)) * rt * rt) / (4.0 * m)
        };
        let rule = gauss_legendre(24);
        let exact: f64 = rule
            .iter()
            .flat_map(|&(x, wx)| rule.iter().map(move |&(y, wy)| wx * wy * density(x, y)))
            .sum();
        let u = |x: f64, y: f64| DisplacementSample {
            u: [0.0, 0.0],
            grad: grad(x, y),
        };
        let s = StressFn(stress);
        let pair = AdmissiblePair::new(&u, &s);
        let err = |n: usize| {
            QuadratureGrid::new(n)
                .and_then(|g| cre_psi(&pair, material, &g))
                .map(|v| v - exact)
        };
        match (err(100), err(200)) {
            (Ok(e1), Ok(e2)) => {
                let ratio = e1 / e2;
                (
                    (3.5..=4.5).contains(&ratio),
                    format!("ratio {ratio:.4} (errors {e1:.3e}, {e2:.3e}; reference {exact:.12})"),
                )
            }
            (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
        }
    })
}

pub fn run_all(problem: &ManufacturedProblem<f64>) -> Vec<Check> {
    vec![
        autodiff_check(),
        fenchel_young_check(&problem.material),
        decomposition_check(problem, 200),
        manufactured_check(problem),
        quadrature_order_check(&problem.material),
    ]
}
