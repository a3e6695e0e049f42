use cre_pinn::autodiff::{NodeRef, ScalarGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
/// Derivatives smaller than `FLOOR * max(1, |f|)` are compared on that scale;
/// central differences at `STEP` carry about `1e-10 * |f|` of roundoff.
const FLOOR: f64 = 1e-4;
const PARAMS: usize = 4;

fn rel_err(ad: f64, fd: f64, f: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(FLOOR * f.abs().max(1.0))
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a / (1 + b^2)`
    Div(usize, usize),
    Neg(usize),
    Tanh(usize),
    Sin(usize),
    Cos(usize),
    Square(usize),
    Scale(usize, f64),
}

/// Random expression of `x`, `y`, and `PARAMS` parameters, replayable at
/// perturbed inputs.
#[derive(Debug, Clone)]
struct Program {
    constant: f64,
    instrs: Vec<Instr>,
}

struct Recorded {
    graph: ScalarGraph<f64>,
    nodes: Vec<NodeRef>,
    root: NodeRef,
}

impl Program {
    fn random(rng: &mut ChaCha8Rng, point: [f64; 2], params: &[f64]) -> Program {
        let mut prog = Program {
            constant: rng.random_range(-1.0..1.0),
            instrs: Vec::new(),
        };
        // leaves: x, y, params, constant
        let leaves = 2 + PARAMS + 1;
        for p in 0..PARAMS {
            let coord = rng.random_range(0..2);
            let op = if rng.random_bool(0.5) {
                Instr::Mul(2 + p, coord)
            } else {
                Instr::Add(2 + p, coord)
            };
            prog.instrs.push(op);
        }
        let ops = rng.random_range(8..20);
        for _ in 0..ops {
            let values = prog.values(point, params);
            let len = leaves + prog.instrs.len();
            let pick = |rng: &mut ChaCha8Rng| {
                // favour recent nodes so expressions nest
                let lo = len.saturating_sub(6);
                if rng.random_bool(0.7) {
                    rng.random_range(lo..len)
                } else {
                    rng.random_range(0..len)
                }
            };
            let a = pick(rng);
            let b = pick(rng);
            let big = |i: usize| values[i].abs() > 4.0;
            let op = match rng.random_range(0..10) {
                0 => Instr::Add(a, b),
                1 => Instr::Sub(a, b),
                2 if !big(a) && !big(b) => Instr::Mul(a, b),
                3 => Instr::Div(a, b),
                4 => Instr::Neg(a),
                5 => Instr::Sin(a),
                6 => Instr::Cos(a),
                7 if !big(a) => Instr::Square(a),
                8 => Instr::Scale(a, rng.random_range(-2.0..2.0)),
                _ => Instr::Tanh(a),
            };
            prog.instrs.push(op);
        }
        prog
    }

    fn record(&self, point: [f64; 2], params: &[f64]) -> Recorded {
        let mut g = ScalarGraph::new();
        let mut nodes = vec![g.lift_input(0, point[0]).unwrap(), g.lift_input(1, point[1]).unwrap()];
        for &p in params {
            nodes.push(g.lift_parameter(p).unwrap());
        }
        nodes.push(g.constant(self.constant).unwrap());
        for ins in &self.instrs {
            let n = match *ins {
                Instr::Add(a, b) => g.add(nodes[a], nodes[b]),
                Instr::Sub(a, b) => g.sub(nodes[a], nodes[b]),
                Instr::Mul(a, b) => g.mul(nodes[a], nodes[b]),
                Instr::Div(a, b) => {
                    let sq = g.square(nodes[b]).unwrap();
                    let den = g.add_constant(sq, 1.0).unwrap();
                    g.div(nodes[a], den)
                }
                Instr::Neg(a) => g.neg(nodes[a]),
                Instr::Tanh(a) => g.tanh(nodes[a]),
                Instr::Sin(a) => g.sin(nodes[a]),
                Instr::Cos(a) => g.cos(nodes[a]),
                Instr::Square(a) => g.square(nodes[a]),
                Instr::Scale(a, k) => g.scale(nodes[a], k),
            }
            .unwrap();
            nodes.push(n);
        }
        let tail: Vec<_> = nodes[nodes.len() - 3..].to_vec();
        let root = g.sum(&tail).unwrap();
        Recorded { graph: g, nodes, root }
    }

    fn values(&self, point: [f64; 2], params: &[f64]) -> Vec<f64> {
        let r = self.record(point, params);
        r.nodes.iter().map(|&n| r.graph.value(n).unwrap()).collect()
    }

    fn value(&self, point: [f64; 2], params: &[f64]) -> f64 {
        let r = self.record(point, params);
        r.graph.value(r.root).unwrap()
    }

    fn tangent(&self, point: [f64; 2], params: &[f64], coord: usize) -> f64 {
        let r = self.record(point, params);
        r.graph.tangent(r.root).unwrap()[coord]
    }
}

struct Case {
    program: Program,
    point: [f64; 2],
    params: Vec<f64>,
}

fn cases(count: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let point = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let params: Vec<f64> = (0..PARAMS).map(|_| rng.random_range(-1.5..1.5)).collect();
            let program = Program::random(&mut rng, point, &params);
            Case { program, point, params }
        })
        .collect()
}

fn shifted(v: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut w = v.to_vec();
    w[i] += h;
    w
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut worst = 0.0f64;
    for case in cases(100, 11) {
        let mut r = case.program.record(case.point, &case.params);
        let grad = r.graph.reverse_sweep(r.root).unwrap();
        let f = r.graph.value(r.root).unwrap();
        assert_eq!(grad.len(), PARAMS);
        for (i, &ad) in grad.iter().enumerate() {
            let fp = case.program.value(case.point, &shifted(&case.params, i, STEP));
            let fm = case.program.value(case.point, &shifted(&case.params, i, -STEP));
            let fd = (fp - fm) / (2.0 * STEP);
            worst = worst.max(rel_err(ad, fd, f));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn spatial_tangents_match_central_differences() {
    let mut worst = 0.0f64;
    for case in cases(100, 12) {
        let r = case.program.record(case.point, &case.params);
        let t = r.graph.tangent(r.root).unwrap();
        let f = r.graph.value(r.root).unwrap();
        for (coord, &ad) in t.iter().enumerate() {
            let fp = case.program.value(shifted(&case.point, coord, STEP).try_into().unwrap(), &case.params);
            let fm = case.program.value(shifted(&case.point, coord, -STEP).try_into().unwrap(), &case.params);
            let fd = (fp - fm) / (2.0 * STEP);
            worst = worst.max(rel_err(ad, fd, f));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn mixed_second_order_matches_differences_of_tangents() {
    let mut worst = 0.0f64;
    for case in cases(100, 13) {
        for coord in 0..2 {
            let mut r = case.program.record(case.point, &case.params);
            let d = r.graph.tangent_node(r.root, coord).unwrap();
            let grad = r.graph.reverse_sweep(d).unwrap();
            let f = r.graph.value(d).unwrap();
            for (i, &ad) in grad.iter().enumerate() {
                let tp = case.program.tangent(case.point, &shifted(&case.params, i, STEP), coord);
                let tm = case.program.tangent(case.point, &shifted(&case.params, i, -STEP), coord);
                let fd = (tp - tm) / (2.0 * STEP);
                worst = worst.max(rel_err(ad, fd, f));
            }
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn tangent_node_value_equals_tangent() {
    for case in cases(20, 14) {
        let mut r = case.program.record(case.point, &case.params);
        let t = r.graph.tangent(r.root).unwrap();
        for (coord, &expected) in t.iter().enumerate() {
            let d = r.graph.tangent_node(r.root, coord).unwrap();
            assert_eq!(r.graph.value(d).unwrap(), expected);
        }
        assert!(r.graph.validate());
    }
}

#[test]
fn sweep_of_tanh_tangent_matches_differences() {
    // d/dp of d/dx (p * tanh(x)) at x = 0.7
    let record = |p: f64| {
        let mut g = ScalarGraph::new();
        let x = g.lift_input(0, 0.7).unwrap();
        let pn = g.lift_parameter(p).unwrap();
        let t = g.tanh(x).unwrap();
        let f = g.mul(pn, t).unwrap();
        let d = g.tangent_node(f, 0).unwrap();
        (g, d)
    };
    let (mut g, d) = record(1.3);
    let ad = g.reverse_sweep(d).unwrap()[0];
    let fd = (record(1.3 + STEP).0.value(d).unwrap() - record(1.3 - STEP).0.value(d).unwrap()) / (2.0 * STEP);
    assert!(rel_err(ad, fd, 0.0) <= 1e-5);
    let s = 1.0 / 0.7f64.cosh();
    assert!((ad - s * s).abs() < 1e-14);
}
