use cre_pinn::autodiff::ScalarGraph;
use cre_pinn::network::{Channels, Component, FieldNetwork, MixedSolution, NetworkShape};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;

fn rel_err(ad: f64, fd: f64, f: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-4 * f.abs().max(1.0))
}

/// Random shape, Glorot weights, and non-zero biases.
fn random_network(rng: &mut ChaCha8Rng) -> FieldNetwork<f64> {
    let shape = NetworkShape::new(rng.random_range(1..5), rng.random_range(2..13)).unwrap();
    let mut net = FieldNetwork::initialize(shape, rng.random());
    for p in net.parameters_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    net
}

fn random_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
}

fn tape_output(net: &FieldNetwork<f64>, p: [f64; 2]) -> (f64, [f64; 2]) {
    let mut g = ScalarGraph::new();
    let x = g.lift_input(0, p[0]).unwrap();
    let y = g.lift_input(1, p[1]).unwrap();
    let out = net.forward(&mut g, x, y).unwrap();
    (g.value(out).unwrap(), g.tangent(out).unwrap())
}

#[test]
fn tape_tangents_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let net = random_network(&mut rng);
        let p = random_point(&mut rng);
        let (v, t) = tape_output(&net, p);
        for d in 0..2 {
            let (mut a, mut b) = (p, p);
            a[d] += STEP;
            b[d] -= STEP;
            let fd = (net.eval(a[0], a[1]).0 - net.eval(b[0], b[1]).0) / (2.0 * STEP);
            worst = worst.max(rel_err(t[d], fd, v));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn tape_and_plain_evaluation_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let net = random_network(&mut rng);
        let p = random_point(&mut rng);
        let (v, t) = tape_output(&net, p);
        let (pv, pt) = net.eval(p[0], p[1]);
        assert!((v - pv).abs() <= 1e-14 * v.abs().max(1.0));
        for d in 0..2 {
            assert!((t[d] - pt[d]).abs() <= 1e-13 * t[d].abs().max(1.0));
        }
    }
}

#[test]
fn parameter_gradients_of_value_and_tangent_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let net = random_network(&mut rng);
        let p = random_point(&mut rng);
        let picks: Vec<usize> = (0..5).map(|_| rng.random_range(0..net.parameters().len())).collect();
        // value
        let mut g = ScalarGraph::new();
        let x = g.lift_input(0, p[0]).unwrap();
        let y = g.lift_input(1, p[1]).unwrap();
        let out = net.forward(&mut g, x, y).unwrap();
        let dx = g.tangent_node(out, 0).unwrap();
        let v = g.value(out).unwrap();
        let grad = g.reverse_sweep(out).unwrap();
        let grad_t = g.reverse_sweep(dx).unwrap();
        for &i in &picks {
            let mut plus = net.clone();
            plus.parameters_mut()[i] += STEP;
            let mut minus = net.clone();
            minus.parameters_mut()[i] -= STEP;
            let (fp, tp) = plus.eval(p[0], p[1]);
            let (fm, tm) = minus.eval(p[0], p[1]);
            worst1 = worst1.max(rel_err(grad[i], (fp - fm) / (2.0 * STEP), v));
            worst2 = worst2.max(rel_err(grad_t[i], (tp[0] - tm[0]) / (2.0 * STEP), g.value(dx).unwrap()));
        }
    }
    assert!(worst1 <= 1e-5, "value gradient worst relative error {worst1:e}");
    assert!(worst2 <= 1e-4, "mixed gradient worst relative error {worst2:e}");
}

#[test]
fn batch_backward_matches_tape_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..10 {
        let net = random_network(&mut rng);
        let pts: Vec<[f64; 2]> = (0..7).map(|_| random_point(&mut rng)).collect();
        let trace = net.forward_batch(&pts, Channels::ALL);
        let n = pts.len();
        let weights: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let upstream = Array2::from_shape_vec((1, 3 * n), weights.clone()).unwrap();
        let mut batch = vec![0.0; net.parameters().len()];
        net.backward_batch(&trace, upstream.view(), &mut batch);

        let mut g = ScalarGraph::new();
        let lifted = net.lift(&mut g).unwrap();
        let mut terms = Vec::new();
        for (k, p) in pts.iter().enumerate() {
            let x = g.lift_input(0, p[0]).unwrap();
            let y = g.lift_input(1, p[1]).unwrap();
            let out = lifted.forward(&mut g, x, y).unwrap();
            for (blk, node) in [Some(out), None, None].into_iter().enumerate() {
                let node = match node {
                    Some(o) => o,
                    None => g.tangent_node(out, blk - 1).unwrap(),
                };
                terms.push(g.scale(node, weights[blk * n + k]).unwrap());
            }
        }
        let root = g.sum(&terms).unwrap();
        let tape = g.reverse_sweep(root).unwrap();
        for (a, b) in batch.iter().zip(&tape) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn batch_forward_matches_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let net = random_network(&mut rng);
    let pts: Vec<[f64; 2]> = (0..33).map(|_| random_point(&mut rng)).collect();
    let only_y = net.forward_batch(&pts, Channels { dx: false, dy: true });
    assert!(only_y.tangent(0).is_none());
    let all = net.forward_batch(&pts, Channels::ALL);
    for (k, p) in pts.iter().enumerate() {
        let (v, t) = net.eval(p[0], p[1]);
        assert!((all.values()[k] - v).abs() < 1e-13);
        assert!((all.tangent(0).unwrap()[k] - t[0]).abs() < 1e-12);
        assert!((all.tangent(1).unwrap()[k] - t[1]).abs() < 1e-12);
        assert_eq!(only_y.tangent(1).unwrap()[k], all.tangent(1).unwrap()[k]);
    }
}

#[test]
fn forward_is_deterministic() {
    let net = FieldNetwork::<f64>::initialize(NetworkShape::default(), 3);
    let a = tape_output(&net, [0.3, 0.8]);
    let b = tape_output(&net, [0.3, 0.8]);
    assert_eq!(a, b);
    assert_eq!(
        FieldNetwork::<f64>::initialize(NetworkShape::default(), 3).parameters(),
        net.parameters()
    );
}

#[test]
fn evaluate_fields_single_point_matches_forward() {
    let sol = MixedSolution::<f64>::initialize(NetworkShape::new(2, 6).unwrap(), 9);
    let p = [0.41, 0.77];
    let f = sol.evaluate_fields(&[p]);
    let (ux, gx) = tape_output(sol.net(Component::Ux), p);
    let (uy, gy) = tape_output(sol.net(Component::Uy), p);
    let (sxy, _) = tape_output(sol.net(Component::Sxy), p);
    assert!((f.u[0][0] - ux).abs() < 1e-14 && (f.u[0][1] - uy).abs() < 1e-14);
    assert!((f.grad_u[0].xy() - gx[1]).abs() < 1e-14);
    assert!((f.grad_u[0].yx() - gy[0]).abs() < 1e-14);
    assert_eq!(f.sigma[0].xy(), f.sigma[0].yx());
    assert!((f.sigma[0].xy() - sxy).abs() < 1e-14);
}

#[test]
fn checkpoint_directory_round_trip() {
    let dir = std::env::temp_dir().join(format!("cre-pinn-ckpt-{}", std::process::id()));
    let sol = MixedSolution::<f64>::initialize(NetworkShape::new(3, 5).unwrap(), 4);
    sol.save_dir(&dir).unwrap();
    let back = MixedSolution::<f64>::load_dir(&dir).unwrap();
    assert_eq!(back.flat_parameters(), sol.flat_parameters());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn single_precision_kernel_agrees_with_double() {
    let net64 = FieldNetwork::<f64>::initialize(NetworkShape::default(), 5);
    let params32: Vec<f32> = net64.parameters().iter().map(|&p| p as f32).collect();
    let net32 = FieldNetwork::<f32>::from_parameters(NetworkShape::default(), params32).unwrap();
    let (v64, t64) = net64.eval(0.3, 0.6);
    let (v32, t32) = net32.eval(0.3, 0.6);
    assert!((v64 - v32 as f64).abs() < 1e-5);
    assert!((t64[0] - t32[0] as f64).abs() < 1e-4);
}

proptest! {
    #[test]
    fn flat_parameters_round_trip(seed in any::<u64>(), layers in 1usize..4, width in 1usize..8) {
        let shape = NetworkShape::new(layers, width).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sol = MixedSolution::<f64>::zeros(shape);
        let flat: Vec<f64> = (0..sol.parameter_count()).map(|_| rng.random_range(-5.0..5.0)).collect();
        sol.set_flat_parameters(&flat).unwrap();
        prop_assert_eq!(sol.flat_parameters(), flat.clone());
        let offsets = sol.offsets();
        for c in Component::ALL {
            let o = offsets[c.index()];
            prop_assert_eq!(sol.net(c).parameters(), &flat[o..o + shape.parameter_count()]);
        }
        prop_assert!(sol.set_flat_parameters(&flat[1..]).is_err());
    }

    #[test]
    fn network_parameter_round_trip(seed in any::<u64>(), layers in 1usize..4, width in 1usize..8) {
        let shape = NetworkShape::new(layers, width).unwrap();
        let net = FieldNetwork::<f64>::initialize(shape, seed);
        let back = FieldNetwork::from_parameters(shape, net.parameters().to_vec()).unwrap();
        prop_assert_eq!(back.parameters(), net.parameters());
        let text = net.to_checkpoint_string();
        let parsed = FieldNetwork::<f64>::from_checkpoint_str(&text).unwrap();
        prop_assert_eq!(parsed.parameters(), net.parameters());
    }
}
