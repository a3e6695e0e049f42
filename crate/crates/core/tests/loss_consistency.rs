use cre_pinn::autodiff::ScalarGraph;
use cre_pinn::elasticity::{ManufacturedProblem, Material};
use cre_pinn::network::{Component, MixedSolution, NetworkShape};
use cre_pinn::pinn::{assemble_loss, BatchLoss, ClosedFormFields, CollocationSet, LiftedSolution, LossBreakdown, LossConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem() -> ManufacturedProblem<f64> {
    ManufacturedProblem::new(Material::new(1.0, 0.5).unwrap())
}

fn configs() -> [LossConfig<f64>; 4] {
    [
        LossConfig::boundary_value(),
        LossConfig::regression(),
        LossConfig::new(0.7, 1).unwrap(),
        LossConfig::new(0.0, 0).unwrap(),
    ]
}

fn tape_loss(sol: &MixedSolution<f64>, coll: &CollocationSet<f64>, cfg: &LossConfig<f64>) -> (LossBreakdown<f64>, Vec<f64>) {
    let p = problem();
    let mut g = ScalarGraph::new();
    let lifted = LiftedSolution::lift(sol, &mut g).unwrap();
    let (root, b) = assemble_loss(&lifted, coll, &p, cfg, &mut g).unwrap();
    let grad = g.reverse_sweep(root).unwrap();
    (b, grad)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn tape_and_batch_routes_agree() {
    let coll = CollocationSet::new(5, 4).unwrap();
    let sol = MixedSolution::<f64>::initialize(NetworkShape::new(2, 7).unwrap(), 31);
    for cfg in configs() {
        let (tb, tg) = tape_loss(&sol, &coll, &cfg);
        let batch = BatchLoss::new(&coll, &problem(), cfg).unwrap();
        let mut bg = vec![0.0; sol.parameter_count()];
        let bb = batch.evaluate(&sol, Some(&mut bg), true).unwrap();
        for (x, y) in tb.terms().iter().zip(bb.terms()) {
            if cfg.uses_data() || (*x != 0.0) {
                assert!(close(*x, y, 1e-12), "{cfg:?}: {x} vs {y}");
            }
        }
        assert!(close(tb.total, bb.total, 1e-12));
        assert_eq!(tg.len(), bg.len());
        let scale = tg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in tg.iter().zip(&bg) {
            assert!((a - b).abs() <= 1e-11 * scale, "{cfg:?}: {a} vs {b}");
        }
    }
}

#[test]
fn loss_gradient_matches_central_differences_at_initialization() {
    let coll = CollocationSet::new(6, 6).unwrap();
    let p = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for cfg in [LossConfig::boundary_value(), LossConfig::regression()] {
        let sol = MixedSolution::<f64>::initialize(NetworkShape::default(), 33);
        let batch = BatchLoss::new(&coll, &p, cfg).unwrap();
        let mut grad = vec![0.0; sol.parameter_count()];
        batch.evaluate(&sol, Some(&mut grad), false).unwrap();
        let base = sol.flat_parameters();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let i = rng.random_range(0..base.len());
            let at = |delta: f64| {
                let mut s = sol.clone();
                let mut q = base.clone();
                q[i] += delta;
                s.set_flat_parameters(&q).unwrap();
                batch.evaluate(&s, None, false).unwrap().total
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let total = batch.evaluate(&sol, None, false).unwrap().total;
            let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-4 * total.max(1.0));
            worst = worst.max(err);
        }
        assert!(worst <= 1e-4, "{cfg:?}: worst relative error {worst:e}");
    }
}

#[test]
fn exact_fields_have_vanishing_loss() {
    let coll = CollocationSet::new(12, 12).unwrap();
    let p = problem();
    let fields = ClosedFormFields { problem: p };
    for cfg in configs() {
        let mut g = ScalarGraph::new();
        let (_, b) = assemble_loss(&fields, &coll, &p, &cfg, &mut g).unwrap();
        for t in b.terms() {
            assert!(t.abs() <= 1e-10, "{cfg:?}: {b:?}");
        }
        assert!(b.total <= 1e-10);
    }
}

#[test]
fn zero_networks_data_misfit_is_grid_mean_of_exact_field() {
    let n = 9;
    let coll = CollocationSet::new(n, n).unwrap();
    let p = problem();
    let sol = MixedSolution::<f64>::zeros(NetworkShape::default());
    let b = BatchLoss::new(&coll, &p, LossConfig::regression())
        .unwrap()
        .evaluate(&sol, None, true)
        .unwrap();
    // independent grid average of |u|^2 and |sigma|^2 with u written out here
    let pi = std::f64::consts::PI;
    let (lambda, mu, q) = (1.0, 0.5, 4.0);
    let (mut su, mut ss) = (0.0, 0.0);
    for i in 1..=n {
        for j in 1..=n {
            let (x, y) = (i as f64 / (n + 1) as f64, j as f64 / (n + 1) as f64);
            let ux = (2.0 * pi * x).cos() * (pi * y).sin();
            let uy = (pi * x).sin() * q * y.powi(4) / 4.0;
            su += ux * ux + uy * uy;
            let exx = -2.0 * pi * (2.0 * pi * x).sin() * (pi * y).sin();
            let eyy = (pi * x).sin() * q * y.powi(3);
            let exy = 0.5 * (pi * (2.0 * pi * x).cos() * (pi * y).cos() + pi * (pi * x).cos() * q * y.powi(4) / 4.0);
            let sxx = lambda * (exx + eyy) + 2.0 * mu * exx;
            let syy = lambda * (exx + eyy) + 2.0 * mu * eyy;
            let sxy = 2.0 * mu * exy;
            ss += sxx * sxx + syy * syy + 2.0 * sxy * sxy;
        }
    }
    let count = (n * n) as f64;
    assert!(close(b.mse_u, su / count, 1e-12), "{} vs {}", b.mse_u, su / count);
    assert!(close(b.mse_sigma, ss / count, 1e-12));
    assert_eq!(b.mse_c, 0.0);
}

#[test]
fn zero_eta_total_ignores_constitutive_term() {
    let coll = CollocationSet::new(6, 6).unwrap();
    let p = problem();
    let cfg = LossConfig::new(0.0, 1).unwrap();
    let batch = BatchLoss::new(&coll, &p, cfg).unwrap();
    let sol = MixedSolution::<f64>::initialize(NetworkShape::new(2, 8).unwrap(), 41);
    let base = batch.evaluate(&sol, None, true).unwrap();
    let mut moved = sol.clone();
    for c in [Component::Sxx, Component::Syy, Component::Sxy] {
        for (k, w) in moved.net_mut(c).parameters_mut().iter_mut().enumerate() {
            *w += 0.05 * ((k % 7) as f64 - 3.0);
        }
    }
    let after = batch.evaluate(&moved, None, true).unwrap();
    assert!((after.mse_c - base.mse_c).abs() > 1e-3);
    // with the other terms held at their values the total does not see mse_C
    let rest = |b: &LossBreakdown<f64>| b.total - (b.mse_gamma_d + b.mse_f + b.mse_gamma_n + b.mse_u + b.mse_sigma);
    assert!(rest(&base).abs() <= 1e-12 * base.total);
    assert!(rest(&after).abs() <= 1e-12 * after.total);
    // and the weighted route differs by exactly eta * mse_C
    let weighted = BatchLoss::new(&coll, &p, LossConfig::new(0.25, 1).unwrap())
        .unwrap()
        .evaluate(&sol, None, true)
        .unwrap();
    assert!(close(weighted.total - base.total, 0.25 * base.mse_c, 1e-12));
}

#[test]
fn data_terms_are_not_evaluated_without_alpha() {
    let coll = CollocationSet::new(6, 6).unwrap();
    let p = problem();
    let sol = MixedSolution::<f64>::initialize(NetworkShape::new(2, 8).unwrap(), 42);
    let no_data = BatchLoss::new(&coll, &p, LossConfig::new(0.3, 0).unwrap())
        .unwrap()
        .evaluate(&sol, None, true)
        .unwrap();
    let with_data = BatchLoss::new(&coll, &p, LossConfig::new(0.3, 1).unwrap())
        .unwrap()
        .evaluate(&sol, None, true)
        .unwrap();
    assert_eq!(no_data.mse_u, 0.0);
    assert_eq!(no_data.mse_sigma, 0.0);
    assert!(with_data.mse_u > 0.0);
    assert!(close(with_data.total - with_data.mse_u - with_data.mse_sigma, no_data.total, 1e-12));
}

#[test]
fn breakdown_identity_and_nonnegativity() {
    let coll = CollocationSet::new(7, 5).unwrap();
    let p = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for cfg in configs() {
        let batch = BatchLoss::new(&coll, &p, cfg).unwrap();
        for _ in 0..5 {
            let sol = MixedSolution::<f64>::initialize(NetworkShape::new(3, 6).unwrap(), rng.random());
            let b = batch.evaluate(&sol, None, true).unwrap();
            assert!(b.terms().iter().all(|&t| t >= 0.0));
            assert!((b.total - b.weighted_sum(&cfg)).abs() <= 1e-12 * b.total.max(1.0));
        }
    }
}

#[test]
fn chunked_interior_matches_single_pass() {
    // more interior points than one evaluation chunk
    let coll = CollocationSet::new(30, 8).unwrap();
    let p = problem();
    let sol = MixedSolution::<f64>::initialize(NetworkShape::new(2, 5).unwrap(), 44);
    let batch = BatchLoss::new(&coll, &p, LossConfig::new(0.2, 1).unwrap()).unwrap();
    let mut grad = vec![0.0; sol.parameter_count()];
    let b = batch.evaluate(&sol, Some(&mut grad), true).unwrap();
    let (tb, tg) = tape_loss(&sol, &coll, &LossConfig::new(0.2, 1).unwrap());
    assert!(close(b.total, tb.total, 1e-11));
    let scale = tg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, c) in grad.iter().zip(&tg) {
        assert!((a - c).abs() <= 1e-10 * scale);
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(LossConfig::new(0.1, 2).is_err());
    assert!(LossConfig::new(-0.1, 0).is_err());
    assert!(LossConfig::new(f64::NAN, 0).is_err());
    assert!(CollocationSet::<f64>::new(1, 4).is_err());
}
