use std::f64::consts::PI;

use cre_pinn::autodiff::ScalarGraph;
use cre_pinn::elasticity::{EnergyDensity, ManufacturedProblem, Material, Side, Tensor2};
use cre_pinn::network::Component;
use cre_pinn::pinn::{ClosedFormFields, TapeFields};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem() -> ManufacturedProblem<f64> {
    ManufacturedProblem::new(Material::new(1.0, 0.5).unwrap())
}

/// Stress components and their spatial tangents, recorded on a tape.
fn stress_with_tangents(x: f64, y: f64) -> [(f64, [f64; 2]); 3] {
    let fields = ClosedFormFields { problem: problem() };
    let mut g = ScalarGraph::new();
    let xn = g.lift_input(0, x).unwrap();
    let yn = g.lift_input(1, y).unwrap();
    [Component::Sxx, Component::Syy, Component::Sxy].map(|c| {
        let n = fields.record(&mut g, c, xn, yn).unwrap();
        (g.value(n).unwrap(), g.tangent(n).unwrap())
    })
}

#[test]
fn exact_stress_balances_body_force() {
    let p = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let [sxx, syy, sxy] = stress_with_tangents(x, y);
        let f = p.body_force(x, y);
        let rx = sxx.1[0] + sxy.1[1] + f[0];
        let ry = sxy.1[0] + syy.1[1] + f[1];
        worst = worst.max(rx.abs()).max(ry.abs());
        // the tape records the same stress as the closed form
        let s = p.exact_solution(x, y).sigma;
        assert!((s.xx() - sxx.0).abs() < 1e-12 && (s.yy() - syy.0).abs() < 1e-12 && (s.xy() - sxy.0).abs() < 1e-12);
    }
    assert!(worst <= 1e-8, "worst residual {worst:e}");
}

#[test]
fn body_force_matches_symbolic_values() {
    let p = problem();
    let cases = [
        (0.25, 1.0, -13.32864881447509874, -43.08994385192577668),
        (0.5, 0.5, -83.89163740925954826, -5.691574862465957543),
        (0.3, 0.7, -24.77317475946424707, -25.10730906127646082),
    ];
    for (x, y, fx, fy) in cases {
        let f = p.body_force(x, y);
        assert!((f[0] - fx).abs() <= 1e-12 * fx.abs(), "{x},{y}: {} vs {fx}", f[0]);
        assert!((f[1] - fy).abs() <= 1e-12 * fy.abs(), "{x},{y}: {} vs {fy}", f[1]);
    }
    assert!((p.body_force(0.5, 0.5)[0] + 8.5 * PI * PI).abs() < 1e-12);
}

#[test]
fn exact_solution_satisfies_boundary_conditions() {
    let p = problem();
    let bcs = p.boundary_conditions();
    assert_eq!(bcs.len(), 8);
    for side in [Side::XMinus, Side::XPlus, Side::YMinus, Side::YPlus] {
        let on_side: Vec<_> = bcs.iter().filter(|b| b.side == side).collect();
        assert_eq!(on_side.len(), 2, "{side:?}");
        for k in 0..100 {
            let s = (k as f64 + 0.5) / 100.0;
            let (x, y) = side.point(s);
            let e = p.exact_solution(x, y);
            for bc in &on_side {
                let r = bc.residual(e.u, &e.sigma, x, y);
                assert!(r.abs() <= 1e-10, "{side:?} {:?} at s = {s}: {r:e}", bc.quantity);
            }
        }
    }
    // top traction is the sine load sigma_yy(x, 1) = (lambda + 2 mu) Q sin(pi x)
    let e = p.exact_solution(0.3, 1.0);
    assert!((e.sigma.yy() - 2.0 * 4.0 * (0.3 * PI).sin()).abs() < 1e-12);
}

#[test]
fn fenchel_young_inequality_and_equality() {
    let m = Material::<f64>::new(1.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let mut r = || rng.random_range(-3.0f64..3.0);
    for _ in 0..10_000 {
        let g = Tensor2::new(r(), r(), r(), r());
        let tau = Tensor2::symmetric(r(), r(), r());
        let gap = m.fenchel_young_gap(&g, &tau);
        assert!(gap >= -1e-12 * (1.0 + m.w(&g) + m.w_star(&tau)), "gap {gap:e}");
        let eq = m.fenchel_young_gap(&g, &m.constitutive(&g));
        assert!(eq.abs() <= 1e-12 * (1.0 + m.w(&g)), "equality gap {eq:e}");
    }
}
