//! Constitutive relation error and energy-norm error functionals.
//!
//! All integrals use the cell-centered midpoint rule on a uniform `n x n`
//! grid over the unit square. For a displacement/stress pair `(u_h, s_h)`:
//!
//! * `psi  = int 1/2 (s_h - K:grad u_h) : K^-1 : (s_h - K:grad u_h)`
//! * `phi  = int 1/2 grad e : K : grad e`, `e = u_h - u`
//! * `varphi = int 1/2 r : K^-1 : r`, `r = s_h - sigma`
//!
//! For exactly admissible pairs `psi = phi + varphi`; for network pairs the
//! identity holds only approximately and [`ErrorReport::sum_gap`] measures it.

use serde::{Deserialize, Serialize};

use crate::elasticity::{ManufacturedProblem, Material, Tensor2};
use crate::network::{Channels, Component, MixedSolution};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CreError {
    #[error("non-finite field value at ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("grid size must be positive")]
    EmptyGrid,
}

/// Cell-centered uniform grid with equal weights `1 / n^2`.
///
/// Points are ordered with `x` outer and `y` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid<T> {
    n: usize,
    points: Vec<[T; 2]>,
    weight: T,
}

impl<T: Real> QuadratureGrid<T> {
    pub fn new(n: usize) -> Result<Self, CreError> {
        if n == 0 {
            return Err(CreError::EmptyGrid);
        }
        let h = T::one() / T::lit(n as f64);
        let half = T::lit(0.5);
        let c: Vec<T> = (0..n).map(|i| (T::lit(i as f64) + half) * h).collect();
        let points = c.iter().flat_map(|&x| c.iter().map(move |&y| [x, y])).collect();
        Ok(QuadratureGrid {
            n,
            points,
            weight: h * h,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[[T; 2]] {
        &self.points
    }

    pub fn weight(&self) -> T {
        self.weight
    }

    /// Midpoint-rule integral of a pointwise integrand.
    pub fn integrate(&self, f: impl Fn(T, T) -> T) -> T {
        let s = self.points.iter().fold(T::zero(), |acc, p| acc + f(p[0], p[1]));
        s * self.weight
    }
}

/// Displacement and its gradient at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementSample<T> {
    pub u: [T; 2],
    pub grad: Tensor2<T>,
}

pub trait DisplacementProvider<T: Real> {
    fn displacement(&self, x: T, y: T) -> DisplacementSample<T>;

    fn sample_displacements(&self, points: &[[T; 2]]) -> Vec<DisplacementSample<T>> {
        points.iter().map(|p| self.displacement(p[0], p[1])).collect()
    }
}

pub trait StressProvider<T: Real> {
    fn stress(&self, x: T, y: T) -> Tensor2<T>;

    fn sample_stresses(&self, points: &[[T; 2]]) -> Vec<Tensor2<T>> {
        points.iter().map(|p| self.stress(p[0], p[1])).collect()
    }
}

impl<T: Real, F: Fn(T, T) -> DisplacementSample<T>> DisplacementProvider<T> for F {
    fn displacement(&self, x: T, y: T) -> DisplacementSample<T> {
        self(x, y)
    }
}

/// Wraps a closure returning a stress tensor.
pub struct StressFn<F>(pub F);

impl<T: Real, F: Fn(T, T) -> Tensor2<T>> StressProvider<T> for StressFn<F> {
    fn stress(&self, x: T, y: T) -> Tensor2<T> {
        (self.0)(x, y)
    }
}

impl<T: Real> DisplacementProvider<T> for ManufacturedProblem<T> {
    fn displacement(&self, x: T, y: T) -> DisplacementSample<T> {
        let e = self.exact_solution(x, y);
        DisplacementSample { u: e.u, grad: e.grad_u }
    }
}

impl<T: Real> StressProvider<T> for ManufacturedProblem<T> {
    fn stress(&self, x: T, y: T) -> Tensor2<T> {
        self.exact_solution(x, y).sigma
    }
}

/// Network-backed fields with batched evaluation.
pub struct NetworkFields<'a, T>(pub &'a MixedSolution<T>);

impl<T: Real> DisplacementProvider<T> for NetworkFields<'_, T> {
    fn displacement(&self, x: T, y: T) -> DisplacementSample<T> {
        self.sample_displacements(&[[x, y]])[0]
    }

    fn sample_displacements(&self, points: &[[T; 2]]) -> Vec<DisplacementSample<T>> {
        let ux = self.0.net(Component::Ux).forward_batch(points, Channels::ALL);
        let uy = self.0.net(Component::Uy).forward_batch(points, Channels::ALL);
        let (a, b) = (ux.values(), uy.values());
        let (ax, ay) = (ux.tangent(0).unwrap(), ux.tangent(1).unwrap());
        let (bx, by) = (uy.tangent(0).unwrap(), uy.tangent(1).unwrap());
        (0..points.len())
            .map(|k| DisplacementSample {
                u: [a[k], b[k]],
                grad: Tensor2::new(ax[k], ay[k], bx[k], by[k]),
            })
            .collect()
    }
}

impl<T: Real> StressProvider<T> for NetworkFields<'_, T> {
    fn stress(&self, x: T, y: T) -> Tensor2<T> {
        self.sample_stresses(&[[x, y]])[0]
    }

    fn sample_stresses(&self, points: &[[T; 2]]) -> Vec<Tensor2<T>> {
        let f = |c| self.0.net(c).forward_batch(points, Channels::VALUE);
        let (xx, yy, xy) = (f(Component::Sxx), f(Component::Syy), f(Component::Sxy));
        let (a, b, c) = (xx.values(), yy.values(), xy.values());
        (0..points.len()).map(|k| Tensor2::symmetric(a[k], b[k], c[k])).collect()
    }
}

/// Candidate displacement/stress pair.
#[derive(Clone, Copy)]
pub struct AdmissiblePair<'a, T> {
    pub displacement: &'a dyn DisplacementProvider<T>,
    pub stress: &'a dyn StressProvider<T>,
}

impl<'a, T: Real> AdmissiblePair<'a, T> {
    pub fn new(displacement: &'a dyn DisplacementProvider<T>, stress: &'a dyn StressProvider<T>) -> Self {
        AdmissiblePair { displacement, stress }
    }
}

fn finite_or_err<T: Real>(ok: bool, p: &[T; 2]) -> Result<(), CreError> {
    if ok {
        Ok(())
    } else {
        Err(CreError::NonFinite {
            x: p[0].as_f64(),
            y: p[1].as_f64(),
        })
    }
}

fn sample_u<T: Real>(p: &dyn DisplacementProvider<T>, grid: &QuadratureGrid<T>) -> Result<Vec<DisplacementSample<T>>, CreError> {
    let s = p.sample_displacements(grid.points());
    for (d, pt) in s.iter().zip(grid.points()) {
        finite_or_err(d.grad.is_finite() && d.u.iter().all(|v| v.is_finite()), pt)?;
    }
    Ok(s)
}

fn sample_s<T: Real>(p: &dyn StressProvider<T>, grid: &QuadratureGrid<T>) -> Result<Vec<Tensor2<T>>, CreError> {
    let s = p.sample_stresses(grid.points());
    for (t, pt) in s.iter().zip(grid.points()) {
        finite_or_err(t.is_finite(), pt)?;
    }
    Ok(s)
}

fn psi_from<T: Real>(u: &[DisplacementSample<T>], s: &[Tensor2<T>], m: &Material<T>, w: T) -> T {
    let sum = u.iter().zip(s).fold(T::zero(), |acc, (d, sig)| {
        let r = *sig - m.hooke_apply(&d.grad);
        acc + m.energy_w_star(&r)
    });
    sum * w
}

fn phi_from<T: Real>(u: &[DisplacementSample<T>], p: &ManufacturedProblem<T>, grid: &QuadratureGrid<T>) -> T {
    let m = p.material;
    let sum = u.iter().zip(grid.points()).fold(T::zero(), |acc, (d, pt)| {
        let e = d.grad - p.exact_solution(pt[0], pt[1]).grad_u;
        acc + m.energy_w(&e)
    });
    sum * grid.weight()
}

fn varphi_from<T: Real>(s: &[Tensor2<T>], p: &ManufacturedProblem<T>, grid: &QuadratureGrid<T>) -> T {
    let m = p.material;
    let sum = s.iter().zip(grid.points()).fold(T::zero(), |acc, (sig, pt)| {
        let r = *sig - p.exact_solution(pt[0], pt[1]).sigma;
        acc + m.energy_w_star(&r)
    });
    sum * grid.weight()
}

/// Constitutive relation error of `pair`.
pub fn cre_psi<T: Real>(pair: &AdmissiblePair<'_, T>, m: &Material<T>, grid: &QuadratureGrid<T>) -> Result<T, CreError> {
    let u = sample_u(pair.displacement, grid)?;
    let s = sample_s(pair.stress, grid)?;
    Ok(psi_from(&u, &s, m, grid.weight()))
}

/// Displacement energy error `phi(u_h - u)` against the exact solution.
pub fn phi_error<T: Real>(
    u_hat: &dyn DisplacementProvider<T>,
    p: &ManufacturedProblem<T>,
    grid: &QuadratureGrid<T>,
) -> Result<T, CreError> {
    Ok(phi_from(&sample_u(u_hat, grid)?, p, grid))
}

/// Stress energy error `varphi(s_h - sigma)` against the exact solution.
pub fn varphi_error<T: Real>(
    sigma_hat: &dyn StressProvider<T>,
    p: &ManufacturedProblem<T>,
    grid: &QuadratureGrid<T>,
) -> Result<T, CreError> {
    Ok(varphi_from(&sample_s(sigma_hat, grid)?, p, grid))
}

/// Cross term `int r : grad e` that vanishes for admissible perturbations.
pub fn orthogonality_check<T: Real>(
    e: &dyn DisplacementProvider<T>,
    r: &dyn StressProvider<T>,
    grid: &QuadratureGrid<T>,
) -> Result<T, CreError> {
    let u = sample_u(e, grid)?;
    let s = sample_s(r, grid)?;
    let sum = u.iter().zip(&s).fold(T::zero(), |acc, (d, t)| acc + t.ddot(&d.grad));
    Ok(sum * grid.weight())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport<T> {
    pub psi: T,
    pub phi: T,
    pub varphi: T,
    /// `|phi + varphi - psi| / psi`; zero when all three vanish.
    pub sum_gap: T,
    pub bound_phi: bool,
    pub bound_varphi: bool,
}

impl<T: Real> ErrorReport<T> {
    pub fn from_values(psi: T, phi: T, varphi: T) -> Self {
        let diff = (phi + varphi - psi).abs();
        let sum_gap = if psi > T::zero() {
            diff / psi
        } else if diff == T::zero() {
            T::zero()
        } else {
            T::infinity()
        };
        ErrorReport {
            psi,
            phi,
            varphi,
            sum_gap,
            bound_phi: psi >= phi,
            bound_varphi: psi >= varphi,
        }
    }

    /// `psi >= (1 - slack) * max(phi, varphi)`.
    pub fn bounds_within(&self, slack: T) -> bool {
        let lhs = self.psi;
        let k = T::one() - slack;
        lhs >= k * self.phi && lhs >= k * self.varphi
    }

    pub fn csv_header() -> &'static str {
        "run_id,grid,psi,phi,varphi,sum_gap,bound_phi,bound_varphi"
    }

    pub fn csv_row(&self, run_id: &str, grid: usize) -> String {
        format!(
            "{run_id},{grid},{:e},{:e},{:e},{:e},{},{}",
            self.psi, self.phi, self.varphi, self.sum_gap, self.bound_phi, self.bound_varphi
        )
    }
}

/// Evaluates `psi`, `phi`, and `varphi` from one sampling of the pair.
pub fn bound_report<T: Real>(
    pair: &AdmissiblePair<'_, T>,
    p: &ManufacturedProblem<T>,
    grid: &QuadratureGrid<T>,
) -> Result<ErrorReport<T>, CreError> {
    let u = sample_u(pair.displacement, grid)?;
    let s = sample_s(pair.stress, grid)?;
    let psi = psi_from(&u, &s, &p.material, grid.weight());
    let phi = phi_from(&u, p, grid);
    let varphi = varphi_from(&s, p, grid);
    Ok(ErrorReport::from_values(psi, phi, varphi))
}

/// [`bound_report`] for a trained [`MixedSolution`].
pub fn network_report<T: Real>(
    sol: &MixedSolution<T>,
    p: &ManufacturedProblem<T>,
    grid: &QuadratureGrid<T>,
) -> Result<ErrorReport<T>, CreError> {
    let fields = NetworkFields(sol);
    bound_report(&AdmissiblePair::new(&fields, &fields), p, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::Material;
    use crate::network::NetworkShape;

    fn problem() -> ManufacturedProblem<f64> {
        ManufacturedProblem::new(Material::new(1.0, 0.5).unwrap())
    }

    #[test]
    fn grid_layout() {
        let g = QuadratureGrid::<f64>::new(4).unwrap();
        assert_eq!(g.points().len(), 16);
        assert_eq!(g.points()[0], [0.125, 0.125]);
        assert_eq!(g.points()[1], [0.125, 0.375]);
        let total: f64 = g.points().iter().map(|_| g.weight()).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(QuadratureGrid::<f64>::new(0).is_err());
    }

    #[test]
    fn exact_pair_is_zero() {
        let p = problem();
        let g = QuadratureGrid::new(50).unwrap();
        let r = bound_report(&AdmissiblePair::new(&p, &p), &p, &g).unwrap();
        assert!(r.psi.abs() < 1e-12 && r.phi.abs() < 1e-12 && r.varphi.abs() < 1e-12);
        assert_eq!(r.sum_gap, 0.0);
    }

    #[test]
    fn constant_stress_shift() {
        let p = problem();
        let m = p.material;
        let c = Tensor2::symmetric(0.3, -0.2, 0.1);
        let shifted = StressFn(|x, y| p.exact_solution(x, y).sigma + c);
        let g = QuadratureGrid::new(40).unwrap();
        let psi = cre_psi(&AdmissiblePair::new(&p, &shifted), &m, &g).unwrap();
        let expect = 0.5 * c.ddot(&m.hooke_inverse(&c));
        assert!((psi - expect).abs() < 1e-12);
        let v = varphi_error(&shifted, &p, &g).unwrap();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn identity_stress_shift_closed_form() {
        let p = problem();
        let m = p.material;
        let c = 0.7;
        let shifted = StressFn(|x, y| p.exact_solution(x, y).sigma + Tensor2::identity().scale(c));
        let g = QuadratureGrid::new(30).unwrap();
        let v = varphi_error(&shifted, &p, &g).unwrap();
        // I : K^-1 : I = 2 * (1 - lambda / (lambda + mu)) / (2 mu) = 1 / (lambda + mu)
        let expect = 0.5 * c * c / (m.lambda + m.mu);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn quadratic_scaling() {
        let p = problem();
        let g = QuadratureGrid::new(40).unwrap();
        let pert = |k: f64| {
            move |x: f64, y: f64| {
                let mut s = p.displacement(x, y);
                let pi = std::f64::consts::PI;
                s.u[0] += k * (pi * x).sin() * (pi * y).sin();
                s.grad.m[0][0] += k * pi * (pi * x).cos() * (pi * y).sin();
                s.grad.m[0][1] += k * pi * (pi * x).sin() * (pi * y).cos();
                s
            }
        };
        let a = phi_error(&pert(1.0), &p, &g).unwrap();
        let b = phi_error(&pert(2.0), &p, &g).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-10 * b.abs().max(1.0));
        let r1 = StressFn(|x, y| p.exact_solution(x, y).sigma + Tensor2::symmetric(x, y, x * y));
        let r3 = StressFn(|x, y| p.exact_solution(x, y).sigma + Tensor2::symmetric(x, y, x * y).scale(3.0));
        let v1 = varphi_error(&r1, &p, &g).unwrap();
        let v3 = varphi_error(&r3, &p, &g).unwrap();
        assert!((v3 - 9.0 * v1).abs() < 1e-10);
    }

    #[test]
    fn zero_stress_cross_term() {
        let p = problem();
        let g = QuadratureGrid::new(10).unwrap();
        let zero = StressFn(|_x: f64, _y: f64| Tensor2::zero());
        assert_eq!(orthogonality_check(&p, &zero, &g).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_is_reported() {
        let p = problem();
        let g = QuadratureGrid::new(4).unwrap();
        let bad = StressFn(|x: f64, _y: f64| Tensor2::symmetric(1.0 / (x - 0.125), 0.0, 0.0));
        let err = cre_psi(&AdmissiblePair::new(&p, &bad), &p.material, &g).unwrap_err();
        assert_eq!(err, CreError::NonFinite { x: 0.125, y: 0.125 });
    }

    #[test]
    fn network_provider_matches_evaluate_fields() {
        let sol = MixedSolution::<f64>::initialize(NetworkShape::new(2, 6).unwrap(), 8);
        let g = QuadratureGrid::new(5).unwrap();
        let f = sol.evaluate_fields(g.points());
        let nf = NetworkFields(&sol);
        let d = nf.sample_displacements(g.points());
        let s = nf.sample_stresses(g.points());
        for k in 0..g.points().len() {
            assert_eq!(d[k].u, f.u[k]);
            assert_eq!(d[k].grad, f.grad_u[k]);
            assert_eq!(s[k], f.sigma[k]);
        }
        let r = network_report(&sol, &problem(), &g).unwrap();
        assert!(r.psi >= 0.0 && r.phi >= 0.0 && r.varphi >= 0.0);
    }

    #[test]
    fn report_gap_edge_cases() {
        let r = ErrorReport::from_values(0.0f64, 0.0, 0.0);
        assert_eq!(r.sum_gap, 0.0);
        let r = ErrorReport::from_values(0.0f64, 1.0, 0.0);
        assert!(r.sum_gap.is_infinite());
        let r = ErrorReport::from_values(1.0f64, 0.6, 0.5);
        assert!((r.sum_gap - 0.1).abs() < 1e-12);
        assert!(r.bound_phi && r.bound_varphi);
        assert!(ErrorReport::from_values(1.0, 1.01, 0.0).bounds_within(0.02));
        assert!(r.csv_row("x", 200).starts_with("x,200,"));
    }
}
