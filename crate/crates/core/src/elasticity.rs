//! Isotropic plane linear elasticity and the manufactured square-plate problem.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaterialError {
    #[error("shear modulus must be positive, got {0}")]
    NonPositiveShear(f64),
    #[error("lambda + 2 mu must be positive, got {0}")]
    NotPositiveDefinite(f64),
}

/// 2x2 tensor stored row-major: `[[xx, xy], [yx, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensor2<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Real> Tensor2<T> {
    pub fn new(xx: T, xy: T, yx: T, yy: T) -> Self {
        Tensor2 { m: [[xx, xy], [yx, yy]] }
    }

    pub fn symmetric(xx: T, yy: T, xy: T) -> Self {
        Self::new(xx, xy, xy, yy)
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::one())
    }

    pub fn xx(&self) -> T {
        self.m[0][0]
    }
    pub fn xy(&self) -> T {
        self.m[0][1]
    }
    pub fn yx(&self) -> T {
        self.m[1][0]
    }
    pub fn yy(&self) -> T {
        self.m[1][1]
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1]
    }

    pub fn sym(&self) -> Self {
        let half = T::lit(0.5);
        let off = half * (self.m[0][1] + self.m[1][0]);
        Self::new(self.m[0][0], off, off, self.m[1][1])
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    /// Double contraction `A : B`.
    pub fn ddot(&self, other: &Self) -> T {
        let mut s = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                s = s + self.m[i][j] * other.m[i][j];
            }
        }
        s
    }

    pub fn norm_sq(&self) -> T {
        self.ddot(self)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.m[0][0]), f(self.m[0][1]), f(self.m[1][0]), f(self.m[1][1]))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }
}

impl<T: Real> std::ops::Add for Tensor2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl<T: Real> std::ops::Sub for Tensor2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}

/// Lamé pair of a homogeneous isotropic material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material<T> {
    pub lambda: T,
    pub mu: T,
}

impl<T: Real> Material<T> {
    pub fn new(lambda: T, mu: T) -> Result<Self, MaterialError> {
        if !(mu > T::zero()) {
            return Err(MaterialError::NonPositiveShear(mu.as_f64()));
        }
        let p = lambda + mu + mu;
        if !(p > T::zero()) {
            return Err(MaterialError::NotPositiveDefinite(p.as_f64()));
        }
        Ok(Material { lambda, mu })
    }

    /// `sigma = lambda tr(eps) I + 2 mu eps` with `eps = sym(grad_u)`.
    pub fn hooke_apply(&self, grad_u: &Tensor2<T>) -> Tensor2<T> {
        let eps = grad_u.sym();
        let two_mu = self.mu + self.mu;
        let vol = self.lambda * eps.trace();
        Tensor2::symmetric(
            vol + two_mu * eps.xx(),
            vol + two_mu * eps.yy(),
            two_mu * eps.xy(),
        )
    }

    /// `eps = (sigma - lambda / (2 (lambda + mu)) tr(sigma) I) / (2 mu)`.
    pub fn hooke_inverse(&self, sigma: &Tensor2<T>) -> Tensor2<T> {
        let s = sigma.sym();
        let two = T::lit(2.0);
        let two_mu = two * self.mu;
        let vol = self.lambda / (two * (self.lambda + self.mu)) * s.trace();
        Tensor2::symmetric(
            (s.xx() - vol) / two_mu,
            (s.yy() - vol) / two_mu,
            s.xy() / two_mu,
        )
    }

    /// Strain energy density `1/2 K:grad_u : sym(grad_u)`.
    pub fn energy_w(&self, grad_u: &Tensor2<T>) -> T {
        T::lit(0.5) * self.hooke_apply(grad_u).ddot(&grad_u.sym())
    }

    /// Complementary energy density `1/2 sigma : K^-1 : sigma`.
    pub fn energy_w_star(&self, sigma: &Tensor2<T>) -> T {
        T::lit(0.5) * sigma.sym().ddot(&self.hooke_inverse(sigma))
    }

    /// P-wave modulus `lambda + 2 mu`.
    pub fn p_modulus(&self) -> T {
        self.lambda + self.mu + self.mu
    }
}

impl Default for Material<f64> {
    fn default() -> Self {
        Material { lambda: 1.0, mu: 0.5 }
    }
}

/// Convex strain-energy density with its Legendre conjugate.
///
/// For any implementation, `w(eps) + w_star(tau) - tau:eps >= 0`, with
/// equality exactly when `tau = constitutive(eps)`. Only the linear
/// isotropic instance ([`Material`]) is provided.
pub trait EnergyDensity<T: Real> {
    fn w(&self, grad_u: &Tensor2<T>) -> T;
    fn w_star(&self, tau: &Tensor2<T>) -> T;
    fn constitutive(&self, grad_u: &Tensor2<T>) -> Tensor2<T>;

    /// Fenchel-Young gap `W(eps) + W*(tau) - tau:eps`; nonnegative.
    fn fenchel_young_gap(&self, grad_u: &Tensor2<T>, tau: &Tensor2<T>) -> T {
        self.w(grad_u) + self.w_star(tau) - tau.ddot(grad_u)
    }
}

impl<T: Real> EnergyDensity<T> for Material<T> {
    fn w(&self, grad_u: &Tensor2<T>) -> T {
        self.energy_w(grad_u)
    }
    fn w_star(&self, tau: &Tensor2<T>) -> T {
        self.energy_w_star(tau)
    }
    fn constitutive(&self, grad_u: &Tensor2<T>) -> Tensor2<T> {
        self.hooke_apply(grad_u)
    }
}

/// Side of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// `x = 0`
    XMinus,
    /// `x = 1`
    XPlus,
    /// `y = 0`
    YMinus,
    /// `y = 1`
    YPlus,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::XMinus, Side::XPlus, Side::YMinus, Side::YPlus];

    pub fn outward_normal<T: Real>(self) -> [T; 2] {
        let (o, z) = (T::one(), T::zero());
        match self {
            Side::XMinus => [-o, z],
            Side::XPlus => [o, z],
            Side::YMinus => [z, -o],
            Side::YPlus => [z, o],
        }
    }

    /// Point on the side at arc parameter `s` in `[0, 1]`.
    pub fn point<T: Real>(self, s: T) -> (T, T) {
        match self {
            Side::XMinus => (T::zero(), s),
            Side::XPlus => (T::one(), s),
            Side::YMinus => (s, T::zero()),
            Side::YPlus => (s, T::one()),
        }
    }
}

/// Field component constrained by a boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constrained {
    DisplacementX,
    DisplacementY,
    /// Normal traction `(sigma n)_x` on a side with normal along x, i.e. `sigma_xx`.
    StressXX,
    /// Normal traction `(sigma n)_y` on a side with normal along y, i.e. `sigma_yy`.
    StressYY,
}

impl Constrained {
    pub fn is_displacement(self) -> bool {
        matches!(self, Constrained::DisplacementX | Constrained::DisplacementY)
    }
}

/// Prescribed boundary value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prescribed<T> {
    Zero,
    /// `amplitude * sin(pi x)`
    SineLoad { amplitude: T },
}

impl<T: Real> Prescribed<T> {
    pub fn at(&self, x: T, _y: T) -> T {
        match *self {
            Prescribed::Zero => T::zero(),
            Prescribed::SineLoad { amplitude } => amplitude * (T::PI() * x).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition<T> {
    pub side: Side,
    pub quantity: Constrained,
    pub value: Prescribed<T>,
}

impl<T: Real> BoundaryCondition<T> {
    /// Residual in the form the loss penalizes. Traction conditions are
    /// expressed through the outward normal: `(sigma n)_i - t_i`.
    pub fn residual(&self, u: [T; 2], sigma: &Tensor2<T>, x: T, y: T) -> T {
        let n = self.side.outward_normal::<T>();
        let target = self.value.at(x, y);
        match self.quantity {
            Constrained::DisplacementX => u[0] - target,
            Constrained::DisplacementY => u[1] - target,
            Constrained::StressXX => sigma.xx() * n[0] - target * n[0],
            Constrained::StressYY => sigma.yy() * n[1] - target * n[1],
        }
    }
}

/// Pointwise exact fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactFields<T> {
    pub u: [T; 2],
    pub grad_u: Tensor2<T>,
    pub sigma: Tensor2<T>,
}

/// Square plate `]0,1[^2` with manufactured body forces and the closed-form solution
/// `u_x = cos(2 pi x) sin(pi y)`, `u_y = sin(pi x) Q y^4 / 4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedProblem<T> {
    pub material: Material<T>,
    pub q: T,
}

impl<T: Real> ManufacturedProblem<T> {
    pub fn new(material: Material<T>) -> Self {
        ManufacturedProblem {
            material,
            q: T::lit(4.0),
        }
    }

    pub fn body_force(&self, x: T, y: T) -> [T; 2] {
        let pi = T::PI();
        let (l, m, q) = (self.material.lambda, self.material.mu, self.q);
        let c = T::lit;
        let cos2x = (c(2.0) * pi * x).cos();
        let sin2x = (c(2.0) * pi * x).sin();
        let (sinx, cosx) = ((pi * x).sin(), (pi * x).cos());
        let (siny, cosy) = ((pi * y).sin(), (pi * y).cos());
        let pi2 = pi * pi;
        let fx = l * (c(4.0) * pi2 * cos2x * siny - pi * cosx * q * y.powi(3))
            + m * (c(9.0) * pi2 * cos2x * siny - pi * cosx * q * y.powi(3));
        let fy = l * (c(-3.0) * sinx * q * y.powi(2) + c(2.0) * pi2 * sin2x * cosy)
            + m * (c(-6.0) * sinx * q * y.powi(2)
                + c(2.0) * pi2 * sin2x * cosy
                + pi2 * sinx * q * y.powi(4) / c(4.0));
        [fx, fy]
    }

    pub fn exact_solution(&self, x: T, y: T) -> ExactFields<T> {
        let pi = T::PI();
        let two_pi = T::lit(2.0) * pi;
        let q = self.q;
        let (sinx, cosx) = ((pi * x).sin(), (pi * x).cos());
        let (siny, cosy) = ((pi * y).sin(), (pi * y).cos());
        let (sin2x, cos2x) = ((two_pi * x).sin(), (two_pi * x).cos());
        let u = [cos2x * siny, sinx * q * y.powi(4) / T::lit(4.0)];
        let grad_u = Tensor2::new(
            -two_pi * sin2x * siny,
            pi * cos2x * cosy,
            pi * cosx * q * y.powi(4) / T::lit(4.0),
            sinx * q * y.powi(3),
        );
        ExactFields {
            u,
            grad_u,
            sigma: self.material.hooke_apply(&grad_u),
        }
    }

    /// Componentwise boundary-condition table of the plate problem.
    pub fn boundary_conditions(&self) -> Vec<BoundaryCondition<T>> {
        use Constrained::*;
        let bc = |side, quantity, value| BoundaryCondition { side, quantity, value };
        vec![
            bc(Side::XMinus, StressXX, Prescribed::Zero),
            bc(Side::XMinus, DisplacementY, Prescribed::Zero),
            bc(Side::XPlus, StressXX, Prescribed::Zero),
            bc(Side::XPlus, DisplacementY, Prescribed::Zero),
            bc(Side::YMinus, DisplacementX, Prescribed::Zero),
            bc(Side::YMinus, DisplacementY, Prescribed::Zero),
            bc(Side::YPlus, DisplacementX, Prescribed::Zero),
            bc(
                Side::YPlus,
                StressYY,
                Prescribed::SineLoad {
                    amplitude: self.material.p_modulus() * self.q,
                },
            ),
        ]
    }
}
