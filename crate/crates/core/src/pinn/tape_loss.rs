use crate::autodiff::{NodeRef, Result as AdResult, ScalarGraph};
use crate::elasticity::{Constrained, ManufacturedProblem, Side};
use crate::network::{Component, MixedSolution, TapeNetwork};
use crate::scalar::Real;

use super::{CollocationSet, LossBreakdown, LossConfig, LossError};

/// Field components that can be recorded on a tape at lifted coordinates.
pub trait TapeFields<T: Real> {
    fn record(&self, graph: &mut ScalarGraph<T>, component: Component, x: NodeRef, y: NodeRef)
        -> AdResult<NodeRef>;
}

/// A [`MixedSolution`] whose parameters are lifted on a graph, in the order of
/// [`MixedSolution::flat_parameters`].
pub struct LiftedSolution<'a, T> {
    nets: Vec<TapeNetwork<'a, T>>,
}

impl<'a, T: Real> LiftedSolution<'a, T> {
    pub fn lift(sol: &'a MixedSolution<T>, graph: &mut ScalarGraph<T>) -> AdResult<Self> {
        let nets = Component::ALL
            .iter()
            .map(|&c| sol.net(c).lift(graph))
            .collect::<AdResult<Vec<_>>>()?;
        Ok(LiftedSolution { nets })
    }
}

impl<T: Real> TapeFields<T> for LiftedSolution<'_, T> {
    fn record(&self, graph: &mut ScalarGraph<T>, c: Component, x: NodeRef, y: NodeRef) -> AdResult<NodeRef> {
        self.nets[c.index()].forward(graph, x, y)
    }
}

/// The closed-form solution of the plate problem, recorded with tape
/// primitives so its spatial derivatives come from the tangent channel.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormFields<T> {
    pub problem: ManufacturedProblem<T>,
}

impl<T: Real> ClosedFormFields<T> {
    fn strains(&self, g: &mut ScalarGraph<T>, x: NodeRef, y: NodeRef) -> AdResult<[NodeRef; 3]> {
        let pi = T::PI();
        let q = self.problem.q;
        let two_pi_x = g.scale(x, T::lit(2.0) * pi)?;
        let pi_x = g.scale(x, pi)?;
        let pi_y = g.scale(y, pi)?;
        let (s2x, c2x) = (g.sin(two_pi_x)?, g.cos(two_pi_x)?);
        let (sx, cx) = (g.sin(pi_x)?, g.cos(pi_x)?);
        let (sy, cy) = (g.sin(pi_y)?, g.cos(pi_y)?);
        let y2 = g.square(y)?;
        let y3 = g.mul(y2, y)?;
        let y4 = g.square(y2)?;
        // eps_xx = -2 pi sin(2 pi x) sin(pi y)
        let t = g.mul(s2x, sy)?;
        let exx = g.scale(t, T::lit(-2.0) * pi)?;
        // eps_yy = Q sin(pi x) y^3
        let t = g.mul(sx, y3)?;
        let eyy = g.scale(t, q)?;
        // eps_xy = (pi cos(2 pi x) cos(pi y) + pi Q cos(pi x) y^4 / 4) / 2
        let a = g.mul(c2x, cy)?;
        let a = g.scale(a, pi)?;
        let b = g.mul(cx, y4)?;
        let b = g.scale(b, pi * q / T::lit(4.0))?;
        let s = g.add(a, b)?;
        let exy = g.scale(s, T::lit(0.5))?;
        Ok([exx, eyy, exy])
    }
}

impl<T: Real> TapeFields<T> for ClosedFormFields<T> {
    fn record(&self, g: &mut ScalarGraph<T>, c: Component, x: NodeRef, y: NodeRef) -> AdResult<NodeRef> {
        let pi = T::PI();
        let m = self.problem.material;
        match c {
            Component::Ux => {
                let a = g.scale(x, T::lit(2.0) * pi)?;
                let a = g.cos(a)?;
                let b = g.scale(y, pi)?;
                let b = g.sin(b)?;
                g.mul(a, b)
            }
            Component::Uy => {
                let a = g.scale(x, pi)?;
                let a = g.sin(a)?;
                let y2 = g.square(y)?;
                let y4 = g.square(y2)?;
                let p = g.mul(a, y4)?;
                g.scale(p, self.problem.q / T::lit(4.0))
            }
            Component::Sxx | Component::Syy | Component::Sxy => {
                let [exx, eyy, exy] = self.strains(g, x, y)?;
                if c == Component::Sxy {
                    return g.scale(exy, m.mu + m.mu);
                }
                let tr = g.add(exx, eyy)?;
                let vol = g.scale(tr, m.lambda)?;
                let own = if c == Component::Sxx { exx } else { eyy };
                let dev = g.scale(own, m.mu + m.mu)?;
                g.add(vol, dev)
            }
        }
    }
}

fn component_for(q: Constrained) -> Component {
    match q {
        Constrained::DisplacementX => Component::Ux,
        Constrained::DisplacementY => Component::Uy,
        Constrained::StressXX => Component::Sxx,
        Constrained::StressYY => Component::Syy,
    }
}

fn mean<T: Real>(g: &mut ScalarGraph<T>, terms: &[NodeRef], count: usize) -> AdResult<NodeRef> {
    let s = g.sum(terms)?;
    if count == 0 {
        return Ok(s);
    }
    g.scale(s, T::one() / T::lit(count as f64))
}

/// Records the six-term loss on `graph` and returns the root node with the
/// term values.
///
/// Boundary terms follow the componentwise condition table of the problem.
/// Each term is averaged over its own point count; a boundary point carrying
/// two constrained components contributes the sum of both squares.
pub fn assemble_loss<T: Real, F: TapeFields<T>>(
    fields: &F,
    coll: &CollocationSet<T>,
    problem: &ManufacturedProblem<T>,
    cfg: &LossConfig<T>,
    graph: &mut ScalarGraph<T>,
) -> Result<(NodeRef, LossBreakdown<T>), LossError> {
    cfg.validate()?;
    let g = graph;
    let m = problem.material;
    let two_mu = m.mu + m.mu;

    let mut f_terms = Vec::new();
    let mut c_terms = Vec::new();
    let mut u_terms = Vec::new();
    let mut s_terms = Vec::new();
    for p in &coll.interior {
        let x = g.lift_input(0, p[0])?;
        let y = g.lift_input(1, p[1])?;
        let sxx = fields.record(g, Component::Sxx, x, y)?;
        let syy = fields.record(g, Component::Syy, x, y)?;
        let sxy = fields.record(g, Component::Sxy, x, y)?;
        let ux = fields.record(g, Component::Ux, x, y)?;
        let uy = fields.record(g, Component::Uy, x, y)?;

        // momentum residual
        let f = problem.body_force(p[0], p[1]);
        let dsxx_dx = g.tangent_node(sxx, 0)?;
        let dsxy_dy = g.tangent_node(sxy, 1)?;
        let dsxy_dx = g.tangent_node(sxy, 0)?;
        let dsyy_dy = g.tangent_node(syy, 1)?;
        let rx = g.add(dsxx_dx, dsxy_dy)?;
        let rx = g.add_constant(rx, f[0])?;
        let ry = g.add(dsxy_dx, dsyy_dy)?;
        let ry = g.add_constant(ry, f[1])?;
        let (rx2, ry2) = (g.square(rx)?, g.square(ry)?);
        f_terms.push(g.add(rx2, ry2)?);

        // constitutive residual sigma - K sym(grad u)
        let ux_x = g.tangent_node(ux, 0)?;
        let ux_y = g.tangent_node(ux, 1)?;
        let uy_x = g.tangent_node(uy, 0)?;
        let uy_y = g.tangent_node(uy, 1)?;
        let tr = g.add(ux_x, uy_y)?;
        let vol = g.scale(tr, m.lambda)?;
        let kxx = g.scale(ux_x, two_mu)?;
        let kxx = g.add(vol, kxx)?;
        let kyy = g.scale(uy_y, two_mu)?;
        let kyy = g.add(vol, kyy)?;
        let shear = g.add(ux_y, uy_x)?;
        let kxy = g.scale(shear, m.mu)?;
        let cxx = g.sub(sxx, kxx)?;
        let cyy = g.sub(syy, kyy)?;
        let cxy = g.sub(sxy, kxy)?;
        let (a, b, c) = (g.square(cxx)?, g.square(cyy)?, g.square(cxy)?);
        let c2 = g.scale(c, T::lit(2.0))?;
        let ab = g.add(a, b)?;
        c_terms.push(g.add(ab, c2)?);

        if cfg.uses_data() {
            let ex = problem.exact_solution(p[0], p[1]);
            let dx = g.add_constant(ux, -ex.u[0])?;
            let dy = g.add_constant(uy, -ex.u[1])?;
            let (a, b) = (g.square(dx)?, g.square(dy)?);
            u_terms.push(g.add(a, b)?);
            let dxx = g.add_constant(sxx, -ex.sigma.xx())?;
            let dyy = g.add_constant(syy, -ex.sigma.yy())?;
            let dxy = g.add_constant(sxy, -ex.sigma.xy())?;
            let (a, b, c) = (g.square(dxx)?, g.square(dyy)?, g.square(dxy)?);
            let c2 = g.scale(c, T::lit(2.0))?;
            let ab = g.add(a, b)?;
            s_terms.push(g.add(ab, c2)?);
        }
    }

    let bcs = problem.boundary_conditions();
    let mut d_terms = Vec::new();
    let mut n_terms = Vec::new();
    let (mut d_count, mut n_count) = (0usize, 0usize);
    for side in Side::ALL {
        let side_bcs: Vec<_> = bcs.iter().filter(|b| b.side == side).collect();
        if side_bcs.is_empty() {
            continue;
        }
        let has_d = side_bcs.iter().any(|b| b.quantity.is_displacement());
        let has_n = side_bcs.iter().any(|b| !b.quantity.is_displacement());
        let pts = coll.side(side);
        if has_d {
            d_count += pts.len();
        }
        if has_n {
            n_count += pts.len();
        }
        let normal = side.outward_normal::<T>();
        for p in pts {
            let x = g.lift_input(0, p[0])?;
            let y = g.lift_input(1, p[1])?;
            for bc in &side_bcs {
                let v = fields.record(g, component_for(bc.quantity), x, y)?;
                let r = g.add_constant(v, -bc.value.at(p[0], p[1]))?;
                let r = match bc.quantity {
                    Constrained::StressXX => g.scale(r, normal[0])?,
                    Constrained::StressYY => g.scale(r, normal[1])?,
                    _ => r,
                };
                let r2 = g.square(r)?;
                if bc.quantity.is_displacement() {
                    d_terms.push(r2);
                } else {
                    n_terms.push(r2);
                }
            }
        }
    }

    let n_omega = coll.interior.len();
    let mse_d = mean(g, &d_terms, d_count)?;
    let mse_f = mean(g, &f_terms, n_omega)?;
    let mse_n = mean(g, &n_terms, n_count)?;
    let mse_c = mean(g, &c_terms, n_omega)?;

    let mut total = g.add(mse_d, mse_f)?;
    total = g.add(total, mse_n)?;
    let weighted_c = g.scale(mse_c, cfg.eta)?;
    total = g.add(total, weighted_c)?;
    let (mut mse_u_v, mut mse_s_v) = (T::zero(), T::zero());
    if cfg.uses_data() {
        let mse_u = mean(g, &u_terms, n_omega)?;
        let mse_s = mean(g, &s_terms, n_omega)?;
        mse_u_v = g.value(mse_u)?;
        mse_s_v = g.value(mse_s)?;
        let data = g.add(mse_u, mse_s)?;
        total = g.add(total, data)?;
    }
    let breakdown = LossBreakdown {
        mse_gamma_d: g.value(mse_d)?,
        mse_f: g.value(mse_f)?,
        mse_gamma_n: g.value(mse_n)?,
        mse_c: g.value(mse_c)?,
        mse_u: mse_u_v,
        mse_sigma: mse_s_v,
        total: g.value(total)?,
    };
    Ok((total, breakdown))
}
