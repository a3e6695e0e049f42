use std::ops::Range;

use ndarray::Array2;

use crate::elasticity::{Constrained, ExactFields, ManufacturedProblem, Material, Side};
use crate::network::{BatchTrace, Channels, Component, MixedSolution};
use crate::scalar::Real;

use super::{CollocationSet, LossBreakdown, LossConfig, LossError};

#[derive(Debug, Clone)]
struct BoundaryResidual<T> {
    start: usize,
    targets: Vec<T>,
    /// Outward-normal factor applied to traction residuals, 1 for displacements.
    sign: T,
    dirichlet: bool,
}

#[derive(Debug, Clone)]
struct BoundaryBlock<T> {
    points: Vec<[T; 2]>,
    residuals: Vec<BoundaryResidual<T>>,
}

/// Interior points per forward/backward pass; keeps per-layer buffers cache resident.
const CHUNK: usize = 512;

/// Batched evaluator of the six-term loss and its parameter gradient.
///
/// Computes the same quantities as [`assemble_loss`](super::assemble_loss)
/// with dense per-layer kernels. Body forces, data, and boundary targets
/// are tabulated once at construction.
#[derive(Debug, Clone)]
pub struct BatchLoss<T> {
    cfg: LossConfig<T>,
    material: Material<T>,
    interior: Vec<[T; 2]>,
    body_force: Vec<[T; 2]>,
    data: Option<Vec<ExactFields<T>>>,
    boundary: [BoundaryBlock<T>; 5],
    dirichlet_count: usize,
    neumann_count: usize,
}

fn component_for(q: Constrained) -> Component {
    match q {
        Constrained::DisplacementX => Component::Ux,
        Constrained::DisplacementY => Component::Uy,
        Constrained::StressXX => Component::Sxx,
        Constrained::StressYY => Component::Syy,
    }
}

fn check(v: f64, what: &'static str) -> Result<(), LossError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(LossError::NonFinite { what })
    }
}

impl<T: Real> BatchLoss<T> {
    pub fn new(coll: &CollocationSet<T>, problem: &ManufacturedProblem<T>, cfg: LossConfig<T>) -> Result<Self, LossError> {
        cfg.validate()?;
        let body_force = coll.interior.iter().map(|p| problem.body_force(p[0], p[1])).collect();
        let data = cfg
            .uses_data()
            .then(|| coll.interior.iter().map(|p| problem.exact_solution(p[0], p[1])).collect());

        let empty = || BoundaryBlock {
            points: Vec::new(),
            residuals: Vec::new(),
        };
        let mut boundary = [empty(), empty(), empty(), empty(), empty()];
        let bcs = problem.boundary_conditions();
        let (mut dirichlet_count, mut neumann_count) = (0, 0);
        for side in Side::ALL {
            let pts = coll.side(side);
            let on_side: Vec<_> = bcs.iter().filter(|b| b.side == side).collect();
            if on_side.iter().any(|b| b.quantity.is_displacement()) {
                dirichlet_count += pts.len();
            }
            if on_side.iter().any(|b| !b.quantity.is_displacement()) {
                neumann_count += pts.len();
            }
            let normal = side.outward_normal::<T>();
            for bc in on_side {
                let block = &mut boundary[component_for(bc.quantity).index()];
                let start = block.points.len();
                block.points.extend_from_slice(pts);
                let sign = match bc.quantity {
                    Constrained::StressXX => normal[0],
                    Constrained::StressYY => normal[1],
                    _ => T::one(),
                };
                block.residuals.push(BoundaryResidual {
                    start,
                    targets: pts.iter().map(|p| bc.value.at(p[0], p[1])).collect(),
                    sign,
                    dirichlet: bc.quantity.is_displacement(),
                });
            }
        }
        Ok(BatchLoss {
            cfg,
            material: problem.material,
            interior: coll.interior.clone(),
            body_force,
            data,
            boundary,
            dirichlet_count,
            neumann_count,
        })
    }

    pub fn config(&self) -> &LossConfig<T> {
        &self.cfg
    }

    /// Evaluates the loss. When `grad` is given (length
    /// [`MixedSolution::parameter_count`]) it is overwritten with the gradient
    /// of the total. Terms with zero weight are skipped unless `full_report`
    /// is set; data terms are never evaluated when `alpha = 0`.
    pub fn evaluate(
        &self,
        sol: &MixedSolution<T>,
        mut grad: Option<&mut [T]>,
        full_report: bool,
    ) -> Result<LossBreakdown<T>, LossError> {
        let n = self.interior.len();
        let inv_n = T::one() / T::lit(n as f64);
        let two = T::lit(2.0);
        let need_c = self.cfg.eta > T::zero() || full_report;
        let mut out = LossBreakdown::<T>::default();
        if let Some(g) = grad.as_deref_mut() {
            assert_eq!(g.len(), sol.parameter_count());
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        let offsets = sol.offsets();
        let mut acc = [T::zero(); 4];
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let part = self.interior_chunk(sol, start..end, grad.as_deref_mut(), need_c);
            for (a, p) in acc.iter_mut().zip(part) {
                *a = *a + p;
            }
        }
        out.mse_f = acc[0] * inv_n;
        out.mse_c = acc[1] * inv_n;
        out.mse_u = acc[2] * inv_n;
        out.mse_sigma = acc[3] * inv_n;
        check(out.mse_f.as_f64() + out.mse_c.as_f64() + out.mse_u.as_f64() + out.mse_sigma.as_f64(), "interior residual")?;

        // boundary conditions
        let inv_d = T::one() / T::lit(self.dirichlet_count.max(1) as f64);
        let inv_nm = T::one() / T::lit(self.neumann_count.max(1) as f64);
        let (mut acc_d, mut acc_n) = (T::zero(), T::zero());
        for c in Component::ALL {
            let block = &self.boundary[c.index()];
            if block.points.is_empty() {
                continue;
            }
            let tr = sol.net(c).forward_batch(&block.points, Channels::VALUE);
            let vals = tr.values();
            let mut upstream = Array2::<T>::zeros(tr.output().raw_dim());
            for res in &block.residuals {
                let w = if res.dirichlet { inv_d } else { inv_nm };
                for (j, &target) in res.targets.iter().enumerate() {
                    let k = res.start + j;
                    let r = (vals[k] - target) * res.sign;
                    if res.dirichlet {
                        acc_d = acc_d + r * r;
                    } else {
                        acc_n = acc_n + r * r;
                    }
                    upstream[[0, k]] = two * r * res.sign * w;
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                let off = offsets[c.index()];
                let len = sol.net(c).parameters().len();
                sol.net(c).backward_batch(&tr, upstream.view(), &mut g[off..off + len]);
            }
        }
        out.mse_gamma_d = acc_d * inv_d;
        out.mse_gamma_n = acc_n * inv_nm;

        let out = out.with_total(&self.cfg);
        check(out.total.as_f64(), "loss")?;
        if let Some(g) = grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(LossError::NonFinite { what: "gradient" });
            }
        }
        Ok(out)
    }

    /// Unnormalized sums `[f, C, u, sigma]` over interior points `range`, with
    /// the gradient of their weighted contribution to the total added to `grad`.
    fn interior_chunk(
        &self,
        sol: &MixedSolution<T>,
        range: Range<usize>,
        grad: Option<&mut [T]>,
        need_c: bool,
    ) -> [T; 4] {
        let points = &self.interior[range.clone()];
        let m = points.len();
        let inv_n = T::one() / T::lit(self.interior.len() as f64);
        let two = T::lit(2.0);
        let eta = self.cfg.eta;
        let weight_c = eta > T::zero();
        let use_data = self.data.is_some();
        let want_grad = grad.is_some();
        let mut sums = [T::zero(); 4];

        let u_channels = if need_c { Channels::ALL } else { Channels::VALUE };
        let fwd = |c: Component, ch: Channels| sol.net(c).forward_batch(points, ch);
        let sxx = fwd(Component::Sxx, Channels { dx: true, dy: false });
        let syy = fwd(Component::Syy, Channels { dx: false, dy: true });
        let sxy = fwd(Component::Sxy, Channels::ALL);
        let (ux, uy) = if need_c || use_data {
            (Some(fwd(Component::Ux, u_channels)), Some(fwd(Component::Uy, u_channels)))
        } else {
            (None, None)
        };

        let up = |t: &BatchTrace<T>| Array2::<T>::zeros(t.output().raw_dim());
        let mut g_sxx = up(&sxx);
        let mut g_syy = up(&syy);
        let mut g_sxy = up(&sxy);
        let mut g_ux = ux.as_ref().map(up);
        let mut g_uy = uy.as_ref().map(up);

        // momentum balance
        {
            let (a, b) = (sxx.tangent(0).unwrap(), sxy.tangent(1).unwrap());
            let (c, d) = (sxy.tangent(0).unwrap(), syy.tangent(1).unwrap());
            let (o_sxx, o_sxy_y) = (sxx.block_offset(Some(0)).unwrap(), sxy.block_offset(Some(1)).unwrap());
            let (o_sxy_x, o_syy) = (sxy.block_offset(Some(0)).unwrap(), syy.block_offset(Some(1)).unwrap());
            let forces = &self.body_force[range.clone()];
            let mut acc = T::zero();
            for k in 0..m {
                let f = forces[k];
                let rx = a[k] + b[k] + f[0];
                let ry = c[k] + d[k] + f[1];
                acc = acc + rx * rx + ry * ry;
                if want_grad {
                    let (gx, gy) = (two * rx * inv_n, two * ry * inv_n);
                    g_sxx[[0, o_sxx + k]] = gx;
                    g_sxy[[0, o_sxy_y + k]] = gx;
                    g_sxy[[0, o_sxy_x + k]] = gy;
                    g_syy[[0, o_syy + k]] = gy;
                }
            }
            sums[0] = acc;
        }

        // constitutive residual
        if need_c {
            let (ux, uy) = (ux.as_ref().unwrap(), uy.as_ref().unwrap());
            let Material { lambda, mu } = self.material;
            let p = lambda + mu + mu;
            let (vxx, vyy, vxy) = (sxx.values(), syy.values(), sxy.values());
            let (ux_x, ux_y) = (ux.tangent(0).unwrap(), ux.tangent(1).unwrap());
            let (uy_x, uy_y) = (uy.tangent(0).unwrap(), uy.tangent(1).unwrap());
            let mut acc = T::zero();
            let scale = eta * two * inv_n;
            for k in 0..m {
                let tr = lambda * (ux_x[k] + uy_y[k]);
                let rxx = vxx[k] - (tr + (mu + mu) * ux_x[k]);
                let ryy = vyy[k] - (tr + (mu + mu) * uy_y[k]);
                let rxy = vxy[k] - mu * (ux_y[k] + uy_x[k]);
                acc = acc + rxx * rxx + ryy * ryy + two * rxy * rxy;
                if want_grad && weight_c {
                    g_sxx[[0, k]] = g_sxx[[0, k]] + scale * rxx;
                    g_syy[[0, k]] = g_syy[[0, k]] + scale * ryy;
                    g_sxy[[0, k]] = g_sxy[[0, k]] + scale * two * rxy;
                    let gux = g_ux.as_mut().unwrap();
                    let guy = g_uy.as_mut().unwrap();
                    gux[[0, m + k]] = gux[[0, m + k]] - scale * (rxx * p + ryy * lambda);
                    guy[[0, 2 * m + k]] = guy[[0, 2 * m + k]] - scale * (rxx * lambda + ryy * p);
                    let gs = scale * two * rxy * mu;
                    gux[[0, 2 * m + k]] = gux[[0, 2 * m + k]] - gs;
                    guy[[0, m + k]] = guy[[0, m + k]] - gs;
                }
            }
            sums[1] = acc;
        }

        // data misfit
        if let Some(data) = &self.data {
            let (ux, uy) = (ux.as_ref().unwrap(), uy.as_ref().unwrap());
            let (vux, vuy) = (ux.values(), uy.values());
            let (vxx, vyy, vxy) = (sxx.values(), syy.values(), sxy.values());
            let (mut acc_u, mut acc_s) = (T::zero(), T::zero());
            let s = two * inv_n;
            for (k, ex) in data[range].iter().enumerate() {
                let (dx, dy) = (vux[k] - ex.u[0], vuy[k] - ex.u[1]);
                let (dxx, dyy, dxy) = (vxx[k] - ex.sigma.xx(), vyy[k] - ex.sigma.yy(), vxy[k] - ex.sigma.xy());
                acc_u = acc_u + dx * dx + dy * dy;
                acc_s = acc_s + dxx * dxx + dyy * dyy + two * dxy * dxy;
                if want_grad {
                    let gux = g_ux.as_mut().unwrap();
                    let guy = g_uy.as_mut().unwrap();
                    gux[[0, k]] = gux[[0, k]] + s * dx;
                    guy[[0, k]] = guy[[0, k]] + s * dy;
                    g_sxx[[0, k]] = g_sxx[[0, k]] + s * dxx;
                    g_syy[[0, k]] = g_syy[[0, k]] + s * dyy;
                    g_sxy[[0, k]] = g_sxy[[0, k]] + s * two * dxy;
                }
            }
            sums[2] = acc_u;
            sums[3] = acc_s;
        }

        if let Some(g) = grad {
            let offsets = sol.offsets();
            let mut back = |c: Component, t: &BatchTrace<T>, u: &Array2<T>| {
                let off = offsets[c.index()];
                let len = sol.net(c).parameters().len();
                sol.net(c).backward_batch(t, u.view(), &mut g[off..off + len]);
            };
            back(Component::Sxx, &sxx, &g_sxx);
            back(Component::Syy, &syy, &g_syy);
            back(Component::Sxy, &sxy, &g_sxy);
            if let (Some(t), Some(u)) = (&ux, &g_ux) {
                back(Component::Ux, t, u);
            }
            if let (Some(t), Some(u)) = (&uy, &g_uy) {
                back(Component::Uy, t, u);
            }
        }
        sums
    }
}
