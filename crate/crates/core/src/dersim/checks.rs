//! Finite-difference checks of elastic forces and Jacobians.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::energy::ElasticModel;
use super::network::{EdgeFrame, RodNetwork};
use super::DerError;
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    /// `‖F − F_fd‖ / ‖F_fd‖` with `F_fd` from central differences of the energy.
    pub force_rel_err: f64,
    /// `‖J − J_fd‖_F / ‖J_fd‖_F` with `J_fd` from central differences of the force.
    pub jacobian_rel_err: f64,
    /// `max |J − Jᵀ| / ‖J‖_F`.
    pub asymmetry: f64,
}

fn rel(diff: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        diff / reference
    } else {
        diff
    }
}

/// Central differences of the energy, one coordinate at a time.
pub fn fd_force(model: &ElasticModel, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame], h: f64) -> Result<DVector<f64>, DerError> {
    let mut out = DVector::zeros(q.len());
    let mut x = q.clone();
    for i in 0..q.len() {
        x[i] = q[i] + h;
        let ep = model.energy(net, &x, frames)?;
        x[i] = q[i] - h;
        let em = model.energy(net, &x, frames)?;
        x[i] = q[i];
        out[i] = -(ep - em) / (2.0 * h);
    }
    Ok(out)
}

/// Central differences of the force, giving `∂F/∂q`.
pub fn fd_jacobian(model: &ElasticModel, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame], h: f64) -> Result<DMatrix<f64>, DerError> {
    let n = q.len();
    let mut out = DMatrix::zeros(n, n);
    let mut x = q.clone();
    for i in 0..n {
        x[i] = q[i] + h;
        let fp = model.force(net, &x, frames)?;
        x[i] = q[i] - h;
        let fm = model.force(net, &x, frames)?;
        x[i] = q[i];
        out.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(out)
}

/// Compares analytic forces and Jacobians with finite differences at step `h`.
pub fn check_derivatives(
    model: &ElasticModel,
    net: &RodNetwork,
    q: &DVector<f64>,
    frames: &[EdgeFrame],
    h: f64,
) -> Result<DerivativeCheck, DerError> {
    let force = model.force(net, q, frames)?;
    let fd = fd_force(model, net, q, frames, h)?;
    let jac = -model.dense_hessian(net, q, frames)?;
    let jfd = fd_jacobian(model, net, q, frames, h)?;
    let jnorm = jac.norm();
    Ok(DerivativeCheck {
        force_rel_err: rel((&force - &fd).norm(), fd.norm()),
        jacobian_rel_err: rel((&jac - &jfd).norm(), jfd.norm()),
        asymmetry: rel((&jac - jac.transpose()).amax(), jnorm),
    })
}

/// Mean rest edge length, the natural scale for finite-difference steps.
pub fn length_scale(net: &RodNetwork) -> f64 {
    net.rest_edges().iter().map(|e| e.norm()).sum::<f64>() / net.rest_edges().len() as f64
}

/// Rest positions perturbed by up to `fraction` of the length scale per coordinate,
/// with every reference director spun by a random angle about its tangent.
pub fn perturbed_state<R: Rng>(net: &RodNetwork, fraction: f64, rng: &mut R) -> (DVector<f64>, Vec<EdgeFrame>) {
    let scale = length_scale(net) * fraction;
    let q = DVector::from_iterator(net.dof_count(), net.rest_positions().into_iter().map(|x| x + rng.gen_range(-scale..scale)));
    let frames = net
        .rest_frames()
        .iter()
        .map(|f| {
            let angle: f64 = rng.gen_range(-0.5..0.5);
            let m1: Vec3 = f.m1 * angle.cos() + f.m2 * angle.sin();
            EdgeFrame::new(f.tangent, m1)
        })
        .collect();
    (q, frames)
}
