//! Elastic energy terms with exact gradients and Hessians.

use nalgebra::{DVector, Matrix3, SMatrix, Vector6};

use super::kinematics::{pair_curvature_derivs, pair_curvatures};
use super::network::{EdgeFrame, RodNetwork};
use super::DerError;
use crate::geometry::Vec3;
use crate::registry::{Registry, RegistryError, StrategySpec};

/// Sparse Hessian contributions as `(row, col, value)` triplets.
pub type Triplets = Vec<(usize, usize, f64)>;

/// One additive contribution to the elastic energy.
pub trait ElasticTerm: Send + Sync {
    fn name(&self) -> &str;

    fn energy(&self, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame]) -> Result<f64, DerError>;

    /// Adds `∂E/∂q` to `grad` and, when requested, `∂²E/∂q²` to `hess`.
    fn accumulate(
        &self,
        net: &RodNetwork,
        q: &DVector<f64>,
        frames: &[EdgeFrame],
        grad: &mut DVector<f64>,
        hess: Option<&mut Triplets>,
    ) -> Result<(), DerError>;
}

#[inline]
fn node(q: &DVector<f64>, i: usize) -> Vec3 {
    Vec3::new(q[3 * i], q[3 * i + 1], q[3 * i + 2])
}

fn push_block(hess: &mut Triplets, ni: usize, nj: usize, block: &Matrix3<f64>) {
    for r in 0..3 {
        for c in 0..3 {
            let v = block[(r, c)];
            if v != 0.0 {
                hess.push((3 * ni + r, 3 * nj + c, v));
            }
        }
    }
}

/// `½ EA ε² ‖ē‖` per edge.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stretch;

impl ElasticTerm for Stretch {
    fn name(&self) -> &str {
        "stretch"
    }

    fn energy(&self, net: &RodNetwork, q: &DVector<f64>, _frames: &[EdgeFrame]) -> Result<f64, DerError> {
        let mut total = 0.0;
        for (e, rest) in net.edges().iter().zip(net.rest_edges()) {
            let l0 = rest.norm();
            let eps = (node(q, e.b) - node(q, e.a)).norm() / l0 - 1.0;
            total += 0.5 * net.material().axial_stiffness(e.radius_m) * eps * eps * l0;
        }
        Ok(total)
    }

    fn accumulate(
        &self,
        net: &RodNetwork,
        q: &DVector<f64>,
        _frames: &[EdgeFrame],
        grad: &mut DVector<f64>,
        mut hess: Option<&mut Triplets>,
    ) -> Result<(), DerError> {
        for (e, rest) in net.edges().iter().zip(net.rest_edges()) {
            let l0 = rest.norm();
            let ev = node(q, e.b) - node(q, e.a);
            let len = ev.norm();
            let t = ev / len;
            let ea = net.material().axial_stiffness(e.radius_m);
            let g = t * (ea * (len / l0 - 1.0));
            for k in 0..3 {
                grad[3 * e.a + k] -= g[k];
                grad[3 * e.b + k] += g[k];
            }
            if let Some(h) = hess.as_deref_mut() {
                let tt = t * t.transpose();
                let block = tt * (ea / l0) + (Matrix3::identity() - tt) * (ea * (len / l0 - 1.0) / len);
                push_block(h, e.a, e.a, &block);
                push_block(h, e.b, e.b, &block);
                push_block(h, e.a, e.b, &-block);
                push_block(h, e.b, e.a, &-block);
            }
        }
        Ok(())
    }
}

/// `½ (EI/Δl) [(κ₁ − κ̄₁)² + (κ₂ − κ̄₂)²]` per bend spring.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bend;

impl Bend {
    fn spring_edges(q: &DVector<f64>, s: &super::network::BendSpring) -> (Vec3, Vec3) {
        let c = node(q, s.center);
        (c - node(q, s.ends[0]), node(q, s.ends[1]) - c)
    }
}

impl ElasticTerm for Bend {
    fn name(&self) -> &str {
        "bend"
    }

    fn energy(&self, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame]) -> Result<f64, DerError> {
        let mut total = 0.0;
        for (k, s) in net.springs().iter().enumerate() {
            let (ei, ej) = Self::spring_edges(q, s);
            let [fi, fj] = s.local_frames(frames);
            let (k1, k2) = pair_curvatures(&ei, &ej, &fi, &fj).map_err(|_| DerError::AntiparallelEdges { spring: Some(k) })?;
            let (d1, d2) = (k1 - s.rest_kappa[0], k2 - s.rest_kappa[1]);
            total += 0.5 * s.bending_stiffness / s.voronoi_length * (d1 * d1 + d2 * d2);
        }
        Ok(total)
    }

    fn accumulate(
        &self,
        net: &RodNetwork,
        q: &DVector<f64>,
        frames: &[EdgeFrame],
        grad: &mut DVector<f64>,
        mut hess: Option<&mut Triplets>,
    ) -> Result<(), DerError> {
        // local coordinates (ei, ej) map to nodes (a, c, b) through ei = c − a, ej = b − c
        let mut b = SMatrix::<f64, 6, 9>::zeros();
        for k in 0..3 {
            b[(k, k)] = -1.0;
            b[(k, 3 + k)] = 1.0;
            b[(3 + k, 3 + k)] = -1.0;
            b[(3 + k, 6 + k)] = 1.0;
        }
        for (k, s) in net.springs().iter().enumerate() {
            let (ei, ej) = Self::spring_edges(q, s);
            let [fi, fj] = s.local_frames(frames);
            let [c1, c2] =
                pair_curvature_derivs(&ei, &ej, &fi, &fj).map_err(|_| DerError::AntiparallelEdges { spring: Some(k) })?;
            let stiff = s.bending_stiffness / s.voronoi_length;
            let (d1, d2) = (c1.value - s.rest_kappa[0], c2.value - s.rest_kappa[1]);
            let g6: Vector6<f64> = (c1.grad * d1 + c2.grad * d2) * stiff;
            let g9 = b.transpose() * g6;
            let ids = [s.ends[0], s.center, s.ends[1]];
            for (slot, &n) in ids.iter().enumerate() {
                for r in 0..3 {
                    grad[3 * n + r] += g9[3 * slot + r];
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                let h6 = (c1.grad * c1.grad.transpose() + c2.grad * c2.grad.transpose() + c1.hess * d1 + c2.hess * d2) * stiff;
                let h9 = b.transpose() * h6 * b;
                for (si, &ni) in ids.iter().enumerate() {
                    for (sj, &nj) in ids.iter().enumerate() {
                        let block: Matrix3<f64> = h9.fixed_view::<3, 3>(3 * si, 3 * sj).into_owned();
                        push_block(h, ni, nj, &block);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reports the true energy of `inner` but the negated gradient and Hessian.
/// Used to check that the derivative oracle catches sign errors.
pub struct NegatedForce(pub Box<dyn ElasticTerm>);

impl ElasticTerm for NegatedForce {
    fn name(&self) -> &str {
        "negated-force"
    }

    fn energy(&self, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame]) -> Result<f64, DerError> {
        self.0.energy(net, q, frames)
    }

    fn accumulate(
        &self,
        net: &RodNetwork,
        q: &DVector<f64>,
        frames: &[EdgeFrame],
        grad: &mut DVector<f64>,
        hess: Option<&mut Triplets>,
    ) -> Result<(), DerError> {
        let mut own = DVector::zeros(grad.len());
        let mut own_hess = Triplets::new();
        self.0.accumulate(net, q, frames, &mut own, hess.is_some().then_some(&mut own_hess))?;
        *grad -= own;
        if let Some(h) = hess {
            h.extend(own_hess.into_iter().map(|(r, c, v)| (r, c, -v)));
        }
        Ok(())
    }
}

pub fn elastic_term_registry() -> Registry<dyn ElasticTerm> {
    let mut reg: Registry<dyn ElasticTerm> = Registry::new("elastic term");
    reg.register("stretch", |_| Ok(Box::new(Stretch) as Box<dyn ElasticTerm>))
        .expect("fresh registry");
    reg.register("bend", |_| Ok(Box::new(Bend) as Box<dyn ElasticTerm>))
        .expect("fresh registry");
    reg
}

/// Gradient and optional Hessian triplets of the total elastic energy.
pub struct Derivatives {
    pub grad: DVector<f64>,
    pub hess: Option<Triplets>,
}

/// The sum of a list of elastic terms.
pub struct ElasticModel {
    terms: Vec<Box<dyn ElasticTerm>>,
}

impl Default for ElasticModel {
    fn default() -> Self {
        Self {
            terms: vec![Box::new(Stretch), Box::new(Bend)],
        }
    }
}

impl ElasticModel {
    pub fn new(terms: Vec<Box<dyn ElasticTerm>>) -> Self {
        Self { terms }
    }

    pub fn from_specs(specs: &[StrategySpec]) -> Result<Self, RegistryError> {
        let reg = elastic_term_registry();
        Ok(Self {
            terms: specs.iter().map(|s| reg.build(s)).collect::<Result<_, _>>()?,
        })
    }

    pub fn term_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.name()).collect()
    }

    pub fn energy(&self, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame]) -> Result<f64, DerError> {
        let mut total = 0.0;
        for t in &self.terms {
            total += t.energy(net, q, frames)?;
        }
        Ok(total)
    }

    pub fn derivatives(
        &self,
        net: &RodNetwork,
        q: &DVector<f64>,
        frames: &[EdgeFrame],
        with_hessian: bool,
    ) -> Result<Derivatives, DerError> {
        let mut grad = DVector::zeros(q.len());
        let mut hess = with_hessian.then(Triplets::new);
        for t in &self.terms {
            t.accumulate(net, q, frames, &mut grad, hess.as_mut())?;
        }
        Ok(Derivatives { grad, hess })
    }

    /// Elastic force `−∂E/∂q`.
    pub fn force(&self, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame]) -> Result<DVector<f64>, DerError> {
        Ok(-self.derivatives(net, q, frames, false)?.grad)
    }

    /// Dense Hessian, for tests and small diagnostics.
    pub fn dense_hessian(&self, net: &RodNetwork, q: &DVector<f64>, frames: &[EdgeFrame]) -> Result<nalgebra::DMatrix<f64>, DerError> {
        let d = self.derivatives(net, q, frames, true)?;
        let mut m = nalgebra::DMatrix::zeros(q.len(), q.len());
        for (r, c, v) in d.hess.expect("requested") {
            m[(r, c)] += v;
        }
        Ok(m)
    }
}
