//! Discrete curvature, reference directors and their derivatives.
//!
//! Directors are not independent unknowns. Each edge stores a reference pair
//! `(a, m_ref)` (a unit tangent and a unit vector perpendicular to it); the
//! first director at the current tangent `t` is `m_ref` parallel-transported
//! from `a` to `t`, and the second is `t × m1`. This makes every energy an
//! explicit function of node positions, so exact gradients and Hessians exist.

use nalgebra::{Matrix3, Matrix6, SMatrix, Vector6};

use super::DerError;
use crate::geometry::Vec3;

pub type Matrix3x6 = SMatrix<f64, 3, 6>;

/// Relative threshold on `|ei||ej| + ei·ej` below which two edges count as folded back.
pub const ANTIPARALLEL_TOL: f64 = 1e-8;

#[inline]
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `|e| / |ē| − 1`.
pub fn axial_strain(e: &Vec3, rest: &Vec3) -> f64 {
    e.norm() / rest.norm() - 1.0
}

/// `2 (ei × ej) / (|ei||ej| + ei·ej)`.
pub fn curvature_binormal(ei: &Vec3, ej: &Vec3) -> Result<Vec3, DerError> {
    let scale = ei.norm() * ej.norm();
    let den = scale + ei.dot(ej);
    if !(den > ANTIPARALLEL_TOL * scale) {
        return Err(DerError::AntiparallelEdges { spring: None });
    }
    Ok(ei.cross(ej) * (2.0 / den))
}

/// `(½(m2i + m2j)·κb, −½(m1i + m1j)·κb)`.
pub fn material_curvatures(kb: &Vec3, m1i: &Vec3, m2i: &Vec3, m1j: &Vec3, m2j: &Vec3) -> (f64, f64) {
    (0.5 * (m2i + m2j).dot(kb), -0.5 * (m1i + m1j).dot(kb))
}

/// Parallel transport of `m` (perpendicular to unit `a`) onto unit `t`.
pub fn transport(m: &Vec3, a: &Vec3, t: &Vec3) -> Vec3 {
    let d = 1.0 + a.dot(t);
    m - (a + t) * (m.dot(t) / d)
}

/// Directors of an edge with tangent `t` and reference `(a, m_ref)`.
pub fn directors(t: &Vec3, a: &Vec3, m_ref: &Vec3) -> (Vec3, Vec3) {
    let m1 = transport(m_ref, a, t);
    (m1, t.cross(&m1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Director {
    M1,
    M2,
}

/// Directors of one edge together with their first and second derivatives
/// with respect to the edge vector.
pub struct EdgeDirectors {
    t: Vec3,
    len: f64,
    proj: Matrix3<f64>,
    a: Vec3,
    m_ref: Vec3,
    s: f64,
    d: f64,
    p: Vec3,
    pub m1: Vec3,
    pub m2: Vec3,
    j_m1_t: Matrix3<f64>,
    j_m2_t: Matrix3<f64>,
}

impl EdgeDirectors {
    pub fn new(e: &Vec3, a: &Vec3, m_ref: &Vec3) -> Self {
        let len = e.norm();
        let t = e / len;
        let proj = Matrix3::identity() - t * t.transpose();
        let p = a + t;
        let s = m_ref.dot(&t);
        let d = 1.0 + a.dot(&t);
        let m1 = m_ref - p * (s / d);
        let m2 = t.cross(&m1);
        let j_phi = p * m_ref.transpose() / d + Matrix3::identity() * (s / d) - p * a.transpose() * (s / (d * d));
        let j_m1_t = -j_phi;
        let j_m2_t = skew(&t) * j_m1_t - skew(&m1);
        Self {
            t,
            len,
            proj,
            a: *a,
            m_ref: *m_ref,
            s,
            d,
            p,
            m1,
            m2,
            j_m1_t,
            j_m2_t,
        }
    }

    pub fn value(&self, which: Director) -> Vec3 {
        match which {
            Director::M1 => self.m1,
            Director::M2 => self.m2,
        }
    }

    fn jac_t(&self, which: Director) -> &Matrix3<f64> {
        match which {
            Director::M1 => &self.j_m1_t,
            Director::M2 => &self.j_m2_t,
        }
    }

    /// `∇²_t (m1·x)`.
    fn hess_m1_t(&self, x: &Vec3) -> Matrix3<f64> {
        let (d, s, mr, a) = (self.d, self.s, &self.m_ref, &self.a);
        let px = self.p.dot(x);
        let h_psi = (mr * x.transpose() + x * mr.transpose()) / d - (mr * a.transpose() + a * mr.transpose()) * (px / (d * d))
            - (x * a.transpose() + a * x.transpose()) * (s / (d * d))
            + a * a.transpose() * (2.0 * s * px / (d * d * d));
        -h_psi
    }

    /// `∇²_t (u·x)` for the chosen director.
    fn hess_t(&self, which: Director, x: &Vec3) -> Matrix3<f64> {
        match which {
            Director::M1 => self.hess_m1_t(x),
            Director::M2 => {
                let y = x.cross(&self.t);
                let sx = skew(x);
                self.hess_m1_t(&y) + self.j_m1_t.transpose() * sx + sx.transpose() * self.j_m1_t
            }
        }
    }

    /// Jacobian of a director with respect to the edge vector.
    pub fn jac_e(&self, which: Director) -> Matrix3<f64> {
        self.jac_t(which) * self.proj / self.len
    }

    /// `∇²_e (u·x)` for the chosen director.
    pub fn hess_e(&self, which: Director, x: &Vec3) -> Matrix3<f64> {
        let g = self.jac_t(which).transpose() * x;
        let pg = self.proj * g;
        let l2 = self.len * self.len;
        (self.proj * self.hess_t(which, x) * self.proj) / l2
            - (self.t * pg.transpose() + pg * self.t.transpose() + self.proj * self.t.dot(&g)) / l2
    }
}

/// Curvature binormal of an edge pair with its derivatives in `(ei, ej)`.
pub struct BinormalDerivs {
    pub kb: Vec3,
    c: Vec3,
    den: f64,
    grad_den: Vector6<f64>,
    jac_c: Matrix3x6,
    ni: f64,
    nj: f64,
    ti: Vec3,
    tj: Vec3,
    pub jac: Matrix3x6,
}

impl BinormalDerivs {
    pub fn new(ei: &Vec3, ej: &Vec3) -> Result<Self, DerError> {
        let ni = ei.norm();
        let nj = ej.norm();
        let den = ni * nj + ei.dot(ej);
        if !(den > ANTIPARALLEL_TOL * ni * nj) {
            return Err(DerError::AntiparallelEdges { spring: None });
        }
        let ti = ei / ni;
        let tj = ej / nj;
        let c = ei.cross(ej);
        let kb = c * (2.0 / den);
        let mut jac_c = Matrix3x6::zeros();
        jac_c.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(ej)));
        jac_c.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(ei));
        let mut grad_den = Vector6::zeros();
        grad_den.fixed_rows_mut::<3>(0).copy_from(&(ti * nj + ej));
        grad_den.fixed_rows_mut::<3>(3).copy_from(&(tj * ni + ei));
        let jac = jac_c * (2.0 / den) - c * grad_den.transpose() * (2.0 / (den * den));
        Ok(Self {
            kb,
            c,
            den,
            grad_den,
            jac_c,
            ni,
            nj,
            ti,
            tj,
            jac,
        })
    }

    fn hess_den(&self) -> Matrix6<f64> {
        let i3 = Matrix3::identity();
        let mut h = Matrix6::zeros();
        h.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&((i3 - self.ti * self.ti.transpose()) * (self.nj / self.ni)));
        h.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&((i3 - self.tj * self.tj.transpose()) * (self.ni / self.nj)));
        let cross = self.ti * self.tj.transpose() + i3;
        h.fixed_view_mut::<3, 3>(0, 3).copy_from(&cross);
        h.fixed_view_mut::<3, 3>(3, 0).copy_from(&cross.transpose());
        h
    }

    /// `∇² (κb·u)` over `(ei, ej)` for a fixed vector `u`.
    pub fn hess_contract(&self, u: &Vec3) -> Matrix6<f64> {
        let d = self.den;
        let n = self.c.dot(u);
        let grad_n: Vector6<f64> = self.jac_c.transpose() * u;
        let mut h_n = Matrix6::zeros();
        let su = skew(u);
        h_n.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-su));
        h_n.fixed_view_mut::<3, 3>(3, 0).copy_from(&su);
        let gd = &self.grad_den;
        h_n * (2.0 / d) - (grad_n * gd.transpose() + gd * grad_n.transpose()) * (2.0 / (d * d)) - self.hess_den() * (2.0 * n / (d * d))
            + gd * gd.transpose() * (4.0 * n / (d * d * d))
    }
}

/// Reference data of one edge as seen from a bend spring.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    pub a: Vec3,
    pub m_ref: Vec3,
}

/// Material curvatures of an edge pair.
pub fn pair_curvatures(ei: &Vec3, ej: &Vec3, fi: &LocalFrame, fj: &LocalFrame) -> Result<(f64, f64), DerError> {
    let kb = curvature_binormal(ei, ej)?;
    let (m1i, m2i) = directors(&ei.normalize(), &fi.a, &fi.m_ref);
    let (m1j, m2j) = directors(&ej.normalize(), &fj.a, &fj.m_ref);
    Ok(material_curvatures(&kb, &m1i, &m2i, &m1j, &m2j))
}

/// Value, gradient and Hessian of one material curvature over `(ei, ej)`.
pub struct CurvatureDerivs {
    pub value: f64,
    pub grad: Vector6<f64>,
    pub hess: Matrix6<f64>,
}

/// Both material curvatures of an edge pair with exact derivatives.
pub fn pair_curvature_derivs(ei: &Vec3, ej: &Vec3, fi: &LocalFrame, fj: &LocalFrame) -> Result<[CurvatureDerivs; 2], DerError> {
    let kb = BinormalDerivs::new(ei, ej)?;
    let di = EdgeDirectors::new(ei, &fi.a, &fi.m_ref);
    let dj = EdgeDirectors::new(ej, &fj.a, &fj.m_ref);
    let one = |which: Director, coef: f64| {
        let u = (di.value(which) + dj.value(which)) * coef;
        let mut ju = Matrix3x6::zeros();
        ju.fixed_view_mut::<3, 3>(0, 0).copy_from(&(di.jac_e(which) * coef));
        ju.fixed_view_mut::<3, 3>(0, 3).copy_from(&(dj.jac_e(which) * coef));
        let value = u.dot(&kb.kb);
        let grad = ju.transpose() * kb.kb + kb.jac.transpose() * u;
        let mut hess = ju.transpose() * kb.jac + kb.jac.transpose() * ju + kb.hess_contract(&u);
        let hi = di.hess_e(which, &kb.kb) * coef;
        let hj = dj.hess_e(which, &kb.kb) * coef;
        let mut blk = hess.fixed_view_mut::<3, 3>(0, 0);
        blk += hi;
        let mut blk = hess.fixed_view_mut::<3, 3>(3, 3);
        blk += hj;
        CurvatureDerivs { value, grad, hess }
    };
    Ok([one(Director::M2, 0.5), one(Director::M1, -0.5)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if v.norm() > 0.2 {
                return v.normalize();
            }
        }
    }

    fn rand_frame(rng: &mut ChaCha8Rng, near: &Vec3) -> LocalFrame {
        let a = (near + rand_unit(rng) * 0.3).normalize();
        let m_ref = crate::geometry::any_perpendicular(&a);
        let spin = rng.gen_range(0.0..6.0);
        let m_ref = m_ref * f64::cos(spin) + a.cross(&m_ref) * f64::sin(spin);
        LocalFrame { a, m_ref }
    }

    #[test]
    fn collinear_binormal_is_zero() {
        assert_eq!(curvature_binormal(&Vec3::x(), &(Vec3::x() * 2.0)).unwrap(), Vec3::zeros());
    }

    #[test]
    fn right_angle_binormal() {
        let kb = curvature_binormal(&Vec3::x(), &Vec3::y()).unwrap();
        assert!((kb - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn antiparallel_rejected() {
        assert!(matches!(curvature_binormal(&Vec3::x(), &(-Vec3::x())), Err(DerError::AntiparallelEdges { .. })));
    }

    #[test]
    fn material_curvature_example() {
        let kb = Vec3::new(0.0, 0.0, 2.0);
        let (k1, k2) = material_curvatures(&kb, &Vec3::y(), &Vec3::z(), &Vec3::y(), &Vec3::z());
        assert_eq!((k1, k2), (2.0, 0.0));
        let (n1, n2) = material_curvatures(&-kb, &Vec3::y(), &Vec3::z(), &Vec3::y(), &Vec3::z());
        assert_eq!((n1, n2), (-k1, -k2));
        assert_eq!(material_curvatures(&Vec3::zeros(), &Vec3::y(), &Vec3::z(), &Vec3::y(), &Vec3::z()), (0.0, 0.0));
    }

    #[test]
    fn strain_examples() {
        assert_eq!(axial_strain(&Vec3::x(), &Vec3::x()), 0.0);
        assert!((axial_strain(&(Vec3::x() * 1.1), &Vec3::x()) - 0.1).abs() < 1e-15);
        assert_eq!(axial_strain(&(Vec3::y() * 0.5), &Vec3::x()), -0.5);
    }

    #[test]
    fn transported_directors_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t0 = rand_unit(&mut rng);
            let f = rand_frame(&mut rng, &t0);
            let t = (f.a + rand_unit(&mut rng) * 0.8).normalize();
            let (m1, m2) = directors(&t, &f.a, &f.m_ref);
            assert!((m1.norm() - 1.0).abs() < 1e-12);
            assert!(m1.dot(&t).abs() < 1e-12);
            assert!((m2.norm() - 1.0).abs() < 1e-12);
            assert!(m2.dot(&m1).abs() < 1e-12);
        }
    }

    #[test]
    fn transport_is_identity_at_reference() {
        let a = Vec3::new(0.2, -0.3, 0.9).normalize();
        let m = crate::geometry::any_perpendicular(&a);
        assert!((transport(&m, &a, &a) - m).norm() < 1e-15);
    }

    #[test]
    fn director_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let e = rand_unit(&mut rng) * rng.gen_range(0.5..2.0);
            let f = rand_frame(&mut rng, &e.normalize());
            let x = rand_unit(&mut rng);
            let d = EdgeDirectors::new(&e, &f.a, &f.m_ref);
            for which in [Director::M1, Director::M2] {
                let h = 1e-6;
                let val = |ee: &Vec3| EdgeDirectors::new(ee, &f.a, &f.m_ref).value(which);
                let jac = d.jac_e(which);
                let hess = d.hess_e(which, &x);
                for k in 0..3 {
                    let mut ep = e;
                    ep[k] += h;
                    let mut em = e;
                    em[k] -= h;
                    let fd = (val(&ep) - val(&em)) / (2.0 * h);
                    assert!((fd - jac.column(k)).norm() < 1e-7, "{which:?} jac col {k}");
                    let gp = EdgeDirectors::new(&ep, &f.a, &f.m_ref).jac_e(which).transpose() * x;
                    let gm = EdgeDirectors::new(&em, &f.a, &f.m_ref).jac_e(which).transpose() * x;
                    let fdh = (gp - gm) / (2.0 * h);
                    assert!((fdh - hess.column(k)).norm() < 1e-6, "{which:?} hess col {k}: {fdh} vs {}", hess.column(k));
                }
            }
        }
    }

    #[test]
    fn curvature_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let ei = rand_unit(&mut rng) * rng.gen_range(0.5..1.5);
            let ej = (ei.normalize() + rand_unit(&mut rng) * 0.7).normalize() * rng.gen_range(0.5..1.5);
            let fi = rand_frame(&mut rng, &ei.normalize());
            let fj = rand_frame(&mut rng, &ej.normalize());
            let derivs = pair_curvature_derivs(&ei, &ej, &fi, &fj).unwrap();
            let (k1, k2) = pair_curvatures(&ei, &ej, &fi, &fj).unwrap();
            assert!((derivs[0].value - k1).abs() < 1e-12);
            assert!((derivs[1].value - k2).abs() < 1e-12);
            let x0 = Vector6::from_iterator(ei.iter().chain(ej.iter()).copied());
            let split = |x: &Vector6<f64>| (Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]));
            let h = 1e-6;
            for c in 0..2 {
                for k in 0..6 {
                    let mut xp = x0;
                    xp[k] += h;
                    let mut xm = x0;
                    xm[k] -= h;
                    let (pi, pj) = split(&xp);
                    let (mi, mj) = split(&xm);
                    let vp = pair_curvature_derivs(&pi, &pj, &fi, &fj).unwrap();
                    let vm = pair_curvature_derivs(&mi, &mj, &fi, &fj).unwrap();
                    let fd = (vp[c].value - vm[c].value) / (2.0 * h);
                    assert!((fd - derivs[c].grad[k]).abs() < 1e-7, "grad {c} {k}");
                    let fdh = (vp[c].grad - vm[c].grad) / (2.0 * h);
                    let col = derivs[c].hess.column(k);
                    assert!((fdh - col).norm() < 1e-5 * (1.0 + col.norm()), "hess {c} {k}: {fdh} vs {col}");
                }
                let sym = (derivs[c].hess - derivs[c].hess.transpose()).abs().max();
                assert!(sym < 1e-10);
            }
        }
    }
}
