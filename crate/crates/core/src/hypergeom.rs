//! Hyperspherical geometry: (ρ, θ, φ) ↔ pair distances, body-frame vectors,
//! laboratory-frame pair angles and the principal-axes frame.
//!
//! Body frame: pair vectors lie in the xy plane,
//! r_jk = d̄ρ (cosθ cosχ_jk, sinθ sinχ_jk, 0) with χ₁₂ = φ, χ₁₃ = φ − π/3,
//! χ₂₃ = φ + 4π/3 and d̄ = √2/3^{1/4}. The lab z axis has body components
//! (sinβ cosγ, sinβ sinγ, cosβ).

use crate::angmath::EulerAngles;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("hyperspherical coordinate out of range: {0}")]
    OutOfRange(String),
}

pub fn d_bar() -> f64 {
    2f64.sqrt() / 3f64.powf(0.25)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPoint {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
}

impl HyperPoint {
    pub fn new(rho: f64, theta: f64, phi: f64) -> Result<Self, GeomError> {
        let tol = 1e-12;
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(GeomError::OutOfRange(format!("rho={rho}")));
        }
        if !(-tol..=FRAC_PI_4 + tol).contains(&theta) {
            return Err(GeomError::OutOfRange(format!("theta={theta}")));
        }
        if !(-tol..=FRAC_PI_3 + tol).contains(&phi) {
            return Err(GeomError::OutOfRange(format!("phi={phi}")));
        }
        Ok(Self { rho, theta, phi })
    }

    /// Unchecked constructor for φ outside [0, π/3] (labelled atoms).
    pub fn raw(rho: f64, theta: f64, phi: f64) -> Self {
        Self { rho, theta, phi }
    }

    /// Hyperangles of a triangle. φ is returned in [0, π) for the given labelling.
    pub fn from_distances_labelled(g: &TriangleGeometry) -> Result<Self, GeomError> {
        let sum = g.r12 * g.r12 + g.r13 * g.r13 + g.r23 * g.r23;
        if !(sum > 0.0) {
            return Err(GeomError::DegenerateGeometry("all distances vanish".into()));
        }
        let rho = (sum / 3f64.sqrt()).sqrt();
        let s = |r: f64| 3f64.sqrt() * r * r / (rho * rho) - 1.0;
        let (s12, s13, s23) = (s(g.r12), s(g.r13), s(g.r23));
        let c = s12;
        let sn = (s13 - s23) / 3f64.sqrt();
        let cos2t = (c * c + sn * sn).sqrt().min(1.0);
        let theta = 0.5 * cos2t.acos();
        let mut two_phi = if cos2t < 1e-14 { 0.0 } else { sn.atan2(c) };
        if two_phi < 0.0 {
            two_phi += 2.0 * PI;
        }
        Ok(Self { rho, theta, phi: 0.5 * two_phi })
    }

    /// Hyperangles with φ folded into [0, π/3] by relabelling the atoms.
    pub fn from_distances(g: &TriangleGeometry) -> Result<Self, GeomError> {
        let p = Self::from_distances_labelled(g)?;
        let mut phi = p.phi.rem_euclid(FRAC_PI_3);
        // reflections φ → −φ (mod π/3) are also permutations
        if phi > FRAC_PI_3 {
            phi = FRAC_PI_3;
        }
        Ok(Self { phi, ..p })
    }

    /// Hyperangular volume weight sin(4θ)/4.
    pub fn angular_weight(&self) -> f64 {
        (4.0 * self.theta).sin() / 4.0
    }

    /// Full dV_hyper weight sin(4θ)/4 · ρ⁵.
    pub fn volume_weight(&self) -> f64 {
        self.angular_weight() * self.rho.powi(5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub r12: f64,
    pub r13: f64,
    pub r23: f64,
}

impl TriangleGeometry {
    pub fn new(r12: f64, r13: f64, r23: f64) -> Self {
        Self { r12, r13, r23 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r12, self.r13, self.r23]
    }

    pub fn hyperradius(&self) -> f64 {
        ((self.r12 * self.r12 + self.r13 * self.r13 + self.r23 * self.r23) / 3f64.sqrt()).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.r12.min(self.r13).min(self.r23)
    }

    pub fn max(&self) -> f64 {
        self.r12.max(self.r13).max(self.r23)
    }

    pub fn mean(&self) -> f64 {
        (self.r12 + self.r13 + self.r23) / 3.0
    }

    /// Largest triangle-inequality violation (≤ 0 for valid triangles).
    pub fn triangle_violation(&self) -> f64 {
        let [a, b, c] = self.as_array();
        (a - b - c).max(b - a - c).max(c - a - b)
    }
}

pub fn to_distances(p: HyperPoint) -> TriangleGeometry {
    let pre = p.rho / 3f64.powf(0.25);
    let c2t = (2.0 * p.theta).cos();
    let f = |shift: f64| pre * (1.0 + c2t * (2.0 * p.phi + shift).cos()).max(0.0).sqrt();
    TriangleGeometry { r12: f(0.0), r13: f(-2.0 * PI / 3.0), r23: f(2.0 * PI / 3.0) }
}

/// Body-frame pair vectors r₁₂, r₁₃, r₂₃ (r_jk = x_k − x_j).
pub fn body_pair_vectors(p: HyperPoint) -> [[f64; 3]; 3] {
    let a = d_bar() * p.rho;
    let (ct, st) = (p.theta.cos(), p.theta.sin());
    let v = |chi: f64, sign: f64| [sign * a * ct * chi.cos(), sign * a * st * chi.sin(), 0.0];
    [v(p.phi, 1.0), v(p.phi - FRAC_PI_3, 1.0), v(p.phi + FRAC_PI_3, -1.0)]
}

/// Body-frame atom positions with the centre of mass at the origin.
pub fn body_positions(p: HyperPoint) -> [[f64; 3]; 3] {
    let [r12, r13, _] = body_pair_vectors(p);
    let x1: [f64; 3] = std::array::from_fn(|k| -(r12[k] + r13[k]) / 3.0);
    let x2: [f64; 3] = std::array::from_fn(|k| x1[k] + r12[k]);
    let x3: [f64; 3] = std::array::from_fn(|k| x1[k] + r13[k]);
    [x1, x2, x3]
}

/// Rotation taking body components to lab components.
pub fn body_to_lab(ang: EulerAngles) -> Matrix3<f64> {
    let rz = |a: f64| {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    };
    let ry = |b: f64| {
        let (s, c) = b.sin_cos();
        Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
    };
    rz(-ang.alpha) * ry(-ang.beta) * rz(-ang.gamma)
}

/// Lab-frame atom positions.
pub fn lab_positions(p: HyperPoint, ang: EulerAngles) -> [[f64; 3]; 3] {
    let r = body_to_lab(ang);
    body_positions(p).map(|x| {
        let v = r * Vector3::new(x[0], x[1], x[2]);
        [v[0], v[1], v[2]]
    })
}

/// cos ϑ_jk between each pair vector and the lab z axis, ordered (12, 13, 23).
pub fn lab_angles(p: HyperPoint, ang: EulerAngles) -> Result<[f64; 3], GeomError> {
    let n = ang.lab_z_in_body();
    let vecs = body_pair_vectors(p);
    let tol = 1e-12 * p.rho;
    let mut out = [0.0; 3];
    for (k, v) in vecs.iter().enumerate() {
        let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if len <= tol {
            return Err(GeomError::DegenerateGeometry(format!("pair {k} has zero length")));
        }
        out[k] = (v[0] * n[0] + v[1] * n[1]) / len;
    }
    Ok(out)
}

/// Principal-axes description of a triangle (unit masses).
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalFrame {
    /// Moments of inertia, ascending.
    pub moments: [f64; 3],
    /// Orthonormal axes (rows), expressed in the construction frame.
    pub axes: [[f64; 3]; 3],
    /// Atom positions in the principal frame.
    pub positions: [[f64; 3]; 3],
}

/// Principal frame of a triangle. Axes are sorted by ascending moment. Each
/// in-plane axis is signed so atom 1 has a positive projection on it (atom 2
/// when atom 1 lies on the axis' node); the remaining axis completes a
/// right-handed frame.
pub fn principal_frame(g: &TriangleGeometry) -> Result<PrincipalFrame, GeomError> {
    let [r12, r13, r23] = g.as_array();
    let scale = g.max();
    let tol = 1e-10 * scale.max(1e-300);
    let zero_count = [r12, r13, r23].iter().filter(|&&r| r <= tol).count();
    if zero_count >= 2 || scale <= 0.0 {
        return Err(GeomError::DegenerateGeometry("coincident atoms".into()));
    }
    if g.triangle_violation() > 1e-10 * scale {
        return Err(GeomError::DegenerateGeometry("triangle inequality violated".into()));
    }
    // construction frame: atom 1 at origin, atom 2 on +x, atom 3 in the upper half plane
    let x3 = if r12 > tol { (r12 * r12 + r13 * r13 - r23 * r23) / (2.0 * r12) } else { r13 };
    let y3 = (r13 * r13 - x3 * x3).max(0.0).sqrt();
    let mut pos = [[0.0, 0.0, 0.0], [r12, 0.0, 0.0], [x3, y3, 0.0]];
    let cm: [f64; 3] = std::array::from_fn(|k| (pos[0][k] + pos[1][k] + pos[2][k]) / 3.0);
    for p in pos.iter_mut() {
        for k in 0..3 {
            p[k] -= cm[k];
        }
    }
    let mut inertia = Matrix3::zeros();
    for p in &pos {
        let v = Vector3::new(p[0], p[1], p[2]);
        inertia += Matrix3::identity() * v.dot(&v) - v * v.transpose();
    }
    let eig = SymmetricEigen::new(inertia);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut axes = [[0.0; 3]; 3];
    let mut moments = [0.0; 3];
    for (slot, &k) in order.iter().enumerate() {
        moments[slot] = eig.eigenvalues[k].max(0.0);
        let col = eig.eigenvectors.column(k);
        axes[slot] = [col[0], col[1], col[2]];
    }
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let ptol = 1e-9 * scale;
    let mut fixed = [false; 3];
    for (slot, axis) in axes.iter_mut().enumerate() {
        let p1 = dot(axis, &pos[0]);
        let p2 = dot(axis, &pos[1]);
        let reference = if p1.abs() > ptol { p1 } else { p2 };
        if reference.abs() > ptol {
            if reference < 0.0 {
                for v in axis.iter_mut() {
                    *v = -*v;
                }
            }
            fixed[slot] = true;
        }
    }
    // out-of-plane (or unresolved) axis completes a right-handed frame
    if let Some(free) = (0..3).find(|&s| !fixed[s]) {
        let (a, b) = match free {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let (u, v) = (axes[a], axes[b]);
        axes[free] = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    }
    let positions = pos.map(|p| [dot(&axes[0], &p), dot(&axes[1], &p), dot(&axes[2], &p)]);
    Ok(PrincipalFrame { moments, axes, positions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilateral_distances() {
        let g = to_distances(HyperPoint::new(10.0, FRAC_PI_4, 0.3).unwrap());
        let e = 10.0 / 3f64.powf(0.25);
        for r in g.as_array() {
            assert!((r - e).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_distances() {
        let g = to_distances(HyperPoint::new(7.0, 0.0, 0.0).unwrap());
        let q = 7.0 / 3f64.powf(0.25);
        assert!((g.r12 - 2f64.sqrt() * q).abs() < 1e-12);
        assert!((g.r13 - q / 2f64.sqrt()).abs() < 1e-12);
        assert!((g.r23 - q / 2f64.sqrt()).abs() < 1e-12);
        assert!((g.r12 - g.r13 - g.r23).abs() < 1e-12);
    }

    #[test]
    fn pair_vector_lengths_match_distances() {
        let p = HyperPoint::new(3.3, 0.4, 0.9).unwrap();
        let g = to_distances(p);
        let v = body_pair_vectors(p);
        for (vec, r) in v.iter().zip(g.as_array()) {
            let len = (vec[0] * vec[0] + vec[1] * vec[1]).sqrt();
            assert!((len - r).abs() < 1e-12);
        }
    }

    #[test]
    fn lab_angles_vanish_for_beta_zero() {
        let p = HyperPoint::new(5.0, 0.5, 0.2).unwrap();
        let c = lab_angles(p, EulerAngles::beta_gamma(0.0, 1.0)).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn equilateral_in_plane_angle_is_one() {
        let p = HyperPoint::new(5.0, FRAC_PI_4, 0.0).unwrap();
        let c = lab_angles(p, EulerAngles::beta_gamma(PI / 2.0, 0.0)).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn principal_frame_equilateral() {
        let f = principal_frame(&TriangleGeometry::new(2.0, 2.0, 2.0)).unwrap();
        assert!((f.moments[0] - f.moments[1]).abs() < 1e-12);
        assert!((f.moments[2] - 2.0 * f.moments[0]).abs() < 1e-12);
    }

    #[test]
    fn principal_frame_linear() {
        let f = principal_frame(&TriangleGeometry::new(2.0, 1.0, 1.0)).unwrap();
        assert!(f.moments[0].abs() < 1e-12);
    }

    #[test]
    fn distances_round_trip() {
        let g = TriangleGeometry::new(8.643, 8.643, 4.879);
        let p = HyperPoint::from_distances_labelled(&g).unwrap();
        assert!((p.phi - PI / 6.0).abs() < 1e-12);
        let back = to_distances(p);
        for (a, b) in back.as_array().iter().zip(g.as_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
