//! Mapped radial grid and the symmetric second-derivative stencil.
//!
//! Nodes are ρ_i = ρ(x_i) with x_i = i/(N+1), i = 1..N, and Dirichlet ends at
//! ρ_min and ρ_max. A radial function u(ρ) is stored as v_i = √(h J_i) u(ρ_i)
//! with J = dρ/dx, so Σ|v_i|² ≈ ∫|u|² dρ. In these variables
//! −d²/dρ² → −J⁻¹ D₂ J⁻¹ + V_map with V_map = 3J'²/(4J⁴) − J''/(2J³) and D₂
//! the 5-point stencil with odd-reflection ghosts.

use crate::container::sha256_hex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid radial grid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    rho_min: f64,
    rho_max: f64,
    stretch: f64,
    nodes: Vec<f64>,
    jac: Vec<f64>,
    jac1: Vec<f64>,
    jac2: Vec<f64>,
    h: f64,
}

impl RadialGrid {
    /// ρ(x) = ρ_min + (ρ_max − ρ_min)(e^{sx} − 1)/(e^s − 1); s = 0 is uniform.
    pub fn new(rho_min: f64, rho_max: f64, n: usize, stretch: f64) -> Result<Self, GridError> {
        if !(rho_min >= 0.0 && rho_max > rho_min) {
            return Err(GridError::Invalid(format!("range [{rho_min}, {rho_max}]")));
        }
        if n < 5 {
            return Err(GridError::Invalid(format!("{n} points (need ≥ 5)")));
        }
        if !stretch.is_finite() || stretch < 0.0 {
            return Err(GridError::Invalid(format!("stretch {stretch}")));
        }
        let h = 1.0 / (n + 1) as f64;
        let span = rho_max - rho_min;
        let (mut nodes, mut jac, mut jac1, mut jac2) = (vec![], vec![], vec![], vec![]);
        for i in 1..=n {
            let x = i as f64 * h;
            if stretch < 1e-12 {
                nodes.push(rho_min + span * x);
                jac.push(span);
                jac1.push(0.0);
                jac2.push(0.0);
            } else {
                let b = span / stretch.exp_m1();
                let e = (stretch * x).exp();
                nodes.push(rho_min + b * (e - 1.0));
                jac.push(b * stretch * e);
                jac1.push(b * stretch * stretch * e);
                jac2.push(b * stretch.powi(3) * e);
            }
        }
        if nodes[0] <= 0.0 {
            return Err(GridError::Invalid("first node must be positive".into()));
        }
        Ok(Self { rho_min, rho_max, stretch, nodes, jac, jac1, jac2, h })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn stretch(&self) -> f64 {
        self.stretch
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Quadrature weights h·J_i for ∫ f dρ.
    pub fn weights(&self) -> Vec<f64> {
        self.jac.iter().map(|j| j * self.h).collect()
    }

    /// Factor √(h J_i) linking grid samples to the symmetric representation.
    pub fn sqrt_weight(&self, i: usize) -> f64 {
        (self.h * self.jac[i]).sqrt()
    }

    /// Index of the node with largest ρ_i ≤ ρ (clamped).
    pub fn locate(&self, rho: f64) -> usize {
        self.nodes.partition_point(|&r| r <= rho).saturating_sub(1)
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(
            format!("radial|{:x}|{:x}|{:x}|{}", self.rho_min.to_bits(), self.rho_max.to_bits(), self.stretch.to_bits(), self.len())
                .as_bytes(),
        )
    }

    /// Symmetric pentadiagonal representation of −d²/dρ².
    pub fn laplacian(&self) -> Stencil {
        let n = self.len();
        let c = 1.0 / (12.0 * self.h * self.h);
        let inv: Vec<f64> = self.jac.iter().map(|j| 1.0 / j).collect();
        let mut diag = vec![0.0; n];
        let mut off1 = vec![0.0; n.saturating_sub(1)];
        let mut off2 = vec![0.0; n.saturating_sub(2)];
        for i in 0..n {
            let centre = if i == 0 || i == n - 1 { -29.0 } else { -30.0 };
            let (j, j1, j2) = (self.jac[i], self.jac1[i], self.jac2[i]);
            let vmap = 0.75 * j1 * j1 / j.powi(4) - 0.5 * j2 / j.powi(3);
            diag[i] = -c * centre * inv[i] * inv[i] + vmap;
            if i + 1 < n {
                off1[i] = -c * 16.0 * inv[i] * inv[i + 1];
            }
            if i + 2 < n {
                off2[i] = c * inv[i] * inv[i + 2];
            }
        }
        Stencil { diag, off1, off2 }
    }
}

/// Symmetric pentadiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub diag: Vec<f64>,
    pub off1: Vec<f64>,
    pub off2: Vec<f64>,
}

impl Stencil {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|v| v * s).collect(),
            off1: self.off1.iter().map(|v| v * s).collect(),
            off2: self.off2.iter().map(|v| v * s).collect(),
        }
    }

    /// Row i of the product with `x` (generic over real/complex samples).
    #[inline]
    pub fn apply_row<T>(&self, x: &[T], i: usize) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = self.diag.len();
        let mut acc = x[i] * self.diag[i];
        if i >= 1 {
            acc = acc + x[i - 1] * self.off1[i - 1];
        }
        if i + 1 < n {
            acc = acc + x[i + 1] * self.off1[i];
        }
        if i >= 2 {
            acc = acc + x[i - 2] * self.off2[i - 2];
        }
        if i + 2 < n {
            acc = acc + x[i + 2] * self.off2[i];
        }
        acc
    }

    /// Largest Gershgorin row radius.
    pub fn row_radius(&self, i: usize) -> f64 {
        let n = self.diag.len();
        let mut r = 0.0;
        if i >= 1 {
            r += self.off1[i - 1].abs();
        }
        if i + 1 < n {
            r += self.off1[i].abs();
        }
        if i >= 2 {
            r += self.off2[i - 2].abs();
        }
        if i + 2 < n {
            r += self.off2[i].abs();
        }
        r
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.diag.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off1[i];
                m[(i + 1, i)] = self.off1[i];
            }
            if i + 2 < n {
                m[(i, i + 2)] = self.off2[i];
                m[(i + 2, i)] = self.off2[i];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_increase_and_weights_positive() {
        let g = RadialGrid::new(5.0, 1500.0, 900, 3.0).unwrap();
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert!(g.nodes()[0] > 5.0 && *g.nodes().last().unwrap() < 1500.0);
    }

    #[test]
    fn laplacian_is_fourth_order_in_the_interior() {
        // u = sin(πρ/L)-type test on a uniform grid: eigenvalues of −d² converge
        let errs: Vec<f64> = [40usize, 80]
            .iter()
            .map(|&n| {
                let g = RadialGrid::new(0.0, 1.0, n, 2.0).unwrap();
                let lap = g.laplacian();
                let eig = nalgebra::SymmetricEigen::new(lap.to_dense());
                let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                (lo - std::f64::consts::PI.powi(2)).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] / 10.0, "{errs:?}");
        assert!(errs[1] < 1e-4);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(RadialGrid::new(2.0, 1.0, 10, 3.0).is_err());
        assert!(RadialGrid::new(0.0, 1.0, 3, 3.0).is_err());
    }
}
