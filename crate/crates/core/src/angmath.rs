//! Wigner-D functions, ladder coefficients and Euler-angle overlap integrals.
//!
//! Convention: D^J_{M'M}(α,β,γ) = e^{iM'α} d^J_{MM'}(β) e^{iMγ}, where d is the
//! standard (Wigner) small-d matrix. With this choice
//! sinβ sinγ = (i/√2)[D¹_{0,-1} + D¹_{0,1}] and sinβ cosγ = (1/√2)[D¹_{0,-1} − D¹_{0,1}],
//! and D^J_{0M}(0,β,γ) is proportional to the spherical harmonic Y_JM(β,γ).

use crate::numerics::{gauss_legendre, ln_factorial};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AngError {
    #[error("invalid rotation index J={j}, M'={mrow}, M={mcol}")]
    InvalidIndex { j: u32, mrow: i32, mcol: i32 },
    #[error("Euler angle {name}={value} outside its range")]
    AngleOutOfRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, AngError> {
        let tol = 1e-12;
        let tau = 2.0 * PI;
        if !(-tol..=tau + tol).contains(&alpha) {
            return Err(AngError::AngleOutOfRange { name: "alpha", value: alpha });
        }
        if !(-tol..=PI + tol).contains(&beta) {
            return Err(AngError::AngleOutOfRange { name: "beta", value: beta });
        }
        if !(-tol..=tau + tol).contains(&gamma) {
            return Err(AngError::AngleOutOfRange { name: "gamma", value: gamma });
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// Orientation with α = 0 (all dynamics here is α-independent).
    pub fn beta_gamma(beta: f64, gamma: f64) -> Self {
        Self { alpha: 0.0, beta, gamma }
    }

    /// Volume weight sinβ of dV_euler.
    pub fn volume_weight(&self) -> f64 {
        self.beta.sin()
    }

    /// Lab z axis expressed in the body frame.
    pub fn lab_z_in_body(&self) -> [f64; 3] {
        let sb = self.beta.sin();
        [sb * self.gamma.cos(), sb * self.gamma.sin(), self.beta.cos()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RotIndex {
    j: u32,
    mrow: i32,
    mcol: i32,
}

impl RotIndex {
    pub fn new(j: u32, mrow: i32, mcol: i32) -> Result<Self, AngError> {
        if mrow.unsigned_abs() > j || mcol.unsigned_abs() > j {
            return Err(AngError::InvalidIndex { j, mrow, mcol });
        }
        Ok(Self { j, mrow, mcol })
    }
    pub fn j(&self) -> u32 {
        self.j
    }
    pub fn mrow(&self) -> i32 {
        self.mrow
    }
    pub fn mcol(&self) -> i32 {
        self.mcol
    }
}

/// First value d^{j0}_{m'm} with j0 = max(|m|,|m'|), from the explicit sum.
fn small_d_seed(j: i64, mp: i64, m: i64, beta: f64) -> f64 {
    let c = (0.5 * beta).cos();
    let s = (0.5 * beta).sin();
    let smin = 0.max(m - mp);
    let smax = (j + m).min(j - mp);
    let lnpre = 0.5
        * (ln_factorial((j + mp) as usize)
            + ln_factorial((j - mp) as usize)
            + ln_factorial((j + m) as usize)
            + ln_factorial((j - m) as usize));
    let mut acc = 0.0;
    for k in smin..=smax {
        let lnden = ln_factorial((j + m - k) as usize)
            + ln_factorial(k as usize)
            + ln_factorial((mp - m + k) as usize)
            + ln_factorial((j - mp - k) as usize);
        let sign = if (mp - m + k) % 2 == 0 { 1.0 } else { -1.0 };
        let pc = (2 * j + m - mp - 2 * k) as i32;
        let ps = (mp - m + 2 * k) as i32;
        acc += sign * (lnpre - lnden).exp() * c.powi(pc) * s.powi(ps);
    }
    acc
}

/// Standard Wigner small-d values d^J_{m'm}(β) for J = j0..=jmax, returned
/// indexed by J (entries below j0 are zero). Three-term recursion in J.
pub fn small_d_column(jmax: u32, mp: i32, m: i32, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; jmax as usize + 1];
    let j0 = mp.unsigned_abs().max(m.unsigned_abs());
    if j0 > jmax {
        return out;
    }
    let (mpf, mf) = (mp as f64, m as f64);
    let x = beta.cos();
    let mut prev = 0.0;
    let mut cur = small_d_seed(j0 as i64, mp as i64, m as i64, beta);
    out[j0 as usize] = cur;
    for j in j0..jmax {
        let jf = j as f64;
        let next = if j == 0 {
            x
        } else {
            let a = (2.0 * jf + 1.0) * (jf * (jf + 1.0) * x - mf * mpf);
            let b = (jf + 1.0) * ((jf * jf - mf * mf) * (jf * jf - mpf * mpf)).max(0.0).sqrt();
            let den = jf * (((jf + 1.0).powi(2) - mf * mf) * ((jf + 1.0).powi(2) - mpf * mpf)).sqrt();
            (a * cur - b * prev) / den
        };
        prev = cur;
        cur = next;
        out[j as usize + 1] = cur;
    }
    out
}

/// Standard Wigner small-d element d^J_{m'm}(β).
pub fn small_d(j: u32, mp: i32, m: i32, beta: f64) -> f64 {
    small_d_column(j, mp, m, beta)[j as usize]
}

/// D^J_{M'M}(α,β,γ) in the convention documented at module level.
pub fn wigner_d(idx: RotIndex, ang: EulerAngles) -> Complex64 {
    let d = small_d(idx.j, idx.mcol, idx.mrow, ang.beta);
    let phase = idx.mrow as f64 * ang.alpha + idx.mcol as f64 * ang.gamma;
    Complex64::from_polar(d, phase)
}

/// Real β-part of D^J_{0M}(0,β,γ) = d^J_{M0}(β) e^{iMγ}.
pub fn d0m_beta(j: u32, m: i32, beta: f64) -> f64 {
    small_d(j, m, 0, beta)
}

/// A^±_{J,M}; zero when M or M±2 lies outside [-J, J].
pub fn ladder_a(j: u32, m: i32, sign: i32) -> f64 {
    let jj = j as i64;
    let (m, s) = (m as i64, sign.signum() as i64);
    if m.abs() > jj || (m + 2 * s).abs() > jj {
        return 0.0;
    }
    let l = (jj * (jj + 1)) as f64;
    let a = l - (m * (m + s)) as f64;
    let b = l - ((m + s) * (m + 2 * s)) as f64;
    (a.max(0.0) * b.max(0.0)).sqrt()
}

/// cos²β together with its Wigner-D weights (1/3 on D⁰₀₀, 2/3 on D²₀₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cos2BetaDecomposition {
    pub value: f64,
    pub d2_00: f64,
    pub weight_j0: f64,
    pub weight_j2: f64,
}

pub fn cos2beta_decomposition(ang: EulerAngles) -> Cos2BetaDecomposition {
    let c = ang.beta.cos();
    Cos2BetaDecomposition {
        value: c * c,
        d2_00: 0.5 * (3.0 * c * c - 1.0),
        weight_j0: 1.0 / 3.0,
        weight_j2: 2.0 / 3.0,
    }
}

/// 𝒟^{(J',J)}_M: Euler overlap of D^{J'}_{0M}* D²₀₀ D^J_{0M} with the
/// normalisation prefactor √((2J+1)(2J'+1)/16π²).
pub fn overlap_d(jp: u32, j: u32, m: i32) -> f64 {
    if jp.abs_diff(j) > 2 {
        return 0.0;
    }
    if m.unsigned_abs() > j.min(jp) {
        return 0.0;
    }
    let jmax = j.max(jp);
    let (x, w) = gauss_legendre((jmax + 3) as usize);
    let mut acc = 0.0;
    for (&xi, &wi) in x.iter().zip(&w) {
        let beta = xi.acos();
        let col = small_d_column(jmax, m, 0, beta);
        acc += wi * col[jp as usize] * col[j as usize] * 0.5 * (3.0 * xi * xi - 1.0);
    }
    0.5 * (((2 * j + 1) * (2 * jp + 1)) as f64).sqrt() * acc
}

/// Quadrature rule over (β, γ): Gauss–Legendre in cosβ, uniform in γ.
/// Weights include sinβ dβ dγ and an extra factor 2π for the α integral.
#[derive(Debug, Clone)]
pub struct EulerQuadrature {
    pub betas: Vec<f64>,
    pub beta_weights: Vec<f64>,
    pub gammas: Vec<f64>,
    pub gamma_weight: f64,
}

impl EulerQuadrature {
    pub fn new(n_beta: usize, n_gamma: usize) -> Self {
        let (x, w) = gauss_legendre(n_beta);
        let betas = x.iter().map(|&c| c.acos()).collect();
        let gammas = (0..n_gamma).map(|k| 2.0 * PI * k as f64 / n_gamma as f64).collect();
        Self { betas, beta_weights: w, gammas, gamma_weight: 2.0 * PI / n_gamma as f64 }
    }

    /// Rule exact for products of D-functions up to total degree `degree`.
    pub fn for_degree(degree: usize) -> Self {
        Self::new(degree / 2 + 2, degree + 2)
    }

    pub fn len(&self) -> usize {
        self.betas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full dV_euler weight including the α integral.
    pub fn weight(&self, ib: usize) -> f64 {
        self.beta_weights[ib] * self.gamma_weight * 2.0 * PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_representation() {
        let idx = RotIndex::new(0, 0, 0).unwrap();
        let v = wigner_d(idx, EulerAngles::new(1.0, 2.0, 3.0).unwrap());
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn d2_00_at_right_angle() {
        let idx = RotIndex::new(2, 0, 0).unwrap();
        let v = wigner_d(idx, EulerAngles::beta_gamma(PI / 2.0, 0.0));
        assert!((v.re + 0.5).abs() < 1e-15 && v.im.abs() < 1e-15);
    }

    #[test]
    fn ladder_examples() {
        assert_eq!(ladder_a(0, 0, 1), 0.0);
        assert!((ladder_a(2, 0, 1) - 2.0 * 6f64.sqrt()).abs() < 1e-14);
        assert!((ladder_a(2, -2, 1) - 2.0 * 6f64.sqrt()).abs() < 1e-14);
        assert_eq!(ladder_a(2, 2, 1), 0.0);
    }

    #[test]
    fn overlap_examples() {
        assert!(overlap_d(0, 0, 0).abs() < 1e-15);
        assert!((overlap_d(0, 2, 0) - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(overlap_d(0, 4, 0), 0.0);
    }

    #[test]
    fn cos2beta_at_quarter_pi() {
        let d = cos2beta_decomposition(EulerAngles::beta_gamma(PI / 4.0, 0.0));
        assert!((d.value - 0.5).abs() < 1e-15);
        assert!((d.d2_00 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn invalid_index_rejected() {
        assert!(RotIndex::new(1, 2, 0).is_err());
    }
}
