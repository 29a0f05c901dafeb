//! Kicked rigid rotor: the trimer orientation evolves at a frozen shape.
//!
//! Basis functions are √((2J+1)/8π²)·D^J_{0M}(α,β,γ) with even J ≤ J_max and
//! even M. The kinetic operator is
//! −1/(M_hyper ρ² sin²2θ)·[−J² + J_z² − (cos2θ/2)(J₊² + J₋²) − (tan²2θ/2)J_z²].

use super::RefModelError;
use crate::angmath::{ladder_a, small_d_column, EulerQuadrature};
use crate::hypergeom::{HyperPoint, TriangleGeometry};
use crate::interaction::{units, Polarizabilities};
use crate::kick::kick_phase;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

pub const DEFAULT_J_MAX: u32 = 20;
pub const J_MAX_CAP: u32 = 60;
/// Largest population tolerated in the outermost J block.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;
const MIN_SIN_2THETA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidShape {
    pub distances: TriangleGeometry,
    pub point: HyperPoint,
}

impl RigidShape {
    pub fn new(r12: f64, r13: f64, r23: f64) -> Result<Self, RefModelError> {
        let distances = TriangleGeometry::new(r12, r13, r23);
        if distances.triangle_violation() > 0.0 || distances.min() <= 0.0 {
            return Err(RefModelError::BadInput(format!("({r12}, {r13}, {r23}) is not a triangle")));
        }
        let point = HyperPoint::from_distances_labelled(&distances)?;
        Ok(Self { distances, point })
    }

    pub fn rho(&self) -> f64 {
        self.point.rho
    }

    pub fn theta(&self) -> f64 {
        self.point.theta
    }
}

/// (J, M) labels of the rotor basis, J-major with M ascending.
pub fn rotor_basis(j_max: u32) -> Vec<(u32, i32)> {
    (0..=j_max)
        .step_by(2)
        .flat_map(|j| (-(j as i32)..=j as i32).step_by(2).map(move |m| (j, m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotorState {
    pub j_max: u32,
    pub labels: Vec<(u32, i32)>,
    pub coeffs: Vec<C64>,
    pub time: f64,
}

impl RotorState {
    pub fn ground(j_max: u32) -> Self {
        let labels = rotor_basis(j_max);
        let mut coeffs = vec![C64::new(0.0, 0.0); labels.len()];
        coeffs[0] = C64::new(1.0, 0.0);
        Self { j_max, labels, coeffs, time: 0.0 }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn j_population(&self, j: u32) -> f64 {
        self.labels.iter().zip(&self.coeffs).filter(|((jj, _), _)| *jj == j).map(|(_, c)| c.norm_sqr()).sum()
    }

    pub fn expectation(&self, op: &DMatrix<C64>) -> f64 {
        let c = DVector::from_column_slice(&self.coeffs);
        (c.adjoint() * op * &c)[(0, 0)].re
    }
}

fn check_j_max(j_max: u32) -> Result<(), RefModelError> {
    if j_max % 2 != 0 {
        return Err(RefModelError::BadInput(format!("J_max={j_max} must be even")));
    }
    Ok(())
}

/// Rigid-body Hamiltonian in the rotor basis (real symmetric).
pub fn rigid_hamiltonian(shape: &RigidShape, j_max: u32) -> Result<DMatrix<f64>, RefModelError> {
    check_j_max(j_max)?;
    let two_theta = 2.0 * shape.theta();
    let s2 = two_theta.sin();
    if s2 < MIN_SIN_2THETA {
        return Err(RefModelError::NearSingularShape { theta: shape.theta(), j_cap: J_MAX_CAP });
    }
    let mass = units::hyper_mass(units::HE4_MASS);
    let pref = 1.0 / (mass * shape.rho().powi(2) * s2 * s2);
    let (c2, t2) = (two_theta.cos(), two_theta.tan().powi(2));
    let labels = rotor_basis(j_max);
    let index = |j: u32, m: i32| labels.iter().position(|&l| l == (j, m));
    let mut h = DMatrix::zeros(labels.len(), labels.len());
    for (a, &(j, m)) in labels.iter().enumerate() {
        let (jj, mm) = ((j * (j + 1)) as f64, (m * m) as f64);
        h[(a, a)] = -pref * (-jj + mm - 0.5 * t2 * mm);
        if let Some(b) = index(j, m + 2) {
            // ⟨J,M+2| J₊² |J,M⟩ = A⁺_{J,M}
            let v = pref * 0.5 * c2 * ladder_a(j, m, 1);
            h[(b, a)] = v;
            h[(a, b)] = v;
        }
    }
    Ok(h)
}

/// Matrix of a real function of (β, γ) between normalized rotor basis functions.
pub fn orientation_operator<F>(j_max: u32, f: F) -> DMatrix<C64>
where
    F: Fn(f64, f64) -> f64,
{
    let labels = rotor_basis(j_max);
    let quad = EulerQuadrature::for_degree(2 * j_max as usize + 8);
    let max_dm = 2 * j_max as i32;
    let norm: Vec<f64> = labels.iter().map(|&(j, _)| ((2 * j + 1) as f64 / (8.0 * PI * PI)).sqrt()).collect();
    let mut op = DMatrix::<C64>::zeros(labels.len(), labels.len());
    for (ib, &beta) in quad.betas.iter().enumerate() {
        // Fourier components Σ_γ w f e^{iΔγ}
        let fourier: Vec<C64> = (-max_dm..=max_dm)
            .map(|dm| {
                quad.gammas.iter().map(|&g| C64::from_polar(f(beta, g) * quad.gamma_weight, dm as f64 * g)).sum()
            })
            .collect();
        let cols: Vec<Vec<f64>> = (-(j_max as i32)..=j_max as i32).map(|m| small_d_column(j_max, m, 0, beta)).collect();
        let d = |j: u32, m: i32| cols[(m + j_max as i32) as usize][j as usize];
        let w = quad.beta_weights[ib] * 2.0 * PI;
        for (a, &(ja, ma)) in labels.iter().enumerate() {
            let da = d(ja, ma) * norm[a] * w;
            if da == 0.0 {
                continue;
            }
            for (b, &(jb, mb)) in labels.iter().enumerate() {
                let fb = fourier[(mb - ma + max_dm) as usize];
                op[(a, b)] += fb * (da * d(jb, mb) * norm[b]);
            }
        }
    }
    op
}

/// Σ_jk V_laser-dimer(r_jk, ϑ_jk) at a fixed shape as a function of (β, γ).
pub fn rigid_laser_potential<'a>(shape: &RigidShape, pol: &'a Polarizabilities) -> impl Fn(f64, f64) -> f64 + 'a {
    let p = shape.point;
    move |beta, gamma| kick_phase(p, beta, gamma, 1.0, pol)
}

/// e^{iC·V}|ψ⟩ via the eigen-decomposition of the Hermitian matrix of V.
fn apply_phase(v: &DMatrix<C64>, constant: f64, state: &mut RotorState) {
    let eig = SymmetricEigen::new(v.clone());
    let c = DVector::from_column_slice(&state.coeffs);
    let mut proj = eig.eigenvectors.adjoint() * c;
    for (p, &lam) in proj.iter_mut().zip(eig.eigenvalues.iter()) {
        *p *= C64::from_polar(1.0, constant * lam);
    }
    let out = &eig.eigenvectors * proj;
    state.coeffs = out.iter().copied().collect();
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidRun {
    pub j_max: u32,
    pub times: Vec<f64>,
    pub cos2beta: Vec<f64>,
    pub cos2gamma: Vec<f64>,
    /// Population per even J right after the kick.
    pub j_populations: Vec<(u32, f64)>,
    pub norm_defect: f64,
}

/// δ-kick of the J = 0 rotor followed by field-free evolution at the sample
/// times (atomic units).
pub fn rigid_kick_and_evolve(
    shape: &RigidShape,
    constant: f64,
    pol: &Polarizabilities,
    j_max: u32,
    times: &[f64],
) -> Result<RigidRun, RefModelError> {
    check_j_max(j_max)?;
    let h = rigid_hamiltonian(shape, j_max)?;
    let mut state = RotorState::ground(j_max);
    if constant != 0.0 {
        let v = orientation_operator(j_max, rigid_laser_potential(shape, pol));
        apply_phase(&v, constant, &mut state);
    }
    let j_populations: Vec<(u32, f64)> = (0..=j_max).step_by(2).map(|j| (j, state.j_population(j))).collect();
    let outer = state.j_population(j_max);
    if j_max > 0 && outer > TRUNCATION_TOLERANCE {
        return Err(RefModelError::TruncationOverflow { j_max, population: outer });
    }
    let cb = orientation_operator(j_max, |b, _| b.cos().powi(2));
    let cg = orientation_operator(j_max, |_, g| g.cos().powi(2));
    let eig = SymmetricEigen::new(h);
    let q = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let d = q.adjoint() * DVector::from_column_slice(&state.coeffs);
    let (cb, cg) = (q.adjoint() * cb * &q, q.adjoint() * cg * &q);
    let mut run = RigidRun { j_max, times: times.to_vec(), cos2beta: vec![], cos2gamma: vec![], j_populations, norm_defect: 0.0 };
    for &t in times {
        let x: DVector<C64> =
            DVector::from_iterator(d.len(), d.iter().zip(eig.eigenvalues.iter()).map(|(c, &e)| c * C64::from_polar(1.0, -e * t)));
        let n = x.norm_squared();
        run.norm_defect = run.norm_defect.max((n - 1.0).abs());
        run.cos2beta.push((x.adjoint() * &cb * &x)[(0, 0)].re / n);
        run.cos2gamma.push((x.adjoint() * &cg * &x)[(0, 0)].re / n);
    }
    Ok(run)
}

/// Runs with J_max = 20, 30, … up to the cap until the outer block is empty.
pub fn rigid_kick_converged(
    shape: &RigidShape,
    constant: f64,
    pol: &Polarizabilities,
    times: &[f64],
) -> Result<RigidRun, RefModelError> {
    let mut j_max = DEFAULT_J_MAX;
    loop {
        match rigid_kick_and_evolve(shape, constant, pol, j_max, times) {
            Err(RefModelError::TruncationOverflow { .. }) if j_max < J_MAX_CAP => {
                log::info!("rotor truncation J_max={j_max} overflowed; enlarging");
                j_max = (j_max + 10).min(J_MAX_CAP);
            }
            other => return other,
        }
    }
}

/// Two lowest field-free eigenvalues.
pub fn lowest_gap(shape: &RigidShape, j_max: u32) -> Result<f64, RefModelError> {
    let h = rigid_hamiltonian(shape, j_max)?;
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    if e.len() < 2 {
        return Err(RefModelError::BadInput("need J_max ≥ 2 for a gap".into()));
    }
    Ok(e[1] - e[0])
}

/// Local maxima whose prominence exceeds `min_prominence` times the signal range.
pub fn count_oscillations(values: &[f64], min_prominence: f64) -> usize {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let thresh = min_prominence * (hi - lo);
    if !(hi > lo) {
        return 0;
    }
    let n = values.len();
    (1..n.saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .filter(|&i| {
            let peak = values[i];
            let side = |range: &mut dyn Iterator<Item = usize>| {
                let mut low = peak;
                for k in range {
                    if values[k] > peak {
                        break;
                    }
                    low = low.min(values[k]);
                }
                low
            };
            let left = side(&mut (0..i).rev());
            let right = side(&mut (i + 1..n));
            peak - left.max(right) >= thresh
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angmath::{wigner_d, EulerAngles, RotIndex};
    use crate::hypergeom::{d_bar, lab_angles};
    use crate::interaction::timescale_of_energy;

    fn dimer_pol() -> Polarizabilities {
        Polarizabilities::dipole_induced_dipole(1.383, 2.0)
    }

    #[test]
    fn basis_counts_even_j_and_m() {
        assert_eq!(rotor_basis(0), vec![(0, 0)]);
        assert_eq!(rotor_basis(4).len(), 1 + 3 + 5);
        assert!(rotor_basis(20).iter().all(|&(j, m)| j % 2 == 0 && m % 2 == 0));
    }

    #[test]
    fn zero_truncation_is_a_zero_scalar() {
        let s = RigidShape::new(7.833, 7.478, 7.478).unwrap();
        let h = rigid_hamiltonian(&s, 0).unwrap();
        assert_eq!(h.shape(), (1, 1));
        assert_eq!(h[(0, 0)], 0.0);
    }

    #[test]
    fn equilateral_has_no_m_coupling() {
        let s = RigidShape::new(7.5, 7.5, 7.5).unwrap();
        let h = rigid_hamiltonian(&s, 6).unwrap();
        let labels = rotor_basis(6);
        let diag_scale = (0..labels.len()).map(|a| h[(a, a)].abs()).fold(0.0, f64::max);
        for a in 0..labels.len() {
            for b in 0..labels.len() {
                if a != b {
                    assert!(h[(a, b)].abs() < 1e-14 * diag_scale, "{:?} {:?}", labels[a], labels[b]);
                }
            }
        }
    }

    #[test]
    fn near_linear_shape_is_reported() {
        let s = RigidShape::new(5.0, 5.0, 10.0 - 1e-9).unwrap();
        assert!(matches!(rigid_hamiltonian(&s, 4), Err(RefModelError::NearSingularShape { .. })));
    }

    #[test]
    fn near_equilateral_gap_is_ten_picoseconds() {
        let s = RigidShape::new(7.833, 7.478, 7.478).unwrap();
        let gap = lowest_gap(&s, 20).unwrap();
        let ps = units::au_to_ps(timescale_of_energy(gap).unwrap());
        assert!((ps - 10.6).abs() < 0.05 * 10.6, "{ps} ps");
    }

    #[test]
    fn d1_identities_for_the_laser_coordinates() {
        let quad = EulerQuadrature::for_degree(12);
        let d = |m: i32, b: f64, g: f64| wigner_d(RotIndex::new(1, 0, m).unwrap(), EulerAngles::new(0.7, b, g).unwrap());
        let mut worst: f64 = 0.0;
        for &b in &quad.betas {
            for &g in &quad.gammas {
                let ss = C64::new(0.0, 1.0 / 2f64.sqrt()) * (d(-1, b, g) + d(1, b, g));
                let sc = (d(-1, b, g) - d(1, b, g)) / 2f64.sqrt();
                worst = worst.max((ss - b.sin() * g.sin()).norm()).max((sc - b.sin() * g.cos()).norm());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn pair_angle_formulas_match_body_frame() {
        let s = RigidShape::new(8.643, 8.643, 4.879).unwrap();
        let (rho, th, ph) = (s.point.rho, s.point.theta, s.point.phi);
        let [r12, r13, r23] = s.distances.as_array();
        let a = d_bar() * rho;
        for (b, g) in [(0.3, 1.1), (1.9, 4.0), (2.8, 0.2)] {
            let (x, y) = (f64::sin(b) * f64::cos(g), f64::sin(b) * f64::sin(g));
            let c12 = a / r12 * (ph.cos() * th.cos() * x + ph.sin() * th.sin() * y);
            let c13 = a / (2.0 * r13)
                * (th.cos() * (ph.cos() + 3f64.sqrt() * ph.sin()) * x + th.sin() * (-3f64.sqrt() * ph.cos() + ph.sin()) * y);
            let c23 = -a / (2.0 * r23)
                * (th.cos() * (ph.cos() - 3f64.sqrt() * ph.sin()) * x + th.sin() * (3f64.sqrt() * ph.cos() + ph.sin()) * y);
            let lab = lab_angles(s.point, EulerAngles::beta_gamma(b, g)).unwrap();
            for (u, v) in [c12, c13, c23].iter().zip(lab) {
                assert!((u * u - v * v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laser_operator_respects_selection_rules() {
        // odd-J or odd-M functions never couple to the even block
        let s = RigidShape::new(8.643, 8.643, 4.879).unwrap();
        let pol = dimer_pol();
        let f = rigid_laser_potential(&s, &pol);
        let quad = EulerQuadrature::for_degree(16);
        let mut worst: f64 = 0.0;
        for (jo, mo) in [(1u32, 0i32), (1, 1), (3, -1), (2, 1), (3, 2)] {
            for &(je, me) in &rotor_basis(4) {
                let mut acc = C64::new(0.0, 0.0);
                for (ib, &b) in quad.betas.iter().enumerate() {
                    for &g in &quad.gammas {
                        let de = wigner_d(RotIndex::new(je, 0, me).unwrap(), EulerAngles::beta_gamma(b, g));
                        let dodd = wigner_d(RotIndex::new(jo, 0, mo).unwrap(), EulerAngles::beta_gamma(b, g));
                        acc += dodd.conj() * de * f(b, g) * quad.weight(ib);
                    }
                }
                worst = worst.max(acc.norm());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn orientation_operator_of_one_is_identity() {
        let one = orientation_operator(8, |_, _| 1.0);
        let n = one.nrows();
        assert!((one - DMatrix::<C64>::identity(n, n)).norm() < 1e-12);
    }

    #[test]
    fn unkicked_rotor_stays_isotropic() {
        let s = RigidShape::new(7.833, 7.478, 7.478).unwrap();
        let times: Vec<f64> = (0..20).map(|k| units::ps_to_au(k as f64)).collect();
        let run = rigid_kick_and_evolve(&s, 0.0, &dimer_pol(), 10, &times).unwrap();
        for (b, g) in run.cos2beta.iter().zip(&run.cos2gamma) {
            assert!((b - 1.0 / 3.0).abs() < 1e-12 && (g - 0.5).abs() < 1e-12);
        }
        assert!(run.norm_defect < 1e-10);
    }

    #[test]
    fn oscillation_counter_ignores_ripples() {
        let v: Vec<f64> = (0..2000)
            .map(|k| {
                let t = k as f64 / 2000.0;
                (2.0 * PI * 5.0 * t).sin() + 0.01 * (2.0 * PI * 200.0 * t).sin()
            })
            .collect();
        assert_eq!(count_oscillations(&v, 0.1), 5);
    }
}
