//! Invariants checked over randomized inputs.

use hypertrimer::angmath::small_d;
use hypertrimer::chanbasis::ChannelIndex;
use hypertrimer::evolve::{step_chebyshev, BlockSpec, CoupledHamiltonian, Terms, WavePacket};
use hypertrimer::hypergeom::{to_distances, HyperPoint};
use hypertrimer::interaction::Polarizabilities;
use hypertrimer::kick::{euler_amplitudes, kick_phase, PhaseShape};
use hypertrimer::observe::batch_mean;
use hypertrimer::radial::RadialGrid;
use hypertrimer::refmodels::count_oscillations;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};

fn sorted(mut v: [f64; 3]) -> [f64; 3] {
    v.sort_by(f64::total_cmp);
    v
}

/// Two coupled J = 0 channels with a random smooth coupling on a short grid.
fn toy_hamiltonian(depth: f64, coupling: f64) -> CoupledHamiltonian {
    let grid = RadialGrid::new(1.0, 20.0, 60, 0.0).unwrap();
    let channels = vec![ChannelIndex::new(0, 0, 0).unwrap(), ChannelIndex::new(0, 0, 1).unwrap()];
    let w = grid
        .nodes()
        .iter()
        .map(|&r| {
            let v = -depth * (-r * r / 25.0).exp();
            DMatrix::from_row_slice(2, 2, &[v, coupling * v, coupling * v, 0.5 * v])
        })
        .collect();
    let spec = BlockSpec { j: 0, channels, ebar: vec![0.0, -32.0], w };
    CoupledHamiltonian::from_parts(grid, 1000.0, vec![spec], Terms::default()).unwrap()
}

fn toy_packet(h: &CoupledHamiltonian, centre: f64, k: f64) -> WavePacket {
    let mut wp = h.empty_packet();
    let nodes = h.grid().nodes().to_vec();
    for c in 0..2 {
        for (z, &r) in wp.channel_mut(c).iter_mut().zip(&nodes) {
            *z = C64::from_polar((-(r - centre - c as f64).powi(2)).exp(), k * r);
        }
    }
    wp.normalize();
    wp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_preserve_hyperradius_and_triangle(rho in 1.0f64..50.0, theta in 0.01f64..FRAC_PI_4 - 0.01, phi in 0.0f64..FRAC_PI_3) {
        let g = to_distances(HyperPoint::new(rho, theta, phi).unwrap());
        prop_assert!((g.hyperradius() - rho).abs() < 1e-10 * rho);
        prop_assert!(g.triangle_violation() <= 1e-12 * rho);
        let back = to_distances(HyperPoint::from_distances(&g).unwrap());
        for (a, b) in sorted(g.as_array()).iter().zip(sorted(back.as_array())) {
            prop_assert!((a - b).abs() < 1e-9 * rho);
        }
    }

    #[test]
    fn small_d_columns_are_unit_vectors(j in 0u32..10, m_off in 0u32..20, beta in 0.0f64..PI) {
        let m = (m_off % (2 * j + 1)) as i32 - j as i32;
        let s: f64 = (-(j as i32)..=j as i32).map(|mp| small_d(j, mp, m, beta).powi(2)).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kick_phase_has_period_pi_in_gamma(rho in 5.0f64..40.0, theta in 0.05f64..0.75, phi in 0.0f64..FRAC_PI_3, beta in 0.0f64..PI, gamma in 0.0f64..PI) {
        let pol = Polarizabilities::dipole_induced_dipole(1.383, 2.0);
        let p = HyperPoint::new(rho, theta, phi).unwrap();
        let a = kick_phase(p, beta, gamma, 50.0, &pol);
        let b = kick_phase(p, beta, gamma + PI, 50.0, &pol);
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn euler_amplitudes_are_complete(a0 in -1.0f64..1.0, a in -0.5f64..0.5, r in 0.0f64..0.5, gamma0 in -PI..PI, c in 0.0f64..4.0) {
        // |e^{iφ̄}|² = 1 spreads over J ≤ 24 for these phase amplitudes
        let e = euler_amplitudes(PhaseShape { a0, a, r, gamma0 }, c, 24, 16);
        let total: f64 = e.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
    }

    #[test]
    fn chebyshev_step_is_unitary_and_reversible(depth in 0.0f64..0.5, coupling in -0.3f64..0.3, k in -2.0f64..2.0, dt in 0.5f64..20.0) {
        let h = toy_hamiltonian(depth, coupling);
        let start = toy_packet(&h, 8.0, k);
        let mut wp = start.clone();
        for _ in 0..5 {
            step_chebyshev(&h, &mut wp, dt, 30, 1e-16).unwrap();
        }
        prop_assert!((wp.norm_sq() - 1.0).abs() < 1e-11);
        let e = h.energy(&wp).unwrap();
        prop_assert!((e - h.energy(&start).unwrap()).abs() < 1e-10 * e.abs().max(1e-3));
        for _ in 0..5 {
            step_chebyshev(&h, &mut wp, -dt, 30, 1e-16).unwrap();
        }
        prop_assert!(1.0 - start.inner(&wp).norm_sqr() < 1e-11);
    }

    #[test]
    fn oscillation_count_matches_sine_periods(periods in 1usize..40) {
        let n = 4001;
        let v: Vec<f64> = (0..n).map(|i| (2.0 * PI * periods as f64 * i as f64 / (n - 1) as f64 + 0.3).sin()).collect();
        prop_assert_eq!(count_oscillations(&v, 0.05), periods);
    }

    #[test]
    fn batch_mean_of_constant_has_zero_error(x in -10.0f64..10.0, n in 64usize..5000) {
        let (m, e) = batch_mean(&vec![x; n]);
        prop_assert!((m - x).abs() < 1e-12 * x.abs().max(1.0));
        prop_assert!(e.abs() < 1e-12);
    }
}
