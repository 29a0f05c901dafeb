//! Bound states: the dimer s-wave ground state, trimer J = 0 ground and
//! excited states, and pair distribution functions.

use crate::chanbasis::ChannelBasis;
use crate::container::Container;
use crate::evolve::{propagate_imaginary, CoupledHamiltonian, EvolveError, ImaginaryConfig, WavePacket};
use crate::hypergeom::{to_distances, HyperPoint};
use crate::interaction::PairPotential;
use crate::numerics::periodic_rule;
use crate::radial::{RadialGrid, Stencil};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_3, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StationaryError {
    #[error("no bound state on this grid (lowest energy {0:e})")]
    NoBoundState(f64),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("state file does not match: {0}")]
    BadState(String),
}

/// LDLᵀ of a symmetric pentadiagonal matrix shifted by σ.
struct Ldl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

fn ldl(a: &Stencil, sigma: f64) -> Ldl {
    let n = a.diag.len();
    let (mut d, mut l1, mut l2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let tiny = 1e-300;
    for i in 0..n {
        let mut di = a.diag[i] - sigma;
        if i >= 1 {
            di -= l1[i] * l1[i] * d[i - 1];
        }
        if i >= 2 {
            di -= l2[i] * l2[i] * d[i - 2];
        }
        if di == 0.0 {
            di = tiny;
        }
        d[i] = di;
        if i + 1 < n {
            let mut v = a.off1[i];
            if i >= 1 {
                v -= l2[i + 1] * l1[i] * d[i - 1];
            }
            l1[i + 1] = v / di;
        }
        if i + 2 < n {
            l2[i + 2] = a.off2[i] / di;
        }
    }
    Ldl { d, l1, l2 }
}

impl Ldl {
    fn negatives(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            if i >= 1 {
                b[i] -= self.l1[i] * b[i - 1];
            }
            if i >= 2 {
                b[i] -= self.l2[i] * b[i - 2];
            }
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                b[i] -= self.l1[i + 1] * b[i + 1];
            }
            if i + 2 < n {
                b[i] -= self.l2[i + 2] * b[i + 2];
            }
        }
    }
}

/// Lowest eigenpair of a symmetric pentadiagonal matrix: bisection on the
/// LDLᵀ inertia, then inverse iteration.
pub fn lowest_eigenpair(a: &Stencil) -> (f64, Vec<f64>) {
    let n = a.diag.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = a.row_radius(i);
        lo = lo.min(a.diag[i] - r);
        hi = hi.max(a.diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ldl(a, mid).negatives() >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let scale = hi.abs().max(lo.abs()).max(1e-300);
    let f = ldl(a, lo - 1e-10 * scale);
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i as f64).sin()).collect();
    for _ in 0..6 {
        f.solve(&mut x);
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    (0.5 * (lo + hi), x)
}

/// Dimer s-wave ground state u(r) on a radial grid (stored as √(hJ)·u).
#[derive(Debug, Clone)]
pub struct DimerState {
    pub grid: RadialGrid,
    pub reduced_mass: f64,
    pub energy: f64,
    pub samples: Vec<f64>,
}

impl DimerState {
    /// u(r_i).
    pub fn u(&self, i: usize) -> f64 {
        self.samples[i] / self.grid.sqrt_weight(i)
    }

    pub fn u_values(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.u(i)).collect()
    }

    pub fn mean_r(&self) -> f64 {
        self.samples.iter().zip(self.grid.nodes()).map(|(v, r)| v * v * r).sum()
    }

    /// (r_i, |u(r_i)|²) with ∫|u|²dr = 1.
    pub fn pair_distribution(&self) -> (Vec<f64>, Vec<f64>) {
        (self.grid.nodes().to_vec(), (0..self.grid.len()).map(|i| self.u(i).powi(2)).collect())
    }
}

/// Radial Hamiltonian −(1/2μ̄)d²/dr² + V(r) in the symmetric representation.
pub fn dimer_hamiltonian(vaa: &PairPotential, grid: &RadialGrid, reduced_mass: f64) -> Stencil {
    let mut h = grid.laplacian().scaled(0.5 / reduced_mass);
    for (d, &r) in h.diag.iter_mut().zip(grid.nodes()) {
        *d += vaa.eval(r);
    }
    h
}

pub fn solve_dimer_ground(vaa: &PairPotential, grid: &RadialGrid, reduced_mass: f64) -> Result<DimerState, StationaryError> {
    let h = dimer_hamiltonian(vaa, grid, reduced_mass);
    let (energy, samples) = lowest_eigenpair(&h);
    if energy >= 0.0 {
        return Err(StationaryError::NoBoundState(energy));
    }
    Ok(DimerState { grid: grid.clone(), reduced_mass, energy, samples })
}

/// J = 0 trimer bound state in the channel representation.
#[derive(Debug, Clone)]
pub struct StationaryState {
    pub energy: f64,
    pub j: u32,
    pub packet: WavePacket,
}

impl StationaryState {
    pub fn to_container(&self) -> Container {
        let mut c = self.packet.to_container();
        c.kind = "stationary-state".into();
        c.blocks.push(vec![self.energy, self.j as f64]);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, StationaryError> {
        if c.kind != "stationary-state" || c.blocks.len() != 2 || c.blocks[1].len() != 2 {
            return Err(StationaryError::BadState("not a stationary-state container".into()));
        }
        let mut inner = c.clone();
        inner.kind = "wave-packet".into();
        let extra = inner.blocks.pop().unwrap();
        let packet = WavePacket::from_container(&inner)?;
        Ok(Self { energy: extra[0], j: extra[1] as u32, packet })
    }
}

/// Lowest `count` (1 or 2) bound states of a J = 0 Hamiltonian by imaginary
/// time, deflating the ground state for the excited one.
pub fn solve_trimer_bound(h: &CoupledHamiltonian, count: usize, cfg: &ImaginaryConfig) -> Result<Vec<StationaryState>, StationaryError> {
    let mut guess = h.empty_packet();
    let nodes = h.grid().nodes();
    let peak = nodes[nodes.len() / 4];
    for (c, idx) in h.channels().iter().enumerate() {
        let amp = if idx.m == 0 && idx.n == 0 { 1.0 } else { 1e-3 };
        for (i, &r) in nodes.iter().enumerate() {
            let s = (r / peak).powi(3) * (-r / peak).exp();
            guess.channel_mut(c)[i] = Complex64::new(amp * s, 0.0);
        }
    }
    let mut states: Vec<StationaryState> = Vec::new();
    for _ in 0..count {
        let defl: Vec<&WavePacket> = states.iter().map(|s| &s.packet).collect();
        let (packet, energy) = propagate_imaginary(h, &guess, &defl, cfg)?;
        if energy >= 0.0 {
            return Err(StationaryError::NoBoundState(energy));
        }
        states.push(StationaryState { energy, j: 0, packet: fix_sign(packet) });
    }
    Ok(states)
}

fn fix_sign(mut wp: WavePacket) -> WavePacket {
    let peak = wp.data.iter().copied().fold(Complex64::new(0.0, 0.0), |a, b| if b.norm() > a.norm() { b } else { a });
    if peak.norm() > 0.0 {
        let phase = peak.conj() / peak.norm();
        wp.data.iter_mut().for_each(|z| *z *= phase);
    }
    wp
}

/// ψ(ρ_i, θ_k, φ) for a J = 0 state, summed over channels (Euler part
/// excluded). Returned row-major over (θ_k, φ_l).
pub fn hyperangular_slice(state: &WavePacket, basis: &ChannelBasis, grid: &RadialGrid, i: usize, phis: &[f64]) -> Vec<Complex64> {
    let nt = basis.grid.len();
    let mut out = vec![Complex64::new(0.0, 0.0); nt * phis.len()];
    let norm = (3.0 / PI).sqrt();
    for (c, idx) in state.channels.iter().enumerate() {
        if idx.j != 0 {
            continue;
        }
        let f = state.radial_weight(grid, c, i);
        if f == Complex64::new(0.0, 0.0) {
            continue;
        }
        let p = &basis.eigenpair(*idx).expect("state channel in basis").components[0];
        for (l, &ph) in phis.iter().enumerate() {
            let e = f * Complex64::from_polar(norm, idx.m as f64 * ph);
            for k in 0..nt {
                out[k * phis.len() + l] += e * p[k];
            }
        }
    }
    out
}

/// Pair distribution P_pair(r₁₂) of a J = 0 trimer state by quadrature
/// binning; returns bin centres and a density normalized to ∫P dr = 1.
pub fn pair_distribution(
    state: &StationaryState,
    basis: &ChannelBasis,
    grid: &RadialGrid,
    edges: &[f64],
    n_phi: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (phis, wphi) = periodic_rule(n_phi, 0.0, FRAC_PI_3);
    let nb = edges.len() - 1;
    let mut hist = vec![0.0; nb];
    let wr = grid.weights();
    let qw = basis.grid.measure();
    for i in 0..grid.len() {
        let rho = grid.nodes()[i];
        let slice = hyperangular_slice(&state.packet, basis, grid, i, &phis);
        for (k, &th) in basis.grid.nodes().iter().enumerate() {
            for (l, &ph) in phis.iter().enumerate() {
                let w = slice[k * n_phi + l].norm_sqr() * qw[k] * wphi[l] * wr[i] * rho.powi(5);
                let r = to_distances(HyperPoint::raw(rho, th, ph)).r12;
                let b = edges.partition_point(|&e| e <= r);
                if b >= 1 && b <= nb {
                    hist[b - 1] += w;
                }
            }
        }
    }
    let total: f64 = hist.iter().sum();
    let centres = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let dens = hist.iter().zip(edges.windows(2)).map(|(h, w)| h / total / (w[1] - w[0])).collect();
    (centres, dens)
}

/// ⟨r₁₂⟩ of a J = 0 trimer state by hyperspherical quadrature.
pub fn mean_pair_distance(state: &StationaryState, basis: &ChannelBasis, grid: &RadialGrid, n_phi: usize) -> f64 {
    let (phis, wphi) = periodic_rule(n_phi, 0.0, FRAC_PI_3);
    let wr = grid.weights();
    let qw = basis.grid.measure();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..grid.len() {
        let rho = grid.nodes()[i];
        let slice = hyperangular_slice(&state.packet, basis, grid, i, &phis);
        for (k, &th) in basis.grid.nodes().iter().enumerate() {
            for (l, &ph) in phis.iter().enumerate() {
                let w = slice[k * n_phi + l].norm_sqr() * qw[k] * wphi[l] * wr[i] * rho.powi(5);
                num += w * to_distances(HyperPoint::raw(rho, th, ph)).r12;
                den += w;
            }
        }
    }
    num / den
}
