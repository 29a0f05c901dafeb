//! δ-kick, projection of the kicked state onto the channel basis, and the
//! t = 0⁺ population diagnostics.
//!
//! The kicked state is e^{iφ̄}ψ_ground(8π²)^{-1/2} with
//! φ̄ = C Σ_pairs [α_int − β_int/3 + β_int cos²ϑ]. In the body frame
//! cos ϑ = sin β (x̂ cos γ + ŷ sin γ), so
//! φ̄ = C[A₀ + sin²β (a + R cos(2γ − γ₀))]. The γ integral of each Wigner
//! projection is done in closed form (Jacobi–Anger), the β integral by
//! Gauss–Legendre in cos β with a degree sized to the local phase amplitude.

use crate::angmath::small_d_column;
use crate::chanbasis::{ChannelBasis, ChannelIndex};
use crate::evolve::WavePacket;
use crate::hypergeom::{body_pair_vectors, HyperPoint};
use crate::interaction::{kick_constant, LaserKick, Polarizabilities};
use crate::numerics::{bessel_j_sequence, cubic_interp, gauss_legendre, periodic_rule, polyfit};
use crate::radial::RadialGrid;
use crate::stationary::{hyperangular_slice, StationaryState};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KickError {
    #[error("quadrature grid does not match the basis: {0}")]
    QuadratureMismatch(String),
    #[error("quadratic fit needs at least 3 intensities, got {0}")]
    FitUnderdetermined(usize),
    #[error(transparent)]
    Interaction(#[from] crate::interaction::InteractionError),
}

/// Hyperangular φ rule and minimum β degree used for the kicked state.
#[derive(Debug, Clone)]
pub struct KickQuadrature {
    pub phis: Vec<f64>,
    /// Weights normalized so Σw = π/3 whatever the covered range.
    pub phi_weights: Vec<f64>,
    pub n_beta_min: usize,
}

impl KickQuadrature {
    pub fn new(n_phi: usize, n_beta_min: usize) -> Self {
        Self::over_range(n_phi, FRAC_PI_3, n_beta_min)
    }

    /// φ nodes covering [0, period); `period` must be a multiple of π/3.
    pub fn over_range(n_phi: usize, period: f64, n_beta_min: usize) -> Self {
        let (phis, w) = periodic_rule(n_phi, 0.0, period);
        let scale = FRAC_PI_3 / period;
        Self { phis, phi_weights: w.iter().map(|x| x * scale).collect(), n_beta_min }
    }
}

/// Orientation-independent pieces of φ̄/C at one shape.
#[derive(Debug, Clone, Copy)]
pub struct PhaseShape {
    pub a0: f64,
    pub a: f64,
    pub r: f64,
    pub gamma0: f64,
}

pub fn phase_shape(p: HyperPoint, pol: &Polarizabilities) -> PhaseShape {
    let (mut a0, mut a, mut b, mut c) = (0.0, 0.0, 0.0, 0.0);
    for v in body_pair_vectors(p) {
        let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let (x, y) = if len > 0.0 { (v[0] / len, v[1] / len) } else { (1.0, 0.0) };
        let (al, be) = (pol.iso.eval(len), pol.aniso.eval(len));
        a0 += al - be / 3.0;
        a += be * (x * x + y * y) / 2.0;
        b += be * (x * x - y * y) / 2.0;
        c += be * x * y;
    }
    PhaseShape { a0, a, r: b.hypot(c), gamma0: c.atan2(b) }
}

/// Kick phase φ̄ at a body-frame configuration and orientation (β, γ).
pub fn kick_phase(p: HyperPoint, beta: f64, gamma: f64, constant: f64, pol: &Polarizabilities) -> f64 {
    let s = phase_shape(p, pol);
    constant * (s.a0 + beta.sin().powi(2) * (s.a + s.r * (2.0 * gamma - s.gamma0).cos()))
}

fn jm_index(j: u32, m: i32) -> usize {
    let j = j as i64;
    (j * j + (m as i64 + j)) as usize
}

fn jm_count(j_store: u32) -> usize {
    ((j_store + 1) * (j_store + 1)) as usize
}

/// E^J_M = √(2J+1)/(8π²)∫[D^J_{0M}(0,β,γ)]* e^{iφ̄} dV_euler for J ≤ j_store,
/// indexed by `jm_index`.
pub fn euler_amplitudes(shape: PhaseShape, constant: f64, j_store: u32, n_beta_min: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); jm_count(j_store)];
    let amp = constant.abs() * (shape.a.abs() + shape.r);
    let n_beta = n_beta_min.max((1.5 * amp).ceil() as usize + j_store as usize + 16);
    let (xs, ws) = gauss_legendre(n_beta);
    let kmax = j_store as i32 / 2;
    let cols: Vec<Vec<Vec<f64>>> = xs
        .iter()
        .map(|&x| {
            let beta = x.clamp(-1.0, 1.0).acos();
            (-kmax..=kmax).map(|k| small_d_column(j_store, 2 * k, 0, beta)).collect()
        })
        .collect();
    for ((&x, &w), col) in xs.iter().zip(&ws).zip(&cols) {
        let s = 1.0 - x * x;
        let z = constant * shape.r * s;
        let base = C64::from_polar(w, constant * (shape.a0 + shape.a * s));
        let bes = bessel_j_sequence(z.abs(), kmax as usize);
        for k in -kmax..=kmax {
            // i^k J_k(z) e^{-ikγ₀}, with J_k(z) = (-1)^k J_{|k|}(|z|) for k < 0 or z < 0
            let flips = (k < 0) as i32 + (z < 0.0) as i32;
            let jk = if flips == 1 && k % 2 != 0 { -bes[k.unsigned_abs() as usize] } else { bes[k.unsigned_abs() as usize] };
            let f = base * C64::new(0.0, 1.0).powi(k) * C64::from_polar(jk, -(k as f64) * shape.gamma0);
            let big_m = 2 * k;
            let d = &col[(k + kmax) as usize];
            for j in big_m.unsigned_abs()..=j_store {
                out[jm_index(j, big_m)] += f * d[j as usize];
            }
        }
    }
    for j in 0..=j_store {
        let pre = (2.0 * j as f64 + 1.0).sqrt() / 2.0;
        for m in -(j as i32)..=(j as i32) {
            out[jm_index(j, m)] *= pre;
        }
    }
    out
}

/// Kicked state sampled on (ρ_i, θ_k, φ_l) with its Wigner projections.
#[derive(Debug, Clone)]
pub struct KickedState {
    pub constant: f64,
    pub grid: RadialGrid,
    pub thetas: Vec<f64>,
    pub theta_measure: Vec<f64>,
    pub quad: KickQuadrature,
    pub j_store: u32,
    /// ψ_ground(ρ_i, θ_k, φ_l), index (i·nθ + k)·nφ + l.
    pub ground: Vec<C64>,
    /// E^J_M at each node, `jm_count` entries per node.
    pub euler: Vec<C64>,
}

impl KickedState {
    fn node(&self, i: usize, k: usize, l: usize) -> usize {
        (i * self.thetas.len() + k) * self.quad.phis.len() + l
    }

    pub fn euler_at(&self, i: usize, k: usize, l: usize, j: u32, m: i32) -> C64 {
        self.euler[self.node(i, k, l) * jm_count(self.j_store) + jm_index(j, m)]
    }

    /// P^(J)_M by direct integration.
    pub fn population(&self, j: u32, m: i32) -> f64 {
        let (nt, np) = (self.thetas.len(), self.quad.phis.len());
        let wr = self.grid.weights();
        let mut acc = 0.0;
        for i in 0..self.grid.len() {
            let rv = wr[i] * self.grid.nodes()[i].powi(5);
            for k in 0..nt {
                for l in 0..np {
                    let idx = self.node(i, k, l);
                    let c = self.euler[idx * jm_count(self.j_store) + jm_index(j, m)] * self.ground[idx];
                    acc += c.norm_sqr() * rv * self.theta_measure[k] * self.quad.phi_weights[l];
                }
            }
        }
        acc
    }

    /// ⟨ψ_b| kicked J = 0 component ⟩ by direct integration.
    pub fn overlap(&self, bound: &[C64]) -> C64 {
        let (nt, np) = (self.thetas.len(), self.quad.phis.len());
        let wr = self.grid.weights();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.grid.len() {
            let rv = wr[i] * self.grid.nodes()[i].powi(5);
            for k in 0..nt {
                for l in 0..np {
                    let idx = self.node(i, k, l);
                    let w = rv * self.theta_measure[k] * self.quad.phi_weights[l];
                    acc += bound[idx].conj() * self.euler[idx * jm_count(self.j_store)] * self.ground[idx] * w;
                }
            }
        }
        acc
    }

    /// Largest ||Ψ(0⁺)| − |Ψ(0)|| over the nodes and the given orientations.
    pub fn max_modulus_defect(&self, pol: &Polarizabilities, betas: &[f64], gammas: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &rho) in self.grid.nodes().iter().enumerate() {
            for (k, &th) in self.thetas.iter().enumerate() {
                for (l, &ph) in self.quad.phis.iter().enumerate() {
                    let g = self.ground[self.node(i, k, l)];
                    for &b in betas {
                        for &c in gammas {
                            let kicked = g * C64::from_polar(1.0, kick_phase(HyperPoint::raw(rho, th, ph), b, c, self.constant, pol));
                            worst = worst.max((kicked.norm() - g.norm()).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Samples a J = 0 state on the kick quadrature (ψ only, no Euler factor).
pub fn sample_state(state: &StationaryState, basis: &ChannelBasis, grid: &RadialGrid, quad: &KickQuadrature) -> Vec<C64> {
    (0..grid.len())
        .into_par_iter()
        .flat_map_iter(|i| hyperangular_slice(&state.packet, basis, grid, i, &quad.phis))
        .collect()
}

pub fn apply_delta_kick(
    ground: &StationaryState,
    basis: &ChannelBasis,
    grid: &RadialGrid,
    constant: f64,
    pol: &Polarizabilities,
    quad: &KickQuadrature,
    j_store: u32,
) -> KickedState {
    let thetas = basis.grid.nodes().to_vec();
    let nt = thetas.len();
    let np = quad.phis.len();
    let ground_amp = sample_state(ground, basis, grid, quad);
    let euler: Vec<C64> = grid
        .nodes()
        .par_iter()
        .flat_map_iter(|&rho| {
            let mut row = Vec::with_capacity(nt * np * jm_count(j_store));
            for &th in &thetas {
                for &ph in &quad.phis {
                    let shape = phase_shape(HyperPoint::raw(rho, th, ph), pol);
                    row.extend(euler_amplitudes(shape, constant, j_store, quad.n_beta_min));
                }
            }
            row
        })
        .collect();
    KickedState {
        constant,
        grid: grid.clone(),
        thetas,
        theta_measure: basis.grid.measure().to_vec(),
        quad: quad.clone(),
        j_store,
        ground: ground_amp,
        euler,
    }
}

/// F^(J)_{m,n}(ρ, 0⁺) for every basis channel with J ≤ j_store.
pub fn project_to_channels(kicked: &KickedState, basis: &ChannelBasis) -> Result<WavePacket, KickError> {
    if basis.grid.nodes() != kicked.thetas.as_slice() {
        return Err(KickError::QuadratureMismatch("θ nodes differ".into()));
    }
    let channels: Vec<ChannelIndex> = basis.all_channels().into_iter().filter(|c| c.j <= kicked.j_store).collect();
    let n_rho = kicked.grid.len();
    let (nt, np) = (kicked.thetas.len(), kicked.quad.phis.len());
    let norm = (3.0 / PI).sqrt();
    let cols: Vec<Vec<C64>> = channels
        .par_iter()
        .map(|idx| {
            let pair = basis.eigenpair(*idx).expect("channel in basis");
            let phase: Vec<C64> = kicked
                .quad
                .phis
                .iter()
                .zip(&kicked.quad.phi_weights)
                .map(|(&ph, &w)| C64::from_polar(norm * w, -(idx.m as f64) * ph))
                .collect();
            (0..n_rho)
                .map(|i| {
                    let mut f = C64::new(0.0, 0.0);
                    for (mi, big_m) in (-(idx.j as i32)..=idx.j as i32).step_by(2).enumerate() {
                        let p = &pair.components[mi];
                        for k in 0..nt {
                            let mut g = C64::new(0.0, 0.0);
                            for l in 0..np {
                                let node = kicked.node(i, k, l);
                                g += phase[l] * kicked.euler[node * jm_count(kicked.j_store) + jm_index(idx.j, big_m)] * kicked.ground[node];
                            }
                            f += g * p[k] * kicked.theta_measure[k];
                        }
                    }
                    f * kicked.grid.sqrt_weight(i) * kicked.grid.nodes()[i].powf(2.5)
                })
                .collect()
        })
        .collect();
    let mut wp = WavePacket::zeros(channels, n_rho);
    for (c, col) in cols.into_iter().enumerate() {
        wp.channel_mut(c).copy_from_slice(&col);
    }
    Ok(wp)
}

#[derive(Debug, Clone, Default)]
pub struct DecompositionReport {
    /// P^(J)_M (direct), even M only.
    pub p_jm: BTreeMap<(u32, i32), f64>,
    pub p_direct: BTreeMap<u32, f64>,
    pub p_basis: BTreeMap<u32, f64>,
    pub sigma: BTreeMap<u32, f64>,
    pub c_ground: Option<C64>,
    pub c_efimov: Option<C64>,
    pub unbound: Option<f64>,
}

impl DecompositionReport {
    pub fn captured(&self) -> f64 {
        self.p_basis.values().sum()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("# J  P_direct  P_basis  sigma\n");
        for (j, pd) in &self.p_direct {
            let pb = self.p_basis.get(j).copied().unwrap_or(f64::NAN);
            let sg = self.sigma.get(j).copied().unwrap_or(f64::NAN);
            s += &format!("{j} {pd:.10e} {pb:.10e} {sg:.4e}\n");
        }
        s += "# J  M  P_JM\n";
        for ((j, m), p) in &self.p_jm {
            s += &format!("{j} {m} {p:.10e}\n");
        }
        if let Some(c) = self.c_ground {
            s += &format!("# |c_ground|^2 {:.10e}\n", c.norm_sqr());
        }
        if let Some(c) = self.c_efimov {
            s += &format!("# |c_efimov|^2 {:.10e}\n", c.norm_sqr());
        }
        if let Some(u) = self.unbound {
            s += &format!("# |c_unbound|^2 {u:.10e}\n");
        }
        s
    }
}

/// Both population routes, σ^(J), and the bound/unbound split of J = 0.
/// `bound` holds the ground state first, then optionally the excited one.
pub fn decompose(
    kicked: &KickedState,
    packet: &WavePacket,
    bound: &[&StationaryState],
    basis: &ChannelBasis,
) -> DecompositionReport {
    let mut rep = DecompositionReport::default();
    for j in (0..=kicked.j_store).step_by(2) {
        let mut total = 0.0;
        for m in (-(j as i32)..=j as i32).step_by(2) {
            let p = kicked.population(j, m);
            rep.p_jm.insert((j, m), p);
            total += p;
        }
        rep.p_direct.insert(j, total);
        let pb = packet.j_population(j);
        rep.p_basis.insert(j, pb);
        rep.sigma.insert(j, (total - pb).abs() / total);
    }
    let amps: Vec<C64> = bound
        .iter()
        .enumerate()
        .map(|(b, s)| {
            let sample = if b == 0 { kicked.ground.clone() } else { sample_state(s, basis, &kicked.grid, &kicked.quad) };
            kicked.overlap(&sample)
        })
        .collect();
    rep.c_ground = amps.first().copied();
    rep.c_efimov = amps.get(1).copied();
    if !amps.is_empty() {
        let p0 = rep.p_direct[&0];
        rep.unbound = Some(p0 - amps.iter().map(|c| c.norm_sqr()).sum::<f64>());
    }
    rep
}

/// Channel-route populations and overlaps for an arbitrary packet.
pub fn decompose_packet(packet: &WavePacket, bound: &[&StationaryState]) -> DecompositionReport {
    let mut rep = DecompositionReport::default();
    for (j, p) in packet.j_populations() {
        rep.p_basis.insert(j, p);
    }
    let amps: Vec<C64> = bound.iter().map(|s| overlap_packets(&s.packet, packet)).collect();
    rep.c_ground = amps.first().copied();
    rep.c_efimov = amps.get(1).copied();
    if !amps.is_empty() {
        let p0 = rep.p_basis.get(&0).copied().unwrap_or(0.0);
        rep.unbound = Some(p0 - amps.iter().map(|c| c.norm_sqr()).sum::<f64>());
    }
    rep
}

/// ⟨a|b⟩ over the channels both packets share.
pub fn overlap_packets(a: &WavePacket, b: &WavePacket) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (ca, idx) in a.channels.iter().enumerate() {
        if let Some(cb) = b.position(*idx) {
            acc += a.channel(ca).iter().zip(b.channel(cb)).map(|(x, y)| x.conj() * y).sum::<C64>();
        }
    }
    acc
}

/// Cubic transfer of a packet between radial grids.
pub fn transfer_packet(wp: &WavePacket, from: &RadialGrid, to: &RadialGrid) -> WavePacket {
    let mut out = WavePacket::zeros(wp.channels.clone(), to.len());
    out.time = wp.time;
    for c in 0..wp.channels.len() {
        let (re, im): (Vec<f64>, Vec<f64>) = (0..from.len())
            .map(|i| {
                let f = wp.radial_weight(from, c, i);
                (f.re, f.im)
            })
            .unzip();
        for (i, &r) in to.nodes().iter().enumerate() {
            let inside = r >= from.nodes()[0] && r <= *from.nodes().last().unwrap();
            let f = if inside {
                C64::new(cubic_interp(from.nodes(), &re, r), cubic_interp(from.nodes(), &im, r))
            } else {
                C64::new(0.0, 0.0)
            };
            out.channel_mut(c)[i] = f * to.sqrt_weight(i) * r.powf(2.5);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct IntensityScan {
    pub intensities: Vec<f64>,
    pub survival: Vec<f64>,
    /// c₀ + c₁ I + c₂ I².
    pub fit: [f64; 3],
}

/// |c_ground|² as a function of peak intensity at fixed τ.
pub fn intensity_scan(
    ground: &StationaryState,
    basis: &ChannelBasis,
    grid: &RadialGrid,
    pol: &Polarizabilities,
    tau_fs: f64,
    intensities: &[f64],
    quad: &KickQuadrature,
) -> Result<IntensityScan, KickError> {
    if intensities.len() < 3 {
        return Err(KickError::FitUnderdetermined(intensities.len()));
    }
    let amp = sample_state(ground, basis, grid, quad);
    let thetas = basis.grid.nodes();
    let measure = basis.grid.measure();
    let np = quad.phis.len();
    let wr = grid.weights();
    let mut survival = Vec::with_capacity(intensities.len());
    for &intensity in intensities {
        let constant = kick_constant(&LaserKick::from_fs(intensity, tau_fs)?);
        let c: C64 = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let rho = grid.nodes()[i];
                let mut acc = C64::new(0.0, 0.0);
                for (k, &th) in thetas.iter().enumerate() {
                    for (l, &ph) in quad.phis.iter().enumerate() {
                        let g = amp[(i * thetas.len() + k) * np + l];
                        let e = euler_amplitudes(phase_shape(HyperPoint::raw(rho, th, ph), pol), constant, 0, quad.n_beta_min)[0];
                        acc += g.norm_sqr() * e * measure[k] * quad.phi_weights[l];
                    }
                }
                acc * wr[i] * rho.powi(5)
            })
            .sum();
        survival.push(c.norm_sqr());
    }
    let coeffs = polyfit(intensities, &survival, 2).ok_or(KickError::FitUnderdetermined(intensities.len()))?;
    Ok(IntensityScan { intensities: intensities.to_vec(), survival, fit: [coeffs[0], coeffs[1], coeffs[2]] })
}
