//! Observables of a channel-represented wave packet: quadrature expectation
//! values, ρ-resolved alignment (direct and through the 𝒢 couplings),
//! Metropolis sampling, KER histograms with the partial split, r-resolved
//! alignment and principal-frame snapshots.

use crate::angmath::{small_d_column, EulerAngles};
use crate::chanbasis::{ChannelBasis, ChannelIndex};
use crate::evolve::WavePacket;
use crate::hypergeom::{lab_angles, principal_frame, to_distances, HyperPoint};
use crate::kick::overlap_packets;
use crate::numerics::{gauss_legendre, lagrange4, periodic_rule};
use crate::radial::RadialGrid;
use crate::stationary::StationaryState;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObserveError {
    #[error("scope {0} has zero norm")]
    EmptyScope(String),
    #[error("{0:.3e} of the sampled mass falls outside the bins")]
    BinningClipped(f64),
    #[error("sampling density vanishes at the start point")]
    ZeroDensityStart,
    #[error("no 𝒢 coupling for channels {0:?} and {1:?}")]
    MissingCoupling(ChannelIndex, ChannelIndex),
    #[error("invalid request: {0}")]
    BadRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Full,
    J(u32),
    /// J = 0 part with the bound-state projections removed.
    Scatt0,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Full => write!(f, "full"),
            Scope::J(j) => write!(f, "J={j}"),
            Scope::Scatt0 => write!(f, "scatt0"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    One,
    Cos2Beta,
    Cos2Gamma,
    Rho,
    PairAve,
    PairMin,
    PairMax,
    Ker,
}

impl Observable {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "one" => Self::One,
            "cos2beta" => Self::Cos2Beta,
            "cos2gamma" => Self::Cos2Gamma,
            "rho" => Self::Rho,
            "pair-ave" => Self::PairAve,
            "pair-min" => Self::PairMin,
            "pair-max" => Self::PairMax,
            "ker" => Self::Ker,
            _ => return None,
        })
    }

    pub fn depends_on_orientation(self) -> bool {
        matches!(self, Self::Cos2Beta | Self::Cos2Gamma)
    }

    pub fn value(self, p: HyperPoint, cos_beta: f64, gamma: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Cos2Beta => cos_beta * cos_beta,
            Self::Cos2Gamma => gamma.cos().powi(2),
            Self::Rho => p.rho,
            Self::PairAve => to_distances(p).mean(),
            Self::PairMin => to_distances(p).min(),
            Self::PairMax => to_distances(p).max(),
            Self::Ker => ker(p),
        }
    }
}

/// Coulomb-explosion energy Σ 1/r_jk (hartree).
pub fn ker(p: HyperPoint) -> f64 {
    to_distances(p).as_array().iter().map(|r| 1.0 / r).sum()
}

/// Packet restricted to a scope (not renormalized).
pub fn scoped_packet(wp: &WavePacket, scope: Scope, bound: &[&StationaryState]) -> WavePacket {
    match scope {
        Scope::Full => wp.clone(),
        Scope::J(j) => wp.restrict_to_j(j),
        Scope::Scatt0 => {
            let mut out = wp.restrict_to_j(0);
            for b in bound {
                let c = overlap_packets(&b.packet, wp);
                for (cb, idx) in b.packet.channels.iter().enumerate() {
                    if let Some(co) = out.position(*idx) {
                        for (o, v) in out.channel_mut(co).iter_mut().zip(b.packet.channel(cb)) {
                            *o -= c * v;
                        }
                    }
                }
            }
            out
        }
    }
}

/// Quadrature orders for deterministic observables.
#[derive(Debug, Clone, Copy)]
pub struct ObsQuadrature {
    pub n_phi: usize,
    pub n_beta: usize,
    pub n_gamma: usize,
}

impl ObsQuadrature {
    /// Exact for the channel products of `basis` (cos²β, cos²γ included).
    pub fn exact_for(basis: &ChannelBasis) -> Self {
        let t = basis.truncation;
        Self {
            n_phi: (2 * t.m_max.unsigned_abs() as usize / 6 + 2).max(8),
            n_beta: t.j_max as usize + 3,
            n_gamma: 2 * t.j_max as usize + 4,
        }
    }
}

/// A_{JM}(θ_k, φ_l) = Σ_{m,n} F(ρ_i) √(3/π) e^{imφ} P^{(J,m)}_{M,n}(θ_k) at
/// one radial node; rows follow `jm`.
struct NodeAmplitudes {
    values: Vec<Vec<C64>>,
}

fn jm_list(channels: &[ChannelIndex]) -> Vec<(u32, i32)> {
    let mut js: Vec<u32> = channels.iter().map(|c| c.j).collect();
    js.sort_unstable();
    js.dedup();
    js.into_iter().flat_map(|j| (-(j as i32)..=j as i32).step_by(2).map(move |m| (j, m))).collect()
}

fn node_amplitudes(wp: &WavePacket, basis: &ChannelBasis, grid: &RadialGrid, i: usize, phis: &[f64]) -> NodeAmplitudes {
    let jm = jm_list(&wp.channels);
    let pos: BTreeMap<(u32, i32), usize> = jm.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let nt = basis.grid.len();
    let np = phis.len();
    let mut values = vec![vec![C64::new(0.0, 0.0); nt * np]; jm.len()];
    let norm = (3.0 / PI).sqrt();
    for (c, idx) in wp.channels.iter().enumerate() {
        let f = wp.radial_weight(grid, c, i);
        if f.norm_sqr() == 0.0 {
            continue;
        }
        let pair = basis.eigenpair(*idx).expect("packet channel solved in basis");
        let ph: Vec<C64> = phis.iter().map(|&p| f * C64::from_polar(norm, idx.m as f64 * p)).collect();
        for (mi, big_m) in (-(idx.j as i32)..=idx.j as i32).step_by(2).enumerate() {
            let row = &mut values[pos[&(idx.j, big_m)]];
            let comp = &pair.components[mi];
            for k in 0..nt {
                for l in 0..np {
                    row[k * np + l] += ph[l] * comp[k];
                }
            }
        }
    }
    NodeAmplitudes { values }
}

/// Orientation quadrature: (cos β nodes, weights, γ nodes, γ weight incl. α).
struct EulerRule {
    x: Vec<f64>,
    wx: Vec<f64>,
    gammas: Vec<f64>,
    wg: f64,
    /// √((2J+1)/8π²) d^J_{M0}(β_b) e^{iMγ_g}, per jm entry, index b·nγ + g.
    d: Vec<Vec<C64>>,
}

impl EulerRule {
    fn new(jm: &[(u32, i32)], n_beta: usize, n_gamma: usize) -> Self {
        let (x, wx) = gauss_legendre(n_beta);
        let gammas: Vec<f64> = (0..n_gamma).map(|g| 2.0 * PI * g as f64 / n_gamma as f64).collect();
        let wg = 2.0 * PI / n_gamma as f64 * 2.0 * PI;
        let jmax = jm.iter().map(|v| v.0).max().unwrap_or(0);
        let d = jm
            .iter()
            .map(|&(j, m)| {
                let pre = ((2 * j + 1) as f64 / (8.0 * PI * PI)).sqrt();
                let mut row = Vec::with_capacity(n_beta * n_gamma);
                for &xb in &x {
                    let dv = small_d_column(jmax, m, 0, xb.clamp(-1.0, 1.0).acos())[j as usize];
                    for &g in &gammas {
                        row.push(C64::from_polar(pre * dv, m as f64 * g));
                    }
                }
                row
            })
            .collect();
        Self { x, wx, gammas, wg, d }
    }
}

/// ∫ A |Ψ|² over the hyperangles and orientations at each radial node,
/// together with ∫ |Ψ|²; both per node, without the ρ⁵ hJ weight.
fn resolved_moments(wp: &WavePacket, basis: &ChannelBasis, grid: &RadialGrid, obs: Observable, quad: ObsQuadrature) -> Vec<(f64, f64)> {
    let (phis, wphi) = periodic_rule(quad.n_phi, 0.0, FRAC_PI_3);
    let jm = jm_list(&wp.channels);
    let euler = EulerRule::new(&jm, quad.n_beta, quad.n_gamma);
    let measure = basis.grid.measure();
    let thetas = basis.grid.nodes();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let amps = node_amplitudes(wp, basis, grid, i, &phis);
            let rho = grid.nodes()[i];
            let np = phis.len();
            let (mut num, mut den) = (0.0, 0.0);
            for (k, &th) in thetas.iter().enumerate() {
                for (l, &ph) in phis.iter().enumerate() {
                    let w = measure[k] * wphi[l];
                    let p = HyperPoint::raw(rho, th, ph);
                    if obs.depends_on_orientation() {
                        for (b, &xb) in euler.x.iter().enumerate() {
                            for (g, &gm) in euler.gammas.iter().enumerate() {
                                let bg = b * euler.gammas.len() + g;
                                let psi: C64 = amps.values.iter().zip(&euler.d).map(|(a, d)| a[k * np + l] * d[bg]).sum();
                                let dens = psi.norm_sqr() * w * euler.wx[b] * euler.wg;
                                num += dens * obs.value(p, xb, gm);
                                den += dens;
                            }
                        }
                    } else {
                        let dens: f64 = amps.values.iter().map(|a| a[k * np + l].norm_sqr()).sum::<f64>() * w;
                        if dens > 0.0 {
                            num += dens * obs.value(p, 0.0, 0.0);
                        }
                        den += dens;
                    }
                }
            }
            (num, den)
        })
        .collect()
}

/// ⟨A⟩ within a scope, normalized by the scope's own norm.
pub fn expval(
    wp: &WavePacket,
    basis: &ChannelBasis,
    grid: &RadialGrid,
    obs: Observable,
    scope: Scope,
    bound: &[&StationaryState],
    quad: ObsQuadrature,
) -> Result<f64, ObserveError> {
    let s = scoped_packet(wp, scope, bound);
    if s.norm_sq() < 1e-14 {
        return Err(ObserveError::EmptyScope(scope.to_string()));
    }
    let wr = grid.weights();
    let (num, den) = resolved_moments(&s, basis, grid, obs, quad)
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(a, b), (i, &(n, d))| {
            let v = wr[i] * grid.nodes()[i].powi(5);
            (a + v * n, b + v * d)
        });
    if den <= 0.0 {
        return Err(ObserveError::EmptyScope(scope.to_string()));
    }
    Ok(num / den)
}

/// ⟨cos²β⟩(ρ_i) or ⟨cos²γ⟩(ρ_i) by direct quadrature; NaN where the
/// density is below `floor` × its maximum.
pub fn alignment_rho(wp: &WavePacket, basis: &ChannelBasis, grid: &RadialGrid, obs: Observable, quad: ObsQuadrature, floor: f64) -> Vec<f64> {
    let m = resolved_moments(wp, basis, grid, obs, quad);
    let dmax = m.iter().map(|v| v.1).fold(0.0, f64::max);
    m.iter().map(|&(n, d)| if d > floor * dmax && d > 0.0 { n / d } else { f64::NAN }).collect()
}

/// Per-(J', J) breakdown of the 𝒢 interference sum at one ρ.
#[derive(Debug, Clone, Default)]
pub struct InterferenceTerms {
    pub value: f64,
    pub terms: BTreeMap<(u32, u32), f64>,
}

/// ⟨cos²β⟩(ρ_i) = 1/3 + (2/3) Σ 𝒢^{(J',J)}_{m,n',n} Re[F'* F] / Σ|F|² over a
/// channel subset (all packet channels when `subset` is None).
pub fn alignment_interference(
    wp: &WavePacket,
    basis: &ChannelBasis,
    grid: &RadialGrid,
    subset: Option<&[ChannelIndex]>,
    floor: f64,
) -> Result<Vec<InterferenceTerms>, ObserveError> {
    let chans: Vec<(usize, ChannelIndex)> = wp
        .channels
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, c)| subset.is_none_or(|s| s.contains(c)))
        .collect();
    let t = basis.truncation;
    for (_, c) in &chans {
        if c.j > t.j_max || c.m.abs() > t.m_max || c.n > t.n_max {
            return Err(ObserveError::MissingCoupling(*c, *c));
        }
    }
    let mut pairs = Vec::new();
    for &(ca, a) in &chans {
        for &(cb, b) in &chans {
            if a.m == b.m && a.j.abs_diff(b.j) <= 2 {
                let g = basis.coupling_g(a.j, b.j, a.m, a.n, b.n);
                if g != 0.0 {
                    pairs.push((ca, cb, a.j, b.j, g));
                }
            }
        }
    }
    let dens: Vec<f64> =
        (0..grid.len()).map(|i| chans.iter().map(|&(c, _)| wp.radial_weight(grid, c, i).norm_sqr()).sum()).collect();
    let dmax = dens.iter().cloned().fold(0.0, f64::max);
    Ok((0..grid.len())
        .map(|i| {
            if !(dens[i] > floor * dmax && dens[i] > 0.0) {
                return InterferenceTerms { value: f64::NAN, terms: BTreeMap::new() };
            }
            let mut terms = BTreeMap::new();
            let mut total = 0.0;
            for &(ca, cb, ja, jb, g) in &pairs {
                let v = (wp.radial_weight(grid, ca, i).conj() * wp.radial_weight(grid, cb, i)).re * g * 2.0 / 3.0 / dens[i];
                *terms.entry((ja, jb)).or_insert(0.0) += v;
                total += v;
            }
            InterferenceTerms { value: 1.0 / 3.0 + total, terms }
        })
        .collect())
}

/// Reduced two-channel form with channels (0,0,0) and (2,0,0):
/// 1/3 + (4/3)𝒢^{(0,2)}_{0,0,0}|F₀F₂|cos(δ₂ − δ₀)/(|F₀|² + |F₂|²).
pub fn two_channel_alignment(wp: &WavePacket, basis: &ChannelBasis, grid: &RadialGrid, floor: f64) -> Result<Vec<f64>, ObserveError> {
    let a = ChannelIndex { j: 0, m: 0, n: 0 };
    let b = ChannelIndex { j: 2, m: 0, n: 0 };
    let (ca, cb) = match (wp.position(a), wp.position(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(ObserveError::MissingCoupling(a, b)),
    };
    let g = basis.coupling_g(0, 2, 0, 0, 0);
    let dens: Vec<f64> = (0..grid.len())
        .map(|i| wp.radial_weight(grid, ca, i).norm_sqr() + wp.radial_weight(grid, cb, i).norm_sqr())
        .collect();
    let dmax = dens.iter().cloned().fold(0.0, f64::max);
    Ok((0..grid.len())
        .map(|i| {
            if !(dens[i] > floor * dmax && dens[i] > 0.0) {
                return f64::NAN;
            }
            let (f0, f2) = (wp.radial_weight(grid, ca, i), wp.radial_weight(grid, cb, i));
            1.0 / 3.0 + 4.0 / 3.0 * g * f0.norm() * f2.norm() * (f2.arg() - f0.arg()).cos() / dens[i]
        })
        .collect())
}

/// Packet amplitudes at arbitrary (ρ, θ, φ), with F interpolated cubically in
/// ρ (zero at the Dirichlet ends) and P tabulated on a fine θ mesh.
pub struct PacketField {
    rho: Vec<f64>,
    f: Vec<Vec<C64>>,
    channels: Vec<ChannelIndex>,
    pub jm: Vec<(u32, i32)>,
    chan_rows: Vec<Vec<usize>>,
    table: Vec<Vec<Vec<f64>>>,
    dtheta: f64,
}

const THETA_TABLE: usize = 2048;

impl PacketField {
    pub fn new(wp: &WavePacket, basis: &ChannelBasis, grid: &RadialGrid) -> Self {
        let mut rho = vec![grid.rho_min()];
        rho.extend_from_slice(grid.nodes());
        rho.push(grid.rho_max());
        let f = (0..wp.channels.len())
            .map(|c| {
                let mut col = vec![C64::new(0.0, 0.0)];
                col.extend((0..grid.len()).map(|i| wp.radial_weight(grid, c, i)));
                col.push(C64::new(0.0, 0.0));
                col
            })
            .collect();
        let jm = jm_list(&wp.channels);
        let pos: BTreeMap<(u32, i32), usize> = jm.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let dtheta = FRAC_PI_4 / THETA_TABLE as f64;
        let coefs: Vec<Vec<f64>> =
            (0..=THETA_TABLE).map(|t| basis.grid.interpolation_coefficients(t as f64 * dtheta)).collect();
        let mut chan_rows = Vec::new();
        let mut table = Vec::new();
        for idx in &wp.channels {
            let pair = basis.eigenpair(*idx).expect("packet channel solved in basis");
            let ms: Vec<i32> = (-(idx.j as i32)..=idx.j as i32).step_by(2).collect();
            chan_rows.push(ms.iter().map(|&m| pos[&(idx.j, m)]).collect());
            table.push(
                pair.components
                    .iter()
                    .map(|comp| coefs.iter().map(|c| c.iter().zip(comp).map(|(a, b)| a * b).sum()).collect())
                    .collect(),
            );
        }
        Self { rho, f, channels: wp.channels.clone(), jm, chan_rows, table, dtheta }
    }

    pub fn rho_range(&self) -> (f64, f64) {
        (self.rho[0], *self.rho.last().unwrap())
    }

    fn theta_stencil(&self, theta: f64) -> (usize, [f64; 4]) {
        let t = (theta / self.dtheta).clamp(0.0, THETA_TABLE as f64);
        let s = (t.floor() as usize).saturating_sub(1).min(THETA_TABLE - 3);
        let u = t - s as f64;
        let w = [
            -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
            u * (u - 2.0) * (u - 3.0) / 2.0,
            -u * (u - 1.0) * (u - 3.0) / 2.0,
            u * (u - 1.0) * (u - 2.0) / 6.0,
        ];
        (s, w)
    }

    /// a_{JM}(ρ, θ, φ) in the order of `jm`; zero outside the radial box.
    pub fn amplitudes(&self, rho: f64, theta: f64, phi: f64, out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let (lo, hi) = self.rho_range();
        if rho <= lo || rho >= hi {
            return;
        }
        let (rs, rw) = lagrange4(&self.rho, rho);
        let (ts, tw) = self.theta_stencil(theta);
        let norm = (3.0 / PI).sqrt();
        for (c, idx) in self.channels.iter().enumerate() {
            let col = &self.f[c];
            let f: C64 = (0..4).map(|a| col[rs + a] * rw[a]).sum();
            if f.norm_sqr() == 0.0 {
                continue;
            }
            let e = f * C64::from_polar(norm, idx.m as f64 * phi);
            for (mi, &row) in self.chan_rows[c].iter().enumerate() {
                let tab = &self.table[c][mi];
                let p: f64 = (0..4).map(|a| tab[ts + a] * tw[a]).sum();
                out[row] += e * p;
            }
        }
    }

    /// Orientation-integrated density Σ|a_{JM}|² (no volume weight).
    pub fn shape_density(&self, rho: f64, theta: f64, phi: f64, buf: &mut [C64]) -> f64 {
        self.amplitudes(rho, theta, phi, buf);
        buf.iter().map(|z| z.norm_sqr()).sum()
    }

    /// |Ψ|² at a full configuration (no volume weight).
    pub fn density(&self, rho: f64, theta: f64, phi: f64, cos_beta: f64, gamma: f64, buf: &mut [C64]) -> f64 {
        self.amplitudes(rho, theta, phi, buf);
        let jmax = self.jm.iter().map(|v| v.0).max().unwrap_or(0);
        let beta = cos_beta.clamp(-1.0, 1.0).acos();
        let mut psi = C64::new(0.0, 0.0);
        let mut cache: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for (k, &(j, m)) in self.jm.iter().enumerate() {
            if buf[k].norm_sqr() == 0.0 {
                continue;
            }
            let col = cache.entry(m).or_insert_with(|| small_d_column(jmax, m, 0, beta));
            let pre = ((2 * j + 1) as f64 / (8.0 * PI * PI)).sqrt();
            psi += buf[k] * C64::from_polar(pre * col[j as usize], m as f64 * gamma);
        }
        psi.norm_sqr() * 2.0 * PI
    }
}

/// Target densities for the Metropolis sampler. Coordinates are
/// (ρ, θ, φ[, cos β, γ]).
pub trait Density: Sync {
    fn dims(&self) -> usize;
    fn rho_range(&self) -> (f64, f64);
    /// Density including the volume weight.
    fn eval(&self, x: &[f64; 5], buf: &mut Vec<C64>) -> f64;
}

/// |Ψ|² ρ⁵ sin(4θ)/4, either over shape space only (orientation integrated)
/// or over shape and orientation.
pub struct PacketDensity<'a> {
    pub field: &'a PacketField,
    pub with_orientation: bool,
}

impl Density for PacketDensity<'_> {
    fn dims(&self) -> usize {
        if self.with_orientation {
            5
        } else {
            3
        }
    }

    fn rho_range(&self) -> (f64, f64) {
        self.field.rho_range()
    }

    fn eval(&self, x: &[f64; 5], buf: &mut Vec<C64>) -> f64 {
        buf.resize(self.field.jm.len(), C64::new(0.0, 0.0));
        let vol = HyperPoint::raw(x[0], x[1], x[2]).volume_weight();
        if vol <= 0.0 {
            return 0.0;
        }
        let d = if self.with_orientation {
            self.field.density(x[0], x[1], x[2], x[3], x[4], buf)
        } else {
            self.field.shape_density(x[0], x[1], x[2], buf)
        };
        d * vol
    }
}

/// Uniform density on the coordinate box (sampler calibration).
pub struct UniformBox {
    pub rho: (f64, f64),
    pub dims: usize,
}

impl Density for UniformBox {
    fn dims(&self) -> usize {
        self.dims
    }
    fn rho_range(&self) -> (f64, f64) {
        self.rho
    }
    fn eval(&self, _x: &[f64; 5], _buf: &mut Vec<C64>) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub samples: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub seed: u64,
    pub stream: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 1_000_000, burn_in: 10_000, chains: 4, seed: 1, stream: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct McSamplerState {
    pub point: [f64; 5],
    pub steps: [f64; 5],
    pub accepted: u64,
    pub proposed: u64,
    pub seed: u64,
    pub stream: u64,
}

impl McSamplerState {
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct McSamples {
    /// (ρ, θ, φ, cos β, γ); orientation entries are zero for shape-only runs.
    pub points: Vec<[f64; 5]>,
    pub chains: Vec<McSamplerState>,
    pub acceptance: f64,
    /// Integrated autocorrelation time of ρ (in steps).
    pub tau_int: f64,
}

fn wrap(x: f64, period: f64) -> f64 {
    x.rem_euclid(period)
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    x = lo + wrap(x - lo, 2.0 * span);
    if x > hi {
        2.0 * hi - x
    } else {
        x
    }
}

fn propose(d: &dyn Density, x: &[f64; 5], steps: &[f64; 5], rng: &mut ChaCha20Rng) -> Option<[f64; 5]> {
    let mut y = *x;
    for k in 0..d.dims() {
        y[k] += steps[k] * (2.0 * rng.random::<f64>() - 1.0);
    }
    let (lo, hi) = d.rho_range();
    if y[0] <= lo || y[0] >= hi {
        return None;
    }
    y[1] = reflect(y[1], 0.0, FRAC_PI_4);
    y[2] = wrap(y[2], FRAC_PI_3);
    if d.dims() == 5 {
        y[3] = reflect(y[3], -1.0, 1.0);
        y[4] = wrap(y[4], 2.0 * PI);
    }
    Some(y)
}

/// Start point of largest density on a coarse deterministic scan.
pub fn scan_start(d: &dyn Density) -> [f64; 5] {
    let (lo, hi) = d.rho_range();
    let mut buf = Vec::new();
    let mut best = ([0.5 * (lo + hi), FRAC_PI_8, FRAC_PI_3 / 2.0, 0.1, 0.3], -1.0);
    for a in 1..64 {
        let rho = lo + (hi - lo) * (a as f64 / 64.0).powi(2);
        for b in 1..8 {
            for c in 0..6 {
                let x = [rho, FRAC_PI_4 * b as f64 / 8.0, FRAC_PI_3 * (c as f64 + 0.5) / 6.0, 0.1, 0.3];
                let v = d.eval(&x, &mut buf);
                if v > best.1 {
                    best = (x, v);
                }
            }
        }
    }
    best.0
}

fn run_chain(d: &dyn Density, n: usize, burn_in: usize, state: &mut McSamplerState) -> Result<Vec<[f64; 5]>, ObserveError> {
    let mut rng = ChaCha20Rng::seed_from_u64(state.seed);
    rng.set_stream(state.stream);
    let mut buf = Vec::new();
    let mut x = state.point;
    let mut px = d.eval(&x, &mut buf);
    if !(px > 0.0) {
        return Err(ObserveError::ZeroDensityStart);
    }
    let mut window = (0u64, 0u64);
    for step in 0..burn_in {
        window.1 += 1;
        if let Some(y) = propose(d, &x, &state.steps, &mut rng) {
            let py = d.eval(&y, &mut buf);
            if py >= px || rng.random::<f64>() * px < py {
                x = y;
                px = py;
                window.0 += 1;
            }
        }
        if (step + 1) % 500 == 0 {
            let acc = window.0 as f64 / window.1 as f64;
            let f = if acc < 0.3 {
                0.7
            } else if acc > 0.5 {
                1.3
            } else {
                1.0
            };
            state.steps.iter_mut().for_each(|s| *s *= f);
            state.steps[1] = state.steps[1].min(FRAC_PI_4);
            state.steps[2] = state.steps[2].min(FRAC_PI_3);
            state.steps[3] = state.steps[3].min(2.0);
            state.steps[4] = state.steps[4].min(2.0 * PI);
            window = (0, 0);
        }
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        state.proposed += 1;
        if let Some(y) = propose(d, &x, &state.steps, &mut rng) {
            let py = d.eval(&y, &mut buf);
            if py >= px || rng.random::<f64>() * px < py {
                x = y;
                px = py;
                state.accepted += 1;
            }
        }
        out.push(x);
    }
    state.point = x;
    Ok(out)
}

/// Metropolis sampling of `d` with independent chains (one RNG stream each);
/// results are concatenated in chain order.
pub fn mc_sample(d: &dyn Density, cfg: &McConfig, start: Option<[f64; 5]>) -> Result<McSamples, ObserveError> {
    if cfg.samples == 0 || cfg.chains == 0 {
        return Err(ObserveError::BadRequest("samples and chains must be positive".into()));
    }
    let x0 = start.unwrap_or_else(|| scan_start(d));
    let (lo, hi) = d.rho_range();
    let steps = [0.1 * (hi - lo), 0.2, 0.3, 0.5, 1.0];
    let per = cfg.samples.div_ceil(cfg.chains);
    let results: Vec<Result<(Vec<[f64; 5]>, McSamplerState), ObserveError>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut st = McSamplerState { point: x0, steps, accepted: 0, proposed: 0, seed: cfg.seed, stream: cfg.stream + c as u64 };
            let n = per.min(cfg.samples - (c * per).min(cfg.samples));
            run_chain(d, n, cfg.burn_in, &mut st).map(|v| (v, st))
        })
        .collect();
    let mut points = Vec::with_capacity(cfg.samples);
    let mut chains = Vec::new();
    for r in results {
        let (v, st) = r?;
        points.extend(v);
        chains.push(st);
    }
    let acc = chains.iter().map(|c| c.accepted).sum::<u64>() as f64 / chains.iter().map(|c| c.proposed).sum::<u64>().max(1) as f64;
    let rhos: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let (_, err) = batch_mean(&rhos);
    let var = variance(&rhos);
    let tau_int = if var > 0.0 { err * err * rhos.len() as f64 / var } else { 1.0 };
    Ok(McSamples { points, chains, acceptance: acc, tau_int })
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
}

/// Mean and batch-means standard error (32 batches).
pub fn batch_mean(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n.max(1) as f64;
    let nb = 32.min(n);
    if nb < 2 {
        return (mean, f64::NAN);
    }
    let size = n / nb;
    let means: Vec<f64> = (0..nb).map(|b| v[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    (mean, (variance(&means) / nb as f64).sqrt())
}

/// Default histogram edges: `bins` uniform bins over the data range padded by 1%.
pub fn auto_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.01 * (hi - lo).max(1e-12);
    let (a, b) = (lo - pad, hi + pad);
    (0..=bins).map(|k| a + (b - a) * k as f64 / bins as f64).collect()
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let k = edges.partition_point(|&e| e <= x);
    (k >= 1 && k < edges.len()).then(|| k - 1)
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub mean: f64,
    pub err: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PairCorrelators {
    pub r_min: Estimate,
    pub r_ave: Estimate,
    pub r_max: Estimate,
}

pub fn pair_correlators(samples: &McSamples) -> PairCorrelators {
    let g: Vec<_> = samples.points.iter().map(|p| to_distances(HyperPoint::raw(p[0], p[1], p[2]))).collect();
    let est = |f: &dyn Fn(&crate::hypergeom::TriangleGeometry) -> f64| {
        let v: Vec<f64> = g.iter().map(f).collect();
        let (mean, err) = batch_mean(&v);
        Estimate { mean, err }
    };
    PairCorrelators { r_min: est(&|t| t.min()), r_ave: est(&|t| t.mean()), r_max: est(&|t| t.max()) }
}

/// Total KER histogram and its split; each piece is normalized with the
/// total sample count so the pieces add up to the total (up to the terms
/// that involve the excited bound state).
#[derive(Debug, Clone)]
pub struct KerSplit {
    pub edges: Vec<f64>,
    pub total: Vec<f64>,
    pub ground: Vec<f64>,
    pub scatt0: Vec<f64>,
    pub higher_j: Vec<f64>,
    pub cross: Vec<f64>,
    pub clipped: f64,
}

/// KER distribution from shape-space samples of `packet`; `ground` and
/// optional `excited` define the bound-state split of the J = 0 part.
pub fn ker_distribution(
    samples: &McSamples,
    packet: &WavePacket,
    field: &PacketField,
    ground: (&StationaryState, &PacketField),
    excited: Option<(&StationaryState, &PacketField)>,
    edges: &[f64],
) -> Result<KerSplit, ObserveError> {
    if edges.windows(2).any(|w| w[1] <= w[0]) || edges.len() < 2 {
        return Err(ObserveError::BadRequest("bin edges must increase".into()));
    }
    let nb = edges.len() - 1;
    let cg = overlap_packets(&ground.0.packet, packet);
    let ce = excited.map(|(s, _)| overlap_packets(&s.packet, packet));
    let zero = field.jm.iter().position(|&v| v == (0, 0));
    let n = samples.points.len() as f64;
    let mut h = vec![vec![0.0; nb]; 5];
    let mut clipped = 0.0;
    let (mut a, mut bg, mut be) = (Vec::new(), vec![C64::new(0.0, 0.0); 1], vec![C64::new(0.0, 0.0); 1]);
    a.resize(field.jm.len(), C64::new(0.0, 0.0));
    for p in &samples.points {
        let k = ker(HyperPoint::raw(p[0], p[1], p[2]));
        let Some(b) = bin_of(edges, k) else {
            clipped += 1.0;
            continue;
        };
        let d = field.shape_density(p[0], p[1], p[2], &mut a);
        if d <= 0.0 {
            continue;
        }
        let a00 = zero.map_or(C64::new(0.0, 0.0), |z| a[z]);
        ground.1.amplitudes(p[0], p[1], p[2], &mut bg);
        let g = cg * bg[0];
        let e = match (excited, ce) {
            (Some((_, f)), Some(c)) => {
                f.amplitudes(p[0], p[1], p[2], &mut be);
                c * be[0]
            }
            _ => C64::new(0.0, 0.0),
        };
        let scatt = a00 - g - e;
        let w = edges[b + 1] - edges[b];
        let inc = 1.0 / (n * w);
        h[0][b] += inc;
        h[1][b] += inc * g.norm_sqr() / d;
        h[2][b] += inc * scatt.norm_sqr() / d;
        h[3][b] += inc * (d - a00.norm_sqr()) / d;
        h[4][b] += inc * 2.0 * (g.conj() * scatt).re / d;
    }
    let frac = clipped / n;
    if frac > 1e-4 {
        return Err(ObserveError::BinningClipped(frac));
    }
    let [total, ground, scatt0, higher_j, cross]: [Vec<f64>; 5] = h.try_into().unwrap();
    Ok(KerSplit { edges: edges.to_vec(), total, ground, scatt0, higher_j, cross, clipped: frac })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSelect {
    Ave,
    Min,
    Max,
}

/// Conditional ⟨cos²ϑ⟩ at pair distance r from orientation-resolved samples;
/// empty bins are NaN.
pub fn alignment_r(samples: &McSamples, which: PairSelect, edges: &[f64]) -> Result<Vec<f64>, ObserveError> {
    let nb = edges.len().saturating_sub(1);
    let (mut sum, mut cnt) = (vec![0.0; nb], vec![0.0; nb]);
    for p in &samples.points {
        let hp = HyperPoint::raw(p[0], p[1], p[2]);
        let ang = EulerAngles::beta_gamma(p[3].clamp(-1.0, 1.0).acos(), p[4]);
        let r = to_distances(hp).as_array();
        let c = lab_angles(hp, ang).map_err(|e| ObserveError::BadRequest(e.to_string()))?;
        let picks: Vec<usize> = match which {
            PairSelect::Ave => vec![0, 1, 2],
            PairSelect::Min => vec![(0..3).min_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap()],
            PairSelect::Max => vec![(0..3).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap()],
        };
        for k in picks {
            if let Some(b) = bin_of(edges, r[k]) {
                sum[b] += c[k] * c[k];
                cnt[b] += 1.0;
            }
        }
    }
    Ok(sum.iter().zip(&cnt).map(|(s, c)| if *c > 0.0 { s / c } else { f64::NAN }).collect())
}

/// Atom-position histogram in the principal frame (axes 1 and 2), peak
/// normalized and saturated at `saturation` (values ≥ saturation·peak map to 1).
pub fn frame_snapshot(samples: &McSamples, x_edges: &[f64], y_edges: &[f64], saturation: f64) -> Vec<Vec<f64>> {
    let (nx, ny) = (x_edges.len() - 1, y_edges.len() - 1);
    let mut h = vec![vec![0.0; ny]; nx];
    for p in &samples.points {
        let Ok(frame) = principal_frame(&to_distances(HyperPoint::raw(p[0], p[1], p[2]))) else {
            continue;
        };
        for atom in frame.positions {
            if let (Some(i), Some(j)) = (bin_of(x_edges, atom[0]), bin_of(y_edges, atom[1])) {
                h[i][j] += 1.0;
            }
        }
    }
    let peak = h.iter().flatten().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        let cap = saturation * peak;
        h.iter_mut().flatten().for_each(|v| *v = (*v / cap).min(1.0));
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordData {
    Series { x: Vec<f64>, values: Vec<f64>, errors: Option<Vec<f64>> },
    Histogram { edges: Vec<f64>, columns: Vec<(String, Vec<f64>)>, errors: Option<Vec<f64>> },
    Heatmap { x: Vec<f64>, y: Vec<f64>, values: Vec<Vec<f64>> },
}

/// Columnar observable record.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub observable: String,
    pub scope: String,
    pub time: Option<f64>,
    pub seed: Option<u64>,
    pub x_label: String,
    pub y_label: String,
    pub data: RecordData,
}

impl ObservationRecord {
    pub fn kind(&self) -> &'static str {
        match self.data {
            RecordData::Series { .. } => "series",
            RecordData::Histogram { .. } => "histogram",
            RecordData::Heatmap { .. } => "heatmap",
        }
    }

    /// Edges increase and the first histogram column integrates to `norm`.
    pub fn validate(&self, norm: Option<f64>, tol: f64) -> Result<(), ObserveError> {
        if let RecordData::Histogram { edges, columns, .. } = &self.data {
            if edges.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ObserveError::BadRequest("bin edges not increasing".into()));
            }
            if let (Some(n), Some((_, v))) = (norm, columns.first()) {
                let integral: f64 = v.iter().zip(edges.windows(2)).map(|(x, w)| x * (w[1] - w[0])).sum();
                if (integral - n).abs() > tol {
                    return Err(ObserveError::BadRequest(format!("integral {integral} != {n}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# observable: {}", self.observable);
        let _ = writeln!(s, "# kind: {}", self.kind());
        let _ = writeln!(s, "# scope: {}", self.scope);
        if let Some(t) = self.time {
            let _ = writeln!(s, "# time_au: {t:.10e}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed: {seed}");
        }
        let _ = writeln!(s, "# x: {}", self.x_label);
        let _ = writeln!(s, "# y: {}", self.y_label);
        match &self.data {
            RecordData::Series { x, values, errors } => {
                let _ = writeln!(s, "# columns: x value{}", if errors.is_some() { " error" } else { "" });
                for (k, (a, b)) in x.iter().zip(values).enumerate() {
                    let _ = match errors {
                        Some(e) => writeln!(s, "{a:.10e} {b:.10e} {:.4e}", e[k]),
                        None => writeln!(s, "{a:.10e} {b:.10e}"),
                    };
                }
            }
            RecordData::Histogram { edges, columns, errors } => {
                let names: Vec<&str> = columns.iter().map(|c| c.0.as_str()).collect();
                let _ = writeln!(s, "# bins: {}", edges.len() - 1);
                let _ = writeln!(s, "# columns: lo hi {}{}", names.join(" "), if errors.is_some() { " error" } else { "" });
                for b in 0..edges.len() - 1 {
                    let _ = write!(s, "{:.10e} {:.10e}", edges[b], edges[b + 1]);
                    for c in columns {
                        let _ = write!(s, " {:.10e}", c.1[b]);
                    }
                    if let Some(e) = errors {
                        let _ = write!(s, " {:.4e}", e[b]);
                    }
                    s.push('\n');
                }
            }
            RecordData::Heatmap { x, y, values } => {
                let _ = writeln!(s, "# columns: x y value");
                for (i, a) in x.iter().enumerate() {
                    for (j, b) in y.iter().enumerate() {
                        let _ = writeln!(s, "{a:.10e} {b:.10e} {:.10e}", values[i][j]);
                    }
                }
            }
        }
        s
    }
}
