//! Coupled hyperradial Hamiltonian and Chebyshev propagation in real and
//! imaginary time.
//!
//! Wave packets store ψ_{c,i} = √(h J_i) ρ_i^{5/2} F_c(ρ_i), which turns the
//! radial operator into a real symmetric matrix:
//!   H = (1/2M)[−J⁻¹D₂J⁻¹ + V_map + (15/4 − Ē_c)/ρ²] δ_cc' + W_cc'(ρ).

use crate::chanbasis::{ChannelBasis, ChannelIndex, WTable};
use crate::container::{Container, ContainerError};
use crate::numerics::{bessel_i_scaled_sequence, bessel_j_sequence};
use crate::radial::{RadialGrid, Stencil};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

type C64 = Complex64;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("grid or channel layout mismatch: {0}")]
    GridMismatch(String),
    #[error("Chebyshev recursion ran away (spectral bounds violated)")]
    SpectralBoundsViolated,
    #[error("imaginary-time propagation did not converge: {0}")]
    NoConvergence(String),
    #[error("deflated state keeps overlap {0:.3e} with the deflation set")]
    DeflationFailure(f64),
    #[error("invalid propagation parameter: {0}")]
    BadConfig(String),
    #[error("checkpoint i/o failed: {0}")]
    CheckpointIoFailure(#[from] ContainerError),
}

/// Complex hyperradial weights over a channel set (symmetric representation).
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    pub channels: Vec<ChannelIndex>,
    pub n_rho: usize,
    pub data: Vec<C64>,
    pub time: f64,
}

impl WavePacket {
    pub fn zeros(channels: Vec<ChannelIndex>, n_rho: usize) -> Self {
        let len = channels.len() * n_rho;
        Self { channels, n_rho, data: vec![C64::new(0.0, 0.0); len], time: 0.0 }
    }

    pub fn channel(&self, c: usize) -> &[C64] {
        &self.data[c * self.n_rho..(c + 1) * self.n_rho]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.data[c * self.n_rho..(c + 1) * self.n_rho]
    }

    pub fn position(&self, idx: ChannelIndex) -> Option<usize> {
        self.channels.iter().position(|&c| c == idx)
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            self.data.iter_mut().for_each(|z| *z /= n);
        }
        n
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// Σ_{m,n} ∫|F^(J)_{m,n}|²ρ⁵dρ per J.
    pub fn j_populations(&self) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for (c, idx) in self.channels.iter().enumerate() {
            *out.entry(idx.j).or_insert(0.0) += self.channel(c).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        out
    }

    pub fn j_population(&self, j: u32) -> f64 {
        self.j_populations().get(&j).copied().unwrap_or(0.0)
    }

    /// F_c(ρ_i) from the stored sample.
    pub fn radial_weight(&self, grid: &RadialGrid, c: usize, i: usize) -> C64 {
        self.channel(c)[i] / (grid.sqrt_weight(i) * grid.nodes()[i].powf(2.5))
    }

    /// Copy restricted to the channels of one J (other J zeroed).
    pub fn restrict_to_j(&self, j: u32) -> Self {
        let mut out = self.clone();
        for (c, idx) in self.channels.iter().enumerate() {
            if idx.j != j {
                out.channel_mut(c).iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            }
        }
        out
    }

    pub fn to_container(&self) -> Container {
        let mut header = vec![self.n_rho as i64, self.channels.len() as i64, self.time.to_bits() as i64];
        for c in &self.channels {
            header.extend([c.j as i64, c.m as i64, c.n as i64]);
        }
        let block = self.data.iter().flat_map(|z| [z.re, z.im]).collect();
        Container::new("wave-packet", header, vec![block])
    }

    pub fn from_container(c: &Container) -> Result<Self, EvolveError> {
        let bad = || EvolveError::GridMismatch("malformed wave-packet container".into());
        if c.kind != "wave-packet" || c.header.len() < 3 || c.blocks.len() != 1 {
            return Err(bad());
        }
        let n_rho = c.header[0] as usize;
        let nc = c.header[1] as usize;
        let time = f64::from_bits(c.header[2] as u64);
        if c.header.len() != 3 + 3 * nc || c.blocks[0].len() != 2 * nc * n_rho {
            return Err(bad());
        }
        let channels = c.header[3..]
            .chunks(3)
            .map(|t| ChannelIndex { j: t[0] as u32, m: t[1] as i32, n: t[2] as usize })
            .collect();
        let data = c.blocks[0].chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        Ok(Self { channels, n_rho, data, time })
    }
}

/// Which operator terms are active (toy models switch some off).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terms {
    pub kinetic: bool,
    pub centrifugal: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Self { kinetic: true, centrifugal: true }
    }
}

/// One J block: its channels, Ē values and W(ρ_i) matrices.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub j: u32,
    pub channels: Vec<ChannelIndex>,
    pub ebar: Vec<f64>,
    pub w: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
struct Block {
    offset: usize,
    dim: usize,
    /// n_rho × dim × dim, row-major per node.
    w: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CoupledHamiltonian {
    grid: RadialGrid,
    mass: f64,
    channels: Vec<ChannelIndex>,
    kinetic: Stencil,
    diag: Vec<Vec<f64>>,
    blocks: Vec<Block>,
    block_of: Vec<usize>,
    bounds: (f64, f64),
}

impl CoupledHamiltonian {
    pub fn from_parts(grid: RadialGrid, mass: f64, specs: Vec<BlockSpec>, terms: Terms) -> Result<Self, EvolveError> {
        let nr = grid.len();
        let lap = grid.laplacian();
        let kinetic = if terms.kinetic {
            lap.scaled(0.5 / mass)
        } else {
            lap.scaled(0.0)
        };
        let mut channels = Vec::new();
        let mut diag = Vec::new();
        let mut blocks = Vec::new();
        let mut block_of = Vec::new();
        for (b, spec) in specs.into_iter().enumerate() {
            let dim = spec.channels.len();
            if spec.ebar.len() != dim || spec.w.len() != nr || spec.w.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
                return Err(EvolveError::GridMismatch(format!("block J={} has inconsistent shapes", spec.j)));
            }
            let offset = channels.len();
            for (k, &e) in spec.ebar.iter().enumerate() {
                let d: Vec<f64> = (0..nr)
                    .map(|i| {
                        let rho = grid.nodes()[i];
                        let cent = if terms.centrifugal { (3.75 - e) / (2.0 * mass * rho * rho) } else { 0.0 };
                        kinetic.diag[i] + cent
                    })
                    .collect();
                diag.push(d);
                channels.push(spec.channels[k]);
                block_of.push(b);
            }
            let mut w = Vec::with_capacity(nr * dim * dim);
            for m in &spec.w {
                for r in 0..dim {
                    for c in 0..dim {
                        w.push(0.5 * (m[(r, c)] + m[(c, r)]));
                    }
                }
            }
            blocks.push(Block { offset, dim, w });
        }
        let mut h = Self { grid, mass, channels, kinetic, diag, blocks, block_of, bounds: (0.0, 0.0) };
        h.bounds = h.refined_bounds();
        Ok(h)
    }

    /// Hamiltonian over all channels of the given W tables.
    pub fn from_basis(grid: RadialGrid, mass: f64, basis: &ChannelBasis, tables: &[&WTable]) -> Result<Self, EvolveError> {
        let mut specs = Vec::new();
        for t in tables {
            if t.rho.len() != grid.len() || t.rho.iter().zip(grid.nodes()).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs()) {
                return Err(EvolveError::GridMismatch(format!("W table for J={} sampled on other nodes", t.j)));
            }
            let ebar = t
                .channels
                .iter()
                .map(|&c| basis.eigenvalue(c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EvolveError::GridMismatch(e.to_string()))?;
            specs.push(BlockSpec { j: t.j, channels: t.channels.clone(), ebar, w: t.blocks.clone() });
        }
        Self::from_parts(grid, mass, specs, Terms::default())
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn channels(&self) -> &[ChannelIndex] {
        &self.channels
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn set_bounds(&mut self, lo: f64, hi: f64) {
        self.bounds = (lo, hi);
    }

    pub fn dim(&self) -> usize {
        self.channels.len() * self.grid.len()
    }

    pub fn empty_packet(&self) -> WavePacket {
        WavePacket::zeros(self.channels.clone(), self.grid.len())
    }

    fn check(&self, wp: &WavePacket) -> Result<(), EvolveError> {
        if wp.n_rho != self.grid.len() || wp.channels != self.channels {
            return Err(EvolveError::GridMismatch(format!(
                "packet has {} channels × {} nodes, Hamiltonian {} × {}",
                wp.channels.len(),
                wp.n_rho,
                self.channels.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    /// out = H x.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        let nr = self.grid.len();
        out.par_chunks_mut(nr).enumerate().for_each(|(c, row)| {
            let xc = &x[c * nr..(c + 1) * nr];
            let d = &self.diag[c];
            let blk = &self.blocks[self.block_of[c]];
            let a = c - blk.offset;
            let dim = blk.dim;
            for i in 0..nr {
                let mut acc = self.kinetic.apply_row(xc, i) + xc[i] * (d[i] - self.kinetic.diag[i]);
                let wrow = &blk.w[(i * dim + a) * dim..(i * dim + a + 1) * dim];
                for (b, &wv) in wrow.iter().enumerate() {
                    acc += x[(blk.offset + b) * nr + i] * wv;
                }
                row[i] = acc;
            }
        });
    }

    pub fn apply_h(&self, wp: &WavePacket) -> Result<WavePacket, EvolveError> {
        self.check(wp)?;
        let mut out = wp.clone();
        self.apply(&wp.data, &mut out.data);
        Ok(out)
    }

    /// ⟨ψ|H|ψ⟩/⟨ψ|ψ⟩.
    pub fn energy(&self, wp: &WavePacket) -> Result<f64, EvolveError> {
        let hw = self.apply_h(wp)?;
        Ok(wp.inner(&hw).re / wp.norm_sq())
    }

    /// Dense real matrix (small systems only).
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        let mut out = vec![C64::new(0.0, 0.0); n];
        for col in 0..n {
            e[col] = C64::new(1.0, 0.0);
            self.apply(&e, &mut out);
            for (r, v) in out.iter().enumerate() {
                m[(r, col)] = v.re;
            }
            e[col] = C64::new(0.0, 0.0);
        }
        m
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let nr = self.grid.len();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in 0..self.channels.len() {
            let blk = &self.blocks[self.block_of[c]];
            let a = c - blk.offset;
            for i in 0..nr {
                let wrow = &blk.w[(i * blk.dim + a) * blk.dim..(i * blk.dim + a + 1) * blk.dim];
                let centre = self.diag[c][i] + wrow[a];
                let radius = self.kinetic.row_radius(i)
                    + wrow.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, v)| v.abs()).sum::<f64>();
                lo = lo.min(centre - radius);
                hi = hi.max(centre + radius);
            }
        }
        (lo, hi)
    }

    /// Gershgorin interval refined by 20 power iterations plus a 5% margin,
    /// clipped to the Gershgorin interval.
    pub fn refined_bounds(&self) -> (f64, f64) {
        let (glo, ghi) = self.gershgorin();
        let n = self.dim();
        if n == 0 || !(ghi > glo) {
            return (glo - 1e-12, ghi + 1e-12);
        }
        let start: Vec<C64> = (0..n).map(|k| C64::new(((k as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5, 0.0)).collect();
        let extreme = |shift: f64, sign: f64| -> f64 {
            let mut v = start.clone();
            let mut hv = vec![C64::new(0.0, 0.0); n];
            let mut est = 0.0;
            for _ in 0..20 {
                let nv: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.iter_mut().for_each(|z| *z /= nv);
                self.apply(&v, &mut hv);
                est = v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
                for (a, b) in v.iter_mut().zip(&hv) {
                    *a = (*b - *a * shift) * sign;
                }
            }
            est
        };
        let top = extreme(glo, 1.0);
        let bottom = extreme(ghi, -1.0);
        let (lo, hi) = (bottom.min(top), bottom.max(top));
        let margin = 0.05 * (hi - lo).max(1e-300);
        ((lo - margin).max(glo), (hi + margin).min(ghi))
    }
}

/// Time-stepping parameters (atomic units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub dt: f64,
    pub max_order: usize,
    pub cutoff: f64,
    pub checkpoint_every: f64,
    pub total_time: f64,
    /// Fraction of the outer grid covered by an absorbing mask (0 disables).
    pub mask_fraction: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { dt: 2.0, max_order: 30, cutoff: 1e-14, checkpoint_every: 1000.0, total_time: 1000.0, mask_fraction: 0.0 }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if !(self.dt > 0.0) {
            return Err(EvolveError::BadConfig(format!("dt={}", self.dt)));
        }
        if !(self.cutoff > 0.0 && self.cutoff <= 1e-8) {
            return Err(EvolveError::BadConfig(format!("cutoff={}", self.cutoff)));
        }
        if self.max_order < 2 {
            return Err(EvolveError::BadConfig(format!("max_order={}", self.max_order)));
        }
        if !(self.checkpoint_every > 0.0) || !(self.total_time >= 0.0) {
            return Err(EvolveError::BadConfig("checkpoint cadence and total time must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return Err(EvolveError::BadConfig(format!("mask_fraction={}", self.mask_fraction)));
        }
        Ok(())
    }
}

/// Coefficients of e^{−iH dt} in T_k((H−c)/R), truncated below `cutoff`.
fn real_time_coefficients(z: f64, sign: f64, cutoff: f64) -> Vec<C64> {
    let kmax = (z + 30.0 + 10.0 * z.cbrt()).ceil() as usize;
    let j = bessel_j_sequence(z, kmax);
    let last = j.iter().rposition(|v| v.abs() > cutoff).unwrap_or(0);
    let mi = C64::new(0.0, -sign);
    let mut pow = C64::new(1.0, 0.0);
    (0..=last)
        .map(|k| {
            let a = pow * j[k] * if k == 0 { 1.0 } else { 2.0 };
            pow *= mi;
            a
        })
        .collect()
}

/// Σ a_k T_k(Hn) x with Hn = (H − centre)/half, checking for runaway norms.
fn chebyshev_sum(h: &CoupledHamiltonian, x: &[C64], coef: &[C64], centre: f64, half: f64) -> Result<Vec<C64>, EvolveError> {
    let n = x.len();
    let norm0: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let limit = norm0 * (1.0 + 1e-6f64).powi(2) + 1e-300;
    let hn = |v: &[C64], out: &mut [C64]| {
        h.apply(v, out);
        for (o, a) in out.iter_mut().zip(v) {
            *o = (*o - *a * centre) / half;
        }
    };
    let mut acc: Vec<C64> = x.iter().map(|&v| v * coef[0]).collect();
    if coef.len() == 1 {
        return Ok(acc);
    }
    let mut prev = x.to_vec();
    let mut cur = vec![C64::new(0.0, 0.0); n];
    hn(&prev, &mut cur);
    let mut next = vec![C64::new(0.0, 0.0); n];
    for (k, &a) in coef.iter().enumerate().skip(1) {
        if k > 1 {
            hn(&cur, &mut next);
            for (nx, p) in next.iter_mut().zip(&prev) {
                *nx = *nx * 2.0 - *p;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        let nrm: f64 = cur.iter().map(|z| z.norm_sqr()).sum();
        if !(nrm <= limit) {
            return Err(EvolveError::SpectralBoundsViolated);
        }
        for (o, c) in acc.iter_mut().zip(&cur) {
            *o += c * a;
        }
    }
    Ok(acc)
}

/// e^{−iH dt} ψ with automatic substepping so each sub-expansion stays within
/// `max_order` terms. Returns the number of H applications.
pub fn step_chebyshev(
    h: &CoupledHamiltonian,
    wp: &mut WavePacket,
    dt: f64,
    max_order: usize,
    cutoff: f64,
) -> Result<usize, EvolveError> {
    h.check(wp)?;
    if dt == 0.0 {
        return Ok(0);
    }
    let (lo, hi) = h.bounds;
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let sign = dt.signum();
    let mut nsub = 1usize;
    let coef = loop {
        let z = half * dt.abs() / nsub as f64;
        let c = real_time_coefficients(z, sign, cutoff);
        if c.len() <= max_order + 1 {
            break c;
        }
        nsub = (nsub as f64 * (c.len() as f64 / (max_order + 1) as f64)).ceil().max(nsub as f64 + 1.0) as usize;
    };
    let sub = dt / nsub as f64;
    let phase = C64::from_polar(1.0, -centre * sub);
    let mut work = 0;
    for _ in 0..nsub {
        let out = chebyshev_sum(h, &wp.data, &coef, centre, half)?;
        wp.data = out.into_iter().map(|z| z * phase).collect();
        work += coef.len() - 1;
    }
    wp.time += dt;
    Ok(work)
}

/// Summary of a real-time run.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport {
    pub steps: usize,
    pub h_applications: usize,
    pub norm_initial: f64,
    pub norm_final: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub j_populations_initial: BTreeMap<u32, f64>,
    pub j_populations_final: BTreeMap<u32, f64>,
    pub retries: usize,
}

impl PropagationReport {
    pub fn norm_drift(&self) -> f64 {
        (self.norm_final - self.norm_initial).abs() / self.norm_initial
    }

    pub fn energy_drift(&self) -> f64 {
        (self.energy_final - self.energy_initial).abs() / self.energy_initial.abs().max(1e-300)
    }

    pub fn max_j_population_change(&self) -> f64 {
        self.j_populations_initial
            .iter()
            .map(|(j, p)| (p - self.j_populations_final.get(j).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }
}

fn mask_profile(grid: &RadialGrid, fraction: f64) -> Option<Vec<f64>> {
    if fraction <= 0.0 {
        return None;
    }
    let n = grid.len();
    let start = ((1.0 - fraction) * n as f64) as usize;
    Some(
        (0..n)
            .map(|i| {
                if i < start {
                    1.0
                } else {
                    let s = (i - start) as f64 / (n - start) as f64;
                    (0.5 * std::f64::consts::PI * s).cos().powf(0.125)
                }
            })
            .collect(),
    )
}

/// Propagates `wp` to `cfg.total_time`, calling `observer` at the start and at
/// every checkpoint. A step that detects runaway is retried once with the
/// plain Gershgorin bounds.
pub fn propagate<F>(
    h: &CoupledHamiltonian,
    wp: &mut WavePacket,
    cfg: &PropagationConfig,
    mut observer: F,
) -> Result<PropagationReport, EvolveError>
where
    F: FnMut(&WavePacket) -> Result<(), EvolveError>,
{
    cfg.validate()?;
    h.check(wp)?;
    let norm_initial = wp.norm_sq().sqrt();
    let energy_initial = h.energy(wp)?;
    let j_populations_initial = wp.j_populations();
    let mask = mask_profile(&h.grid, cfg.mask_fraction);
    let mut safe: Option<CoupledHamiltonian> = None;
    let (mut steps, mut work, mut retries) = (0, 0, 0);
    observer(wp)?;
    let eps = 1e-9 * cfg.dt;
    let mut next_checkpoint = wp.time + cfg.checkpoint_every;
    while wp.time < cfg.total_time - eps {
        let target = next_checkpoint.min(cfg.total_time);
        let dt = cfg.dt.min(target - wp.time);
        let backup = wp.data.clone();
        let t0 = wp.time;
        match step_chebyshev(h, wp, dt, cfg.max_order, cfg.cutoff) {
            Ok(w) => work += w,
            Err(EvolveError::SpectralBoundsViolated) => {
                log::warn!("runaway Chebyshev recursion at t={t0}; retrying with Gershgorin bounds");
                retries += 1;
                wp.data = backup;
                wp.time = t0;
                let hs = safe.get_or_insert_with(|| {
                    let mut c = h.clone();
                    let (lo, hi) = c.gershgorin();
                    c.set_bounds(lo, hi);
                    c
                });
                work += step_chebyshev(hs, wp, dt, cfg.max_order, cfg.cutoff)?;
            }
            Err(e) => return Err(e),
        }
        if let Some(m) = &mask {
            let nr = wp.n_rho;
            for (k, z) in wp.data.iter_mut().enumerate() {
                *z *= m[k % nr];
            }
        }
        steps += 1;
        if (wp.time - target).abs() <= eps {
            wp.time = target;
            if target >= next_checkpoint - eps {
                observer(wp)?;
                next_checkpoint += cfg.checkpoint_every;
            }
        }
    }
    Ok(PropagationReport {
        steps,
        h_applications: work,
        norm_initial,
        norm_final: wp.norm_sq().sqrt(),
        energy_initial,
        energy_final: h.energy(wp)?,
        j_populations_initial,
        j_populations_final: wp.j_populations(),
        retries,
    })
}

/// Imaginary-time settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImaginaryConfig {
    /// Upper limit on R·Δτ per step.
    pub z_max: f64,
    /// Convergence: |ΔE|/Δτ below this.
    pub energy_tol: f64,
    /// Convergence: ‖Hψ − Eψ‖ below this (hartree).
    pub residual_tol: f64,
    pub max_steps: usize,
    pub cutoff: f64,
}

impl Default for ImaginaryConfig {
    fn default() -> Self {
        Self { z_max: 2000.0, energy_tol: 1e-12, residual_tol: 1e-9, max_steps: 200_000, cutoff: 1e-15 }
    }
}

fn deflate(wp: &mut WavePacket, against: &[&WavePacket]) {
    for _ in 0..2 {
        for d in against {
            let ov = d.inner(wp) / d.norm_sq();
            for (a, b) in wp.data.iter_mut().zip(&d.data) {
                *a -= b * ov;
            }
        }
    }
}

/// Lowest eigenstate orthogonal to `deflation`, by Chebyshev-expanded
/// imaginary-time steps. Returns the normalized state and its energy.
pub fn propagate_imaginary(
    h: &CoupledHamiltonian,
    guess: &WavePacket,
    deflation: &[&WavePacket],
    cfg: &ImaginaryConfig,
) -> Result<(WavePacket, f64), EvolveError> {
    h.check(guess)?;
    let mut wp = guess.clone();
    let n0 = wp.norm_sq().sqrt();
    deflate(&mut wp, deflation);
    if !(wp.norm_sq().sqrt() > 1e-10 * n0) {
        return Err(EvolveError::NoConvergence("guess has no overlap with the target space".into()));
    }
    wp.normalize();
    let (lo, hi) = h.bounds;
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut hw = h.apply_h(&wp)?;
    let mut energy = wp.inner(&hw).re;
    for _ in 0..cfg.max_steps {
        let x = ((energy - centre) / half).max(-1.0);
        let z = (5.0 / (x + 1.0).max(1e-12)).min(cfg.z_max);
        let ik = bessel_i_scaled_sequence(z, (z + 40.0 + 12.0 * z.sqrt()).ceil() as usize);
        let last = ik.iter().rposition(|v| v.abs() > cfg.cutoff).unwrap_or(0);
        let coef: Vec<C64> = (0..=last)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(s * ik[k] * if k == 0 { 1.0 } else { 2.0 }, 0.0)
            })
            .collect();
        wp.data = chebyshev_sum(h, &wp.data, &coef, centre, half)?;
        deflate(&mut wp, deflation);
        if !(wp.normalize() > 0.0) {
            return Err(EvolveError::NoConvergence("state collapsed to zero".into()));
        }
        hw = h.apply_h(&wp)?;
        let e_new = wp.inner(&hw).re;
        let residual: f64 = hw.data.iter().zip(&wp.data).map(|(a, b)| (a - b * e_new).norm_sqr()).sum::<f64>().sqrt();
        let dtau = z / half;
        let drift = (e_new - energy).abs() / dtau;
        energy = e_new;
        if residual < cfg.residual_tol && drift < cfg.energy_tol {
            let worst = deflation.iter().map(|d| d.inner(&wp).norm() / d.norm_sq().sqrt()).fold(0.0, f64::max);
            if worst > 1e-8 {
                return Err(EvolveError::DeflationFailure(worst));
            }
            return Ok((wp, energy));
        }
    }
    Err(EvolveError::NoConvergence(format!("no convergence after {} steps (E = {energy:e})", cfg.max_steps)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, terms: Terms) -> CoupledHamiltonian {
        let grid = RadialGrid::new(0.5, 30.0, n, 1.0).unwrap();
        let chans = vec![ChannelIndex { j: 0, m: 0, n: 0 }, ChannelIndex { j: 0, m: 0, n: 1 }];
        let w = grid
            .nodes()
            .iter()
            .map(|&r| {
                let v = -0.4 * (-(r / 3.0).powi(2)).exp();
                DMatrix::from_row_slice(2, 2, &[v, 0.01 * v, 0.01 * v, 0.5 * v])
            })
            .collect();
        let spec = BlockSpec { j: 0, channels: chans, ebar: vec![0.0, -32.0], w };
        CoupledHamiltonian::from_parts(grid, 1.0, vec![spec], terms).unwrap()
    }

    #[test]
    fn hermitian_action() {
        let h = toy(60, Terms::default());
        let n = h.dim();
        let u: Vec<C64> = (0..n).map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
        let v: Vec<C64> = (0..n).map(|k| C64::new((k as f64 * 1.3).cos(), (k as f64 * 0.7).sin())).collect();
        let (mut hu, mut hv) = (vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]);
        h.apply(&u, &mut hu);
        h.apply(&v, &mut hv);
        let a: C64 = u.iter().zip(&hv).map(|(x, y)| x.conj() * y).sum();
        let b: C64 = v.iter().zip(&hu).map(|(x, y)| x.conj() * y).sum();
        assert!((a - b.conj()).norm() < 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn bounds_bracket_spectrum() {
        let h = toy(40, Terms::default());
        let eig = nalgebra::SymmetricEigen::new(h.dense_matrix());
        let (lo, hi) = h.bounds();
        assert!(eig.eigenvalues.iter().all(|&e| e >= lo && e <= hi));
    }

    #[test]
    fn zero_step_is_identity() {
        let h = toy(30, Terms::default());
        let mut wp = h.empty_packet();
        wp.data[3] = C64::new(1.0, 0.0);
        let before = wp.clone();
        step_chebyshev(&h, &mut wp, 0.0, 30, 1e-14).unwrap();
        assert_eq!(wp, before);
    }

    #[test]
    fn imaginary_time_matches_dense_ground_and_excited() {
        let h = toy(40, Terms::default());
        let eig = nalgebra::SymmetricEigen::new(h.dense_matrix());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let mut guess = h.empty_packet();
        for (k, z) in guess.data.iter_mut().enumerate() {
            *z = C64::new(1.0 + 0.1 * (k as f64).sin(), 0.0);
        }
        let cfg = ImaginaryConfig::default();
        let (g, e0) = propagate_imaginary(&h, &guess, &[], &cfg).unwrap();
        assert!((e0 - ev[0]).abs() < 1e-10 * ev[0].abs(), "{e0} vs {}", ev[0]);
        let (_, e1) = propagate_imaginary(&h, &guess, &[&g], &cfg).unwrap();
        assert!((e1 - ev[1]).abs() < 1e-8 * ev[1].abs().max(1e-3), "{e1} vs {}", ev[1]);
    }

    #[test]
    fn zero_overlap_guess_fails() {
        let h = toy(20, Terms::default());
        let mut a = h.empty_packet();
        a.data[0] = C64::new(1.0, 0.0);
        let r = propagate_imaginary(&h, &a.clone(), &[&a], &ImaginaryConfig::default());
        assert!(matches!(r, Err(EvolveError::NoConvergence(_))));
    }
}
