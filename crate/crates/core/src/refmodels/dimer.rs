//! Kicked dimer in the factorized form Ψ = (1 + g)·e^{−iEt}·ψ_ground, and the
//! pair-product trimer model built from it.
//!
//! g is expanded as g(r,ϑ) = Σ_ℓ g_ℓ(r)·√(2ℓ+1)·P_ℓ(cosϑ), so the partial
//! waves of the full dimer packet are u_ℓ = (δ_ℓ0 + g_ℓ)·u_ground. Each g_ℓ obeys
//! i∂g/∂t = −(1/2μ̄u²)∂_r(u²∂_r g) + ℓ(ℓ+1)/(2μ̄r²)·g,
//! which is discretized in flux form and stepped with Crank–Nicolson.

use super::RefModelError;
use crate::chanbasis::ChannelIndex;
use crate::evolve::{propagate, BlockSpec, CoupledHamiltonian, PropagationConfig, Terms};
use crate::hypergeom::{lab_angles, to_distances, HyperPoint};
use crate::angmath::EulerAngles;
use crate::interaction::{laser_dimer, units, PairPotential, Polarizabilities};
use crate::numerics::{gauss_legendre, lagrange4, legendre_all};
use crate::observe::{mc_sample, Density, McConfig};
use crate::radial::RadialGrid;
use crate::stationary::{lowest_eigenpair, solve_dimer_ground, DimerState};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Form of the initial condition g(0⁺).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimerKick {
    /// g = iC·V (weak-pulse expansion); only ℓ = 0, 2 appear.
    Linear,
    /// g = e^{iCV} − 1 kept up to `l_max`.
    Exact { l_max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimerConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    /// Crank–Nicolson step (a.u.).
    pub dt: f64,
    pub checkpoint_every: f64,
    pub total_time: f64,
    pub kick: DimerKick,
}

impl DimerConfig {
    fn validate(&self) -> Result<(), RefModelError> {
        if !(self.dt > 0.0 && self.checkpoint_every > 0.0 && self.total_time >= 0.0) {
            return Err(RefModelError::BadInput("dimer times must be positive".into()));
        }
        if let DimerKick::Exact { l_max } = self.kick {
            if l_max % 2 != 0 {
                return Err(RefModelError::BadInput(format!("l_max={l_max} must be even")));
            }
        }
        Ok(())
    }

    fn grid(&self) -> Result<RadialGrid, RefModelError> {
        RadialGrid::new(self.r_min, self.r_max, self.n_r, 0.0).map_err(|e| RefModelError::BadInput(e.to_string()))
    }

    fn checkpoints(&self) -> Vec<f64> {
        let n = (self.total_time / self.checkpoint_every - 1e-9).ceil().max(0.0) as usize;
        (0..=n).map(|k| (k as f64 * self.checkpoint_every).min(self.total_time)).collect()
    }
}

/// Partial-wave coefficients g_ℓ(0⁺) at one separation.
pub fn kick_partial_waves(r: f64, constant: f64, pol: &Polarizabilities, kick: DimerKick) -> Vec<(u32, C64)> {
    let (al, be) = (pol.iso.eval(r), pol.aniso.eval(r));
    match kick {
        DimerKick::Linear => {
            // V = α_int + (2β_int/3)·P₂
            let i = C64::new(0.0, constant);
            vec![(0, i * al), (2, i * (2.0 * be / 3.0) / 5f64.sqrt())]
        }
        DimerKick::Exact { l_max } => {
            let n = (l_max as usize + 24).max((1.5 * constant.abs() * be.abs()).ceil() as usize + l_max as usize + 16);
            let (xs, ws) = gauss_legendre(n);
            let mut out: Vec<(u32, C64)> = (0..=l_max).step_by(2).map(|l| (l, C64::new(0.0, 0.0))).collect();
            for (&x, &w) in xs.iter().zip(&ws) {
                let f = C64::from_polar(1.0, constant * laser_dimer(r, x, pol)) - 1.0;
                let p = legendre_all(l_max as usize, x);
                for (l, acc) in out.iter_mut() {
                    *acc += f * (w * p[*l as usize] * (2 * *l + 1) as f64 / 2.0);
                }
            }
            // g_ℓ multiplies √(2ℓ+1)P_ℓ
            for (l, acc) in out.iter_mut() {
                *acc /= ((2 * *l + 1) as f64).sqrt();
            }
            out
        }
    }
}

/// g(r,ϑ,t) in partial waves on a uniform radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DimerField {
    pub r: Vec<f64>,
    pub reduced_mass: f64,
    pub time: f64,
    pub ls: Vec<u32>,
    pub waves: Vec<Vec<C64>>,
}

impl DimerField {
    fn radial(&self, k: usize, r: f64) -> C64 {
        let n = self.r.len();
        let r = r.clamp(self.r[0], self.r[n - 1]);
        let (s, w) = lagrange4(&self.r, r);
        (0..4).map(|a| self.waves[k][s + a] * w[a]).sum()
    }

    pub fn eval(&self, r: f64, cos_theta: f64) -> C64 {
        let lmax = self.ls.iter().copied().max().unwrap_or(0) as usize;
        let p = legendre_all(lmax, cos_theta);
        self.ls
            .iter()
            .enumerate()
            .map(|(k, &l)| self.radial(k, r) * (((2 * l + 1) as f64).sqrt() * p[l as usize]))
            .sum()
    }

    /// g on the (r, ϑ) product grid with `n_theta` uniform polar nodes.
    pub fn sample(&self, n_theta: usize) -> (Vec<f64>, Vec<Vec<C64>>) {
        let thetas: Vec<f64> = (0..n_theta).map(|k| std::f64::consts::PI * (k as f64 + 0.5) / n_theta as f64).collect();
        let rows = self.r.iter().map(|&r| thetas.iter().map(|t| self.eval(r, t.cos())).collect()).collect();
        (thetas, rows)
    }

    /// ⟨cos²ϑ⟩ at each radial node; the ground-state factor cancels.
    pub fn alignment(&self) -> Vec<f64> {
        let m = cos2_matrix(&self.ls);
        (0..self.r.len())
            .map(|i| {
                let a: Vec<C64> =
                    self.ls.iter().enumerate().map(|(k, &l)| self.waves[k][i] + if l == 0 { 1.0 } else { 0.0 }).collect();
                let norm: f64 = a.iter().map(|z| z.norm_sqr()).sum();
                let mut acc = C64::new(0.0, 0.0);
                for (p, ap) in a.iter().enumerate() {
                    for (q, aq) in a.iter().enumerate() {
                        acc += ap.conj() * aq * m[(p, q)];
                    }
                }
                acc.re / norm
            })
            .collect()
    }
}

/// ⟨Y_ℓ0|cos²ϑ|Y_ℓ'0⟩.
fn cos2_matrix(ls: &[u32]) -> DMatrix<f64> {
    let lmax = ls.iter().copied().max().unwrap_or(0) as usize;
    let (xs, ws) = gauss_legendre(lmax + 3);
    DMatrix::from_fn(ls.len(), ls.len(), |a, b| {
        let (la, lb) = (ls[a] as usize, ls[b] as usize);
        let norm = (((2 * la + 1) * (2 * lb + 1)) as f64).sqrt() / 2.0;
        xs.iter().zip(&ws).map(|(&x, &w)| {
            let p = legendre_all(lmax, x);
            w * p[la] * p[lb] * x * x
        }).sum::<f64>()
            * norm
    })
}

#[derive(Debug, Clone)]
pub struct DimerTrajectory {
    pub ground: DimerState,
    pub frames: Vec<DimerField>,
}

fn ground_state(vaa: &PairPotential, cfg: &DimerConfig) -> Result<DimerState, RefModelError> {
    let grid = cfg.grid()?;
    let ground = solve_dimer_ground(vaa, &grid, units::HE4_MASS / 2.0)?;
    if let Some(i) = ground.samples.iter().position(|&v| v <= 0.0) {
        return Err(RefModelError::NodeDivision(grid.nodes()[i]));
    }
    Ok(ground)
}

fn initial_waves(r: &[f64], constant: f64, pol: &Polarizabilities, kick: DimerKick) -> (Vec<u32>, Vec<Vec<C64>>) {
    let per_r: Vec<Vec<(u32, C64)>> = r.iter().map(|&x| kick_partial_waves(x, constant, pol, kick)).collect();
    let ls: Vec<u32> = per_r[0].iter().map(|p| p.0).collect();
    let waves = (0..ls.len()).map(|k| per_r.iter().map(|v| v[k].1).collect()).collect();
    (ls, waves)
}

/// Complex tridiagonal solve (Thomas algorithm); `lower[i]` couples i to i−1.
fn solve_tridiagonal(lower: &[C64], diag: &[C64], upper: &[C64], rhs: &mut [C64]) {
    let n = diag.len();
    let mut c = vec![C64::new(0.0, 0.0); n];
    let mut d = diag[0];
    c[0] = if n > 1 { upper[0] / d } else { C64::new(0.0, 0.0) };
    rhs[0] /= d;
    for i in 1..n {
        d = diag[i] - lower[i] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / d;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= c[i] * next;
    }
}

/// Flux-form operator rows (lower, diag, upper) for one partial wave.
fn drift_operator(r: &[f64], u: &[f64], mid: &[f64], l: u32, reduced_mass: f64, h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = r.len();
    let kappa = 1.0 / (2.0 * reduced_mass * h * h);
    let cent = (l * (l + 1)) as f64 / (2.0 * reduced_mass);
    let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let w = u[i] * u[i];
        let wp = if i + 1 < n { mid[i] } else { 0.0 };
        let wm = if i > 0 { mid[i - 1] } else { 0.0 };
        di[i] = kappa * (wp + wm) / w + cent / (r[i] * r[i]);
        if i + 1 < n {
            up[i] = -kappa * wp / w;
        }
        if i > 0 {
            lo[i] = -kappa * wm / w;
        }
    }
    (lo, di, up)
}

/// Propagates g_dimer with the drift equation; frames at every checkpoint.
pub fn dimer_evolve(
    vaa: &PairPotential,
    pol: &Polarizabilities,
    constant: f64,
    cfg: &DimerConfig,
) -> Result<DimerTrajectory, RefModelError> {
    cfg.validate()?;
    let ground = ground_state(vaa, cfg)?;
    let grid = &ground.grid;
    let r = grid.nodes().to_vec();
    let h = grid.step() * (cfg.r_max - cfg.r_min);
    let u = ground.u_values();
    if let Some(i) = u.iter().position(|&v| !(v * v > 0.0)) {
        return Err(RefModelError::NodeDivision(r[i]));
    }
    let mut xs = vec![cfg.r_min];
    xs.extend_from_slice(&r);
    let mut ys = vec![0.0];
    ys.extend_from_slice(&u);
    let mid: Vec<f64> = r
        .windows(2)
        .map(|w| {
            let x = 0.5 * (w[0] + w[1]);
            let (s, c) = lagrange4(&xs, x);
            (0..4).map(|a| c[a] * ys[s + a]).sum::<f64>().powi(2)
        })
        .collect();
    let mu = ground.reduced_mass;
    let (ls, mut waves) = initial_waves(&r, constant, pol, cfg.kick);
    let checkpoints = cfg.checkpoints();
    let ops: Vec<_> = ls.iter().map(|&l| drift_operator(&r, &u, &mid, l, mu, h)).collect();
    let frame = |t: f64, waves: &Vec<Vec<C64>>| DimerField { r: r.clone(), reduced_mass: mu, time: t, ls: ls.clone(), waves: waves.clone() };
    let mut frames = vec![frame(0.0, &waves)];
    let mut t = 0.0;
    for &target in &checkpoints[1..] {
        let steps = ((target - t) / cfg.dt).ceil().max(1.0) as usize;
        let dt = (target - t) / steps as f64;
        let half = C64::new(0.0, 0.5 * dt);
        for (g, (lo, di, up)) in waves.iter_mut().zip(&ops) {
            let (al, ad, au): (Vec<C64>, Vec<C64>, Vec<C64>) = (
                lo.iter().map(|&v| half * v).collect(),
                di.iter().map(|&v| half * v + 1.0).collect(),
                up.iter().map(|&v| half * v).collect(),
            );
            let n = g.len();
            let mut rhs = vec![C64::new(0.0, 0.0); n];
            for _ in 0..steps {
                for i in 0..n {
                    let mut acc = g[i] * (2.0 - ad[i]);
                    if i > 0 {
                        acc -= al[i] * g[i - 1];
                    }
                    if i + 1 < n {
                        acc -= au[i] * g[i + 1];
                    }
                    rhs[i] = acc;
                }
                solve_tridiagonal(&al, &ad, &au, &mut rhs);
                g.copy_from_slice(&rhs);
            }
        }
        t = target;
        frames.push(frame(t, &waves));
    }
    Ok(DimerTrajectory { ground, frames })
}

/// Full dimer partial waves u_ℓ(r_i, t) from direct propagation of the kicked
/// state, at the same checkpoints as `dimer_evolve`.
pub fn dimer_direct(
    vaa: &PairPotential,
    pol: &Polarizabilities,
    constant: f64,
    cfg: &DimerConfig,
) -> Result<Vec<(f64, Vec<Vec<C64>>)>, RefModelError> {
    cfg.validate()?;
    let ground = ground_state(vaa, cfg)?;
    let grid = ground.grid.clone();
    let r = grid.nodes().to_vec();
    let (ls, g0) = initial_waves(&r, constant, pol, cfg.kick);
    let nr = r.len();
    let channels: Vec<ChannelIndex> = (0..ls.len()).map(|k| ChannelIndex { j: 0, m: 0, n: k }).collect();
    let spec = BlockSpec {
        j: 0,
        channels,
        ebar: ls.iter().map(|&l| 3.75 - (l * (l + 1)) as f64).collect(),
        w: r.iter().map(|&x| DMatrix::identity(ls.len(), ls.len()) * vaa.eval(x)).collect(),
    };
    let ham = CoupledHamiltonian::from_parts(grid.clone(), ground.reduced_mass, vec![spec], Terms::default())?;
    let mut wp = ham.empty_packet();
    for (k, &l) in ls.iter().enumerate() {
        let delta = if l == 0 { 1.0 } else { 0.0 };
        for i in 0..nr {
            wp.channel_mut(k)[i] = (g0[k][i] + delta) * ground.samples[i];
        }
    }
    let prop = PropagationConfig {
        dt: cfg.dt.max(50.0).min(cfg.checkpoint_every),
        max_order: 40,
        cutoff: 1e-14,
        checkpoint_every: cfg.checkpoint_every,
        total_time: cfg.total_time,
        mask_fraction: 0.0,
    };
    let mut out = Vec::new();
    propagate(&ham, &mut wp, &prop, |p| {
        let waves = (0..ls.len()).map(|k| (0..nr).map(|i| p.channel(k)[i] / grid.sqrt_weight(i)).collect()).collect();
        out.push((p.time, waves));
        Ok(())
    })?;
    Ok(out)
}

/// 1 − |⟨Ψ_ansatz|Ψ_direct⟩|²/(‖Ψ_ansatz‖²‖Ψ_direct‖²) for one checkpoint.
pub fn ansatz_defect(field: &DimerField, ground: &DimerState, direct: &[Vec<C64>]) -> f64 {
    let u = ground.u_values();
    let phase = C64::from_polar(1.0, -ground.energy * field.time);
    let (mut ab, mut aa, mut bb) = (C64::new(0.0, 0.0), 0.0, 0.0);
    for (k, &l) in field.ls.iter().enumerate() {
        let delta = if l == 0 { 1.0 } else { 0.0 };
        for i in 0..u.len() {
            let a = (field.waves[k][i] + delta) * u[i] * phase;
            let b = direct[k][i];
            ab += a.conj() * b;
            aa += a.norm_sqr();
            bb += b.norm_sqr();
        }
    }
    1.0 - ab.norm_sqr() / (aa * bb)
}

/// Runs both routes and returns (t, defect) at every checkpoint.
pub fn dimer_consistency(
    vaa: &PairPotential,
    pol: &Polarizabilities,
    constant: f64,
    cfg: &DimerConfig,
) -> Result<Vec<(f64, f64)>, RefModelError> {
    let traj = dimer_evolve(vaa, pol, constant, cfg)?;
    let direct = dimer_direct(vaa, pol, constant, cfg)?;
    if direct.len() != traj.frames.len() {
        return Err(RefModelError::BadInput("checkpoint mismatch between routes".into()));
    }
    Ok(traj
        .frames
        .iter()
        .zip(&direct)
        .map(|(f, (t, d))| (*t, ansatz_defect(f, &traj.ground, d)))
        .collect())
}

/// Fraction of the kicked dimer outside bound states, per partial wave ℓ.
pub fn dimer_unbound_fractions(
    vaa: &PairPotential,
    pol: &Polarizabilities,
    constant: f64,
    cfg: &DimerConfig,
    l_max: u32,
) -> Result<Vec<(u32, f64)>, RefModelError> {
    let c = DimerConfig { kick: DimerKick::Exact { l_max }, total_time: 0.0, ..*cfg };
    c.validate()?;
    let ground = ground_state(vaa, &c)?;
    let grid = &ground.grid;
    let r = grid.nodes();
    let (ls, g0) = initial_waves(r, constant, pol, c.kick);
    let mut out = Vec::new();
    for (k, &l) in ls.iter().enumerate() {
        let delta = if l == 0 { 1.0 } else { 0.0 };
        let v: Vec<C64> = (0..r.len()).map(|i| (g0[k][i] + delta) * ground.samples[i]).collect();
        let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mut stencil = grid.laplacian().scaled(0.5 / ground.reduced_mass);
        for (d, &x) in stencil.diag.iter_mut().zip(r) {
            *d += vaa.eval(x) + (l * (l + 1)) as f64 / (2.0 * ground.reduced_mass * x * x);
        }
        let (e, psi) = lowest_eigenpair(&stencil);
        let bound = if e < 0.0 { v.iter().zip(&psi).map(|(a, b)| a * b).sum::<C64>().norm_sqr() } else { 0.0 };
        out.push((l, total - bound));
    }
    Ok(out)
}

/// |Π f(r_jk)·(1 + s·Σ g(r_jk, ϑ_jk))|² over (ρ, θ, φ, cosβ, γ) with f = u/r.
pub struct JastrowModel<'a> {
    pub field: &'a DimerField,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub scale: f64,
}

impl<'a> JastrowModel<'a> {
    pub fn new(field: &'a DimerField, ground: &DimerState, scale: f64) -> Self {
        let mut r = vec![ground.grid.rho_min()];
        r.extend_from_slice(ground.grid.nodes());
        let mut u = vec![0.0];
        u.extend(ground.u_values());
        Self { field, r, u, scale }
    }

    fn f(&self, x: f64) -> f64 {
        if x <= self.r[0] || x >= *self.r.last().unwrap() {
            return 0.0;
        }
        let (s, w) = lagrange4(&self.r, x);
        let u: f64 = (0..4).map(|a| w[a] * self.u[s + a]).sum();
        u / x.max(1e-12)
    }

    /// Model amplitude and the pair-averaged cos²ϑ at one configuration.
    pub fn amplitude(&self, x: &[f64; 5]) -> Option<(C64, f64)> {
        let p = HyperPoint::raw(x[0], x[1], x[2]);
        let d = to_distances(p).as_array();
        let cos = lab_angles(p, EulerAngles::beta_gamma(x[3].clamp(-1.0, 1.0).acos(), x[4])).ok()?;
        let jastrow: f64 = d.iter().map(|&r| self.f(r)).product();
        if jastrow == 0.0 {
            return None;
        }
        let g: C64 = d.iter().zip(&cos).map(|(&r, &c)| self.field.eval(r, c)).sum();
        let c2 = cos.iter().map(|c| c * c).sum::<f64>() / 3.0;
        Some((jastrow * (1.0 + g * self.scale), c2))
    }
}

impl Density for JastrowModel<'_> {
    fn dims(&self) -> usize {
        5
    }

    fn rho_range(&self) -> (f64, f64) {
        let r_max = *self.r.last().unwrap();
        (1e-3 * r_max, r_max * 3f64.powf(0.25))
    }

    fn eval(&self, x: &[f64; 5], _buf: &mut Vec<C64>) -> f64 {
        let vol = HyperPoint::raw(x[0], x[1], x[2]).volume_weight();
        if vol <= 0.0 {
            return 0.0;
        }
        self.amplitude(x).map_or(0.0, |(a, _)| a.norm_sqr() * vol)
    }
}

/// ⟨(1/3)Σ cos²ϑ_jk⟩ resolved in ρ, one row per trajectory frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHeatmap {
    pub times: Vec<f64>,
    pub rho_edges: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn dimer_model_trimer(
    traj: &DimerTrajectory,
    scale: f64,
    rho_edges: &[f64],
    mc: &McConfig,
) -> Result<ModelHeatmap, RefModelError> {
    if !(scale > 0.0) {
        return Err(RefModelError::BadInput(format!("scale={scale}")));
    }
    let nb = rho_edges.len().saturating_sub(1);
    let mut values = Vec::new();
    for frame in &traj.frames {
        let model = JastrowModel::new(frame, &traj.ground, scale);
        let samples = mc_sample(&model, mc, None)?;
        let (mut sum, mut count) = (vec![0.0; nb], vec![0usize; nb]);
        for x in &samples.points {
            let k = rho_edges.partition_point(|&e| e <= x[0]);
            if k == 0 || k > nb {
                continue;
            }
            if let Some((_, c2)) = model.amplitude(x) {
                sum[k - 1] += c2;
                count[k - 1] += 1;
            }
        }
        values.push(sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect());
    }
    Ok(ModelHeatmap { times: traj.frames.iter().map(|f| f.time).collect(), rho_edges: rho_edges.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> (PairPotential, Polarizabilities) {
        let vaa = PairPotential::LennardJones { epsilon: 15.0 / units::KELVIN_PER_HARTREE, sigma: 5.29 };
        (vaa, Polarizabilities::dipole_induced_dipole(1.383, 2.0))
    }

    fn desk(n_r: usize) -> DimerConfig {
        DimerConfig {
            r_min: 3.8,
            r_max: 100.0,
            n_r,
            dt: 4.0,
            checkpoint_every: units::ps_to_au(0.1),
            total_time: units::ps_to_au(0.2),
            kick: DimerKick::Linear,
        }
    }

    #[test]
    fn linear_kick_projection_matches_exact_at_small_constant() {
        let (_, pol) = model();
        let c = 1e-4;
        for r in [3.0, 6.0, 15.0] {
            let lin = kick_partial_waves(r, c, &pol, DimerKick::Linear);
            let ex = kick_partial_waves(r, c, &pol, DimerKick::Exact { l_max: 4 });
            for (a, b) in lin.iter().zip(&ex) {
                assert!((a.1 - b.1).norm() < 1e-6 * c, "{r} {a:?} {b:?}");
            }
            assert!(ex[2].1.norm() < 1e-6 * c);
        }
    }

    #[test]
    fn no_kick_leaves_g_zero() {
        let (vaa, pol) = model();
        let cfg = desk(500);
        let traj = dimer_evolve(&vaa, &pol, 0.0, &cfg).unwrap();
        for f in &traj.frames {
            assert!(f.waves.iter().flatten().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn g_route_converges_to_direct_propagation() {
        let (vaa, pol) = model();
        let coarse = dimer_consistency(&vaa, &pol, 72.6, &desk(1000)).unwrap();
        let fine = dimer_consistency(&vaa, &pol, 72.6, &desk(2000)).unwrap();
        assert_eq!(fine.len(), 3);
        assert!(fine[0].1.abs() < 1e-14);
        let (c, f) = (coarse[2].1, fine[2].1);
        assert!(f < c / 8.0 && f < 1e-5, "{c:e} -> {f:e}");
    }

    #[test]
    fn exact_kick_conserves_norm_in_partial_waves() {
        let (_, pol) = model();
        for r in [4.0, 7.0, 20.0] {
            let w = kick_partial_waves(r, 72.6, &pol, DimerKick::Exact { l_max: 40 });
            let norm: f64 = w.iter().map(|(l, g)| (g + if *l == 0 { 1.0 } else { 0.0 }).norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12, "{r}: {norm}");
        }
    }

    #[test]
    fn unkicked_model_trimer_is_isotropic() {
        let (vaa, pol) = model();
        let traj = dimer_evolve(&vaa, &pol, 0.0, &DimerConfig { total_time: 0.0, ..desk(400) }).unwrap();
        let edges = [8.0, 11.0, 14.0, 18.0];
        let mc = McConfig { samples: 60_000, burn_in: 3000, chains: 2, seed: 11, stream: 0 };
        let map = dimer_model_trimer(&traj, 10_000.0, &edges, &mc).unwrap();
        assert_eq!(map.values.len(), 1);
        for v in &map.values[0] {
            assert!((v - 1.0 / 3.0).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn cos2_matrix_is_isotropic_for_s_wave() {
        let m = cos2_matrix(&[0, 2]);
        assert!((m[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        assert!((m[(0, 1)] - 2.0 / (3.0 * 5f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn tridiagonal_solver_inverts() {
        let lo = [C64::new(0.0, 0.0), C64::new(1.0, 0.5), C64::new(-0.3, 0.1)];
        let di = [C64::new(4.0, 1.0), C64::new(5.0, 0.0), C64::new(3.0, -1.0)];
        let up = [C64::new(0.2, 0.0), C64::new(0.7, -0.2), C64::new(0.0, 0.0)];
        let x = [C64::new(1.0, 2.0), C64::new(-1.0, 0.5), C64::new(0.3, 0.0)];
        let mut b: Vec<C64> = (0..3)
            .map(|i| {
                let mut v = di[i] * x[i];
                if i > 0 {
                    v += lo[i] * x[i - 1];
                }
                if i < 2 {
                    v += up[i] * x[i + 1];
                }
                v
            })
            .collect();
        solve_tridiagonal(&lo, &di, &up, &mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).norm() < 1e-14);
        }
    }
}
