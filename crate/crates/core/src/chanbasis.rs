//! Channel basis: the coupled θ-eigenproblem per (J, m), channel functions,
//! the 𝒢 coupling table and the hyperangular coupling matrices W(ρ).
//!
//! The θ-equations are discretized as a Gauss–Legendre DVR on (0, π/4). With
//! Lagrange functions ℓ_k on the interior nodes and measure w(θ) = sin(4θ)/4,
//! the weak form gives the symmetric pencil
//!   A = K + diag(q w U),  B = diag(q w),
//! where K_kl = Σ_q q w ℓ_k' ℓ_l' and U holds the (negated) centrifugal and
//! A± coupling terms. Ē = −λ for A c = λ B c, so n = 0 carries the largest Ē.

use crate::angmath::{ladder_a, overlap_d, small_d, EulerAngles};
use crate::container::{sha256_hex, Container, ContainerError};
use crate::hypergeom::{to_distances, HyperPoint};
use crate::interaction::PairPotential;
use crate::numerics::{gauss_legendre, gauss_legendre_barycentric, periodic_rule, Barycentric};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_8, PI};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("θ grid touches a singular endpoint")]
    SingularGrid,
    #[error("eigensolver did not converge for J={j}, m={m}")]
    NoConvergence { j: u32, m: i32 },
    #[error("invalid channel J={j}, m={m}, n={n}")]
    InvalidChannel { j: u32, m: i32, n: usize },
    #[error("channel J={j}, m={m}, n={n} has not been solved")]
    UnsolvedChannel { j: u32, m: i32, n: usize },
    #[error("W couples different J blocks ({0} vs {1})")]
    MismatchedJ(u32, u32),
    #[error("requested {count} eigenpairs from a space of dimension {dim}")]
    TooMany { count: usize, dim: usize },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("cache content does not match the requested basis")]
    CacheMismatch,
}

/// Interior quadrature grid in θ with the hyperangular measure sin(4θ)/4.
#[derive(Debug, Clone)]
pub struct ThetaGrid {
    nodes: Vec<f64>,
    quad: Vec<f64>,
    measure: Vec<f64>,
    interp: Barycentric,
}

impl ThetaGrid {
    /// n Gauss–Legendre nodes mapped to (0, π/4).
    pub fn gauss(n: usize) -> Result<Self, BasisError> {
        if n < 2 {
            return Err(BasisError::SingularGrid);
        }
        let (t, w) = gauss_legendre(n);
        let nodes: Vec<f64> = t.iter().map(|&x| FRAC_PI_8 * (1.0 + x)).collect();
        let quad: Vec<f64> = w.iter().map(|&q| FRAC_PI_8 * q).collect();
        let interp = gauss_legendre_barycentric(&t, &w, nodes.clone());
        Ok(Self::assemble(nodes, quad, interp))
    }

    /// Custom nodes and weights; nodes must lie strictly inside (0, π/4).
    pub fn with_nodes(nodes: Vec<f64>, quad: Vec<f64>) -> Result<Self, BasisError> {
        let inside = nodes.iter().all(|&x| x > 0.0 && x < FRAC_PI_4);
        if !inside || nodes.len() != quad.len() || nodes.len() < 2 {
            return Err(BasisError::SingularGrid);
        }
        let interp = Barycentric::new(&nodes);
        Ok(Self::assemble(nodes, quad, interp))
    }

    fn assemble(nodes: Vec<f64>, quad: Vec<f64>, interp: Barycentric) -> Self {
        let measure = nodes.iter().zip(&quad).map(|(&x, &q)| q * (4.0 * x).sin() / 4.0).collect();
        Self { nodes, quad, measure, interp }
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

    /// Quadrature weight times sin(4θ)/4 at each node.
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad
    }

    pub fn interpolation_coefficients(&self, theta: f64) -> Vec<f64> {
        self.interp.coefficients(theta)
    }

    pub fn fingerprint(&self) -> String {
        let mut s = format!("theta{}:", self.nodes.len());
        for x in &self.nodes {
            s.push_str(&format!("{:x}", x.to_bits()));
        }
        sha256_hex(s.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelIndex {
    pub j: u32,
    pub m: i32,
    pub n: usize,
}

impl ChannelIndex {
    pub fn new(j: u32, m: i32, n: usize) -> Result<Self, BasisError> {
        if j % 2 != 0 || m % 6 != 0 {
            return Err(BasisError::InvalidChannel { j, m, n });
        }
        Ok(Self { j, m, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Truncation {
    pub j_max: u32,
    pub m_max: i32,
    pub n_max: usize,
}

impl Truncation {
    pub fn js(&self) -> impl Iterator<Item = u32> {
        (0..=self.j_max).step_by(2)
    }

    pub fn ms(&self) -> impl Iterator<Item = i32> {
        (-self.m_max..=self.m_max).step_by(6)
    }
}

/// One eigenpair of the coupled θ-equations. `components[i][k]` is
/// P_{M,n}(θ_k) with M = −J + 2i.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEigenpair {
    pub j: u32,
    pub m: i32,
    pub eigenvalue: f64,
    pub components: Vec<Vec<f64>>,
}

impl ThetaEigenpair {
    pub fn component(&self, big_m: i32) -> Option<&[f64]> {
        let i = (big_m + self.j as i32).checked_div(2)?;
        if (big_m + self.j as i32) % 2 != 0 || i < 0 {
            return None;
        }
        self.components.get(i as usize).map(|v| v.as_slice())
    }

    /// P_{M,n}(θ) by interpolation through the grid values.
    pub fn value(&self, grid: &ThetaGrid, big_m: i32, theta: f64) -> f64 {
        match self.component(big_m) {
            Some(c) => grid.interp.eval(c, theta),
            None => 0.0,
        }
    }
}

fn m_values(j: u32) -> Vec<i32> {
    (0..=j).map(|i| -(j as i32) + 2 * i as i32).collect()
}

/// Symmetric pencil (A, diag B) of the discretized θ-operator for (J, m).
/// Rows are ordered M-major: index = i·n_θ + k.
pub struct ThetaOperator {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

pub fn theta_operator(j: u32, m: i32, grid: &ThetaGrid) -> ThetaOperator {
    let n = grid.len();
    let ms = m_values(j);
    let dim = ms.len() * n;
    let dmat = grid.interp.differentiation_matrix();
    let qw = &grid.measure;
    let mut stiff = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            stiff[(k, l)] = (0..n).map(|q| qw[q] * dmat[q][k] * dmat[q][l]).sum();
        }
    }
    let jj = (j * (j + 1)) as f64;
    let mf = m as f64;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for (i, &big_m) in ms.iter().enumerate() {
        let bm = big_m as f64;
        let off = i * n;
        a.view_mut((off, off), (n, n)).copy_from(&stiff);
        for k in 0..n {
            let th = grid.nodes[k];
            let (s2, c2) = (2.0 * th).sin_cos();
            let u = (mf * mf + bm * bm + 2.0 * mf * bm * s2) / (c2 * c2) + (2.0 * jj - 2.0 * bm * bm) / (s2 * s2);
            a[(off + k, off + k)] += qw[k] * u;
        }
        if i + 1 < ms.len() {
            let ap = ladder_a(j, big_m, 1);
            for k in 0..n {
                let th = grid.nodes[k];
                let (s2, c2) = (2.0 * th).sin_cos();
                let v = qw[k] * c2 * ap / (s2 * s2);
                a[(off + k, off + n + k)] = v;
                a[(off + n + k, off + k)] = v;
            }
        }
    }
    let b = (0..dim).map(|r| qw[r % n]).collect();
    ThetaOperator { a, b }
}

pub fn solve_theta(j: u32, m: i32, grid: &ThetaGrid, count: usize) -> Result<Vec<ThetaEigenpair>, BasisError> {
    if j % 2 != 0 || m % 6 != 0 {
        return Err(BasisError::InvalidChannel { j, m, n: 0 });
    }
    let op = theta_operator(j, m, grid);
    let dim = op.b.len();
    if count > dim {
        return Err(BasisError::TooMany { count, dim });
    }
    let sb: Vec<f64> = op.b.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut a = op.a;
    for r in 0..dim {
        for c in 0..dim {
            a[(r, c)] *= sb[r] * sb[c];
        }
    }
    let eig = SymmetricEigen::try_new(a, 1e-14, 0).ok_or(BasisError::NoConvergence { j, m })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let n = grid.len();
    let nm = m_values(j).len();
    Ok(order
        .into_iter()
        .take(count)
        .map(|col| {
            let v = eig.eigenvectors.column(col);
            let mut comps: Vec<Vec<f64>> =
                (0..nm).map(|i| (0..n).map(|k| v[i * n + k] * sb[i * n + k]).collect()).collect();
            let peak = comps
                .iter()
                .flatten()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if peak < 0.0 {
                comps.iter_mut().flatten().for_each(|x| *x = -*x);
            }
            ThetaEigenpair { j, m, eigenvalue: -eig.eigenvalues[col], components: comps }
        })
        .collect())
}

/// Solved channel basis plus the 𝒢 coupling table.
#[derive(Debug, Clone)]
pub struct ChannelBasis {
    pub grid: ThetaGrid,
    pub truncation: Truncation,
    pairs: BTreeMap<(u32, i32), Vec<ThetaEigenpair>>,
    /// Key (J', J, m) with J' ∈ {J, J+2}; rows n', columns n.
    g_table: BTreeMap<(u32, u32, i32), DMatrix<f64>>,
}

impl ChannelBasis {
    pub fn build(grid: ThetaGrid, truncation: Truncation) -> Result<Self, BasisError> {
        let keys: Vec<(u32, i32)> =
            truncation.js().flat_map(|j| truncation.ms().map(move |m| (j, m))).collect();
        let solved: Vec<_> = keys
            .par_iter()
            .map(|&(j, m)| solve_theta(j, m, &grid, truncation.n_max + 1).map(|v| ((j, m), v)))
            .collect::<Result<_, _>>()?;
        let mut basis = Self { grid, truncation, pairs: solved.into_iter().collect(), g_table: BTreeMap::new() };
        basis.build_g_table();
        Ok(basis)
    }

    fn build_g_table(&mut self) {
        let mut table = BTreeMap::new();
        for j in self.truncation.js() {
            for jp in [j, j + 2] {
                if jp > self.truncation.j_max {
                    continue;
                }
                for m in self.truncation.ms() {
                    table.insert((jp, j, m), self.g_matrix(jp, j, m));
                }
            }
        }
        self.g_table = table;
    }

    fn g_matrix(&self, jp: u32, j: u32, m: i32) -> DMatrix<f64> {
        let nn = self.truncation.n_max + 1;
        let (pp, p) = (&self.pairs[&(jp, m)], &self.pairs[&(j, m)]);
        let qw = self.grid.measure();
        let lim = jp.min(j) as i32;
        let mut g = DMatrix::zeros(nn, nn);
        for big_m in (-lim..=lim).step_by(2) {
            let dm = overlap_d(jp, j, big_m);
            if dm == 0.0 {
                continue;
            }
            for a in 0..nn {
                let ca = pp[a].component(big_m).unwrap();
                for b in 0..nn {
                    let cb = p[b].component(big_m).unwrap();
                    let s: f64 = (0..qw.len()).map(|k| qw[k] * ca[k] * cb[k]).sum();
                    g[(a, b)] += dm * s;
                }
            }
        }
        g
    }

    pub fn eigenpair(&self, idx: ChannelIndex) -> Result<&ThetaEigenpair, BasisError> {
        self.pairs
            .get(&(idx.j, idx.m))
            .and_then(|v| v.get(idx.n))
            .ok_or(BasisError::UnsolvedChannel { j: idx.j, m: idx.m, n: idx.n })
    }

    pub fn eigenvalue(&self, idx: ChannelIndex) -> Result<f64, BasisError> {
        self.eigenpair(idx).map(|p| p.eigenvalue)
    }

    /// Channels of one J block, ordered by m then n.
    pub fn channels(&self, j: u32) -> Vec<ChannelIndex> {
        if j > self.truncation.j_max || j % 2 != 0 {
            return Vec::new();
        }
        self.truncation
            .ms()
            .flat_map(|m| (0..=self.truncation.n_max).map(move |n| ChannelIndex { j, m, n }))
            .collect()
    }

    pub fn all_channels(&self) -> Vec<ChannelIndex> {
        self.truncation.js().flat_map(|j| self.channels(j)).collect()
    }

    /// Φ^(J)_{m,n}(θ, φ, β, γ).
    pub fn channel_function(&self, idx: ChannelIndex, theta: f64, phi: f64, ang: EulerAngles) -> Result<Complex64, BasisError> {
        let pair = self.eigenpair(idx)?;
        let coef = self.grid.interpolation_coefficients(theta);
        let pre = (3.0 / PI).sqrt() * ((2 * idx.j + 1) as f64 / (8.0 * PI * PI)).sqrt();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, big_m) in m_values(idx.j).into_iter().enumerate() {
            let p: f64 = coef.iter().zip(&pair.components[i]).map(|(c, v)| c * v).sum();
            let d = small_d(idx.j, big_m, 0, ang.beta);
            acc += Complex64::from_polar(p * d, big_m as f64 * ang.gamma);
        }
        Ok(acc * Complex64::from_polar(pre, idx.m as f64 * phi))
    }

    /// 𝒢^(J',J)_{m,n',n}; zero outside the triangle rule.
    pub fn coupling_g(&self, jp: u32, j: u32, m: i32, np: usize, n: usize) -> f64 {
        if jp.abs_diff(j) > 2 {
            return 0.0;
        }
        if jp >= j {
            self.g_table.get(&(jp, j, m)).map_or(0.0, |g| g[(np, n)])
        } else {
            self.g_table.get(&(j, jp, m)).map_or(0.0, |g| g[(n, np)])
        }
    }

    /// Max deviation of Σ_M ⟨P_n'|P_n⟩ from δ over all solved blocks.
    pub fn orthonormality_defect(&self) -> f64 {
        let qw = self.grid.measure();
        let mut worst = 0.0f64;
        for pairs in self.pairs.values() {
            for (a, pa) in pairs.iter().enumerate() {
                for (b, pb) in pairs.iter().enumerate() {
                    let s: f64 = pa
                        .components
                        .iter()
                        .zip(&pb.components)
                        .map(|(ca, cb)| (0..qw.len()).map(|k| qw[k] * ca[k] * cb[k]).sum::<f64>())
                        .sum();
                    let target = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
            }
        }
        worst
    }

    pub fn fingerprint(&self) -> String {
        let t = self.truncation;
        sha256_hex(format!("basis|{}|{}|{}|{}", self.grid.fingerprint(), t.j_max, t.m_max, t.n_max).as_bytes())
    }

    fn to_container(&self) -> Container {
        let t = self.truncation;
        let mut blocks = vec![self.grid.nodes.clone(), self.grid.quad.clone()];
        for pairs in self.pairs.values() {
            for p in pairs {
                let mut b = vec![p.eigenvalue];
                b.extend(p.components.iter().flatten());
                blocks.push(b);
            }
        }
        Container::new("channel-basis", vec![t.j_max as i64, t.m_max as i64, t.n_max as i64, self.grid.len() as i64], blocks)
    }

    fn from_container(c: Container, grid: ThetaGrid, truncation: Truncation) -> Result<Self, BasisError> {
        let t = truncation;
        let expect = vec![t.j_max as i64, t.m_max as i64, t.n_max as i64, grid.len() as i64];
        if c.header != expect || c.blocks.len() < 2 || c.blocks[0] != grid.nodes {
            return Err(BasisError::CacheMismatch);
        }
        let n = grid.len();
        let mut it = c.blocks.into_iter().skip(2);
        let mut pairs = BTreeMap::new();
        for j in t.js() {
            for m in t.ms() {
                let nm = (j + 1) as usize;
                let mut v = Vec::new();
                for _ in 0..=t.n_max {
                    let b = it.next().ok_or(BasisError::CacheMismatch)?;
                    if b.len() != 1 + nm * n {
                        return Err(BasisError::CacheMismatch);
                    }
                    let components = b[1..].chunks(n).map(|c| c.to_vec()).collect();
                    v.push(ThetaEigenpair { j, m, eigenvalue: b[0], components });
                }
                pairs.insert((j, m), v);
            }
        }
        let mut basis = Self { grid, truncation, pairs, g_table: BTreeMap::new() };
        basis.build_g_table();
        Ok(basis)
    }

    /// Loads the basis from `cache_dir` when a matching file exists, otherwise
    /// builds it and stores it there.
    pub fn load_or_build(grid: ThetaGrid, truncation: Truncation, cache_dir: Option<&Path>) -> Result<Self, BasisError> {
        let Some(dir) = cache_dir else {
            return Self::build(grid, truncation);
        };
        let t = truncation;
        let key = sha256_hex(format!("basis|{}|{}|{}|{}", grid.fingerprint(), t.j_max, t.m_max, t.n_max).as_bytes());
        let path = dir.join(format!("basis-{}.bin", &key[..16]));
        if let Ok(c) = Container::read_kind(&path, "channel-basis") {
            match Self::from_container(c, grid.clone(), truncation) {
                Ok(b) => return Ok(b),
                Err(e) => log::warn!("ignoring stale basis cache {}: {e}", path.display()),
            }
        }
        let basis = Self::build(grid, truncation)?;
        basis.to_container().write(&path)?;
        Ok(basis)
    }
}

/// Fourier moments V_d(ρ, θ_k) = (3/π)∫₀^{π/3} cos(dφ) V dφ for d = 0, 6, …, 6·dmax.
fn potential_moments(rho: f64, grid: &ThetaGrid, vaa: &PairPotential, n_phi: usize, dmax: usize) -> Vec<Vec<f64>> {
    let (phis, w) = periodic_rule(n_phi, 0.0, FRAC_PI_3);
    let mut out = vec![vec![0.0; grid.len()]; dmax + 1];
    for (k, &th) in grid.nodes.iter().enumerate() {
        for (&ph, &wt) in phis.iter().zip(&w) {
            let g = to_distances(HyperPoint::raw(rho, th, ph));
            let v: f64 = g.as_array().iter().map(|&r| vaa.eval(r)).sum();
            for (d, row) in out.iter_mut().enumerate() {
                row[k] += 3.0 / PI * wt * (6.0 * d as f64 * ph).cos() * v;
            }
        }
    }
    out
}

/// Full W^(J)(ρ) block over `basis.channels(j)`.
pub fn w_matrix(basis: &ChannelBasis, j: u32, rho: f64, vaa: &PairPotential, n_phi: usize) -> DMatrix<f64> {
    let t = basis.truncation;
    let ms: Vec<i32> = t.ms().collect();
    let nn = t.n_max + 1;
    let dmax = (2 * t.m_max / 6) as usize;
    let vd = potential_moments(rho, &basis.grid, vaa, n_phi, dmax);
    let qw = basis.grid.measure();
    let nm = (j + 1) as usize;
    let nt = basis.grid.len();
    let dim = ms.len() * nn;
    let mut w = DMatrix::zeros(dim, dim);
    for (ia, &ma) in ms.iter().enumerate() {
        let pa = &basis.pairs[&(j, ma)];
        for (ib, &mb) in ms.iter().enumerate().skip(ia) {
            let pb = &basis.pairs[&(j, mb)];
            let d = (ma - mb).unsigned_abs() as usize / 6;
            let s: Vec<f64> = (0..nt).map(|k| qw[k] * vd[d][k]).collect();
            for a in 0..nn {
                for b in 0..nn {
                    let mut acc = 0.0;
                    for i in 0..nm {
                        let (ca, cb) = (&pa[a].components[i], &pb[b].components[i]);
                        acc += (0..nt).map(|k| s[k] * ca[k] * cb[k]).sum::<f64>();
                    }
                    w[(ia * nn + a, ib * nn + b)] = acc;
                    w[(ib * nn + b, ia * nn + a)] = acc;
                }
            }
        }
    }
    w
}

/// Single matrix element W_{(m,n),(m',n')}(ρ).
pub fn coupling_w(
    basis: &ChannelBasis,
    a: ChannelIndex,
    b: ChannelIndex,
    rho: f64,
    vaa: &PairPotential,
    n_phi: usize,
) -> Result<f64, BasisError> {
    if a.j != b.j {
        return Err(BasisError::MismatchedJ(a.j, b.j));
    }
    let (pa, pb) = (basis.eigenpair(a)?, basis.eigenpair(b)?);
    let d = (a.m - b.m).unsigned_abs() as usize / 6;
    let vd = potential_moments(rho, &basis.grid, vaa, n_phi, d);
    let qw = basis.grid.measure();
    Ok(pa
        .components
        .iter()
        .zip(&pb.components)
        .map(|(ca, cb)| (0..qw.len()).map(|k| qw[k] * vd[d][k] * ca[k] * cb[k]).sum::<f64>())
        .sum())
}

/// W^(J)(ρ) sampled on a set of hyperradii.
#[derive(Debug, Clone)]
pub struct WTable {
    pub j: u32,
    pub channels: Vec<ChannelIndex>,
    pub rho: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
}

impl WTable {
    pub fn build(basis: &ChannelBasis, j: u32, rho: &[f64], vaa: &PairPotential, n_phi: usize) -> Self {
        let blocks = rho.par_iter().map(|&r| w_matrix(basis, j, r, vaa, n_phi)).collect();
        Self { j, channels: basis.channels(j), rho: rho.to_vec(), blocks }
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    fn to_container(&self) -> Container {
        let mut blocks = vec![self.rho.clone()];
        blocks.extend(self.blocks.iter().map(|b| b.as_slice().to_vec()));
        Container::new("w-table", vec![self.j as i64, self.channels.len() as i64, self.rho.len() as i64], blocks)
    }

    /// Cached build keyed by basis, radial nodes, potential and φ resolution.
    pub fn load_or_build(
        basis: &ChannelBasis,
        j: u32,
        rho: &[f64],
        vaa: &PairPotential,
        n_phi: usize,
        cache_dir: Option<&Path>,
    ) -> Result<Self, BasisError> {
        let Some(dir) = cache_dir else {
            return Ok(Self::build(basis, j, rho, vaa, n_phi));
        };
        let mut key = format!("w|{}|{}|{}|{}|", basis.fingerprint(), j, vaa.fingerprint(), n_phi);
        for r in rho {
            key.push_str(&format!("{:x}", r.to_bits()));
        }
        let key = sha256_hex(key.as_bytes());
        let path = dir.join(format!("wtable-{}.bin", &key[..16]));
        let channels = basis.channels(j);
        let dim = channels.len();
        if let Ok(c) = Container::read_kind(&path, "w-table") {
            let ok = c.header == vec![j as i64, dim as i64, rho.len() as i64]
                && c.blocks.len() == rho.len() + 1
                && c.blocks[0] == rho
                && c.blocks[1..].iter().all(|b| b.len() == dim * dim);
            if ok {
                let blocks = c.blocks[1..].iter().map(|b| DMatrix::from_column_slice(dim, dim, b)).collect();
                return Ok(Self { j, channels, rho: rho.to_vec(), blocks });
            }
            log::warn!("ignoring stale W cache {}", path.display());
        }
        let table = Self::build(basis, j, rho, vaa, n_phi);
        table.to_container().write(&path)?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_m0_spectrum_is_legendre() {
        let grid = ThetaGrid::gauss(24).unwrap();
        let pairs = solve_theta(0, 0, &grid, 4).unwrap();
        for (n, p) in pairs.iter().enumerate() {
            let exact = -16.0 * (n * (n + 1)) as f64;
            assert!((p.eigenvalue - exact).abs() < 1e-8 * (1.0 + exact.abs()), "{n}: {}", p.eigenvalue);
        }
        // nodeless ground component
        assert!(pairs[0].components[0].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn j2_operator_is_block_tridiagonal() {
        let grid = ThetaGrid::gauss(6).unwrap();
        let op = theta_operator(2, 0, &grid);
        let n = grid.len();
        for k in 0..n {
            let th = grid.nodes()[k];
            let (s2, c2) = (2.0 * th).sin_cos();
            let expect = grid.measure()[k] * c2 * 2.0 * 6f64.sqrt() / (s2 * s2);
            assert!((op.a[(k, n + k)] - expect).abs() < 1e-12 * expect.abs());
            assert!((op.a[(n + k, 2 * n + k)] - expect).abs() < 1e-12 * expect.abs());
            for l in 0..n {
                assert_eq!(op.a[(k, 2 * n + l)], 0.0);
                if l != k {
                    assert_eq!(op.a[(k, n + l)], 0.0);
                }
            }
        }
    }

    #[test]
    fn quadrupole_harmonic_eigenvalue() {
        // K = 2 hyperspherical harmonic with J = 2: Ē = −K(K+4) = −12
        let grid = ThetaGrid::gauss(30).unwrap();
        let pairs = solve_theta(2, 0, &grid, 1).unwrap();
        assert!((pairs[0].eigenvalue + 12.0).abs() < 1e-8, "{}", pairs[0].eigenvalue);
        // lowest m = 6 harmonic has K = 6
        let pairs = solve_theta(0, 6, &grid, 1).unwrap();
        assert!((pairs[0].eigenvalue + 60.0).abs() < 1e-7, "{}", pairs[0].eigenvalue);
    }

    #[test]
    fn endpoint_grid_rejected() {
        assert!(matches!(
            ThetaGrid::with_nodes(vec![0.0, 0.3], vec![0.1, 0.1]),
            Err(BasisError::SingularGrid)
        ));
    }

    #[test]
    fn g_triangle_rule_and_j0_zero() {
        let basis =
            ChannelBasis::build(ThetaGrid::gauss(16).unwrap(), Truncation { j_max: 4, m_max: 0, n_max: 2 }).unwrap();
        assert_eq!(basis.coupling_g(0, 4, 0, 0, 0), 0.0);
        for a in 0..3 {
            for b in 0..3 {
                assert!(basis.coupling_g(0, 0, 0, a, b).abs() < 1e-14);
                assert_eq!(basis.coupling_g(2, 4, 0, a, b), basis.coupling_g(4, 2, 0, b, a));
            }
        }
        assert!(basis.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn constant_potential_w_is_diagonal() {
        let basis =
            ChannelBasis::build(ThetaGrid::gauss(16).unwrap(), Truncation { j_max: 2, m_max: 6, n_max: 2 }).unwrap();
        let w = w_matrix(&basis, 2, 7.0, &PairPotential::Constant(0.25), 24);
        for r in 0..w.nrows() {
            for c in 0..w.ncols() {
                let expect = if r == c { 0.75 } else { 0.0 };
                assert!((w[(r, c)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = Truncation { j_max: 2, m_max: 6, n_max: 1 };
        let a = ChannelBasis::load_or_build(ThetaGrid::gauss(10).unwrap(), t, Some(dir.path())).unwrap();
        let b = ChannelBasis::load_or_build(ThetaGrid::gauss(10).unwrap(), t, Some(dir.path())).unwrap();
        let idx = ChannelIndex::new(2, 6, 1).unwrap();
        assert_eq!(a.eigenpair(idx).unwrap(), b.eigenpair(idx).unwrap());
    }
}
