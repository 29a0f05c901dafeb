//! Pair potentials, polarizabilities, the laser-dimer coupling and pulse
//! parameters. Everything is in atomic units unless a name says otherwise.

use crate::hypergeom::TriangleGeometry;
use crate::numerics::cubic_interp;
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

pub mod units {
    /// Kelvin per hartree.
    pub const KELVIN_PER_HARTREE: f64 = 315_775.024_804_07;
    /// Seconds per atomic unit of time.
    pub const SECONDS_PER_AU: f64 = 2.418_884_326_585_7e-17;
    /// Intensity corresponding to |ε̄|² = 1 a.u., in W/cm².
    pub const INTENSITY_AU_W_CM2: f64 = 3.50945e16;
    /// ⁴He atom mass in electron masses.
    pub const HE4_MASS: f64 = 7296.30;

    pub fn mk_to_hartree(mk: f64) -> f64 {
        mk * 1e-3 / KELVIN_PER_HARTREE
    }
    pub fn hartree_to_mk(e: f64) -> f64 {
        e * KELVIN_PER_HARTREE * 1e3
    }
    pub fn fs_to_au(fs: f64) -> f64 {
        fs * 1e-15 / SECONDS_PER_AU
    }
    pub fn ps_to_au(ps: f64) -> f64 {
        ps * 1e-12 / SECONDS_PER_AU
    }
    pub fn au_to_ps(t: f64) -> f64 {
        t * SECONDS_PER_AU * 1e12
    }
    pub fn au_to_fs(t: f64) -> f64 {
        t * SECONDS_PER_AU * 1e15
    }
    /// Hyperradial mass for three identical atoms of mass `mu`.
    pub fn hyper_mass(mu: f64) -> f64 {
        mu / 3f64.sqrt()
    }
}

#[derive(Debug, Error)]
pub enum InteractionError {
    #[error("distance {0} outside the evaluator's domain")]
    OutOfRange(f64),
    #[error("energy must be nonzero")]
    ZeroEnergy,
    #[error("table {path}: line {line}: {msg}")]
    BadTable { path: String, line: usize, msg: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad model specification '{0}'")]
    BadModel(String),
    #[error("pulse parameter out of range: {0}")]
    BadPulse(String),
}

/// Strictly increasing two-column table with 4-point Lagrange interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub r: Vec<f64>,
    pub v: Vec<f64>,
}

impl Table {
    pub fn new(r: Vec<f64>, v: Vec<f64>) -> Result<Self, InteractionError> {
        let bad = |msg: &str| InteractionError::BadTable { path: "<memory>".into(), line: 0, msg: msg.into() };
        if r.len() != v.len() || r.len() < 4 {
            return Err(bad("need at least four (r, value) rows"));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("r must be strictly increasing"));
        }
        Ok(Self { r, v })
    }

    /// Parses "r value" rows; '#' starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self, InteractionError> {
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| InteractionError::BadTable { path: origin.into(), line: k + 1, msg };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(err(format!("expected 2 columns, found {}", cols.len())));
            }
            let x: f64 = cols[0].parse().map_err(|_| err(format!("bad number '{}'", cols[0])))?;
            let y: f64 = cols[1].parse().map_err(|_| err(format!("bad number '{}'", cols[1])))?;
            if let Some(&last) = r.last() {
                if !(x > last) {
                    return Err(err("r must be strictly increasing".into()));
                }
            }
            r.push(x);
            v.push(y);
        }
        Self::new(r, v).map_err(|e| match e {
            InteractionError::BadTable { msg, .. } => InteractionError::BadTable { path: origin.into(), line: 0, msg },
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self, InteractionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| InteractionError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn interp(&self, r: f64) -> f64 {
        cubic_interp(&self.r, &self.v, r)
    }

    fn first(&self) -> (f64, f64) {
        (self.r[0], self.v[0])
    }

    fn last(&self) -> (f64, f64) {
        (*self.r.last().unwrap(), *self.v.last().unwrap())
    }

    fn fingerprint(&self) -> String {
        let mut s = String::new();
        for (a, b) in self.r.iter().zip(&self.v) {
            s.push_str(&format!("{:016x}{:016x}", a.to_bits(), b.to_bits()));
        }
        s
    }
}

/// Atom-atom potential V_aa(r).
#[derive(Debug, Clone, PartialEq)]
pub enum PairPotential {
    /// −v0·exp(−r²/range²).
    Gaussian { v0: f64, range: f64 },
    /// 4ε[(σ/r)¹² − (σ/r)⁶].
    LennardJones { epsilon: f64, sigma: f64 },
    Constant(f64),
    /// Tabulated curve: A·exp(−b r) below the table, C₆-like r⁻⁶ tail above.
    Table { name: String, table: Table, core: Option<(f64, f64)> },
}

impl PairPotential {
    /// Parses "gauss:V0,R", "lj:EPS,SIGMA" or "const:V".
    pub fn from_model_spec(spec: &str) -> Result<Self, InteractionError> {
        let bad = || InteractionError::BadModel(spec.to_string());
        let (kind, args) = spec.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind.trim(), nums.as_slice()) {
            ("gauss", &[v0, range]) if range > 0.0 => Ok(Self::Gaussian { v0, range }),
            ("lj", &[epsilon, sigma]) if sigma > 0.0 => Ok(Self::LennardJones { epsilon, sigma }),
            ("const", &[v]) => Ok(Self::Constant(v)),
            _ => Err(bad()),
        }
    }

    pub fn from_table(name: &str, table: Table) -> Self {
        let core = {
            let (r1, v1) = (table.r[0], table.v[0]);
            let (r2, v2) = (table.r[1], table.v[1]);
            if v1 > 0.0 && v2 > 0.0 && v2 < v1 {
                let b = (v1 / v2).ln() / (r2 - r1);
                Some((v1 * (b * r1).exp(), b))
            } else {
                None
            }
        };
        Self::Table { name: name.to_string(), table, core }
    }

    pub fn load(path: &Path) -> Result<Self, InteractionError> {
        let table = Table::load(path)?;
        Ok(Self::from_table(&path.display().to_string(), table))
    }

    pub fn name(&self) -> String {
        match self {
            Self::Gaussian { v0, range } => format!("gauss:{v0},{range}"),
            Self::LennardJones { epsilon, sigma } => format!("lj:{epsilon},{sigma}"),
            Self::Constant(v) => format!("const:{v}"),
            Self::Table { name, .. } => name.clone(),
        }
    }

    /// Range over which the evaluator is defined without extrapolation.
    pub fn validity(&self) -> (f64, f64) {
        match self {
            Self::Table { table, .. } => (table.first().0, table.last().0),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn has_analytic_derivative(&self) -> bool {
        !matches!(self, Self::Table { .. })
    }

    /// Characteristic length beyond which the potential is negligible.
    pub fn range(&self) -> f64 {
        match self {
            Self::Gaussian { range, .. } => *range,
            Self::LennardJones { sigma, .. } => 4.0 * sigma,
            Self::Constant(_) => f64::INFINITY,
            Self::Table { table, .. } => table.last().0,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Self::Gaussian { v0, range } => -v0 * (-(r / range).powi(2)).exp(),
            Self::LennardJones { epsilon, sigma } => {
                let s6 = (sigma / r).powi(6);
                4.0 * epsilon * (s6 * s6 - s6)
            }
            Self::Constant(v) => *v,
            Self::Table { table, core, .. } => {
                let (r0, v0) = table.first();
                let (rn, vn) = table.last();
                if r < r0 {
                    match core {
                        Some((a, b)) => a * (-b * r).exp(),
                        None => v0,
                    }
                } else if r > rn {
                    vn * (rn / r).powi(6)
                } else {
                    table.interp(r)
                }
            }
        }
    }

    pub fn try_eval(&self, r: f64) -> Result<f64, InteractionError> {
        if !r.is_finite() || r < 0.0 {
            return Err(InteractionError::OutOfRange(r));
        }
        if let Self::Table { table, core: None, .. } = self {
            if r < table.first().0 {
                return Err(InteractionError::OutOfRange(r));
            }
        }
        Ok(self.eval(r))
    }

    /// Stable text identifying the curve, for cache keys.
    pub fn fingerprint(&self) -> String {
        match self {
            Self::Table { table, .. } => format!("table:{}", table.fingerprint()),
            other => other.name(),
        }
    }
}

pub fn trimer_potential(g: &TriangleGeometry, vaa: &PairPotential) -> Result<f64, InteractionError> {
    g.as_array().iter().map(|&r| vaa.try_eval(r)).sum()
}

/// A distance-dependent polarizability curve.
#[derive(Debug, Clone, PartialEq)]
pub enum PolCurve {
    /// Clamped to the first and last node outside the table.
    Table(Table),
    /// (Σ c_k r^k)·exp(−r²/w²) + asymptote.
    PolyGauss { coeffs: Vec<f64>, width: f64, asymptote: f64 },
    /// c·r^(−power), capped at r_core.
    Power { c: f64, power: i32, r_core: f64 },
    Zero,
}

impl PolCurve {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Self::Table(t) => {
                let (r0, v0) = t.first();
                let (rn, vn) = t.last();
                if r <= r0 {
                    v0
                } else if r >= rn {
                    vn
                } else {
                    t.interp(r)
                }
            }
            Self::PolyGauss { coeffs, width, asymptote } => {
                let poly = coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c);
                poly * (-(r / width).powi(2)).exp() + asymptote
            }
            Self::Power { c, power, r_core } => c * r.max(*r_core).powi(-power),
            Self::Zero => 0.0,
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            Self::Table(t) => format!("table:{}", t.fingerprint()),
            other => format!("{other:?}"),
        }
    }
}

/// Isotropic and anisotropic pair polarizabilities α_int(r), β_int(r).
#[derive(Debug, Clone, PartialEq)]
pub struct Polarizabilities {
    pub iso: PolCurve,
    pub aniso: PolCurve,
}

impl Polarizabilities {
    pub fn new(iso: PolCurve, aniso: PolCurve) -> Self {
        Self { iso, aniso }
    }

    /// Dipole-induced-dipole model for two atoms of polarizability `alpha`:
    /// α_int = 4α³/r⁶, β_int = 6α²/r³, both capped below `r_core`.
    pub fn dipole_induced_dipole(alpha: f64, r_core: f64) -> Self {
        Self {
            iso: PolCurve::Power { c: 4.0 * alpha.powi(3), power: 6, r_core },
            aniso: PolCurve::Power { c: 6.0 * alpha * alpha, power: 3, r_core },
        }
    }

    pub fn load(iso: &Path, aniso: &Path) -> Result<Self, InteractionError> {
        Ok(Self { iso: PolCurve::Table(Table::load(iso)?), aniso: PolCurve::Table(Table::load(aniso)?) })
    }

    pub fn fingerprint(&self) -> String {
        format!("{}|{}", self.iso.fingerprint(), self.aniso.fingerprint())
    }
}

/// α_int(r) + (β_int(r)/3)(3cos²ϑ − 1).
pub fn laser_dimer(r: f64, cos_theta: f64, pol: &Polarizabilities) -> f64 {
    pol.iso.eval(r) + pol.aniso.eval(r) / 3.0 * (3.0 * cos_theta * cos_theta - 1.0)
}

/// δ-pulse parameters: peak intensity (W/cm²) and FWHM duration (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserKick {
    pub intensity: f64,
    pub tau_fwhm: f64,
}

impl LaserKick {
    pub fn new(intensity: f64, tau_fwhm: f64) -> Result<Self, InteractionError> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(InteractionError::BadPulse(format!("intensity={intensity}")));
        }
        if !(tau_fwhm > 0.0) || !tau_fwhm.is_finite() {
            return Err(InteractionError::BadPulse(format!("tau={tau_fwhm}")));
        }
        Ok(Self { intensity, tau_fwhm })
    }

    pub fn from_fs(intensity: f64, tau_fs: f64) -> Result<Self, InteractionError> {
        Self::new(intensity, tau_fs * 1e-15)
    }

    /// |ε̄|² in atomic units.
    pub fn eps_bar_sq(&self) -> f64 {
        self.intensity / units::INTENSITY_AU_W_CM2
    }

    pub fn tau_au(&self) -> f64 {
        self.tau_fwhm / units::SECONDS_PER_AU
    }

    pub fn constant(&self) -> f64 {
        kick_constant(self)
    }
}

/// C = ½|ε̄|²·√(πτ²/(4 ln 2)) in atomic units.
pub fn kick_constant(k: &LaserKick) -> f64 {
    let tau = k.tau_au();
    0.5 * k.eps_bar_sq() * (PI * tau * tau / (4.0 * 2f64.ln())).sqrt()
}

/// h/|E| in atomic units of time.
pub fn timescale_of_energy(e: f64) -> Result<f64, InteractionError> {
    if e == 0.0 || !e.is_finite() {
        return Err(InteractionError::ZeroEnergy);
    }
    Ok(2.0 * PI / e.abs())
}
