//! Run configuration: a flat `key = value` text format grouped in `[section]`
//! blocks. The full key list with defaults is in `docs/config.md`.

use super::ShellError;
use crate::chanbasis::Truncation;
use crate::evolve::PropagationConfig;
use crate::interaction::{units, PairPotential, Polarizabilities};
use crate::refmodels::DimerKick;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

const KEYS: &[(&str, &[&str])] = &[
    ("potential", &["model", "file", "mass"]),
    ("polarizability", &["model", "iso_file", "aniso_file"]),
    ("grid", &["rho_min", "rho_max", "rho_points", "stretch", "theta_points", "phi_points", "kick_phi_points", "kick_beta_min"]),
    ("truncation", &["j_max", "m_max", "n_max"]),
    ("kick", &["intensity", "tau_fs", "j_store"]),
    ("stationary", &["states", "dimer_r_max", "dimer_points"]),
    ("propagation", &["dt", "max_order", "cutoff", "checkpoint_ps", "total_ps", "mask_fraction"]),
    (
        "observe",
        &["kinds", "samples", "burn_in", "chains", "bins", "floor", "r_max", "frame_extent", "frame_bins", "saturation"],
    ),
    ("run", &["output", "seed", "cache"]),
    ("sweep", &["intensities"]),
    ("rigid", &["distances", "total_ps", "samples", "j_max"]),
    ("dimer", &["r_min", "r_max", "points", "dt", "checkpoint_ps", "total_ps", "kick", "scale", "rho_edges"]),
];

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSource {
    /// Analytic model, e.g. `lj:EPS,SIGMA` (hartree, bohr).
    Model(String),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolarizabilitySource {
    DipoleInducedDipole { alpha: f64, r_core: f64 },
    Files { iso: PathBuf, aniso: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObserveKind {
    Ker,
    AlignRho,
    AlignR,
    Pairs,
    Frame,
}

impl ObserveKind {
    pub const ALL: [ObserveKind; 5] = [Self::Ker, Self::AlignRho, Self::AlignR, Self::Pairs, Self::Frame];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ker => "ker",
            Self::AlignRho => "align-rho",
            Self::AlignR => "align-r",
            Self::Pairs => "pairs",
            Self::Frame => "frame",
        }
    }

    pub fn needs_sampling(self) -> bool {
        !matches!(self, Self::AlignRho)
    }
}

impl FromStr for ObserveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s.trim()).ok_or_else(|| format!("unknown observable '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_points: usize,
    pub stretch: f64,
    pub theta_points: usize,
    pub phi_points: usize,
    pub kick_phi_points: usize,
    pub kick_beta_min: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KickConfig {
    /// Peak intensity in W/cm².
    pub intensity: f64,
    pub tau_fs: f64,
    pub j_store: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryConfig {
    pub states: usize,
    pub dimer_r_max: f64,
    pub dimer_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserveConfig {
    pub kinds: Vec<ObserveKind>,
    pub samples: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub bins: usize,
    pub floor: f64,
    /// Upper edge of the pair-distance axis (bohr).
    pub r_max: f64,
    pub frame_extent: f64,
    pub frame_bins: usize,
    pub saturation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidConfig {
    pub distances: [f64; 3],
    pub total_ps: f64,
    pub samples: usize,
    /// Fixed rotor truncation; `None` enlarges it until converged.
    pub j_max: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimerModelConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    pub dt: f64,
    pub checkpoint_ps: f64,
    pub total_ps: f64,
    pub kick: DimerKick,
    pub scale: f64,
    pub rho_edges: Vec<f64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub potential: PotentialSource,
    /// Atomic mass (electron masses).
    pub mass: f64,
    pub polarizability: PolarizabilitySource,
    pub grid: GridConfig,
    pub truncation: Truncation,
    pub kick: KickConfig,
    pub stationary: StationaryConfig,
    pub propagation: PropagationConfig,
    pub observe: ObserveConfig,
    pub output: PathBuf,
    pub seed: u64,
    pub cache: bool,
    pub sweep_intensities: Vec<f64>,
    pub rigid: RigidConfig,
    pub dimer: DimerModelConfig,
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Raw {
    entries: BTreeMap<(String, String), Entry>,
}

fn parse_err(line: usize, field: &str, msg: impl Into<String>) -> ShellError {
    ShellError::Parse { line, field: field.to_string(), msg: msg.into() }
}

impl Raw {
    fn parse(text: &str) -> Result<Self, ShellError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (k, raw_line) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw_line.split_once(" #").map_or(raw_line, |(a, _)| a).trim();
            if content.is_empty() || content.starts_with('#') || content.starts_with(';') {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(parse_err(line, name, "unknown section"));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(parse_err(line, content, "expected 'key = value'"));
            };
            let key = key.trim();
            let Some(sec) = &section else {
                return Err(parse_err(line, key, "key outside any section"));
            };
            let field = format!("{sec}.{key}");
            let known = KEYS.iter().find(|(s, _)| s == sec).is_some_and(|(_, ks)| ks.contains(&key));
            if !known {
                return Err(parse_err(line, &field, "unknown key"));
            }
            let entry = Entry { line, value: value.trim().to_string(), used: false };
            if entries.insert((sec.clone(), key.to_string()), entry).is_some() {
                return Err(parse_err(line, &field, "duplicate key"));
            }
        }
        Ok(Self { entries })
    }

    fn text(&mut self, sec: &str, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(&(sec.to_string(), key.to_string())).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn get<T: FromStr>(&mut self, sec: &str, key: &str) -> Result<Option<T>, ShellError> {
        match self.text(sec, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| parse_err(line, &format!("{sec}.{key}"), format!("cannot parse '{v}'"))),
        }
    }

    fn or<T: FromStr>(&mut self, sec: &str, key: &str, default: T) -> Result<T, ShellError> {
        Ok(self.get(sec, key)?.unwrap_or(default))
    }

    fn list(&mut self, sec: &str, key: &str) -> Result<Option<Vec<f64>>, ShellError> {
        match self.text(sec, key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| parse_err(line, &format!("{sec}.{key}"), format!("cannot parse list '{v}'"))),
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base`. Defaults
    /// are applied but constraints are not checked (see [`RunConfig::check`]).
    pub fn parse(text: &str, base: &Path) -> Result<Self, ShellError> {
        let mut r = Raw::parse(text)?;
        let potential = match (r.text("potential", "model"), r.text("potential", "file")) {
            (Some((_, m)), None) => PotentialSource::Model(m),
            (None, Some((_, f))) => PotentialSource::File(resolve(base, &f)),
            (Some((line, _)), Some(_)) => return Err(parse_err(line, "potential", "give either model or file, not both")),
            (None, None) => return Err(parse_err(0, "potential", "missing [potential] model or file")),
        };
        let polarizability = match (r.text("polarizability", "model"), r.text("polarizability", "iso_file"), r.text("polarizability", "aniso_file")) {
            (Some((line, m)), None, None) => {
                let bad = || parse_err(line, "polarizability.model", format!("expected did:ALPHA,R_CORE, got '{m}'"));
                let args = m.strip_prefix("did:").ok_or_else(bad)?;
                let v: Vec<f64> = args.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
                match v.as_slice() {
                    &[alpha, r_core] => PolarizabilitySource::DipoleInducedDipole { alpha, r_core },
                    _ => return Err(bad()),
                }
            }
            (None, Some((_, iso)), Some((_, aniso))) => PolarizabilitySource::Files { iso: resolve(base, &iso), aniso: resolve(base, &aniso) },
            (None, None, None) => PolarizabilitySource::DipoleInducedDipole { alpha: 1.383, r_core: 2.0 },
            _ => return Err(parse_err(0, "polarizability", "give either model or both iso_file and aniso_file")),
        };
        let grid = GridConfig {
            rho_min: r.or("grid", "rho_min", 5.0)?,
            rho_max: r.or("grid", "rho_max", 1500.0)?,
            rho_points: r.or("grid", "rho_points", 900)?,
            stretch: r.or("grid", "stretch", 3.0)?,
            theta_points: r.or("grid", "theta_points", 500)?,
            phi_points: r.or("grid", "phi_points", 240)?,
            kick_phi_points: r.or("grid", "kick_phi_points", 24)?,
            kick_beta_min: r.or("grid", "kick_beta_min", 16)?,
        };
        let truncation = Truncation {
            j_max: r.or("truncation", "j_max", 4)?,
            m_max: r.or("truncation", "m_max", 42)?,
            n_max: r.or("truncation", "n_max", 29)?,
        };
        let kick = KickConfig {
            intensity: r.or("kick", "intensity", 3.5e14)?,
            tau_fs: r.or("kick", "tau_fs", 331.0)?,
            j_store: r.or("kick", "j_store", truncation.j_max)?,
        };
        let stationary = StationaryConfig {
            states: r.or("stationary", "states", 2)?,
            dimer_r_max: r.or("stationary", "dimer_r_max", 1500.0)?,
            dimer_points: r.or("stationary", "dimer_points", 6000)?,
        };
        let pd = PropagationConfig::default();
        let propagation = PropagationConfig {
            dt: r.or("propagation", "dt", pd.dt)?,
            max_order: r.or("propagation", "max_order", pd.max_order)?,
            cutoff: r.or("propagation", "cutoff", pd.cutoff)?,
            checkpoint_every: units::ps_to_au(r.or("propagation", "checkpoint_ps", 1.0)?),
            total_time: units::ps_to_au(r.or("propagation", "total_ps", 50.0)?),
            mask_fraction: r.or("propagation", "mask_fraction", 0.0)?,
        };
        let kinds = match r.text("observe", "kinds") {
            None => ObserveKind::ALL.to_vec(),
            Some((line, v)) => {
                let mut k = v
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<Vec<ObserveKind>, _>>()
                    .map_err(|e| parse_err(line, "observe.kinds", e))?;
                k.sort();
                k.dedup();
                k
            }
        };
        let observe = ObserveConfig {
            kinds,
            samples: r.or("observe", "samples", 1_000_000)?,
            burn_in: r.or("observe", "burn_in", 10_000)?,
            chains: r.or("observe", "chains", 4)?,
            bins: r.or("observe", "bins", 200)?,
            floor: r.or("observe", "floor", 1e-6)?,
            r_max: r.or("observe", "r_max", 3f64.powf(0.25) * grid.rho_max)?,
            frame_extent: r.or("observe", "frame_extent", 30.0)?,
            frame_bins: r.or("observe", "frame_bins", 100)?,
            saturation: r.or("observe", "saturation", 1.0)?,
        };
        let output = resolve(base, &r.or("run", "output", "out".to_string())?);
        let rigid = RigidConfig {
            distances: match r.list("rigid", "distances")? {
                None => [7.833, 7.478, 7.478],
                Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
                Some(_) => return Err(parse_err(0, "rigid.distances", "expected three distances r12, r13, r23")),
            },
            total_ps: r.or("rigid", "total_ps", 50.0)?,
            samples: r.or("rigid", "samples", 4001)?,
            j_max: r.get("rigid", "j_max")?,
        };
        let dimer_kick = match r.text("dimer", "kick") {
            None => DimerKick::Linear,
            Some((_, v)) if v == "linear" => DimerKick::Linear,
            Some((line, v)) => {
                let l_max = v.strip_prefix("exact:").and_then(|x| x.trim().parse().ok());
                match l_max {
                    Some(l_max) => DimerKick::Exact { l_max },
                    None => return Err(parse_err(line, "dimer.kick", format!("expected 'linear' or 'exact:L', got '{v}'"))),
                }
            }
        };
        let dimer = DimerModelConfig {
            r_min: r.or("dimer", "r_min", 3.8)?,
            r_max: r.or("dimer", "r_max", 100.0)?,
            points: r.or("dimer", "points", 4000)?,
            dt: r.or("dimer", "dt", 2.0)?,
            checkpoint_ps: r.or("dimer", "checkpoint_ps", 0.5)?,
            total_ps: r.or("dimer", "total_ps", 10.0)?,
            kick: dimer_kick,
            scale: r.or("dimer", "scale", 10_000.0)?,
            rho_edges: r.list("dimer", "rho_edges")?.unwrap_or_else(|| (0..=40).map(|k| 5.0 + 2.5 * k as f64).collect()),
        };
        let cfg = Self {
            potential,
            mass: r.or("potential", "mass", units::HE4_MASS)?,
            polarizability,
            grid,
            truncation,
            kick,
            stationary,
            propagation,
            observe,
            output,
            seed: r.or("run", "seed", 1)?,
            cache: r.or("run", "cache", true)?,
            sweep_intensities: r.list("sweep", "intensities")?.unwrap_or_else(|| vec![1.5e14, 2.0e14, 2.5e14, 3.0e14]),
            rigid,
            dimer,
        };
        if let Some(((s, k), e)) = r.entries.iter().find(|(_, e)| !e.used) {
            return Err(parse_err(e.line, &format!("{s}.{k}"), "key not valid in this combination"));
        }
        Ok(cfg)
    }

    /// Every violated constraint, in a stable order.
    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                bad.push(msg);
            }
        };
        match &self.potential {
            PotentialSource::Model(m) => need(PairPotential::from_model_spec(m).is_ok(), format!("potential.model: bad model '{m}'")),
            PotentialSource::File(p) => need(p.is_file(), format!("potential.file: {} does not exist", p.display())),
        }
        match &self.polarizability {
            PolarizabilitySource::DipoleInducedDipole { alpha, r_core } => {
                need(*alpha > 0.0 && *r_core > 0.0, format!("polarizability.model: alpha={alpha} and r_core={r_core} must be positive"))
            }
            PolarizabilitySource::Files { iso, aniso } => {
                need(iso.is_file(), format!("polarizability.iso_file: {} does not exist", iso.display()));
                need(aniso.is_file(), format!("polarizability.aniso_file: {} does not exist", aniso.display()));
            }
        }
        need(self.mass > 0.0, format!("potential.mass={} must be positive", self.mass));
        let g = &self.grid;
        need(g.rho_min > 0.0 && g.rho_max > g.rho_min, format!("grid: need 0 < rho_min < rho_max, got {} and {}", g.rho_min, g.rho_max));
        need(g.rho_points >= 8, format!("grid.rho_points={} is too small", g.rho_points));
        need(g.stretch >= 0.0, format!("grid.stretch={} must be nonnegative", g.stretch));
        need(g.theta_points >= 2, format!("grid.theta_points={} is too small", g.theta_points));
        need(g.phi_points >= 6, format!("grid.phi_points={} is too small", g.phi_points));
        need(g.kick_phi_points >= 1 && g.kick_beta_min >= 1, "grid: kick quadrature sizes must be positive".into());
        let t = &self.truncation;
        need(t.j_max > 0 && t.j_max % 2 == 0, format!("truncation.j_max={} must be positive and even", t.j_max));
        need(t.m_max > 0 && t.m_max % 6 == 0, format!("truncation.m_max={} must be a positive multiple of 6", t.m_max));
        need(t.n_max > 0, format!("truncation.n_max={} must be positive", t.n_max));
        need(self.kick.intensity >= 0.0, format!("kick.intensity={} must be nonnegative", self.kick.intensity));
        need(self.kick.tau_fs > 0.0, format!("kick.tau_fs={} must be positive", self.kick.tau_fs));
        need(self.kick.j_store % 2 == 0, format!("kick.j_store={} must be even", self.kick.j_store));
        need((1..=2).contains(&self.stationary.states), format!("stationary.states={} must be 1 or 2", self.stationary.states));
        need(self.stationary.dimer_points >= 8 && self.stationary.dimer_r_max > 0.0, "stationary: dimer grid must be nonempty".into());
        if let Err(e) = self.propagation.validate() {
            need(false, format!("propagation: {e}"));
        }
        let o = &self.observe;
        need(o.samples >= o.chains.max(1) && o.chains > 0, format!("observe: samples={} and chains={} inconsistent", o.samples, o.chains));
        need(o.bins > 0 && o.frame_bins > 0, "observe: bin counts must be positive".into());
        need(o.r_max > 0.0 && o.frame_extent > 0.0, "observe: r_max and frame_extent must be positive".into());
        need(o.saturation > 0.0 && o.saturation <= 1.0, format!("observe.saturation={} must lie in (0, 1]", o.saturation));
        need(self.sweep_intensities.iter().all(|&i| i >= 0.0), "sweep.intensities must be nonnegative".into());
        let rg = &self.rigid;
        let [a, b, c] = rg.distances;
        need(
            rg.distances.iter().all(|&d| d > 0.0) && a < b + c && b < a + c && c < a + b,
            format!("rigid.distances ({a}, {b}, {c}) do not form a triangle"),
        );
        need(rg.samples >= 2 && rg.total_ps > 0.0, "rigid: need samples >= 2 and total_ps > 0".into());
        need(rg.j_max.is_none_or(|j| j % 2 == 0), "rigid.j_max must be even".into());
        let d = &self.dimer;
        need(d.r_min >= 0.0 && d.r_max > d.r_min && d.points >= 8, "dimer: need 0 <= r_min < r_max and points >= 8".into());
        need(d.dt > 0.0 && d.checkpoint_ps > 0.0 && d.total_ps >= 0.0, "dimer: times must be positive".into());
        need(d.scale > 0.0, format!("dimer.scale={} must be positive", d.scale));
        need(d.rho_edges.len() >= 2 && d.rho_edges.windows(2).all(|w| w[1] > w[0]), "dimer.rho_edges must increase".into());
        if let DimerKick::Exact { l_max } = d.kick {
            need(l_max % 2 == 0, format!("dimer.kick exact:{l_max} needs even L"));
        }
        bad
    }

    /// Canonical text form, independent of the output location; equal
    /// configs give equal text.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let mut s = String::new();
        let _ = writeln!(s, "{c:?}");
        s
    }

    pub fn pair_potential(&self) -> Result<PairPotential, ShellError> {
        match &self.potential {
            PotentialSource::Model(m) => PairPotential::from_model_spec(m).map_err(|e| ShellError::config(e.to_string())),
            PotentialSource::File(p) => PairPotential::load(p).map_err(|e| ShellError::config(e.to_string())),
        }
    }

    pub fn polarizabilities(&self) -> Result<Polarizabilities, ShellError> {
        match &self.polarizability {
            PolarizabilitySource::DipoleInducedDipole { alpha, r_core } => Ok(Polarizabilities::dipole_induced_dipole(*alpha, *r_core)),
            PolarizabilitySource::Files { iso, aniso } => Polarizabilities::load(iso, aniso).map_err(|e| ShellError::config(e.to_string())),
        }
    }
}

/// Reads, parses and checks a config file, listing every violated constraint.
pub fn validate_config(path: &Path) -> Result<RunConfig, ShellError> {
    let text = std::fs::read_to_string(path).map_err(|e| ShellError::Parse {
        line: 0,
        field: path.display().to_string(),
        msg: format!("cannot read config: {e}"),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    validate_text(&text, base)
}

pub fn validate_text(text: &str, base: &Path) -> Result<RunConfig, ShellError> {
    let cfg = RunConfig::parse(text, base)?;
    let bad = cfg.check();
    if bad.is_empty() {
        Ok(cfg)
    } else {
        Err(ShellError::ConstraintViolation(bad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[potential]\nmodel = lj:4.75e-5,5.29\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = validate_text(MINIMAL, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.grid.rho_points, 900);
        assert_eq!((cfg.grid.rho_min, cfg.grid.rho_max), (5.0, 1500.0));
        assert_eq!((cfg.grid.theta_points, cfg.grid.phi_points), (500, 240));
        assert_eq!(cfg.truncation, Truncation { j_max: 4, m_max: 42, n_max: 29 });
        assert_eq!(cfg.observe.samples, 1_000_000);
        assert_eq!(cfg.sweep_intensities.len(), 4);
        assert_eq!(cfg.output, PathBuf::from("/tmp/out"));
    }

    #[test]
    fn m_max_not_multiple_of_six_is_rejected() {
        let text = format!("{MINIMAL}[truncation]\nm_max = 7\n");
        match validate_text(&text, Path::new(".")) {
            Err(ShellError::ConstraintViolation(v)) => assert!(v.iter().any(|m| m.contains("m_max=7"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_potential_file_names_the_path() {
        let text = "[potential]\nfile = no/such/potential.dat\n";
        match validate_text(text, Path::new("/base")) {
            Err(ShellError::ConstraintViolation(v)) => assert!(v.iter().any(|m| m.contains("/base/no/such/potential.dat"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_failures_are_listed() {
        let text = format!("{MINIMAL}[truncation]\nm_max = 7\nn_max = 0\n[kick]\ntau_fs = -1\n");
        match validate_text(&text, Path::new(".")) {
            Err(ShellError::ConstraintViolation(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_and_field() {
        let text = format!("{MINIMAL}\n[grid]\nrho_points = many\n");
        match validate_text(&text, Path::new(".")) {
            Err(ShellError::Parse { line, field, .. }) => assert_eq!((line, field.as_str()), (5, "grid.rho_points")),
            other => panic!("{other:?}"),
        }
        match validate_text("[grid]\nrho_pionts = 3\n", Path::new(".")) {
            Err(ShellError::Parse { line, field, .. }) => assert_eq!((line, field.as_str()), (2, "grid.rho_pionts")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comments_and_lists() {
        let text = format!("# run\n{MINIMAL}[observe]\nkinds = pairs, ker # trailing\n[sweep]\nintensities = 1e14, 2e14, 3e14\n");
        let cfg = validate_text(&text, Path::new(".")).unwrap();
        assert_eq!(cfg.observe.kinds, vec![ObserveKind::Ker, ObserveKind::Pairs]);
        assert_eq!(cfg.sweep_intensities, vec![1e14, 2e14, 3e14]);
    }

    #[test]
    fn canonical_form_tracks_changes() {
        let a = validate_text(MINIMAL, Path::new(".")).unwrap();
        let b = validate_text(&format!("{MINIMAL}[run]\nseed = 9\n"), Path::new(".")).unwrap();
        assert_eq!(a.canonical(), validate_text(MINIMAL, Path::new(".")).unwrap().canonical());
        assert_ne!(a.canonical(), b.canonical());
    }
}
