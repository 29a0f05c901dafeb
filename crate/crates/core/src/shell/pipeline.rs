//! Stages share the run directory:
//!
//! ```text
//! stationary/  state-K.bin, energies.txt
//! kick/        packet.bin, decomposition.txt
//! propagate/   snap-NNNNN.bin (one per checkpoint), status.txt
//! observe/     observation records
//! sweep/ rigid/ dimer/
//! cache/       channel basis and W tables (not in the manifest)
//! ```
//!
//! Each stage directory holds `inputs.txt`, a hash of the configuration it was
//! produced from. A stage whose inputs changed is wiped together with every
//! stage downstream of it, so outputs from different configs never mix.

use super::{ObserveKind, RunConfig, RunManifest, ShellError, Stage};
use crate::chanbasis::{ChannelBasis, ThetaGrid, WTable};
use crate::container::{sha256_hex, write_atomic, Container};
use crate::evolve::{propagate, CoupledHamiltonian, EvolveError, ImaginaryConfig, WavePacket};
use crate::hypergeom::HyperPoint;
use crate::interaction::{kick_constant, units, LaserKick, PairPotential, Polarizabilities};
use crate::kick::{apply_delta_kick, decompose, intensity_scan, project_to_channels, IntensityScan, KickQuadrature};
use crate::observe::{
    alignment_r, alignment_rho, auto_edges, expval, frame_snapshot, ker, ker_distribution, mc_sample, pair_correlators, McConfig,
    ObsQuadrature, Observable, ObservationRecord, PacketDensity, PacketField, PairSelect, RecordData, Scope,
};
use crate::radial::RadialGrid;
use crate::refmodels::{
    count_oscillations, dimer_evolve, dimer_model_trimer, lowest_gap, rigid_kick_and_evolve, rigid_kick_converged, DimerConfig,
    RigidRun, RigidShape,
};
use crate::stationary::{mean_pair_distance, solve_dimer_ground, solve_trimer_bound, StationaryState};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

const INPUTS: &str = "inputs.txt";
const DONE: &str = "done";

fn hash(parts: &[&dyn std::fmt::Debug]) -> String {
    let mut s = String::new();
    for p in parts {
        let _ = writeln!(s, "{p:?}");
    }
    sha256_hex(s.as_bytes())
}

fn dir_of(cfg: &RunConfig, stage: Stage) -> PathBuf {
    cfg.output.join(stage.name())
}

fn downstream(stage: Stage) -> &'static [Stage] {
    match stage {
        Stage::Stationary => &[Stage::Kick, Stage::Propagate, Stage::Observe, Stage::Sweep],
        Stage::Kick => &[Stage::Propagate, Stage::Observe],
        Stage::Propagate => &[Stage::Observe],
        _ => &[],
    }
}

/// Hash of everything a stage's outputs depend on.
pub fn stage_fingerprint(cfg: &RunConfig, stage: Stage) -> String {
    let stationary = hash(&[&cfg.potential, &cfg.mass, &cfg.grid, &cfg.truncation, &cfg.stationary]);
    let kick = hash(&[&stationary, &cfg.polarizability, &cfg.kick]);
    let p = &cfg.propagation;
    let propagate = hash(&[&kick, &p.dt, &p.max_order, &p.cutoff, &p.checkpoint_every, &p.mask_fraction]);
    match stage {
        Stage::Setup => hash(&[&cfg.potential, &cfg.grid, &cfg.truncation]),
        Stage::Stationary => stationary,
        Stage::Kick => kick,
        Stage::Propagate => propagate,
        Stage::Observe => {
            let o = &cfg.observe;
            hash(&[&propagate, &o.samples, &o.burn_in, &o.chains, &o.bins, &o.floor, &o.r_max, &o.frame_extent, &o.frame_bins, &o.saturation, &cfg.seed])
        }
        Stage::Sweep => hash(&[&stationary, &cfg.polarizability, &cfg.kick, &cfg.sweep_intensities]),
        Stage::RigidBody => hash(&[&cfg.polarizability, &cfg.kick, &cfg.rigid]),
        Stage::DimerModel => {
            let o = &cfg.observe;
            hash(&[&cfg.potential, &cfg.polarizability, &cfg.kick, &cfg.dimer, &o.samples, &o.burn_in, &o.chains, &cfg.seed])
        }
    }
}

fn read_inputs(dir: &Path) -> Option<String> {
    std::fs::read_to_string(dir.join(INPUTS)).ok().map(|s| s.trim().to_string())
}

fn remove_dir(dir: &Path) -> Result<(), ShellError> {
    match std::fs::remove_dir_all(dir) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(ShellError::io(dir)(e)),
        _ => Ok(()),
    }
}

/// Prepares a stage directory. Returns true when it already holds outputs
/// for the current inputs.
fn claim(cfg: &RunConfig, stage: Stage) -> Result<bool, ShellError> {
    let dir = dir_of(cfg, stage);
    let fp = stage_fingerprint(cfg, stage);
    if read_inputs(&dir).as_deref() == Some(fp.as_str()) {
        return Ok(true);
    }
    if dir.exists() {
        log::info!("{stage} inputs changed; clearing {} and downstream stages", dir.display());
    }
    remove_dir(&dir)?;
    for &d in downstream(stage) {
        remove_dir(&dir_of(cfg, d))?;
    }
    write_file(&dir.join(INPUTS), format!("{fp}\n").as_bytes())?;
    Ok(false)
}

fn is_done(cfg: &RunConfig, stage: Stage) -> bool {
    let dir = dir_of(cfg, stage);
    read_inputs(&dir).as_deref() == Some(stage_fingerprint(cfg, stage).as_str()) && dir.join(DONE).exists()
}

fn require(cfg: &RunConfig, stage: Stage, needs: Stage) -> Result<(), ShellError> {
    if is_done(cfg, needs) {
        Ok(())
    } else {
        Err(ShellError::MissingStage { stage, needs })
    }
}

fn mark_done(cfg: &RunConfig, stage: Stage) -> Result<(), ShellError> {
    write_file(&dir_of(cfg, stage).join(DONE), b"")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ShellError> {
    write_atomic(path, bytes).map_err(ShellError::io(path))
}

fn write_record(path: &Path, rec: &ObservationRecord) -> Result<(), ShellError> {
    write_file(path, rec.to_text().as_bytes())
}

fn write_container(stage: Stage, path: &Path, c: &Container) -> Result<(), ShellError> {
    c.write(path).map_err(ShellError::stage(stage))
}

fn read_container(stage: Stage, path: &Path, kind: &str) -> Result<Container, ShellError> {
    Container::read_kind(path, kind).map_err(ShellError::stage(stage))
}

/// Inputs shared by the trimer stages.
pub struct Model {
    pub vaa: PairPotential,
    pub pol: Polarizabilities,
    pub grid: RadialGrid,
    pub basis: ChannelBasis,
}

fn cache_dir(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.cache.then(|| cfg.output.join("cache"))
}

impl Model {
    pub fn build(cfg: &RunConfig) -> Result<Self, ShellError> {
        let vaa = cfg.pair_potential()?;
        let pol = cfg.polarizabilities()?;
        let g = &cfg.grid;
        let grid = RadialGrid::new(g.rho_min, g.rho_max, g.rho_points, g.stretch).map_err(ShellError::stage(Stage::Setup))?;
        let theta = ThetaGrid::gauss(g.theta_points).map_err(ShellError::stage(Stage::Setup))?;
        let basis = ChannelBasis::load_or_build(theta, cfg.truncation, cache_dir(cfg).as_deref()).map_err(ShellError::stage(Stage::Setup))?;
        Ok(Self { vaa, pol, grid, basis })
    }

    /// Coupled Hamiltonian over the J blocks `0..=j_top` of the basis.
    pub fn hamiltonian(&self, cfg: &RunConfig, j_top: u32) -> Result<CoupledHamiltonian, ShellError> {
        let cache = cache_dir(cfg);
        let tables = cfg
            .truncation
            .js()
            .filter(|&j| j <= j_top)
            .map(|j| WTable::load_or_build(&self.basis, j, self.grid.nodes(), &self.vaa, cfg.grid.phi_points, cache.as_deref()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(ShellError::stage(Stage::Setup))?;
        let refs: Vec<&WTable> = tables.iter().collect();
        CoupledHamiltonian::from_basis(self.grid.clone(), units::hyper_mass(cfg.mass), &self.basis, &refs).map_err(ShellError::stage(Stage::Setup))
    }

    pub fn kick_quadrature(&self, cfg: &RunConfig) -> KickQuadrature {
        KickQuadrature::new(cfg.grid.kick_phi_points, cfg.grid.kick_beta_min)
    }
}

fn pulse_constant(cfg: &RunConfig, stage: Stage) -> Result<f64, ShellError> {
    let k = LaserKick::from_fs(cfg.kick.intensity, cfg.kick.tau_fs).map_err(ShellError::stage(stage))?;
    Ok(kick_constant(&k))
}

fn state_path(cfg: &RunConfig, k: usize) -> PathBuf {
    dir_of(cfg, Stage::Stationary).join(format!("state-{k}.bin"))
}

/// Bound states written by the stationary stage.
pub fn load_states(cfg: &RunConfig) -> Result<Vec<StationaryState>, ShellError> {
    (0..cfg.stationary.states)
        .map(|k| {
            let c = read_container(Stage::Stationary, &state_path(cfg, k), "stationary-state")?;
            StationaryState::from_container(&c).map_err(ShellError::stage(Stage::Stationary))
        })
        .collect()
}

/// Dimer ground state and the lowest trimer states (J = 0).
pub fn solve_stationary(cfg: &RunConfig, model: &Model) -> Result<Vec<StationaryState>, ShellError> {
    if claim(cfg, Stage::Stationary)? && is_done(cfg, Stage::Stationary) {
        return load_states(cfg);
    }
    let st = Stage::Stationary;
    let s = &cfg.stationary;
    let dgrid = RadialGrid::new(0.0, s.dimer_r_max, s.dimer_points, 0.0).map_err(ShellError::stage(st))?;
    let dimer = solve_dimer_ground(&model.vaa, &dgrid, cfg.mass / 2.0).map_err(ShellError::stage(st))?;
    let h0 = model.hamiltonian(cfg, 0)?;
    let states = solve_trimer_bound(&h0, s.states, &ImaginaryConfig::default()).map_err(ShellError::stage(st))?;
    let mut text = String::from("# state energy_mK mean_pair_distance_bohr\n");
    let _ = writeln!(text, "dimer {:.10e} {:.10e}", units::hartree_to_mk(dimer.energy), dimer.mean_r());
    for (k, state) in states.iter().enumerate() {
        write_container(st, &state_path(cfg, k), &state.to_container())?;
        let r = mean_pair_distance(state, &model.basis, &model.grid, cfg.grid.phi_points);
        let _ = writeln!(text, "trimer-{k} {:.10e} {:.10e}", units::hartree_to_mk(state.energy), r);
        log::info!("trimer state {k}: E = {:.4} mK", units::hartree_to_mk(state.energy));
    }
    write_file(&dir_of(cfg, st).join("energies.txt"), text.as_bytes())?;
    mark_done(cfg, st)?;
    Ok(states)
}

fn packet_path(cfg: &RunConfig) -> PathBuf {
    dir_of(cfg, Stage::Kick).join("packet.bin")
}

fn load_packet(path: &Path) -> Result<WavePacket, ShellError> {
    let c = read_container(Stage::Propagate, path, "wave-packet")?;
    WavePacket::from_container(&c).map_err(ShellError::stage(Stage::Propagate))
}

/// δ-kick of the ground state, projected on the channel basis.
pub fn kick_stage(cfg: &RunConfig, model: &Model) -> Result<WavePacket, ShellError> {
    require(cfg, Stage::Kick, Stage::Stationary)?;
    if claim(cfg, Stage::Kick)? && is_done(cfg, Stage::Kick) {
        return load_packet(&packet_path(cfg));
    }
    let st = Stage::Kick;
    let states = load_states(cfg)?;
    let c = pulse_constant(cfg, st)?;
    let quad = model.kick_quadrature(cfg);
    let kicked = apply_delta_kick(&states[0], &model.basis, &model.grid, c, &model.pol, &quad, cfg.kick.j_store);
    let packet = project_to_channels(&kicked, &model.basis).map_err(ShellError::stage(st))?;
    let refs: Vec<&StationaryState> = states.iter().collect();
    let report = decompose(&kicked, &packet, &refs, &model.basis);
    let mut text = format!("# kick constant C = {c:.10e}\n");
    if let Some(g) = report.c_ground {
        let _ = writeln!(text, "# |c_ground|^2 = {:.10e}", g.norm_sqr());
    }
    if let Some(e) = report.c_efimov {
        let _ = writeln!(text, "# |c_excited|^2 = {:.10e}", e.norm_sqr());
    }
    if let Some(u) = report.unbound {
        let _ = writeln!(text, "# unbound J=0 = {u:.10e}");
    }
    let _ = writeln!(text, "# captured by basis = {:.10e}", report.captured());
    text.push_str(&report.to_table());
    write_container(st, &packet_path(cfg), &packet.to_container())?;
    write_file(&dir_of(cfg, st).join("decomposition.txt"), text.as_bytes())?;
    mark_done(cfg, st)?;
    Ok(packet)
}

fn snapshot_path(cfg: &RunConfig, k: usize) -> PathBuf {
    dir_of(cfg, Stage::Propagate).join(format!("snap-{k:05}.bin"))
}

/// Checkpoint indices present on disk, ascending.
pub fn snapshots(cfg: &RunConfig) -> Vec<usize> {
    let Ok(rd) = std::fs::read_dir(dir_of(cfg, Stage::Propagate)) else {
        return Vec::new();
    };
    let mut v: Vec<usize> = rd
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let n = e.file_name().to_string_lossy().into_owned();
            n.strip_prefix("snap-")?.strip_suffix(".bin")?.parse().ok()
        })
        .collect();
    v.sort_unstable();
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagateOutcome {
    /// Time reached (a.u.).
    pub time: f64,
    pub checkpoints: usize,
    /// Relative norm change since the kick.
    pub norm_drift: f64,
}

/// Propagates the kicked packet up to `until` (a.u., capped at the configured
/// total), resuming from the latest checkpoint on disk.
pub fn propagate_stage(cfg: &RunConfig, model: &Model, until: Option<f64>) -> Result<PropagateOutcome, ShellError> {
    require(cfg, Stage::Propagate, Stage::Kick)?;
    let st = Stage::Propagate;
    claim(cfg, st)?;
    let every = cfg.propagation.checkpoint_every;
    let total = until.map_or(cfg.propagation.total_time, |u| u.min(cfg.propagation.total_time));
    let initial = load_packet(&packet_path(cfg))?;
    let n0 = initial.norm_sq().sqrt();
    let mut wp = match snapshots(cfg).last() {
        Some(&k) => {
            let wp = load_packet(&snapshot_path(cfg, k))?;
            log::info!("resuming from checkpoint {k} at t = {:.4} ps", units::au_to_ps(wp.time));
            wp
        }
        None => initial,
    };
    if wp.time < total - 1e-9 * cfg.propagation.dt {
        let h = model.hamiltonian(cfg, cfg.truncation.j_max)?;
        let mut pc = cfg.propagation;
        pc.total_time = total;
        let report = propagate(&h, &mut wp, &pc, |w| {
            let k = (w.time / every).round() as usize;
            w.to_container().write(&snapshot_path(cfg, k)).map_err(EvolveError::from)
        })
        .map_err(ShellError::stage(st))?;
        log::info!("propagated {} steps, {} H applications, {} retries", report.steps, report.h_applications, report.retries);
    } else if snapshots(cfg).is_empty() {
        write_container(st, &snapshot_path(cfg, 0), &wp.to_container())?;
    }
    let norm_drift = (wp.norm_sq().sqrt() - n0).abs() / n0;
    let checkpoints = snapshots(cfg).len();
    let text = format!("time_au = {:.10e}\ncheckpoints = {checkpoints}\nnorm_drift = {norm_drift:.6e}\n", wp.time);
    write_file(&dir_of(cfg, st).join("status.txt"), text.as_bytes())?;
    Ok(PropagateOutcome { time: wp.time, checkpoints, norm_drift })
}

fn propagation_norm_drift(cfg: &RunConfig) -> Option<f64> {
    let text = std::fs::read_to_string(dir_of(cfg, Stage::Propagate).join("status.txt")).ok()?;
    text.lines().find_map(|l| l.strip_prefix("norm_drift = ")?.parse().ok())
}

fn centres(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

fn series(observable: &str, scope: Scope, x_label: &str, x: Vec<f64>, values: Vec<f64>, errors: Option<Vec<f64>>) -> ObservationRecord {
    ObservationRecord {
        observable: observable.into(),
        scope: scope.to_string(),
        time: None,
        seed: None,
        x_label: x_label.into(),
        y_label: observable.into(),
        data: RecordData::Series { x, values, errors },
    }
}

fn heatmap(observable: &str, seed: Option<u64>, x_label: &str, x: Vec<f64>, y: Vec<f64>, values: Vec<Vec<f64>>) -> ObservationRecord {
    ObservationRecord {
        observable: observable.into(),
        scope: Scope::Full.to_string(),
        time: None,
        seed,
        x_label: x_label.into(),
        y_label: "t_ps".into(),
        data: RecordData::Heatmap { x, y, values },
    }
}

/// Transposes per-time rows into per-x columns.
fn by_x(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nx = rows.first().map_or(0, Vec::len);
    (0..nx).map(|i| rows.iter().map(|r| r[i]).collect()).collect()
}

/// Computes the requested observables at every stored checkpoint and writes
/// them as observation records. Returns the written paths.
pub fn observe_stage(cfg: &RunConfig, model: &Model, kinds: &[ObserveKind]) -> Result<Vec<PathBuf>, ShellError> {
    require(cfg, Stage::Observe, Stage::Kick)?;
    let st = Stage::Observe;
    if read_inputs(&dir_of(cfg, Stage::Propagate)).as_deref() != Some(stage_fingerprint(cfg, Stage::Propagate).as_str()) {
        return Err(ShellError::MissingStage { stage: st, needs: Stage::Propagate });
    }
    let snaps = snapshots(cfg);
    if snaps.is_empty() {
        return Err(ShellError::MissingStage { stage: st, needs: Stage::Propagate });
    }
    claim(cfg, st)?;
    let dir = dir_of(cfg, st);
    let states = load_states(cfg)?;
    let bound: Vec<&StationaryState> = states.iter().collect();
    let (basis, grid) = (&model.basis, &model.grid);
    let q = ObsQuadrature::exact_for(basis);
    let o = &cfg.observe;
    let want = |k: ObserveKind| kinds.contains(&k);
    let sampling = kinds.iter().any(|k| k.needs_sampling());
    let fields: Vec<PacketField> = if want(ObserveKind::Ker) { states.iter().map(|s| PacketField::new(&s.packet, basis, grid)).collect() } else { Vec::new() };
    let r_edges = linspace(0.0, o.r_max, o.bins);
    let f_edges = linspace(-o.frame_extent, o.frame_extent, o.frame_bins);

    let mut times = Vec::new();
    let (mut rho_b, mut rho_g, mut cb, mut cg) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut pairs = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    let mut align_r: [Vec<Vec<f64>>; 3] = Default::default();
    let mut written = Vec::new();
    for &k in &snaps {
        let wp = load_packet(&snapshot_path(cfg, k))?;
        let t_ps = units::au_to_ps(wp.time);
        times.push(t_ps);
        if want(ObserveKind::AlignRho) {
            rho_b.push(alignment_rho(&wp, basis, grid, Observable::Cos2Beta, q, o.floor));
            rho_g.push(alignment_rho(&wp, basis, grid, Observable::Cos2Gamma, q, o.floor));
            cb.push(expval(&wp, basis, grid, Observable::Cos2Beta, Scope::Full, &bound, q).map_err(ShellError::stage(st))?);
            cg.push(expval(&wp, basis, grid, Observable::Cos2Gamma, Scope::Full, &bound, q).map_err(ShellError::stage(st))?);
        }
        if !sampling {
            continue;
        }
        let field = PacketField::new(&wp, basis, grid);
        let density = PacketDensity { field: &field, with_orientation: true };
        let mc = McConfig { samples: o.samples, burn_in: o.burn_in, chains: o.chains, seed: cfg.seed, stream: k as u64 };
        let samples = mc_sample(&density, &mc, None).map_err(ShellError::stage(st))?;
        if want(ObserveKind::Pairs) {
            let pc = pair_correlators(&samples);
            for (slot, e) in pairs.iter_mut().zip([pc.r_min, pc.r_ave, pc.r_max]) {
                slot.0.push(e.mean);
                slot.1.push(e.err);
            }
        }
        if want(ObserveKind::AlignR) {
            for (slot, which) in align_r.iter_mut().zip([PairSelect::Ave, PairSelect::Min, PairSelect::Max]) {
                slot.push(alignment_r(&samples, which, &r_edges).map_err(ShellError::stage(st))?);
            }
        }
        if want(ObserveKind::Ker) {
            let values: Vec<f64> = samples.points.iter().map(|p| ker(HyperPoint::raw(p[0], p[1], p[2]))).collect();
            let edges = auto_edges(&values, o.bins);
            let excited = states.get(1).zip(fields.get(1));
            let split = ker_distribution(&samples, &wp, &field, (&states[0], &fields[0]), excited, &edges).map_err(ShellError::stage(st))?;
            let rec = ObservationRecord {
                observable: "ker".into(),
                scope: Scope::Full.to_string(),
                time: Some(wp.time),
                seed: Some(cfg.seed),
                x_label: "ker_hartree".into(),
                y_label: "probability_density".into(),
                data: RecordData::Histogram {
                    edges: split.edges,
                    columns: vec![
                        ("total".into(), split.total),
                        ("ground".into(), split.ground),
                        ("scatt0".into(), split.scatt0),
                        ("higher_j".into(), split.higher_j),
                        ("cross".into(), split.cross),
                    ],
                    errors: None,
                },
            };
            let path = dir.join(format!("ker-t{k:05}.txt"));
            write_record(&path, &rec)?;
            written.push(path);
        }
        if want(ObserveKind::Frame) {
            let h = frame_snapshot(&samples, &f_edges, &f_edges, o.saturation);
            let mut rec = heatmap("frame-density", Some(cfg.seed), "x_bohr", centres(&f_edges), centres(&f_edges), h);
            rec.y_label = "y_bohr".into();
            rec.time = Some(wp.time);
            let path = dir.join(format!("frame-t{k:05}.txt"));
            write_record(&path, &rec)?;
            written.push(path);
        }
    }
    let mut emit = |name: &str, rec: ObservationRecord| -> Result<(), ShellError> {
        let path = dir.join(name);
        write_record(&path, &rec)?;
        written.push(path);
        Ok(())
    };
    if want(ObserveKind::AlignRho) {
        let rho = grid.nodes().to_vec();
        emit("align-rho-cos2beta.txt", heatmap("cos2beta", None, "rho_bohr", rho.clone(), times.clone(), by_x(&rho_b)))?;
        emit("align-rho-cos2gamma.txt", heatmap("cos2gamma", None, "rho_bohr", rho, times.clone(), by_x(&rho_g)))?;
        emit("alignment-cos2beta.txt", series("cos2beta", Scope::Full, "t_ps", times.clone(), cb, None))?;
        emit("alignment-cos2gamma.txt", series("cos2gamma", Scope::Full, "t_ps", times.clone(), cg, None))?;
    }
    if want(ObserveKind::Pairs) {
        for (name, (v, e)) in ["pair-min", "pair-ave", "pair-max"].into_iter().zip(pairs) {
            let mut rec = series(name, Scope::Full, "t_ps", times.clone(), v, Some(e));
            rec.seed = Some(cfg.seed);
            emit(&format!("{name}.txt"), rec)?;
        }
    }
    if want(ObserveKind::AlignR) {
        for (name, rows) in ["ave", "min", "max"].into_iter().zip(&align_r) {
            let rec = heatmap(&format!("cos2-pair-{name}"), Some(cfg.seed), "r_bohr", centres(&r_edges), times.clone(), by_x(rows));
            emit(&format!("align-r-{name}.txt"), rec)?;
        }
    }
    mark_done(cfg, st)?;
    Ok(written)
}

/// Ground-state survival over the configured intensities.
pub fn sweep_stage(cfg: &RunConfig, model: &Model) -> Result<IntensityScan, ShellError> {
    require(cfg, Stage::Sweep, Stage::Stationary)?;
    let st = Stage::Sweep;
    claim(cfg, st)?;
    let states = load_states(cfg)?;
    let quad = model.kick_quadrature(cfg);
    let scan = intensity_scan(&states[0], &model.basis, &model.grid, &model.pol, cfg.kick.tau_fs, &cfg.sweep_intensities, &quad)
        .map_err(ShellError::stage(st))?;
    let mut text = format!("# tau_fs = {}\n# fit: survival = {:.10e} + {:.10e} I + {:.10e} I^2\n# intensity_w_cm2 survival\n", cfg.kick.tau_fs, scan.fit[0], scan.fit[1], scan.fit[2]);
    for (i, s) in scan.intensities.iter().zip(&scan.survival) {
        let _ = writeln!(text, "{i:.6e} {s:.10e}");
    }
    write_file(&dir_of(cfg, st).join("survival.txt"), text.as_bytes())?;
    mark_done(cfg, st)?;
    Ok(scan)
}

/// Rigid rotor at the configured frozen shape.
pub fn rigid_stage(cfg: &RunConfig) -> Result<RigidRun, ShellError> {
    let st = Stage::RigidBody;
    claim(cfg, st)?;
    let pol = cfg.polarizabilities()?;
    let c = pulse_constant(cfg, st)?;
    let [r12, r13, r23] = cfg.rigid.distances;
    let shape = RigidShape::new(r12, r13, r23).map_err(ShellError::stage(st))?;
    let t_max = units::ps_to_au(cfg.rigid.total_ps);
    let n = cfg.rigid.samples - 1;
    let times: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
    let run = match cfg.rigid.j_max {
        Some(j) => rigid_kick_and_evolve(&shape, c, &pol, j, &times),
        None => rigid_kick_converged(&shape, c, &pol, &times),
    }
    .map_err(ShellError::stage(st))?;
    let t_ps: Vec<f64> = run.times.iter().map(|&t| units::au_to_ps(t)).collect();
    let dir = dir_of(cfg, st);
    write_record(&dir.join("cos2beta.txt"), &series("cos2beta", Scope::Full, "t_ps", t_ps.clone(), run.cos2beta.clone(), None))?;
    write_record(&dir.join("cos2gamma.txt"), &series("cos2gamma", Scope::Full, "t_ps", t_ps, run.cos2gamma.clone(), None))?;
    let gap = lowest_gap(&shape, run.j_max).map_err(ShellError::stage(st))?;
    let mut text = format!("rho_bohr = {:.10e}\ntheta = {:.10e}\nj_max = {}\n", shape.rho(), shape.theta(), run.j_max);
    let _ = writeln!(text, "lowest_gap_hartree = {gap:.10e}");
    if let Ok(period) = crate::interaction::timescale_of_energy(gap) {
        let _ = writeln!(text, "lowest_gap_period_ps = {:.10e}", units::au_to_ps(period));
    }
    let _ = writeln!(text, "oscillations = {}", count_oscillations(&run.cos2beta, 0.05));
    let _ = writeln!(text, "norm_defect = {:.3e}", run.norm_defect);
    for (j, p) in &run.j_populations {
        let _ = writeln!(text, "population_j{j} = {p:.10e}");
    }
    write_file(&dir.join("summary.txt"), text.as_bytes())?;
    mark_done(cfg, st)?;
    Ok(run)
}

/// Dimer partial-wave evolution and the Jastrow model trimer built from it.
pub fn dimer_stage(cfg: &RunConfig) -> Result<(), ShellError> {
    let st = Stage::DimerModel;
    claim(cfg, st)?;
    let vaa = cfg.pair_potential()?;
    let pol = cfg.polarizabilities()?;
    let c = pulse_constant(cfg, st)?;
    let d = &cfg.dimer;
    let dc = DimerConfig {
        r_min: d.r_min,
        r_max: d.r_max,
        n_r: d.points,
        dt: d.dt,
        checkpoint_every: units::ps_to_au(d.checkpoint_ps),
        total_time: units::ps_to_au(d.total_ps),
        kick: d.kick,
    };
    let traj = dimer_evolve(&vaa, &pol, c, &dc).map_err(ShellError::stage(st))?;
    let times: Vec<f64> = traj.frames.iter().map(|f| units::au_to_ps(f.time)).collect();
    let rows: Vec<Vec<f64>> = traj.frames.iter().map(|f| f.alignment()).collect();
    let r = traj.frames.first().map(|f| f.r.clone()).unwrap_or_default();
    let dir = dir_of(cfg, st);
    write_record(&dir.join("dimer-cos2.txt"), &heatmap("dimer-cos2", None, "r_bohr", r, times.clone(), by_x(&rows)))?;
    let o = &cfg.observe;
    let mc = McConfig { samples: o.samples, burn_in: o.burn_in, chains: o.chains, seed: cfg.seed, stream: 0 };
    let hm = dimer_model_trimer(&traj, d.scale, &d.rho_edges, &mc).map_err(ShellError::stage(st))?;
    let rec = heatmap("model-cos2-pair-ave", Some(cfg.seed), "rho_bohr", centres(&hm.rho_edges), times, by_x(&hm.values));
    write_record(&dir.join("model-trimer.txt"), &rec)?;
    mark_done(cfg, st)?;
    Ok(())
}

/// Rewrites the manifest to cover everything currently in the run directory.
pub fn write_manifest(cfg: &RunConfig, started: Instant) -> Result<RunManifest, ShellError> {
    let m = RunManifest::scan(&cfg.output, sha256_hex(cfg.canonical().as_bytes()), started.elapsed().as_secs_f64(), propagation_norm_drift(cfg))?;
    m.write(&cfg.output)?;
    Ok(m)
}

/// Stationary states, kick, propagation and observables in sequence, each
/// stage resuming from what is already on disk.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest, ShellError> {
    let started = Instant::now();
    let model = Model::build(cfg)?;
    solve_stationary(cfg, &model)?;
    kick_stage(cfg, &model)?;
    propagate_stage(cfg, &model, None)?;
    observe_stage(cfg, &model, &cfg.observe.kinds)?;
    write_manifest(cfg, started)
}
