use hypertrimer::evolve::WavePacket;
use hypertrimer::container::Container;
use hypertrimer::interaction::units;
use hypertrimer::shell::*;
use std::path::Path;

const DESK: &str = "\
[potential]
model = gauss:3.166808e-5,7.0
[grid]
rho_min = 2
rho_max = 80
rho_points = 80
stretch = 1
theta_points = 16
phi_points = 36
[truncation]
j_max = 2
m_max = 6
n_max = 3
[kick]
intensity = 2e13
[stationary]
states = 1
dimer_r_max = 200
dimer_points = 2000
[propagation]
checkpoint_ps = 0.002
total_ps = 0.008
[observe]
samples = 4000
burn_in = 500
chains = 2
bins = 20
r_max = 60
[sweep]
intensities = 1.5e14, 2.0e14, 2.5e14, 3.0e14
[run]
seed = 7
";

fn config(dir: &Path, extra: &str) -> RunConfig {
    let text = format!("{DESK}output = {}\n{extra}", dir.display());
    validate_text(&text, dir).unwrap()
}

fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt") && !p.ends_with("inputs.txt"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn last_snapshot(cfg: &RunConfig) -> WavePacket {
    let k = *snapshots(cfg).last().unwrap();
    let c = Container::read(&cfg.output.join(format!("propagate/snap-{k:05}.bin"))).unwrap();
    WavePacket::from_container(&c).unwrap()
}

#[test]
fn identical_config_and_seed_give_identical_observables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (config(a.path(), ""), config(b.path(), ""));
    let ma = run_pipeline(&ca).unwrap();
    let mb = run_pipeline(&cb).unwrap();
    assert_eq!(ma.config_sha256, mb.config_sha256);
    let (fa, fb) = (read_dir_files(&a.path().join("observe")), read_dir_files(&b.path().join("observe")));
    assert!(fa.len() >= 10);
    assert_eq!(fa, fb);
    assert!(ma.verify(a.path()).is_empty());
    assert_eq!(ma.files, mb.files);
}

#[test]
fn resumed_propagation_matches_uninterrupted_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (config(a.path(), ""), config(b.path(), ""));
    run_pipeline(&ca).unwrap();

    let model = Model::build(&cb).unwrap();
    solve_stationary(&cb, &model).unwrap();
    kick_stage(&cb, &model).unwrap();
    let half = propagate_stage(&cb, &model, Some(units::ps_to_au(0.004))).unwrap();
    assert_eq!(half.checkpoints, 3);
    let manifest = run_pipeline(&cb).unwrap();

    let (wa, wb) = (last_snapshot(&ca), last_snapshot(&cb));
    assert_eq!(wa.time, wb.time);
    let diff = wa.data.iter().zip(&wb.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "resume mismatch {diff:e}");
    assert_eq!(read_dir_files(&a.path().join("observe")), read_dir_files(&b.path().join("observe")));
    assert!(manifest.norm_drift.unwrap() < 1e-10);
}

#[test]
fn sweep_gives_four_row_survival_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let model = Model::build(&cfg).unwrap();
    solve_stationary(&cfg, &model).unwrap();
    let scan = sweep_stage(&cfg, &model).unwrap();
    assert_eq!(scan.survival.len(), 4);
    assert!(scan.survival.windows(2).all(|w| w[1] < w[0]), "{:?}", scan.survival);
    assert!(scan.survival.iter().all(|s| (0.0..=1.0).contains(s)));
    let table = std::fs::read_to_string(dir.path().join("sweep/survival.txt")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn changed_inputs_clear_stale_downstream_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    run_pipeline(&cfg).unwrap();
    let before = std::fs::read(dir.path().join("kick/decomposition.txt")).unwrap();

    let mut changed = cfg.clone();
    changed.kick.intensity = 1e13;
    changed.propagation.total_time = units::ps_to_au(0.004);
    let model = Model::build(&changed).unwrap();
    solve_stationary(&changed, &model).unwrap();
    kick_stage(&changed, &model).unwrap();
    // the old propagation and observations belong to the previous kick
    assert!(!dir.path().join("propagate").exists());
    assert!(!dir.path().join("observe").exists());
    assert!(matches!(observe_stage(&changed, &model, &[ObserveKind::Pairs]), Err(ShellError::MissingStage { .. })));
    assert_ne!(before, std::fs::read(dir.path().join("kick/decomposition.txt")).unwrap());

    let m = run_pipeline(&changed).unwrap();
    assert_eq!(snapshots(&changed).len(), 3);
    assert!(m.verify(dir.path()).is_empty());
    assert!(m.files.iter().all(|(p, _)| !p.contains("snap-00004")));
}

#[test]
fn stage_order_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let model = Model::build(&cfg).unwrap();
    let err = kick_stage(&cfg, &model).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("stationary"));
}

#[test]
fn rigid_body_command_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[rigid]\nsamples = 401\ntotal_ps = 20\n");
    let run = rigid_stage(&cfg).unwrap();
    assert_eq!(run.times.len(), 401);
    let text = std::fs::read_to_string(dir.path().join("rigid/cos2beta.txt")).unwrap();
    assert!(text.starts_with("# observable: cos2beta"));
    assert!(std::fs::read_to_string(dir.path().join("rigid/summary.txt")).unwrap().contains("lowest_gap_period_ps"));
}

#[test]
fn dimer_model_command_writes_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[potential]\nmodel = lj:4.750e-5,5.29\n[observe]\nsamples = 3000\nburn_in = 300\nchains = 1\n\
         [dimer]\npoints = 600\ndt = 4\ncheckpoint_ps = 0.05\ntotal_ps = 0.1\nrho_edges = 8, 11, 14, 18\n\
         [run]\noutput = {}\n",
        dir.path().display()
    );
    let cfg = validate_text(&text, dir.path()).unwrap();
    dimer_stage(&cfg).unwrap();
    let model = std::fs::read_to_string(dir.path().join("dimer/model-trimer.txt")).unwrap();
    let rows: Vec<&str> = model.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3 * 3);
    assert!(std::fs::read_to_string(dir.path().join("dimer/dimer-cos2.txt")).unwrap().contains("# kind: heatmap"));
}
