//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Runs as a plain binary (`harness = false`). A FAIL makes the process exit
//! non-zero unless the criterion is listed in `KNOWN_RED`, where the reason is
//! printed next to the verdict and documented in the README.

use hypertrimer::angmath::{overlap_d, EulerAngles};
use hypertrimer::chanbasis::{ChannelBasis, ChannelIndex, ThetaGrid, Truncation, WTable};
use hypertrimer::evolve::{propagate, step_chebyshev, CoupledHamiltonian, ImaginaryConfig, PropagationConfig, WavePacket};
use hypertrimer::interaction::{kick_constant, units, LaserKick, PairPotential, Polarizabilities};
use hypertrimer::kick::{apply_delta_kick, decompose, euler_amplitudes, project_to_channels, KickQuadrature, PhaseShape};
use hypertrimer::numerics::{gauss_legendre, gauss_legendre_on, periodic_rule};
use hypertrimer::observe::{
    alignment_interference, alignment_rho, batch_mean, expval, mc_sample, two_channel_alignment, McConfig, ObsQuadrature, Observable,
    PacketDensity, PacketField, Scope,
};
use hypertrimer::radial::RadialGrid;
use hypertrimer::refmodels::{count_oscillations, dimer_consistency, dimer_unbound_fractions, lowest_gap, rigid_kick_converged, DimerConfig, DimerKick, RigidShape};
use hypertrimer::shell::{solve_stationary, sweep_stage, validate_text, Model};
use hypertrimer::stationary::{solve_trimer_bound, StationaryState};
use num_complex::Complex64 as C64;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};
use std::path::PathBuf;
use std::time::Instant;

/// Criteria that cannot pass at desk scale, with the reason shown on FAIL.
const KNOWN_RED: &[(u32, &str)] = &[(
    6,
    "two-channel share of the desk Gaussian model is too small for the reduced form; see README",
)];

const HELIUM_ENV: &str = "HYPERTRIMER_HELIUM_DATA";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<Verdict, Box<dyn std::error::Error>>;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// Shared desk-scale model: 10 K Gaussian well, J ≤ 2, n_max = 8, 200 ρ points.
struct Desk {
    vaa: PairPotential,
    pol: Polarizabilities,
    grid: RadialGrid,
    basis: ChannelBasis,
    h: CoupledHamiltonian,
    ground: StationaryState,
    constant: f64,
}

const DESK_THETA: usize = 24;
const DESK_PHI: usize = 48;

fn desk_potential() -> PairPotential {
    PairPotential::Gaussian { v0: units::mk_to_hartree(10_000.0), range: 7.0 }
}

fn desk_basis(n_max: usize) -> Result<ChannelBasis, Box<dyn std::error::Error>> {
    Ok(ChannelBasis::build(ThetaGrid::gauss(DESK_THETA)?, Truncation { j_max: 2, m_max: 12, n_max })?)
}

/// Hamiltonian restricted to J ≤ `j_top` and the lowest trimer state.
fn desk_system(
    vaa: &PairPotential,
    grid: &RadialGrid,
    basis: &ChannelBasis,
    j_top: u32,
) -> Result<(CoupledHamiltonian, StationaryState), Box<dyn std::error::Error>> {
    let mass = units::hyper_mass(units::HE4_MASS);
    let tables: Vec<WTable> = (0..=j_top).step_by(2).map(|j| WTable::build(basis, j, grid.nodes(), vaa, DESK_PHI)).collect();
    let h0 = CoupledHamiltonian::from_basis(grid.clone(), mass, basis, &[&tables[0]])?;
    let ground = solve_trimer_bound(&h0, 1, &ImaginaryConfig::default())?.remove(0);
    let refs: Vec<&WTable> = tables.iter().collect();
    Ok((CoupledHamiltonian::from_basis(grid.clone(), mass, basis, &refs)?, ground))
}

impl Desk {
    fn build() -> Result<Self, Box<dyn std::error::Error>> {
        let vaa = desk_potential();
        let grid = RadialGrid::new(2.0, 80.0, 200, 1.0)?;
        let basis = desk_basis(8)?;
        let (h, ground) = desk_system(&vaa, &grid, &basis, 2)?;
        let constant = kick_constant(&LaserKick::from_fs(3.5e14, 331.0)?);
        Ok(Self { vaa, pol: Polarizabilities::dipole_induced_dipole(1.383, 2.0), grid, basis, h, ground, constant })
    }

    /// Kicked packet projected on the basis and renormalized.
    fn kicked_packet(&self) -> Result<WavePacket, Box<dyn std::error::Error>> {
        let kicked = apply_delta_kick(&self.ground, &self.basis, &self.grid, self.constant, &self.pol, &KickQuadrature::new(24, 16), 2);
        let mut wp = project_to_channels(&kicked, &self.basis)?;
        wp.normalize();
        Ok(wp)
    }
}

fn criterion_1() -> Check {
    let basis = ChannelBasis::build(ThetaGrid::gauss(48)?, Truncation { j_max: 2, m_max: 6, n_max: 1 })?;
    let chans: Vec<ChannelIndex> = basis.all_channels();
    if chans.len() != 12 {
        return Ok(Verdict::Fail(format!("expected a 12-channel basis, got {}", chans.len())));
    }
    // brute-force 5D quadrature of Φ'*Φ with the measure sin(4θ)/4 · sinβ
    let (th, wth) = gauss_legendre_on(160, 0.0, FRAC_PI_4);
    let (ph, wph) = periodic_rule(24, 0.0, FRAC_PI_3);
    let (cb, wcb) = gauss_legendre(8);
    let (ga, wga) = periodic_rule(16, 0.0, 2.0 * PI);
    let mut gram = vec![C64::new(0.0, 0.0); chans.len() * chans.len()];
    let mut vals = vec![C64::new(0.0, 0.0); chans.len()];
    for (&t, &wt) in th.iter().zip(&wth) {
        let wt = wt * (4.0 * t).sin() / 4.0;
        for (&p, &wp) in ph.iter().zip(&wph) {
            for (&x, &wx) in cb.iter().zip(&wcb) {
                for (&g, &wg) in ga.iter().zip(&wga) {
                    let ang = EulerAngles::new(0.0, x.acos(), g)?;
                    for (v, &c) in vals.iter_mut().zip(&chans) {
                        *v = basis.channel_function(c, t, p, ang)?;
                    }
                    let w = wt * wp * wx * wg * 2.0 * PI;
                    for a in 0..chans.len() {
                        for b in 0..chans.len() {
                            gram[a * chans.len() + b] += vals[a].conj() * vals[b] * w;
                        }
                    }
                }
            }
        }
    }
    let ortho = (0..chans.len() * chans.len())
        .map(|k| (gram[k] - if k / chans.len() == k % chans.len() { 1.0 } else { 0.0 }).norm())
        .fold(0.0, f64::max);

    let wide = ChannelBasis::build(ThetaGrid::gauss(24)?, Truncation { j_max: 4, m_max: 6, n_max: 1 })?;
    let mut triangle = 0.0f64;
    for m in [-6, 0, 6] {
        for (np, n) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            triangle = triangle.max(wide.coupling_g(4, 0, m, np, n).abs()).max(wide.coupling_g(0, 4, m, np, n).abs());
        }
    }
    let d02 = (overlap_d(0, 2, 0) - 1.0 / 5f64.sqrt()).abs();
    Ok(verdict(
        ortho <= 1e-8 && triangle == 0.0 && d02 <= 1e-10,
        format!("orthonormality {ortho:.2e} (≤1e-8), |G(4,0)| {triangle:.1e} (=0), |D02 - 1/√5| {d02:.1e} (≤1e-10)"),
    ))
}

fn observables(desk: &Desk, wp: &WavePacket) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let q = ObsQuadrature::exact_for(&desk.basis);
    let mut v = Vec::new();
    for obs in [Observable::Cos2Beta, Observable::Cos2Gamma, Observable::Rho] {
        v.push(expval(wp, &desk.basis, &desk.grid, obs, Scope::Full, &[], q)?);
    }
    v.extend(wp.j_populations().values());
    Ok(v)
}

fn criterion_2(desk: &Desk) -> Check {
    let start = desk.kicked_packet()?;
    let steps = 1000;
    let run = |dt: f64| -> Result<_, Box<dyn std::error::Error>> {
        let mut wp = start.clone();
        let total = 2.0 * steps as f64;
        let cfg = PropagationConfig { dt, total_time: total, checkpoint_every: total, ..Default::default() };
        let rep = propagate(&desk.h, &mut wp, &cfg, |_| Ok(()))?;
        Ok((wp, rep))
    };
    let (coarse, rep) = run(2.0)?;
    let (fine, _) = run(1.0)?;
    let (a, b) = (observables(desk, &coarse)?, observables(desk, &fine)?);
    let halving = a.iter().zip(&b).map(|(x, y)| (x - y).abs() / y.abs().max(1e-300)).fold(0.0, f64::max);

    let mut back = coarse.clone();
    let cfg = PropagationConfig::default();
    for _ in 0..steps {
        step_chebyshev(&desk.h, &mut back, -2.0, cfg.max_order, cfg.cutoff)?;
    }
    let fidelity = 1.0 - start.inner(&back).norm_sqr() / (start.norm_sq() * back.norm_sq());

    let (nd, ed, jp) = (rep.norm_drift(), rep.energy_drift(), rep.max_j_population_change());
    Ok(verdict(
        nd < 1e-9 && ed < 1e-8 && jp < 1e-5 && halving < 1e-7 && fidelity < 1e-9,
        format!(
            "norm drift {nd:.1e} (<1e-9), energy drift {ed:.1e} (<1e-8), J populations {jp:.1e} (<1e-5), \
             step halving {halving:.1e} (<1e-7), time reversal {fidelity:.1e} (<1e-9)"
        ),
    ))
}

fn criterion_3(desk: &Desk) -> Check {
    // route agreement against n_max
    let quad = KickQuadrature::new(24, 16);
    let mut gaps: Vec<[f64; 2]> = Vec::new();
    for n_max in [2, 4, 6, 8] {
        let basis = desk_basis(n_max)?;
        let (_, ground) = desk_system(&desk.vaa, &desk.grid, &basis, 0)?;
        let kicked = apply_delta_kick(&ground, &basis, &desk.grid, desk.constant, &desk.pol, &quad, 2);
        let packet = project_to_channels(&kicked, &basis)?;
        let rep = decompose(&kicked, &packet, &[], &basis);
        gaps.push([0, 2].map(|j| (rep.p_direct[&j] - rep.p_basis[&j]).abs()));
    }
    let monotone = gaps.windows(2).all(|w| w[1][0] < w[0][0] && w[1][1] < w[0][1]);

    // odd J vanish for every shape; odd M never appear
    let mut odd = 0.0f64;
    for (k, &gamma0) in [0.3, 1.1, -2.0, 2.9].iter().enumerate() {
        let shape = PhaseShape { a0: 0.4 + 0.1 * k as f64, a: 0.2, r: 0.05 + 0.07 * k as f64, gamma0 };
        let e = euler_amplitudes(shape, desk.constant, 5, 16);
        let mut idx = 0;
        for j in 0..=5u32 {
            for m in -(j as i32)..=(j as i32) {
                if j % 2 == 1 || m % 2 != 0 {
                    odd = odd.max(e[idx].norm());
                }
                idx += 1;
            }
        }
    }

    // φ-harmonics of the kicked state outside 6ℤ, sampled over the full circle
    let n_phi = 36;
    let full = KickQuadrature::over_range(n_phi, 2.0 * PI, 16);
    let kicked = apply_delta_kick(&desk.ground, &desk.basis, &desk.grid, desk.constant, &desk.pol, &full, 2);
    let (mut allowed, mut forbidden) = (0.0f64, 0.0f64);
    let mut f = vec![C64::new(0.0, 0.0); n_phi];
    for i in 0..desk.grid.len() {
        for k in 0..kicked.thetas.len() {
            for j in [0u32, 2] {
                for m in (-(j as i32)..=j as i32).step_by(2) {
                    for (l, v) in f.iter_mut().enumerate() {
                        *v = kicked.ground[(i * kicked.thetas.len() + k) * n_phi + l] * kicked.euler_at(i, k, l, j, m);
                    }
                    for h in -(n_phi as i32 / 2 - 1)..n_phi as i32 / 2 {
                        let c: C64 = f
                            .iter()
                            .zip(&full.phis)
                            .map(|(v, &p)| v * C64::from_polar(1.0, -(h as f64) * p))
                            .sum::<C64>()
                            / n_phi as f64;
                        if h % 6 == 0 {
                            allowed = allowed.max(c.norm());
                        } else {
                            forbidden = forbidden.max(c.norm());
                        }
                    }
                }
            }
        }
    }
    let harmonics = forbidden / allowed;

    // no pulse: the ground state survives intact
    let still = apply_delta_kick(&desk.ground, &desk.basis, &desk.grid, 0.0, &desk.pol, &quad, 2);
    let packet = project_to_channels(&still, &desk.basis)?;
    let rep = decompose(&still, &packet, &[&desk.ground], &desk.basis);
    let survival = rep.c_ground.map_or(0.0, |c| c.norm_sqr());
    let gap_text: Vec<String> = gaps.iter().map(|g| format!("{:.1e}/{:.1e}", g[0], g[1])).collect();
    Ok(verdict(
        monotone && odd < 1e-12 && harmonics < 1e-12 && (survival - 1.0).abs() < 1e-10,
        format!(
            "|P_direct - P_basis| (J=0/J=2) for n_max 2,4,6,8: {} (decreasing), odd J/M {odd:.1e} (<1e-12), \
             m∉6ℤ {harmonics:.1e} (<1e-12), C=0 |c_ground|² = {survival:.12}",
            gap_text.join(", ")
        ),
    ))
}

fn helium_dir() -> Option<PathBuf> {
    std::env::var_os(HELIUM_ENV).map(PathBuf::from).filter(|p| p.join("potential.txt").exists())
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn criterion_4() -> Check {
    let Some(dir) = helium_dir() else {
        return Ok(Verdict::Skip(format!(
            "helium data not supplied; set {HELIUM_ENV} to a directory with potential.txt, pol_iso.txt, pol_aniso.txt"
        )));
    };
    let out = tempfile::tempdir()?;
    // reduced resolution: coarser ρ and θ grids than the converged runs
    let text = format!(
        "[potential]\nfile = {p}\n[polarizability]\niso_file = {i}\naniso_file = {a}\n\
         [grid]\nrho_points = 500\ntheta_points = 160\nphi_points = 120\n\
         [truncation]\nm_max = 24\nn_max = 16\n[run]\noutput = {o}\n",
        p = dir.join("potential.txt").display(),
        i = dir.join("pol_iso.txt").display(),
        a = dir.join("pol_aniso.txt").display(),
        o = out.path().display()
    );
    let cfg = validate_text(&text, &dir)?;
    let model = Model::build(&cfg)?;
    let states = solve_stationary(&cfg, &model)?;
    let energies = std::fs::read_to_string(out.path().join("stationary/energies.txt"))?;
    let dimer_mk: f64 = energies
        .lines()
        .find_map(|l| l.strip_prefix("dimer "))
        .and_then(|l| l.split_whitespace().next())
        .ok_or("energies.txt lacks the dimer line")?
        .parse()?;
    let e0 = units::hartree_to_mk(states[0].energy);
    let e1 = states.get(1).map_or(f64::NAN, |s| units::hartree_to_mk(s.energy));

    let c = kick_constant(&LaserKick::from_fs(cfg.kick.intensity, cfg.kick.tau_fs)?);
    let kicked = apply_delta_kick(&states[0], &model.basis, &model.grid, c, &model.pol, &model.kick_quadrature(&cfg), 4);
    let packet = project_to_channels(&kicked, &model.basis)?;
    let rep = decompose(&kicked, &packet, &[&states[0]], &model.basis);
    let pops = [rep.p_direct[&0], rep.p_direct[&2], rep.p_direct[&4]];
    let ground = rep.c_ground.map_or(f64::NAN, |c| c.norm_sqr());
    let scan = sweep_stage(&cfg, &model)?;

    let table3 = [0.9497, 0.9183, 0.8815, 0.8410];
    let ok = within(dimer_mk, -1.62, 0.02)
        && within(e0, -131.8, 0.02)
        && within(e1, -2.65, 0.10)
        && pops.iter().zip([0.8373, 0.1334, 0.0246]).all(|(&p, t)| within(p, t, 0.05))
        && within(ground, 0.8041, 0.02)
        && scan.survival.len() == 4
        && scan.survival.iter().zip(table3).all(|(&s, t)| within(s, t, 0.02));
    Ok(verdict(
        ok,
        format!(
            "dimer {dimer_mk:.3} mK, trimer {e0:.2} / {e1:.3} mK, P(J=0,2,4) {:.4}/{:.4}/{:.4}, \
             |c_ground|² {ground:.4}, survival {:?}",
            pops[0], pops[1], pops[2], scan.survival
        ),
    ))
}

fn criterion_5() -> Check {
    let pol = Polarizabilities::dipole_induced_dipole(1.383, 2.0);
    let c = kick_constant(&LaserKick::from_fs(3.5e14, 331.0)?);
    let near = RigidShape::new(7.833, 7.478, 7.478)?;
    let period = units::au_to_ps(hypertrimer::interaction::timescale_of_energy(lowest_gap(&near, 20)?)?);
    let times: Vec<f64> = (0..4001).map(|k| units::ps_to_au(50.0 * k as f64 / 4000.0)).collect();
    let slow = count_oscillations(&rigid_kick_converged(&near, c, &pol, &times)?.cos2beta, 0.05);
    let flat = RigidShape::new(8.643, 8.643, 4.879)?;
    let fast = count_oscillations(&rigid_kick_converged(&flat, c, &pol, &times)?.cos2beta, 0.05);
    Ok(verdict(
        within(period, 10.6, 0.05) && (4..=6).contains(&slow) && fast > 30,
        format!("gap period {period:.3} ps (10.6 ± 5%), oscillations {slow} (~5) and {fast} (>30) in 50 ps"),
    ))
}

fn criterion_6(desk: &Desk) -> Check {
    let mut wp = desk.kicked_packet()?;
    let q = ObsQuadrature::exact_for(&desk.basis);
    let floor = 1e-6;
    let (mut identity, mut agree, mut area, mut frames) = (0.0f64, 0usize, 0usize, 0usize);
    let mut failure = None;
    let cfg = PropagationConfig { dt: 2.0, total_time: units::ps_to_au(1.0), checkpoint_every: units::ps_to_au(0.1), ..Default::default() };
    propagate(&desk.h, &mut wp, &cfg, |w| {
        let direct = alignment_rho(w, &desk.basis, &desk.grid, Observable::Cos2Beta, q, floor);
        let (full, two) = match (alignment_interference(w, &desk.basis, &desk.grid, None, floor), two_channel_alignment(w, &desk.basis, &desk.grid, floor)) {
            (Ok(f), Ok(t)) => (f, t),
            (Err(e), _) | (_, Err(e)) => {
                failure.get_or_insert(e);
                return Ok(());
            }
        };
        for i in 0..direct.len() {
            if direct[i].is_finite() {
                identity = identity.max((direct[i] - full[i].value).abs());
                area += 1;
                if two[i].is_finite() && (direct[i] - 1.0 / 3.0).signum() == (two[i] - 1.0 / 3.0).signum() {
                    agree += 1;
                }
            }
        }
        frames += 1;
        Ok(())
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let share = agree as f64 / area.max(1) as f64;
    Ok(verdict(
        identity < 1e-8 && share >= 0.9,
        format!("interference identity {identity:.1e} (<1e-8) over {frames} checkpoints, two-channel sign agreement {:.1}% (≥90%)", 100.0 * share),
    ))
}

fn criterion_7() -> Check {
    let vaa = PairPotential::LennardJones { epsilon: units::mk_to_hartree(15_000.0), sigma: 5.29 };
    let pol = Polarizabilities::dipole_induced_dipole(1.383, 2.0);
    let c = kick_constant(&LaserKick::from_fs(3.5e14, 331.0)?);
    let cfg = DimerConfig {
        r_min: 3.8,
        r_max: 100.0,
        n_r: 5000,
        dt: 2.0,
        checkpoint_every: units::ps_to_au(0.25),
        total_time: units::ps_to_au(1.0),
        kick: DimerKick::Linear,
    };
    let defects = dimer_consistency(&vaa, &pol, c, &cfg)?;
    let worst = defects.iter().map(|d| d.1).fold(0.0, f64::max);
    let model = format!("model LJ: worst fidelity defect {worst:.1e} over {} checkpoints to 1 ps (<1e-6)", defects.len());
    let Some(dir) = helium_dir() else {
        return Ok(verdict(worst < 1e-6, format!("{model}; helium fractions skipped ({HELIUM_ENV} not set)")));
    };
    let he = PairPotential::load(&dir.join("potential.txt"))?;
    let he_pol = Polarizabilities::load(&dir.join("pol_iso.txt"), &dir.join("pol_aniso.txt"))?;
    let he_cfg = DimerConfig { r_min: he.validity().0.max(2.5), r_max: 2000.0, n_r: 40_000, ..cfg };
    let fr = dimer_unbound_fractions(&he, &he_pol, c, &he_cfg, 8)?;
    let get = |l: u32| fr.iter().find(|f| f.0 == l).map_or(f64::NAN, |f| f.1);
    let (f0, f2, f4) = (get(0), get(2), get(4));
    Ok(verdict(
        worst < 1e-6 && within(f0, 0.0139, 0.1) && within(f2, 0.0104, 0.1) && within(f4, 0.00124, 0.1),
        format!("{model}; helium unbound fractions ℓ=0,2,4: {:.3}% / {:.3}% / {:.4}%", 100.0 * f0, 100.0 * f2, 100.0 * f4),
    ))
}

fn cos2_estimates(field: &PacketField, samples: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>, Vec<[f64; 5]>), Box<dyn std::error::Error>> {
    let d = PacketDensity { field, with_orientation: true };
    let s = mc_sample(&d, &McConfig { samples, seed, ..Default::default() }, None)?;
    let cb = s.points.iter().map(|p| p[3] * p[3]).collect();
    let cg = s.points.iter().map(|p| p[4].cos().powi(2)).collect();
    Ok((cb, cg, s.points))
}

fn criterion_8(desk: &Desk) -> Check {
    let field = PacketField::new(&desk.ground.packet, &desk.basis, &desk.grid);
    let (cb, cg, points) = cos2_estimates(&field, 1_000_000, 1)?;
    let ((mb, sb), (mg, sg)) = (batch_mean(&cb), batch_mean(&cg));
    let calibrated = (mb - 1.0 / 3.0).abs() <= 3.0 * sb && (mg - 0.5).abs() <= 3.0 * sg;

    // RMS error over independent seeds against the exact 1/3
    let seeds = 16u64;
    let sizes = [1_000usize, 10_000, 100_000, 1_000_000];
    let mut rms = Vec::new();
    for &n in &sizes {
        let mut acc = 0.0;
        for seed in 0..seeds {
            let (v, _, _) = cos2_estimates(&field, n, 100 + seed)?;
            acc += (v.iter().sum::<f64>() / v.len() as f64 - 1.0 / 3.0).powi(2);
        }
        rms.push((acc / seeds as f64).sqrt());
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = rms.iter().map(|r| r.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();

    let (_, _, again) = cos2_estimates(&field, 1_000_000, 1)?;
    let reproducible = points.len() == again.len() && points.iter().zip(&again).all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    Ok(verdict(
        calibrated && (slope + 0.5).abs() <= 0.1 && reproducible,
        format!(
            "<cos²β> {mb:.5} ± {sb:.5}, <cos²γ> {mg:.5} ± {sg:.5} (3σ), convergence slope {slope:.3} (-0.5 ± 0.1), \
             fixed-seed rerun {}",
            if reproducible { "bit-identical" } else { "differs" }
        ),
    ))
}

fn main() {
    let desk_start = Instant::now();
    let desk = Desk::build();
    let desk_setup = desk_start.elapsed().as_secs_f64();
    let needs_desk = |f: fn(&Desk) -> Check| -> Check {
        match &desk {
            Ok(d) => f(d),
            Err(e) => Err(format!("desk model: {e}").into()),
        }
    };
    let criteria: Vec<(u32, Box<dyn Fn() -> Check + '_>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(|| needs_desk(criterion_2))),
        (3, Box::new(|| needs_desk(criterion_3))),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(|| needs_desk(criterion_6))),
        (7, Box::new(criterion_7)),
        (8, Box::new(|| needs_desk(criterion_8))),
    ];
    println!("desk model set up in {desk_setup:.1} s");
    let mut unexpected = 0;
    for (n, check) in criteria {
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        let known = KNOWN_RED.iter().find(|k| k.0 == n).map(|k| k.1);
        match result {
            Ok(Verdict::Pass(d)) => println!("criterion {n}: PASS {d} ({secs:.1} s)"),
            Ok(Verdict::Skip(d)) => println!("criterion {n}: SKIP {d} ({secs:.1} s)"),
            Ok(Verdict::Fail(d)) => {
                match known {
                    Some(why) => println!("criterion {n}: FAIL (known: {why}) {d} ({secs:.1} s)"),
                    None => println!("criterion {n}: FAIL {d} ({secs:.1} s)"),
                }
                unexpected += known.is_none() as usize;
            }
            Err(e) => {
                println!("criterion {n}: FAIL error: {e} ({secs:.1} s)");
                unexpected += 1;
            }
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
