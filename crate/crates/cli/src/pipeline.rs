//! The stages: `gs` → `evolve` → `spectrum`, plus `expand`.

use std::path::PathBuf;
use std::sync::Arc;

use ibc_core::groundstate::{itebd_ground_state, two_site_energy};
use ibc_core::observables::{
    extract_dispersion, greens_function, linspace, spectral_function, sz_profile, unequal_time_correlator,
    Dispersion, SpaceTimeRecord,
};
use ibc_core::window::{
    apply_local_operator, expand_window, open_window, tebd_step, window_energy, Boundaries, TrotterPlan,
    WindowState,
};
use ibc_core::{DenseTensor, InfiniteMps, C64};
use serde_json::json;

use crate::checkpoint::{tensor_vector, vector_tensor, Checkpoint};
use crate::config::RunConfig;
use crate::csv;
use crate::CliError;

pub const GS_CHECKPOINT: &str = "gs.ckpt";
pub const EVOLVE_CHECKPOINT: &str = "evolve.ckpt";
pub const EXPANDED_CHECKPOINT: &str = "expanded.ckpt";

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn write_json(cfg: &RunConfig, name: &str, value: serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&value).expect("json") + "\n";
    csv::write(&out(cfg, name), &text)
}

#[derive(Clone, Debug)]
pub struct GsSummary {
    pub energy: f64,
    pub chi: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// iTEBD ground state → `gs.ckpt`.
pub fn run_gs(cfg: &RunConfig) -> Result<GsSummary, CliError> {
    let mpo = cfg.mpo()?;
    let h = mpo.bond_hamiltonian()?;
    let result = itebd_ground_state(&h, &cfg.itebd_schedule()).map_err(|e| CliError::from(e).in_stage("gs"))?;
    if result.blocked {
        return Err(CliError::Stage {
            stage: "gs",
            source: ibc_core::Error::NumericalInconsistency(
                "the two sublattices did not converge to a one-site state".into(),
            ),
        });
    }
    let psi = result.mps;
    let energy = two_site_energy(&psi, &h)?;
    log::info!(
        "ground state: e0 = {energy:.12}, chi = {}, converged = {}, iterations = {}",
        psi.chi(),
        result.converged,
        result.iterations
    );
    let mut cp = Checkpoint::default();
    cp.set("kind", "ground_state");
    cp.set("config_hash", cfg.hash());
    cp.set("gs_hash", cfg.ground_state_hash());
    cp.set("e0", energy);
    cp.set("chi", psi.chi());
    cp.set("converged", result.converged);
    cp.set("iterations", result.iterations);
    cp.push("gamma", psi.gamma().clone());
    cp.push("lambda", vector_tensor("b", psi.lambda()));
    cp.write(&out(cfg, GS_CHECKPOINT))?;
    Ok(GsSummary {
        energy,
        chi: psi.chi(),
        converged: result.converged,
        iterations: result.iterations,
    })
}

fn load_ground_state(cfg: &RunConfig) -> Result<InfiniteMps, CliError> {
    let cp = Checkpoint::read(&out(cfg, GS_CHECKPOINT))?;
    if cp.meta("gs_hash")? != cfg.ground_state_hash() {
        return Err(CliError::Config(
            "gs.ckpt was produced for a different model, chi, iTEBD schedule or seed".into(),
        ));
    }
    let gamma = cp.tensor("gamma")?.clone();
    let lambda = tensor_vector(cp.tensor("lambda")?);
    Ok(InfiniteMps::new(gamma, lambda)?)
}

fn window_checkpoint(cfg: &RunConfig, w: &WindowState, step: usize) -> Checkpoint {
    let mut cp = Checkpoint::default();
    cp.set("kind", "window");
    cp.set("config_hash", cfg.hash());
    cp.set("step", step);
    cp.set("time", w.time());
    cp.set("e0", w.boundaries().left.e0());
    cp.set("discarded_weight", w.accumulated_discarded_weight());
    cp.set("amplitude", format!("{:?}", w.amplitude()));
    cp.set("ortho", w.ortho_position());
    cp.set("chi_max", w.chi_max());
    cp.set("sweep_forward", w.sweep_forward());
    cp.set("n_sites", w.len());
    for (i, t) in w.tensors().iter().enumerate() {
        cp.push(&format!("site{i}"), t.clone());
    }
    cp.push("center", vector_tensor("b", w.center()));
    cp
}

fn restore_window(cp: &Checkpoint, bounds: Arc<Boundaries>, svd_tol: f64) -> Result<WindowState, CliError> {
    let n: usize = cp.meta_parse("n_sites")?;
    let tensors = (0..n)
        .map(|i| cp.tensor(&format!("site{i}")).cloned())
        .collect::<Result<Vec<_>, _>>()?;
    let chi_max: usize = cp.meta_parse("chi_max")?;
    let mut w = WindowState::from_parts(
        bounds,
        tensors,
        tensor_vector(cp.tensor("center")?),
        cp.meta_parse("ortho")?,
        chi_max,
        cp.meta_parse("time")?,
        cp.meta_parse("discarded_weight")?,
        cp.meta_parse("amplitude")?,
    )?
    .with_truncation(chi_max, svd_tol)?;
    w.set_sweep_forward(cp.meta_parse("sweep_forward")?);
    Ok(w)
}

fn record_tensor(rows: &[Vec<C64>], label: &str) -> Result<DenseTensor, CliError> {
    let nx = rows.first().map_or(0, Vec::len);
    let data: Vec<C64> = rows.iter().flatten().copied().collect();
    Ok(DenseTensor::new(&["t", label], &[rows.len(), nx], data)?)
}

fn record_rows(t: &DenseTensor) -> Vec<Vec<C64>> {
    let nx = t.dims()[1];
    if nx == 0 {
        return Vec::new();
    }
    t.data().chunks(nx).map(<[C64]>::to_vec).collect()
}

/// Flip, evolve and measure → `sz_profile.csv`, `greens.csv`, `evolve.ckpt`.
pub fn run_evolve(cfg: &RunConfig) -> Result<(), CliError> {
    let psi = load_ground_state(cfg)?;
    let mpo = cfg.mpo()?;
    let ground = open_window(&psi, cfg.window_size, &mpo)
        .map_err(|e| CliError::from(e).in_stage("evolve"))?
        .with_truncation(cfg.chi_max(), cfg.svd_tol)?;
    let e_ref = window_energy(&ground)?;
    let plan = TrotterPlan::new(cfg.trotter_order, cfg.dt)?;
    let site = cfg.perturbation_site();
    let op = cfg.perturbation_operator().expect("validated");
    let n_steps = cfg.n_steps();
    let ckpt_path = out(cfg, EVOLVE_CHECKPOINT);

    let mut amps: Vec<Vec<C64>> = Vec::new();
    let mut profiles: Vec<Vec<C64>> = Vec::new();
    let mut start = 0;
    let mut state = None;
    if let Ok(cp) = Checkpoint::read(&ckpt_path) {
        if cp.meta("config_hash")? == cfg.hash() {
            let step: usize = cp.meta_parse("step")?;
            if step <= n_steps {
                log::info!("resuming from step {step}");
                state = Some(restore_window(&cp, ground.boundaries().clone(), cfg.svd_tol)?);
                amps = record_rows(cp.tensor("correlator")?);
                profiles = record_rows(cp.tensor("sz")?);
                start = step;
            }
        }
    }
    let mut w = match state {
        Some(w) => w,
        None => {
            let mut w = ground.clone();
            let norm = apply_local_operator(&mut w, site, &op).map_err(|e| CliError::from(e).in_stage("evolve"))?;
            log::info!("perturbation '{}' at site {site}, norm {norm:.12}", cfg.perturbation.operator);
            amps.push(unequal_time_correlator(&ground, &w, e_ref)?);
            profiles.push(sz_profile(&w)?.into_iter().map(|v| C64::new(v, 0.0)).collect());
            w
        }
    };
    let save = |w: &WindowState, step: usize, amps: &[Vec<C64>], profiles: &[Vec<C64>]| -> Result<(), CliError> {
        let mut cp = window_checkpoint(cfg, w, step);
        cp.set("e_ref", format!("{e_ref:?}"));
        cp.push("correlator", record_tensor(amps, "x")?);
        cp.push("sz", record_tensor(profiles, "x")?);
        cp.write(&ckpt_path)
    };
    for step in start + 1..=n_steps {
        tebd_step(&mut w, &plan).map_err(|e| CliError::from(e).in_stage("evolve"))?;
        amps.push(unequal_time_correlator(&ground, &w, e_ref)?);
        profiles.push(sz_profile(&w)?.into_iter().map(|v| C64::new(v, 0.0)).collect());
        if step % cfg.checkpoint_every == 0 && step < n_steps {
            save(&w, step, &amps, &profiles)?;
        }
    }
    save(&w, n_steps, &amps, &profiles)?;

    let times: Vec<f64> = (0..amps.len()).map(|i| i as f64 * cfg.dt).collect();
    let sz: Vec<(f64, Vec<f64>)> = times
        .iter()
        .zip(&profiles)
        .map(|(t, row)| (*t, row.iter().map(|z| z.re).collect()))
        .collect();
    let mut a = SpaceTimeRecord::new((0..cfg.window_size as i64).map(|x| x - site as i64).collect());
    for (t, row) in times.iter().zip(amps) {
        a.push(*t, row)?;
    }
    csv::write(&out(cfg, "sz_profile.csv"), &csv::sz_profile_csv(&sz))?;
    csv::write(&out(cfg, "greens.csv"), &csv::greens_csv(&greens_function(&a)))?;
    write_json(
        cfg,
        "evolve_meta.json",
        json!({
            "config_hash": cfg.hash(),
            "e0": ground.boundaries().left.e0(),
            "e_ref": e_ref,
            "e_ref_convention": "window energy <phi|H_eff|phi> of the unperturbed window",
            "trotter_scheme": plan.scheme(),
            "trotter_order": plan.order(),
            "dt": cfg.dt,
            "steps": n_steps,
            "perturbation_site": site,
            "accumulated_discarded_weight": w.accumulated_discarded_weight(),
            "final_max_chi": w.max_chi(),
        }),
    )?;
    Ok(())
}

/// `greens.csv` → `spectral.csv`, `dispersion.csv`.
pub fn run_spectrum(cfg: &RunConfig) -> Result<Dispersion, CliError> {
    let path = out(cfg, "greens.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::MissingCheckpoint(format!("{}: {e}", path.display())))?;
    let g = csv::parse_greens(&text)?;
    if g.times.len() < 2 {
        return Err(CliError::Input(format!("{} holds a single time slice; the spectrum needs t_max > 0", path.display())));
    }
    let sp = &cfg.spectral;
    let q = linspace(0.0, sp.q_max, sp.q_points);
    let omega = linspace(0.0, sp.omega_max, sp.omega_points);
    let s = spectral_function(&g, &q, &omega, Some(cfg.t_window())).map_err(|e| CliError::from(e).in_stage("spectrum"))?;
    let d = extract_dispersion(&s);
    csv::write(&out(cfg, "spectral.csv"), &csv::spectral_csv(&s))?;
    csv::write(&out(cfg, "dispersion.csv"), &csv::dispersion_csv(&d))?;
    let q_pi = d
        .points
        .iter()
        .min_by(|a, b| (a.0 - std::f64::consts::PI).abs().total_cmp(&(b.0 - std::f64::consts::PI).abs()))
        .map(|p| p.0);
    write_json(
        cfg,
        "spectrum_meta.json",
        json!({
            "gap": d.gap,
            "gap_q": q_pi,
            "t_window": cfg.t_window(),
            "excluded_q": d.excluded,
            "omega_origin": "e_ref of the unperturbed window (see evolve_meta.json)",
        }),
    )?;
    if let Some(gap) = d.gap {
        log::info!("gap at q = {:.6}: {gap:.6}", q_pi.unwrap_or(f64::NAN));
    }
    Ok(d)
}

/// Enlarge the evolved window → `expanded.ckpt`, `sz_profile_expanded.csv`.
pub fn run_expand(cfg: &RunConfig, left: usize, right: usize) -> Result<WindowState, CliError> {
    let psi = load_ground_state(cfg)?;
    let mpo = cfg.mpo()?;
    let ground = open_window(&psi, cfg.window_size, &mpo)?;
    let cp = Checkpoint::read(&out(cfg, EVOLVE_CHECKPOINT))?;
    let w = restore_window(&cp, ground.boundaries().clone(), cfg.svd_tol)?;
    let big = expand_window(&w, left, right, &psi).map_err(|e| CliError::from(e).in_stage("expand"))?;
    let mut cp = window_checkpoint(cfg, &big, cp.meta_parse("step")?);
    cp.set("expanded_left", left);
    cp.set("expanded_right", right);
    cp.write(&out(cfg, EXPANDED_CHECKPOINT))?;
    let profile = sz_profile(&big)?;
    csv::write(
        &out(cfg, "sz_profile_expanded.csv"),
        &csv::sz_profile_csv(&[(big.time(), profile)]),
    )?;
    Ok(big)
}
