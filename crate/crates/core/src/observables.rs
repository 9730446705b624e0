//! Magnetization profiles, the unequal-time correlator and its transform to
//! the spectral function.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mpo::SpinOperators;
use crate::tensor::DenseTensor;
use crate::window::{
    apply_local_operator, mixed_expectations, site_expectations, tebd_step, window_energy, StepReport, TrotterPlan,
    WindowState,
};

const IMAG_TOL: f64 = 1e-10;

/// Complex field on a (time × site offset) grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeRecord {
    pub times: Vec<f64>,
    /// Offsets `x − x_M` from the perturbed site.
    pub positions: Vec<i64>,
    /// `values[t][x]`.
    pub values: Vec<Vec<C64>>,
}

impl SpaceTimeRecord {
    pub fn new(positions: Vec<i64>) -> Self {
        Self {
            times: Vec::new(),
            positions,
            values: Vec::new(),
        }
    }

    /// Append a time slice; times must start at 0 and increase.
    pub fn push(&mut self, t: f64, row: Vec<C64>) -> Result<()> {
        if row.len() != self.positions.len() {
            return Err(Error::DimensionMismatch(format!(
                "row of {} values for {} positions",
                row.len(),
                self.positions.len()
            )));
        }
        match self.times.last() {
            None if t != 0.0 => return Err(Error::InvalidArgument("record must start at t = 0".into())),
            Some(&last) if t <= last => {
                return Err(Error::InvalidArgument(format!("time {t} not after {last}")))
            }
            _ => {}
        }
        self.times.push(t);
        self.values.push(row);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Uniform spacing of the time grid.
    pub fn time_step(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::InvalidArgument("need at least two time slices".into()));
        }
        let dt = self.times[1] - self.times[0];
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::InvalidArgument("time grid is not uniform".into()));
            }
        }
        Ok(dt)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    pub q_values: Vec<f64>,
    pub omega_values: Vec<f64>,
    /// `s[iq][iw]`.
    pub s: Vec<Vec<f64>>,
    pub window_time: Option<f64>,
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn default_q_grid() -> Vec<f64> {
    linspace(0.0, PI, 201)
}

pub fn default_omega_grid() -> Vec<f64> {
    linspace(0.0, 4.0, 401)
}

fn real_parts(v: Vec<C64>) -> Result<Vec<f64>> {
    v.into_iter()
        .map(|z| {
            if z.im.abs() > IMAG_TOL {
                Err(Error::NumericalInconsistency(format!(
                    "expectation value has imaginary part {:.3e}",
                    z.im
                )))
            } else {
                Ok(z.re)
            }
        })
        .collect()
}

/// `⟨S^z(x)⟩` on every window site.
pub fn sz_profile(w: &WindowState) -> Result<Vec<f64>> {
    let two_s = w.boundaries().d() - 1;
    let sz = SpinOperators::new(two_s).sz;
    real_parts(site_expectations(w, &sz)?)
}

/// `e^{i e_ref t} ⟨φ|S⁻_x|ψ(t)⟩`, unnormalized: the norm removed when the
/// flip was applied is restored from the evolved window's amplitude.
pub fn unequal_time_correlator(ground: &WindowState, evolved: &WindowState, e_ref: f64) -> Result<Vec<C64>> {
    if ground.len() != evolved.len() || !std::sync::Arc::ptr_eq(ground.boundaries(), evolved.boundaries()) {
        return Err(Error::DimensionMismatch(
            "correlator needs windows of equal size cut from the same ground state".into(),
        ));
    }
    let two_s = ground.boundaries().d() - 1;
    let sm = SpinOperators::new(two_s).sm;
    let t = evolved.time();
    let phase = C64::from_polar(evolved.amplitude(), e_ref * t);
    Ok(mixed_expectations(ground, evolved, &sm)?
        .into_iter()
        .map(|z| phase * z)
        .collect())
}

/// `G = −i A`.
pub fn greens_function(a: &SpaceTimeRecord) -> SpaceTimeRecord {
    let mi = C64::new(0.0, -1.0);
    SpaceTimeRecord {
        times: a.times.clone(),
        positions: a.positions.clone(),
        values: a
            .values
            .iter()
            .map(|row| row.iter().map(|z| mi * z).collect())
            .collect(),
    }
}

/// `S(q,ω) = −(1/π) Im[2 Σ_t w_t Δt cos(ωt) Σ_x cos(qx) G(x,t) e^{−4(t/T)²}]`
/// with trapezoid weight ½ on `t = 0`. `t_window = None` drops the envelope.
pub fn spectral_function(g: &SpaceTimeRecord, q: &[f64], omega: &[f64], t_window: Option<f64>) -> Result<SpectralGrid> {
    if q.is_empty() || omega.is_empty() {
        return Err(Error::InvalidArgument("empty q or ω grid".into()));
    }
    let dt = g.time_step()?;
    if let Some(tw) = t_window {
        if !(tw > 0.0) {
            return Err(Error::InvalidArgument(format!("window time {tw}")));
        }
    }
    let weights: Vec<f64> = g
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let trap = if i == 0 { 0.5 } else { 1.0 };
            let env = t_window.map_or(1.0, |tw| (-4.0 * (t / tw).powi(2)).exp());
            2.0 * trap * dt * env
        })
        .collect();
    let mut s = Vec::with_capacity(q.len());
    for &qv in q {
        let cx: Vec<f64> = g.positions.iter().map(|&x| (qv * x as f64).cos()).collect();
        // Σ_x cos(qx) G(x,t), weighted
        let gq: Vec<f64> = g
            .values
            .iter()
            .zip(&weights)
            .map(|(row, w)| w * row.iter().zip(&cx).map(|(z, c)| z.im * c).sum::<f64>())
            .collect();
        let col: Vec<f64> = omega
            .iter()
            .map(|&om| {
                let acc: f64 = g.times.iter().zip(&gq).map(|(t, v)| (om * t).cos() * v).sum();
                -acc / PI
            })
            .collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalInconsistency("non-finite spectral value".into()));
        }
        s.push(col);
    }
    Ok(SpectralGrid {
        q_values: q.to_vec(),
        omega_values: omega.to_vec(),
        s,
        window_time: t_window,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dispersion {
    pub points: Vec<(f64, f64)>,
    /// `ω_peak` at the retained q nearest π.
    pub gap: Option<f64>,
    /// q values whose column was identically zero.
    pub excluded: Vec<f64>,
}

/// Ridge maximum per q; ties go to the smaller ω.
pub fn extract_dispersion(s: &SpectralGrid) -> Dispersion {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (qv, col) in s.q_values.iter().zip(&s.s) {
        if col.iter().all(|v| *v == 0.0) {
            log::warn!("q = {qv}: spectral column is identically zero, skipped");
            excluded.push(*qv);
            continue;
        }
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if *v > col[best] {
                best = i;
            }
        }
        points.push((*qv, s.omega_values[best]));
    }
    let gap = points
        .iter()
        .min_by(|a, b| (a.0 - PI).abs().total_cmp(&(b.0 - PI).abs()))
        .map(|p| p.1);
    Dispersion { points, gap, excluded }
}

/// Full width at half maximum of `col` around its peak, by linear
/// interpolation between grid points.
pub fn peak_fwhm(omega: &[f64], col: &[f64]) -> Option<f64> {
    let (ip, &peak) = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if peak <= 0.0 {
        return None;
    }
    let half = peak / 2.0;
    let cross = |i: usize, j: usize| {
        let (a, b) = (col[i], col[j]);
        omega[i] + (half - a) / (b - a) * (omega[j] - omega[i])
    };
    let mut lo = None;
    for i in (0..ip).rev() {
        if col[i] < half {
            lo = Some(cross(i, i + 1));
            break;
        }
    }
    let mut hi = None;
    for i in ip + 1..col.len() {
        if col[i] < half {
            hi = Some(cross(i - 1, i));
            break;
        }
    }
    Some(hi? - lo?)
}

/// Everything recorded while a flipped window evolves.
#[derive(Clone, Debug)]
pub struct FlipRecord {
    /// `A(x,t)` with positions relative to the flipped site.
    pub correlator: SpaceTimeRecord,
    /// `(t, ⟨S^z(x)⟩)` per recorded step.
    pub profiles: Vec<(f64, Vec<f64>)>,
    pub e_ref: f64,
    pub reports: Vec<StepReport>,
    pub state: WindowState,
}

/// Flip `site` of `ground` with `op`, evolve `n_steps` of `plan`, and record
/// the correlator and magnetization after every step (and at t = 0).
/// `hook` sees the state after each step, e.g. for checkpointing.
pub fn record_flip_dynamics(
    ground: &WindowState,
    site: usize,
    op: &DenseTensor,
    plan: &TrotterPlan,
    n_steps: usize,
    mut hook: impl FnMut(usize, &WindowState) -> Result<()>,
) -> Result<FlipRecord> {
    let e_ref = window_energy(ground)?;
    let mut psi = ground.clone();
    apply_local_operator(&mut psi, site, op)?;
    let positions = (0..ground.len() as i64).map(|x| x - site as i64).collect();
    let mut correlator = SpaceTimeRecord::new(positions);
    let mut profiles = Vec::with_capacity(n_steps + 1);
    let mut reports = Vec::with_capacity(n_steps);
    correlator.push(0.0, unequal_time_correlator(ground, &psi, e_ref)?)?;
    profiles.push((0.0, sz_profile(&psi)?));
    for step in 1..=n_steps {
        reports.push(tebd_step(&mut psi, plan)?);
        // grid times are exact multiples of dt; psi.time() agrees to rounding
        let t = step as f64 * plan.dt();
        correlator.push(t, unequal_time_correlator(ground, &psi, e_ref)?)?;
        profiles.push((t, sz_profile(&psi)?));
        hook(step, &psi)?;
    }
    Ok(FlipRecord {
        correlator,
        profiles,
        e_ref,
        reports,
        state: psi,
    })
}
