//! CSV artifacts. Floats use 17 significant digits, `.` decimals and `\n`
//! line ends; headers are mandatory.

use std::fmt::Write as _;
use std::path::Path;

use ibc_core::observables::{Dispersion, SpaceTimeRecord, SpectralGrid};
use ibc_core::C64;

use crate::checkpoint::write_atomic;
use crate::CliError;

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,x,sz`: one row per recorded time and window site.
pub fn sz_profile_csv(profiles: &[(f64, Vec<f64>)]) -> String {
    let mut out = String::from("t,x,sz\n");
    for (t, row) in profiles {
        for (x, v) in row.iter().enumerate() {
            let _ = writeln!(out, "{},{x},{}", f(*t), f(*v));
        }
    }
    out
}

/// `t,x,re_g,im_g` with `x` relative to the perturbed site.
pub fn greens_csv(g: &SpaceTimeRecord) -> String {
    let mut out = String::from("t,x,re_g,im_g\n");
    for (t, row) in g.times.iter().zip(&g.values) {
        for (x, z) in g.positions.iter().zip(row) {
            let _ = writeln!(out, "{},{x},{},{}", f(*t), f(z.re), f(z.im));
        }
    }
    out
}

pub fn spectral_csv(s: &SpectralGrid) -> String {
    let mut out = String::from("q,omega,s\n");
    for (q, col) in s.q_values.iter().zip(&s.s) {
        for (w, v) in s.omega_values.iter().zip(col) {
            let _ = writeln!(out, "{},{},{}", f(*q), f(*w), f(*v));
        }
    }
    out
}

pub fn dispersion_csv(d: &Dispersion) -> String {
    let mut out = String::from("q,omega_peak\n");
    for (q, w) in &d.points {
        let _ = writeln!(out, "{},{}", f(*q), f(*w));
    }
    out
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes())
}

fn bad(line: usize, what: &str) -> CliError {
    CliError::Input(format!("greens.csv line {line}: {what}"))
}

/// Inverse of [`greens_csv`]; rows must form a complete rectangular grid.
pub fn parse_greens(text: &str) -> Result<SpaceTimeRecord, CliError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,x,re_g,im_g") {
        return Err(bad(1, "expected header t,x,re_g,im_g"));
    }
    let mut rows: Vec<(f64, i64, C64)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad(i + 2, "expected 4 columns"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
        let x = cols[1].trim().parse::<i64>().map_err(|_| bad(i + 2, "bad position"))?;
        rows.push((num(cols[0])?, x, C64::new(num(cols[2])?, num(cols[3])?)));
    }
    if rows.is_empty() {
        return Err(CliError::Input("greens.csv has no data".into()));
    }
    let t0 = rows[0].0;
    let positions: Vec<i64> = rows.iter().take_while(|r| r.0 == t0).map(|r| r.1).collect();
    if rows.len() % positions.len() != 0 {
        return Err(CliError::Input("greens.csv grid is not rectangular".into()));
    }
    let mut rec = SpaceTimeRecord::new(positions.clone());
    for chunk in rows.chunks(positions.len()) {
        let t = chunk[0].0;
        if chunk.iter().zip(&positions).any(|(r, x)| r.0 != t || r.1 != *x) {
            return Err(CliError::Input(format!("greens.csv slice at t = {t} is incomplete")));
        }
        rec.push(t, chunk.iter().map(|r| r.2).collect())?;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greens_round_trip() {
        let mut g = SpaceTimeRecord::new(vec![-1, 0, 1]);
        g.push(0.0, vec![C64::new(0.1, -0.2), C64::new(1.0 / 3.0, 0.0), C64::new(0.0, 1e-300)])
            .unwrap();
        g.push(0.05, vec![C64::new(-0.5, 0.25), C64::new(2.0, 2.0), C64::new(1e10, -7.0)])
            .unwrap();
        let text = greens_csv(&g);
        assert!(text.starts_with("t,x,re_g,im_g\n0.0000000000000000e0,-1,"));
        assert_eq!(parse_greens(&text).unwrap(), g);
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let text = "t,x,re_g,im_g\n0,0,1,0\n0,1,1,0\n0.1,0,1,0\n";
        assert!(parse_greens(text).is_err());
        assert!(parse_greens("t,x,re_g,im_g\n").is_err());
        assert!(parse_greens("a,b\n").is_err());
    }

    #[test]
    fn profile_rows() {
        let text = sz_profile_csv(&[(0.0, vec![0.5, -0.5])]);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(2).unwrap(), "0.0000000000000000e0,1,-5.0000000000000000e-1");
    }
}
