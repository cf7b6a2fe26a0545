//! External formats: trajectory and curve CSV, residual and flag JSON.
//!
//! CSV layout for trajectories: `t, u1..un, x1..xm, xh1..xmh, a11..ann
//! [, b11..bnunu]` (matrices row-major). Curves: `t, x1..xm [, u1..un]`.
//! Files start with a `# rollkit <version>` comment line; output is
//! deterministic byte for byte for identical inputs.

use crate::connection::SampledCurve;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rolling::{ConfigPoint, ManifoldPair, RollingConditionReport, RollingTrajectory};
use serde::Serialize;

pub const TOOL_HEADER: &str = concat!("# rollkit ", env!("CARGO_PKG_VERSION"));

fn fmt(v: f64) -> String {
    // Shortest round-trip representation; stable across runs.
    format!("{v}")
}

/// Serializes a trajectory to CSV. When `error` is set, an in-band comment
/// marker row records where integration stopped.
pub fn trajectory_to_csv(
    pair: &ManifoldPair,
    traj: &RollingTrajectory,
    error: Option<&CoreError>,
) -> String {
    let n = pair.n();
    let (mx, mh) = (pair.m.m, pair.m_hat.m);
    let nu = traj
        .b
        .as_ref()
        .and_then(|bs| bs.first())
        .map(|b| b.nrows())
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str(TOOL_HEADER);
    out.push('\n');
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|k| format!("u{k}")));
    cols.extend((1..=mx).map(|k| format!("x{k}")));
    cols.extend((1..=mh).map(|k| format!("xh{k}")));
    for i in 1..=n {
        for j in 1..=n {
            cols.push(format!("a{i}{j}"));
        }
    }
    for i in 1..=nu {
        for j in 1..=nu {
            cols.push(format!("b{i}{j}"));
        }
    }
    out.push_str(&cols.join(","));
    out.push('\n');
    for i in 0..traj.t.len() {
        let mut row = vec![fmt(traj.t[i])];
        row.extend(traj.u[i].iter().map(|&v| fmt(v)));
        row.extend(traj.states[i].x.iter().map(|&v| fmt(v)));
        row.extend(traj.states[i].x_hat.iter().map(|&v| fmt(v)));
        row.extend(traj.states[i].a.as_slice().iter().map(|&v| fmt(v)));
        if let Some(bs) = &traj.b {
            row.extend(bs[i].as_slice().iter().map(|&v| fmt(v)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    if let Some(e) = error {
        out.push_str(&format!("# error: {e}\n"));
    }
    out
}

/// Serializes a transported-coefficient path to CSV (`t, z1..zk`).
pub fn coefficients_to_csv(t: &[f64], path: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(TOOL_HEADER);
    out.push('\n');
    let k = path.first().map(|z| z.len()).unwrap_or(0);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=k).map(|i| format!("z{i}")));
    out.push_str(&cols.join(","));
    out.push('\n');
    for (ti, zi) in t.iter().zip(path) {
        let mut row = vec![fmt(*ti)];
        row.extend(zi.iter().map(|&v| fmt(v)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Curve CSV: `t, x1..xm [, u1..un]`.
pub fn curve_to_csv(curve: &SampledCurve) -> String {
    let mut out = String::new();
    out.push_str(TOOL_HEADER);
    out.push('\n');
    let m = curve.x[0].len();
    let nu = curve.u.as_ref().map(|u| u[0].len()).unwrap_or(0);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|i| format!("x{i}")));
    cols.extend((1..=nu).map(|i| format!("u{i}")));
    out.push_str(&cols.join(","));
    out.push('\n');
    for i in 0..curve.t.len() {
        let mut row = vec![fmt(curve.t[i])];
        row.extend(curve.x[i].iter().map(|&v| fmt(v)));
        if let Some(u) = &curve.u {
            row.extend(u[i].iter().map(|&v| fmt(v)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a curve CSV produced by this tool (or hand-written with the same
/// header convention). Columns named `x*` become coordinates, `u*` controls.
pub fn curve_from_csv(text: &str) -> Result<SampledCurve> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| CoreError::BadInput("empty curve file".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.first() != Some(&"t") {
        return Err(CoreError::BadInput("first curve column must be t".into()));
    }
    let x_cols: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with('x') && !n.starts_with("xh"))
        .map(|(i, _)| i)
        .collect();
    let u_cols: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with('u'))
        .map(|(i, _)| i)
        .collect();
    if x_cols.is_empty() {
        return Err(CoreError::BadInput("curve file has no x columns".into()));
    }
    let mut t = Vec::new();
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for line in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CoreError::BadInput(format!("bad number `{s}` in curve file")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != names.len() {
            return Err(CoreError::BadInput("ragged curve row".into()));
        }
        t.push(vals[0]);
        xs.push(x_cols.iter().map(|&i| vals[i]).collect());
        if !u_cols.is_empty() {
            us.push(u_cols.iter().map(|&i| vals[i]).collect());
        }
    }
    SampledCurve::new(t, xs, if us.is_empty() { None } else { Some(us) })
}

/// Parses a trajectory CSV back into states (used by tests and by transport
/// of rolled curves).
pub fn trajectory_from_csv(pair: &ManifoldPair, text: &str) -> Result<RollingTrajectory> {
    let n = pair.n();
    let (mx, mh) = (pair.m.m, pair.m_hat.m);
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| CoreError::BadInput("empty trajectory file".into()))?;
    let ncols = header.split(',').count();
    let base = 1 + n + mx + mh + n * n;
    let nu2 = ncols.saturating_sub(base);
    let mut t = Vec::new();
    let mut states = Vec::new();
    let mut u = Vec::new();
    let mut bs = Vec::new();
    for line in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CoreError::BadInput(format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != ncols {
            return Err(CoreError::BadInput("ragged trajectory row".into()));
        }
        let mut pos = 0usize;
        let mut take = |k: usize| {
            let out = vals[pos..pos + k].to_vec();
            pos += k;
            out
        };
        t.push(take(1)[0]);
        u.push(take(n));
        let x = take(mx);
        let xh = take(mh);
        let a = Matrix::from_vec(n, n, take(n * n))?;
        states.push(ConfigPoint { x, x_hat: xh, a });
        if nu2 > 0 {
            let nu = (nu2 as f64).sqrt().round() as usize;
            bs.push(Matrix::from_vec(nu, nu, take(nu * nu))?);
        }
    }
    Ok(RollingTrajectory {
        t,
        states,
        b: if bs.is_empty() { None } else { Some(bs) },
        u,
    })
}

/// JSON shape of the residual report:
/// `{"noslip": r, "notwist_tangential": r, "notwist_normal": r|"vacuous",
/// "orientation": bool}`.
#[derive(Serialize)]
pub struct ResidualJson {
    pub noslip: f64,
    pub notwist_tangential: f64,
    pub notwist_normal: serde_json::Value,
    pub orientation: bool,
}

impl From<&RollingConditionReport> for ResidualJson {
    fn from(r: &RollingConditionReport) -> Self {
        ResidualJson {
            noslip: r.noslip,
            notwist_tangential: r.notwist_tangential,
            notwist_normal: match r.notwist_normal {
                Some(v) => serde_json::json!(v),
                None => serde_json::json!("vacuous"),
            },
            orientation: r.orientation,
        }
    }
}
