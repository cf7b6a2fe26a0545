//! Scenario and control specifications: JSON manifold addressing, named
//! built-in scenarios pinning the worked examples, and control parsing.

use crate::chart::{circle_r3, euclidean, line_r3, se3, se3_flat, sphere, FramedChart, SQRT2};
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rolling::{ConfigPoint, Control, ManifoldPair};
use serde::Deserialize;

/// JSON shape of a manifold: `{"type": "euclidean"|"sphere"|"se3"|"se3_flat",
/// "n": int, "pole_sign": "+"|"-"}`.
#[derive(Debug, Deserialize)]
pub struct ManifoldSpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub pole_sign: Option<String>,
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<FramedChart> {
        match self.kind.as_str() {
            "euclidean" => {
                let n = self
                    .n
                    .ok_or_else(|| CoreError::BadInput("euclidean needs n".into()))?;
                if n == 0 {
                    return Err(CoreError::BadInput("n must be at least 1".into()));
                }
                Ok(euclidean(n))
            }
            "sphere" => {
                let n = self
                    .n
                    .ok_or_else(|| CoreError::BadInput("sphere needs n".into()))?;
                if n == 0 {
                    return Err(CoreError::BadInput("n must be at least 1".into()));
                }
                let positive = match self.pole_sign.as_deref() {
                    None | Some("+") => true,
                    Some("-") => false,
                    Some(other) => {
                        return Err(CoreError::BadInput(format!(
                            "pole_sign must be \"+\" or \"-\", got {other}"
                        )))
                    }
                };
                Ok(sphere(n, positive))
            }
            "se3" => Ok(se3()),
            "se3_flat" => Ok(se3_flat()),
            other => Err(CoreError::BadInput(format!("unknown manifold type `{other}`"))),
        }
    }
}

/// Builds a single chart from a name (`se3`, `sphere:2`, ...) or an inline
/// JSON object.
pub fn manifold_from_str(text: &str) -> Result<FramedChart> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        let spec: ManifoldSpec = serde_json::from_str(trimmed)
            .map_err(|e| CoreError::BadInput(format!("bad manifold JSON: {e}")))?;
        return spec.build();
    }
    let (name, arg) = match trimmed.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (trimmed, None),
    };
    let n = || -> Result<usize> {
        arg.ok_or_else(|| CoreError::BadInput(format!("`{name}` needs :n")))?
            .parse()
            .map_err(|_| CoreError::BadInput("bad dimension".into()))
    };
    match name {
        "euclidean" => Ok(euclidean(n()?)),
        "sphere" => Ok(sphere(n()?, true)),
        "se3" => Ok(se3()),
        "se3_flat" => Ok(se3_flat()),
        "circle" => Ok(circle_r3()),
        "line" => Ok(line_r3()),
        "spiral" => Ok(crate::chart::spiral_r3()),
        other => Err(CoreError::BadInput(format!("unknown manifold `{other}`"))),
    }
}

/// JSON shape of a scenario: either `{"name": "..."}` (optionally with
/// `"n"`) or explicit manifolds with an optional initial configuration.
#[derive(Debug, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub manifold: Option<ManifoldSpec>,
    #[serde(default)]
    pub hat_manifold: Option<ManifoldSpec>,
    #[serde(default)]
    pub config: Option<ConfigSpec>,
}

#[derive(Debug, Deserialize)]
pub struct ConfigSpec {
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub x_hat: Option<Vec<f64>>,
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
}

/// A resolved scenario: the pair plus its initial configuration.
pub struct Scenario {
    pub name: String,
    pub pair: ManifoldPair,
    pub start: ConfigPoint,
}

pub const SCENARIO_NAMES: &[&str] = &[
    "sphere_plane_2d",
    "sphere_plane_n",
    "se3_example",
    "circle_line",
    "circle_spiral",
];

/// Builds a named scenario. `sphere_plane_n` takes the dimension as an
/// argument (default 3).
pub fn named_scenario(name: &str, n: Option<usize>) -> Result<Scenario> {
    let pair = match name {
        "sphere_plane_2d" => ManifoldPair::new(sphere(2, true), euclidean(2))?,
        "sphere_plane_n" => {
            let n = n.unwrap_or(3);
            ManifoldPair::new(sphere(n, true), euclidean(n))?
        }
        "se3_example" => ManifoldPair::new(se3(), se3_flat())?,
        "circle_line" => ManifoldPair::new(circle_r3(), line_r3())?,
        "circle_spiral" => ManifoldPair::new(circle_r3(), crate::chart::spiral_r3())?,
        other => {
            return Err(CoreError::BadInput(format!(
                "unknown scenario `{other}` (known: {})",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    let start = ConfigPoint::canonical(&pair);
    Ok(Scenario {
        name: name.to_string(),
        pair,
        start,
    })
}

/// Parses a scenario from JSON text or resolves a bare scenario name.
pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    let trimmed = text.trim();
    if !trimmed.starts_with('{') {
        return named_scenario(trimmed, None);
    }
    let spec: ScenarioSpec = serde_json::from_str(trimmed)
        .map_err(|e| CoreError::BadInput(format!("bad scenario JSON: {e}")))?;
    if let Some(name) = &spec.name {
        return named_scenario(name, spec.n);
    }
    let m = spec
        .manifold
        .as_ref()
        .ok_or_else(|| CoreError::BadInput("scenario needs `manifold` or `name`".into()))?
        .build()?;
    let mh = spec
        .hat_manifold
        .as_ref()
        .ok_or_else(|| CoreError::BadInput("scenario needs `hat_manifold`".into()))?
        .build()?;
    let pair = ManifoldPair::new(m, mh)?;
    let mut start = ConfigPoint::canonical(&pair);
    if let Some(cfg) = &spec.config {
        if let Some(x) = &cfg.x {
            start.x = x.clone();
        }
        if let Some(xh) = &cfg.x_hat {
            start.x_hat = xh.clone();
        }
        if let Some(a) = &cfg.a {
            start.a = Matrix::from_rows(a)?;
        }
    }
    start.validate(&pair)?;
    Ok(Scenario {
        name: "custom".into(),
        pair,
        start,
    })
}

/// JSON shape of a control:
/// `{"type": "piecewise_constant", "knots": [...], "values": [[...], ...]}`.
#[derive(Debug, Deserialize)]
struct ControlSpec {
    #[serde(rename = "type")]
    kind: String,
    knots: Vec<f64>,
    values: Vec<Vec<f64>>,
}

/// Parses a control from JSON text or resolves a named built-in. The named
/// `se3_example` control drives the closed-form trajectory (unit rates for
/// both the rotation and translation parameters).
pub fn control_from_str(text: &str, n: usize) -> Result<Control> {
    let trimmed = text.trim();
    if !trimmed.starts_with('{') {
        return match trimmed {
            "se3_example" => {
                if n != 6 {
                    return Err(CoreError::BadInput(
                        "se3_example control needs a 6-dimensional pair".into(),
                    ));
                }
                Ok(Control::constant(vec![SQRT2, 0.0, 0.0, 0.0, 0.0, 1.0]))
            }
            "unit" => {
                let mut u = vec![0.0; n];
                u[0] = 1.0;
                Ok(Control::constant(u))
            }
            other => Err(CoreError::BadInput(format!("unknown control `{other}`"))),
        };
    }
    let spec: ControlSpec = serde_json::from_str(trimmed)
        .map_err(|e| CoreError::BadInput(format!("bad control JSON: {e}")))?;
    if spec.kind != "piecewise_constant" {
        return Err(CoreError::BadInput(format!(
            "unknown control type `{}`",
            spec.kind
        )));
    }
    if spec.knots.is_empty() || spec.knots.len() != spec.values.len() {
        return Err(CoreError::BadInput(
            "control needs matching, nonempty knots and values".into(),
        ));
    }
    if spec.knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoreError::BadInput("control knots must strictly increase".into()));
    }
    if spec.values.iter().any(|v| v.len() != n) {
        return Err(CoreError::BadInput(format!(
            "control rows must have {n} entries"
        )));
    }
    Ok(Control::PiecewiseConstant {
        knots: spec.knots,
        values: spec.values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifold_specs_build() {
        assert_eq!(manifold_from_str("sphere:2").unwrap().n, 2);
        assert_eq!(manifold_from_str("se3").unwrap().n, 6);
        assert_eq!(
            manifold_from_str(r#"{"type":"sphere","n":3,"pole_sign":"-"}"#)
                .unwrap()
                .m,
            4
        );
        assert!(manifold_from_str("torus").is_err());
        assert!(manifold_from_str(r#"{"type":"sphere"}"#).is_err());
    }

    #[test]
    fn named_scenarios_resolve() {
        for name in SCENARIO_NAMES {
            let s = named_scenario(name, Some(2)).unwrap();
            s.start.validate(&s.pair).unwrap();
        }
        assert!(named_scenario("nope", None).is_err());
    }

    #[test]
    fn scenario_json_with_explicit_config() {
        let s = scenario_from_str(
            r#"{"manifold":{"type":"sphere","n":2},
                "hat_manifold":{"type":"euclidean","n":2},
                "config":{"x_hat":[1.0,2.0],"a":[[0.0,-1.0],[1.0,0.0]]}}"#,
        )
        .unwrap();
        assert_eq!(s.start.x_hat, vec![1.0, 2.0]);
        assert_eq!(s.pair.n(), 2);
        // Mismatched dimensions rejected.
        assert!(scenario_from_str(
            r#"{"manifold":{"type":"sphere","n":2},"hat_manifold":{"type":"euclidean","n":3}}"#
        )
        .is_err());
    }

    #[test]
    fn control_parsing() {
        let c = control_from_str(r#"{"type":"piecewise_constant","knots":[0.0,0.5],"values":[[1,0],[0,1]]}"#, 2).unwrap();
        assert_eq!(c.at(0.2), vec![1.0, 0.0]);
        assert_eq!(c.at(0.7), vec![0.0, 1.0]);
        let named = control_from_str("se3_example", 6).unwrap();
        assert_eq!(named.at(0.0)[0], SQRT2);
        assert!(control_from_str("se3_example", 2).is_err());
        assert!(control_from_str(r#"{"type":"x","knots":[0],"values":[[1]]}"#, 1).is_err());
    }
}
