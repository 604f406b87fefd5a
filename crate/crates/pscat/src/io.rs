//! JSON schemas for configurations, plane samples, and reconstruction
//! results, and the conversions between payloads and core types. Schema
//! errors name the offending field.

use nalgebra::{DMatrix, Vector2, Vector3};
use num_complex::Complex64;
use serde_json::{json, Map, Value};
use thiserror::Error;

use pscat_core::inverse::{PlanePair, PlaneSamples, ReconstructionResult};
use pscat_core::krein::{alpha_to_config, tan_half_to_theta, theta_to_tan_half, Configuration};
use pscat_core::linalg::CMatrix;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("file error: {0}")]
    File(String),
}

impl From<pscat_core::Error> for IoError {
    fn from(e: pscat_core::Error) -> Self {
        IoError::Invariant(e.to_string())
    }
}

fn get<'a>(map: &'a Map<String, Value>, field: &str) -> Result<&'a Value, IoError> {
    map.get(field).ok_or_else(|| IoError::Schema(format!("missing field '{field}'")))
}

fn as_f64(v: &Value, field: &str) -> Result<f64, IoError> {
    v.as_f64().ok_or_else(|| IoError::Schema(format!("field '{field}' must be a number")))
}

fn as_array<'a>(v: &'a Value, field: &str) -> Result<&'a Vec<Value>, IoError> {
    v.as_array().ok_or_else(|| IoError::Schema(format!("field '{field}' must be an array")))
}

fn as_object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>, IoError> {
    v.as_object().ok_or_else(|| IoError::Schema(format!("field '{field}' must be an object")))
}

fn real_matrix_to_json(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Value {
    let mut outer = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut inner = Vec::with_capacity(cols);
        for c in 0..cols {
            inner.push(Value::from(f(r, c)));
        }
        outer.push(Value::Array(inner));
    }
    Value::Array(outer)
}

pub fn complex_matrix_to_json(m: &CMatrix) -> Value {
    json!({
        "re": real_matrix_to_json(m.nrows(), m.ncols(), |r, c| m[(r, c)].re),
        "im": real_matrix_to_json(m.nrows(), m.ncols(), |r, c| m[(r, c)].im),
    })
}

fn real_matrix_from_json(v: &Value, field: &str) -> Result<Vec<Vec<f64>>, IoError> {
    let rows = as_array(v, field)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let cols = as_array(row, &format!("{field}[{i}]"))?;
        let mut r = Vec::with_capacity(cols.len());
        for (j, item) in cols.iter().enumerate() {
            r.push(as_f64(item, &format!("{field}[{i}][{j}]"))?);
        }
        out.push(r);
    }
    Ok(out)
}

pub fn complex_matrix_from_json(v: &Value, field: &str) -> Result<CMatrix, IoError> {
    let obj = as_object(v, field)?;
    let re = real_matrix_from_json(get(obj, "re")?, &format!("{field}.re"))?;
    let n_rows = re.len();
    let n_cols = re.first().map_or(0, Vec::len);
    if re.iter().any(|r| r.len() != n_cols) {
        return Err(IoError::Schema(format!("field '{field}.re' is ragged")));
    }
    let im = match obj.get("im") {
        Some(v) => {
            let im = real_matrix_from_json(v, &format!("{field}.im"))?;
            if im.len() != n_rows || im.iter().any(|r| r.len() != n_cols) {
                return Err(IoError::Schema(format!(
                    "field '{field}.im' shape differs from '{field}.re'"
                )));
            }
            Some(im)
        }
        None => None,
    };
    let mut m = DMatrix::zeros(n_rows, n_cols);
    for r in 0..n_rows {
        for c in 0..n_cols {
            let imv = im.as_ref().map_or(0.0, |im| im[r][c]);
            m[(r, c)] = Complex64::new(re[r][c], imv);
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Parses the configuration payload:
/// `{"xi": [[x1,x2,x3],...], "tan_half_theta": {"re": [[..]], "im": [[..]]}}`
/// with an `"alpha": [..]` alternative (converted through the local map)
/// and an optional `"half_space": bool` tag.
pub fn config_from_payload(payload: &Value) -> Result<Configuration, IoError> {
    let obj = as_object(payload, "payload")?;
    let xi_raw = real_matrix_from_json(get(obj, "xi")?, "xi")?;
    let mut xi = Vec::with_capacity(xi_raw.len());
    for (i, row) in xi_raw.iter().enumerate() {
        if row.len() != 3 {
            return Err(IoError::Schema(format!(
                "field 'xi[{i}]' must have 3 coordinates, got {}",
                row.len()
            )));
        }
        xi.push(Vector3::new(row[0], row[1], row[2]));
    }
    let half_space = match obj.get("half_space") {
        None => false,
        Some(v) => v
            .as_bool()
            .ok_or_else(|| IoError::Schema("field 'half_space' must be a boolean".into()))?,
    };
    let config = match (obj.get("tan_half_theta"), obj.get("alpha")) {
        (Some(_), Some(_)) => {
            return Err(IoError::Schema(
                "fields 'tan_half_theta' and 'alpha' are mutually exclusive".into(),
            ));
        }
        (Some(t), None) => {
            let t = complex_matrix_from_json(t, "tan_half_theta")?;
            Configuration::new(xi, t)?
        }
        (None, Some(a)) => {
            let arr = as_array(a, "alpha")?;
            let mut alpha = Vec::with_capacity(arr.len());
            for (i, item) in arr.iter().enumerate() {
                alpha.push(as_f64(item, &format!("alpha[{i}]"))?);
            }
            alpha_to_config(&alpha, xi)?
        }
        (None, None) => {
            return Err(IoError::Schema(
                "missing field 'tan_half_theta' (or the 'alpha' alternative)".into(),
            ));
        }
    };
    Ok(if half_space { config.into_half_space()? } else { config })
}

pub fn config_to_payload(config: &Configuration) -> Value {
    let mut doc = Map::new();
    doc.insert(
        "xi".into(),
        real_matrix_to_json(config.n(), 3, |r, c| config.xi()[r][c]),
    );
    doc.insert("tan_half_theta".into(), complex_matrix_to_json(config.tan_half_theta()));
    if config.is_half_space() {
        doc.insert("half_space".into(), Value::from(true));
    }
    Value::Object(doc)
}

// ---------------------------------------------------------------------------
// Plane samples
// ---------------------------------------------------------------------------

pub fn samples_from_payload(payload: &Value) -> Result<PlaneSamples, IoError> {
    let obj = as_object(payload, "payload")?;
    let k0 = as_f64(get(obj, "k0")?, "k0")?;
    let noise_sigma = as_f64(get(obj, "noise_sigma")?, "noise_sigma")?;
    let seed = get(obj, "seed")?
        .as_u64()
        .ok_or_else(|| IoError::Schema("field 'seed' must be a nonnegative integer".into()))?;
    let pairs_raw = as_array(get(obj, "pairs")?, "pairs")?;
    let mut pairs = Vec::with_capacity(pairs_raw.len());
    for (i, p) in pairs_raw.iter().enumerate() {
        let pobj = as_object(p, &format!("pairs[{i}]"))?;
        let coords = |name: &str| -> Result<Vector2<f64>, IoError> {
            let arr = as_array(get(pobj, name)?, &format!("pairs[{i}].{name}"))?;
            if arr.len() != 2 {
                return Err(IoError::Schema(format!(
                    "field 'pairs[{i}].{name}' must have 2 coordinates"
                )));
            }
            Ok(Vector2::new(
                as_f64(&arr[0], &format!("pairs[{i}].{name}[0]"))?,
                as_f64(&arr[1], &format!("pairs[{i}].{name}[1]"))?,
            ))
        };
        pairs.push(PlanePair {
            x: coords("x")?,
            y: coords("y")?,
            g: Complex64::new(
                as_f64(get(pobj, "g_re")?, &format!("pairs[{i}].g_re"))?,
                as_f64(get(pobj, "g_im")?, &format!("pairs[{i}].g_im"))?,
            ),
        });
    }
    Ok(PlaneSamples::new(k0, pairs, noise_sigma, seed)?)
}

pub fn samples_to_payload(samples: &PlaneSamples) -> Value {
    let pairs: Vec<Value> = samples
        .pairs()
        .iter()
        .map(|p| {
            json!({
                "x": [p.x.x, p.x.y],
                "y": [p.y.x, p.y.y],
                "g_re": p.g.re,
                "g_im": p.g.im,
            })
        })
        .collect();
    json!({
        "k0": samples.k0(),
        "noise_sigma": samples.noise_sigma(),
        "seed": samples.seed(),
        "pairs": pairs,
    })
}

// ---------------------------------------------------------------------------
// Reconstruction results
// ---------------------------------------------------------------------------

pub fn result_to_payload(result: &ReconstructionResult) -> Result<Value, IoError> {
    for (name, value) in [
        ("residual_rms", result.residual_rms),
        ("hermiticity_defect", result.hermiticity_defect),
    ] {
        crate::envelope::require_finite(value, name)?;
    }
    Ok(json!({
        "xi": real_matrix_to_json(result.xi_hat.len(), 3, |r, c| result.xi_hat[r][c]),
        "p": complex_matrix_to_json(&result.p_hat),
        "tan_half_theta": complex_matrix_to_json(&result.tan_half_hat),
        "theta": complex_matrix_to_json(&result.theta_hat),
        "residual_rms": result.residual_rms,
        "hermiticity_defect": result.hermiticity_defect,
        "model_order": result.model_order,
        "iterations": result.iterations,
        "converged": result.converged,
        "warnings": result.warnings.clone(),
    }))
}

pub fn result_from_payload(payload: &Value) -> Result<ReconstructionResult, IoError> {
    let obj = as_object(payload, "payload")?;
    let xi_raw = real_matrix_from_json(get(obj, "xi")?, "xi")?;
    let mut xi_hat = Vec::with_capacity(xi_raw.len());
    for (i, row) in xi_raw.iter().enumerate() {
        if row.len() != 3 {
            return Err(IoError::Schema(format!("field 'xi[{i}]' must have 3 coordinates")));
        }
        xi_hat.push(Vector3::new(row[0], row[1], row[2]));
    }
    let warnings = match obj.get("warnings") {
        None => Vec::new(),
        Some(v) => as_array(v, "warnings")?
            .iter()
            .enumerate()
            .map(|(i, w)| {
                w.as_str().map(String::from).ok_or_else(|| {
                    IoError::Schema(format!("field 'warnings[{i}]' must be a string"))
                })
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(ReconstructionResult {
        xi_hat,
        p_hat: complex_matrix_from_json(get(obj, "p")?, "p")?,
        tan_half_hat: complex_matrix_from_json(get(obj, "tan_half_theta")?, "tan_half_theta")?,
        theta_hat: complex_matrix_from_json(get(obj, "theta")?, "theta")?,
        residual_rms: as_f64(get(obj, "residual_rms")?, "residual_rms")?,
        hermiticity_defect: as_f64(get(obj, "hermiticity_defect")?, "hermiticity_defect")?,
        model_order: get(obj, "model_order")?
            .as_u64()
            .ok_or_else(|| IoError::Schema("field 'model_order' must be an integer".into()))?
            as usize,
        iterations: obj.get("iterations").and_then(Value::as_u64).unwrap_or(0) as usize,
        converged: obj.get("converged").and_then(Value::as_bool).unwrap_or(true),
        warnings,
    })
}

/// Converts a configuration into the explicit boundary-parameter report
/// used by the `alpha-to-theta` subcommand: the stored T and the
/// principal-branch theta recovered from it.
pub fn theta_report(config: &Configuration) -> Result<Value, IoError> {
    let theta = tan_half_to_theta(config.tan_half_theta())?;
    // round-trip check documents the branch identification
    let t_back = theta_to_tan_half(&theta);
    let round_trip = (t_back - config.tan_half_theta()).norm();
    Ok(json!({
        "xi": real_matrix_to_json(config.n(), 3, |r, c| config.xi()[r][c]),
        "tan_half_theta": complex_matrix_to_json(config.tan_half_theta()),
        "theta": complex_matrix_to_json(theta.matrix()),
        "round_trip_error": round_trip,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_form_converts() {
        let payload = json!({
            "xi": [[0.0, 0.0, -1.0]],
            "alpha": [0.5],
        });
        let cfg = config_from_payload(&payload).unwrap();
        let expect = 0.5 + 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::SQRT_2);
        assert!((cfg.tan_half_theta()[(0, 0)].re - expect).abs() < 1e-15);
        assert!(!cfg.is_half_space());
    }

    #[test]
    fn duplicate_points_are_rejected() {
        let payload = json!({
            "xi": [[0.0, 0.0, -1.0], [0.0, 0.0, -1.0]],
            "alpha": [0.5, 0.5],
        });
        assert!(matches!(config_from_payload(&payload), Err(IoError::Invariant(_))));
    }

    #[test]
    fn non_hermitian_matrix_is_rejected_with_defect() {
        let payload = json!({
            "xi": [[0.0, 0.0, -1.0], [1.0, 0.0, -1.0]],
            "tan_half_theta": {
                "re": [[1.0, 0.5], [0.1, 1.0]],
                "im": [[0.0, 0.0], [0.0, 0.0]],
            },
        });
        match config_from_payload(&payload) {
            Err(IoError::Invariant(msg)) => assert!(msg.contains("Hermitian"), "{msg}"),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_fields() {
        let payload = json!({"xi": [[0.0, 0.0]], "alpha": [0.1]});
        match config_from_payload(&payload) {
            Err(IoError::Schema(msg)) => assert!(msg.contains("xi[0]"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let payload = json!({"k0": 1.0, "noise_sigma": 0.0, "seed": 1, "pairs": [{"x": [0.0, 0.0], "y": [1.0, 0.0], "g_re": 0.1}]});
        match samples_from_payload(&payload) {
            Err(IoError::Schema(msg)) => assert!(msg.contains("g_im"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
