//! Browser bindings for the interactive demo page: distance estimation
//! with path traces, quasi-metric ball slices, and the domain
//! classifier. All functions speak JSON strings so the page stays free
//! of generated types.

use wasm_bindgen::prelude::*;

use mpgeo::criteria::{classify_mp, SetDescriptor};
use mpgeo::distance::{DistanceEstimator, OptimizerConfig};
use mpgeo::gamma::{GammaBall, GammaContext};
use mpgeo::volume::build_volume_table;

fn spec_for(preset: &str) -> Result<mpgeo::OperatorSpec, JsValue> {
    mpgeo::preset(preset).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn config_for(budget: &str, seed: u64) -> OptimizerConfig {
    match budget {
        "full" => OptimizerConfig::full(seed),
        "medium" => OptimizerConfig::medium(seed),
        _ => OptimizerConfig::light(seed),
    }
}

/// Distance estimate plus a sampled trajectory of the best path.
#[wasm_bindgen]
pub fn distance_with_path(
    preset: &str,
    x: &str,
    y: &str,
    budget: &str,
    seed: u64,
) -> Result<String, JsValue> {
    let spec = spec_for(preset)?;
    let xs: Vec<f64> = serde_json::from_str(x).map_err(err_js)?;
    let ys: Vec<f64> = serde_json::from_str(y).map_err(err_js)?;
    let estimator = DistanceEstimator::new(&spec);
    let config = config_for(budget, seed);
    let estimate = estimator.estimate(&xs, &ys, &config);
    let trace = estimator.trace_path(&estimate.path, 8);
    let doc = serde_json::json!({
        "upper": estimate.upper,
        "endpoint_gap": estimate.endpoint_gap,
        "converged": estimate.converged,
        "trace": trace,
    });
    Ok(doc.to_string())
}

/// Membership grid of a quasi-metric ball on the (x1, x3) plane at
/// x2 = 0: row-major bytes, 1 inside, 0 outside. The plane shows the
/// anisotropy of the weighted geometry.
#[wasm_bindgen]
pub fn ball_slice(
    preset: &str,
    center: &str,
    radius: f64,
    half_extent1: f64,
    half_extent3: f64,
    resolution: usize,
    seed: u64,
) -> Result<Vec<u8>, JsValue> {
    let spec = spec_for(preset)?;
    let c: Vec<f64> = serde_json::from_str(center).map_err(err_js)?;
    let table = build_volume_table(&spec).map_err(err_js)?;
    let ctx = GammaContext::new(table, config_for("light", seed), 2.0);
    let ball = GammaBall { center: c.clone(), radius };
    let mut out = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        // Top row = largest x3.
        let x3 = c[2] + half_extent3 * (1.0 - 2.0 * row as f64 / (resolution as f64 - 1.0));
        for col in 0..resolution {
            let x1 = c[0] - half_extent1 + 2.0 * half_extent1 * col as f64 / (resolution as f64 - 1.0);
            let y = vec![x1, c[1], x3];
            out.push(u8::from(ctx.ball_contains(&ball, &y)));
        }
    }
    Ok(out)
}

/// Kernel decay along a dilated ray: JSON list of [lambda, kernel].
#[wasm_bindgen]
pub fn decay_curve(preset: &str, y: &str, lambdas: &str, seed: u64) -> Result<String, JsValue> {
    let spec = spec_for(preset)?;
    let ys: Vec<f64> = serde_json::from_str(y).map_err(err_js)?;
    let ls: Vec<f64> = serde_json::from_str(lambdas).map_err(err_js)?;
    let table = build_volume_table(&spec).map_err(err_js)?;
    let ctx = GammaContext::new(table, config_for("light", seed), 2.0);
    let curve = ctx.decay_curve(&ys, &ls);
    serde_json::to_string(&curve).map_err(err_js)
}

/// Classify a compact domain descriptor; returns the classification
/// JSON with the reason chain.
#[wasm_bindgen]
pub fn classify_domain(preset: &str, domain: &str, seed: u64) -> Result<String, JsValue> {
    let spec = spec_for(preset)?;
    let desc = parse_compact_domain(domain, spec.dim()).map_err(err_js)?;
    let table = build_volume_table(&spec).map_err(err_js)?;
    let ctx = GammaContext::new(table, config_for("light", seed), 2.0);
    let verdict = classify_mp(&ctx, &desc);
    serde_json::to_string(&verdict).map_err(err_js)
}

fn err_js<E: std::fmt::Display>(e: E) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_compact_domain(input: &str, dim: usize) -> Result<SetDescriptor, String> {
    let mut parts = input.split(':');
    let tag = parts.next().unwrap_or_default();
    let mut fields = std::collections::HashMap::new();
    for part in parts {
        if let Some((k, v)) = part.split_once('=') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let point = |key: &str| -> Result<Vec<f64>, String> {
        fields
            .get(key)
            .ok_or_else(|| format!("missing `{key}`"))?
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect()
    };
    let num = |key: &str, default: f64| -> f64 {
        fields.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    };
    match tag {
        "halfspace" => {
            let v = point("v")?;
            if v.len() != dim {
                return Err(format!("normal needs {dim} coordinates"));
            }
            Ok(SetDescriptor::halfspace(v, num("h", 0.0))
                .map_err(|e| e.to_string())?
                .complement())
        }
        "conecomplement" => {
            let center = point("center")?;
            Ok(SetDescriptor::DilationConeWitness {
                seed_ball: GammaBall { center, radius: num("radius", 1.0) },
                lambda0: num("lambda0", 1.0),
            }
            .complement())
        }
        "rn" => Ok(SetDescriptor::full_space()),
        other => Err(format!("unknown domain `{other}`")),
    }
}
