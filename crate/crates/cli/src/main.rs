//! Command-line front door: parse operator specs and set descriptors,
//! orchestrate the library pipelines, and emit JSON/CSV reports.
//!
//! Every run writes one JSON document with the inputs echoed, the
//! calibrated constants in use, and the results. The document is
//! deterministic for a fixed config and seed; the timestamp lives in a
//! separate top-level field so the deterministic part can be compared
//! byte for byte.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mpgeo::criteria::{
    cartan_cover, cartan_coverage_check, classify_mp, cone_to_gamma_cone, d_ball_cover_check,
    halfspace_to_cone, p_cover_check, DiscreteMeasure, SetDescriptor,
};
use mpgeo::distance::{
    calibrate_c1, default_calibration_points, DistanceEstimator, OptimizerConfig,
};
use mpgeo::fd::{assemble, check_discrete_mp, expand_operator, suggest_grid, Scheme};
use mpgeo::gamma::{
    gamma_ball_sandwich_check, gamma_ball_volume, quasi_triangle_scan, GammaBall, GammaContext,
};
use mpgeo::volume::{build_volume_table, check_lambda_homogeneity};
use mpgeo::{MpError, OperatorSpec};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "mpgeo", version, about = "Maximum-principle geometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Built-in preset name (heisenberg, grushin3).
    #[arg(long, global = true, default_value = "heisenberg")]
    preset: String,
    /// Operator config file (overrides --preset).
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Master seed for all randomized work.
    #[arg(long, global = true, default_value_t = mpgeo::DEFAULT_SEED)]
    seed: u64,
    /// Output JSON path; defaults to stdout (and to
    /// $MPGEO_OUT_DIR/<command>_<seed>.json when the variable is set).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Calibration artifact (output of `gamma triangle-scan`).
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Operator utilities.
    Ops {
        #[command(subcommand)]
        action: OpsAction,
    },
    /// Volume polynomial table, sample values and homogeneity report.
    Volume {
        #[command(flatten)]
        common: SpecArgs,
        /// Randomized homogeneity trials.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Control-distance estimate between two points.
    Dist {
        #[command(flatten)]
        common: SpecArgs,
        #[arg(long, value_parser = parse_point)]
        x: Point,
        #[arg(long, value_parser = parse_point)]
        y: Point,
        #[arg(long, default_value_t = 12)]
        segments: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
    },
    /// Quasi-metric operations.
    Gamma {
        #[command(subcommand)]
        action: GammaAction,
    },
    /// Ball-cover summability certificates.
    Cover {
        #[command(subcommand)]
        action: CoverAction,
    },
    /// Cone detection and construction.
    Cone {
        #[command(subcommand)]
        action: ConeAction,
    },
    /// Dyadic covering of a discrete potential's superlevel set.
    Cartan {
        #[command(flatten)]
        common: SpecArgs,
        /// Measure file: JSON {"atoms": [[[x...], mass], ...]}.
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Sampled coverage points.
        #[arg(long, default_value_t = 200)]
        coverage_samples: usize,
    },
    /// Maximum-principle classification of a domain.
    Mp {
        #[command(subcommand)]
        action: MpAction,
    },
    /// Finite-difference verification on a weighted box.
    Fd {
        #[command(subcommand)]
        action: FdAction,
    },
}

#[derive(Subcommand)]
enum OpsAction {
    /// Run all structural invariants on the spec.
    Validate {
        #[command(flatten)]
        common: SpecArgs,
    },
}

#[derive(Subcommand)]
enum GammaAction {
    /// Evaluate the quasi-metric and kernel at a pair.
    Eval {
        #[command(flatten)]
        common: SpecArgs,
        #[arg(long, value_parser = parse_point)]
        x: Point,
        #[arg(long, value_parser = parse_point)]
        y: Point,
        #[arg(long, default_value = "medium")]
        budget: String,
    },
    /// Monte Carlo volume of a quasi-metric ball.
    BallVolume {
        #[command(flatten)]
        common: SpecArgs,
        #[arg(long, value_parser = parse_point)]
        x: Point,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        #[arg(long, default_value = "light")]
        budget: String,
        /// Also check membership agreement with the matched distance ball.
        #[arg(long, default_value_t = false)]
        sandwich: bool,
    },
    /// Randomized quasi-triangle scan; the output doubles as the
    /// calibration artifact for downstream commands.
    TriangleScan {
        #[command(flatten)]
        common: SpecArgs,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        /// Monte Carlo samples per calibration point for c1.
        #[arg(long, default_value_t = 4000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 8)]
        calibration_points: usize,
        #[arg(long, default_value = "light")]
        budget: String,
    },
    /// Kernel decay along a dilated ray, emitted as CSV.
    Decay {
        #[command(flatten)]
        common: SpecArgs,
        #[arg(long, value_parser = parse_point)]
        y: Point,
        #[arg(long, value_parser = parse_point, default_value = "1,2,4,8,16")]
        lambdas: Point,
        /// CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "light")]
        budget: String,
    },
}

#[derive(Subcommand)]
enum CoverAction {
    /// p-summability certificate of a ball family file.
    Check {
        #[command(flatten)]
        common: SpecArgs,
        /// JSON file: [{"center": [..], "radius": r}, ...].
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Interpret radii as distance-ball radii instead of
        /// quasi-metric radii.
        #[arg(long, default_value_t = false)]
        dball: bool,
        #[arg(long, default_value = "light")]
        budget: String,
    },
}

#[derive(Subcommand)]
enum ConeAction {
    /// Detect or construct cone structure in a set descriptor.
    Detect {
        #[command(flatten)]
        common: SpecArgs,
        /// Compact descriptor or @file.json.
        #[arg(long)]
        domain: String,
        /// Dilation factors for pushing a seed ball outward.
        #[arg(long, value_parser = parse_point, default_value = "2,4,8,16,32")]
        lambdas: Point,
        #[arg(long, default_value = "light")]
        budget: String,
    },
}

#[derive(Subcommand)]
enum MpAction {
    /// Classify a domain descriptor.
    Classify {
        #[command(flatten)]
        common: SpecArgs,
        /// Compact descriptor (halfspace:v=1,0,0:h=0, conecomplement:...,
        /// rn) or @file.json with a SetDescriptor document.
        #[arg(long)]
        domain: String,
        #[arg(long, default_value = "light")]
        budget: String,
    },
}

#[derive(Subcommand)]
enum FdAction {
    /// Assemble, solve and check the discrete maximum principle.
    Verify {
        #[command(flatten)]
        common: SpecArgs,
        /// Weighted box scale R (box = dilation of [-1,1]^N by R).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Base nodes per unit-weight axis.
        #[arg(long, default_value_t = 17)]
        base_nodes: usize,
        /// Optional half-space domain: its hyperplane boundary carries
        /// zero data, truncation sides carry --far-value.
        #[arg(long)]
        domain: Option<String>,
        /// Value on truncation (far) boundary sides.
        #[arg(long, default_value_t = 0.0)]
        far_value: f64,
        /// Constant interior source term.
        #[arg(long, default_value_t = 0.0)]
        source: f64,
        /// Probe points, semicolon-separated coordinate lists.
        #[arg(long)]
        probes: Option<String>,
        /// Optional CSV slice (middle plane of the last axis).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Comma-separated floats.
#[derive(Clone, Debug)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    let coords: Result<Vec<f64>, _> = s.split(',').map(|c| c.trim().parse::<f64>()).collect();
    coords.map(Point).map_err(|e| format!("bad coordinate list `{s}`: {e}"))
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct Calibration {
    preset: String,
    c1_hat: f64,
    c_hat: f64,
    theta_hat: f64,
    run_id: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify_error(&e);
            let doc = json!({
                "version": VERSION,
                "error": { "kind": kind, "message": e.to_string() },
            });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            ExitCode::from(code)
        }
    }
}

fn classify_error(e: &MpError) -> (&'static str, u8) {
    match e {
        MpError::Parse(_)
        | MpError::Invariant { .. }
        | MpError::DimensionMismatch(_)
        | MpError::Unsupported(_) => ("validation", 1),
        MpError::Numerical(_)
        | MpError::BudgetExceeded(_)
        | MpError::GridRejected(_)
        | MpError::MissingCalibration(_) => ("numerical", 2),
        MpError::Io(_) => ("io", 2),
    }
}

fn load_spec(common: &SpecArgs) -> Result<OperatorSpec, MpError> {
    match &common.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            mpgeo::parse_operator_spec(&text)
        }
        None => mpgeo::preset(&common.preset),
    }
}

fn budget_config(name: &str, seed: u64) -> Result<OptimizerConfig, MpError> {
    match name {
        "light" => Ok(OptimizerConfig::light(seed)),
        "medium" => Ok(OptimizerConfig::medium(seed)),
        "full" => Ok(OptimizerConfig::full(seed)),
        other => Err(MpError::Unsupported(format!(
            "unknown budget `{other}` (light, medium, full)"
        ))),
    }
}

fn load_calibration(common: &SpecArgs) -> Result<Option<Calibration>, MpError> {
    match &common.calibration {
        None => Ok(None),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let doc: Value =
                serde_json::from_str(&text).map_err(|e| MpError::Parse(e.to_string()))?;
            // Accept either a bare calibration or a full run document.
            let node = doc
                .pointer("/run/result/calibration")
                .or_else(|| doc.pointer("/calibration"))
                .unwrap_or(&doc);
            serde_json::from_value(node.clone())
                .map(Some)
                .map_err(|e| MpError::Parse(format!("calibration file {path:?} malformed: {e}")))
        }
    }
}

fn make_context(
    spec: &OperatorSpec,
    budget: &str,
    common: &SpecArgs,
) -> Result<(GammaContext, Option<Calibration>), MpError> {
    let table = build_volume_table(spec)?;
    let config = budget_config(budget, common.seed)?;
    let calibration = load_calibration(common)?;
    let c1 = calibration.as_ref().map_or(2.0, |c| c.c1_hat);
    let mut ctx = GammaContext::new(table, config, c1);
    if let Some(c) = &calibration {
        ctx.set_triangle_constant(c.c_hat);
    }
    Ok((ctx, calibration))
}

fn constants_json(ctx: &GammaContext, calibration: &Option<Calibration>) -> Value {
    json!({
        "c1_hat": ctx.c1_hat,
        "c2_hat": ctx.c2_hat,
        "c_hat": ctx.c_hat,
        "theta_hat": ctx.theta_hat,
        "c_theory": ctx.c_theory(),
        "calibration_id": calibration.as_ref().map(|c| c.run_id.clone()),
    })
}

/// Emit the run document: deterministic content under "run", timestamp
/// separate.
fn emit(common: &SpecArgs, command: &str, inputs: Value, result: Value) -> Result<(), MpError> {
    let doc = json!({
        "version": VERSION,
        "timestamp": unix_time(),
        "run": {
            "command": command,
            "seed": common.seed,
            "inputs": inputs,
            "result": result,
        }
    });
    let pretty = serde_json::to_string_pretty(&doc).expect("serializable");
    println!("{pretty}");
    let target = common.out.clone().or_else(|| {
        std::env::var_os("MPGEO_OUT_DIR").map(|dir| {
            PathBuf::from(dir).join(format!("{}_{}.json", command.replace(' ', "_"), common.seed))
        })
    });
    if let Some(path) = target {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(&path, pretty)?;
    }
    Ok(())
}

fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn parse_domain(input: &str, dim: usize) -> Result<SetDescriptor, MpError> {
    if let Some(path) = input.strip_prefix('@') {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text).map_err(|e| MpError::Parse(e.to_string()));
    }
    let mut parts = input.split(':');
    let tag = parts.next().unwrap_or_default();
    let mut fields = std::collections::HashMap::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| MpError::Parse(format!("expected key=value in `{part}`")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get_point = |key: &str| -> Result<Vec<f64>, MpError> {
        let raw = fields
            .get(key)
            .ok_or_else(|| MpError::Parse(format!("missing `{key}` in domain `{input}`")))?;
        raw.split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| MpError::Parse(e.to_string())))
            .collect()
    };
    let get_num = |key: &str, default: Option<f64>| -> Result<f64, MpError> {
        match fields.get(key) {
            Some(raw) => raw.parse().map_err(|e| MpError::Parse(format!("bad `{key}`: {e}"))),
            None => {
                default.ok_or_else(|| MpError::Parse(format!("missing `{key}` in `{input}`")))
            }
        }
    };
    match tag {
        // Open half-space domain {<x,v> < h}.
        "halfspace" => {
            let v = get_point("v")?;
            if v.len() != dim {
                return Err(MpError::DimensionMismatch(format!(
                    "normal has {} coordinates, operator dimension is {dim}",
                    v.len()
                )));
            }
            let h = get_num("h", Some(0.0))?;
            Ok(SetDescriptor::halfspace(v, h)?.complement())
        }
        // Complement of a dilation-invariant cone.
        "conecomplement" => {
            let center = get_point("center")?;
            let radius = get_num("radius", None)?;
            let lambda0 = get_num("lambda0", Some(1.0))?;
            Ok(SetDescriptor::DilationConeWitness {
                seed_ball: GammaBall { center, radius },
                lambda0,
            }
            .complement())
        }
        "rn" => Ok(SetDescriptor::full_space()),
        other => Err(MpError::Parse(format!(
            "unknown domain tag `{other}` (halfspace, conecomplement, rn, @file.json)"
        ))),
    }
}

#[derive(Deserialize)]
struct MeasureFile {
    atoms: Vec<(Vec<f64>, f64)>,
}

fn run(cli: Cli) -> Result<(), MpError> {
    match cli.command {
        Command::Ops { action: OpsAction::Validate { common } } => {
            let spec = load_spec(&common)?;
            spec.validate()?;
            let inputs = json!({ "spec": spec.name() });
            let result = json!({
                "valid": true,
                "dimension": spec.dim(),
                "fields": spec.num_fields(),
                "sigma": spec.dilation().sigma(),
                "q": spec.q(),
            });
            emit(&common, "ops validate", inputs, result)
        }
        Command::Volume { common, trials } => {
            let spec = load_spec(&common)?;
            let table = build_volume_table(&spec)?;
            let report = check_lambda_homogeneity(&table, trials, common.seed);
            let mut samples = Vec::new();
            for x in [
                vec![0.0; spec.dim()],
                unit_axis(spec.dim(), 0),
                unit_axis(spec.dim(), 1),
                vec![0.5; spec.dim()],
            ] {
                samples.push(json!({
                    "x": x,
                    "f_values": table.f_values(&x),
                    "lambda_r1": table.lambda(&x, 1.0),
                }));
            }
            let doubling = doubling_report(&table, common.seed);
            let inputs = json!({ "spec": spec.name(), "trials": trials });
            let result = json!({
                "omega_q": table.omega_q(),
                "entries": table.entries().len(),
                "samples": samples,
                "homogeneity": report,
                "doubling": doubling,
            });
            emit(&common, "volume", inputs, result)
        }
        Command::Dist { common, x, y, segments, restarts } => {
            let spec = load_spec(&common)?;
            let mut config = OptimizerConfig::full(common.seed);
            config.segments = segments;
            config.restarts = restarts;
            let estimator = DistanceEstimator::new(&spec);
            let estimate = estimator.estimate(&x.0, &y.0, &config);
            let inputs = json!({
                "spec": spec.name(), "x": x.0, "y": y.0,
                "segments": segments, "restarts": restarts,
            });
            emit(&common, "dist", inputs, serde_json::to_value(&estimate).unwrap())
        }
        Command::Gamma { action } => run_gamma(action),
        Command::Cover { action: CoverAction::Check { common, file, p, dball, budget } } => {
            let spec = load_spec(&common)?;
            let (ctx, calibration) = make_context(&spec, &budget, &common)?;
            let text = std::fs::read_to_string(&file)?;
            let balls: Vec<GammaBall> =
                serde_json::from_str(&text).map_err(|e| MpError::Parse(e.to_string()))?;
            let cert = if dball {
                let cover: Vec<(Vec<f64>, f64)> =
                    balls.iter().map(|b| (b.center.clone(), b.radius)).collect();
                d_ball_cover_check(&ctx, &cover, p)?
            } else {
                p_cover_check(&ctx, &balls, p)?
            };
            let inputs = json!({
                "spec": spec.name(), "file": file, "p": p,
                "kind": if dball { "distance" } else { "gamma" },
            });
            let mut result = serde_json::to_value(&cert).unwrap();
            result["constants"] = constants_json(&ctx, &calibration);
            emit(&common, "cover check", inputs, result)
        }
        Command::Cone { action: ConeAction::Detect { common, domain, lambdas, budget } } => {
            let spec = load_spec(&common)?;
            let (ctx, _) = make_context(&spec, &budget, &common)?;
            let desc = parse_domain(&domain, spec.dim())?;
            let result = match &desc {
                SetDescriptor::Complement { inner } => match &**inner {
                    SetDescriptor::HalfSpace { v, h } => {
                        // Complement of the open half-space domain is
                        // {<x,v> >= h}; build its orthant cone and a
                        // quasi-metric cone witness from it.
                        let cone = halfspace_to_cone(v, *h, spec.dilation())?;
                        let seed = GammaBall {
                            center: cone.interior_point.clone(),
                            radius: ctx.gamma_hat_0(&cone.interior_point) * 0.5,
                        };
                        let witness = cone_to_gamma_cone(&ctx, &seed, &lambdas.0)?;
                        json!({ "kind": "orthant_cone", "cone": cone, "witness": witness })
                    }
                    SetDescriptor::DilationConeWitness { seed_ball, .. } => {
                        let witness = cone_to_gamma_cone(&ctx, seed_ball, &lambdas.0)?;
                        json!({ "kind": "gamma_cone_witness", "witness": witness })
                    }
                    _ => json!({ "kind": "none", "reason": "no cone construction applies" }),
                },
                SetDescriptor::DilationConeWitness { seed_ball, .. } => {
                    let witness = cone_to_gamma_cone(&ctx, seed_ball, &lambdas.0)?;
                    json!({ "kind": "gamma_cone_witness", "witness": witness })
                }
                _ => json!({ "kind": "none", "reason": "no cone construction applies" }),
            };
            let inputs = json!({ "spec": spec.name(), "domain": domain, "lambdas": lambdas.0 });
            emit(&common, "cone detect", inputs, result)
        }
        Command::Cartan { common, measure, h, p, coverage_samples } => {
            let spec = load_spec(&common)?;
            let (ctx, calibration) = make_context(&spec, "light", &common)?;
            let text = std::fs::read_to_string(&measure)?;
            let raw: MeasureFile =
                serde_json::from_str(&text).map_err(|e| MpError::Parse(e.to_string()))?;
            let mu = DiscreteMeasure::new(raw.atoms)?;
            let cover = cartan_cover(&ctx, &mu, h, p)?;
            let coverage =
                cartan_coverage_check(&ctx, &mu, h, p, &cover.cover, coverage_samples, common.seed);
            let inputs = json!({
                "spec": spec.name(), "measure": measure, "h": h, "p": p,
                "coverage_samples": coverage_samples,
            });
            let result = json!({
                "cover": cover,
                "coverage": coverage,
                "constants": constants_json(&ctx, &calibration),
            });
            emit(&common, "cartan", inputs, result)
        }
        Command::Mp { action: MpAction::Classify { common, domain, budget } } => {
            let spec = load_spec(&common)?;
            let (ctx, calibration) = make_context(&spec, &budget, &common)?;
            let desc = parse_domain(&domain, spec.dim())?;
            let verdict = classify_mp(&ctx, &desc);
            let inputs = json!({ "spec": spec.name(), "domain": domain });
            let result = json!({
                "classification": verdict,
                "constants": constants_json(&ctx, &calibration),
            });
            emit(&common, "mp classify", inputs, result)
        }
        Command::Fd { action } => run_fd(action),
    }
}

fn unit_axis(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

fn doubling_report(table: &mpgeo::volume::VolumeTable, seed: u64) -> Value {
    use rand::{Rng as _, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = table.dim() as f64;
    let q = table.q() as f64;
    let mut worst_lower = f64::INFINITY;
    let mut worst_upper = f64::INFINITY;
    let trials = 2000;
    for _ in 0..trials {
        let x: Vec<f64> = (0..table.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r: f64 = rng.random_range(0.05..1.5);
        let big = r * rng.random_range(1.01..8.0);
        let ratio: f64 = big / r;
        let lam_r = table.lambda(&x, r);
        let lam_big = table.lambda(&x, big);
        worst_lower = worst_lower.min(lam_big / (ratio.powf(n) * lam_r));
        worst_upper = worst_upper.min(ratio.powf(q) * lam_r / lam_big);
    }
    json!({
        "trials": trials,
        "lower_exponent": n,
        "upper_exponent": q,
        "min_lower_slack": worst_lower,
        "min_upper_slack": worst_upper,
        "pass": worst_lower >= 1.0 - 1e-12 && worst_upper >= 1.0 - 1e-12,
    })
}

fn run_gamma(action: GammaAction) -> Result<(), MpError> {
    match action {
        GammaAction::Eval { common, x, y, budget } => {
            let spec = load_spec(&common)?;
            let (ctx, calibration) = make_context(&spec, &budget, &common)?;
            let g = ctx.gamma_hat(&x.0, &y.0);
            let inputs = json!({ "spec": spec.name(), "x": x.0, "y": y.0, "budget": budget });
            let result = json!({
                "gamma_hat": g,
                "kernel": if g > 0.0 { Value::from(1.0 / g) } else { Value::Null },
                "constants": constants_json(&ctx, &calibration),
            });
            emit(&common, "gamma eval", inputs, result)
        }
        GammaAction::BallVolume { common, x, r, samples, budget, sandwich } => {
            let spec = load_spec(&common)?;
            let (ctx, calibration) = make_context(&spec, &budget, &common)?;
            let vol = gamma_ball_volume(&ctx, &x.0, r, samples, common.seed)?;
            let sandwich_report = if sandwich {
                Some(gamma_ball_sandwich_check(&ctx, &x.0, r, samples.min(1000), common.seed)?)
            } else {
                None
            };
            let inputs = json!({
                "spec": spec.name(), "x": x.0, "r": r, "samples": samples, "budget": budget,
            });
            let result = json!({
                "volume": vol,
                "sandwich": sandwich_report,
                "constants": constants_json(&ctx, &calibration),
            });
            emit(&common, "gamma ball-volume", inputs, result)
        }
        GammaAction::TriangleScan { common, trials, mc_samples, calibration_points, budget } => {
            let spec = load_spec(&common)?;
            let table = build_volume_table(&spec)?;
            let config = budget_config(&budget, common.seed)?;
            let estimator = DistanceEstimator::new(&spec);
            let points = default_calibration_points(&spec, calibration_points, common.seed);
            let c1 = calibrate_c1(&estimator, &table, &points, mc_samples, &config, common.seed)?;
            let mut ctx = GammaContext::new(table, config, c1.c1);
            let scan = quasi_triangle_scan(&mut ctx, trials, common.seed)?;
            let calibration = Calibration {
                preset: spec.name().to_string(),
                c1_hat: c1.c1,
                c_hat: scan.c_hat,
                theta_hat: scan.theta_hat,
                run_id: format!("cal-{}-{}-{}-{}", spec.name(), common.seed, trials, mc_samples),
            };
            let inputs = json!({
                "spec": spec.name(), "trials": trials, "mc_samples": mc_samples,
                "calibration_points": calibration_points, "budget": budget,
            });
            let result = json!({
                "calibration": calibration,
                "scan": scan,
                "c1_detail": c1,
            });
            emit(&common, "gamma triangle-scan", inputs, result)
        }
        GammaAction::Decay { common, y, lambdas, csv, budget } => {
            let spec = load_spec(&common)?;
            let (ctx, _) = make_context(&spec, &budget, &common)?;
            let curve = ctx.decay_curve(&y.0, &lambdas.0);
            if let Some(path) = &csv {
                let mut out = String::from("lambda,kernel\n");
                for (l, v) in &curve {
                    out.push_str(&format!("{l},{v}\n"));
                }
                std::fs::write(path, out)?;
            }
            let monotone = curve.windows(2).all(|w| w[0].1 >= w[1].1);
            let inputs = json!({ "spec": spec.name(), "y": y.0, "lambdas": lambdas.0 });
            let result = json!({ "curve": curve, "monotone_decreasing": monotone, "csv": csv });
            emit(&common, "gamma decay", inputs, result)
        }
    }
}

fn run_fd(action: FdAction) -> Result<(), MpError> {
    let FdAction::Verify {
        common,
        scale,
        base_nodes,
        domain,
        far_value,
        source,
        probes,
        csv,
    } = action;
    let spec = load_spec(&common)?;
    let expanded = expand_operator(&spec);
    let grid = suggest_grid(&spec, base_nodes, scale);
    let problem = assemble(&expanded, &spec, &grid, Scheme::Auto)?;
    // Optional half-space domain: hyperplane side carries zero data,
    // truncation sides carry the far value.
    let halfspace = match &domain {
        Some(d) => match parse_domain(d, spec.dim())? {
            SetDescriptor::Complement { inner } => match *inner {
                SetDescriptor::HalfSpace { v, h } => Some((v, h)),
                _ => {
                    return Err(MpError::Unsupported(
                        "fd verify supports half-space domains only".into(),
                    ))
                }
            },
            _ => {
                return Err(MpError::Unsupported(
                    "fd verify supports half-space domains only".into(),
                ))
            }
        },
        None => None,
    };
    let hs = halfspace.clone();
    let boundary = move |x: &[f64]| -> f64 {
        match &hs {
            Some((v, h)) => {
                let inner: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
                if inner >= *h {
                    0.0 // hyperplane part of the boundary
                } else {
                    far_value
                }
            }
            None => far_value,
        }
    };
    let u = problem.solve_dirichlet(&boundary, |_| source)?;
    let report = check_discrete_mp(&problem, &u, 1e-9);
    let probe_values: Vec<Value> = match &probes {
        Some(raw) => raw
            .split(';')
            .map(|p| {
                let point = parse_point(p).map_err(MpError::Parse)?;
                let flat = nearest_node(&problem, &point.0);
                Ok(json!({ "probe": point.0, "value": u[flat] }))
            })
            .collect::<Result<_, MpError>>()?,
        None => Vec::new(),
    };
    if let Some(path) = &csv {
        write_middle_slice(&problem, &u, path)?;
    }
    let min = u.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let max = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let inputs = json!({
        "spec": spec.name(), "scale": scale, "base_nodes": base_nodes,
        "domain": domain, "far_value": far_value, "source": source,
    });
    let result = json!({
        "grid": { "bounds": grid.bounds, "nodes": grid.nodes, "total": grid.node_count() },
        "scheme": problem.scheme_used,
        "interior_nodes": problem.interior_count(),
        "solution_range": [min, max],
        "mp_check": report,
        "probes": probe_values,
        "csv": csv,
    });
    emit(&common, "fd verify", inputs, result)
}

fn nearest_node(problem: &mpgeo::fd::GridProblem, x: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for flat in 0..problem.node_count() {
        let c = problem.coords(flat);
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = flat;
        }
    }
    best
}

fn write_middle_slice(
    problem: &mpgeo::fd::GridProblem,
    u: &[f64],
    path: &PathBuf,
) -> Result<(), MpError> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "x1,x2,x3,u")?;
    let mid = problem.config.bounds.last().map(|(lo, hi)| 0.5 * (lo + hi)).unwrap_or(0.0);
    let spacing = problem.config.spacing();
    let tol = spacing.last().copied().unwrap_or(1.0) * 0.51;
    for flat in 0..problem.node_count() {
        let c = problem.coords(flat);
        if (c[c.len() - 1] - mid).abs() <= tol {
            let coords: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(file, "{},{}", coords.join(","), u[flat])?;
        }
    }
    Ok(())
}
