//! The surrogate fundamental-solution quasi-metric and its balls.
//!
//! True kernels are never computed here. The surrogate takes
//! `gamma_hat(x,y) = max(E(x, d_hat(x,y)), E(y, d_hat(y,x)))`, the
//! profile of the volume polynomial evaluated at the estimated control
//! distance, symmetrized by max so ball inclusions keep their
//! direction. Every theorem-level constant gets an empirically fitted
//! counterpart, reported next to its theoretical form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{DistanceEstimator, OptimizerConfig};
use crate::error::MpError;
use crate::map_maybe_parallel;
use crate::operator::OperatorSpec;
use crate::volume::VolumeTable;

/// A quasi-metric ball `{y : gamma_hat(x,y) < r}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Calibrated evaluation context for the surrogate quasi-metric.
#[derive(Clone, Debug)]
pub struct GammaContext {
    table: VolumeTable,
    estimator: DistanceEstimator,
    distance_config: OptimizerConfig,
    /// Empirical volume-comparison constant.
    pub c1_hat: f64,
    /// Kernel-comparison constant of the surrogate, identically 1.
    pub c2_hat: f64,
    /// Empirical quasi-triangle constant, set by the scan.
    pub c_hat: Option<f64>,
    /// Ball-separation constant `1/(2 c_hat)`.
    pub theta_hat: Option<f64>,
}

impl GammaContext {
    pub fn new(table: VolumeTable, distance_config: OptimizerConfig, c1_hat: f64) -> Self {
        let estimator = DistanceEstimator::new(table.spec());
        GammaContext {
            table,
            estimator,
            distance_config,
            c1_hat,
            c2_hat: 1.0,
            c_hat: None,
            theta_hat: None,
        }
    }

    pub fn spec(&self) -> &OperatorSpec {
        self.table.spec()
    }

    pub fn table(&self) -> &VolumeTable {
        &self.table
    }

    pub fn estimator(&self) -> &DistanceEstimator {
        &self.estimator
    }

    pub fn distance_config(&self) -> &OptimizerConfig {
        &self.distance_config
    }

    /// Theoretical quasi-triangle bound `max{2^{Q-2}, 3^Q c1^2 / 4}`
    /// evaluated with the calibrated `c1_hat`.
    pub fn c_theory(&self) -> f64 {
        let q = self.table.q() as i32;
        (2.0_f64.powi(q - 2)).max(3.0_f64.powi(q) * self.c1_hat * self.c1_hat / 4.0)
    }

    /// Install previously calibrated constants (from an artifact).
    pub fn set_triangle_constant(&mut self, c_hat: f64) {
        self.c_hat = Some(c_hat);
        self.theta_hat = Some(1.0 / (2.0 * c_hat));
    }

    /// `theta_hat`, or an error naming the missing calibration.
    pub fn theta_hat(&self) -> Result<f64, MpError> {
        self.theta_hat.ok_or_else(|| {
            MpError::MissingCalibration(
                "theta-hat unavailable: run quasi_triangle_scan first".into(),
            )
        })
    }

    pub fn c_hat(&self) -> Result<f64, MpError> {
        self.c_hat.ok_or_else(|| {
            MpError::MissingCalibration("c-hat unavailable: run quasi_triangle_scan first".into())
        })
    }

    /// The surrogate quasi-metric; zero exactly on the diagonal.
    ///
    /// One distance estimate feeds both base-point profiles; the pair
    /// is ordered canonically first, so the value is exactly symmetric.
    pub fn gamma_hat(&self, x: &[f64], y: &[f64]) -> f64 {
        if x == y {
            return 0.0;
        }
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        let d = self
            .estimator
            .estimate(a, b, &self.distance_config)
            .upper
            .max(f64::MIN_POSITIVE);
        let e_a = self.table.e_profile(a, d);
        let e_b = self.table.e_profile(b, d);
        e_a.max(e_b)
    }

    /// `gamma_hat(0, x)`.
    pub fn gamma_hat_0(&self, x: &[f64]) -> f64 {
        let origin = vec![0.0; self.spec().dim()];
        self.gamma_hat(&origin, x)
    }

    /// Surrogate kernel value `1/gamma_hat`, infinite on the diagonal.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let g = self.gamma_hat(x, y);
        if g == 0.0 {
            f64::INFINITY
        } else {
            1.0 / g
        }
    }

    /// Ball membership `gamma_hat(center, y) < radius`.
    pub fn ball_contains(&self, ball: &GammaBall, y: &[f64]) -> bool {
        self.gamma_hat(&ball.center, y) < ball.radius
    }

    /// Decay samples `(lambda, kernel(0, dilate_lambda(y)))`.
    pub fn decay_curve(&self, y: &[f64], lambdas: &[f64]) -> Vec<(f64, f64)> {
        let dilation = self.spec().dilation().clone();
        let origin = vec![0.0; y.len()];
        lambdas
            .iter()
            .map(|&l| {
                let yl = dilation.apply(l, y);
                (l, self.kernel(&origin, &yl))
            })
            .collect()
    }
}

/// Result of the randomized quasi-triangle scan.
#[derive(Clone, Debug, Serialize)]
pub struct TriangleScan {
    pub trials: usize,
    pub c_hat: f64,
    pub theta_hat: f64,
    pub c_theory: f64,
    pub worst_triple: (Vec<f64>, Vec<f64>, Vec<f64>),
    pub worst_ratio: f64,
}

/// Scan random triples for the worst quasi-triangle ratio
/// `gamma(x,y) / (gamma(x,z) + gamma(z,y))` and record the constants.
///
/// Fails if the empirical constant exceeds the theoretical bound by
/// more than 10%, which indicates a distance-estimator defect.
pub fn quasi_triangle_scan(
    ctx: &mut GammaContext,
    trials: usize,
    seed: u64,
) -> Result<TriangleScan, MpError> {
    if trials < 100 {
        return Err(MpError::invariant("quasi_triangle_scan", "need at least 100 trials"));
    }
    let n = ctx.spec().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
    };
    let triples: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..trials)
        .map(|_| (draw(&mut rng), draw(&mut rng), draw(&mut rng)))
        .collect();
    let ctx_ref = &*ctx;
    let ratios = map_maybe_parallel(triples, move |(x, y, z)| {
        let num = ctx_ref.gamma_hat(&x, &y);
        let den = ctx_ref.gamma_hat(&x, &z) + ctx_ref.gamma_hat(&z, &y);
        let ratio = if den > 0.0 { num / den } else { 0.0 };
        (ratio, x, y, z)
    });
    let mut worst = (0.0_f64, Vec::new(), Vec::new(), Vec::new());
    for r in ratios {
        if r.0 > worst.0 {
            worst = r;
        }
    }
    let c_hat = worst.0.max(1.0);
    let c_theory = ctx.c_theory();
    if c_hat > c_theory * 1.10 {
        return Err(MpError::Numerical(format!(
            "empirical quasi-triangle constant {c_hat:.3} exceeds theoretical bound {c_theory:.3} by more than 10%"
        )));
    }
    ctx.set_triangle_constant(c_hat);
    Ok(TriangleScan {
        trials,
        c_hat,
        theta_hat: 1.0 / (2.0 * c_hat),
        c_theory,
        worst_triple: (worst.1, worst.2, worst.3),
        worst_ratio: worst.0,
    })
}

/// Monte Carlo volume of a quasi-metric ball, with the envelope
/// diagnostics of the report.
#[derive(Clone, Debug, Serialize)]
pub struct GammaBallVolume {
    pub center: Vec<f64>,
    pub radius: f64,
    pub volume: f64,
    pub half_width: f64,
    pub samples: usize,
    /// The profile envelope `r H^2(x,r)` this volume is compared to.
    pub envelope: f64,
    /// Fitted constant `max(vol/envelope, envelope/vol)`.
    pub c3_fit: f64,
}

/// MC volume of `{y : gamma_hat(x,y) < r}`. The bounding-box margin
/// escalates when the boundary guard trips.
pub fn gamma_ball_volume(
    ctx: &GammaContext,
    x: &[f64],
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<GammaBallVolume, MpError> {
    if samples < 1000 {
        return Err(MpError::invariant("gamma_ball_volume", "need at least 1000 samples"));
    }
    let mut last_err = None;
    for margin in crate::distance::BOX_MARGINS {
        let half_widths = gamma_ball_box(ctx, x, r, margin);
        match gamma_mc_over_box(ctx, x, r, samples, seed, &half_widths) {
            Ok(v) => return Ok(v),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

fn gamma_mc_over_box(
    ctx: &GammaContext,
    x: &[f64],
    r: f64,
    samples: usize,
    seed: u64,
    half_widths: &[f64],
) -> Result<GammaBallVolume, MpError> {
    let n = ctx.spec().dim();
    let half_widths = half_widths.to_vec();
    let box_volume: f64 = half_widths.iter().map(|w| 2.0 * w).product();

    let chunk = 128usize;
    let jobs: Vec<(u64, usize)> = (0..samples.div_ceil(chunk))
        .map(|c| (seed.wrapping_add(c as u64), chunk.min(samples - c * chunk)))
        .collect();
    let x_local = x.to_vec();
    let ctx_ref = &*ctx;
    let hw = half_widths.clone();
    let results = map_maybe_parallel(jobs, move |(chunk_seed, count)| {
        let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed.wrapping_mul(0x9e37_79b9));
        let mut hits = 0usize;
        let mut boundary = 0usize;
        let mut y = vec![0.0; n];
        for _ in 0..count {
            let mut near_edge = false;
            for i in 0..n {
                let t: f64 = rng.random_range(-1.0..1.0);
                if t.abs() > 0.995 {
                    near_edge = true;
                }
                y[i] = x_local[i] + t * hw[i];
            }
            if ctx_ref.gamma_hat(&x_local, &y) < r {
                hits += 1;
                if near_edge {
                    boundary += 1;
                }
            }
        }
        (hits, boundary)
    });
    let hits: usize = results.iter().map(|(h, _)| h).sum();
    let boundary_hits: usize = results.iter().map(|(_, b)| b).sum();
    if hits > 0 && boundary_hits * 1000 > hits {
        return Err(MpError::Numerical(format!(
            "bounding box too small: {boundary_hits} of {hits} hits near the boundary"
        )));
    }
    let p = hits as f64 / samples as f64;
    let volume = box_volume * p;
    let half_width = 1.96 * box_volume * (p * (1.0 - p) / samples as f64).sqrt();
    let h = ctx.table.h_profile(x, r);
    let envelope = r * h * h;
    let c3_fit = if volume > 0.0 {
        (volume / envelope).max(envelope / volume)
    } else {
        f64::INFINITY
    };
    Ok(GammaBallVolume { center: x.to_vec(), radius: r, volume, half_width, samples, envelope, c3_fit })
}

/// Weighted bounding box enclosing the gamma-ball: the symmetrized
/// ball sits inside the one-sided distance ball of radius `H(x,r)`,
/// whose extent the membership oracle probes per axis.
fn gamma_ball_box(ctx: &GammaContext, x: &[f64], r: f64, margin: f64) -> Vec<f64> {
    let rho = ctx.table.h_profile(x, r) * 1.05;
    crate::distance::probed_half_widths(ctx.estimator(), x, rho, &ctx.distance_config, margin)
}

/// Measured doubling behavior of gamma-ball volumes between two radii.
#[derive(Clone, Debug, Serialize)]
pub struct GammaDoublingReport {
    pub r_small: f64,
    pub r_large: f64,
    pub volume_small: f64,
    pub volume_large: f64,
    pub measured_exponent: f64,
    pub lower_exponent: f64,
    pub upper_exponent: f64,
    pub c3_fits: (f64, f64),
}

/// Estimate the volume-doubling exponent of gamma-balls at `x`.
pub fn gamma_ball_doubling(
    ctx: &GammaContext,
    x: &[f64],
    r_small: f64,
    r_large: f64,
    samples: usize,
    seed: u64,
) -> Result<GammaDoublingReport, MpError> {
    // Shared seed: the sample draws correspond across the two radii
    // (exactly so under dilation at the origin), so most of the
    // binomial noise cancels out of the measured exponent.
    let small = gamma_ball_volume(ctx, x, r_small, samples, seed)?;
    let large = gamma_ball_volume(ctx, x, r_large, samples, seed)?;
    if small.volume <= 0.0 || large.volume <= 0.0 {
        return Err(MpError::Numerical("zero measured gamma-ball volume".into()));
    }
    let measured_exponent = (large.volume / small.volume).ln() / (r_large / r_small).ln();
    let q = ctx.table.q() as f64;
    let n = ctx.spec().dim() as f64;
    Ok(GammaDoublingReport {
        r_small,
        r_large,
        volume_small: small.volume,
        volume_large: large.volume,
        measured_exponent,
        lower_exponent: q / (q - 2.0),
        upper_exponent: n / (n - 2.0),
        c3_fits: (small.c3_fit, large.c3_fit),
    })
}

/// Agreement report between the gamma-ball and the distance ball of
/// matched radius.
#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub samples: usize,
    pub agreements: usize,
    pub disagreements: usize,
    /// Disagreements whose quasi-metric value sits outside the
    /// boundary tolerance band.
    pub outside_band: usize,
    pub band_rel_width: f64,
}

/// With the surrogate's `c2 = 1` the two-sided ball sandwich collapses
/// to the identity `Omega(x,r) = B(x, H(x,r))` up to symmetrization;
/// sample membership agreement and let disagreements live only near
/// the boundary.
pub fn gamma_ball_sandwich_check(
    ctx: &GammaContext,
    x: &[f64],
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<SandwichReport, MpError> {
    let n = ctx.spec().dim();
    let half_widths = gamma_ball_box(ctx, x, r, 1.9);
    // Boundary band at twice the sampled symmetry tolerance of the
    // distance estimator.
    let band_rel_width = 0.10;
    let h_radius = ctx.table.h_profile(x, r);
    let jobs: Vec<u64> = (0..samples as u64).map(|i| seed.wrapping_add(i)).collect();
    let x_local = x.to_vec();
    let ctx_ref = &*ctx;
    let flags = map_maybe_parallel(jobs, move |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s.wrapping_mul(0x517c_c1b7));
        let y: Vec<f64> = (0..n)
            .map(|i| x_local[i] + rng.random_range(-1.0..1.0) * half_widths[i])
            .collect();
        let gv = ctx_ref.gamma_hat(&x_local, &y);
        let in_gamma = gv < r;
        let in_dist = ctx_ref
            .estimator()
            .member(&x_local, &y, h_radius, ctx_ref.distance_config());
        let near_boundary = (gv - r).abs() <= band_rel_width * r;
        (in_gamma == in_dist, near_boundary)
    });
    let agreements = flags.iter().filter(|(a, _)| *a).count();
    let disagreements = samples - agreements;
    let outside_band = flags.iter().filter(|(a, b)| !*a && !*b).count();
    Ok(SandwichReport { samples, agreements, disagreements, outside_band, band_rel_width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::heisenberg;
    use crate::volume::build_volume_table;

    fn light_ctx() -> GammaContext {
        let spec = heisenberg().unwrap();
        let table = build_volume_table(&spec).unwrap();
        GammaContext::new(table, OptimizerConfig::light(3), 2.0)
    }

    #[test]
    fn gamma_hat_diagonal_is_zero() {
        let ctx = light_ctx();
        let x = [0.4, 0.1, -0.3];
        assert_eq!(ctx.gamma_hat(&x, &x), 0.0);
        assert!(ctx.gamma_hat(&x, &[0.5, 0.1, -0.3]) > 0.0);
    }

    #[test]
    fn gamma_hat_is_symmetric_by_construction() {
        let ctx = light_ctx();
        let x = [0.4, 0.1, -0.3];
        let y = [-0.2, 0.8, 0.1];
        assert_eq!(ctx.gamma_hat(&x, &y), ctx.gamma_hat(&y, &x));
    }

    #[test]
    fn heisenberg_gamma_closed_form() {
        // E(x,r) = omega_Q r^2 here, so gamma_hat = omega_Q * d_hat^2.
        let ctx = light_ctx();
        let origin = [0.0; 3];
        let y = [1.0, 0.0, 0.0];
        let g = ctx.gamma_hat(&origin, &y);
        let w = ctx.table().omega_q();
        // d(0, e1) = 1, so gamma should sit near omega_Q.
        assert!((g / w - 1.0).abs() < 0.1, "gamma/omega = {}", g / w);
    }

    #[test]
    fn triangle_constant_theory_form() {
        let ctx = light_ctx();
        // Q = 4: max{4, 81 * c1^2 / 4} with c1 = 2 -> 81.
        assert!((ctx.c_theory() - 81.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_triple_ratio_is_one() {
        // z = x makes the denominator gamma(x,x) + gamma(x,y) = gamma(x,y).
        let ctx = light_ctx();
        let x = [0.3, 0.0, 0.1];
        let y = [-0.5, 0.4, 0.0];
        let num = ctx.gamma_hat(&x, &y);
        let den = ctx.gamma_hat(&x, &x) + ctx.gamma_hat(&x, &y);
        assert!((num / den - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scan_requires_trials() {
        let mut ctx = light_ctx();
        assert!(quasi_triangle_scan(&mut ctx, 10, 1).is_err());
    }

    #[test]
    fn theta_missing_until_scan() {
        let ctx = light_ctx();
        assert!(ctx.theta_hat().is_err());
        let mut ctx2 = light_ctx();
        ctx2.set_triangle_constant(2.5);
        assert!((ctx2.theta_hat().unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn kernel_decays_along_rays() {
        let ctx = light_ctx();
        let curve = ctx.decay_curve(&[1.0, 0.3, 0.1], &[1.0, 2.0, 4.0]);
        assert!(curve[0].1 > curve[1].1 && curve[1].1 > curve[2].1, "curve {curve:?}");
    }
}
