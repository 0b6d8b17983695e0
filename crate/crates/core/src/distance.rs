//! Upper-bound estimation of the control distance by direct subunit
//! path optimization, plus Monte Carlo ball volumes and the empirical
//! constant tying them to the volume polynomial.
//!
//! The optimizer works in "energy form": piecewise-constant controls on
//! `K` equal subintervals of `[0,1]`, unconstrained, steering the flow
//! `x' = sum_j u_j X_j(x)` toward the target under a quadratic endpoint
//! penalty. The energy-optimal solution converts exactly into a subunit
//! path (unit-ball controls, per-segment durations) whose total time is
//! the reported distance bound. Problems are first rescaled through the
//! dilation so both endpoints have weighted gauge O(1); together with
//! the exact scaling law of the distance this makes estimates at
//! dilated pairs consistent by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::MpError;
use crate::map_maybe_parallel;
use crate::operator::OperatorSpec;
use crate::poly::rational_to_f64;
use crate::volume::VolumeTable;

/// Budget knobs for one distance estimate.
#[derive(Clone, Debug, Serialize)]
pub struct OptimizerConfig {
    /// Control segments per path.
    pub segments: usize,
    /// Independent seeded restarts, merged by best value.
    pub restarts: usize,
    /// Fixed integrator steps per segment.
    pub steps_per_segment: usize,
    /// Coordinate-descent sweeps per penalty level.
    pub sweeps: usize,
    /// Simplex-polish iterations per penalty level.
    pub polish_iters: usize,
    /// Shooting-correction iterations after the penalty phase.
    pub newton_iters: usize,
    /// Endpoint gap tolerance in the weighted gauge (rescaled problem).
    pub gap_tol: f64,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Full-quality budget for standalone distance queries.
    pub fn full(seed: u64) -> Self {
        OptimizerConfig {
            segments: 12,
            restarts: 16,
            steps_per_segment: 200,
            sweeps: 4,
            polish_iters: 80,
            newton_iters: 12,
            gap_tol: 1e-4,
            seed,
        }
    }

    /// Reduced budget for Monte Carlo membership testing.
    pub fn light(seed: u64) -> Self {
        OptimizerConfig {
            segments: 4,
            restarts: 3,
            steps_per_segment: 8,
            sweeps: 2,
            polish_iters: 12,
            newton_iters: 6,
            gap_tol: 1e-3,
            seed,
        }
    }

    /// Intermediate budget for sampled property scans.
    pub fn medium(seed: u64) -> Self {
        OptimizerConfig {
            segments: 8,
            restarts: 8,
            steps_per_segment: 40,
            sweeps: 3,
            polish_iters: 40,
            newton_iters: 10,
            gap_tol: 1e-4,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One constant-control piece of a subunit path.
#[derive(Clone, Debug, Serialize)]
pub struct PathSegment {
    pub duration: f64,
    /// Controls for the generator fields, `sum u_j^2 <= 1`.
    pub controls: Vec<f64>,
}

/// A subunit control path from `start`.
#[derive(Clone, Debug, Serialize)]
pub struct ControlPath {
    pub start: Vec<f64>,
    pub segments: Vec<PathSegment>,
}

impl ControlPath {
    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Result of a distance query: an upper bound with diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceEstimate {
    pub upper: f64,
    /// Residual gauge distance of the trajectory endpoint to the
    /// target, in original (unscaled) coordinates.
    pub endpoint_gap: f64,
    pub restarts: usize,
    pub converged: bool,
    pub path: ControlPath,
}

/// Field system compiled to plain-f64 polynomial evaluators.
#[derive(Clone, Debug)]
pub struct DistanceEstimator {
    spec: OperatorSpec,
    fields: Vec<Vec<CompiledComponent>>,
    /// Per-coordinate sums of absolute coefficient sizes, used by the
    /// Monte Carlo bounding box.
    component_bounds: Vec<f64>,
}

#[derive(Clone, Debug)]
struct CompiledComponent {
    terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledComponent {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = *c;
            for (&xi, &ei) in x.iter().zip(e) {
                match ei {
                    0 => {}
                    1 => m *= xi,
                    2 => m *= xi * xi,
                    _ => m *= xi.powi(ei as i32),
                }
            }
            acc += m;
        }
        acc
    }
}

impl DistanceEstimator {
    pub fn new(spec: &OperatorSpec) -> Self {
        let n = spec.dim();
        let fields: Vec<Vec<CompiledComponent>> = spec
            .fields()
            .iter()
            .map(|f| {
                (0..n)
                    .map(|i| CompiledComponent {
                        terms: f
                            .component(i)
                            .terms()
                            .map(|(e, c)| (e.to_vec(), rational_to_f64(c)))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        let component_bounds = (0..n)
            .map(|i| {
                fields
                    .iter()
                    .map(|f| f[i].terms.iter().map(|(_, c)| c.abs()).sum::<f64>())
                    .sum()
            })
            .collect();
        DistanceEstimator { spec: spec.clone(), fields, component_bounds }
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    /// Velocity `sum_j u_j X_j(x)` written into `out`.
    fn velocity(&self, x: &[f64], controls: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, u) in controls.iter().enumerate() {
            if *u == 0.0 {
                continue;
            }
            for (i, comp) in self.fields[j].iter().enumerate() {
                out[i] += u * comp.eval(x);
            }
        }
    }

    /// Integrate piecewise-constant controls over [0,1], `steps` RK4
    /// steps per segment. Controls are laid out segment-major.
    fn integrate(&self, start: &[f64], controls: &[f64], segments: usize, steps: usize) -> Vec<f64> {
        let n = start.len();
        let m = self.fields.len();
        let h = 1.0 / (segments as f64 * steps as f64);
        let mut x = start.to_vec();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for seg in 0..segments {
            let u = &controls[seg * m..(seg + 1) * m];
            for _ in 0..steps {
                self.velocity(&x, u, &mut k1);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                self.velocity(&tmp, u, &mut k2);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                self.velocity(&tmp, u, &mut k3);
                for i in 0..n {
                    tmp[i] = x[i] + h * k3[i];
                }
                self.velocity(&tmp, u, &mut k4);
                for i in 0..n {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        x
    }

    /// Sample the trajectory of a subunit path: `steps` RK4 steps per
    /// segment, every state recorded.
    pub fn trace_path(&self, path: &ControlPath, steps: usize) -> Vec<Vec<f64>> {
        let n = path.start.len();
        let mut x = path.start.clone();
        let mut out = vec![x.clone()];
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for seg in &path.segments {
            if seg.duration <= 0.0 {
                continue;
            }
            let h = seg.duration / steps as f64;
            for _ in 0..steps {
                self.velocity(&x, &seg.controls, &mut k1);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                self.velocity(&tmp, &seg.controls, &mut k2);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                self.velocity(&tmp, &seg.controls, &mut k3);
                for i in 0..n {
                    tmp[i] = x[i] + h * k3[i];
                }
                self.velocity(&tmp, &seg.controls, &mut k4);
                for i in 0..n {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                out.push(x.clone());
            }
        }
        out
    }

    /// Re-integrate a subunit path with `steps` RK4 steps per segment.
    pub fn integrate_path(&self, path: &ControlPath, steps: usize) -> Vec<f64> {
        let n = path.start.len();
        let mut x = path.start.clone();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for seg in &path.segments {
            if seg.duration <= 0.0 {
                continue;
            }
            let h = seg.duration / steps as f64;
            for _ in 0..steps {
                self.velocity(&x, &seg.controls, &mut k1);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                self.velocity(&tmp, &seg.controls, &mut k2);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                self.velocity(&tmp, &seg.controls, &mut k3);
                for i in 0..n {
                    tmp[i] = x[i] + h * k3[i];
                }
                self.velocity(&tmp, &seg.controls, &mut k4);
                for i in 0..n {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        x
    }

    /// Upper-bound estimate of the control distance from `x` to `y`.
    pub fn estimate(&self, x: &[f64], y: &[f64], config: &OptimizerConfig) -> DistanceEstimate {
        let n = self.spec.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        if x == y {
            return DistanceEstimate {
                upper: 0.0,
                endpoint_gap: 0.0,
                restarts: 0,
                converged: true,
                path: ControlPath { start: x.to_vec(), segments: Vec::new() },
            };
        }
        let dilation = self.spec.dilation();
        // Canonical rescale: bring both endpoints to gauge O(1).
        let scale = dilation.gauge(x).max(dilation.gauge(y)).max(f64::MIN_POSITIVE);
        let xs = dilation.apply(1.0 / scale, x);
        let ys = dilation.apply(1.0 / scale, y);
        let (converged, length, gap, controls) = self.best_controls(&xs, &ys, config);
        let m = self.fields.len();
        let seg_time = 1.0 / config.segments as f64;
        let segments: Vec<PathSegment> = (0..config.segments)
            .map(|k| {
                let u = &controls[k * m..(k + 1) * m];
                let speed = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if speed == 0.0 {
                    PathSegment { duration: 0.0, controls: vec![0.0; m] }
                } else {
                    PathSegment {
                        // Dilating a subunit path by `scale` keeps the
                        // controls admissible and multiplies times by it.
                        duration: scale * speed * seg_time,
                        controls: u.iter().map(|v| v / speed).collect(),
                    }
                }
            })
            .collect();
        DistanceEstimate {
            upper: scale * length,
            endpoint_gap: scale * gap,
            restarts: config.restarts,
            converged,
            path: ControlPath { start: x.to_vec(), segments },
        }
    }

    /// Run the restart ladder over both orientations of the rescaled
    /// problem and keep the best forward control vector. Solving the
    /// reversed problem and flipping the path makes the candidate set
    /// symmetric in the endpoints, so the estimate inherits the
    /// symmetry of the true distance.
    fn best_controls(
        &self,
        xs: &[f64],
        ys: &[f64],
        config: &OptimizerConfig,
    ) -> (bool, f64, f64, Vec<f64>) {
        let m = self.fields.len();
        let k = config.segments;
        let mut best: Option<(bool, f64, f64, Vec<f64>)> = None;
        for restart in 0..config.restarts {
            let ladder = (restart / 2) as u64;
            let backwards = restart % 2 == 1;
            let (length, gap, controls) = if backwards {
                let (length, _, w) = self.optimize_restart(ys, xs, config, ladder);
                // Time-reverse: negate controls, flip segment order.
                let mut v = vec![0.0; w.len()];
                for seg in 0..k {
                    for j in 0..m {
                        v[seg * m + j] = -w[(k - 1 - seg) * m + j];
                    }
                }
                let endpoint = self.integrate(xs, &v, k, config.steps_per_segment);
                (length, self.gauge_diff(&endpoint, ys), v)
            } else {
                self.optimize_restart(xs, ys, config, ladder)
            };
            let conv = gap <= config.gap_tol;
            let candidate = (conv, length, gap, controls);
            best = Some(match best.take() {
                None => candidate,
                Some(current) => {
                    // Converged beats non-converged; then shorter wins.
                    let keep_candidate = match (candidate.0, current.0) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => candidate.1 < current.1,
                    };
                    if keep_candidate {
                        candidate
                    } else {
                        current
                    }
                }
            });
        }
        best.unwrap()
    }

    /// One seeded restart of the penalized-energy optimization on the
    /// rescaled problem. Returns (subunit length, gauge gap, controls).
    fn optimize_restart(
        &self,
        xs: &[f64],
        ys: &[f64],
        config: &OptimizerConfig,
        restart: u64,
    ) -> (f64, f64, Vec<f64>) {
        let m = self.fields.len();
        let k = config.segments;
        let dim = k * m;
        let mut rng = ChaCha8Rng::seed_from_u64(
            config.seed ^ restart.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );

        // Initialization ladder: the straight shot first, then circular
        // control starts (the natural second family on these geometries,
        // reaching the vertical directions), then noisy variants.
        let shot = self.straight_shot(xs, ys);
        let mut v = vec![0.0; dim];
        for seg in 0..k {
            for j in 0..m {
                v[seg * m + j] = shot[j];
            }
        }
        if restart > 0 {
            let pairs: Vec<(usize, usize)> = if m >= 2 {
                (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect()
            } else {
                vec![(0, 0)]
            };
            let idx = (restart as usize - 1) % (2 * pairs.len());
            let (p, q) = pairs[idx / 2];
            let winding = if idx % 2 == 0 { 1.0 } else { -1.0 };
            let rung = ((restart as usize - 1) / (2 * pairs.len())) as i32;
            let amplitude = 0.8 * 2.0_f64.powi(rung);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            for seg in 0..k {
                let theta = winding * std::f64::consts::TAU * (seg as f64 + 0.5) / k as f64 + phase;
                if p != q {
                    v[seg * m + p] += amplitude * theta.cos();
                    v[seg * m + q] += amplitude * theta.sin();
                } else {
                    v[seg * m + p] += amplitude * theta.cos();
                }
            }
            for vi in v.iter_mut() {
                *vi += 0.15 * rng.random_range(-1.0..1.0);
            }
        }

        // Penalty continuation: coarse shaping at increasing stiffness.
        let penalties: [f64; 2] = [1e2, 1e4];
        for (level, &penalty) in penalties.iter().enumerate() {
            let scale = 1.0 / (penalty / penalties[0]).sqrt();
            let objective = |vv: &[f64]| self.penalized_energy(xs, ys, vv, config, penalty);
            let mut f_cur = objective(&v);
            let mut step = vec![0.25 * scale; dim];
            // Coordinate descent with parabolic steps.
            for _ in 0..config.sweeps {
                for c in 0..dim {
                    let h = step[c];
                    let mut plus = v.clone();
                    plus[c] += h;
                    let f_plus = objective(&plus);
                    let mut minus = v.clone();
                    minus[c] -= h;
                    let f_minus = objective(&minus);
                    // Parabolic interpolation through the three samples.
                    let denom = f_plus - 2.0 * f_cur + f_minus;
                    let mut cand = v.clone();
                    if denom > 1e-300 {
                        let delta = 0.5 * h * (f_minus - f_plus) / denom;
                        cand[c] += delta.clamp(-4.0 * h, 4.0 * h);
                    } else if f_plus < f_minus {
                        cand[c] += h;
                    } else {
                        cand[c] -= h;
                    }
                    let f_cand = objective(&cand);
                    let best3 = f_cand.min(f_plus).min(f_minus);
                    if best3 < f_cur {
                        if f_cand <= f_plus && f_cand <= f_minus {
                            v = cand;
                        } else if f_plus <= f_minus {
                            v = plus;
                        } else {
                            v = minus;
                        }
                        f_cur = best3;
                        step[c] *= 1.3;
                    } else {
                        step[c] *= 0.5;
                    }
                    step[c] = step[c].clamp(1e-7, 1.0);
                }
            }
            let spread = 0.08 * scale / (1.0 + level as f64);
            nelder_mead(&objective, &mut v, spread, config.polish_iters);
        }

        // Shooting correction: least-norm control updates that drive the
        // endpoint onto the target. Quadratic convergence cleans up the
        // feasibility residual the penalty phase leaves behind.
        self.newton_correct(xs, ys, &mut v, config);

        let endpoint = self.integrate(xs, &v, k, config.steps_per_segment);
        let gap = self.gauge_diff(&endpoint, ys);
        let length = (0..k)
            .map(|seg| {
                let u = &v[seg * m..(seg + 1) * m];
                u.iter().map(|x| x * x).sum::<f64>().sqrt() / k as f64
            })
            .sum();
        (length, gap, v)
    }

    fn newton_correct(&self, xs: &[f64], ys: &[f64], v: &mut Vec<f64>, config: &OptimizerConfig) {
        let n = xs.len();
        let k = config.segments;
        let dim = v.len();
        let fd_step = 1e-6;
        for _ in 0..config.newton_iters {
            let endpoint = self.integrate(xs, v, k, config.steps_per_segment);
            let gap = self.gauge_diff(&endpoint, ys);
            if gap <= 0.05 * config.gap_tol {
                break;
            }
            // Forward-difference endpoint Jacobian, n x dim.
            let mut jac = vec![vec![0.0; dim]; n];
            for c in 0..dim {
                let mut pert = v.clone();
                pert[c] += fd_step;
                let shifted = self.integrate(xs, &pert, k, config.steps_per_segment);
                for i in 0..n {
                    jac[i][c] = (shifted[i] - endpoint[i]) / fd_step;
                }
            }
            // Least-norm step: dv = J^T (J J^T)^{-1} (ys - endpoint).
            let mut jjt = vec![vec![0.0; n]; n];
            for a in 0..n {
                for b in 0..n {
                    jjt[a][b] = jac[a].iter().zip(&jac[b]).map(|(p, q)| p * q).sum();
                }
                jjt[a][a] += 1e-12;
            }
            let mut rhs: Vec<f64> = (0..n).map(|i| ys[i] - endpoint[i]).collect();
            solve_dense(&mut jjt, &mut rhs);
            let mut delta = vec![0.0; dim];
            for c in 0..dim {
                for i in 0..n {
                    delta[c] += jac[i][c] * rhs[i];
                }
            }
            // Damped update: accept the longest fraction that improves.
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..4 {
                let cand: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
                let cand_end = self.integrate(xs, &cand, k, config.steps_per_segment);
                if self.gauge_diff(&cand_end, ys) < gap {
                    *v = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }

    fn penalized_energy(
        &self,
        xs: &[f64],
        ys: &[f64],
        v: &[f64],
        config: &OptimizerConfig,
        penalty: f64,
    ) -> f64 {
        let k = config.segments;
        let endpoint = self.integrate(xs, v, k, config.steps_per_segment);
        let miss: f64 = endpoint.iter().zip(ys).map(|(a, b)| (a - b) * (a - b)).sum();
        let energy: f64 = v.iter().map(|x| x * x).sum::<f64>() / k as f64;
        energy + penalty * miss
    }

    fn gauge_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        let delta: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.spec.dilation().gauge(&delta)
    }

    /// Least-squares fit of constant controls to the displacement:
    /// minimizes `|sum_j u_j X_j(x) - (y - x)|^2` in `u`.
    fn straight_shot(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = x.len();
        let m = self.fields.len();
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..n).map(|i| self.fields[j][i].eval(x)).collect())
            .collect();
        let rhs: Vec<f64> = (0..n).map(|i| y[i] - x[i]).collect();
        let mut ata = vec![vec![0.0; m]; m];
        let mut atb = vec![0.0; m];
        for a in 0..m {
            for b in 0..m {
                ata[a][b] = cols[a].iter().zip(&cols[b]).map(|(p, q)| p * q).sum();
            }
            ata[a][a] += 1e-9;
            atb[a] = cols[a].iter().zip(&rhs).map(|(p, q)| p * q).sum();
        }
        solve_dense(&mut ata, &mut atb);
        atb
    }

    /// True iff the estimator puts `y` inside the ball `B(x, r)`.
    ///
    /// Restarts run in the same bidirectional order as `estimate` and
    /// stop as soon as one converged path beats `r`; the decision
    /// agrees with running the full budget.
    pub fn member(&self, x: &[f64], y: &[f64], r: f64, config: &OptimizerConfig) -> bool {
        if x == y {
            return r > 0.0;
        }
        let dilation = self.spec.dilation();
        let scale = dilation.gauge(x).max(dilation.gauge(y)).max(f64::MIN_POSITIVE);
        let xs = dilation.apply(1.0 / scale, x);
        let ys = dilation.apply(1.0 / scale, y);
        let target = r / scale;
        let m = self.fields.len();
        let k = config.segments;
        let mut best = f64::INFINITY;
        for restart in 0..config.restarts {
            let ladder = (restart / 2) as u64;
            let (length, gap) = if restart % 2 == 1 {
                let (length, _, w) = self.optimize_restart(&ys, &xs, config, ladder);
                let mut v = vec![0.0; w.len()];
                for seg in 0..k {
                    for j in 0..m {
                        v[seg * m + j] = -w[(k - 1 - seg) * m + j];
                    }
                }
                let endpoint = self.integrate(&xs, &v, k, config.steps_per_segment);
                (length, self.gauge_diff(&endpoint, &ys))
            } else {
                let (length, gap, _) = self.optimize_restart(&xs, &ys, config, ladder);
                (length, gap)
            };
            if gap <= config.gap_tol {
                best = best.min(length);
                if best < target {
                    return true;
                }
            }
        }
        best < target
    }
}

/// Dense solve by Gaussian elimination with partial pivoting; `b`
/// becomes the solution.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..n {
            let f = a[row][col] / p;
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let p = a[col][col];
        if p.abs() < 1e-300 {
            b[col] = 0.0;
            continue;
        }
        let mut acc = b[col];
        for c in col + 1..n {
            acc -= a[col][c] * b[c];
        }
        b[col] = acc / p;
    }
}

/// Minimal Nelder-Mead polish around `v`, in place.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, v: &mut Vec<f64>, spread: f64, iters: usize) {
    if iters == 0 {
        return;
    }
    let dim = v.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(dim + 1);
    simplex.push((f(v), v.clone()));
    for i in 0..dim {
        let mut p = v.clone();
        p[i] += spread;
        simplex.push((f(&p), p));
    }
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let worst = simplex.len() - 1;
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..worst].iter().map(|(_, p)| p[i]).sum::<f64>() / worst as f64)
            .collect();
        let reflect: Vec<f64> = (0..dim)
            .map(|i| centroid[i] + (centroid[i] - simplex[worst].1[i]))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].0 {
            let expand: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - simplex[worst].1[i]))
                .collect();
            let fe = f(&expand);
            simplex[worst] = if fe < fr { (fe, expand) } else { (fr, reflect) };
        } else if fr < simplex[worst - 1].0 {
            simplex[worst] = (fr, reflect);
        } else {
            let contract: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 0.5 * (simplex[worst].1[i] - centroid[i]))
                .collect();
            let fc = f(&contract);
            if fc < simplex[worst].0 {
                simplex[worst] = (fc, contract);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].1.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for i in 0..dim {
                        entry.1[i] = best[i] + 0.5 * (entry.1[i] - best[i]);
                    }
                    entry.0 = f(&entry.1);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    *v = simplex[0].1.clone();
}

/// Convenience wrapper matching the one-shot call shape.
pub fn estimate_distance(
    spec: &OperatorSpec,
    x: &[f64],
    y: &[f64],
    config: &OptimizerConfig,
) -> DistanceEstimate {
    DistanceEstimator::new(spec).estimate(x, y, config)
}

/// Monte Carlo ball volume with a 95% binomial confidence half-width.
#[derive(Clone, Debug, Serialize)]
pub struct BallVolume {
    pub volume: f64,
    pub half_width: f64,
    pub samples: usize,
    pub hits: usize,
    pub box_volume: f64,
    pub boundary_hits: usize,
}

/// Analytic reachable-set half-widths: coordinate `i` moves at speed
/// at most `C_i * gauge^{sigma_i - 1}` under subunit controls.
pub fn analytic_half_widths(estimator: &DistanceEstimator, x: &[f64], r: f64) -> Vec<f64> {
    let spec = estimator.spec();
    let n = spec.dim();
    let sigma = spec.dilation().sigma();
    let g = spec.dilation().gauge(x);
    let reach_gauge = g + 2.0 * r;
    (0..n)
        .map(|i| {
            let ci = estimator.component_bounds[i].max(1e-9);
            1.25 * r * ci * reach_gauge.powi(sigma[i] as i32 - 1) + 1e-12
        })
        .collect()
}

/// Tighten the analytic box from a skeleton of guaranteed ball
/// members: generator flows, their two-leg compositions, and circular
/// arcs in each control pair, all of total duration below `r` and
/// hence inside the ball with no optimizer involved. The coordinate
/// extents of the skeleton, inflated by `margin` and capped by the
/// analytic bound, give the sampling box; the boundary-hit guard in
/// the samplers catches an underestimate and the callers escalate
/// `margin` when it trips.
pub fn probed_half_widths(
    estimator: &DistanceEstimator,
    x: &[f64],
    r: f64,
    _config: &OptimizerConfig,
    margin: f64,
) -> Vec<f64> {
    let n = estimator.spec().dim();
    let m = estimator.spec().num_fields();
    let ceiling = analytic_half_widths(estimator, x, r);
    let mut extent = vec![0.0_f64; n];
    let steps = 48usize;
    let mut track = |trace: &[Vec<f64>], extent: &mut Vec<f64>| {
        for state in trace {
            for i in 0..n {
                extent[i] = extent[i].max((state[i] - x[i]).abs());
            }
        }
    };
    let duration = 0.98 * r;
    // Single flows.
    for j in 0..m {
        for sign in [1.0, -1.0] {
            let mut controls = vec![0.0; m];
            controls[j] = sign;
            let path = ControlPath {
                start: x.to_vec(),
                segments: vec![PathSegment { duration, controls }],
            };
            track(&estimator.trace_path(&path, steps), &mut extent);
        }
    }
    // Two-leg compositions.
    for j in 0..m {
        for k in 0..m {
            if j == k {
                continue;
            }
            for (sj, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                for split in [0.3, 0.5, 0.7] {
                    let mut u1 = vec![0.0; m];
                    u1[j] = sj;
                    let mut u2 = vec![0.0; m];
                    u2[k] = sk;
                    let path = ControlPath {
                        start: x.to_vec(),
                        segments: vec![
                            PathSegment { duration: duration * split, controls: u1 },
                            PathSegment { duration: duration * (1.0 - split), controls: u2 },
                        ],
                    };
                    track(&estimator.trace_path(&path, steps / 2), &mut extent);
                }
            }
        }
    }
    // Circular arcs in each control pair (both orientations), chopped
    // into short constant segments; these reach the extremes driven by
    // the commutators.
    for p in 0..m {
        for q in p + 1..m {
            for orientation in [1.0, -1.0] {
                let pieces = 16usize;
                let segments: Vec<PathSegment> = (0..pieces)
                    .map(|s| {
                        let theta = orientation
                            * std::f64::consts::TAU
                            * (s as f64 + 0.5)
                            / pieces as f64;
                        let mut controls = vec![0.0; m];
                        controls[p] = theta.cos();
                        controls[q] = theta.sin();
                        PathSegment { duration: duration / pieces as f64, controls }
                    })
                    .collect();
                let path = ControlPath { start: x.to_vec(), segments };
                track(&estimator.trace_path(&path, 4), &mut extent);
            }
        }
    }
    (0..n)
        .map(|i| (extent[i] * margin + ceiling[i] * 0.02).min(ceiling[i]))
        .collect()
}

/// Escalating box margins tried before the boundary guard gives up.
pub const BOX_MARGINS: [f64; 3] = [1.4, 1.9, 2.6];

/// Monte Carlo measure of `{y : d_hat(x,y) < r}` over a weighted
/// bounding box around `x`, probed per axis from the estimator. When
/// the boundary guard trips the margin escalates before giving up.
pub fn ball_volume_mc(
    estimator: &DistanceEstimator,
    x: &[f64],
    r: f64,
    samples: usize,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<BallVolume, MpError> {
    if samples < 1000 {
        return Err(MpError::invariant("ball_volume_mc", "need at least 1000 samples"));
    }
    let mut last_err = None;
    for margin in BOX_MARGINS {
        let half_widths = probed_half_widths(estimator, x, r, config, margin);
        match mc_over_box(estimator, x, r, samples, config, seed, &half_widths) {
            Ok(v) => return Ok(v),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

fn mc_over_box(
    estimator: &DistanceEstimator,
    x: &[f64],
    r: f64,
    samples: usize,
    config: &OptimizerConfig,
    seed: u64,
    half_widths: &[f64],
) -> Result<BallVolume, MpError> {
    let n = estimator.spec().dim();
    let box_volume: f64 = half_widths.iter().map(|w| 2.0 * w).product();
    let chunk = 256usize;
    let jobs: Vec<(u64, usize)> = (0..samples.div_ceil(chunk))
        .map(|c| (seed.wrapping_add(c as u64), chunk.min(samples - c * chunk)))
        .collect();
    let x_local = x.to_vec();
    let hw = half_widths.to_vec();
    let results = map_maybe_parallel(jobs, move |(chunk_seed, count)| {
        let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed.wrapping_mul(0x2545_f491_4f6c_dd1d));
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
            if estimator.member(&x_local, &y, r, config) {
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
    let half_width = 1.96 * box_volume * (p * (1.0 - p) / samples as f64).sqrt();
    Ok(BallVolume { volume: box_volume * p, half_width, samples, hits, box_volume, boundary_hits })
}

/// Empirical two-sided constant between `Lambda` and measured ball
/// volumes over a calibration sample set.
#[derive(Clone, Debug, Serialize)]
pub struct C1Estimate {
    pub c1: f64,
    /// Worst-case c1 when each volume is shifted by its CI half-width.
    pub c1_upper: f64,
    pub samples: Vec<C1Sample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct C1Sample {
    pub x: Vec<f64>,
    pub r: f64,
    pub lambda: f64,
    pub volume: f64,
    pub half_width: f64,
    pub ratio: f64,
}

/// Default calibration points: the origin, axis points probing the
/// degenerate and non-degenerate regimes, then seeded draws.
pub fn default_calibration_points(
    spec: &OperatorSpec,
    count: usize,
    seed: u64,
) -> Vec<(Vec<f64>, f64)> {
    let n = spec.dim();
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(count);
    pts.push((vec![0.0; n], 1.0));
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    pts.push((e0, 0.7));
    let mut e1 = vec![0.0; n];
    e1[1] = 1.0;
    pts.push((e1, 1.3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while pts.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let r: f64 = rng.random_range(0.4..1.6);
        pts.push((x, r));
    }
    pts
}

pub fn calibrate_c1(
    estimator: &DistanceEstimator,
    table: &VolumeTable,
    sample_set: &[(Vec<f64>, f64)],
    mc_samples: usize,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<C1Estimate, MpError> {
    let mut c1: f64 = 1.0;
    let mut c1_upper: f64 = 1.0;
    let mut samples = Vec::with_capacity(sample_set.len());
    for (idx, (x, r)) in sample_set.iter().enumerate() {
        let vol = ball_volume_mc(
            estimator,
            x,
            *r,
            mc_samples,
            config,
            seed.wrapping_add(idx as u64 * 7919),
        )?;
        if vol.volume <= 0.0 {
            return Err(MpError::Numerical(format!(
                "measured zero ball volume at r = {r}; estimator budget too small"
            )));
        }
        let lambda = table.lambda(x, *r);
        let ratio = (lambda / vol.volume).max(vol.volume / lambda);
        c1 = c1.max(ratio);
        let lo = (vol.volume - vol.half_width).max(f64::MIN_POSITIVE);
        let hi = vol.volume + vol.half_width;
        c1_upper = c1_upper.max(lambda / lo).max(hi / lambda);
        samples.push(C1Sample {
            x: x.clone(),
            r: *r,
            lambda,
            volume: vol.volume,
            half_width: vol.half_width,
            ratio,
        });
    }
    Ok(C1Estimate { c1, c1_upper, samples })
}
