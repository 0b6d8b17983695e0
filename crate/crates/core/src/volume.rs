//! The commutator-determinant volume polynomial and its calculus.
//!
//! For a validated operator the table below realizes
//! `Lambda(x,r) = sum_{j=N}^{Q} F_j(x) r^j` with
//! `F_j(x) = sum_{l(B)=j} |det(X_{I_1}(x) ... X_{I_N}(x))|`,
//! the profile `E(x,r) = Lambda(x,r)/r^2` and its inverse `H(x,.)`.
//! Tuples are enumerated over bracket words of length up to the
//! nilpotency step; determinants are computed symbolically, verified
//! homogeneous, and pruned when identically zero.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::MpError;
use crate::operator::{iterate_commutators, CommutatorWord, OperatorSpec};
use crate::poly::{rational_to_f64, Coeff, Polynomial};

/// Cap on the number of candidate word tuples during table building.
const TUPLE_CAP: usize = 2_000_000;

/// Relative tolerance of the profile inversion.
const H_REL_TOL: f64 = 1e-10;
const H_MAX_ITERS: usize = 200;

/// One surviving tuple: the words, their total length and the
/// determinant polynomial.
#[derive(Clone, Debug)]
pub struct VolumeEntry {
    pub words: Vec<CommutatorWord>,
    pub degree: u32,
    pub det_poly: Polynomial,
    compiled: CompiledPoly,
}

/// Float-compiled polynomial for the evaluation hot path.
#[derive(Clone, Debug)]
struct CompiledPoly {
    terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledPoly {
    fn compile(p: &Polynomial) -> Self {
        CompiledPoly {
            terms: p
                .terms()
                .map(|(e, c)| (e.to_vec(), rational_to_f64(c)))
                .collect(),
        }
    }

    fn eval_abs(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = *c;
            for (xi, &ei) in x.iter().zip(e) {
                m *= xi.powi(ei as i32);
            }
            acc += m;
        }
        acc.abs()
    }
}

/// The volume polynomial table for one operator.
#[derive(Clone, Debug)]
pub struct VolumeTable {
    spec: OperatorSpec,
    entries: Vec<VolumeEntry>,
    omega_q_exact: Coeff,
    omega_q: f64,
}

impl VolumeTable {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn entries(&self) -> &[VolumeEntry] {
        &self.entries
    }

    /// `F_Q(0)`, strictly positive for valid specs.
    pub fn omega_q(&self) -> f64 {
        self.omega_q
    }

    pub fn omega_q_exact(&self) -> &Coeff {
        &self.omega_q_exact
    }

    pub fn q(&self) -> u32 {
        self.spec.q()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }
}

/// Enumerate the table for `spec`.
///
/// Duplicate words realizing the same field (up to sign) are all kept;
/// the absolute values make the double counting harmless, at the price
/// of a preset-specific multiplicity inside each `F_j`. Every cross
/// check in this crate uses the same table, so the multiplicity cancels
/// wherever a ratio is formed.
pub fn build_volume_table(spec: &OperatorSpec) -> Result<VolumeTable, MpError> {
    let n = spec.dim();
    let q = spec.q();
    let step = spec.dilation().step() as usize;
    let sigma = spec.dilation().sigma().to_vec();

    let words: Vec<(CommutatorWord, crate::operator::PolyVectorField)> =
        iterate_commutators(spec, step)?
            .into_iter()
            .filter(|(_, f)| !f.is_zero())
            .collect();

    let candidates = words.len().checked_pow(n as u32).ok_or_else(|| {
        MpError::BudgetExceeded("word tuple count overflows".into())
    })?;
    if candidates > TUPLE_CAP {
        return Err(MpError::BudgetExceeded(format!(
            "{candidates} word tuples exceed cap {TUPLE_CAP}"
        )));
    }

    let mut entries = Vec::new();
    let mut indices = vec![0usize; n];
    loop {
        let tuple: Vec<&(CommutatorWord, crate::operator::PolyVectorField)> =
            indices.iter().map(|&i| &words[i]).collect();
        let degree: u32 = tuple.iter().map(|(w, _)| w.len() as u32).sum();
        let columns: Vec<&crate::operator::PolyVectorField> =
            tuple.iter().map(|(_, f)| f).collect();
        let det = determinant(&columns);
        if degree > q {
            // Nilpotency bookkeeping forces these to vanish; a nonzero
            // determinant here means the spec is not actually
            // homogeneous, so fail loudly.
            if !det.is_zero() {
                return Err(MpError::invariant(
                    "volume_table",
                    format!("tuple of degree {degree} > Q = {q} has nonzero determinant"),
                ));
            }
        } else if !det.is_zero() {
            match det.uniform_weighted_degree(&sigma) {
                Some(d) if d == u64::from(q - degree) => {}
                other => {
                    return Err(MpError::invariant(
                        "volume_table",
                        format!(
                            "determinant of degree-{degree} tuple has weighted degree {other:?}, expected {}",
                            q - degree
                        ),
                    ));
                }
            }
            let compiled = CompiledPoly::compile(&det);
            entries.push(VolumeEntry {
                words: tuple.iter().map(|(w, _)| w.clone()).collect(),
                degree,
                det_poly: det,
                compiled,
            });
        }
        // Advance the mixed-radix counter.
        let mut slot = 0;
        loop {
            if slot == n {
                break;
            }
            indices[slot] += 1;
            if indices[slot] < words.len() {
                break;
            }
            indices[slot] = 0;
            slot += 1;
        }
        if slot == n {
            break;
        }
    }

    let zero = vec![Coeff::zero(); n];
    let mut omega_q_exact = Coeff::zero();
    for e in entries.iter().filter(|e| e.degree == q) {
        omega_q_exact += e.det_poly.eval_rational(&zero).abs();
    }
    if omega_q_exact.is_zero() {
        return Err(MpError::invariant(
            "volume_table",
            "omega_Q = 0: rank condition fails at the origin",
        ));
    }
    entries.sort_by_key(|e| e.degree);
    let omega_q = rational_to_f64(&omega_q_exact);
    Ok(VolumeTable { spec: spec.clone(), entries, omega_q_exact, omega_q })
}

/// Symbolic determinant of column fields, by Laplace expansion.
fn determinant(columns: &[&crate::operator::PolyVectorField]) -> Polynomial {
    let n = columns.len();
    let dim = columns[0].dim();
    let mat: Vec<Vec<Polynomial>> = (0..n)
        .map(|row| columns.iter().map(|c| c.component(row).clone()).collect())
        .collect();
    det_rec(&mat, &(0..n).collect::<Vec<_>>(), 0, dim)
}

fn det_rec(mat: &[Vec<Polynomial>], cols: &[usize], row: usize, dim: usize) -> Polynomial {
    if cols.is_empty() {
        return Polynomial::one(dim);
    }
    let mut acc = Polynomial::zero(dim);
    for (k, &c) in cols.iter().enumerate() {
        let entry = &mat[row][c];
        if entry.is_zero() {
            continue;
        }
        let rest: Vec<usize> = cols.iter().copied().filter(|&cc| cc != c).collect();
        let minor = det_rec(mat, &rest, row + 1, dim);
        let signed = if k % 2 == 0 { entry.mul(&minor) } else { entry.mul(&minor).neg() };
        acc = acc.add(&signed);
    }
    acc
}

impl VolumeTable {
    /// `Lambda(x,r) = sum_j F_j(x) r^j`; always `>= omega_Q r^Q`.
    pub fn lambda(&self, x: &[f64], r: f64) -> f64 {
        debug_assert!(r > 0.0, "radius must be positive");
        let mut acc = 0.0;
        for e in &self.entries {
            acc += e.compiled.eval_abs(x) * r.powi(e.degree as i32);
        }
        acc
    }

    /// Per-degree values `F_j(x)` for `j = N..=Q`.
    pub fn f_values(&self, x: &[f64]) -> Vec<(u32, f64)> {
        let n = self.dim() as u32;
        let q = self.q();
        let mut out: Vec<(u32, f64)> = (n..=q).map(|j| (j, 0.0)).collect();
        for e in &self.entries {
            let slot = (e.degree - n) as usize;
            out[slot].1 += e.compiled.eval_abs(x);
        }
        out
    }

    /// `E(x,r) = Lambda(x,r)/r^2`, strictly increasing in `r`.
    pub fn e_profile(&self, x: &[f64], r: f64) -> f64 {
        self.lambda(x, r) / (r * r)
    }

    /// Inverse of `E(x,.)`: the radius `H` with `E(x,H) = v`.
    ///
    /// Bracketed bisection from a geometric initial bracket. `E` is
    /// strictly increasing so the root is unique; failing to converge
    /// indicates a corrupted table and panics.
    pub fn h_profile(&self, x: &[f64], v: f64) -> f64 {
        assert!(v > 0.0, "profile value must be positive");
        let n = self.dim();
        let guess = (v / self.e_profile(x, 1.0)).powf(1.0 / (n as f64 - 2.0));
        let mut lo = guess;
        let mut hi = guess;
        let mut iters = 0usize;
        while self.e_profile(x, lo) > v {
            lo *= 0.5;
            iters += 1;
            assert!(iters < H_MAX_ITERS, "profile inversion bracket failed (lo)");
        }
        while self.e_profile(x, hi) < v {
            hi *= 2.0;
            iters += 1;
            assert!(iters < H_MAX_ITERS, "profile inversion bracket failed (hi)");
        }
        for _ in 0..H_MAX_ITERS {
            let mid = 0.5 * (lo + hi);
            if self.e_profile(x, mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= H_REL_TOL * hi {
                return 0.5 * (lo + hi);
            }
        }
        panic!("profile inversion did not converge to relative tolerance {H_REL_TOL}");
    }
}

/// Outcome of the randomized determinant-homogeneity scan.
#[derive(Clone, Debug, Serialize)]
pub struct HomogeneityReport {
    pub trials: usize,
    pub violations: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

/// Randomized check that `|det_B(dilate(x))| = l^{Q-l(B)} |det_B(x)|`
/// and `Lambda(dilate(x), l*r) = l^Q Lambda(x,r)`.
pub fn check_lambda_homogeneity(table: &VolumeTable, trials: usize, seed: u64) -> HomogeneityReport {
    let tolerance = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dilation = table.spec.dilation().clone();
    let q = table.q();
    let mut violations = 0usize;
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..table.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambda: f64 = rng.random_range(0.25..4.0);
        let xl = dilation.apply(lambda, &x);
        // Entry-level homogeneity.
        if let Some(e) = pick(&table.entries, &mut rng) {
            let lhs = e.compiled.eval_abs(&xl);
            let rhs = lambda.powi((q - e.degree) as i32) * e.compiled.eval_abs(&x);
            track(lhs, rhs, tolerance, &mut violations, &mut max_rel_err);
        }
        // Aggregate homogeneity.
        let r: f64 = rng.random_range(0.1..3.0);
        let lhs = table.lambda(&xl, lambda * r);
        let rhs = lambda.powi(q as i32) * table.lambda(&x, r);
        track(lhs, rhs, tolerance, &mut violations, &mut max_rel_err);
    }
    HomogeneityReport { trials, violations, max_rel_err, tolerance }
}

fn pick<'a, T>(items: &'a [T], rng: &mut ChaCha8Rng) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.random_range(0..items.len())])
    }
}

fn track(lhs: f64, rhs: f64, tol: f64, violations: &mut usize, max_rel: &mut f64) {
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    let rel = (lhs - rhs).abs() / scale;
    if rel > *max_rel {
        *max_rel = rel;
    }
    if rel > tol {
        *violations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{grushin3, heisenberg};
    use crate::poly::coeff_int;

    // Hand-derived oracle values, from enumerating the word tuples of
    // the two presets and computing each determinant directly:
    //   heisenberg: F_3 = 0, F_4 = 12 (twelve unit determinants)
    //   grushin3:   F_3 = 6|x1|, F_4 = 12
    const OMEGA_Q_ORACLE: f64 = 12.0;

    #[test]
    fn heisenberg_table_matches_hand_enumeration() {
        let table = build_volume_table(&heisenberg().unwrap()).unwrap();
        assert_eq!(table.omega_q_exact(), &coeff_int(12));
        // F_3 vanishes identically: no surviving degree-3 entry.
        assert!(table.entries().iter().all(|e| e.degree == 4));
        let x = [0.7, -1.3, 0.4];
        for r in [0.5_f64, 1.0, 2.0] {
            let expect = OMEGA_Q_ORACLE * r.powi(4);
            assert!((table.lambda(&x, r) - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn heisenberg_unit_determinant_entry() {
        let table = build_volume_table(&heisenberg().unwrap()).unwrap();
        let entry = table
            .entries()
            .iter()
            .find(|e| {
                e.words.len() == 3
                    && e.words[0].indices() == [1]
                    && e.words[1].indices() == [2]
                    && e.words[2].indices() == [1, 2]
            })
            .expect("tuple ((1),(2),(1,2)) must survive");
        assert_eq!(entry.degree, 4);
        assert_eq!(entry.det_poly, Polynomial::one(3));
    }

    #[test]
    fn grushin_table_matches_hand_enumeration() {
        let table = build_volume_table(&grushin3().unwrap()).unwrap();
        assert_eq!(table.omega_q_exact(), &coeff_int(12));
        let f = table.f_values(&[1.0, 0.0, 0.0]);
        assert_eq!(f, vec![(3, 6.0), (4, 12.0)]);
        // Lambda at x1 = 1, r = 1: 6 + 12.
        assert!((table.lambda(&[1.0, 0.0, 0.0], 1.0) - 18.0).abs() < 1e-12);
        // The degree-3 entries are |x1| determinants.
        let deg3 = table
            .entries()
            .iter()
            .find(|e| e.degree == 3)
            .expect("degree-3 entries survive");
        assert_eq!(deg3.det_poly.uniform_weighted_degree(&[1, 1, 2]), Some(1));
    }

    #[test]
    fn lambda_at_origin_is_omega_q_r_q() {
        for spec in [heisenberg().unwrap(), grushin3().unwrap()] {
            let table = build_volume_table(&spec).unwrap();
            for r in [0.3_f64, 1.0, 5.0] {
                let expect = table.omega_q() * r.powi(table.q() as i32);
                let got = table.lambda(&[0.0, 0.0, 0.0], r);
                assert!((got - expect).abs() <= 1e-12 * expect);
            }
        }
    }

    #[test]
    fn lambda_lower_bound_omega_q() {
        let table = build_volume_table(&grushin3().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r: f64 = rng.random_range(0.05..4.0);
            assert!(table.lambda(&x, r) >= table.omega_q() * r.powi(4) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn profile_inverse_round_trip() {
        let heis = build_volume_table(&heisenberg().unwrap()).unwrap();
        let gru = build_volume_table(&grushin3().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for table in [&heis, &gru] {
            for _ in 0..500 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let v: f64 = rng.random_range(0.01..100.0);
                let h = table.h_profile(&x, v);
                let back = table.e_profile(&x, h);
                assert!(
                    (back - v).abs() <= 1e-8 * v,
                    "E(x,H(x,v)) = {back} vs v = {v}"
                );
            }
        }
    }

    #[test]
    fn heisenberg_profile_closed_forms() {
        let table = build_volume_table(&heisenberg().unwrap()).unwrap();
        let x = [0.3, 0.9, -2.0];
        let w = table.omega_q();
        for r in [0.2_f64, 1.0, 3.0] {
            assert!((table.e_profile(&x, r) - w * r * r).abs() < 1e-10 * w * r * r);
        }
        for v in [0.5_f64, 7.0] {
            let expect = (v / w).sqrt();
            assert!((table.h_profile(&x, v) - expect).abs() < 1e-8 * expect);
        }
    }

    #[test]
    fn grushin_h_closed_form() {
        // 12 H^2 + 6|x1| H = v  =>  H = (-6|x1| + sqrt(36 x1^2 + 48 v)) / 24.
        let table = build_volume_table(&grushin3().unwrap()).unwrap();
        let x = [1.5, 0.0, 0.0];
        for v in [0.1_f64, 2.0, 40.0] {
            let a = 6.0 * 1.5;
            let expect = (-a + (a * a + 48.0 * v).sqrt()) / 24.0;
            let got = table.h_profile(&x, v);
            assert!((got - expect).abs() < 1e-8 * expect, "{got} vs {expect}");
        }
    }

    #[test]
    fn homogeneity_scan_clean() {
        for spec in [heisenberg().unwrap(), grushin3().unwrap()] {
            let table = build_volume_table(&spec).unwrap();
            let report = check_lambda_homogeneity(&table, 1000, 42);
            assert_eq!(report.violations, 0, "max rel err {}", report.max_rel_err);
        }
    }

    #[test]
    fn doubling_inequalities_sampled() {
        let table = build_volume_table(&grushin3().unwrap()).unwrap();
        let n = 3.0_f64;
        let q = 4.0_f64;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.5..2.5)).collect();
            let r: f64 = rng.random_range(0.05..1.5);
            let big: f64 = r * rng.random_range(1.01..8.0);
            let lam_r = table.lambda(&x, r);
            let lam_big = table.lambda(&x, big);
            let ratio = big / r;
            let slack = 1.0 + 1e-12;
            assert!(ratio.powf(n) * lam_r <= lam_big * slack);
            assert!(lam_big <= ratio.powf(q) * lam_r * slack);
            let e_r = table.e_profile(&x, r);
            let e_big = table.e_profile(&x, big);
            assert!(ratio.powf(n - 2.0) * e_r <= e_big * slack);
            assert!(e_big <= ratio.powf(q - 2.0) * e_r * slack);
        }
    }
}
