//! Anisotropic dilations, polynomial vector fields and the operators
//! they generate: Lie brackets, homogeneity bookkeeping, rank checks
//! and the built-in presets.

use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::MpError;
use crate::poly::{coeff_int, coeff_ratio, parse_polynomial, Coeff, Polynomial};

/// Seed for the deterministic sample points used by the semi-decision
/// rank checks below.
const SAMPLE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Word budget for commutator enumeration.
pub const DEFAULT_WORD_CAP: usize = 10_000;

/// The anisotropic dilation family `(x_1,...,x_N) -> (l^{s_1} x_1, ..., l^{s_N} x_N)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dilation {
    sigma: Vec<u32>,
}

impl Dilation {
    /// Exponents must be non-decreasing, start at 1, with at least 3 of them.
    pub fn new(sigma: Vec<u32>) -> Result<Self, MpError> {
        if sigma.len() < 3 {
            return Err(MpError::invariant("dilation", "need N >= 3 exponents"));
        }
        if sigma[0] != 1 {
            return Err(MpError::invariant("dilation", "sigma must start at 1"));
        }
        if sigma.windows(2).any(|w| w[0] > w[1]) {
            return Err(MpError::invariant("dilation", "sigma must be non-decreasing"));
        }
        Ok(Dilation { sigma })
    }

    pub fn sigma(&self) -> &[u32] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// Homogeneous dimension `Q = sum sigma_i`.
    pub fn q(&self) -> u32 {
        self.sigma.iter().sum()
    }

    /// Nilpotency step of the generated algebra, `sigma_N`.
    pub fn step(&self) -> u32 {
        *self.sigma.last().unwrap()
    }

    pub fn apply(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.sigma)
            .map(|(xi, &s)| lambda.powi(s as i32) * xi)
            .collect()
    }

    pub fn apply_rational(&self, lambda: &Coeff, x: &[Coeff]) -> Vec<Coeff> {
        x.iter()
            .zip(&self.sigma)
            .map(|(xi, &s)| {
                let mut f = xi.clone();
                for _ in 0..s {
                    f *= lambda;
                }
                f
            })
            .collect()
    }

    /// The weighted gauge `max_i |x_i|^{1/sigma_i}`.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.sigma)
            .map(|(xi, &s)| xi.abs().powf(1.0 / f64::from(s)))
            .fold(0.0, f64::max)
    }
}

/// A vector field with polynomial components; slot `i` holds the
/// coefficient of the partial derivative along `x_{i+1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyVectorField {
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self, MpError> {
        let dim = components.len();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(MpError::DimensionMismatch(
                "vector field components must live in dimension N".into(),
            ));
        }
        Ok(PolyVectorField { components })
    }

    pub fn zero(dim: usize) -> Self {
        PolyVectorField { components: vec![Polynomial::zero(dim); dim] }
    }

    /// The coordinate field along axis `i` (zero-based).
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut components = vec![Polynomial::zero(dim); dim];
        components[i] = Polynomial::one(dim);
        PolyVectorField { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval_f64(x)).collect()
    }

    pub fn eval_rational(&self, x: &[Coeff]) -> Vec<Coeff> {
        self.components.iter().map(|c| c.eval_rational(x)).collect()
    }
}

impl fmt::Display for PolyVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| format!("({}) d{}", c, i + 1))
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Result of a homogeneity check under a dilation family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Homogeneity {
    /// Homogeneous of the given degree.
    Degree(i64),
    /// The zero field (homogeneous of every degree).
    Zero,
    NotHomogeneous,
}

/// Lie bracket `[X,Y]_i = sum_k (X_k d_k Y_i - Y_k d_k X_i)`, exact.
pub fn lie_bracket(x: &PolyVectorField, y: &PolyVectorField) -> Result<PolyVectorField, MpError> {
    let dim = x.dim();
    if y.dim() != dim {
        return Err(MpError::DimensionMismatch(format!(
            "bracket of fields over dimensions {} and {}",
            dim,
            y.dim()
        )));
    }
    let mut components = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut acc = Polynomial::zero(dim);
        for k in 0..dim {
            let xk = x.component(k);
            let yk = y.component(k);
            if !xk.is_zero() {
                acc = acc.add(&xk.mul(&y.component(i).partial(k)));
            }
            if !yk.is_zero() {
                acc = acc.sub(&yk.mul(&x.component(i).partial(k)));
            }
        }
        components.push(acc);
    }
    PolyVectorField::new(components)
}

/// Degree of `field` under `dilation`: `k` such that every monomial of
/// component `i` has weighted degree `sigma_i - k`.
pub fn homogeneity_degree(field: &PolyVectorField, dilation: &Dilation) -> Homogeneity {
    let sigma = dilation.sigma();
    let mut degree: Option<i64> = None;
    for (i, comp) in field.components().iter().enumerate() {
        if comp.is_zero() {
            continue;
        }
        let Some(d) = comp.uniform_weighted_degree(sigma) else {
            return Homogeneity::NotHomogeneous;
        };
        let k = i64::from(sigma[i]) - d as i64;
        match degree {
            None => degree = Some(k),
            Some(prev) if prev != k => return Homogeneity::NotHomogeneous,
            _ => {}
        }
    }
    match degree {
        Some(k) => Homogeneity::Degree(k),
        None => Homogeneity::Zero,
    }
}

/// A bracket word: indices into the generator list, 1-based, realizing
/// the nested commutator `[X_{i_1}, [ ... [X_{i_{p-1}}, X_{i_p}] ... ]]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CommutatorWord {
    indices: Vec<usize>,
}

impl CommutatorWord {
    pub fn new(indices: Vec<usize>) -> Result<Self, MpError> {
        if indices.is_empty() {
            return Err(MpError::invariant("commutator_word", "word must be non-empty"));
        }
        if indices.iter().any(|&i| i == 0) {
            return Err(MpError::invariant("commutator_word", "indices are 1-based"));
        }
        Ok(CommutatorWord { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for CommutatorWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// A validated homogeneous sum-of-squares operator: `m` generator
/// fields over `R^N`, each homogeneous of degree 1 under the dilation.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    name: String,
    fields: Vec<PolyVectorField>,
    dilation: Dilation,
}

impl OperatorSpec {
    pub fn new(
        name: impl Into<String>,
        dilation: Dilation,
        fields: Vec<PolyVectorField>,
    ) -> Result<Self, MpError> {
        let spec = OperatorSpec { name: name.into(), fields, dilation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dilation.dim()
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[PolyVectorField] {
        &self.fields
    }

    pub fn field(&self, j: usize) -> &PolyVectorField {
        &self.fields[j]
    }

    pub fn dilation(&self) -> &Dilation {
        &self.dilation
    }

    pub fn q(&self) -> u32 {
        self.dilation.q()
    }

    /// Runs every structural invariant; the error names the failed check.
    pub fn validate(&self) -> Result<(), MpError> {
        let n = self.dilation.dim();
        if n < 3 {
            return Err(MpError::invariant("dimension", "N >= 3 required"));
        }
        if self.fields.is_empty() {
            return Err(MpError::invariant("fields", "at least one generator required"));
        }
        for (j, f) in self.fields.iter().enumerate() {
            if f.dim() != n {
                return Err(MpError::DimensionMismatch(format!(
                    "field {} has dimension {}, expected {}",
                    j + 1,
                    f.dim(),
                    n
                )));
            }
            match homogeneity_degree(f, &self.dilation) {
                Homogeneity::Degree(1) => {}
                other => {
                    return Err(MpError::invariant(
                        "homogeneity_degree",
                        format!("field {} must be degree 1, got {:?}", j + 1, other),
                    ));
                }
            }
        }
        self.check_linear_independence()?;
        self.check_hormander_rank()?;
        Ok(())
    }

    /// Linear independence of the generators: the m x N coefficient
    /// matrix must reach rank m at one of 16 deterministic sample
    /// points. A semi-decision, adequate for polynomial fields.
    fn check_linear_independence(&self) -> Result<(), MpError> {
        let m = self.fields.len();
        let n = self.dim();
        if m > n {
            return Err(MpError::invariant(
                "linear_independence",
                format!("{m} fields cannot be independent in dimension {n}"),
            ));
        }
        let mut best = 0usize;
        for x in sample_points_rational(n, 16) {
            let rows: Vec<Vec<Coeff>> = self.fields.iter().map(|f| f.eval_rational(&x)).collect();
            best = best.max(rational_rank(rows));
            if best == m {
                return Ok(());
            }
        }
        Err(MpError::invariant(
            "linear_independence",
            format!("coefficient matrix rank {best} < m = {m} at all sample points"),
        ))
    }

    /// Hoermander rank condition sampled on a fixed 81-point lattice
    /// (origin, axis points, then seeded rational points). Failure at
    /// any sample rejects the spec.
    fn check_hormander_rank(&self) -> Result<(), MpError> {
        let n = self.dim();
        let depth = self.dilation.step() as usize;
        let brackets = iterate_commutators_with_cap(self, depth, DEFAULT_WORD_CAP)?;
        for x in hormander_lattice(n) {
            let rows: Vec<Vec<Coeff>> =
                brackets.iter().map(|(_, f)| f.eval_rational(&x)).collect();
            let rank = rational_rank(rows);
            if rank != n {
                let pt: Vec<String> = x.iter().map(|c| c.to_string()).collect();
                return Err(MpError::invariant(
                    "hormander_rank",
                    format!("rank {rank} < N = {n} at sample point ({})", pt.join(", ")),
                ));
            }
        }
        Ok(())
    }
}

/// Rank of the span of `{X_I(x) : |I| <= depth}`, computed exactly
/// (the floating point coordinates convert losslessly to rationals).
pub fn hormander_rank(spec: &OperatorSpec, x: &[f64], depth: usize) -> Result<usize, MpError> {
    if depth < 1 {
        return Err(MpError::invariant("hormander_rank", "depth >= 1 required"));
    }
    let xq: Vec<Coeff> = x
        .iter()
        .map(|&v| BigRational::from_float(v).ok_or_else(|| {
            MpError::Numerical(format!("non-finite coordinate {v}"))
        }))
        .collect::<Result<_, _>>()?;
    let brackets = iterate_commutators_with_cap(spec, depth, DEFAULT_WORD_CAP)?;
    let rows: Vec<Vec<Coeff>> = brackets.iter().map(|(_, f)| f.eval_rational(&xq)).collect();
    Ok(rational_rank(rows))
}

/// All nested commutators `X_I` with `|I| <= s`, in word order.
///
/// Identically-zero fields are kept; callers prune when they need to.
pub fn iterate_commutators(
    spec: &OperatorSpec,
    s: usize,
) -> Result<Vec<(CommutatorWord, PolyVectorField)>, MpError> {
    iterate_commutators_with_cap(spec, s, DEFAULT_WORD_CAP)
}

pub fn iterate_commutators_with_cap(
    spec: &OperatorSpec,
    s: usize,
    cap: usize,
) -> Result<Vec<(CommutatorWord, PolyVectorField)>, MpError> {
    if s < 1 {
        return Err(MpError::invariant("iterate_commutators", "s >= 1 required"));
    }
    let m = spec.num_fields();
    let mut out: Vec<(CommutatorWord, PolyVectorField)> = Vec::new();
    // Generators.
    for j in 1..=m {
        out.push((CommutatorWord::new(vec![j])?, spec.field(j - 1).clone()));
    }
    let mut prev_level: Vec<usize> = (0..m).collect();
    for _len in 2..=s {
        let mut level = Vec::new();
        for j in 1..=m {
            for &idx in &prev_level {
                if out.len() + level.len() >= cap {
                    return Err(MpError::BudgetExceeded(format!(
                        "commutator words exceed cap {cap}"
                    )));
                }
                let (word, field) = &out[idx];
                let mut indices = Vec::with_capacity(word.len() + 1);
                indices.push(j);
                indices.extend_from_slice(word.indices());
                let bracket = lie_bracket(spec.field(j - 1), field)?;
                level.push((CommutatorWord::new(indices)?, bracket));
            }
        }
        let base = out.len();
        prev_level = (base..base + level.len()).collect();
        out.extend(level);
    }
    Ok(out)
}

/// Exact rank of a rational matrix given as rows.
pub fn rational_rank(mut rows: Vec<Vec<Coeff>>) -> usize {
    let nrows = rows.len();
    if nrows == 0 {
        return 0;
    }
    let ncols = rows[0].len();
    let mut rank = 0usize;
    let mut col = 0usize;
    while rank < nrows && col < ncols {
        let pivot = (rank..nrows).find(|&r| !rows[r][col].is_zero());
        let Some(p) = pivot else {
            col += 1;
            continue;
        };
        rows.swap(rank, p);
        let pivot_val = rows[rank][col].clone();
        for r in rank + 1..nrows {
            if rows[r][col].is_zero() {
                continue;
            }
            let factor = &rows[r][col] / &pivot_val;
            for c in col..ncols {
                let delta = &factor * &rows[rank][c];
                rows[r][c] = &rows[r][c] - delta;
            }
        }
        rank += 1;
        col += 1;
    }
    rank
}

/// Deterministic rational sample points with small coordinates.
fn sample_points_rational(dim: usize, count: usize) -> Vec<Vec<Coeff>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut pts = Vec::with_capacity(count);
    // Always include the all-ones point: generic for polynomial data.
    pts.push(vec![coeff_int(1); dim]);
    while pts.len() < count {
        let p: Vec<Coeff> = (0..dim)
            .map(|_| coeff_ratio(rng.random_range(-6..=6), rng.random_range(1..=3)))
            .collect();
        pts.push(p);
    }
    pts
}

/// The fixed 81-point lattice for the rank check: origin, +/- axis
/// points at two scales, then seeded rational fill.
fn hormander_lattice(dim: usize) -> Vec<Vec<Coeff>> {
    let mut pts = Vec::with_capacity(81);
    pts.push(vec![coeff_int(0); dim]);
    for i in 0..dim {
        for mag in [1i64, 2] {
            for sign in [1i64, -1] {
                let mut p = vec![coeff_int(0); dim];
                p[i] = coeff_int(sign * mag);
                pts.push(p);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED ^ 0xa5a5_a5a5);
    while pts.len() < 81 {
        let p: Vec<Coeff> = (0..dim)
            .map(|_| coeff_ratio(rng.random_range(-8..=8), rng.random_range(1..=4)))
            .collect();
        pts.push(p);
    }
    pts
}

/// Parsed form of the operator config document.
#[derive(Debug, Deserialize)]
struct RawSpec {
    name: String,
    #[serde(rename = "N")]
    n: usize,
    sigma: Vec<u32>,
    fields: Vec<Vec<String>>,
}

/// Parse and validate an operator config document (TOML keys `name`,
/// `N`, `sigma`, `fields`; each field a list of N polynomial strings).
pub fn parse_operator_spec(text: &str) -> Result<OperatorSpec, MpError> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| MpError::Parse(e.to_string()))?;
    if raw.sigma.len() != raw.n {
        return Err(MpError::invariant(
            "dilation",
            format!("sigma has {} entries, N = {}", raw.sigma.len(), raw.n),
        ));
    }
    let dilation = Dilation::new(raw.sigma)?;
    let mut fields = Vec::with_capacity(raw.fields.len());
    for (j, comps) in raw.fields.iter().enumerate() {
        if comps.len() != raw.n {
            return Err(MpError::invariant(
                "fields",
                format!("field {} has {} components, expected {}", j + 1, comps.len(), raw.n),
            ));
        }
        let polys: Vec<Polynomial> = comps
            .iter()
            .map(|s| parse_polynomial(s, raw.n))
            .collect::<Result<_, _>>()?;
        fields.push(PolyVectorField::new(polys)?);
    }
    OperatorSpec::new(raw.name, dilation, fields)
}

/// Look up a built-in preset or parse a config file path.
pub fn preset(name: &str) -> Result<OperatorSpec, MpError> {
    match name {
        "heisenberg" => heisenberg(),
        "grushin3" => grushin3(),
        other => Err(MpError::Unsupported(format!(
            "unknown preset `{other}` (available: heisenberg, grushin3)"
        ))),
    }
}

/// The polarized Heisenberg generators on R^3:
/// `X1 = d1 - (x2/2) d3`, `X2 = d2 + (x1/2) d3`, dilation (1,1,2).
pub fn heisenberg() -> Result<OperatorSpec, MpError> {
    let dilation = Dilation::new(vec![1, 1, 2])?;
    let x1 = PolyVectorField::new(vec![
        Polynomial::one(3),
        Polynomial::zero(3),
        Polynomial::variable(3, 1).scale(&coeff_ratio(-1, 2)),
    ])?;
    let x2 = PolyVectorField::new(vec![
        Polynomial::zero(3),
        Polynomial::one(3),
        Polynomial::variable(3, 0).scale(&coeff_ratio(1, 2)),
    ])?;
    OperatorSpec::new("heisenberg", dilation, vec![x1, x2])
}

/// Degenerate-direction preset on R^3:
/// `X1 = d1`, `X2 = d2`, `X3 = x1 d3`, dilation (1,1,2).
pub fn grushin3() -> Result<OperatorSpec, MpError> {
    let dilation = Dilation::new(vec![1, 1, 2])?;
    let x1 = PolyVectorField::coordinate(3, 0);
    let x2 = PolyVectorField::coordinate(3, 1);
    let x3 = PolyVectorField::new(vec![
        Polynomial::zero(3),
        Polynomial::zero(3),
        Polynomial::variable(3, 0),
    ])?;
    OperatorSpec::new("grushin3", dilation, vec![x1, x2, x3])
}
