//! Finite-difference verification of discrete maximum and comparison
//! principles on weighted boxes.
//!
//! The operator is expanded symbolically into second- and first-order
//! coefficient polynomials and discretized with monotone stencils:
//! every interior row has a negative center and nonnegative neighbor
//! weights, which is what the discrete comparison arguments need.
//! Two schemes are available. The field-aligned scheme takes second
//! differences along the integer grid directions `h * X_j(x)`; for
//! grid-aligned fields (both presets) the directions are exact, the
//! stencil is monotone by construction, and the tilted neighbors carry
//! the cross-derivative information. The splitting scheme discretizes
//! the expanded coefficients with sign-adaptive diagonal neighbors and
//! rejects any grid spacing that breaks the M-matrix property, naming
//! the violating node.

use serde::Serialize;

use crate::error::MpError;
use crate::operator::OperatorSpec;
use crate::poly::Polynomial;

/// Default absolute tolerance for sign checks on normalized rows.
pub const SIGN_TOL: f64 = 1e-12;
/// Relative residual target of the linear solver.
pub const SOLVE_TOL: f64 = 1e-10;

/// The operator expanded in coordinates: second-order coefficients
/// `a = S S^T` and first-order coefficients
/// `b_i = sum_k (X_k . grad) X_k^i`, both exact polynomials.
#[derive(Clone, Debug)]
pub struct ExpandedOperator {
    pub a: Vec<Vec<Polynomial>>,
    pub b: Vec<Polynomial>,
    dim: usize,
}

/// Expand `sum_j X_j^2` into coordinates.
pub fn expand_operator(spec: &OperatorSpec) -> ExpandedOperator {
    let n = spec.dim();
    let mut a = vec![vec![Polynomial::zero(n); n]; n];
    let mut b = vec![Polynomial::zero(n); n];
    for field in spec.fields() {
        for i in 0..n {
            for j in i..n {
                let prod = field.component(i).mul(field.component(j));
                a[i][j] = a[i][j].add(&prod);
            }
            for l in 0..n {
                let term = field.component(l).mul(&field.component(i).partial(l));
                b[i] = b[i].add(&term);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[i][j] = a[j][i].clone();
        }
    }
    ExpandedOperator { a, b, dim: n }
}

impl ExpandedOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `a(x)` as a dense matrix.
    pub fn a_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.a[i][j].eval_f64(x)).collect())
            .collect()
    }

    pub fn b_at(&self, x: &[f64]) -> Vec<f64> {
        self.b.iter().map(|p| p.eval_f64(x)).collect()
    }

    /// Apply the continuum operator to a smooth function by central
    /// differences, for cross-checking closed forms.
    pub fn apply_to<F: Fn(&[f64]) -> f64>(&self, f: &F, x: &[f64], h: f64) -> f64 {
        let n = self.dim;
        let a = self.a_at(x);
        let b = self.b_at(x);
        let mut acc = 0.0;
        let mut xp = x.to_vec();
        let f0 = f(x);
        for i in 0..n {
            xp.copy_from_slice(x);
            xp[i] += h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            acc += a[i][i] * (fp - 2.0 * f0 + fm) / (h * h);
            acc += b[i] * (fp - fm) / (2.0 * h);
            for j in i + 1..n {
                xp.copy_from_slice(x);
                xp[i] += h;
                xp[j] += h;
                let fpp = f(&xp);
                xp[j] = x[j] - h;
                let fpm = f(&xp);
                xp[i] = x[i] - h;
                let fmm = f(&xp);
                xp[j] = x[j] + h;
                let fmp = f(&xp);
                acc += 2.0 * a[i][j] * (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            }
        }
        acc
    }
}

/// Axis-aligned grid specification.
#[derive(Clone, Debug, Serialize)]
pub struct GridConfig {
    pub bounds: Vec<(f64, f64)>,
    pub nodes: Vec<usize>,
}

impl GridConfig {
    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(&self.nodes)
            .map(|((lo, hi), &n)| (hi - lo) / (n as f64 - 1.0))
            .collect()
    }
}

/// Discretization scheme selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    /// Field-aligned second differences when every field is an exact
    /// integer grid direction at every interior node; otherwise fall
    /// back to the splitting.
    Auto,
    FieldAligned,
    Splitting,
}

#[derive(Clone, Debug)]
struct StencilRow {
    /// Flat index of the node this row discretizes.
    node: usize,
    /// Center weight after row normalization, always -1.
    center: f64,
    /// (flat neighbor index, weight >= 0).
    neighbors: Vec<(usize, f64)>,
}

/// An assembled Dirichlet problem on a box grid.
#[derive(Clone, Debug)]
pub struct GridProblem {
    pub config: GridConfig,
    spacing: Vec<f64>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    rows: Vec<StencilRow>,
    /// flat -> interior row index.
    interior_index: Vec<Option<usize>>,
    pub scheme_used: Scheme,
}

impl GridProblem {
    pub fn node_count(&self) -> usize {
        self.interior_index.len()
    }

    pub fn interior_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_interior(&self, flat: usize) -> bool {
        self.interior_index[flat].is_some()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut out = Vec::with_capacity(self.dims.len());
        for (axis, &d) in self.dims.iter().enumerate() {
            let idx = rem % d;
            rem /= d;
            let (lo, _) = self.config.bounds[axis];
            out.push(lo + idx as f64 * self.spacing[axis]);
        }
        out
    }

    /// `L_h u` at interior row `row` for the full grid function `u`.
    pub fn residual_at(&self, row: usize, u: &[f64]) -> f64 {
        let r = &self.rows[row];
        let mut acc = r.center * u[r.node];
        for (nb, w) in &r.neighbors {
            acc += w * u[*nb];
        }
        acc
    }

    pub fn row_node(&self, row: usize) -> usize {
        self.rows[row].node
    }

    /// Positively-coupled neighbor nodes of an interior row.
    fn coupled_neighbors(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[row]
            .neighbors
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(nb, _)| *nb)
    }

    /// Nodes reachable from `start` through the undirected coupling
    /// graph of the stencil. Tilted stencils can split the grid into
    /// decoupled components (a parity invariant of the step offsets);
    /// point-source probes must stay inside the source's component.
    pub fn coupled_component(&self, start: usize) -> Vec<bool> {
        let total = self.node_count();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); total];
        for row in &self.rows {
            for (nb, w) in &row.neighbors {
                if *w > 0.0 {
                    adjacency[row.node].push(*nb);
                    adjacency[*nb].push(row.node);
                }
            }
        }
        let mut seen = vec![false; total];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(node) = stack.pop() {
            for &nb in &adjacency[node] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        seen
    }
}

fn for_each_interior<F>(dims: &[usize], mut body: F) -> Result<(), MpError>
where
    F: FnMut(usize, &[usize]) -> Result<(), MpError>,
{
    let n = dims.len();
    let total: usize = dims.iter().product();
    let mut idx = vec![0usize; n];
    for flat in 0..total {
        if idx.iter().zip(dims).all(|(&i, &d)| i >= 1 && i + 1 < d) {
            body(flat, &idx)?;
        }
        for axis in 0..n {
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    Ok(())
}

/// Assemble the stencil for the expanded operator on `config`.
pub fn assemble(
    expop: &ExpandedOperator,
    spec: &OperatorSpec,
    config: &GridConfig,
    scheme: Scheme,
) -> Result<GridProblem, MpError> {
    let n = expop.dim();
    if config.bounds.len() != n || config.nodes.len() != n {
        return Err(MpError::DimensionMismatch("grid config vs operator dimension".into()));
    }
    if config.nodes.iter().any(|&d| d < 3) {
        return Err(MpError::GridRejected("need at least 3 nodes per axis".into()));
    }
    if config.node_count() > 1_000_000 {
        return Err(MpError::GridRejected(format!(
            "{} nodes exceed the memory budget of 1e6",
            config.node_count()
        )));
    }
    let dims = config.nodes.clone();
    let mut strides = vec![1usize; n];
    for i in 1..n {
        strides[i] = strides[i - 1] * dims[i - 1];
    }
    let spacing = config.spacing();

    if matches!(scheme, Scheme::Auto | Scheme::FieldAligned) {
        match assemble_field_aligned(expop, spec, config, &dims, &strides, &spacing) {
            Ok(problem) => return Ok(problem),
            Err(e) => {
                if scheme == Scheme::FieldAligned {
                    return Err(e);
                }
            }
        }
    }
    assemble_splitting(expop, config, &dims, &strides, &spacing)
}

/// Integer grid direction of a field value: the smallest `tau` for
/// which every component `tau * X^i / h_i` is an integer step count
/// and at least one is a unit step. Candidates normalize each nonzero
/// component in turn, tried in increasing order.
fn integer_direction(field_at: &[f64], spacing: &[f64]) -> Option<(Vec<i64>, f64)> {
    let n = field_at.len();
    let mut candidates: Vec<f64> = (0..n)
        .filter(|&i| field_at[i] != 0.0)
        .map(|i| spacing[i] / field_at[i].abs())
        .collect();
    if candidates.is_empty() {
        return None;
    }
    candidates.sort_by(f64::total_cmp);
    'cand: for &tau in &candidates {
        let mut steps = Vec::with_capacity(n);
        for i in 0..n {
            let raw = tau * field_at[i] / spacing[i];
            let rounded = raw.round();
            if (raw - rounded).abs() > 1e-9 * (1.0 + raw.abs()) {
                continue 'cand;
            }
            steps.push(rounded as i64);
        }
        return Some((steps, tau));
    }
    None
}

fn add_weight(neighbors: &mut Vec<(usize, f64)>, nb: usize, w: f64) {
    if let Some(entry) = neighbors.iter_mut().find(|(i, _)| *i == nb) {
        entry.1 += w;
    } else {
        neighbors.push((nb, w));
    }
}

fn assemble_field_aligned(
    expop: &ExpandedOperator,
    spec: &OperatorSpec,
    config: &GridConfig,
    dims: &[usize],
    strides: &[usize],
    spacing: &[f64],
) -> Result<GridProblem, MpError> {
    let n = dims.len();
    let total: usize = dims.iter().product();
    let mut rows: Vec<StencilRow> = Vec::new();
    let mut interior_index = vec![None; total];

    for_each_interior(dims, |flat, idx| {
        let x: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(axis, &i)| config.bounds[axis].0 + i as f64 * spacing[axis])
            .collect();
        let mut center = 0.0;
        let mut neighbors: Vec<(usize, f64)> = Vec::new();
        let mut demoted = false;
        for field in spec.fields() {
            let fx: Vec<f64> = (0..n).map(|i| field.component(i).eval_f64(&x)).collect();
            if fx.iter().all(|&v| v == 0.0) {
                continue; // degenerate direction contributes nothing
            }
            let Some((steps, tau)) = integer_direction(&fx, spacing) else {
                return Err(MpError::GridRejected(format!(
                    "field direction not grid-aligned at node {x:?}"
                )));
            };
            let w = 1.0 / (tau * tau);
            for sign in [1i64, -1] {
                let mut nb_flat = 0usize;
                let mut ok = true;
                for (axis, &s) in steps.iter().enumerate() {
                    let moved = idx[axis] as i64 + sign * s;
                    if moved < 0 || moved as usize >= dims[axis] {
                        ok = false;
                        break;
                    }
                    nb_flat += moved as usize * strides[axis];
                }
                if !ok {
                    // Tilted neighbor leaves the grid: this node joins
                    // the boundary layer instead.
                    demoted = true;
                    break;
                }
                add_weight(&mut neighbors, nb_flat, w);
            }
            if demoted {
                break;
            }
            center -= 2.0 * w;
        }
        if demoted {
            return Ok(());
        }
        // First-order residual beyond the aligned second differences,
        // upwinded to keep monotonicity.
        let b = expop.b_at(&x);
        for (axis, &bi) in b.iter().enumerate() {
            if bi == 0.0 {
                continue;
            }
            let w = bi.abs() / spacing[axis];
            let dir = if bi > 0.0 { 1i64 } else { -1 };
            let moved = (idx[axis] as i64 + dir) as usize;
            let nb_flat = flat as i64 + dir * strides[axis] as i64;
            if moved >= dims[axis] {
                return Err(MpError::GridRejected(format!(
                    "upwind neighbor escapes the grid at node {x:?}"
                )));
            }
            add_weight(&mut neighbors, nb_flat as usize, w);
            center -= w;
        }
        if center < 0.0 {
            let scale = -1.0 / center;
            let neighbors: Vec<(usize, f64)> = neighbors
                .into_iter()
                .filter(|(_, w)| *w != 0.0)
                .map(|(i, w)| (i, w * scale))
                .collect();
            interior_index[flat] = Some(rows.len());
            rows.push(StencilRow { node: flat, center: -1.0, neighbors });
        }
        // center == 0: fully degenerate node stays in the boundary set.
        Ok(())
    })?;

    if rows.is_empty() {
        return Err(MpError::GridRejected("no interior rows assembled".into()));
    }
    Ok(GridProblem {
        config: config.clone(),
        spacing: spacing.to_vec(),
        dims: dims.to_vec(),
        strides: strides.to_vec(),
        rows,
        interior_index,
        scheme_used: Scheme::FieldAligned,
    })
}

fn assemble_splitting(
    expop: &ExpandedOperator,
    config: &GridConfig,
    dims: &[usize],
    strides: &[usize],
    spacing: &[f64],
) -> Result<GridProblem, MpError> {
    let n = dims.len();
    let total: usize = dims.iter().product();
    let mut rows: Vec<StencilRow> = Vec::new();
    let mut interior_index = vec![None; total];

    for_each_interior(dims, |flat, idx| {
        let x: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(axis, &i)| config.bounds[axis].0 + i as f64 * spacing[axis])
            .collect();
        let a = expop.a_at(&x);
        let b = expop.b_at(&x);
        let mut center = 0.0;
        // Weights keyed by signed index offsets.
        let mut weights: Vec<(Vec<i64>, f64)> = Vec::new();
        let add = |off: Vec<i64>, w: f64, weights: &mut Vec<(Vec<i64>, f64)>| {
            if let Some(e) = weights.iter_mut().find(|(o, _)| *o == off) {
                e.1 += w;
            } else {
                weights.push((off, w));
            }
        };
        for i in 0..n {
            let w = a[i][i] / (spacing[i] * spacing[i]);
            if w != 0.0 {
                let mut plus = vec![0i64; n];
                plus[i] = 1;
                let mut minus = vec![0i64; n];
                minus[i] = -1;
                add(plus, w, &mut weights);
                add(minus, w, &mut weights);
                center -= 2.0 * w;
            }
            for j in i + 1..n {
                let c = a[i][j];
                if c == 0.0 {
                    continue;
                }
                let w = c.abs() / (spacing[i] * spacing[j]);
                let s = if c > 0.0 { 1i64 } else { -1 };
                // Sign-adaptive diagonal pair plus axis corrections.
                for dir in [1i64, -1] {
                    let mut off = vec![0i64; n];
                    off[i] = dir;
                    off[j] = dir * s;
                    add(off, w, &mut weights);
                }
                for axis in [i, j] {
                    for dir in [1i64, -1] {
                        let mut off = vec![0i64; n];
                        off[axis] = dir;
                        add(off, -w, &mut weights);
                    }
                }
                center += 2.0 * w;
            }
        }
        // First-order terms: centered when dominated, upwind otherwise.
        for i in 0..n {
            let bi = b[i];
            if bi == 0.0 {
                continue;
            }
            let centered = bi.abs() / (2.0 * spacing[i]);
            let mut plus = vec![0i64; n];
            plus[i] = 1;
            let mut minus = vec![0i64; n];
            minus[i] = -1;
            let w_plus = weights.iter().find(|(o, _)| *o == plus).map_or(0.0, |(_, w)| *w);
            let w_minus = weights.iter().find(|(o, _)| *o == minus).map_or(0.0, |(_, w)| *w);
            if w_plus >= centered && w_minus >= centered {
                add(plus, bi / (2.0 * spacing[i]), &mut weights);
                add(minus, -bi / (2.0 * spacing[i]), &mut weights);
            } else {
                let w = bi.abs() / spacing[i];
                if bi > 0.0 {
                    add(plus, w, &mut weights);
                } else {
                    add(minus, w, &mut weights);
                }
                center -= w;
            }
        }
        if center >= 0.0 {
            if weights.iter().any(|(_, w)| *w != 0.0) {
                return Err(MpError::GridRejected(format!(
                    "center weight {center} not negative at node {x:?}"
                )));
            }
            return Ok(()); // fully degenerate node stays boundary
        }
        let scale = -1.0 / center;
        let mut neighbors = Vec::with_capacity(weights.len());
        for (off, w) in weights {
            let wn = w * scale;
            if wn < -SIGN_TOL {
                return Err(MpError::GridRejected(format!(
                    "negative stencil weight {wn:.3e} at node {x:?}, offset {off:?}; \
                     reduce the spacing ratio or use the field-aligned scheme"
                )));
            }
            if wn <= 0.0 {
                continue;
            }
            let mut nb_flat = 0usize;
            for (axis, &o) in off.iter().enumerate() {
                let moved = idx[axis] as i64 + o;
                debug_assert!(moved >= 0 && (moved as usize) < dims[axis]);
                nb_flat += moved as usize * strides[axis];
            }
            neighbors.push((nb_flat, wn));
        }
        interior_index[flat] = Some(rows.len());
        rows.push(StencilRow { node: flat, center: -1.0, neighbors });
        Ok(())
    })?;

    if rows.is_empty() {
        return Err(MpError::GridRejected("no interior rows assembled".into()));
    }
    Ok(GridProblem {
        config: config.clone(),
        spacing: spacing.to_vec(),
        dims: dims.to_vec(),
        strides: strides.to_vec(),
        rows,
        interior_index,
        scheme_used: Scheme::Splitting,
    })
}

// ---------------------------------------------------------------------
// Sparse linear algebra: CSR, ILU(0), BiCGSTAB.
// ---------------------------------------------------------------------

struct Csr {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    n: usize,
}

impl Csr {
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            out[row] = acc;
        }
    }
}

/// ILU(0): incomplete LU on the sparsity pattern (sorted columns).
fn ilu0(a: &Csr) -> Csr {
    let mut lu = Csr {
        indptr: a.indptr.clone(),
        indices: a.indices.clone(),
        data: a.data.clone(),
        n: a.n,
    };
    let mut diag_ptr = vec![usize::MAX; a.n];
    for row in 0..a.n {
        for k in lu.indptr[row]..lu.indptr[row + 1] {
            if lu.indices[k] == row {
                diag_ptr[row] = k;
            }
        }
    }
    for row in 0..a.n {
        for kk in lu.indptr[row]..lu.indptr[row + 1] {
            let col = lu.indices[kk];
            if col >= row {
                break;
            }
            let dp = diag_ptr[col];
            if dp == usize::MAX || lu.data[dp] == 0.0 {
                continue;
            }
            let factor = lu.data[kk] / lu.data[dp];
            lu.data[kk] = factor;
            let mut p = kk + 1;
            for uk in dp + 1..lu.indptr[col + 1] {
                let ucol = lu.indices[uk];
                while p < lu.indptr[row + 1] && lu.indices[p] < ucol {
                    p += 1;
                }
                if p < lu.indptr[row + 1] && lu.indices[p] == ucol {
                    lu.data[p] -= factor * lu.data[uk];
                }
            }
        }
    }
    lu
}

fn ilu_solve(lu: &Csr, rhs: &[f64], out: &mut [f64]) {
    for row in 0..lu.n {
        let mut acc = rhs[row];
        for k in lu.indptr[row]..lu.indptr[row + 1] {
            let col = lu.indices[k];
            if col >= row {
                break;
            }
            acc -= lu.data[k] * out[col];
        }
        out[row] = acc;
    }
    for row in (0..lu.n).rev() {
        let mut acc = out[row];
        let mut diag = 1.0;
        for k in lu.indptr[row]..lu.indptr[row + 1] {
            let col = lu.indices[k];
            if col == row {
                diag = lu.data[k];
            } else if col > row {
                acc -= lu.data[k] * out[col];
            }
        }
        out[row] = if diag != 0.0 { acc / diag } else { acc };
    }
}

/// Preconditioned BiCGSTAB; returns the achieved relative residual.
fn bicgstab(a: &Csr, lu: &Csr, rhs: &[f64], x: &mut [f64], tol: f64, max_iters: usize) -> f64 {
    let n = a.n;
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        x.fill(0.0);
        return 0.0;
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut sh = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..max_iters {
        let rho_new: f64 = r0.iter().zip(&r).map(|(a, b)| a * b).sum();
        if rho_new.abs() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        ilu_solve(lu, &p, &mut ph);
        a.matvec(&ph, &mut v);
        let denom: f64 = r0.iter().zip(&v).map(|(a, b)| a * b).sum();
        if denom.abs() < 1e-300 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s_norm <= tol * rhs_norm {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return s_norm / rhs_norm;
        }
        ilu_solve(lu, &s, &mut sh);
        a.matvec(&sh, &mut t);
        let tt: f64 = t.iter().map(|v| v * v).sum();
        if tt < 1e-300 {
            break;
        }
        omega = t.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / tt;
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        best = best.min(r_norm / rhs_norm);
        if r_norm <= tol * rhs_norm {
            return r_norm / rhs_norm;
        }
        if omega.abs() < 1e-300 {
            break;
        }
    }
    best
}

impl GridProblem {
    /// Solve the Dirichlet problem `L_h u = source` in the interior,
    /// `u = boundary` elsewhere; returns the full grid function.
    pub fn solve_dirichlet<Fb, Fs>(&self, boundary: Fb, source: Fs) -> Result<Vec<f64>, MpError>
    where
        Fb: Fn(&[f64]) -> f64,
        Fs: Fn(&[f64]) -> f64,
    {
        let total = self.node_count();
        let m = self.rows.len();
        let mut u = vec![0.0; total];
        for flat in 0..total {
            if self.interior_index[flat].is_none() {
                u[flat] = boundary(&self.coords(flat));
            }
        }
        // Interior system A w = rhs with A = -L_h restricted to the
        // interior: positive diagonal, nonpositive off-diagonal.
        let mut indptr = Vec::with_capacity(m + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut rhs = vec![0.0; m];
        indptr.push(0usize);
        for (row_idx, row) in self.rows.iter().enumerate() {
            rhs[row_idx] = -source(&self.coords(row.node));
            let mut entries: Vec<(usize, f64)> = vec![(row_idx, -row.center)];
            for (nb, w) in &row.neighbors {
                match self.interior_index[*nb] {
                    Some(col) => entries.push((col, -w)),
                    None => rhs[row_idx] += w * u[*nb],
                }
            }
            entries.sort_by_key(|(c, _)| *c);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (c, w) in entries {
                if let Some(last) = merged.last_mut() {
                    if last.0 == c {
                        last.1 += w;
                        continue;
                    }
                }
                merged.push((c, w));
            }
            for (c, w) in merged {
                indices.push(c);
                data.push(w);
            }
            indptr.push(indices.len());
        }
        let a = Csr { indptr, indices, data, n: m };
        let lu = ilu0(&a);
        let mut w = vec![0.0; m];
        let achieved = bicgstab(&a, &lu, &rhs, &mut w, SOLVE_TOL, 4000);
        if achieved > SOLVE_TOL {
            return Err(MpError::Numerical(format!(
                "linear solver stalled at relative residual {achieved:.3e}"
            )));
        }
        for (row_idx, row) in self.rows.iter().enumerate() {
            u[row.node] = w[row_idx];
        }
        Ok(u)
    }
}

/// Report of the discrete maximum-principle check.
#[derive(Clone, Debug, Serialize)]
pub struct MpCheckReport {
    /// Smallest interior residual of `L_h u`.
    pub min_residual: f64,
    /// Largest boundary value.
    pub max_boundary: f64,
    /// Whether the premises (residual >= 0, boundary <= 0) held.
    pub premise_holds: bool,
    /// Largest value of `u` over all nodes.
    pub max_value: f64,
    /// Nodes where `u` exceeds the tolerance although the premises hold.
    pub violations: Vec<usize>,
    /// Strong form: an interior maximum forces constancy on its
    /// coupled component.
    pub strong_form_ok: bool,
    pub residual_tol: f64,
}

/// Verify the weak and strong discrete maximum principles for a given
/// grid function.
pub fn check_discrete_mp(problem: &GridProblem, u: &[f64], residual_tol: f64) -> MpCheckReport {
    let scale = u.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = residual_tol * scale;
    let mut min_residual = f64::INFINITY;
    for row in 0..problem.rows.len() {
        min_residual = min_residual.min(problem.residual_at(row, u));
    }
    let mut max_boundary = f64::NEG_INFINITY;
    for flat in 0..problem.node_count() {
        if !problem.is_interior(flat) {
            max_boundary = max_boundary.max(u[flat]);
        }
    }
    let premise_holds = min_residual >= -tol && max_boundary <= tol;
    let max_value = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut violations = Vec::new();
    if premise_holds {
        for (flat, v) in u.iter().enumerate() {
            if *v > tol {
                violations.push(flat);
            }
        }
    }
    let strong_form_ok = check_strong_form(problem, u, tol);
    MpCheckReport {
        min_residual,
        max_boundary,
        premise_holds,
        max_value,
        violations,
        strong_form_ok,
        residual_tol,
    }
}

/// If a discretely subharmonic grid function attains the global maximum
/// at an interior node, it must be constant on that node's coupled
/// component.
fn check_strong_form(problem: &GridProblem, u: &[f64], tol: f64) -> bool {
    let mut min_residual = f64::INFINITY;
    for row in 0..problem.rows.len() {
        min_residual = min_residual.min(problem.residual_at(row, u));
    }
    if min_residual < -tol {
        return true; // premise empty
    }
    let global_max = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let at = problem
        .rows
        .iter()
        .position(|r| (u[r.node] - global_max).abs() <= tol);
    let Some(start_row) = at else {
        return true; // maximum only on the boundary
    };
    let mut stack = vec![start_row];
    let mut seen = vec![false; problem.rows.len()];
    seen[start_row] = true;
    while let Some(row) = stack.pop() {
        if (u[problem.rows[row].node] - global_max).abs() > 10.0 * tol {
            return false;
        }
        for nb in problem.coupled_neighbors(row) {
            if let Some(nb_row) = problem.interior_index[nb] {
                if !seen[nb_row] {
                    seen[nb_row] = true;
                    stack.push(nb_row);
                }
            }
        }
    }
    true
}

/// Result of the damped semilinear fixed-point iteration.
#[derive(Clone, Debug, Serialize)]
pub struct SemilinearReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_change: f64,
    pub max_value: f64,
    pub all_nonpositive: bool,
}

/// Iterate `L_h u = -f(x, u)` from `u = 0` with damping; on convergence
/// the solution must be nonpositive when `f(x, z) <= 0` for `z >= 0`
/// and the boundary data is nonpositive.
pub fn semilinear_check<Ff, Fb>(
    problem: &GridProblem,
    f: Ff,
    boundary: Fb,
    max_iters: usize,
) -> Result<SemilinearReport, MpError>
where
    Ff: Fn(&[f64], f64) -> f64,
    Fb: Fn(&[f64]) -> f64,
{
    // Validate the sign condition on a sampled grid.
    let stride = 1 + problem.node_count() / 64;
    for flat in (0..problem.node_count()).step_by(stride) {
        let x = problem.coords(flat);
        for z in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let v = f(&x, z);
            if v > 0.0 {
                return Err(MpError::invariant(
                    "semilinear_check",
                    format!("f({x:?}, {z}) = {v} > 0 violates the sign condition"),
                ));
            }
        }
    }
    for flat in 0..problem.node_count() {
        if !problem.is_interior(flat) {
            let g = boundary(&problem.coords(flat));
            if g > 0.0 {
                return Err(MpError::invariant(
                    "semilinear_check",
                    format!("boundary value {g} > 0 at node {flat}"),
                ));
            }
        }
    }
    let total = problem.node_count();
    let mut u = vec![0.0; total];
    let damping = 0.7;
    let mut final_change = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        let u_prev = u.clone();
        let next = problem.solve_dirichlet(&boundary, |x| {
            let flat = nearest_flat(problem, x);
            -f(x, u_prev[flat])
        })?;
        let mut change = 0.0_f64;
        for i in 0..total {
            let blended = (1.0 - damping) * u_prev[i] + damping * next[i];
            change = change.max((blended - u_prev[i]).abs());
            u[i] = blended;
        }
        let scale = u.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        final_change = change / scale;
        if final_change < 1e-10 {
            break;
        }
    }
    let max_value = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let scale = u.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    Ok(SemilinearReport {
        converged: final_change < 1e-10,
        iterations,
        final_change,
        max_value,
        all_nonpositive: max_value <= 1e-9 * scale,
    })
}

/// Flat index of the grid node at (or nearest to) given coordinates.
fn nearest_flat(problem: &GridProblem, x: &[f64]) -> usize {
    let mut flat = 0usize;
    for (axis, &xi) in x.iter().enumerate() {
        let (lo, _) = problem.config.bounds[axis];
        let idx = ((xi - lo) / problem.spacing[axis]).round() as usize;
        flat += idx.min(problem.dims[axis] - 1) * problem.strides[axis];
    }
    flat
}

/// Grid configs adapted to each preset's alignment requirements.
///
/// For dilation weight 2 on the last axis the spacing must satisfy
/// `h_last = h^2 / 2` with box bounds on the `h`-lattice, which makes
/// the preset fields exact integer grid directions.
pub fn suggest_grid(spec: &OperatorSpec, base_nodes: usize, scale: f64) -> GridConfig {
    let n = spec.dim();
    let sigma = spec.dilation().sigma();
    // Odd node counts keep the origin and the bounds on the lattice.
    let base = if base_nodes % 2 == 0 { base_nodes + 1 } else { base_nodes };
    let h = 2.0 * scale / (base as f64 - 1.0);
    let mut bounds = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for &s in sigma {
        if s == 1 {
            bounds.push((-scale, scale));
            nodes.push(base);
        } else {
            let extent = scale.powi(s as i32);
            let h_last = h * h / 2.0;
            let count = (2.0 * extent / h_last).round() as usize + 1;
            bounds.push((-extent, extent));
            nodes.push(count);
        }
    }
    GridConfig { bounds, nodes }
}
