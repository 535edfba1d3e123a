//! First-order solver for the per-slot convex subproblems.
//!
//! A [`ConvexProgram`] is a linear objective over variable blocks with simple
//! feasible sets (boxes, norm balls, PSD cones with trace bounds) plus affine
//! and convex-callback constraints. The solver runs an augmented-Lagrangian
//! outer loop around a projected-gradient inner loop: block membership is
//! enforced by exact projection every step (PSD blocks by eigenvalue
//! clipping), while affine and callback constraints carry multipliers.
//!
//! The subproblems here are small (tens of scalars plus a few 2N×2N matrix
//! blocks), so a dense, allocation-light first-order method is enough and
//! keeps the solve bit-deterministic: identical programs and warm starts
//! produce identical iterates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("matrix is not Hermitian within tolerance {0}")]
    NotHermitian(f64),
}

/// Handle to one variable block inside a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(usize);

#[derive(Debug, Clone)]
enum BlockKind {
    /// Box-bounded scalars (±∞ bounds allowed).
    Scalars { lower: Vec<f64>, upper: Vec<f64> },
    /// Euclidean ball ‖x‖ ≤ radius.
    Ball { dim: usize, radius: f64 },
    /// Symmetric `dim × dim` matrix constrained to the PSD cone, optionally
    /// with a trace bound; stored row-major as `dim²` entries. With
    /// `complex_pairs` the block additionally lives in the real embedding
    /// subspace `[[A, −B], [B, A]]` of a Hermitian dim/2 matrix; the
    /// subspace is spectrally invariant, so averaging onto it before the
    /// eigenvalue clip is still the exact joint projection.
    Psd { dim: usize, trace_bound: Option<f64>, complex_pairs: bool },
}

impl BlockKind {
    fn len(&self) -> usize {
        match self {
            BlockKind::Scalars { lower, .. } => lower.len(),
            BlockKind::Ball { dim, .. } => *dim,
            BlockKind::Psd { dim, .. } => dim * dim,
        }
    }
}

/// Sparse linear combination over the flat variable vector.
pub type LinComb = Vec<(usize, f64)>;

struct AffineCon {
    terms: LinComb,
    rhs: f64,
    equality: bool,
}

/// Convex inequality g(v) ≤ 0 supplied as value and gradient callbacks.
/// The gradient callback accumulates ∂g/∂v into the buffer.
pub struct ConvexCon {
    pub eval: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub grad: Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

/// Solver-facing description of one convex subproblem (minimization).
#[derive(Default)]
pub struct ConvexProgram {
    blocks: Vec<(BlockKind, usize)>, // kind, flat offset
    len: usize,
    objective: LinComb,
    affine: Vec<AffineCon>,
    convex: Vec<ConvexCon>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalars(&mut self, lower: Vec<f64>, upper: Vec<f64>) -> BlockId {
        assert_eq!(lower.len(), upper.len());
        self.push_block(BlockKind::Scalars { lower, upper })
    }

    pub fn add_ball(&mut self, dim: usize, radius: f64) -> BlockId {
        self.push_block(BlockKind::Ball { dim, radius })
    }

    pub fn add_psd(&mut self, dim: usize, trace_bound: Option<f64>) -> BlockId {
        self.push_block(BlockKind::Psd { dim, trace_bound, complex_pairs: false })
    }

    /// PSD block confined to the real embedding subspace of a Hermitian
    /// matrix of dimension `dim/2`.
    pub fn add_psd_embedded(&mut self, dim: usize, trace_bound: Option<f64>) -> BlockId {
        assert!(dim % 2 == 0);
        self.push_block(BlockKind::Psd { dim, trace_bound, complex_pairs: true })
    }

    fn push_block(&mut self, kind: BlockKind) -> BlockId {
        let id = BlockId(self.blocks.len());
        let offset = self.len;
        self.len += kind.len();
        self.blocks.push((kind, offset));
        id
    }

    /// Flat index of entry `i` of a block.
    pub fn index(&self, block: BlockId, i: usize) -> usize {
        let (kind, offset) = &self.blocks[block.0];
        assert!(i < kind.len());
        offset + i
    }

    /// Flat index of matrix entry `(r, c)` of a PSD block.
    pub fn mat_index(&self, block: BlockId, r: usize, c: usize) -> usize {
        let (kind, offset) = &self.blocks[block.0];
        match kind {
            BlockKind::Psd { dim, .. } => {
                assert!(r < *dim && c < *dim);
                offset + r * dim + c
            }
            _ => panic!("mat_index on a non-matrix block"),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.len
    }

    /// Sets the linear objective (minimized).
    pub fn set_objective(&mut self, terms: LinComb) {
        self.objective = terms;
    }

    /// Adds `terms · v ≤ rhs`.
    pub fn add_affine_ineq(&mut self, terms: LinComb, rhs: f64) {
        self.affine.push(AffineCon { terms, rhs, equality: false });
    }

    /// Adds `terms · v = rhs`.
    pub fn add_affine_eq(&mut self, terms: LinComb, rhs: f64) {
        self.affine.push(AffineCon { terms, rhs, equality: true });
    }

    pub fn add_convex(&mut self, con: ConvexCon) {
        self.convex.push(con);
    }

    pub fn num_affine_ineqs(&self) -> usize {
        self.affine.iter().filter(|c| !c.equality).count()
    }

    pub fn num_affine_eqs(&self) -> usize {
        self.affine.iter().filter(|c| c.equality).count()
    }

    pub fn num_convex(&self) -> usize {
        self.convex.len()
    }

    /// Number of PSD blocks and of trace bounds across them.
    pub fn psd_summary(&self) -> (usize, usize) {
        let blocks = self
            .blocks
            .iter()
            .filter(|(k, _)| matches!(k, BlockKind::Psd { .. }))
            .count();
        let bounded = self
            .blocks
            .iter()
            .filter(|(k, _)| matches!(k, BlockKind::Psd { trace_bound: Some(_), .. }))
            .count();
        (blocks, bounded)
    }

    fn project(&self, v: &mut [f64]) {
        for (kind, offset) in &self.blocks {
            let seg = &mut v[*offset..*offset + kind.len()];
            match kind {
                BlockKind::Scalars { lower, upper } => {
                    for i in 0..seg.len() {
                        seg[i] = seg[i].clamp(lower[i], upper[i]);
                    }
                }
                BlockKind::Ball { dim: _, radius } => {
                    let norm = seg.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > *radius {
                        let scale = *radius / norm;
                        for x in seg.iter_mut() {
                            *x *= scale;
                        }
                    }
                }
                BlockKind::Psd { dim, trace_bound, complex_pairs } => {
                    if *complex_pairs {
                        project_embedding_subspace(seg, *dim);
                    }
                    project_psd_segment(seg, *dim, *trace_bound);
                }
            }
        }
    }

    fn objective_value(&self, v: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * v[i]).sum()
    }

    /// Exact recomputation of the worst constraint violation at a point,
    /// including block-membership residuals.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for con in &self.affine {
            let val: f64 = con.terms.iter().map(|&(i, c)| c * v[i]).sum::<f64>() - con.rhs;
            worst = worst.max(if con.equality { val.abs() } else { val });
        }
        for con in &self.convex {
            worst = worst.max((con.eval)(v));
        }
        for (kind, offset) in &self.blocks {
            let seg = &v[*offset..*offset + kind.len()];
            match kind {
                BlockKind::Scalars { lower, upper } => {
                    for i in 0..seg.len() {
                        worst = worst.max(lower[i] - seg[i]).max(seg[i] - upper[i]);
                    }
                }
                BlockKind::Ball { dim: _, radius } => {
                    let norm = seg.iter().map(|x| x * x).sum::<f64>().sqrt();
                    worst = worst.max(norm - radius);
                }
                BlockKind::Psd { dim, trace_bound, complex_pairs: _ } => {
                    let mat = DMatrix::from_row_slice(*dim, *dim, seg);
                    let sym = (&mat + mat.transpose()) * 0.5;
                    let eig = sym.symmetric_eigenvalues();
                    let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
                    worst = worst.max(-min_eig);
                    if let Some(t) = trace_bound {
                        worst = worst.max(sym.trace() - t);
                    }
                }
            }
        }
        worst
    }
}

/// Orthogonal projection onto the Hermitian embedding subspace
/// `[[A, −B], [B, A]]` with `A` symmetric and `B` skew-symmetric:
/// blockwise averaging of the redundant entries.
fn project_embedding_subspace(seg: &mut [f64], dim: usize) {
    let n = dim / 2;
    let at = |r: usize, c: usize| r * dim + c;
    for r in 0..n {
        for c in 0..n {
            // A symmetric: average the two diagonal blocks and transpose
            let a = 0.25
                * (seg[at(r, c)] + seg[at(c, r)] + seg[at(r + n, c + n)] + seg[at(c + n, r + n)]);
            // B skew: average the off-diagonal blocks with signs
            let b = 0.25
                * (seg[at(r + n, c)] - seg[at(c + n, r)] - seg[at(r, c + n)] + seg[at(c, r + n)]);
            seg[at(r, c)] = a;
            seg[at(c, r)] = a;
            seg[at(r + n, c + n)] = a;
            seg[at(c + n, r + n)] = a;
            seg[at(r + n, c)] = b;
            seg[at(c, r + n)] = b;
            seg[at(c + n, r)] = -b;
            seg[at(r, c + n)] = -b;
        }
    }
}

/// Projects a row-major symmetric segment onto the PSD cone (optionally
/// intersected with a trace ball) by eigenvalue clipping.
fn project_psd_segment(seg: &mut [f64], dim: usize, trace_bound: Option<f64>) {
    let mat = DMatrix::from_row_slice(dim, dim, seg);
    let sym = (&mat + mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    if let Some(t) = trace_bound {
        let total: f64 = vals.iter().sum();
        if total > t {
            // project the clipped spectrum onto {λ ≥ 0, Σλ ≤ t}
            let mut sorted = vals.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut acc = 0.0;
            let mut theta = 0.0;
            for (j, &l) in sorted.iter().enumerate() {
                acc += l;
                let cand = (acc - t) / (j + 1) as f64;
                if j + 1 == sorted.len() || cand >= sorted.get(j + 1).copied().unwrap_or(0.0) {
                    theta = cand.max(0.0);
                    break;
                }
            }
            for v in vals.iter_mut() {
                *v = (*v - theta).max(0.0);
            }
        }
    }
    let mut rebuilt = DMatrix::zeros(dim, dim);
    for (j, &l) in vals.iter().enumerate() {
        if l != 0.0 {
            let col = eig.eigenvectors.column(j);
            rebuilt += l * &col * col.transpose();
        }
    }
    for r in 0..dim {
        for c in 0..dim {
            seg[r * dim + c] = rebuilt[(r, c)];
        }
    }
}

/// Nearest (Frobenius) PSD matrix to a Hermitian input; negative eigenvalues
/// are zeroed. Rejects inputs that are not Hermitian within `1e-10`.
pub fn psd_project(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, SolverError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let herm_tol = 1e-10;
    for r in 0..n {
        for c in 0..n {
            let diff = a[(r, c)] - a[(c, r)].conj();
            if diff.norm() > herm_tol {
                return Err(SolverError::NotHermitian(herm_tol));
            }
        }
    }
    // real symmetric embedding [[Re, -Im], [Im, Re]] keeps the spectrum
    let mut seg = vec![0.0; (2 * n) * (2 * n)];
    let at = |r: usize, c: usize| -> usize { r * 2 * n + c };
    for r in 0..n {
        for c in 0..n {
            let w = a[(r, c)];
            seg[at(r, c)] = w.re;
            seg[at(r, c + n)] = -w.im;
            seg[at(r + n, c)] = w.im;
            seg[at(r + n, c + n)] = w.re;
        }
    }
    project_psd_segment(&mut seg, 2 * n, None);
    let mut out = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for r in 0..n {
        for c in 0..n {
            let re = 0.5 * (seg[at(r, c)] + seg[at(r + n, c + n)]);
            let im = 0.5 * (seg[at(r + n, c)] - seg[at(r, c + n)]);
            out[(r, c)] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

/// Termination status of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Result of one solve: best iterate, its objective, and the exactly
/// recomputed worst violation.
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Solver tolerances and iteration caps.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub feasibility: f64,
    pub optimality: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { feasibility: 1e-6, optimality: 1e-6, max_inner: 500, max_outer: 100 }
    }
}

/// Augmented-Lagrangian / projected-gradient solve. Deterministic given the
/// program and warm start; returns the best iterate found.
pub fn solve(p: &ConvexProgram, warm_start: Option<&[f64]>, tol: &Tolerances) -> Solution {
    let n = p.num_vars();
    let mut v = match warm_start {
        Some(w) => {
            assert_eq!(w.len(), n, "warm start length mismatch");
            w.to_vec()
        }
        None => vec![0.0; n],
    };
    p.project(&mut v);

    let n_aff = p.affine.len();
    let n_cvx = p.convex.len();
    let mut mult_aff = vec![0.0; n_aff];
    let mut mult_cvx = vec![0.0; n_cvx];
    let mut mu = 1.0f64;
    let mu_max = 1e12;

    let obj_scale = p
        .objective
        .iter()
        .map(|&(_, c)| c.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);

    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut best: Option<(f64, f64, Vec<f64>)> = None; // (violation, objective, point)
    let mut prev_viol = f64::INFINITY;
    let mut prev_obj = f64::INFINITY;
    let mut settled = 0usize;
    let mut stagnant = 0usize;
    let mut iterations = 0usize;
    let mut step = 1.0 / obj_scale;

    let al_value = |v: &[f64], mult_aff: &[f64], mult_cvx: &[f64], mu: f64| -> f64 {
        let mut val = p.objective_value(v);
        for (ci, con) in p.affine.iter().enumerate() {
            let g: f64 = con.terms.iter().map(|&(i, c)| c * v[i]).sum::<f64>() - con.rhs;
            if con.equality {
                val += mult_aff[ci] * g + 0.5 * mu * g * g;
            } else {
                let t = (mult_aff[ci] + mu * g).max(0.0);
                val += (t * t - mult_aff[ci] * mult_aff[ci]) / (2.0 * mu);
            }
        }
        for (ci, con) in p.convex.iter().enumerate() {
            let g = (con.eval)(v);
            let t = (mult_cvx[ci] + mu * g).max(0.0);
            val += (t * t - mult_cvx[ci] * mult_cvx[ci]) / (2.0 * mu);
        }
        val
    };

    for _outer in 0..tol.max_outer {
        // inner projected-gradient descent on the AL at fixed multipliers
        let mut f_cur = al_value(&v, &mult_aff, &mult_cvx, mu);
        for _inner in 0..tol.max_inner {
            iterations += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &(i, c) in &p.objective {
                grad[i] += c;
            }
            for (ci, con) in p.affine.iter().enumerate() {
                let g: f64 =
                    con.terms.iter().map(|&(i, c)| c * v[i]).sum::<f64>() - con.rhs;
                let w = if con.equality {
                    mult_aff[ci] + mu * g
                } else {
                    (mult_aff[ci] + mu * g).max(0.0)
                };
                if w != 0.0 {
                    for &(i, c) in &con.terms {
                        grad[i] += w * c;
                    }
                }
            }
            for (ci, con) in p.convex.iter().enumerate() {
                let g = (con.eval)(&v);
                let w = (mult_cvx[ci] + mu * g).max(0.0);
                if w != 0.0 {
                    let mut cg = vec![0.0; n];
                    (con.grad)(&v, &mut cg);
                    for i in 0..n {
                        grad[i] += w * cg[i];
                    }
                }
            }

            // backtracking projected step with sufficient-decrease test
            step = (step * 4.0).min(1e6 / obj_scale);
            let mut moved = 0.0;
            let mut accepted = false;
            for _bt in 0..60 {
                for i in 0..n {
                    trial[i] = v[i] - step * grad[i];
                }
                p.project(&mut trial);
                let f_new = al_value(&trial, &mult_aff, &mult_cvx, mu);
                let dist2: f64 =
                    trial.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
                let lin: f64 = trial
                    .iter()
                    .zip(&v)
                    .enumerate()
                    .map(|(i, (a, b))| grad[i] * (a - b))
                    .sum();
                if f_new <= f_cur + lin + dist2 / (2.0 * step) + 1e-12 * f_cur.abs().max(1.0) {
                    moved = dist2.sqrt();
                    v.copy_from_slice(&trial);
                    debug_assert!(
                        f_new <= f_cur + 1e-5 * f_cur.abs().max(1.0),
                        "inner merit increased: {f_cur} -> {f_new}"
                    );
                    f_cur = f_new;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || moved <= tol.optimality * (1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max)) {
                break;
            }
        }

        // multiplier update and feasibility bookkeeping
        let mut viol: f64 = 0.0;
        for (ci, con) in p.affine.iter().enumerate() {
            let g: f64 = con.terms.iter().map(|&(i, c)| c * v[i]).sum::<f64>() - con.rhs;
            if con.equality {
                mult_aff[ci] += mu * g;
                viol = viol.max(g.abs());
            } else {
                mult_aff[ci] = (mult_aff[ci] + mu * g).max(0.0);
                viol = viol.max(g);
            }
        }
        for (ci, con) in p.convex.iter().enumerate() {
            let g = (con.eval)(&v);
            mult_cvx[ci] = (mult_cvx[ci] + mu * g).max(0.0);
            viol = viol.max(g);
        }

        let obj = p.objective_value(&v);
        let better = match &best {
            None => true,
            Some((bviol, bobj, _)) => {
                if viol.max(0.0) <= tol.feasibility && *bviol <= tol.feasibility {
                    obj < *bobj
                } else {
                    viol < *bviol
                }
            }
        };
        if better {
            best = Some((viol.max(0.0), obj, v.clone()));
        }

        // optimal = feasible and the objective settled across outer updates
        if viol <= tol.feasibility
            && (obj - prev_obj).abs() <= tol.optimality * obj.abs().max(1.0)
        {
            settled += 1;
            if settled >= 2 {
                let exact = p.max_violation(&v);
                if exact <= tol.feasibility {
                    return Solution {
                        objective: obj,
                        max_violation: exact,
                        iterations,
                        status: SolveStatus::Optimal,
                        values: v,
                    };
                }
            }
        } else {
            settled = 0;
        }
        prev_obj = obj;
        // grow the penalty only while genuinely infeasible and stalled
        if viol > tol.feasibility && viol > 0.25 * prev_viol {
            if mu >= mu_max {
                stagnant += 1;
                if stagnant >= 5 {
                    let (_, _, bv) = best.unwrap();
                    let exact = p.max_violation(&bv);
                    return Solution {
                        objective: p.objective_value(&bv),
                        max_violation: exact,
                        iterations,
                        status: SolveStatus::Infeasible,
                        values: bv,
                    };
                }
            } else {
                mu = (mu * 10.0).min(mu_max);
            }
        } else if viol <= tol.feasibility {
            stagnant = 0;
        }
        prev_viol = viol;
    }

    let (_, _, bv) = best.unwrap_or((f64::INFINITY, f64::INFINITY, v));
    let exact = p.max_violation(&bv);
    Solution {
        objective: p.objective_value(&bv),
        max_violation: exact,
        iterations,
        status: SolveStatus::MaxIter,
        values: bv,
    }
}
