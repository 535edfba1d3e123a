//! Per-slot beamforming block: a penalized semidefinite program driven to
//! rank-one solutions, iterated with successive convex approximation.
//!
//! The beamformer outer products `W = w wᴴ` relax to Hermitian PSD matrices
//! with `Tr(W) ≤ 1`; instead of dropping the rank constraint and rounding,
//! the objective carries a penalty `κ·(Tr(W) − λmax(W))` that vanishes
//! exactly on rank-one matrices. The penalty is linearized around the
//! current leading eigenvector, the nonconvex forwarding-capacity coupling
//! is linearized by tangent over-estimators `E` and `F`, and the penalty
//! factor grows geometrically until the residual `Σ|χ|` is negligible.
//! Complex Hermitian blocks are handled through their real symmetric
//! embedding of dimension 2N.

use crate::channel::ChannelSet;
use crate::linkmodel::TimeSplit;
use crate::scenario::Scenario;
use crate::solver::{solve, BlockId, ConvexCon, ConvexProgram, SolveStatus, Tolerances};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Affine function of a slack vector: `constant + Σ coeffs[i]·x[i]`.
#[derive(Debug, Clone)]
pub struct AffineOnVars {
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl AffineOnVars {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Tangent of the sensing rate `log2(1 + Σ c_m·x_m)` at `x_tau`: exact at
/// the expansion point and a global over-estimator (the rate is concave in
/// the slack vector). A uniform coefficient vector reproduces the
/// single-gain form `log2(1 + e·Σ x_m)`.
pub fn linearize_sensing_rate(coefs: &[f64], x_tau: &[f64]) -> AffineOnVars {
    let gamma_tau: f64 = coefs.iter().zip(x_tau).map(|(c, x)| c * x).sum();
    let denom = std::f64::consts::LN_2 * (1.0 + gamma_tau);
    let coeffs: Vec<f64> = coefs.iter().map(|c| c / denom).collect();
    AffineOnVars {
        constant: (1.0 + gamma_tau).log2()
            - coeffs.iter().zip(x_tau).map(|(s, x)| s * x).sum::<f64>(),
        coeffs,
    }
}

/// Tangent of the next-decoded interference rate
/// `log2(1 + Σ_{j ∈ later} c_j·y_j)` at `y_tau`; `later` indexes the UAVs
/// decoded after the current one (empty for the last, where the function is
/// identically zero).
pub fn linearize_interference_rate(coefs: &[f64], y_tau: &[f64], later: &[usize]) -> AffineOnVars {
    let gamma_tau: f64 = later.iter().map(|&j| coefs[j] * y_tau[j]).sum();
    let denom = std::f64::consts::LN_2 * (1.0 + gamma_tau);
    let mut coeffs = vec![0.0; y_tau.len()];
    let mut constant = (1.0 + gamma_tau).log2();
    for &j in later {
        coeffs[j] = coefs[j] / denom;
        constant -= coeffs[j] * y_tau[j];
    }
    AffineOnVars { constant, coeffs }
}

/// Real symmetric embedding of a complex vector: `[Re h; Im h]`, so that
/// `hᴴ W h = uᵀ E(W) u` for Hermitian `W`.
pub fn embed_vector(h: &DVector<Complex64>) -> DVector<f64> {
    let n = h.len();
    DVector::from_fn(2 * n, |i, _| if i < n { h[i].re } else { h[i - n].im })
}

/// Real symmetric embedding `[[Re W, −Im W], [Im W, Re W]]` of a Hermitian
/// matrix; eigenvalues are preserved (with doubled multiplicity) and
/// `Tr E = 2·Tr W`.
pub fn embed_matrix(w: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = w.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (rr, cc) = (r % n, c % n);
        match (r < n, c < n) {
            (true, true) | (false, false) => w[(rr, cc)].re,
            (true, false) => -w[(rr, cc)].im,
            (false, true) => w[(rr, cc)].im,
        }
    })
}

/// Inverse of [`embed_vector`] up to the complex phase: `w = p + iq`.
pub fn unembed_vector(u: &DVector<f64>) -> DVector<Complex64> {
    let n = u.len() / 2;
    DVector::from_fn(n, |i, _| Complex64::new(u[i], u[i + n]))
}

/// Quadratic form `uᵀ E u` over a row-major matrix block stored in the flat
/// variable vector at `off`.
fn quadform(v: &[f64], off: usize, u: &DVector<f64>) -> f64 {
    let d = u.len();
    let mut acc = 0.0;
    for r in 0..d {
        let ur = u[r];
        if ur != 0.0 {
            let row = &v[off + r * d..off + (r + 1) * d];
            let mut inner = 0.0;
            for c in 0..d {
                inner += u[c] * row[c];
            }
            acc += ur * inner;
        }
    }
    acc
}

fn leading_eigpair(e: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let sym = (e + e.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut best = 0usize;
    for j in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[j] > eig.eigenvalues[best] {
            best = j;
        }
    }
    let v = eig.eigenvectors.column(best).into_owned();
    (eig.eigenvalues[best], v)
}

/// Rank-one penalty of an embedded block: `χ = Tr(W) − λmax(W)`
/// (= ½·Tr E − λmax E). Nonnegative for every Hermitian PSD matrix and zero
/// exactly on rank-one matrices.
pub fn rank_one_penalty(e: &DMatrix<f64>) -> f64 {
    let (lmax, _) = leading_eigpair(e);
    0.5 * e.trace() - lmax
}

/// Fixed problem data for one beamforming solve.
pub struct BeamInstance<'a> {
    pub scenario: &'a Scenario,
    pub channels: &'a ChannelSet,
    pub access: &'a [Vec<bool>],
    pub time: &'a [TimeSplit],
    /// Objective coefficient per UAV: scheduled weight sum over coverage
    /// bits, zero when the coverage holds no data.
    pub weights: Vec<f64>,
    /// NOMA decode order fixed for this solve (ascending incumbent data).
    pub order: Vec<usize>,
}

impl<'a> BeamInstance<'a> {
    /// Sensing-rate coefficient of link (m, k): `p·|Γ|²·‖h‖²/σ`.
    fn sensing_coef(&self, m: usize, k: usize) -> f64 {
        let s = self.scenario;
        s.tx_power * s.reflection_coeff.norm_sqr() * self.channels.to_gu(m, k).norm_squared()
            / s.noise_power
    }

    /// Forwarding power coefficient `p/σ` applied to the y slacks.
    fn forward_coef(&self) -> f64 {
        self.scenario.tx_power / self.scenario.noise_power
    }

    /// SNR coefficients of the normalized carrier slacks for link (m, k):
    /// `γ_{m,k} = Σ_{m'} coefs[m']·x̃_{m',k}` with `x̃ = |ĥᴴw|² ∈ [0, 1]`.
    fn sensing_coefs(&self, m: usize, k: usize) -> Vec<f64> {
        let e = self.sensing_coef(m, k);
        (0..self.scenario.num_uavs)
            .map(|m2| e * self.channels.to_gu(m2, k).norm_squared())
            .collect()
    }

    /// Coefficients of the normalized forwarding slacks:
    /// `γ_{m,0} = Σ_{m' ⪰ m} coefs[m']·ỹ_{m'}`.
    fn forward_coefs(&self) -> Vec<f64> {
        (0..self.scenario.num_uavs)
            .map(|m| self.forward_coef() * self.channels.to_bs(m).norm_squared())
            .collect()
    }

    /// Embedded unit direction of the UAV-GU channel.
    fn unit_gu(&self, m: usize, k: usize) -> DVector<f64> {
        let h = self.channels.to_gu(m, k);
        let n = h.norm().max(1e-300);
        embed_vector(&h.map(|c| c / Complex64::new(n, 0.0)))
    }

    /// Embedded unit direction of the UAV-BS channel.
    fn unit_bs(&self, m: usize) -> DVector<f64> {
        let h = self.channels.to_bs(m);
        let n = h.norm().max(1e-300);
        embed_vector(&h.map(|c| c / Complex64::new(n, 0.0)))
    }

    fn scheduled_by(&self, m: usize) -> Vec<usize> {
        (0..self.scenario.num_gus).filter(|&k| self.access[m][k]).collect()
    }

    fn scheduled_any(&self) -> Vec<usize> {
        (0..self.scenario.num_gus)
            .filter(|&k| (0..self.scenario.num_uavs).any(|m| self.access[m][k]))
            .collect()
    }

    /// UAVs decoded after `m` in the fixed order.
    fn later_than(&self, m: usize) -> Vec<usize> {
        let pos = self.order.iter().position(|&j| j == m).unwrap();
        self.order[pos + 1..].to_vec()
    }
}

/// Current SCA expansion state of the beamforming loop.
#[derive(Debug, Clone)]
pub struct BeamIterate {
    /// Embedded sensing matrices (2N×2N).
    pub w_s: Vec<DMatrix<f64>>,
    /// Embedded forwarding matrices.
    pub w_t: Vec<DMatrix<f64>>,
    /// Expansion slacks `x̃_{m,k} = |ĥᴴ w_s|²` per GU (indexed `[k][m]`).
    pub x_tau: Vec<Vec<f64>>,
    /// Expansion slacks `ỹ_m = |ĥ₀ᴴ w_t|²`.
    pub y_tau: Vec<f64>,
    /// Unit leading eigenvectors anchoring the penalty linearization.
    pub eig_s: Vec<DVector<f64>>,
    /// Same for the forwarding blocks.
    pub eig_t: Vec<DVector<f64>>,
    /// Current penalty factor κ.
    pub kappa: f64,
}

impl BeamIterate {
    /// Builds the expansion state from rank-one beamformers.
    pub fn from_beams(
        inst: &BeamInstance,
        sense: &[DVector<Complex64>],
        forward: &[DVector<Complex64>],
        kappa: f64,
    ) -> Self {
        let scen = inst.scenario;
        let outer = |w: &DVector<Complex64>| -> DMatrix<f64> {
            let mat = w * w.adjoint();
            embed_matrix(&mat)
        };
        let w_s: Vec<_> = sense.iter().map(outer).collect();
        let w_t: Vec<_> = forward.iter().map(outer).collect();
        let x_tau = (0..scen.num_gus)
            .map(|k| {
                (0..scen.num_uavs)
                    .map(|m| {
                        let h = inst.channels.to_gu(m, k);
                        h.dotc(&sense[m]).norm_sqr() / h.norm_squared().max(1e-300)
                    })
                    .collect()
            })
            .collect();
        let y_tau = (0..scen.num_uavs)
            .map(|m| {
                let h = inst.channels.to_bs(m);
                h.dotc(&forward[m]).norm_sqr() / h.norm_squared().max(1e-300)
            })
            .collect();
        let anchor = |w: &DVector<Complex64>, e: &DMatrix<f64>| -> DVector<f64> {
            if w.norm() > 1e-12 {
                embed_vector(&w.map(|c| c / Complex64::new(w.norm(), 0.0)))
            } else {
                let (_, v) = leading_eigpair(e);
                v
            }
        };
        let eig_s = sense.iter().zip(&w_s).map(|(w, e)| anchor(w, e)).collect();
        let eig_t = forward.iter().zip(&w_t).map(|(w, e)| anchor(w, e)).collect();
        BeamIterate { w_s, w_t, x_tau, y_tau, eig_s, eig_t, kappa }
    }
}

/// Index map of the program built by [`build_penalized_sdp`].
pub struct BeamProgramMap {
    pub es_blocks: Vec<BlockId>,
    pub et_blocks: Vec<BlockId>,
    /// Flat index of `x_{m,k}` for scheduled GUs (`[k][m]`, dense over the
    /// scheduled set).
    pub x_index: Vec<Option<Vec<usize>>>,
    pub y_index: Vec<usize>,
    pub s_index: Vec<usize>,
    /// GUs scheduled by anyone, in ascending order.
    pub scheduled: Vec<usize>,
}

/// Builds the penalized SDP for the current expansion point.
///
/// Constraints: slack-link inequalities `x ≥ hᴴW_s h` and `y ≥ h₀ᴴW_t h₀`,
/// the concave sensing-capacity bound on `s_m`, the SCA forwarding bound
/// tying the scheduled sensing load to the NOMA rate, and trace/PSD bounds
/// on every matrix block. The objective is the weighted AoI reduction minus
/// the linearized rank-one penalty.
pub fn build_penalized_sdp(
    inst: &BeamInstance,
    iterate: &BeamIterate,
) -> (ConvexProgram, BeamProgramMap) {
    let scen = inst.scenario;
    let m_count = scen.num_uavs;
    let dim = 2 * scen.num_antennas;
    let mut p = ConvexProgram::new();

    let es_blocks: Vec<BlockId> =
        (0..m_count).map(|_| p.add_psd_embedded(dim, Some(2.0))).collect();
    let et_blocks: Vec<BlockId> =
        (0..m_count).map(|_| p.add_psd_embedded(dim, Some(2.0))).collect();
    let scheduled = inst.scheduled_any();
    let mut x_index: Vec<Option<Vec<usize>>> = vec![None; scen.num_gus];
    for &k in &scheduled {
        let blk = p.add_scalars(vec![0.0; m_count], vec![f64::INFINITY; m_count]);
        x_index[k] = Some((0..m_count).map(|m| p.index(blk, m)).collect());
    }
    let y_blk = p.add_scalars(vec![0.0; m_count], vec![f64::INFINITY; m_count]);
    let y_index: Vec<usize> = (0..m_count).map(|m| p.index(y_blk, m)).collect();
    let s_blk = p.add_scalars(vec![0.0; m_count], vec![f64::INFINITY; m_count]);
    let s_index: Vec<usize> = (0..m_count).map(|m| p.index(s_blk, m)).collect();

    // objective: maximize Σ α_m s_m − κ Σ (χ_m + χ̃_m), linearized penalty
    // χ = ½·Tr E − vᵀ E v  (v = unit leading eigenvector of the expansion)
    let mut obj: Vec<(usize, f64)> = Vec::new();
    for m in 0..m_count {
        if inst.weights[m] != 0.0 {
            obj.push((s_index[m], -inst.weights[m]));
        }
        for (blocks, anchors) in [(&es_blocks, &iterate.eig_s), (&et_blocks, &iterate.eig_t)] {
            let v = &anchors[m];
            for r in 0..dim {
                for c in 0..dim {
                    let mut coef = -v[r] * v[c];
                    if r == c {
                        coef += 0.5;
                    }
                    if coef != 0.0 {
                        obj.push((p.mat_index(blocks[m], r, c), iterate.kappa * coef));
                    }
                }
            }
        }
    }
    p.set_objective(obj);

    // x̃_{m,k} ≥ ĥᴴ W_s ĥ for every scheduled GU and every carrier UAV
    for &k in &scheduled {
        for m in 0..m_count {
            let u = inst.unit_gu(m, k);
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(dim * dim + 1);
            for r in 0..dim {
                for c in 0..dim {
                    terms.push((p.mat_index(es_blocks[m], r, c), u[r] * u[c]));
                }
            }
            terms.push((x_index[k].as_ref().unwrap()[m], -1.0));
            p.add_affine_ineq(terms, 0.0);
        }
    }
    // ỹ_m ≥ ĥ₀ᴴ W_t ĥ₀
    for m in 0..m_count {
        let u = inst.unit_bs(m);
        let mut terms: Vec<(usize, f64)> = Vec::with_capacity(dim * dim + 1);
        for r in 0..dim {
            for c in 0..dim {
                terms.push((p.mat_index(et_blocks[m], r, c), u[r] * u[c]));
            }
        }
        terms.push((y_index[m], -1.0));
        p.add_affine_ineq(terms, 0.0);
    }

    // sensing capacity: s_m ≤ Σ_k t_mini · log2(1 + Σ_m' c_{m,k,m'}·ĥᴴW_s ĥ)
    for m in 0..m_count {
        let sched = inst.scheduled_by(m);
        if sched.is_empty() {
            // nothing scheduled: s_m pinned to zero
            p.add_affine_ineq(vec![(s_index[m], 1.0)], 0.0);
            continue;
        }
        let mini = scen.mini_slot;
        let s_flat = s_index[m];
        let link_data: Vec<(Vec<f64>, Vec<DVector<f64>>)> = sched
            .iter()
            .map(|&k| {
                let coefs = inst.sensing_coefs(m, k);
                let quads: Vec<DVector<f64>> =
                    (0..m_count).map(|m2| inst.unit_gu(m2, k)).collect();
                (coefs, quads)
            })
            .collect();
        let offsets: Vec<usize> = es_blocks.iter().map(|&b| p.mat_index(b, 0, 0)).collect();
        let offsets_eval = offsets.clone();
        let link_eval = link_data.clone();
        p.add_convex(ConvexCon {
            eval: Box::new(move |v| {
                let mut bound = 0.0;
                for (coefs, quads) in &link_eval {
                    let gamma: f64 = quads
                        .iter()
                        .enumerate()
                        .map(|(m2, u)| coefs[m2] * quadform(v, offsets_eval[m2], u))
                        .sum();
                    bound += mini * (1.0 + gamma).log2();
                }
                v[s_flat] - bound
            }),
            grad: Box::new(move |v, g| {
                g[s_flat] += 1.0;
                for (coefs, quads) in &link_data {
                    let gamma: f64 = quads
                        .iter()
                        .enumerate()
                        .map(|(m2, u)| coefs[m2] * quadform(v, offsets[m2], u))
                        .sum();
                    let base = -mini / (std::f64::consts::LN_2 * (1.0 + gamma));
                    for (m2, u) in quads.iter().enumerate() {
                        let scale = base * coefs[m2];
                        let d = u.len();
                        let off = offsets[m2];
                        for r in 0..d {
                            let ur = u[r];
                            if ur != 0.0 {
                                for c in 0..d {
                                    g[off + r * d + c] += scale * ur * u[c];
                                }
                            }
                        }
                    }
                }
            }),
        });
    }

    // forwarding bound per UAV with scheduled load:
    // Σ_k t_mini·E(x̃_{·,k}) ≤ t_r·( log2(1 + Σ_{m' ⪰ m} c_m'·ỹ) − F(ỹ) )
    let y_coefs = inst.forward_coefs();
    for m in 0..m_count {
        let sched = inst.scheduled_by(m);
        if sched.is_empty() {
            continue;
        }
        let t_r = inst.time[m].forward;
        let mini = scen.mini_slot;
        let e_lins: Vec<(Vec<usize>, AffineOnVars)> = sched
            .iter()
            .map(|&k| {
                let lin = linearize_sensing_rate(&inst.sensing_coefs(m, k), &iterate.x_tau[k]);
                (x_index[k].as_ref().unwrap().clone(), lin)
            })
            .collect();
        let later = inst.later_than(m);
        let f_lin = linearize_interference_rate(&y_coefs, &iterate.y_tau, &later);
        let own_and_later: Vec<usize> = {
            let mut v = later.clone();
            v.push(m);
            v
        };
        let y_idx = y_index.clone();
        let own1 = own_and_later.clone();
        let y_idx1 = y_idx.clone();
        let f_lin1 = f_lin.clone();
        let e_lins1 = e_lins.clone();
        let yc = y_coefs.clone();
        let yc1 = y_coefs.clone();
        p.add_convex(ConvexCon {
            eval: Box::new(move |v| {
                let mut lhs = 0.0;
                for (idx, lin) in &e_lins1 {
                    let x: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
                    lhs += mini * lin.eval(&x);
                }
                let y: Vec<f64> = y_idx1.iter().map(|&i| v[i]).collect();
                let own_power: f64 = own1.iter().map(|&j| yc1[j] * y[j]).sum();
                let rate = (1.0 + own_power).log2() - f_lin1.eval(&y);
                lhs - t_r * rate
            }),
            grad: Box::new(move |v, g| {
                for (idx, lin) in &e_lins {
                    for (i, &flat) in idx.iter().enumerate() {
                        g[flat] += mini * lin.coeffs[i];
                    }
                }
                let y: Vec<f64> = y_idx.iter().map(|&i| v[i]).collect();
                let own_power: f64 = own_and_later.iter().map(|&j| yc[j] * y[j]).sum();
                let denom = std::f64::consts::LN_2 * (1.0 + own_power);
                for &j in &own_and_later {
                    g[y_idx[j]] -= t_r * yc[j] / denom;
                }
                for (j, &c) in f_lin.coeffs.iter().enumerate() {
                    if c != 0.0 {
                        g[y_idx[j]] += t_r * c;
                    }
                }
            }),
        });
    }

    (p, BeamProgramMap { es_blocks, et_blocks, x_index, y_index, s_index, scheduled })
}

/// Result of one beamforming block solve.
#[derive(Debug, Clone)]
pub struct BeamformOutcome {
    pub sense_beams: Vec<DVector<Complex64>>,
    pub forward_beams: Vec<DVector<Complex64>>,
    /// Weighted-AoI-reduction value per accepted iteration.
    pub objective_trace: Vec<f64>,
    /// Final rank-one residual Σ_m |χ_m + χ̃_m| of the returned matrices.
    pub chi_final: f64,
    /// Relative objective loss of the rank-one extraction vs the matrix
    /// solution.
    pub extraction_loss: f64,
    /// Set when the solver failed and the warm-start beams were returned.
    pub fallback: bool,
}

/// Penalty growth factor (`c` > 1) and rank-one residual target Δ.
const PENALTY_GROWTH: f64 = 10.0;
const PENALTY_TARGET: f64 = 1e-12;
/// Objective stall threshold ε and iteration cap of the penalty loop.
const BEAM_EPSILON: f64 = 1e-2;
const BEAM_MAX_ITERS: usize = 15;

/// Canonical warm start: unit-axis direction scaled by `min(1, √(p/M))`, the
/// norm clip keeping the beam inside the feasible ball.
pub fn initial_beams(s: &Scenario) -> Vec<DVector<Complex64>> {
    let scale = (s.tx_power / s.num_uavs as f64).sqrt().min(1.0);
    (0..s.num_uavs)
        .map(|_| {
            let mut v = DVector::from_element(s.num_antennas, Complex64::new(0.0, 0.0));
            v[0] = Complex64::new(scale, 0.0);
            v
        })
        .collect()
}

/// Unpenalized objective value `Σ α_m s_m` at fixed rank-one beams, with
/// `s_m` capped by both the sensing capacity and the forwarding rate
/// evaluated at those beams.
fn objective_at_beams(
    inst: &BeamInstance,
    sense: &[DVector<Complex64>],
    forward: &[DVector<Complex64>],
) -> f64 {
    let scen = inst.scenario;
    let p_coef = inst.forward_coef();
    let y: Vec<f64> = (0..scen.num_uavs)
        .map(|m| inst.channels.to_bs(m).dotc(&forward[m]).norm_sqr())
        .collect();
    let mut total = 0.0;
    for m in 0..scen.num_uavs {
        if inst.weights[m] == 0.0 {
            continue;
        }
        let sched = inst.scheduled_by(m);
        if sched.is_empty() {
            continue;
        }
        let sensing: f64 = sched
            .iter()
            .map(|&k| {
                let x_sum: f64 = (0..scen.num_uavs)
                    .map(|m2| inst.channels.to_gu(m2, k).dotc(&sense[m2]).norm_sqr())
                    .sum();
                scen.mini_slot * (1.0 + inst.sensing_coef(m, k) * x_sum).log2()
            })
            .sum();
        let later = inst.later_than(m);
        let own: f64 = y[m] + later.iter().map(|&j| y[j]).sum::<f64>();
        let interf: f64 = later.iter().map(|&j| y[j]).sum();
        let rate = inst.time[m].forward
            * ((1.0 + p_coef * own).log2() - (1.0 + p_coef * interf).log2());
        total += inst.weights[m] * sensing.min(rate.max(0.0));
    }
    total
}

/// Eigenvector extraction of one embedded block: `w = √λmax · v`, clipped
/// into the unit ball.
fn extract_beam(e: &DMatrix<f64>) -> DVector<Complex64> {
    let dim = e.nrows();
    let (lmax, v) = leading_eigpair(e);
    if lmax <= 0.0 {
        return DVector::from_element(dim / 2, Complex64::new(0.0, 0.0));
    }
    let mut w = unembed_vector(&v);
    let scale = lmax.sqrt().min(1.0) / w.norm();
    w.iter_mut().for_each(|c| *c *= scale);
    let mut norm = w.norm();
    while norm > 1.0 {
        w.iter_mut().for_each(|c| *c *= 1.0 - 1e-15);
        norm = w.norm();
    }
    w
}

/// The penalty loop: solve the penalized SDP, grow κ while the rank-one
/// residual exceeds Δ, extract a rank-one candidate from every iterate, and
/// return the best candidate found. The recorded trace is the incumbent
/// (best extractable) objective, which the loop's stall test reads.
pub fn algorithm1(
    inst: &BeamInstance,
    warm_sense: Option<&[DVector<Complex64>]>,
    warm_forward: Option<&[DVector<Complex64>]>,
) -> BeamformOutcome {
    let scen = inst.scenario;
    let m_count = scen.num_uavs;
    let dim = 2 * scen.num_antennas;
    let init_beams = initial_beams(scen);
    let sense0: Vec<DVector<Complex64>> =
        warm_sense.map(|w| w.to_vec()).unwrap_or_else(|| init_beams.clone());
    let forward0: Vec<DVector<Complex64>> =
        warm_forward.map(|w| w.to_vec()).unwrap_or_else(|| init_beams.clone());

    if inst.weights.iter().all(|&a| a == 0.0) {
        // nothing to optimize this slot
        return BeamformOutcome {
            sense_beams: sense0,
            forward_beams: forward0,
            objective_trace: vec![0.0],
            chi_final: 0.0,
            extraction_loss: 0.0,
            fallback: false,
        };
    }

    let mut iterate = BeamIterate::from_beams(inst, &sense0, &forward0, 1.0);
    let mut trace: Vec<f64> = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut best_beams = (sense0.clone(), forward0.clone());
    let mut best_obj = objective_at_beams(inst, &sense0, &forward0);
    let mut matrix_obj = f64::NEG_INFINITY;
    let mut solved_any = false;

    let tol = Tolerances { max_inner: 300, max_outer: 60, ..Default::default() };
    for tau in 0..BEAM_MAX_ITERS {
        let (program, map) = build_penalized_sdp(inst, &iterate);
        // seed from the expansion point so the log slopes start in
        // well-conditioned territory
        let start = warm.clone().unwrap_or_else(|| {
            let mut v0 = vec![0.0; program.num_vars()];
            for m in 0..m_count {
                let off_s = program.mat_index(map.es_blocks[m], 0, 0);
                let off_t = program.mat_index(map.et_blocks[m], 0, 0);
                for r in 0..dim {
                    for c in 0..dim {
                        v0[off_s + r * dim + c] = iterate.w_s[m][(r, c)];
                        v0[off_t + r * dim + c] = iterate.w_t[m][(r, c)];
                    }
                }
                v0[map.y_index[m]] = iterate.y_tau[m];
            }
            for &k in &map.scheduled {
                let idx = map.x_index[k].as_ref().unwrap();
                for m in 0..m_count {
                    v0[idx[m]] = iterate.x_tau[k][m];
                }
            }
            v0
        });
        let sol = solve(&program, Some(&start), &tol);
        if sol.status == SolveStatus::Infeasible {
            break;
        }
        solved_any = true;
        warm = Some(sol.values.clone());
        let read_mat = |block: BlockId| -> DMatrix<f64> {
            let off = program.mat_index(block, 0, 0);
            let raw = DMatrix::from_row_slice(dim, dim, &sol.values[off..off + dim * dim]);
            (&raw + raw.transpose()) * 0.5
        };
        let mats_s: Vec<DMatrix<f64>> = map.es_blocks.iter().map(|&b| read_mat(b)).collect();
        let mats_t: Vec<DMatrix<f64>> = map.et_blocks.iter().map(|&b| read_mat(b)).collect();
        let unpenalized: f64 = (0..m_count)
            .map(|m| inst.weights[m] * sol.values[map.s_index[m]])
            .sum();
        matrix_obj = matrix_obj.max(unpenalized);
        let chi_sum: f64 = mats_s
            .iter()
            .chain(mats_t.iter())
            .map(|e| rank_one_penalty(e).abs())
            .sum();

        // rank-one candidate from the current matrices
        let cand_s: Vec<DVector<Complex64>> = mats_s.iter().map(extract_beam).collect();
        let cand_t: Vec<DVector<Complex64>> = mats_t.iter().map(extract_beam).collect();
        let cand_obj = objective_at_beams(inst, &cand_s, &cand_t);
        if cand_obj >= best_obj {
            best_obj = cand_obj;
            best_beams = (cand_s, cand_t);
        }
        trace.push(best_obj);

        // re-expand at the solved point
        let mut next = iterate.clone();
        for &k in &map.scheduled {
            let idx = map.x_index[k].as_ref().unwrap();
            next.x_tau[k] = idx.iter().map(|&i| sol.values[i].max(0.0)).collect();
        }
        next.y_tau = map.y_index.iter().map(|&i| sol.values[i].max(0.0)).collect();
        let restart_anchor = || {
            // degenerate expansion: restart the anchor from an
            // identity-scaled block so the penalty stays well defined
            let scale = 1.0 / scen.num_antennas as f64;
            let id = DMatrix::identity(dim, dim) * scale;
            leading_eigpair(&id).1
        };
        for m in 0..m_count {
            let (lmax, v) = leading_eigpair(&mats_s[m]);
            next.eig_s[m] = if lmax > 1e-12 { v } else { restart_anchor() };
            let (lmax, v) = leading_eigpair(&mats_t[m]);
            next.eig_t[m] = if lmax > 1e-12 { v } else { restart_anchor() };
        }
        next.w_s = mats_s;
        next.w_t = mats_t;
        if chi_sum > PENALTY_TARGET {
            next.kappa = iterate.kappa * PENALTY_GROWTH;
        }
        let kappa_now = iterate.kappa;
        iterate = next;

        let stalled = tau > 0
            && (trace[tau] - trace[tau - 1]).abs() <= BEAM_EPSILON
            && (chi_sum <= 1e-7 || kappa_now >= 1e8);
        if stalled {
            break;
        }
    }

    if !solved_any {
        return BeamformOutcome {
            sense_beams: sense0,
            forward_beams: forward0,
            objective_trace: if trace.is_empty() { vec![0.0] } else { trace },
            chi_final: f64::INFINITY,
            extraction_loss: f64::INFINITY,
            fallback: true,
        };
    }

    let (sense_beams, forward_beams) = best_beams;
    let extraction_loss = if matrix_obj.abs() > 1e-12 {
        ((matrix_obj - best_obj) / matrix_obj).max(0.0)
    } else {
        0.0
    };

    // the returned point is the extracted rank-one candidate, so its
    // residual is zero up to eigensolver noise
    let chi_final: f64 = sense_beams
        .iter()
        .chain(forward_beams.iter())
        .map(|w| {
            let mat = w * w.adjoint();
            rank_one_penalty(&embed_matrix(&mat)).abs()
        })
        .sum();

    BeamformOutcome {
        sense_beams,
        forward_beams,
        objective_trace: trace,
        chi_final,
        extraction_loss,
        fallback: false,
    }
}
