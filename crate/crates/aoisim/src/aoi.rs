//! AoI dynamics, virtual queues, the Lyapunov drift-plus-penalty objective,
//! and the associated bound checks.
//!
//! Each GU's age advances by one slot unless a fraction of its coverage data
//! is delivered, in which case the age is scaled down by the delivered
//! fraction:
//!
//! ```text
//! a_k(i+1) = (1 − Σ_m β_{m,k} P_m) · (a_k(i) + 1)
//! ```
//!
//! The time-averaged AoI limit `a_max` is enforced through a virtual queue
//! `X_k(i+1) = max(X_k(i) − a_max, 0) + a_k(i+1)` whose mean-rate stability
//! implies the limit. The per-slot control objective maximizes the summed AoI
//! reduction weighted by `(V + X_k)(a_k + 1)`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AoiError {
    #[error("no access events: all counts are zero")]
    NoAccessEvents,
}

/// Per-slot view of the queue state consumed by the optimizer blocks.
#[derive(Debug, Clone)]
pub struct QueueSnapshot {
    /// Current AoI per GU.
    pub aoi: Vec<f64>,
    /// Current virtual queue per GU.
    pub queue: Vec<f64>,
    /// Drift-plus-penalty weight V.
    pub v_weight: f64,
}

impl QueueSnapshot {
    /// Scheduling weight `(V + X_k)(a_k + 1)` of one GU.
    pub fn weight(&self, k: usize) -> f64 {
        (self.v_weight + self.queue[k]) * (self.aoi[k] + 1.0)
    }

    /// Lyapunov value of the current queue vector.
    pub fn lyapunov_value(&self) -> f64 {
        lyapunov(&self.queue)
    }
}

/// One step of the AoI recursion for a single GU. `delivered` is the summed
/// `β_{m,k} P_m` over UAVs, which lies in [0, 1] because each GU is served
/// by at most one UAV.
pub fn update_aoi(aoi: f64, delivered: f64) -> f64 {
    (1.0 - delivered) * (aoi + 1.0)
}

/// One step of the virtual queue recursion.
pub fn update_queue(queue: f64, aoi_next: f64, a_max: f64) -> f64 {
    (queue - a_max).max(0.0) + aoi_next
}

/// Lyapunov function `½ Σ X_k²`.
pub fn lyapunov(queue: &[f64]) -> f64 {
    0.5 * queue.iter().map(|x| x * x).sum::<f64>()
}

/// The per-slot maximization objective: summed AoI reduction of the
/// scheduled GUs weighted by `(V + X_k)(a_k + 1)`.
///
/// `assigned_uav[k]` is the UAV serving GU `k` (if any), `fraction[m]` the
/// delivered fraction of UAV `m`.
pub fn dpp_weighted_objective(
    snapshot: &QueueSnapshot,
    assigned_uav: &[Option<usize>],
    fraction: &[f64],
) -> f64 {
    assigned_uav
        .iter()
        .enumerate()
        .filter_map(|(k, m)| m.map(|m| fraction[m] * snapshot.weight(k)))
        .sum()
}

/// The finite constant bounding the drift-plus-penalty expression given the
/// current queue snapshot; depends only on the snapshot, never on the
/// decision.
pub fn bound_constant_b(snapshot: &QueueSnapshot, a_max: f64) -> f64 {
    let v = snapshot.v_weight;
    snapshot
        .aoi
        .iter()
        .zip(&snapshot.queue)
        .map(|(&a, &x)| {
            0.5 * (a * a + 2.0 * (x + v + 1.0) * a + a_max * a_max + 2.0 * x + 2.0 * v + 1.0)
                - x * a_max
        })
        .sum()
}

/// One observed slot transition used by the drift-bound check. All samples
/// in a batch share the same starting snapshot.
#[derive(Debug, Clone)]
pub struct DriftSample {
    /// Queue vector after the transition.
    pub queue_next: Vec<f64>,
    /// AoI vector after the transition.
    pub aoi_next: Vec<f64>,
    /// Realized per-slot objective `Σ_k Σ_m β P (V+X)(a+1)`.
    pub objective: f64,
}

/// Outcome of [`check_drift_bound`].
#[derive(Debug, Clone)]
pub struct DriftReport {
    /// Empirical mean of `L(X(i+1)) − L(X(i)) + V Σ a_k(i+1)`.
    pub mean_drift_plus_penalty: f64,
    /// `B` minus the empirical mean objective.
    pub bound: f64,
    /// Index of the first sample violating the scalar queue inequality.
    pub first_violation: Option<usize>,
}

/// Scalar inequality behind the drift bound:
/// `(max(x − b, 0) + a)² ≤ x² + a² + b² + 2x(a − b)`.
pub fn queue_square_inequality_holds(x: f64, a: f64, b: f64) -> bool {
    let lhs = {
        let t = (x - b).max(0.0) + a;
        t * t
    };
    let rhs = x * x + a * a + b * b + 2.0 * x * (a - b);
    lhs <= rhs + 1e-9 * rhs.abs().max(1.0)
}

/// Verifies the drift-plus-penalty upper bound on a batch of transitions
/// sharing the same starting snapshot: the per-sample scalar inequality and
/// the empirical-mean bound `E[ΔL + V Σ a'] ≤ B − E[objective]`.
pub fn check_drift_bound(
    snapshot: &QueueSnapshot,
    a_max: f64,
    samples: &[DriftSample],
    mc_tolerance: f64,
) -> DriftReport {
    let l_now = snapshot.lyapunov_value();
    let mut first_violation = None;
    for (i, sample) in samples.iter().enumerate() {
        let ok = snapshot
            .queue
            .iter()
            .zip(&sample.aoi_next)
            .all(|(&x, &a_next)| queue_square_inequality_holds(x, a_next, a_max));
        if !ok && first_violation.is_none() {
            first_violation = Some(i);
        }
    }
    let n = samples.len().max(1) as f64;
    let mean_dpp = samples
        .iter()
        .map(|sm| {
            lyapunov(&sm.queue_next) - l_now
                + snapshot.v_weight * sm.aoi_next.iter().sum::<f64>()
        })
        .sum::<f64>()
        / n;
    let mean_obj = samples.iter().map(|sm| sm.objective).sum::<f64>() / n;
    let bound = bound_constant_b(snapshot, a_max) - mean_obj;
    if mean_dpp > bound + mc_tolerance && first_violation.is_none() {
        first_violation = Some(0);
    }
    DriftReport { mean_drift_plus_penalty: mean_dpp, bound, first_violation }
}

/// Jain's fairness index `(Σ n_k)² / (K Σ n_k²)` over per-GU access counts.
pub fn fairness_index(counts: &[u64]) -> Result<f64, AoiError> {
    let sum: f64 = counts.iter().map(|&n| n as f64).sum();
    if sum == 0.0 {
        return Err(AoiError::NoAccessEvents);
    }
    let sum_sq: f64 = counts.iter().map(|&n| (n as f64) * (n as f64)).sum();
    Ok(sum * sum / (counts.len() as f64 * sum_sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aoi_update_branches() {
        assert_eq!(update_aoi(5.0, 0.0), 6.0); // unscheduled
        assert_eq!(update_aoi(5.0, 0.5), 3.0); // half delivered
        assert_eq!(update_aoi(5.0, 1.0), 0.0); // full delivery drops to zero
    }

    #[test]
    fn queue_update_branches() {
        assert_eq!(update_queue(10.0, 3.0, 15.0), 3.0); // clipped branch
        assert_eq!(update_queue(20.0, 3.0, 15.0), 8.0); // linear branch
        assert_eq!(update_queue(0.0, 0.0, 15.0), 0.0); // fixed point
    }

    #[test]
    fn lyapunov_values() {
        assert_eq!(lyapunov(&[3.0, 4.0]), 12.5);
        assert_eq!(lyapunov(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn weighted_objective_single_term() {
        let snap = QueueSnapshot { aoi: vec![2.0], queue: vec![3.0], v_weight: 100.0 };
        let obj = dpp_weighted_objective(&snap, &[Some(0)], &[0.5]);
        assert!((obj - 154.5).abs() < 1e-12);
        // no schedule ⇒ zero
        assert_eq!(dpp_weighted_objective(&snap, &[None], &[0.5]), 0.0);
    }

    #[test]
    fn weighted_objective_symmetric_under_gu_swap() {
        let snap =
            QueueSnapshot { aoi: vec![4.0, 4.0], queue: vec![2.0, 2.0], v_weight: 10.0 };
        let a = dpp_weighted_objective(&snap, &[Some(0), Some(1)], &[0.3, 0.3]);
        let b = dpp_weighted_objective(&snap, &[Some(1), Some(0)], &[0.3, 0.3]);
        assert_eq!(a, b);
    }

    #[test]
    fn bound_constant_direct_evaluation() {
        // K=1, a=2, X=3, V=100, a_max=15 ⇒ ½(4+416+225+6+200+1) − 45 = 381
        let snap = QueueSnapshot { aoi: vec![2.0], queue: vec![3.0], v_weight: 100.0 };
        assert!((bound_constant_b(&snap, 15.0) - 381.0).abs() < 1e-12);
    }

    #[test]
    fn bound_constant_zero_case_and_additivity() {
        let zero = QueueSnapshot { aoi: vec![0.0], queue: vec![0.0], v_weight: 0.0 };
        assert_eq!(bound_constant_b(&zero, 0.0), 0.5);
        let one = QueueSnapshot { aoi: vec![2.0], queue: vec![3.0], v_weight: 50.0 };
        let two = QueueSnapshot {
            aoi: vec![2.0, 2.0],
            queue: vec![3.0, 3.0],
            v_weight: 50.0,
        };
        assert!((2.0 * bound_constant_b(&one, 15.0) - bound_constant_b(&two, 15.0)).abs() < 1e-12);
    }

    #[test]
    fn scalar_inequality_examples() {
        // X=2, b=1, a=3 ⇒ LHS 16 ≤ RHS 22
        assert!(queue_square_inequality_holds(2.0, 3.0, 1.0));
        // equality case
        assert!(queue_square_inequality_holds(0.0, 0.0, 0.0));
    }

    #[test]
    fn scalar_inequality_fuzz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        for _ in 0..100_000 {
            let x = rng.gen::<f64>() * 100.0;
            let a = rng.gen::<f64>() * 100.0;
            let b = rng.gen::<f64>() * 100.0;
            assert!(queue_square_inequality_holds(x, a, b), "violated at ({x}, {a}, {b})");
        }
    }

    #[test]
    fn drift_bound_holds_on_simulated_batch() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let snap = QueueSnapshot {
            aoi: vec![3.0, 7.0, 1.0],
            queue: vec![2.0, 9.0, 0.0],
            v_weight: 100.0,
        };
        let a_max = 15.0;
        let samples: Vec<DriftSample> = (0..500)
            .map(|_| {
                let delivered: Vec<f64> =
                    (0..3).map(|_| if rng.gen::<f64>() < 0.5 { rng.gen::<f64>() } else { 0.0 }).collect();
                let aoi_next: Vec<f64> = snap
                    .aoi
                    .iter()
                    .zip(&delivered)
                    .map(|(&a, &p)| update_aoi(a, p))
                    .collect();
                let queue_next: Vec<f64> = snap
                    .queue
                    .iter()
                    .zip(&aoi_next)
                    .map(|(&x, &a)| update_queue(x, a, a_max))
                    .collect();
                let objective = delivered
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| p * snap.weight(k))
                    .sum();
                DriftSample { queue_next, aoi_next, objective }
            })
            .collect();
        let report = check_drift_bound(&snap, a_max, &samples, 1e-9);
        assert!(report.first_violation.is_none(), "{report:?}");
        assert!(report.mean_drift_plus_penalty <= report.bound + 1e-9);
    }

    #[test]
    fn fairness_examples() {
        assert_eq!(fairness_index(&[2, 2, 2]).unwrap(), 1.0);
        assert!((fairness_index(&[6, 0, 0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((fairness_index(&[1, 2, 3]).unwrap() - 36.0 / 42.0).abs() < 1e-15);
        assert!(fairness_index(&[0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn aoi_update_stays_in_range(aoi in 0.0..1e6f64, p in 0.0..=1.0f64) {
            let next = update_aoi(aoi, p);
            prop_assert!(next >= 0.0);
            prop_assert!(next <= aoi + 1.0);
        }

        #[test]
        fn queue_update_monotone(x1 in 0.0..1e6f64, x2 in 0.0..1e6f64,
                                 a1 in 0.0..1e6f64, a2 in 0.0..1e6f64,
                                 a_max in 0.0..100.0f64) {
            let (xl, xh) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            let (al, ah) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            prop_assert!(update_queue(xl, al, a_max) <= update_queue(xh, al, a_max));
            prop_assert!(update_queue(xl, al, a_max) <= update_queue(xl, ah, a_max));
        }

        #[test]
        fn objective_linear_in_fraction(p in 0.0..=1.0f64, w in 0.0..1e4f64) {
            // maximizing the fraction never decreases the objective
            let snap = QueueSnapshot { aoi: vec![w], queue: vec![0.0], v_weight: 1.0 };
            let one = dpp_weighted_objective(&snap, &[Some(0)], &[p]);
            let two = dpp_weighted_objective(&snap, &[Some(0)], &[(p + 0.1).min(1.0)]);
            prop_assert!(two + 1e-12 >= one);
        }
    }
}
