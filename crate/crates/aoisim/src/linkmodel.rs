//! Backscatter sensing SNR/capacity, NOMA forwarding rates, and feasibility
//! checks for a candidate per-slot decision.
//!
//! Sensing SNR for a scheduled GU follows the double path-loss backscatter
//! model: the incident carrier is the superposition of every UAV's sensing
//! beam, the GU reflects it with coefficient Γ, and the serving UAV combines
//! with a receive beam aligned to its own channel, so the leading factor of
//! the SNR is the combining gain ‖h‖². Forwarding uses NOMA with successive
//! interference cancellation at the BS: UAVs are decoded in ascending order
//! of their sensed data sizes, so later-decoded UAVs see less interference.

use crate::channel::ChannelSet;
use crate::scenario::{Scenario, SlotState};
use nalgebra::{DVector, Vector3};
use num_complex::Complex64;

/// Per-UAV split of the unit slot into flying, sensing, and forwarding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSplit {
    pub fly: f64,
    pub sense: f64,
    pub forward: f64,
}

impl TimeSplit {
    pub fn total(&self) -> f64 {
        self.fly + self.sense + self.forward
    }
}

/// One slot's control tuple: access matrix, time splits, beamformers, and
/// the hover positions the UAVs fly to at the start of the slot.
#[derive(Debug, Clone)]
pub struct Decision {
    /// `access[m][k] = true` iff GU `k` uploads to UAV `m` this slot.
    pub access: Vec<Vec<bool>>,
    /// Per-UAV time split.
    pub time: Vec<TimeSplit>,
    /// Per-UAV sensing (carrier) beamformers, ‖w‖ ≤ 1.
    pub sense_beams: Vec<DVector<Complex64>>,
    /// Per-UAV forwarding beamformers, ‖w‖ ≤ 1.
    pub forward_beams: Vec<DVector<Complex64>>,
    /// Hover positions for this slot's sensing and forwarding phases.
    pub hover_targets: Vec<Vector3<f64>>,
}

impl Decision {
    /// All-idle decision: empty schedule, zero time split, unit-axis beams,
    /// UAVs holding their current positions.
    pub fn idle(state: &SlotState, s: &Scenario) -> Self {
        let e1 = {
            let mut v = DVector::from_element(s.num_antennas, Complex64::new(0.0, 0.0));
            v[0] = Complex64::new(1.0, 0.0);
            v
        };
        Decision {
            access: vec![vec![false; s.num_gus]; s.num_uavs],
            time: vec![TimeSplit { fly: 0.0, sense: 0.0, forward: 0.0 }; s.num_uavs],
            sense_beams: vec![e1.clone(); s.num_uavs],
            forward_beams: vec![e1; s.num_uavs],
            hover_targets: state.uav_positions.clone(),
        }
    }

    /// GUs scheduled by UAV `m`.
    pub fn scheduled(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.access[m].iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k)
    }
}

/// Sensing time required by the schedule of one UAV. Kept as a single
/// helper so placement and validation sum in the same order.
pub fn required_sensing_time(access_row: &[bool], mini_slot: f64) -> f64 {
    access_row.iter().map(|&b| if b { mini_slot } else { 0.0 }).sum()
}

/// Received SNR of GU `k` at UAV `m`, valid when the link is scheduled:
/// `γ = p·|Γ|²·‖h_{m,k}‖² · Σ_{m'} |h_{m',k}^H w_{s,m'}|² / σ`.
pub fn sensing_snr(ch: &ChannelSet, d: &Decision, m: usize, k: usize, s: &Scenario) -> f64 {
    let combine_gain = ch.to_gu(m, k).norm_squared();
    let incident: f64 = (0..s.num_uavs)
        .map(|m2| ch.to_gu(m2, k).dotc(&d.sense_beams[m2]).norm_sqr())
        .sum();
    s.tx_power * s.reflection_coeff.norm_sqr() * combine_gain * incident / s.noise_power
}

/// Per-UAV sensing capacity `s_m` and collected fraction `P_m`.
///
/// `coverage_bits[m]` is the pending data size within UAV `m`'s coverage
/// before collection; the fraction is clamped to `[0, 1]` so the AoI update
/// can never go negative, and is zero when the coverage holds no data.
pub fn sensing_capacity(
    ch: &ChannelSet,
    d: &Decision,
    coverage_bits: &[f64],
    s: &Scenario,
) -> (Vec<f64>, Vec<f64>) {
    let sensed: Vec<f64> = (0..s.num_uavs)
        .map(|m| {
            d.scheduled(m)
                .map(|k| s.mini_slot * (1.0 + sensing_snr(ch, d, m, k, s)).log2())
                .sum()
        })
        .collect();
    let fraction = sensed
        .iter()
        .zip(coverage_bits)
        .map(|(&sm, &sc)| if sc > 0.0 { (sm / sc).min(1.0) } else { 0.0 })
        .collect();
    (sensed, fraction)
}

/// Received forwarding power of UAV `m` at the BS, normalized by noise.
pub fn forward_power(ch: &ChannelSet, d: &Decision, m: usize, s: &Scenario) -> f64 {
    s.tx_power * ch.to_bs(m).dotc(&d.forward_beams[m]).norm_sqr() / s.noise_power
}

/// Decode order at the BS: ascending sensed data size, ties by UAV index.
pub fn decode_order(sensed: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sensed.len()).collect();
    order.sort_by(|&a, &b| sensed[a].partial_cmp(&sensed[b]).unwrap().then(a.cmp(&b)));
    order
}

/// NOMA forwarding throughput per UAV (original indexing), given the sensed
/// data sizes that fix the decode order.
pub fn noma_rates(ch: &ChannelSet, d: &Decision, sensed: &[f64], s: &Scenario) -> Vec<f64> {
    let order = decode_order(sensed);
    let powers: Vec<f64> = order.iter().map(|&m| forward_power(ch, d, m, s)).collect();
    // interference[j] = Σ_{j' ≥ j} powers[j'], interference[M] = 0
    let mut interference = vec![0.0; order.len() + 1];
    for j in (0..order.len()).rev() {
        interference[j] = interference[j + 1] + powers[j];
    }
    let mut rates = vec![0.0; order.len()];
    for (j, &m) in order.iter().enumerate() {
        rates[m] = d.time[m].forward
            * ((1.0 + interference[j]) / (1.0 + interference[j + 1])).log2();
    }
    rates
}

/// Combined realized link rates for one decision.
#[derive(Debug, Clone)]
pub struct LinkRates {
    /// Sensing capacity per UAV (bits).
    pub sensed: Vec<f64>,
    /// Forwarding throughput per UAV (bits).
    pub forwarded: Vec<f64>,
    /// Collected fraction per UAV, in [0, 1].
    pub fraction: Vec<f64>,
    /// SIC decode order (ascending sensed size).
    pub order: Vec<usize>,
}

/// Evaluates all realized rates at the decision's hover positions.
pub fn link_rates(ch: &ChannelSet, d: &Decision, coverage_bits: &[f64], s: &Scenario) -> LinkRates {
    let (sensed, fraction) = sensing_capacity(ch, d, coverage_bits, s);
    let forwarded = noma_rates(ch, d, &sensed, s);
    let order = decode_order(&sensed);
    LinkRates { sensed, forwarded, fraction, order }
}

/// One violated constraint, identified by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: &'static str,
    pub detail: String,
}

/// Tolerance for the forwarding-capacity check: SCA iterates satisfy the
/// sensed ≤ forwarded coupling only up to solver accuracy.
pub const EQ9_TOL: f64 = 1e-6;

/// Checks every decision invariant plus the sensed ≤ forwarded coupling,
/// returning all violated constraints by name. Violations are data, not
/// faults.
pub fn validate_decision(d: &Decision, state: &SlotState, s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    for k in 0..s.num_gus {
        let assigned = (0..s.num_uavs).filter(|&m| d.access[m][k]).count();
        if assigned > 1 {
            out.push(Violation {
                constraint: "access",
                detail: format!("GU {k} is assigned to {assigned} UAVs"),
            });
        }
    }
    for m in 0..s.num_uavs {
        let t = &d.time[m];
        if t.fly < 0.0 || t.sense < 0.0 || t.forward < 0.0 || t.total() > 1.0 {
            out.push(Violation {
                constraint: "time budget",
                detail: format!(
                    "UAV {m} time split ({}, {}, {}) sums to {}",
                    t.fly,
                    t.sense,
                    t.forward,
                    t.total()
                ),
            });
        }
        let needed = required_sensing_time(&d.access[m], s.mini_slot);
        if t.sense < needed {
            out.push(Violation {
                constraint: "sensing time",
                detail: format!("UAV {m} sensing time {} below scheduled total {needed}", t.sense),
            });
        }
        if d.sense_beams[m].norm() > 1.0 {
            out.push(Violation {
                constraint: "beam norm",
                detail: format!("UAV {m} sensing beam norm {}", d.sense_beams[m].norm()),
            });
        }
        if d.forward_beams[m].norm() > 1.0 {
            out.push(Violation {
                constraint: "beam norm",
                detail: format!("UAV {m} forwarding beam norm {}", d.forward_beams[m].norm()),
            });
        }
        let travel = (d.hover_targets[m] - state.uav_positions[m]).norm();
        if travel > t.fly * s.v_max {
            out.push(Violation {
                constraint: "speed",
                detail: format!("UAV {m} moves {travel} m with budget {} m", t.fly * s.v_max),
            });
        }
    }
    for m in 0..s.num_uavs {
        for m2 in (m + 1)..s.num_uavs {
            let dist = (d.hover_targets[m] - d.hover_targets[m2]).norm();
            if dist < s.d_min {
                out.push(Violation {
                    constraint: "collision",
                    detail: format!("UAVs {m} and {m2} end up {dist} m apart, d_min={}", s.d_min),
                });
            }
        }
    }
    let ch = crate::channel::draw_channels(&d.hover_targets, &state.fading, s);
    let sensed: Vec<f64> = (0..s.num_uavs)
        .map(|m| {
            d.scheduled(m)
                .map(|k| s.mini_slot * (1.0 + sensing_snr(&ch, d, m, k, s)).log2())
                .sum()
        })
        .collect();
    let forwarded = noma_rates(&ch, d, &sensed, s);
    for m in 0..s.num_uavs {
        if sensed[m] > forwarded[m] + EQ9_TOL {
            out.push(Violation {
                constraint: "forwarding capacity",
                detail: format!("UAV {m} sensed {} bits but can forward only {}", sensed[m], forwarded[m]),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::scenario::{draw_fading, init_state, table_scenario};

    /// Hand-built channel set over explicit per-link vectors.
    fn channels_from(links: Vec<Vec<DVector<Complex64>>>) -> ChannelSet {
        let m = links.len();
        ChannelSet {
            dist_targets: vec![vec![1.0; links[0].len()]; m],
            dist_uavs: vec![vec![f64::INFINITY; m]; m],
            links,
        }
    }

    fn unit_scenario(num_uavs: usize, num_gus: usize, n: usize) -> Scenario {
        let mut s = table_scenario(num_gus, 0);
        s.num_uavs = num_uavs;
        s.num_antennas = n;
        s.tx_power = 1.0;
        s.reflection_coeff = Complex64::new(1.0, 0.0);
        s.noise_power = 1.0;
        s.uav_initial_positions =
            (0..num_uavs).map(|m| Vector3::new(100.0 * m as f64, 0.0, 10.0)).collect();
        s
    }

    fn cvec(values: &[(f64, f64)]) -> DVector<Complex64> {
        DVector::from_iterator(values.len(), values.iter().map(|&(re, im)| Complex64::new(re, im)))
    }

    #[test]
    fn aligned_beam_snr_is_norm_fourth_power() {
        // M=1, w = h/‖h‖, unit power and noise, ‖h‖² = 2 ⇒ γ = ‖h‖⁴ = 4.
        let s = unit_scenario(1, 1, 2);
        let h = cvec(&[(1.0, 0.0), (1.0, 0.0)]);
        let w = h.map(|c| c / Complex64::new(h.norm(), 0.0));
        let ch = channels_from(vec![vec![cvec(&[(0.0, 0.0), (0.0, 0.0)]), h]]);
        let mut d = Decision {
            access: vec![vec![true]],
            time: vec![TimeSplit { fly: 0.0, sense: 0.2, forward: 0.2 }],
            sense_beams: vec![w],
            forward_beams: vec![cvec(&[(1.0, 0.0), (0.0, 0.0)])],
            hover_targets: vec![Vector3::new(0.0, 0.0, 10.0)],
        };
        let snr = sensing_snr(&ch, &d, 0, 0, &s);
        assert!((snr - 4.0).abs() < 1e-12);
        // null beam: w orthogonal to h ⇒ γ = 0
        d.sense_beams[0] = cvec(&[
            (std::f64::consts::FRAC_1_SQRT_2, 0.0),
            (-std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]);
        assert!(sensing_snr(&ch, &d, 0, 0, &s).abs() < 1e-15);
    }

    #[test]
    fn sensing_capacity_single_link() {
        // one GU, mini-slot 0.2, γ = 3 ⇒ s = 0.2·log2(4) = 0.4
        let s = unit_scenario(1, 1, 1);
        let a = 3f64.powf(0.25);
        let h = cvec(&[(a, 0.0)]);
        let ch = channels_from(vec![vec![cvec(&[(0.0, 0.0)]), h]]);
        let d = Decision {
            access: vec![vec![true]],
            time: vec![TimeSplit { fly: 0.0, sense: 0.2, forward: 0.2 }],
            sense_beams: vec![cvec(&[(1.0, 0.0)])],
            forward_beams: vec![cvec(&[(1.0, 0.0)])],
            hover_targets: vec![Vector3::new(0.0, 0.0, 10.0)],
        };
        let (sm, pm) = sensing_capacity(&ch, &d, &[1.0], &s);
        assert!((sm[0] - 0.4).abs() < 1e-12);
        assert!((pm[0] - 0.4).abs() < 1e-12);
        // clamp: capacity at twice the coverage backlog ⇒ P = 1
        let (_, pm) = sensing_capacity(&ch, &d, &[sm[0] / 2.0], &s);
        assert_eq!(pm[0], 1.0);
        // no GU scheduled ⇒ s = 0, P = 0
        let mut idle = d.clone();
        idle.access[0][0] = false;
        let (sm, pm) = sensing_capacity(&ch, &idle, &[0.0], &s);
        assert_eq!(sm[0], 0.0);
        assert_eq!(pm[0], 0.0);
    }

    fn two_uav_forward_setup() -> (Scenario, ChannelSet, Decision) {
        // engineered received powers {1, 3} at the BS
        let s = unit_scenario(2, 1, 1);
        let ch = channels_from(vec![
            vec![cvec(&[(1.0, 0.0)]), cvec(&[(0.0, 0.0)])],
            vec![cvec(&[(3f64.sqrt(), 0.0)]), cvec(&[(0.0, 0.0)])],
        ]);
        let d = Decision {
            access: vec![vec![false], vec![false]],
            time: vec![TimeSplit { fly: 0.0, sense: 0.0, forward: 1.0 }; 2],
            sense_beams: vec![cvec(&[(1.0, 0.0)]); 2],
            forward_beams: vec![cvec(&[(1.0, 0.0)]); 2],
            hover_targets: vec![Vector3::new(0.0, 0.0, 10.0), Vector3::new(100.0, 0.0, 10.0)],
        };
        (s, ch, d)
    }

    #[test]
    fn two_term_sic_rates() {
        let (s, ch, d) = two_uav_forward_setup();
        // UAV 1 has more data, decoded later
        let rates = noma_rates(&ch, &d, &[0.5, 2.0], &s);
        assert!((rates[0] - (5.0f64 / 4.0).log2()).abs() < 1e-12);
        assert!((rates[1] - 2.0).abs() < 1e-12);
        // telescoping: r_0 + r_1 = log2(1 + total power)
        assert!((rates[0] + rates[1] - 5.0f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn single_uav_rate_is_interference_free() {
        let s = unit_scenario(1, 1, 1);
        let ch = channels_from(vec![vec![cvec(&[(2.0, 0.0)]), cvec(&[(0.0, 0.0)])]]);
        let d = Decision {
            access: vec![vec![false]],
            time: vec![TimeSplit { fly: 0.0, sense: 0.0, forward: 0.7 }],
            sense_beams: vec![cvec(&[(1.0, 0.0)])],
            forward_beams: vec![cvec(&[(1.0, 0.0)])],
            hover_targets: vec![Vector3::new(0.0, 0.0, 10.0)],
        };
        let rates = noma_rates(&ch, &d, &[1.0], &s);
        assert!((rates[0] - 0.7 * 5.0f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn decode_order_breaks_ties_by_index() {
        assert_eq!(decode_order(&[2.0, 1.0, 2.0]), vec![1, 0, 2]);
        assert_eq!(decode_order(&[0.0, 0.0]), vec![0, 1]);
    }

    #[test]
    fn time_budget_violation_is_named() {
        let s = table_scenario(15, 3);
        let state = init_state(&s);
        let mut d = Decision::idle(&state, &s);
        d.time[0] = TimeSplit { fly: 0.3, sense: 0.5, forward: 0.3 };
        let v = validate_decision(&d, &state, &s);
        assert!(v.iter().any(|v| v.constraint == "time budget"), "{v:?}");
    }

    #[test]
    fn collision_violation_is_named() {
        let s = table_scenario(15, 3);
        let state = init_state(&s);
        let mut d = Decision::idle(&state, &s);
        // teleport-free: set both targets near UAV 0's position, 10 m apart
        d.hover_targets[1] = state.uav_positions[0] + Vector3::new(10.0, 0.0, 0.0);
        let v = validate_decision(&d, &state, &s);
        assert!(v.iter().any(|v| v.constraint == "collision"), "{v:?}");
        // the long jump with zero fly time also trips the speed check
        assert!(v.iter().any(|v| v.constraint == "speed"), "{v:?}");
    }

    #[test]
    fn idle_decision_is_feasible() {
        let s = table_scenario(15, 3);
        let state = init_state(&s);
        let d = Decision::idle(&state, &s);
        assert!(validate_decision(&d, &state, &s).is_empty());
    }

    #[test]
    fn telescoping_holds_on_random_instances() {
        // for equal forwarding times, Σ r_m = t · log2(1 + γ of the first decode)
        let s = unit_scenario(3, 1, 4);
        for seed in 0..20 {
            let mut sc = s.clone();
            sc.rng_seed = seed;
            let fading = draw_fading(&sc, 0);
            let pos: Vec<_> = (0..3).map(|m| Vector3::new(120.0 * m as f64, 40.0, 10.0)).collect();
            let ch = draw_channels(&pos, &fading, &sc);
            let t = 0.37;
            let d = Decision {
                access: vec![vec![false]; 3],
                time: vec![TimeSplit { fly: 0.0, sense: 0.0, forward: t }; 3],
                sense_beams: (0..3)
                    .map(|m| crate::channel::receive_beam(ch.to_gu(m, 0)).unwrap())
                    .collect(),
                forward_beams: (0..3)
                    .map(|m| crate::channel::receive_beam(ch.to_bs(m)).unwrap())
                    .collect(),
                hover_targets: pos.clone(),
            };
            let sensed = [0.3, 0.1, 0.2];
            let rates = noma_rates(&ch, &d, &sensed, &sc);
            let total_power: f64 = (0..3).map(|m| forward_power(&ch, &d, m, &sc)).sum();
            let sum: f64 = rates.iter().sum();
            assert!(
                (sum - t * (1.0 + total_power).log2()).abs() < 1e-9 * sum.abs().max(1.0),
                "seed {seed}"
            );
        }
    }
}
