//! Geometry and Rician channel vectors for every UAV-to-target link.
//!
//! Each link combines a deterministic LoS steering component with the slot's
//! Rayleigh draw under the Rician weighting
//!
//! ```text
//! h = sqrt(ρ / d²) · ( sqrt(g0/(g0+1)) · ḡ + sqrt(1/(g0+1)) · g̃ )
//! ```
//!
//! so that `E[‖h‖²] = ρ · d⁻² · N` regardless of the steering choice. The LoS
//! component is a half-wavelength uniform linear array steered by the
//! UAV→target direction; any unit-modulus choice preserves the tested moments.
//! Target index 0 is the base station, indices 1..=K the GUs.

use crate::scenario::Scenario;
use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("degenerate channel: zero norm")]
    DegenerateChannel,
}

/// Distances and channel vectors for one slot's geometry.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// `links[m][k]`: channel from UAV `m` to target `k` (0 = BS, j+1 = GU j).
    pub links: Vec<Vec<DVector<Complex64>>>,
    /// UAV-to-target distances with the same indexing as `links`.
    pub dist_targets: Vec<Vec<f64>>,
    /// Pairwise UAV distances; diagonal entries are +∞ so self-distances
    /// never trip collision checks.
    pub dist_uavs: Vec<Vec<f64>>,
}

impl ChannelSet {
    /// Channel from UAV `m` to GU `k` (GU indices are zero-based).
    pub fn to_gu(&self, m: usize, k: usize) -> &DVector<Complex64> {
        &self.links[m][k + 1]
    }

    /// Channel from UAV `m` to the base station.
    pub fn to_bs(&self, m: usize) -> &DVector<Complex64> {
        &self.links[m][0]
    }

    /// Distance from UAV `m` to GU `k`.
    pub fn dist_to_gu(&self, m: usize, k: usize) -> f64 {
        self.dist_targets[m][k + 1]
    }

    /// Distance from UAV `m` to the base station.
    pub fn dist_to_bs(&self, m: usize) -> f64 {
        self.dist_targets[m][0]
    }
}

/// Position of target `k` in the 0 = BS, j+1 = GU-j indexing.
pub fn target_position(s: &Scenario, k: usize) -> Vector3<f64> {
    if k == 0 {
        s.bs_position
    } else {
        s.gu_positions[k - 1]
    }
}

/// Euclidean UAV-target and pairwise UAV distance matrices.
pub fn distances(uav_positions: &[Vector3<f64>], s: &Scenario) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m_count = uav_positions.len();
    let dist_targets = (0..m_count)
        .map(|m| {
            (0..=s.num_gus)
                .map(|k| (uav_positions[m] - target_position(s, k)).norm())
                .collect()
        })
        .collect();
    let dist_uavs = (0..m_count)
        .map(|m| {
            (0..m_count)
                .map(|m2| {
                    if m == m2 {
                        f64::INFINITY
                    } else {
                        (uav_positions[m] - uav_positions[m2]).norm()
                    }
                })
                .collect()
        })
        .collect();
    (dist_targets, dist_uavs)
}

/// Unit-modulus steering vector of a half-wavelength ULA pointed along the
/// world x-axis, with phase taken from the x-component of the unit
/// UAV→target direction.
pub fn steering_vector(from: Vector3<f64>, to: Vector3<f64>, n: usize) -> DVector<Complex64> {
    let d = (to - from).norm();
    let cos_axis = if d > 0.0 { (to - from).x / d } else { 0.0 };
    DVector::from_fn(n, |i, _| {
        Complex64::from_polar(1.0, -std::f64::consts::PI * i as f64 * cos_axis)
    })
}

/// Rician mixing of the LoS steering vector and the slot's Rayleigh draw.
/// An infinite Rician factor selects the pure-LoS limit exactly.
fn mix_rician(
    los: &DVector<Complex64>,
    rayleigh: &DVector<Complex64>,
    gain: f64,
    g0: f64,
) -> DVector<Complex64> {
    let (w_los, w_ray) = if g0.is_infinite() {
        (1.0, 0.0)
    } else {
        ((g0 / (g0 + 1.0)).sqrt(), (1.0 / (g0 + 1.0)).sqrt())
    };
    let scale = Complex64::new(gain, 0.0);
    DVector::from_fn(los.len(), |i, _| scale * (w_los * los[i] + w_ray * rayleigh[i]))
}

/// Builds the full channel set for the given UAV positions, reusing the
/// slot's stored fading draws so position updates within a slot stay
/// consistent with the realized randomness.
pub fn draw_channels(
    uav_positions: &[Vector3<f64>],
    fading: &[Vec<DVector<Complex64>>],
    s: &Scenario,
) -> ChannelSet {
    let (dist_targets, dist_uavs) = distances(uav_positions, s);
    let links = (0..uav_positions.len())
        .map(|m| {
            (0..=s.num_gus)
                .map(|k| {
                    let d = dist_targets[m][k];
                    let gain = (s.ref_gain / (d * d)).sqrt();
                    let los = steering_vector(uav_positions[m], target_position(s, k), s.num_antennas);
                    mix_rician(&los, &fading[m][k], gain, s.rician_factor)
                })
                .collect()
        })
        .collect();
    ChannelSet { links, dist_targets, dist_uavs }
}

/// Receive beam aligned with the channel (maximal ratio combining).
pub fn receive_beam(h: &DVector<Complex64>) -> Result<DVector<Complex64>, ChannelError> {
    let n = h.norm();
    if n == 0.0 {
        return Err(ChannelError::DegenerateChannel);
    }
    Ok(h.map(|c| c / Complex64::new(n, 0.0)))
}
