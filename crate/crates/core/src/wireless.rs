//! Pure radio and geometry model: pathloss, beam gains, RSRP, timing-advance
//! quantization and localization error. No state, no side effects.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Azimuth of `other` as seen from `self`, degrees in [0, 360).
    pub fn azimuth_deg_to(&self, other: &Position) -> f64 {
        let a = (other.y - self.y).atan2(other.x - self.x).to_degrees();
        if a < 0.0 {
            a + 360.0
        } else {
            a
        }
    }
}

/// Log-distance propagation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationParams {
    /// Reference loss at 1 m, dB.
    pub ref_loss_db: f64,
    /// Pathloss exponent.
    pub exponent: f64,
    /// Transmit power, dBm.
    pub tx_power_dbm: f64,
    /// Lognormal shadowing standard deviation, dB.
    #[serde(default)]
    pub shadowing_sigma_db: f64,
}

impl PropagationParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.exponent > 0.0) {
            return Err(DomainError::new("propagation exponent must be > 0"));
        }
        if !(self.ref_loss_db > 0.0) {
            return Err(DomainError::new("ref_loss_db must be > 0"));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(DomainError::new("shadowing_sigma_db must be >= 0"));
        }
        Ok(())
    }
}

/// One beam of a grid-of-beams cell. Parabolic main lobe with a hard
/// attenuation floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Beam {
    pub beam_id: u32,
    /// Boresight azimuth, degrees in [0, 360).
    pub boresight_deg: f64,
    /// 3 dB beamwidth, degrees, > 0.
    pub beamwidth_3db_deg: f64,
    pub max_gain_db: f64,
    /// Maximum attenuation relative to max gain, dB, > 0.
    pub max_attenuation_db: f64,
}

/// Localization technique and its per-axis error standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalizationTechnique {
    #[serde(rename = "RTK")]
    Rtk,
    #[serde(rename = "DGPS")]
    Dgps,
    #[serde(rename = "GPS")]
    Gps,
    #[serde(rename = "PERFECT")]
    Perfect,
}

impl LocalizationTechnique {
    pub fn sigma_m(&self) -> f64 {
        match self {
            LocalizationTechnique::Rtk => 0.01,
            LocalizationTechnique::Dgps => 1.0,
            LocalizationTechnique::Gps => 6.0,
            LocalizationTechnique::Perfect => 0.0,
        }
    }
}

impl std::str::FromStr for LocalizationTechnique {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, DomainError> {
        match s {
            "RTK" => Ok(LocalizationTechnique::Rtk),
            "DGPS" => Ok(LocalizationTechnique::Dgps),
            "GPS" => Ok(LocalizationTechnique::Gps),
            "PERFECT" => Ok(LocalizationTechnique::Perfect),
            other => Err(DomainError::new(format!(
                "unknown localization technique: {other}"
            ))),
        }
    }
}

/// Timing-advance quantization config derived from subcarrier spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaConfig {
    pub scs_khz: u32,
}

impl TaConfig {
    pub const VALID_SCS_KHZ: [u32; 5] = [15, 30, 60, 120, 240];

    pub fn new(scs_khz: u32) -> Result<Self, DomainError> {
        if !Self::VALID_SCS_KHZ.contains(&scs_khz) {
            return Err(DomainError::new(format!(
                "unsupported subcarrier spacing {scs_khz} kHz (valid: 15/30/60/120/240)"
            )));
        }
        Ok(TaConfig { scs_khz })
    }

    /// Numerology index mu = log2(scs/15).
    pub fn mu(&self) -> u32 {
        (self.scs_khz / 15).trailing_zeros()
    }

    /// Distance covered by one TA step: 78.125 / 2^mu meters.
    pub fn distance_step_m(&self) -> f64 {
        78.125 / f64::from(1u32 << self.mu())
    }
}

/// Log-distance pathloss: ref_loss + 10 * n * log10(d).
pub fn pathloss_db(d_m: f64, p: &PropagationParams) -> Result<f64, DomainError> {
    if !(d_m > 0.0) {
        return Err(DomainError::new(format!(
            "pathloss distance must be > 0, got {d_m}"
        )));
    }
    Ok(p.ref_loss_db + 10.0 * p.exponent * d_m.log10())
}

/// Wrap an angle difference to [-180, 180].
fn wrap_deg(delta: f64) -> f64 {
    let mut d = delta % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d
}

/// Parabolic main-lobe gain: max_gain - min(12 * (off/bw)^2, max_attenuation).
pub fn beam_gain_db(beam: &Beam, azimuth_deg: f64) -> f64 {
    let off = wrap_deg(azimuth_deg - beam.boresight_deg);
    let atten = 12.0 * (off / beam.beamwidth_3db_deg).powi(2);
    beam.max_gain_db - atten.min(beam.max_attenuation_db)
}

/// Received power: tx - pathloss + beam gain (if any) + shadowing.
pub fn rsrp_dbm(
    ue_pos: &Position,
    cell_pos: &Position,
    beam: Option<&Beam>,
    p: &PropagationParams,
    shadowing_db: f64,
) -> Result<f64, DomainError> {
    let d = ue_pos.distance(cell_pos);
    if d == 0.0 {
        return Err(DomainError::new("UE and cell positions coincide"));
    }
    let gain = match beam {
        Some(b) => beam_gain_db(b, cell_pos.azimuth_deg_to(ue_pos)),
        None => 0.0,
    };
    Ok(p.tx_power_dbm - pathloss_db(d, p)? + gain + shadowing_db)
}

/// Quantize a distance into a TA index: floor(d / step).
pub fn ta_index(d_m: f64, ta: &TaConfig) -> Result<u32, DomainError> {
    if d_m < 0.0 {
        return Err(DomainError::new(format!(
            "TA distance must be >= 0, got {d_m}"
        )));
    }
    Ok((d_m / ta.distance_step_m()).floor() as u32)
}

/// Perturb a true position with per-axis Gaussian localization error.
pub fn noisy_position<R: Rng + ?Sized>(
    true_pos: Position,
    tech: LocalizationTechnique,
    rng: &mut R,
) -> Position {
    let sigma = tech.sigma_m();
    if sigma == 0.0 {
        return true_pos;
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and >= 0");
    Position {
        x: true_pos.x + n.sample(rng),
        y: true_pos.y + n.sample(rng),
    }
}
