//! Path loss, relative path gains and the closed-form conditional outage
//! probability of a cooperative (barraging) transmission in Rayleigh fading.
//!
//! All distances are expressed in multiples of the reference distance `d0`,
//! so a unit-distance link without fading has SNR `gamma`.
//!
//! With barraging gains `Ω_k` (k in G) and interferers `(Ω_i, p_i)`, the
//! probability that the SINR at the receiver does not exceed `beta` is
//!
//! ```text
//! ε = 1 - Σ_k exp(-β / (Ω_k Γ)) · Π_{s≠k} Ω_k / (Ω_k - Ω_s)
//!                               · Π_i (Ω_k + β (1 - p_i) Ω_i) / (Ω_k + β Ω_i)
//! ```
//!
//! The partial-fraction form is singular for equal barraging gains, which
//! symmetric line topologies produce routinely. Ties are broken by a
//! deterministic relative perturbation, see [`separate_ties`].

use crate::error::{invalid, Error, Result};

/// Relative tolerance under which two barraging gains count as equal.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Multiplicative nudge applied to the later of two tied gains.
pub const TIE_NUDGE: f64 = 1e-6;
/// Deviation outside `[0, 1]` above which clamping is logged.
const CLAMP_WARN: f64 = 1e-9;

/// Converts a decibel quantity to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Link-level parameters shared by every transmission in a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// SNR of an unfaded unit-distance transmission (linear).
    pub gamma: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// SINR decoding threshold (linear).
    pub beta: f64,
    /// Reference distance. Positions are measured in multiples of it.
    pub d0: f64,
    /// Smallest admissible transmitter-receiver distance, in units of `d0`.
    /// The physical far-field guard is `1.0`; optimization studies relax it.
    pub min_distance: f64,
}

impl ChannelParams {
    pub fn new(gamma: f64, alpha: f64, beta: f64) -> Result<Self> {
        let params = ChannelParams {
            gamma,
            alpha,
            beta,
            d0: 1.0,
            min_distance: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters from `gamma` and `beta` given in dB.
    pub fn from_db(gamma_db: f64, alpha: f64, beta_db: f64) -> Result<Self> {
        Self::new(db_to_linear(gamma_db), alpha, db_to_linear(beta_db))
    }

    /// Replaces the far-field guard.
    pub fn with_min_distance(mut self, min_distance: f64) -> Result<Self> {
        self.min_distance = min_distance;
        self.validate()?;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 2.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("must be > 2, got {}", self.alpha)));
        }
        if !(self.gamma > 0.0) || self.gamma.is_nan() {
            return Err(invalid("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.d0 > 0.0) || !self.d0.is_finite() {
            return Err(invalid("d0", format!("must be > 0, got {}", self.d0)));
        }
        if !(self.min_distance > 0.0) || !self.min_distance.is_finite() {
            return Err(invalid(
                "min_distance",
                format!("must be > 0, got {}", self.min_distance),
            ));
        }
        Ok(())
    }

    /// Relative path gain at `dist`, honoring this parameter set's far-field guard.
    pub fn gain(&self, dist: f64) -> Result<f64> {
        attenuation(dist, self.alpha, self.min_distance)
    }
}

fn attenuation(dist: f64, alpha: f64, min_distance: f64) -> Result<f64> {
    if dist.is_nan() || dist < min_distance {
        return Err(Error::FarField {
            distance: dist,
            minimum: min_distance,
        });
    }
    Ok(dist.powf(-alpha))
}

/// Power-law attenuation `dist^-alpha` with the strict far-field guard `dist >= 1`.
pub fn path_loss(dist: f64, alpha: f64) -> Result<f64> {
    attenuation(dist, alpha, 1.0)
}

/// Relative path gains from each transmitter to a receiver, in input order.
pub fn relative_gains(receiver: f64, transmitters: &[f64], alpha: f64) -> Result<Vec<f64>> {
    transmitters
        .iter()
        .map(|&x| path_loss((x - receiver).abs(), alpha))
        .collect()
}

/// Same as [`relative_gains`] but with the guard taken from `params`.
pub fn relative_gains_with(
    receiver: f64,
    transmitters: &[f64],
    params: &ChannelParams,
) -> Result<Vec<f64>> {
    transmitters
        .iter()
        .map(|&x| params.gain((x - receiver).abs()))
        .collect()
}

/// A node outside the barraging set that transmits with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub gain: f64,
    pub p: f64,
}

impl Interferer {
    pub fn new(gain: f64, p: f64) -> Self {
        Interferer { gain, p }
    }
}

/// Everything a receiver sees in one slot: the barraging gains and the
/// probabilistic interferers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkSet {
    pub barraging: Vec<f64>,
    pub interferers: Vec<Interferer>,
}

impl LinkSet {
    pub fn new(barraging: Vec<f64>, interferers: Vec<Interferer>) -> Self {
        LinkSet {
            barraging,
            interferers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.barraging.is_empty() {
            return Err(Error::EmptyBarragingSet);
        }
        for &g in &self.barraging {
            if !(g > 0.0) || !g.is_finite() {
                return Err(invalid("barraging gain", format!("must be > 0, got {g}")));
            }
        }
        for i in &self.interferers {
            if !(i.gain >= 0.0) || !i.gain.is_finite() {
                return Err(invalid(
                    "interferer gain",
                    format!("must be >= 0, got {}", i.gain),
                ));
            }
            if !(0.0..=1.0).contains(&i.p) {
                return Err(invalid(
                    "interferer probability",
                    format!("must lie in [0, 1], got {}", i.p),
                ));
            }
        }
        Ok(())
    }
}

/// An outage probability, guaranteed to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OutageValue(f64);

impl OutageValue {
    pub fn new(epsilon: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&epsilon) {
            Ok(OutageValue(epsilon))
        } else {
            Err(invalid("epsilon", format!("must lie in [0, 1], got {epsilon}")))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    pub fn success(self) -> f64 {
        1.0 - self.0
    }
}

/// Breaks ties between barraging gains: whenever a gain lies within
/// [`TIE_TOLERANCE`] (relative) of an earlier one it is multiplied by
/// `1 + TIE_NUDGE`, repeatedly, until all gains are pairwise distinct.
pub fn separate_ties(gains: &[f64]) -> Vec<f64> {
    let mut out = gains.to_vec();
    for j in 1..out.len() {
        loop {
            let tied = out[..j]
                .iter()
                .any(|&g| (g - out[j]).abs() < TIE_TOLERANCE * g.max(out[j]));
            if !tied {
                break;
            }
            out[j] *= 1.0 + TIE_NUDGE;
        }
    }
    out
}

/// Closed-form outage probability of one receiver in one slot.
pub fn outage_probability(links: &LinkSet, params: &ChannelParams) -> Result<OutageValue> {
    links.validate()?;
    params.validate()?;
    if params.beta == 0.0 {
        return Ok(OutageValue(0.0));
    }
    let gains = separate_ties(&links.barraging);
    let beta = params.beta;

    let mut success = 0.0;
    for (k, &gk) in gains.iter().enumerate() {
        let mut term = (-beta / (gk * params.gamma)).exp();
        for (s, &gs) in gains.iter().enumerate() {
            if s != k {
                term *= gk / (gk - gs);
            }
        }
        for i in &links.interferers {
            term *= (gk + beta * (1.0 - i.p) * i.gain) / (gk + beta * i.gain);
        }
        success += term;
    }

    let raw = 1.0 - success;
    let clamped = raw.clamp(0.0, 1.0);
    if (raw - clamped).abs() > CLAMP_WARN {
        log::warn!("outage probability {raw} clamped to {clamped}");
    }
    Ok(OutageValue(clamped))
}

/// Single-transmitter outage without interference, `1 - exp(-β / (Ω Γ))`.
pub fn single_link_outage(gain: f64, params: &ChannelParams) -> f64 {
    -(-params.beta / (gain * params.gamma)).exp_m1()
}
