use crate::error::{invalid, Result};

/// Positions of the nodes of one CBR on a line: source first, then the
/// relays, then the destination. Distances are in units of `d0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineTopology {
    positions: Vec<f64>,
}

impl LineTopology {
    /// Source at 0, destination at `length`, relays at the given positions.
    pub fn new(length: f64, relays: &[f64]) -> Result<Self> {
        let mut positions = Vec::with_capacity(relays.len() + 2);
        positions.push(0.0);
        positions.extend_from_slice(relays);
        positions.push(length);
        Self::from_positions(positions)
    }

    /// `relays` relays equally spaced over a CBR of length `length`.
    pub fn equally_spaced(relays: usize, length: f64) -> Result<Self> {
        let step = length / (relays + 1) as f64;
        let inner: Vec<f64> = (1..=relays).map(|i| i as f64 * step).collect();
        Self::new(length, &inner)
    }

    pub fn from_positions(positions: Vec<f64>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(invalid("topology", "needs a source and a destination"));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(invalid("topology", "positions must be finite"));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(
                "topology",
                format!("positions must be strictly increasing, got {positions:?}"),
            ));
        }
        Ok(LineTopology { positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn relay_positions(&self) -> &[f64] {
        &self.positions[1..self.positions.len() - 1]
    }

    pub fn relay_count(&self) -> usize {
        self.positions.len() - 2
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    /// Source-to-destination distance.
    pub fn length(&self) -> f64 {
        self.positions[self.positions.len() - 1] - self.positions[0]
    }

    /// Slots per frame, one more than the relay count.
    pub fn frame_slots(&self) -> usize {
        self.relay_count() + 1
    }

    pub fn destination(&self) -> usize {
        self.positions.len() - 1
    }

    /// The same topology shifted by `offset`.
    pub fn translated(&self, offset: f64) -> LineTopology {
        LineTopology {
            positions: self.positions.iter().map(|x| x + offset).collect(),
        }
    }
}
