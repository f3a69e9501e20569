//! Outage analysis and transport-capacity optimization for unicast barrage
//! relay networks.
//!
//! A controlled barrage region (CBR) is a line segment with a source, `N`
//! relays and a destination. The source broadcasts in the first slot of a
//! frame and every node that decodes rebroadcasts exactly once in the next
//! slot, so a packet floods towards the destination in cooperative waves.
//!
//! The crate is organized bottom-up:
//!
//! - [`channel`]: path loss and the closed-form outage probability of a
//!   barraging transmission in Rayleigh fading with probabilistic interferers.
//! - [`markov`]: the CBR as an absorbing Markov chain, its absorption
//!   probabilities and per-slot transmit probabilities.
//! - [`interference`]: the fixed point coupling a typical CBR to the
//!   co-channel interference of its neighbors in an infinite cascade.
//! - [`montecarlo`]: seeded stochastic simulators used as independent oracles.
//! - [`optimizer`]: transport capacity and the hybrid coordinate/stochastic
//!   search over relay count, placement, code rate and CBR length.
//!
//! The `book/` directory next to the workspace explains the model chapter by
//! chapter; its snippets are compiled and run as doc-tests of this crate.

pub mod channel;
pub mod error;
pub mod interference;
pub mod markov;
pub mod montecarlo;
pub mod optimizer;
pub mod topology;

pub use channel::{ChannelParams, Interferer, LinkSet, OutageValue};
pub use error::{Error, Result};
pub use topology::LineTopology;

// The guide's chapters, compiled so that their snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/markov.md")]
    mod markov {}
    #[doc = include_str!("../../../book/src/interference.md")]
    mod interference {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
