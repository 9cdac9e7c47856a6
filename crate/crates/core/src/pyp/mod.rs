//! Restaurant graphs of Pitman-Yor processes in the table-multiplicity
//! representation.

mod concentration;
mod graph;
mod node;

pub use concentration::{
    sample_concentration, sample_concentration_from_counts, sample_stick_breaking, HyperPrior,
};
pub use graph::{NewTopicSlot, PypGraph, Seat, Violation};
pub use node::{ln_binomial, ln_pochhammer, ln_rising, Base, NodeId, PypNode};
