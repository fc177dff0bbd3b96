//! Shared fixtures for the criterion benches.

use rir_core::synth::{clustered, ClusterSpec, Clustered};

/// A mid-sized clustered corpus: 50 items x 40 reviews, 128-d.
pub fn fixture() -> Clustered {
    clustered(ClusterSpec {
        n_items: 50,
        reviews_per_item: 40,
        dim: 128,
        sigma: 0.3,
        scale: 1.0,
        seed: 1,
    })
    .expect("valid spec")
}
