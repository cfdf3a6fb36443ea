//! Counter-based random streams.
//!
//! Every (master seed, sample index, node) triple owns a disjoint ChaCha
//! stream, so a sample's draws do not depend on evaluation order or on how
//! samples are spread over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::NodeId;

/// Words reserved per node within a sample's stream.
const NODE_STRIDE_BITS: u32 = 36;

pub fn node_stream(seed: u64, sample_index: u64, node: NodeId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng.set_word_pos((node.index() as u128) << NODE_STRIDE_BITS);
    rng
}
