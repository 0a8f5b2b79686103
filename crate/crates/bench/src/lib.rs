//! Fixtures shared by the criterion benches.

use trackeval_core::dataio::{generate_synthetic, occluded_suite, SuiteParams, SynthOutput};

/// One occluded-suite scene at the given size.
pub fn scene(width: usize, height: usize, frames: usize) -> SynthOutput {
    let spec = occluded_suite(1, 0, SuiteParams { width, height, frames }).remove(0);
    generate_synthetic(&spec, 0).expect("suite specs are valid")
}
