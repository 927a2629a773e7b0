//! Benchmark fixtures. The benchmarks themselves live in `benches/`.

use chartsel_core::pipeline::{prepare, Prepared};
use chartsel_core::synth::{generate, Archetype, SyntheticSpec};
use chartsel_core::RenderConfig;

/// One prepared table per archetype, from a fixed seed.
pub fn fixtures() -> Vec<(Archetype, Prepared)> {
    let spec = SyntheticSpec {
        count: 1,
        seed: 42,
        ..Default::default()
    };
    generate(&spec)
        .expect("valid spec")
        .into_iter()
        .map(|s| (s.archetype, prepare(&s.table, &RenderConfig::default()).expect("renderable")))
        .collect()
}
