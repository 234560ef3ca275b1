//! Synthetic two-domain benchmark: generator, protocol runner, scoring.

mod eval;
mod protocol;
mod synth;

pub use eval::{evaluate, EvalReport};
pub use protocol::{
    bench_csv, latent_sweep, mean_ap, mean_std, mu_sweep, run_protocol, run_seeds, split_bundle, BenchRow, Method,
    ProtocolSplit,
};
pub use synth::{draw_geometry, generate, random_orthogonal, DomainMap, SynthSpec};
