pub mod bench;
pub mod correction;
pub mod embedding;
pub mod emulator;
pub mod fixed;
pub mod instances;
pub mod nodeset;
pub mod partition;
pub mod pulses;
pub mod sampler;
pub mod samples;
pub mod schedgraph;
pub mod seeds;
