pub mod graph;
pub mod synth;
pub mod literature;
pub mod telemetry;
pub mod datakg;
pub mod reasoning;
pub mod evaluation;
