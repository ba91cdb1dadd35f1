pub mod agents;
pub mod attrib;
pub mod eval;
pub mod generate;
pub mod rng;
pub mod scenario;
pub mod scene;
pub mod stats;
pub mod text;
