pub mod geometry;
pub mod oracle;
pub mod synth;
pub mod render;
pub mod model;
pub mod infer;
pub mod eval;
