pub mod geo;
pub mod demand;
pub mod dispatch;
pub mod reposition;
pub mod validation;
pub mod metrics;
pub mod sim;
pub mod synth;
