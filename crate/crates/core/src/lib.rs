pub mod packet;
pub mod sim;
pub mod tcp;
pub mod tunnel;
pub mod wire;
pub mod wireless;
pub mod ap;
pub mod overhead;
pub mod gateway;
pub mod scenario;
pub mod world;
pub mod metrics;
pub mod shaper_study;
pub mod experiment;
