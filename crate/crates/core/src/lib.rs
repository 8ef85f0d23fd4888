pub mod agent;
pub mod attack;
pub mod buffer;
pub mod data;
pub mod env;
pub mod mi;
pub mod nn;
pub mod privacy;
