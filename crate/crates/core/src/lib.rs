pub mod design_space;
pub mod mapping;
pub mod ppac;
pub mod cost;
pub mod sa;
pub mod backends;
pub mod agent;
pub mod analysis;
