//! Deterministic online service with deadlines and with delay on finite
//! metric spaces, an exact offline optimum for small instances, and an
//! executable charging analysis that audits every service against it.

pub mod analysis;
pub mod deadline_engine;
pub mod delay_engine;
pub mod generate;
pub mod instance;
pub mod level;
pub mod metric;
pub mod offline_oracle;
pub mod pipeline;
pub mod steiner;
pub mod tolerance;
