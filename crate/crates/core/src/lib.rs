pub mod foundation;
pub mod stats;
pub mod corpus;
pub mod retry;
pub mod scaffold;
pub mod instruments;
pub mod persona;
pub mod gateway;
pub mod experiment;
pub mod report;
pub mod config;
