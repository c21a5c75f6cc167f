//! Multi-agent epidemiological surveillance pipeline.
//!
//! A manager agent splits an analyst's question into subtasks for three
//! specialists (literature, mortality statistics, outbreak notices), runs
//! them concurrently, checks their findings against each other and writes a
//! cited briefing. Every step is streamed as a [`events::StreamEvent`].

pub mod builtin;
pub mod cdc_wonder;
pub mod events;
pub mod gateway;
pub mod mock;
pub mod orchestrator;
pub mod pubmed;
pub mod report;
pub mod tools;
pub mod transport;
pub mod who_dons;
