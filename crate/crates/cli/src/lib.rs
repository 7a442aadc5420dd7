//! Library surface of the CLI: command implementations and the trial
//! runner, exposed so integration tests can call them without spawning
//! processes.

pub mod commands;
pub mod runner;
