//! File formats, configuration, plotting and command implementations around
//! `cbc-core`.

pub mod config;
pub mod error;
pub mod external;
pub mod plot;
pub mod report;
pub mod run;
pub mod solution;
pub mod trajectory;
