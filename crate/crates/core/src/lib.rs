//! Knowledge-centric mobility pipeline for SDN-managed Wi-Fi.
//!
//! The stages follow the data path: [`citysim`] produces raw association
//! events, [`knowlet`] anonymizes and serializes them, [`pipeline`] turns
//! them into multi-order Markov counts held by [`knowstore`],
//! [`disseminate`] serves predictions over HTTP and [`control`] uses them to
//! pre-allocate flows and score prediction quality. [`run`] wires the whole
//! loop together.

pub mod citysim;
pub mod control;
pub mod disseminate;
pub mod knowlet;
pub mod knowstore;
pub mod pipeline;
pub mod run;
