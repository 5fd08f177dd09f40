//! Secretless workload authentication testbed.
//!
//! An OIDC-style issuer ([`idp`]) mints audience-bound service-account
//! tokens; a token-exchange service ([`sts`]) verifies them against declared
//! trust and hands out short-lived credentials; [`workload`] runs the client
//! side of that exchange. [`legacy`] is the static-key baseline, [`risk`]
//! the comparative risk model and [`scenario`] drives all of it through
//! scripted threat and happy-path runs.

pub mod clock;
pub mod token;
pub mod condition;
pub mod http;
pub mod idp;
pub mod sts;
pub mod legacy;
pub mod risk;
pub mod resource;
pub mod workload;
pub mod scenario;
