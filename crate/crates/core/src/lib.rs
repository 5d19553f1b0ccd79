//! Verifier-in-the-loop proof search.
//!
//! A stepwise beam prover proposes single tactic steps and checks each one
//! against a proof-checker backend; a planner samples structured outlines
//! with explicit holes and closes them by filling (stepwise search on the
//! local goal) and counterexample-guided block repair. The checker and the
//! language model are pluggable; deterministic mock backends make the whole
//! pipeline reproducible without either.

pub mod fingerprint;
pub mod script_model;
pub mod service;
pub mod datalog;
pub mod hints;
pub mod planner;
pub mod premises;
pub mod proposer;
pub mod rerank;
pub mod session;
pub mod stepwise;
pub mod tokenize;
pub mod verifier;
