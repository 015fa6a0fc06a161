//! Iterative reproduction of published statistical results: extract a
//! specification from the paper, generate analysis code, run it in a
//! sandboxed worker, score the output against the published result and feed
//! the discrepancies back into the next attempt.

pub mod canonical;
pub mod cli;
pub mod code_loop;
pub mod controller;
pub mod evaluator;
pub mod ingest;
pub mod llm;
pub mod prompts;
pub mod sandbox;
pub mod spec_gen;
