//! Assembles a dual-width Thumb-2 subset, applies two assembly-level fault
//! countermeasures (fault-tolerance replacement sequences and
//! fault-detection duplication), and evaluates them under a simulated fault
//! model of fetch-word corruption, load-data corruption and instruction
//! skip.
//!
//! Modules follow the pipeline: [`asm`] parses and lays out programs,
//! [`sim`] executes images through an instrumented fetch/decode/execute
//! loop, [`fault`] describes the injected faults, [`rewrite`] hardens
//! programs, [`campaign`] sweeps fault catalogs and classifies the
//! outcomes, and [`bench`] bundles the canonical test programs.

pub mod asm;
pub mod bench;
pub mod campaign;
pub mod fault;
pub mod isa;
pub mod rewrite;
pub mod sim;
