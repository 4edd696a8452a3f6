//! Shared helpers for the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use std::collections::BTreeMap;

use glitchsim_core::asm::{layout, parse, ProgramImage, SourceProgram};
use glitchsim_core::isa::{MachineState, Register, Status};
use glitchsim_core::sim::{golden_run, RunLimits, RunResult};

pub fn assemble(text: &str) -> ProgramImage {
    layout(&parse(text).expect("parse"), 0).expect("layout")
}

pub fn assemble_program(program: &SourceProgram) -> ProgramImage {
    layout(program, 0).expect("layout")
}

pub fn golden(image: &ProgramImage) -> RunResult {
    let run = golden_run(image, RunLimits::default());
    assert_eq!(run.state.status, Status::Halted, "golden run must halt");
    run
}

/// Architecturally visible outputs: r0-r12, sp, lr (minus exclusions), the
/// special registers, nonzero RAM bytes and the run status. pc and flags
/// stay out.
pub fn visible_state(
    state: &MachineState,
    exclude: &[Register],
) -> (Vec<u32>, [u32; 3], BTreeMap<u32, u8>, bool) {
    let regs = (0u8..15)
        .filter(|i| !exclude.iter().any(|r| r.index() == *i))
        .map(|i| state.regs[i as usize])
        .collect();
    (regs, state.specials, state.mem.ram_nonzero(), state.status == Status::Halted)
}

pub fn reg(i: u8) -> Register {
    Register::new(i).unwrap()
}
