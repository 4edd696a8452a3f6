//! Bundled benchmark programs with golden expectations.
//!
//! Five fixtures cover the scenarios the campaigns reproduce: a bare
//! literal load, an isolated subroutine call, a detection-ready load, a
//! privilege-dropping context restore, and the argument setup in front of
//! a task-creation call.

use crate::campaign::TargetObservable;
use crate::isa::{Register, SpecialRegister};

/// One canonical fixture.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
    pub target: TargetObservable,
    pub golden_value: u32,
    pub has_error_handler: bool,
    pub notes: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("unknown benchmark `{0}`")]
    Unknown(String),
}

pub const NAMES: [&str; 5] =
    ["load_cafecafe", "bl_call", "ldr_detect", "restore_context", "task_create_args"];

fn r(i: u8) -> Register {
    Register::new(i).unwrap()
}

/// Returns the named fixture.
pub fn load_benchmark(name: &str) -> Result<Benchmark, BenchError> {
    let bench = match name {
        "load_cafecafe" => Benchmark {
            name: "load_cafecafe",
            source: include_str!("../benchmarks/load_cafecafe.s"),
            target: TargetObservable::Reg(r(0)),
            golden_value: 0xCAFE_CAFE,
            has_error_handler: false,
            notes: "single pc-relative literal load; expected Hamming weight 22",
        },
        "bl_call" => Benchmark {
            name: "bl_call",
            source: include_str!("../benchmarks/bl_call.s"),
            target: TargetObservable::Reg(r(0)),
            golden_value: 42,
            has_error_handler: false,
            notes: "isolated subroutine call; the callee only writes r0",
        },
        "ldr_detect" => Benchmark {
            name: "ldr_detect",
            source: include_str!("../benchmarks/ldr_detect.s"),
            target: TargetObservable::Reg(r(0)),
            golden_value: 0xCAFE_CAFE,
            has_error_handler: true,
            notes: "literal load with an error handler for detection rewrites",
        },
        "restore_context" => Benchmark {
            name: "restore_context",
            source: include_str!("../benchmarks/restore_context.s"),
            target: TargetObservable::Special(SpecialRegister::Control),
            golden_value: 0x3,
            has_error_handler: false,
            notes: "context-restore tail; skipping the msr leaves CONTROL privileged",
        },
        "task_create_args" => Benchmark {
            name: "task_create_args",
            source: include_str!("../benchmarks/task_create_args.s"),
            target: TargetObservable::StackWord(0),
            golden_value: 5,
            has_error_handler: true,
            notes: "task-creation argument window; the stacked priority word is the target",
        },
        other => return Err(BenchError::Unknown(other.to_string())),
    };
    Ok(bench)
}

/// Golden-expectation manifest, one section per fixture.
pub fn manifest() -> String {
    let mut out = String::from("# benchmark manifest: golden expectations\n");
    for name in NAMES {
        let b = load_benchmark(name).unwrap();
        out.push_str(&format!(
            "[{}]\ntarget = {}\ngolden = {:#010x}\nerror_handler = {}\nnotes = {}\n",
            b.name, b.target, b.golden_value, b.has_error_handler, b.notes
        ));
    }
    out
}
