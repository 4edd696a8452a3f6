//! Fetch/decode/execute simulator with fault-injection hook points.
//!
//! The pipeline is an event stream, not cycle-accurate stages: one
//! [`FetchEvent`] per newly entered 4-aligned code word (the second halfword
//! of a word is buffered, as the hardware does), one [`LoadEvent`] per data
//! word a load instruction pulls in. These are exactly the two corruption
//! sites of the fault model, plus an instruction-level hook the skip faults
//! use. A wide instruction straddling two fetch words consumes both, so a
//! corruption on either word corrupts the instruction.

use crate::asm::decode::{classify_halfword, decode_wide, Decoded, HalfwordClass};
use crate::asm::{AsmError, ProgramImage};
use crate::isa::{
    Cond, ExceptionKind, LitTarget, MachineState, Memory, Op, Status, Target,
};
use std::sync::Arc;

/// One 32-bit word read from instruction memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchEvent {
    pub index: u64,
    /// 4-aligned address.
    pub addr: u32,
    /// Raw word as stored; hooks see and may replace it.
    pub word: u32,
}

/// One data word read by a load instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadEvent {
    pub index: u64,
    pub addr: u32,
    pub value: u32,
}

/// Chronological trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Fetch(FetchEvent),
    Load(LoadEvent),
}

/// Injection points offered to a fault specification. Implementations must
/// be pure functions of (event, spec): a run is replayed bit-for-bit
/// whenever the same hooks observe the same events.
pub trait FaultHooks {
    /// May replace the fetched word.
    fn on_fetch(&self, event: &FetchEvent) -> u32 {
        event.word
    }
    /// May replace the loaded value.
    fn on_load(&self, event: &LoadEvent) -> u32 {
        event.value
    }
    /// May replace the halfwords of the instruction about to be decoded;
    /// `event` is the fetch event that delivered the first halfword and
    /// `slot` its halfword position (0 or 1) within that word.
    fn on_instruction(&self, event: u64, slot: u8, halfwords: &mut Vec<u16>) {
        let _ = (event, slot, halfwords);
    }
}

/// Identity hooks: the plain, fault-free run.
pub struct NoFaults;

impl FaultHooks for NoFaults {}

#[derive(Debug, Clone, Copy)]
pub struct RunLimits {
    pub max_steps: u64,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { max_steps: 10_000 }
    }
}

/// Everything a finished run exposes.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: MachineState,
    pub trace: Vec<TraceEvent>,
    pub steps: u64,
    /// Whether execution ever arrived at the watched address.
    pub watch_hit: bool,
}

impl RunResult {
    pub fn fetch_events(&self) -> impl Iterator<Item = &FetchEvent> {
        self.trace.iter().filter_map(|e| match e {
            TraceEvent::Fetch(f) => Some(f),
            _ => None,
        })
    }

    pub fn load_events(&self) -> impl Iterator<Item = &LoadEvent> {
        self.trace.iter().filter_map(|e| match e {
            TraceEvent::Load(l) => Some(l),
            _ => None,
        })
    }

    pub fn fetch_count(&self) -> u64 {
        self.fetch_events().count() as u64
    }

    pub fn load_count(&self) -> u64 {
        self.load_events().count() as u64
    }
}

/// Renders the trace, one line per event: `F index addr word`,
/// `L index addr value`.
pub fn trace_dump(result: &RunResult) -> String {
    let mut out = String::new();
    for event in &result.trace {
        match event {
            TraceEvent::Fetch(f) => {
                out.push_str(&format!("F {} {:08X} {:08X}\n", f.index, f.addr, f.word))
            }
            TraceEvent::Load(l) => {
                out.push_str(&format!("L {} {:08X} {:08X}\n", l.index, l.addr, l.value))
            }
        }
    }
    out
}

/// Fresh reset state with the image mapped read-only and pc at its entry.
pub fn initial_state(image: &ProgramImage) -> MachineState {
    let mem = Memory::new(image.base, Arc::new(image.bytes.clone()));
    MachineState::reset(mem, image.entry)
}

/// The 4-aligned fetch word containing `addr`; pure, image-level.
pub fn fetch_word_of(image: &ProgramImage, addr: u32) -> Result<(u32, u32), AsmError> {
    image.fetch_word_of(addr)
}

struct Machine<'h> {
    state: MachineState,
    trace: Vec<TraceEvent>,
    fetch_counter: u64,
    load_counter: u64,
    /// Last fetched word: (aligned address, post-hook word, event index).
    buffer: Option<(u32, u32, u64)>,
    hooks: &'h dyn FaultHooks,
}

impl Machine<'_> {
    fn raise(&mut self, kind: ExceptionKind, at: u32) {
        self.state.status = Status::Exception { kind, faulting_address: at };
    }

    /// Word containing `addr`, fetching (and running hooks) only when the
    /// buffer does not already hold that aligned word.
    fn fetch_word(&mut self, addr: u32) -> Option<(u32, u64)> {
        let aligned = addr & !3;
        if let Some((buf_addr, word, index)) = self.buffer {
            if buf_addr == aligned {
                return Some((word, index));
            }
        }
        let raw = match self.state.mem.read_word(aligned) {
            Ok(w) => w,
            Err(_) => {
                self.raise(ExceptionKind::MemoryFault, self.state.pc());
                return None;
            }
        };
        let event = FetchEvent { index: self.fetch_counter, addr: aligned, word: raw };
        self.fetch_counter += 1;
        let hooked = self.hooks.on_fetch(&event);
        self.trace.push(TraceEvent::Fetch(event));
        self.buffer = Some((aligned, hooked, event.index));
        Some((hooked, event.index))
    }

    fn halfword_at(&mut self, addr: u32) -> Option<(u16, u64)> {
        let (word, index) = self.fetch_word(addr)?;
        let hw = if addr & 2 == 0 { word as u16 } else { (word >> 16) as u16 };
        Some((hw, index))
    }

    /// One fetch-decode-execute step.
    fn step(&mut self) {
        let pc = self.state.pc();
        let Some((hw1, event)) = self.halfword_at(pc) else { return };
        let slot = ((pc >> 1) & 1) as u8;

        let mut halfwords = vec![hw1];
        if matches!(classify_halfword(hw1), HalfwordClass::WidePrefix) {
            let Some((hw2, _)) = self.halfword_at(pc.wrapping_add(2)) else { return };
            halfwords.push(hw2);
        }
        self.hooks.on_instruction(event, slot, &mut halfwords);
        if halfwords.len() == 2 {
            // A replaced second halfword must stay visible in the fetched
            // stream: a skipped wide instruction decodes as two nops, the
            // second of which the next step reads back from the buffer.
            self.patch_buffer(pc.wrapping_add(2), halfwords[1]);
        }

        let (decoded, size) = match classify_halfword(halfwords[0]) {
            HalfwordClass::Narrow(d) => (d, 2),
            HalfwordClass::WidePrefix => {
                if halfwords.len() < 2 {
                    let Some((hw2, _)) = self.halfword_at(pc.wrapping_add(2)) else { return };
                    halfwords.push(hw2);
                }
                (decode_wide(halfwords[0], halfwords[1]), 4)
            }
        };

        match decoded {
            Decoded::Undefined => self.raise(ExceptionKind::UndefinedInstruction, pc),
            Decoded::Unsupported => self.raise(ExceptionKind::UnsupportedInstruction, pc),
            Decoded::Instr(instr) => self.execute(instr.op(), pc, size),
        }
    }

    fn patch_buffer(&mut self, addr: u32, hw: u16) {
        let aligned = addr & !3;
        if let Some((buf_addr, word, _)) = self.buffer.as_mut() {
            if *buf_addr == aligned {
                *word = if addr & 2 == 0 {
                    (*word & 0xFFFF_0000) | hw as u32
                } else {
                    (*word & 0x0000_FFFF) | ((hw as u32) << 16)
                };
            }
        }
    }

    fn execute(&mut self, op: &Op, pc: u32, size: u32) {
        let mut next_pc = pc.wrapping_add(size);
        let branch_base = pc.wrapping_add(4);
        let aligned_base = branch_base & !3;
        match op {
            Op::MovReg { rd, rm, setflags } => {
                let v = self.state.reg(*rm);
                self.state.set_reg(*rd, v);
                if *setflags {
                    self.set_nz(v);
                }
            }
            Op::MovImm { rd, imm, setflags } => {
                self.state.set_reg(*rd, *imm);
                if *setflags {
                    self.set_nz(*imm);
                }
            }
            Op::AddImm { rd, rn, imm, setflags } => {
                let v = self.add(self.state.reg(*rn), *imm, *setflags);
                self.state.set_reg(*rd, v);
            }
            Op::AddReg { rd, rn, rm, setflags } => {
                let v = self.add(self.state.reg(*rn), self.state.reg(*rm), *setflags);
                self.state.set_reg(*rd, v);
            }
            Op::SubImm { rd, rn, imm, setflags } => {
                let v = self.sub(self.state.reg(*rn), *imm, *setflags);
                self.state.set_reg(*rd, v);
            }
            Op::SubReg { rd, rn, rm, setflags } => {
                let v = self.sub(self.state.reg(*rn), self.state.reg(*rm), *setflags);
                self.state.set_reg(*rd, v);
            }
            Op::CmpImm { rn, imm } => {
                self.sub(self.state.reg(*rn), *imm, true);
            }
            Op::CmpReg { rn, rm } => {
                self.sub(self.state.reg(*rn), self.state.reg(*rm), true);
            }
            Op::Adr { rd, target } => {
                let off = resolved_or_zero(target);
                self.state.set_reg(*rd, aligned_base.wrapping_add_signed(off));
            }
            Op::LdrLit { rt, target } => {
                let ea = match target {
                    LitTarget::PcRel(off) => aligned_base.wrapping_add_signed(*off),
                    LitTarget::Pool { .. } => {
                        // Unreachable for decoded instructions.
                        self.raise(ExceptionKind::UnsupportedInstruction, pc);
                        return;
                    }
                };
                if self.load(*rt, ea, pc).is_none() {
                    return;
                }
            }
            Op::LdrImm { rt, rn, offset } => {
                let ea = self.state.reg(*rn).wrapping_add(*offset);
                if self.load(*rt, ea, pc).is_none() {
                    return;
                }
            }
            Op::StrImm { rt, rn, offset } => {
                let ea = self.state.reg(*rn).wrapping_add(*offset);
                if ea % 4 != 0 {
                    self.raise(ExceptionKind::UnalignedAccess, pc);
                    return;
                }
                if self.state.mem.write_word(ea, self.state.reg(*rt)).is_err() {
                    self.raise(ExceptionKind::MemoryFault, pc);
                    return;
                }
            }
            Op::BCond { cond, target } => {
                let taken = match cond {
                    Cond::Eq => self.state.flags.z,
                    Cond::Ne => !self.state.flags.z,
                };
                if taken {
                    next_pc = branch_base.wrapping_add_signed(resolved_or_zero(target));
                }
            }
            Op::B { target } => {
                next_pc = branch_base.wrapping_add_signed(resolved_or_zero(target));
            }
            Op::Bl { target } => {
                self.state.set_reg(crate::isa::LR, pc.wrapping_add(size) | 1);
                next_pc = branch_base.wrapping_add_signed(resolved_or_zero(target));
            }
            Op::Bx { rm } => {
                let v = self.state.reg(*rm);
                if v & 0xFF00_0000 == 0xFF00_0000 {
                    // EXC_RETURN-style sentinel: the program is done.
                    self.state.status = Status::Halted;
                    return;
                }
                next_pc = v & !1;
            }
            Op::Msr { spec, rn } => {
                let v = self.state.reg(*rn);
                self.state.set_special(*spec, v);
            }
            Op::Nop => {}
            Op::Halt => {
                self.state.status = Status::Halted;
                return;
            }
        }
        self.state.set_pc(next_pc);
    }

    fn load(&mut self, rt: crate::isa::Register, ea: u32, pc: u32) -> Option<()> {
        if !ea.is_multiple_of(4) {
            self.raise(ExceptionKind::UnalignedAccess, pc);
            return None;
        }
        let raw = match self.state.mem.read_word(ea) {
            Ok(v) => v,
            Err(_) => {
                self.raise(ExceptionKind::MemoryFault, pc);
                return None;
            }
        };
        let event = LoadEvent { index: self.load_counter, addr: ea, value: raw };
        self.load_counter += 1;
        let value = self.hooks.on_load(&event);
        self.trace.push(TraceEvent::Load(event));
        self.state.set_reg(rt, value);
        Some(())
    }

    fn set_nz(&mut self, v: u32) {
        self.state.flags.n = v & 0x8000_0000 != 0;
        self.state.flags.z = v == 0;
    }

    fn add(&mut self, a: u32, b: u32, setflags: bool) -> u32 {
        let (res, carry) = a.overflowing_add(b);
        if setflags {
            self.set_nz(res);
            self.state.flags.c = carry;
            self.state.flags.v = ((a ^ res) & (b ^ res)) >> 31 != 0;
        }
        res
    }

    fn sub(&mut self, a: u32, b: u32, setflags: bool) -> u32 {
        let res = a.wrapping_sub(b);
        if setflags {
            self.set_nz(res);
            self.state.flags.c = a >= b;
            self.state.flags.v = ((a ^ b) & (a ^ res)) >> 31 != 0;
        }
        res
    }
}

fn resolved_or_zero(target: &Target) -> i32 {
    match target {
        Target::Resolved(off) => *off,
        Target::Label(_) => 0,
    }
}

/// Runs `initial` against the image until halt, exception or `max_steps`.
///
/// `watch` names an address (typically the error-handler label) whose mere
/// reach is recorded in the result. States that are not `Running` return
/// unchanged: status transitions are monotone.
pub fn run(
    image: &ProgramImage,
    initial: MachineState,
    limits: RunLimits,
    hooks: &dyn FaultHooks,
    watch: Option<u32>,
) -> RunResult {
    debug_assert!(
        !initial.is_running() || (initial.pc() >= image.base && initial.pc() < image.end()),
        "pc must point into the image"
    );
    let mut machine = Machine {
        state: initial,
        trace: Vec::new(),
        fetch_counter: 0,
        load_counter: 0,
        buffer: None,
        hooks,
    };
    let mut steps = 0u64;
    let mut watch_hit = false;

    while machine.state.is_running() {
        if watch == Some(machine.state.pc()) {
            watch_hit = true;
        }
        if steps >= limits.max_steps {
            machine.state.status = Status::Timeout;
            break;
        }
        machine.step();
        steps += 1;
    }

    RunResult { state: machine.state, trace: machine.trace, steps, watch_hit }
}

/// Fault-free run from the reset state: the golden reference.
pub fn golden_run(image: &ProgramImage, limits: RunLimits) -> RunResult {
    run(image, initial_state(image), limits, &NoFaults, image.error_handler)
}
