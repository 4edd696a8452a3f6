//! Instruction subset, registers and machine-state model.
//!
//! The subset covers the dual-width (16/32-bit) Thumb-2 instructions used by
//! the bundled test programs: data moves, add/sub, PC-relative address
//! generation and loads, word stores, compares, branches, `bl`, `bx`, `msr`
//! and `nop`, plus a reserved `halt` sentinel for ending a simulation.

mod state;

pub use state::{ExceptionKind, MachineState, Memory, Status, RAM_BASE, RAM_SIZE, STACK_TOP};

use std::fmt;

/// Count of set bits in a 32-bit word.
pub fn hamming_weight(value: u32) -> u32 {
    value.count_ones()
}

/// A core register, r0..r12 plus sp (r13), lr (r14) and pc (r15).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Register(u8);

pub const SP: Register = Register(13);
pub const LR: Register = Register(14);
pub const PC: Register = Register(15);

impl Register {
    pub fn new(index: u8) -> Result<Self, IsaError> {
        if index <= 15 {
            Ok(Register(index))
        } else {
            Err(IsaError::BadRegister(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// r0-r7, the only registers most 16-bit encodings can name.
    pub fn is_low(self) -> bool {
        self.0 <= 7
    }

    pub fn is_pc(self) -> bool {
        self.0 == 15
    }

    pub fn is_sp(self) -> bool {
        self.0 == 13
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "sp" => Some(SP),
            "lr" => Some(LR),
            "pc" => Some(PC),
            _ => {
                let num = s.strip_prefix('r')?;
                let idx: u8 = num.parse().ok()?;
                (idx <= 15).then_some(Register(idx))
            }
        }
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            13 => write!(f, "sp"),
            14 => write!(f, "lr"),
            15 => write!(f, "pc"),
            n => write!(f, "r{n}"),
        }
    }
}

/// Special registers reachable through `msr`. They hold plain 32-bit values
/// in [`MachineState`] and have no behavioural side effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpecialRegister {
    Control,
    Psp,
    Basepri,
}

impl SpecialRegister {
    pub const ALL: [SpecialRegister; 3] =
        [SpecialRegister::Control, SpecialRegister::Psp, SpecialRegister::Basepri];

    pub fn slot(self) -> usize {
        match self {
            SpecialRegister::Control => 0,
            SpecialRegister::Psp => 1,
            SpecialRegister::Basepri => 2,
        }
    }

    /// System-register number used by the `msr` encoding (SYSm field).
    pub fn sysm(self) -> u8 {
        match self {
            SpecialRegister::Control => 20,
            SpecialRegister::Psp => 9,
            SpecialRegister::Basepri => 17,
        }
    }

    pub fn from_sysm(sysm: u8) -> Option<Self> {
        match sysm {
            20 => Some(SpecialRegister::Control),
            9 => Some(SpecialRegister::Psp),
            17 => Some(SpecialRegister::Basepri),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "control" => Some(SpecialRegister::Control),
            "psp" => Some(SpecialRegister::Psp),
            "basepri" => Some(SpecialRegister::Basepri),
            _ => None,
        }
    }
}

impl fmt::Display for SpecialRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecialRegister::Control => write!(f, "control"),
            SpecialRegister::Psp => write!(f, "psp"),
            SpecialRegister::Basepri => write!(f, "basepri"),
        }
    }
}

/// Encoding width of one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Width {
    Narrow16,
    Wide32,
}

impl Width {
    pub fn bytes(self) -> u32 {
        match self {
            Width::Narrow16 => 2,
            Width::Wide32 => 4,
        }
    }
}

/// Branch condition. Only eq/ne are executable by the subset; everything
/// else in the condition space decodes as valid-but-unsupported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
}

impl Cond {
    pub fn code(self) -> u8 {
        match self {
            Cond::Eq => 0,
            Cond::Ne => 1,
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Eq => write!(f, "eq"),
            Cond::Ne => write!(f, "ne"),
        }
    }
}

/// A branch or address-generation target: a label before layout, a resolved
/// PC-relative byte offset afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    Label(String),
    /// Byte offset relative to the PC read (instruction address + 4).
    Resolved(i32),
}

impl Target {
    pub fn label(name: &str) -> Self {
        Target::Label(name.to_string())
    }
}

/// What a literal load refers to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LitTarget {
    /// A literal-pool slot. Slots with the same id share one pool entry;
    /// each parsed `ldr rX, =...` gets a fresh id.
    Pool { id: u32, value: PoolValue },
    /// Raw `[pc, #off]` form; offset from Align(PC, 4).
    PcRel(i32),
}

/// Value placed in a literal-pool slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PoolValue {
    Imm(u32),
    Label(String),
}

/// Operation plus operands, before width selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    /// mov/movs rd, rm
    MovReg { rd: Register, rm: Register, setflags: bool },
    /// mov.w/movs rd, #imm
    MovImm { rd: Register, imm: u32, setflags: bool },
    /// add/adds rd, rn, #imm
    AddImm { rd: Register, rn: Register, imm: u32, setflags: bool },
    /// add/adds rd, rn, rm
    AddReg { rd: Register, rn: Register, rm: Register, setflags: bool },
    /// sub/subs rd, rn, #imm
    SubImm { rd: Register, rn: Register, imm: u32, setflags: bool },
    /// sub/subs rd, rn, rm
    SubReg { rd: Register, rn: Register, rm: Register, setflags: bool },
    /// adr rd, label — PC-relative address generation, forward only.
    Adr { rd: Register, target: Target },
    /// ldr rt, =value / ldr rt, [pc, #off]
    LdrLit { rt: Register, target: LitTarget },
    /// ldr rt, [rn, #off]
    LdrImm { rt: Register, rn: Register, offset: u32 },
    /// str rt, [rn, #off]
    StrImm { rt: Register, rn: Register, offset: u32 },
    /// cmp rn, #imm
    CmpImm { rn: Register, imm: u32 },
    /// cmp rn, rm
    CmpReg { rn: Register, rm: Register },
    /// beq/bne label
    BCond { cond: Cond, target: Target },
    /// b label
    B { target: Target },
    /// bl label
    Bl { target: Target },
    /// bx rm
    Bx { rm: Register },
    /// msr special, rn
    Msr { spec: SpecialRegister, rn: Register },
    Nop,
    /// Reserved halt directive; assembles to the bkpt #0 sentinel.
    Halt,
}

impl Op {
    /// Mnemonic as written in source, used by rewrite scope filters.
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Op::MovReg { setflags: false, .. } | Op::MovImm { setflags: false, .. } => "mov",
            Op::MovReg { setflags: true, .. } | Op::MovImm { setflags: true, .. } => "movs",
            Op::AddImm { setflags: false, .. } | Op::AddReg { setflags: false, .. } => "add",
            Op::AddImm { setflags: true, .. } | Op::AddReg { setflags: true, .. } => "adds",
            Op::SubImm { setflags: false, .. } | Op::SubReg { setflags: false, .. } => "sub",
            Op::SubImm { setflags: true, .. } | Op::SubReg { setflags: true, .. } => "subs",
            Op::Adr { .. } => "adr",
            Op::LdrLit { .. } | Op::LdrImm { .. } => "ldr",
            Op::StrImm { .. } => "str",
            Op::CmpImm { .. } | Op::CmpReg { .. } => "cmp",
            Op::BCond { .. } | Op::B { .. } => "b",
            Op::Bl { .. } => "bl",
            Op::Bx { .. } => "bx",
            Op::Msr { .. } => "msr",
            Op::Nop => "nop",
            Op::Halt => "halt",
        }
    }

    /// Destination general register, if the instruction writes one.
    pub fn dest_reg(&self) -> Option<Register> {
        match self {
            Op::MovReg { rd, .. }
            | Op::MovImm { rd, .. }
            | Op::AddImm { rd, .. }
            | Op::AddReg { rd, .. }
            | Op::SubImm { rd, .. }
            | Op::SubReg { rd, .. }
            | Op::Adr { rd, .. } => Some(*rd),
            Op::LdrLit { rt, .. } | Op::LdrImm { rt, .. } => Some(*rt),
            _ => None,
        }
    }

    /// General registers read by the instruction (pc excluded).
    pub fn source_regs(&self) -> Vec<Register> {
        match self {
            Op::MovReg { rm, .. } => vec![*rm],
            Op::AddImm { rn, .. } | Op::SubImm { rn, .. } => vec![*rn],
            Op::AddReg { rn, rm, .. } | Op::SubReg { rn, rm, .. } => vec![*rn, *rm],
            Op::LdrImm { rn, .. } => vec![*rn],
            Op::StrImm { rt, rn, .. } => vec![*rt, *rn],
            Op::CmpImm { rn, .. } => vec![*rn],
            Op::CmpReg { rn, rm } => vec![*rn, *rm],
            Op::Bx { rm } => vec![*rm],
            Op::Msr { rn, .. } => vec![*rn],
            _ => Vec::new(),
        }
    }

    /// Every general register named by any operand.
    pub fn referenced_regs(&self) -> Vec<Register> {
        let mut regs = self.source_regs();
        if let Some(rd) = self.dest_reg() {
            regs.push(rd);
        }
        regs
    }

    fn is_branch(&self) -> bool {
        matches!(self, Op::BCond { .. } | Op::B { .. } | Op::Bl { .. } | Op::Bx { .. })
    }
}

/// One subset instruction with its chosen encoding width.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    op: Op,
    width: Width,
}

impl Instruction {
    /// Builds an instruction, selecting the narrow encoding when the operand
    /// shapes permit one and the wide encoding otherwise (operands in r8-r14
    /// force a 32-bit size, as do `bl`, `msr` and flag-preserving immediates).
    pub fn new(op: Op) -> Result<Self, IsaError> {
        Self::check_operands(&op)?;
        let width = if narrow_ok(&op) {
            Width::Narrow16
        } else if wide_ok(&op) {
            Width::Wide32
        } else {
            return Err(IsaError::NotEncodable(format!("{op:?}")));
        };
        Ok(Instruction { op, width })
    }

    /// Builds an instruction with an explicitly requested width
    /// (the `.w` suffix path). The request is honoured or rejected,
    /// never silently changed.
    pub fn with_width(op: Op, width: Width) -> Result<Self, IsaError> {
        Self::check_operands(&op)?;
        let ok = match width {
            Width::Narrow16 => narrow_ok(&op),
            Width::Wide32 => wide_ok(&op),
        };
        if ok {
            Ok(Instruction { op, width })
        } else {
            Err(IsaError::WidthUnavailable { op: op.mnemonic(), width })
        }
    }

    /// Rebuilds an instruction whose width was validated earlier with a
    /// freshly resolved target; the encoder does the precise range check.
    pub(crate) fn with_width_unchecked(op: Op, width: Width) -> Self {
        Instruction { op, width }
    }

    fn check_operands(op: &Op) -> Result<(), IsaError> {
        if !op.is_branch() {
            if op.dest_reg().map(Register::is_pc).unwrap_or(false) {
                return Err(IsaError::PcWrite(op.mnemonic()));
            }
            if op.source_regs().iter().any(|r| r.is_pc()) {
                return Err(IsaError::PcOperand(op.mnemonic()));
            }
        }
        if let Op::Msr { rn, .. } = op {
            if rn.is_pc() || rn.is_sp() {
                return Err(IsaError::PcOperand("msr"));
            }
        }
        Ok(())
    }

    pub fn op(&self) -> &Op {
        &self.op
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn size(&self) -> u32 {
        self.width.bytes()
    }

    /// Same operation re-validated at the wide width, when one exists.
    pub fn widened(&self) -> Result<Self, IsaError> {
        Self::with_width(self.op.clone(), Width::Wide32)
    }

    /// True when no 32-bit encoding exists for this operation (`bx`, `halt`).
    pub fn narrow_only(&self) -> bool {
        !wide_ok(&self.op)
    }

    pub fn into_op(self) -> Op {
        self.op
    }
}

/// Branch-offset check: labels defer to layout, resolved offsets must fit.
fn branch_fits(target: &Target, min: i32, max: i32) -> bool {
    match target {
        Target::Label(_) => true,
        Target::Resolved(off) => *off >= min && *off <= max && off % 2 == 0,
    }
}

/// Aligned-base offset check for adr and literal loads.
fn pcrel_fits(off: i32, min: i32, max: i32, word_aligned: bool) -> bool {
    off >= min && off <= max && (!word_aligned || off % 4 == 0)
}

/// Whether the canonical 16-bit encoding can express the operation.
fn narrow_ok(op: &Op) -> bool {
    let enc_imm = |imm: u32, max: u32| imm <= max;
    match op {
        Op::MovReg { rd, rm, setflags: false } => !rd.is_pc() && !rm.is_pc(),
        Op::MovReg { rd, rm, setflags: true } => rd.is_low() && rm.is_low(),
        Op::MovImm { rd, imm, setflags: true } => rd.is_low() && enc_imm(*imm, 255),
        Op::MovImm { setflags: false, .. } => false,
        Op::AddImm { rd, rn, imm, setflags: true } | Op::SubImm { rd, rn, imm, setflags: true } => {
            (rd.is_low() && rn.is_low() && enc_imm(*imm, 7))
                || (rd == rn && rd.is_low() && enc_imm(*imm, 255))
        }
        Op::AddImm { setflags: false, .. } | Op::SubImm { setflags: false, .. } => false,
        Op::AddReg { rd, rn, rm, setflags: true } | Op::SubReg { rd, rn, rm, setflags: true } => {
            rd.is_low() && rn.is_low() && rm.is_low()
        }
        Op::AddReg { setflags: false, .. } | Op::SubReg { setflags: false, .. } => false,
        Op::Adr { rd, target } => {
            rd.is_low()
                && match target {
                    Target::Label(_) => true,
                    Target::Resolved(off) => pcrel_fits(*off, 0, 1020, true),
                }
        }
        Op::LdrLit { rt, target } => {
            rt.is_low()
                && match target {
                    LitTarget::Pool { .. } => true,
                    LitTarget::PcRel(off) => pcrel_fits(*off, 0, 1020, true),
                }
        }
        Op::LdrImm { rt, rn, offset } | Op::StrImm { rt, rn, offset } => {
            offset % 4 == 0
                && ((rt.is_low() && rn.is_low() && *offset <= 124)
                    || (rt.is_low() && rn.is_sp() && *offset <= 1020))
        }
        Op::CmpImm { rn, imm } => rn.is_low() && enc_imm(*imm, 255),
        Op::CmpReg { rn, rm } => rn.is_low() && rm.is_low(),
        Op::BCond { target, .. } => branch_fits(target, -256, 254),
        Op::B { target } => branch_fits(target, -2048, 2046),
        Op::Bl { .. } => false,
        Op::Bx { .. } => true,
        Op::Msr { .. } => false,
        Op::Nop => true,
        Op::Halt => true,
    }
}

/// Whether a 32-bit encoding can express the operation.
fn wide_ok(op: &Op) -> bool {
    match op {
        Op::MovReg { .. } | Op::AddReg { .. } | Op::SubReg { .. } | Op::CmpReg { .. } => true,
        Op::MovImm { imm, .. } | Op::CmpImm { imm, .. } => thumb_expand_encodable(*imm),
        Op::AddImm { imm, .. } | Op::SubImm { imm, .. } => thumb_expand_encodable(*imm),
        Op::Adr { target, .. } => match target {
            Target::Label(_) => true,
            Target::Resolved(off) => pcrel_fits(*off, 0, 4095, false),
        },
        Op::LdrLit { target, .. } => match target {
            LitTarget::Pool { .. } => true,
            LitTarget::PcRel(off) => pcrel_fits(*off, -4095, 4095, false),
        },
        Op::LdrImm { offset, .. } | Op::StrImm { offset, .. } => *offset <= 4095,
        Op::BCond { target, .. } => branch_fits(target, -(1 << 20), (1 << 20) - 2),
        Op::B { target } | Op::Bl { target } => branch_fits(target, -(1 << 24), (1 << 24) - 2),
        Op::Bx { .. } => false,
        Op::Msr { .. } => true,
        Op::Nop => true,
        Op::Halt => false,
    }
}

/// True when `value` fits the Thumb modified-immediate scheme
/// (ARMv7-M A5.3.2): an 8-bit value, one of the byte-splat patterns,
/// or an 8-bit value with a leading 1 rotated into place.
pub fn thumb_expand_encodable(value: u32) -> bool {
    thumb_expand_imm12(value).is_some()
}

/// Finds the imm12 field (i:imm3:imm8) encoding `value`, if any.
pub fn thumb_expand_imm12(value: u32) -> Option<u16> {
    if value <= 0xFF {
        return Some(value as u16);
    }
    let low = value & 0xFF;
    if value == low | (low << 16) {
        return Some(0x100 | low as u16);
    }
    let mid = (value >> 8) & 0xFF;
    if value == (mid << 8) | (mid << 24) {
        return Some(0x200 | mid as u16);
    }
    if value == low | (low << 8) | (low << 16) | (low << 24) {
        return Some(0x300 | low as u16);
    }
    // Rotated form: an 8-bit value with bit 7 set, rotated right by 8..=31.
    for rot in 8u32..32 {
        let unrotated = value.rotate_left(rot);
        if (0x80..=0xFF).contains(&unrotated) {
            let imm7 = (unrotated & 0x7F) as u16;
            return Some(((rot as u16) << 7) | imm7);
        }
    }
    None
}

/// Expands an imm12 field back to its 32-bit value (ARMv7-M A5.3.2).
pub fn thumb_expand_imm(imm12: u16) -> Option<u32> {
    let imm12 = imm12 & 0xFFF;
    let imm8 = (imm12 & 0xFF) as u32;
    if imm12 & 0xC00 == 0 {
        match (imm12 >> 8) & 0x3 {
            0b00 => Some(imm8),
            0b01 => (imm8 != 0).then_some(imm8 | (imm8 << 16)),
            0b10 => (imm8 != 0).then_some((imm8 << 8) | (imm8 << 24)),
            _ => (imm8 != 0).then_some(imm8 | (imm8 << 8) | (imm8 << 16) | (imm8 << 24)),
        }
    } else {
        let unrotated = 0x80 | (imm8 & 0x7F);
        let rot = (imm12 >> 7) & 0x1F;
        Some(unrotated.rotate_right(rot as u32))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IsaError {
    #[error("register index {0} out of range")]
    BadRegister(u8),
    #[error("{0} must not write pc")]
    PcWrite(&'static str),
    #[error("{0} must not use pc as a data operand")]
    PcOperand(&'static str),
    #[error("no encoding available for {0}")]
    NotEncodable(String),
    #[error("{op} has no {width:?} encoding for these operands")]
    WidthUnavailable { op: &'static str, width: Width },
}
