//! Instruction encoding for the subset, following the ARMv7-M ARM field
//! layouts. One canonical encoding is emitted per (operation, width); where
//! the manual offers alternatives the choice is documented on the match arm.

use crate::isa::{thumb_expand_imm12, Instruction, LitTarget, Op, Target, Width};

use super::AsmError;

/// Encoded bytes of one instruction, halfwords in stream order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Narrow(u16),
    Wide(u16, u16),
}

impl Encoding {
    pub fn bytes(self) -> Vec<u8> {
        match self {
            Encoding::Narrow(hw) => hw.to_le_bytes().to_vec(),
            Encoding::Wide(hw1, hw2) => {
                let mut v = hw1.to_le_bytes().to_vec();
                v.extend_from_slice(&hw2.to_le_bytes());
                v
            }
        }
    }
}

fn resolved(target: &Target) -> Result<i32, AsmError> {
    match target {
        Target::Resolved(off) => Ok(*off),
        Target::Label(name) => Err(AsmError::Unresolved(name.clone())),
    }
}

fn check_range(off: i32, min: i32, max: i32, what: &str) -> Result<(), AsmError> {
    if off < min || off > max || off % 2 != 0 {
        return Err(AsmError::OffsetRange { what: what.to_string(), offset: off, min, max });
    }
    Ok(())
}

/// Offset from Align(PC, 4) used by adr and literal loads; the narrow forms
/// additionally require a word-aligned, forward offset.
fn check_aligned_offset(off: i32, max: i32, narrow: bool, what: &str) -> Result<u32, AsmError> {
    let bad = off < 0 || off > max || (narrow && off % 4 != 0);
    if bad {
        return Err(AsmError::OffsetRange { what: what.to_string(), offset: off, min: 0, max });
    }
    Ok(off as u32)
}

fn expand_imm(imm: u32, what: &str) -> Result<u16, AsmError> {
    thumb_expand_imm12(imm).ok_or_else(|| AsmError::ImmediateRange { what: what.to_string(), value: imm })
}

/// Encodes a fully resolved instruction at its declared width.
pub fn encode(instr: &Instruction) -> Result<Encoding, AsmError> {
    match instr.width() {
        Width::Narrow16 => encode_narrow(instr.op()),
        Width::Wide32 => encode_wide(instr.op()),
    }
}

fn narrow_unavailable(op: &Op) -> AsmError {
    AsmError::WidthUnavailable { mnemonic: op.mnemonic().to_string(), width: Width::Narrow16 }
}

fn encode_narrow(op: &Op) -> Result<Encoding, AsmError> {
    let hw = match op {
        // MOV (register) T1; high registers allowed, flags untouched.
        Op::MovReg { rd, rm, setflags: false } => {
            let d = rd.index() as u16;
            0x4600 | ((d >> 3) << 7) | ((rm.index() as u16) << 3) | (d & 7)
        }
        // MOVS (register) T2, the LSLS #0 form.
        Op::MovReg { rd, rm, setflags: true } if rd.is_low() && rm.is_low() => {
            ((rm.index() as u16) << 3) | rd.index() as u16
        }
        // MOVS (immediate) T1.
        Op::MovImm { rd, imm, setflags: true } if rd.is_low() && *imm <= 255 => {
            0x2000 | ((rd.index() as u16) << 8) | *imm as u16
        }
        // ADDS/SUBS (immediate) T1 for 3-bit immediates, T2 for rd == rn.
        Op::AddImm { rd, rn, imm, setflags: true } if rd.is_low() && rn.is_low() && *imm <= 7 => {
            0x1C00 | ((*imm as u16) << 6) | ((rn.index() as u16) << 3) | rd.index() as u16
        }
        Op::AddImm { rd, rn, imm, setflags: true } if rd == rn && rd.is_low() && *imm <= 255 => {
            0x3000 | ((rd.index() as u16) << 8) | *imm as u16
        }
        Op::SubImm { rd, rn, imm, setflags: true } if rd.is_low() && rn.is_low() && *imm <= 7 => {
            0x1E00 | ((*imm as u16) << 6) | ((rn.index() as u16) << 3) | rd.index() as u16
        }
        Op::SubImm { rd, rn, imm, setflags: true } if rd == rn && rd.is_low() && *imm <= 255 => {
            0x3800 | ((rd.index() as u16) << 8) | *imm as u16
        }
        // ADDS/SUBS (register) T1.
        Op::AddReg { rd, rn, rm, setflags: true } if rd.is_low() && rn.is_low() && rm.is_low() => {
            0x1800 | ((rm.index() as u16) << 6) | ((rn.index() as u16) << 3) | rd.index() as u16
        }
        Op::SubReg { rd, rn, rm, setflags: true } if rd.is_low() && rn.is_low() && rm.is_low() => {
            0x1A00 | ((rm.index() as u16) << 6) | ((rn.index() as u16) << 3) | rd.index() as u16
        }
        // ADR T1: forward, word-aligned target only.
        Op::Adr { rd, target } if rd.is_low() => {
            let off = check_aligned_offset(resolved(target)?, 1020, true, "adr")?;
            0xA000 | ((rd.index() as u16) << 8) | (off / 4) as u16
        }
        // LDR (literal) T1.
        Op::LdrLit { rt, target } if rt.is_low() => {
            let off = match target {
                LitTarget::PcRel(off) => *off,
                LitTarget::Pool { .. } => return Err(AsmError::Unresolved("literal pool".into())),
            };
            let off = check_aligned_offset(off, 1020, true, "ldr literal")?;
            0x4800 | ((rt.index() as u16) << 8) | (off / 4) as u16
        }
        // LDR/STR (immediate) T1, or the T2 sp-relative forms.
        Op::LdrImm { rt, rn, offset } if rt.is_low() && rn.is_low() && *offset <= 124 && offset % 4 == 0 => {
            0x6800 | (((offset / 4) as u16) << 6) | ((rn.index() as u16) << 3) | rt.index() as u16
        }
        Op::LdrImm { rt, rn, offset } if rt.is_low() && rn.is_sp() && *offset <= 1020 && offset % 4 == 0 => {
            0x9800 | ((rt.index() as u16) << 8) | (offset / 4) as u16
        }
        Op::StrImm { rt, rn, offset } if rt.is_low() && rn.is_low() && *offset <= 124 && offset % 4 == 0 => {
            0x6000 | (((offset / 4) as u16) << 6) | ((rn.index() as u16) << 3) | rt.index() as u16
        }
        Op::StrImm { rt, rn, offset } if rt.is_low() && rn.is_sp() && *offset <= 1020 && offset % 4 == 0 => {
            0x9000 | ((rt.index() as u16) << 8) | (offset / 4) as u16
        }
        // CMP (immediate) T1, CMP (register) T1.
        Op::CmpImm { rn, imm } if rn.is_low() && *imm <= 255 => {
            0x2800 | ((rn.index() as u16) << 8) | *imm as u16
        }
        Op::CmpReg { rn, rm } if rn.is_low() && rm.is_low() => {
            0x4280 | ((rm.index() as u16) << 3) | rn.index() as u16
        }
        // B (conditional) T1.
        Op::BCond { cond, target } => {
            let off = resolved(target)?;
            check_range(off, -256, 254, "conditional branch (16-bit)")?;
            0xD000 | ((cond.code() as u16) << 8) | (((off >> 1) as u16) & 0xFF)
        }
        // B T2.
        Op::B { target } => {
            let off = resolved(target)?;
            check_range(off, -2048, 2046, "branch (16-bit)")?;
            0xE000 | (((off >> 1) as u16) & 0x7FF)
        }
        // BX T1.
        Op::Bx { rm } => 0x4700 | ((rm.index() as u16) << 3),
        Op::Nop => 0xBF00,
        // Halt sentinel: BKPT #0.
        Op::Halt => 0xBE00,
        other => return Err(narrow_unavailable(other)),
    };
    Ok(Encoding::Narrow(hw))
}

fn split_imm12(imm12: u16) -> (u16, u16, u16) {
    ((imm12 >> 11) & 1, (imm12 >> 8) & 7, imm12 & 0xFF)
}

fn encode_wide(op: &Op) -> Result<Encoding, AsmError> {
    let s = |f: bool| if f { 1u16 << 4 } else { 0 };
    let (hw1, hw2) = match op {
        // MOV (register) T3.
        Op::MovReg { rd, rm, setflags } => {
            (0xEA4F | s(*setflags), ((rd.index() as u16) << 8) | rm.index() as u16)
        }
        // MOV (immediate) T2, modified immediate.
        Op::MovImm { rd, imm, setflags } => {
            let (i, imm3, imm8) = split_imm12(expand_imm(*imm, "mov")?);
            (0xF04F | (i << 10) | s(*setflags), (imm3 << 12) | ((rd.index() as u16) << 8) | imm8)
        }
        // ADD/SUB (immediate) T3.
        Op::AddImm { rd, rn, imm, setflags } => {
            let (i, imm3, imm8) = split_imm12(expand_imm(*imm, "add")?);
            (0xF100 | (i << 10) | s(*setflags) | rn.index() as u16,
             (imm3 << 12) | ((rd.index() as u16) << 8) | imm8)
        }
        Op::SubImm { rd, rn, imm, setflags } => {
            let (i, imm3, imm8) = split_imm12(expand_imm(*imm, "sub")?);
            (0xF1A0 | (i << 10) | s(*setflags) | rn.index() as u16,
             (imm3 << 12) | ((rd.index() as u16) << 8) | imm8)
        }
        // ADD/SUB (register) T3, no shift.
        Op::AddReg { rd, rn, rm, setflags } => {
            (0xEB00 | s(*setflags) | rn.index() as u16, ((rd.index() as u16) << 8) | rm.index() as u16)
        }
        Op::SubReg { rd, rn, rm, setflags } => {
            (0xEBA0 | s(*setflags) | rn.index() as u16, ((rd.index() as u16) << 8) | rm.index() as u16)
        }
        // CMP (immediate) T2 / CMP (register) T3.
        Op::CmpImm { rn, imm } => {
            let (i, imm3, imm8) = split_imm12(expand_imm(*imm, "cmp")?);
            (0xF1B0 | (i << 10) | rn.index() as u16, (imm3 << 12) | 0x0F00 | imm8)
        }
        Op::CmpReg { rn, rm } => (0xEBB0 | rn.index() as u16, 0x0F00 | rm.index() as u16),
        // ADR T3 (add form); the sub form is not emitted.
        Op::Adr { rd, target } => {
            let off = check_aligned_offset(resolved(target)?, 4095, false, "adr.w")? as u16;
            let (i, imm3, imm8) = split_imm12(off);
            (0xF20F | (i << 10), (imm3 << 12) | ((rd.index() as u16) << 8) | imm8)
        }
        // LDR (literal) T2, with the U bit for backward references.
        Op::LdrLit { rt, target } => {
            let off = match target {
                LitTarget::PcRel(off) => *off,
                LitTarget::Pool { .. } => return Err(AsmError::Unresolved("literal pool".into())),
            };
            if off.unsigned_abs() > 4095 {
                return Err(AsmError::OffsetRange {
                    what: "ldr.w literal".into(),
                    offset: off,
                    min: -4095,
                    max: 4095,
                });
            }
            let u = if off >= 0 { 1u16 << 7 } else { 0 };
            (0xF85F | u, ((rt.index() as u16) << 12) | (off.unsigned_abs() as u16))
        }
        // LDR/STR (immediate) T3.
        Op::LdrImm { rt, rn, offset } if *offset <= 4095 => {
            (0xF8D0 | rn.index() as u16, ((rt.index() as u16) << 12) | *offset as u16)
        }
        Op::StrImm { rt, rn, offset } if *offset <= 4095 => {
            (0xF8C0 | rn.index() as u16, ((rt.index() as u16) << 12) | *offset as u16)
        }
        // B (conditional) T3: offset = SignExtend(S:J2:J1:imm6:imm11:'0').
        Op::BCond { cond, target } => {
            let off = resolved(target)?;
            check_range(off, -(1 << 20), (1 << 20) - 2, "conditional branch (32-bit)")?;
            let field = (off >> 1) as u32;
            let s = ((field >> 19) & 1) as u16;
            let j2 = ((field >> 18) & 1) as u16;
            let j1 = ((field >> 17) & 1) as u16;
            let imm6 = ((field >> 11) & 0x3F) as u16;
            let imm11 = (field & 0x7FF) as u16;
            (0xF000 | (s << 10) | ((cond.code() as u16) << 6) | imm6,
             0x8000 | (j1 << 13) | (j2 << 11) | imm11)
        }
        // B T4 and BL T1: offset = SignExtend(S:I1:I2:imm10:imm11:'0'),
        // J1 = !(I1 ^ S), J2 = !(I2 ^ S).
        Op::B { target } | Op::Bl { target } => {
            let off = resolved(target)?;
            check_range(off, -(1 << 24), (1 << 24) - 2, "branch (32-bit)")?;
            let field = (off >> 1) as u32;
            let s = ((field >> 23) & 1) as u16;
            let i1 = ((field >> 22) & 1) as u16;
            let i2 = ((field >> 21) & 1) as u16;
            let imm10 = ((field >> 11) & 0x3FF) as u16;
            let imm11 = (field & 0x7FF) as u16;
            let j1 = (!(i1 ^ s)) & 1;
            let j2 = (!(i2 ^ s)) & 1;
            let op2 = if matches!(op, Op::Bl { .. }) { 0xD000 } else { 0x9000 };
            (0xF000 | (s << 10) | imm10, op2 | (j1 << 13) | (j2 << 11) | imm11)
        }
        // MSR (register) T1.
        Op::Msr { spec, rn } => (0xF380 | rn.index() as u16, 0x8800 | spec.sysm() as u16),
        // NOP.W T2.
        Op::Nop => (0xF3AF, 0x8000),
        other => {
            return Err(AsmError::WidthUnavailable {
                mnemonic: other.mnemonic().to_string(),
                width: Width::Wide32,
            })
        }
    };
    Ok(Encoding::Wide(hw1, hw2))
}
