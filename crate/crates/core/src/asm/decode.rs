//! Decoding and classification of arbitrary bit patterns.
//!
//! Nothing here fails: corrupted fetch words are expected input. Every
//! halfword or halfword pair lands in exactly one of three classes —
//! a subset [`Instruction`], valid-but-unsupported, or undefined per the
//! coarse tables in [`validity`](super::validity).

use crate::isa::{Cond, Instruction, LitTarget, Op, Register, SpecialRegister, Target, Width};

use super::validity::{is_wide_prefix, narrow_valid, wide_valid};

/// Classification of one decode attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Instr(Instruction),
    Unsupported,
    Undefined,
}

/// Classification of a single halfword in the instruction stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HalfwordClass {
    Narrow(Decoded),
    /// First half of a 32-bit encoding; needs the following halfword.
    WidePrefix,
}

/// One element of a decoded fetch word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodedItem {
    Instr(Instruction),
    Unsupported,
    Undefined,
    /// Trailing wide prefix whose second halfword lies in the next word.
    WideStart,
}

fn reg(idx: u16) -> Register {
    Register::new((idx & 0xF) as u8).expect("4-bit field")
}

fn instr(op: Op, width: Width) -> Decoded {
    match Instruction::with_width(op, width) {
        Ok(i) => Decoded::Instr(i),
        // Operand combinations the subset constructors reject (pc writes
        // and the like) are real instructions, just not ours.
        Err(_) => Decoded::Unsupported,
    }
}

fn sign_extend(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

/// Classifies one halfword: a 16-bit instruction or a wide prefix.
pub fn classify_halfword(hw: u16) -> HalfwordClass {
    if is_wide_prefix(hw) {
        return HalfwordClass::WidePrefix;
    }
    HalfwordClass::Narrow(decode_narrow(hw))
}

fn decode_narrow(hw: u16) -> Decoded {
    let nonsubset = || {
        if narrow_valid(hw) {
            Decoded::Unsupported
        } else {
            Decoded::Undefined
        }
    };
    let low = |idx: u16| reg(idx & 0x7);
    match hw >> 11 {
        // Shift (immediate): only the zero-shift form is MOVS (register) T2.
        0b00000 => {
            if (hw >> 6) & 0x1F == 0 {
                instr(
                    Op::MovReg { rd: low(hw), rm: low(hw >> 3), setflags: true },
                    Width::Narrow16,
                )
            } else {
                nonsubset()
            }
        }
        0b00011 => {
            let (third, rn, rd) = ((hw >> 6) & 0x7, low(hw >> 3), low(hw));
            let op = match (hw >> 9) & 0x3 {
                0b00 => Op::AddReg { rd, rn, rm: low(third), setflags: true },
                0b01 => Op::SubReg { rd, rn, rm: low(third), setflags: true },
                0b10 => Op::AddImm { rd, rn, imm: third as u32, setflags: true },
                _ => Op::SubImm { rd, rn, imm: third as u32, setflags: true },
            };
            instr(op, Width::Narrow16)
        }
        0b00100 => instr(
            Op::MovImm { rd: low(hw >> 8), imm: (hw & 0xFF) as u32, setflags: true },
            Width::Narrow16,
        ),
        0b00101 => instr(Op::CmpImm { rn: low(hw >> 8), imm: (hw & 0xFF) as u32 }, Width::Narrow16),
        0b00110 => {
            let rdn = low(hw >> 8);
            instr(Op::AddImm { rd: rdn, rn: rdn, imm: (hw & 0xFF) as u32, setflags: true }, Width::Narrow16)
        }
        0b00111 => {
            let rdn = low(hw >> 8);
            instr(Op::SubImm { rd: rdn, rn: rdn, imm: (hw & 0xFF) as u32, setflags: true }, Width::Narrow16)
        }
        0b01000 => {
            if hw & 0xFFC0 == 0x4280 {
                instr(Op::CmpReg { rn: low(hw), rm: low(hw >> 3) }, Width::Narrow16)
            } else if hw & 0xFF00 == 0x4600 {
                let rd = reg(((hw >> 7) & 1) << 3 | (hw & 0x7));
                instr(Op::MovReg { rd, rm: reg(hw >> 3), setflags: false }, Width::Narrow16)
            } else if hw & 0xFF87 == 0x4700 {
                instr(Op::Bx { rm: reg(hw >> 3) }, Width::Narrow16)
            } else {
                nonsubset()
            }
        }
        0b01001 => instr(
            Op::LdrLit { rt: low(hw >> 8), target: LitTarget::PcRel(((hw & 0xFF) * 4) as i32) },
            Width::Narrow16,
        ),
        0b01100 => instr(
            Op::StrImm { rt: low(hw), rn: low(hw >> 3), offset: (((hw >> 6) & 0x1F) * 4) as u32 },
            Width::Narrow16,
        ),
        0b01101 => instr(
            Op::LdrImm { rt: low(hw), rn: low(hw >> 3), offset: (((hw >> 6) & 0x1F) * 4) as u32 },
            Width::Narrow16,
        ),
        0b10010 => instr(
            Op::StrImm { rt: low(hw >> 8), rn: crate::isa::SP, offset: ((hw & 0xFF) * 4) as u32 },
            Width::Narrow16,
        ),
        0b10011 => instr(
            Op::LdrImm { rt: low(hw >> 8), rn: crate::isa::SP, offset: ((hw & 0xFF) * 4) as u32 },
            Width::Narrow16,
        ),
        0b10100 => instr(
            Op::Adr { rd: low(hw >> 8), target: Target::Resolved(((hw & 0xFF) * 4) as i32) },
            Width::Narrow16,
        ),
        0b10110 | 0b10111 => {
            if hw == 0xBF00 {
                instr(Op::Nop, Width::Narrow16)
            } else if hw == 0xBE00 {
                instr(Op::Halt, Width::Narrow16)
            } else {
                nonsubset()
            }
        }
        0b11010 | 0b11011 => {
            let cond = (hw >> 8) & 0xF;
            let off = sign_extend(((hw & 0xFF) as u32) << 1, 9);
            match cond {
                0 => instr(Op::BCond { cond: Cond::Eq, target: Target::Resolved(off) }, Width::Narrow16),
                1 => instr(Op::BCond { cond: Cond::Ne, target: Target::Resolved(off) }, Width::Narrow16),
                _ => nonsubset(),
            }
        }
        0b11100 => {
            let off = sign_extend(((hw & 0x7FF) as u32) << 1, 12);
            instr(Op::B { target: Target::Resolved(off) }, Width::Narrow16)
        }
        _ => nonsubset(),
    }
}

/// Decodes a halfword pair as one 32-bit instruction.
pub fn decode_wide(hw1: u16, hw2: u16) -> Decoded {
    if !is_wide_prefix(hw1) {
        return Decoded::Undefined;
    }
    let nonsubset = || {
        if wide_valid(hw1, hw2) {
            Decoded::Unsupported
        } else {
            Decoded::Undefined
        }
    };
    let setflags = hw1 & 0x10 != 0;
    let imm12 = (((hw1 >> 10) & 1) << 11) | (((hw2 >> 12) & 0x7) << 8) | (hw2 & 0xFF);
    let rd = reg(hw2 >> 8);
    let rt = reg(hw2 >> 12);
    let rn = reg(hw1);
    let rm = reg(hw2);

    // Data processing (shifted register / plain register): only the
    // shift-free forms belong to the subset.
    let no_shift = hw2 & 0x70F0 == 0;

    if hw1 & 0xFFEF == 0xEA4F && no_shift {
        return instr(Op::MovReg { rd, rm, setflags }, Width::Wide32);
    }
    if hw1 & 0xFBEF == 0xF04F && hw2 & 0x8000 == 0 {
        return match crate::isa::thumb_expand_imm(imm12) {
            Some(imm) => instr(Op::MovImm { rd, imm, setflags }, Width::Wide32),
            None => Decoded::Unsupported,
        };
    }
    if hw1 & 0xFBF0 == 0xF1B0 && hw2 & 0x8F00 == 0x0F00 {
        return match crate::isa::thumb_expand_imm(imm12) {
            Some(imm) => instr(Op::CmpImm { rn, imm }, Width::Wide32),
            None => Decoded::Unsupported,
        };
    }
    if hw1 & 0xFBE0 == 0xF100 && hw2 & 0x8000 == 0 && hw1 & 0xF != 0xF {
        return match crate::isa::thumb_expand_imm(imm12) {
            Some(imm) => instr(Op::AddImm { rd, rn, imm, setflags }, Width::Wide32),
            None => Decoded::Unsupported,
        };
    }
    if hw1 & 0xFBE0 == 0xF1A0 && hw2 & 0x8000 == 0 && hw1 & 0xF != 0xF {
        return match crate::isa::thumb_expand_imm(imm12) {
            Some(imm) => instr(Op::SubImm { rd, rn, imm, setflags }, Width::Wide32),
            None => Decoded::Unsupported,
        };
    }
    if hw1 & 0xFBF0 == 0xEBB0 && hw2 & 0xFFF0 == 0x0F00 {
        return instr(Op::CmpReg { rn, rm }, Width::Wide32);
    }
    if hw1 & 0xFBE0 == 0xEB00 && no_shift {
        return instr(Op::AddReg { rd, rn, rm, setflags }, Width::Wide32);
    }
    if hw1 & 0xFBE0 == 0xEBA0 && no_shift {
        return instr(Op::SubReg { rd, rn, rm, setflags }, Width::Wide32);
    }
    // ADDW with Rn = pc is ADR T3.
    if hw1 & 0xFBFF == 0xF20F && hw2 & 0x8000 == 0 {
        return instr(Op::Adr { rd, target: Target::Resolved(imm12 as i32) }, Width::Wide32);
    }
    if hw1 & 0xFF7F == 0xF85F {
        let off = if hw1 & 0x80 != 0 { (hw2 & 0xFFF) as i32 } else { -((hw2 & 0xFFF) as i32) };
        return instr(Op::LdrLit { rt, target: LitTarget::PcRel(off) }, Width::Wide32);
    }
    if hw1 & 0xFFF0 == 0xF8D0 {
        return instr(Op::LdrImm { rt, rn, offset: (hw2 & 0xFFF) as u32 }, Width::Wide32);
    }
    if hw1 & 0xFFF0 == 0xF8C0 && hw1 & 0xF != 0xF {
        return instr(Op::StrImm { rt, rn, offset: (hw2 & 0xFFF) as u32 }, Width::Wide32);
    }
    if hw1 & 0xF800 == 0xF000 && hw2 & 0x8000 == 0x8000 {
        return decode_branch_misc(hw1, hw2, nonsubset);
    }
    nonsubset()
}

fn decode_branch_misc(hw1: u16, hw2: u16, nonsubset: impl Fn() -> Decoded) -> Decoded {
    let s = ((hw1 >> 10) & 1) as u32;
    let j1 = ((hw2 >> 13) & 1) as u32;
    let j2 = ((hw2 >> 11) & 1) as u32;
    let imm11 = (hw2 & 0x7FF) as u32;
    match (hw2 >> 12) & 0x5 {
        // Conditional branch T3 or the misc-control block.
        0b000 => {
            let cond = (hw1 >> 6) & 0xF;
            if (hw1 >> 7) & 0x7 == 0x7 {
                // msr / hints / mrs space.
                if hw1 & 0xFFF0 == 0xF380 && hw2 & 0xFF00 == 0x8800 {
                    let rn = reg(hw1);
                    return match SpecialRegister::from_sysm((hw2 & 0xFF) as u8) {
                        Some(spec) => instr(Op::Msr { spec, rn }, Width::Wide32),
                        None => Decoded::Unsupported,
                    };
                }
                if hw1 == 0xF3AF && hw2 == 0x8000 {
                    return instr(Op::Nop, Width::Wide32);
                }
                return nonsubset();
            }
            let imm6 = (hw1 & 0x3F) as u32;
            let off = sign_extend((s << 20) | (j2 << 19) | (j1 << 18) | (imm6 << 12) | (imm11 << 1), 21);
            match cond {
                0 => instr(Op::BCond { cond: Cond::Eq, target: Target::Resolved(off) }, Width::Wide32),
                1 => instr(Op::BCond { cond: Cond::Ne, target: Target::Resolved(off) }, Width::Wide32),
                _ => nonsubset(),
            }
        }
        // B T4 (op3 x01) and BL (op3 x11 with bit14 set).
        _ => {
            if hw2 & 0x1000 == 0 {
                return nonsubset(); // blx immediate row, undefined on M
            }
            let i1 = (!(j1 ^ s)) & 1;
            let i2 = (!(j2 ^ s)) & 1;
            let imm10 = (hw1 & 0x3FF) as u32;
            let off =
                sign_extend((s << 24) | (i1 << 23) | (i2 << 22) | (imm10 << 12) | (imm11 << 1), 25);
            if hw2 & 0x4000 != 0 {
                instr(Op::Bl { target: Target::Resolved(off) }, Width::Wide32)
            } else {
                instr(Op::B { target: Target::Resolved(off) }, Width::Wide32)
            }
        }
    }
}

/// Splits a 32-bit fetch word into its decoded items: one wide instruction,
/// or two halfword entries where a trailing prefix reports [`DecodedItem::WideStart`].
pub fn decode_word(word: u32) -> Vec<DecodedItem> {
    let hw1 = (word & 0xFFFF) as u16;
    let hw2 = (word >> 16) as u16;
    let lift = |d: Decoded| match d {
        Decoded::Instr(i) => DecodedItem::Instr(i),
        Decoded::Unsupported => DecodedItem::Unsupported,
        Decoded::Undefined => DecodedItem::Undefined,
    };
    if is_wide_prefix(hw1) {
        vec![lift(decode_wide(hw1, hw2))]
    } else {
        let first = lift(decode_narrow(hw1));
        let second = match classify_halfword(hw2) {
            HalfwordClass::WidePrefix => DecodedItem::WideStart,
            HalfwordClass::Narrow(d) => lift(d),
        };
        vec![first, second]
    }
}
