//! Coarse encoding-validity predicate and density measurement.
//!
//! Validity follows the top-level opcode tables of the ARMv7-M ARM (A5.2 for
//! the 16-bit space, A5.3 for the 32-bit space), not a full decoder: a
//! pattern is "valid" when the major tables allocate it to some instruction,
//! even one far outside the implemented subset. Coprocessor space counts as
//! allocated. This granularity is intentional; the density comparison it
//! feeds is directional.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::isa::Width;

/// True when the halfword is the first half of a 32-bit encoding
/// (A5.1: top bits 0b11101, 0b11110 or 0b11111).
pub fn is_wide_prefix(hw: u16) -> bool {
    hw >> 11 >= 0b11101
}

/// Coarse validity of a 16-bit encoding. Wide-prefix halfwords are not
/// 16-bit instructions and return false.
pub fn narrow_valid(hw: u16) -> bool {
    if is_wide_prefix(hw) {
        return false;
    }
    match hw >> 12 {
        // Shift/add/sub/mov/cmp, data processing, load/store: fully allocated.
        0x0..=0xA => true,
        // Miscellaneous 16-bit instructions (A5.2.5).
        0xB => misc_valid(hw),
        0xC => true, // stm/ldm
        0xD => (hw >> 8) & 0xF != 0xE, // cond branch + svc; 0xDE.. is UDF T1
        _ => true, // 0xE0..0xE7: unconditional branch
    }
}

fn misc_valid(hw: u16) -> bool {
    match (hw >> 8) & 0xF {
        0x0 => true,        // add/sub sp, immediate
        0x1 | 0x3 => true,  // cbz
        0x2 => true,        // sxth/sxtb/uxth/uxtb
        0x4 | 0x5 => true,  // push
        0x6 => hw & 0xFFF0 == 0xB660, // cps; the rest of the row is unallocated
        0x7 | 0x8 => false,
        0x9 | 0xB => true,  // cbnz
        0xA => (hw >> 6) & 0x3 != 0b10, // rev/rev16/revsh
        0xC | 0xD => true,  // pop
        0xE => true,        // bkpt
        _ => true,          // it / hints
    }
}

/// Coarse validity of a 32-bit encoding. False when `hw1` is not a wide
/// prefix at all.
pub fn wide_valid(hw1: u16, hw2: u16) -> bool {
    if !is_wide_prefix(hw1) {
        return false;
    }
    let op1 = (hw1 >> 11) & 0x3; // 1, 2 or 3
    let op2 = (hw1 >> 4) & 0x7F;
    match op1 {
        0b01 => {
            if op2 & 0x64 == 0x00 {
                // Load/store multiple: only the IA/DB rows exist on v7-M.
                matches!((hw1 >> 7) & 0x3, 0b01 | 0b10)
            } else {
                // Load/store dual or exclusive, data processing (shifted
                // register), coprocessor: allocated at this granularity.
                true
            }
        }
        0b10 => {
            if hw2 & 0x8000 == 0 {
                if hw1 & 0x0200 == 0 {
                    // Data processing, modified immediate: op holes are UNDEFINED.
                    matches!((hw1 >> 5) & 0xF, 0x0..=0x4 | 0x8 | 0xA | 0xB | 0xD | 0xE)
                } else {
                    // Data processing, plain binary immediate.
                    matches!((hw1 >> 4) & 0x1F, 0x00 | 0x04 | 0x0A | 0x0C | 0x10 | 0x12 | 0x14 | 0x16 | 0x18 | 0x1A | 0x1C)
                }
            } else {
                branches_misc_valid(hw1, hw2)
            }
        }
        _ => {
            // op1 = 0b11: store single, load byte/half/word, data processing
            // (register), multiply, coprocessor. Only the 0b00xx111 row of
            // the load table is UNDEFINED.
            op2 & 0x67 != 0x07
        }
    }
}

fn branches_misc_valid(hw1: u16, hw2: u16) -> bool {
    let op3 = (hw2 >> 12) & 0x7;
    match op3 {
        0b000 | 0b010 => {
            let cond_op = (hw1 >> 4) & 0x7F;
            if cond_op & 0x38 != 0x38 {
                true // conditional branch
            } else if cond_op == 0x7F && op3 == 0b010 {
                false // UDF T2, permanently undefined
            } else {
                // msr, hints, misc control, mrs and neighbours.
                true
            }
        }
        0b001 | 0b011 => true,  // b.w
        0b101 | 0b111 => true,  // bl
        _ => false,             // blx (immediate): undefined on M-profile
    }
}

/// Fraction of the encoding space the coarse predicate accepts.
///
/// Narrow16 enumerates all 2^16 halfwords exhaustively (`sample_budget` is
/// ignored); Wide32 classifies `sample_budget` uniformly sampled 32-bit
/// words, seeded, a word counting only when it forms one valid 32-bit
/// instruction (first halfword in stream order must be a wide prefix).
pub fn validity_density(width: Width, sample_budget: u64, seed: u64) -> f64 {
    match width {
        Width::Narrow16 => {
            let valid = (0..=u16::MAX).filter(|&hw| narrow_valid(hw)).count();
            valid as f64 / 65536.0
        }
        Width::Wide32 => {
            let budget = sample_budget.max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut valid = 0u64;
            for _ in 0..budget {
                let word = rng.next_u32();
                let hw1 = (word & 0xFFFF) as u16;
                let hw2 = (word >> 16) as u16;
                if wide_valid(hw1, hw2) {
                    valid += 1;
                }
            }
            valid as f64 / budget as f64
        }
    }
}
