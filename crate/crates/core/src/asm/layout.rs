//! Program layout: address assignment, label and literal-pool resolution,
//! branch-offset computation and byte emission.
//!
//! Layout is a pure function of (program, base). Offsets that do not fit the
//! declared encoding width are errors, never silently widened: the width of
//! every instruction is a property the caller chose.

use std::collections::BTreeMap;

use crate::isa::{Instruction, LitTarget, Op, PoolValue, Target};

use super::encode::{encode, Encoding};
use super::{AsmError, Item, SourceProgram};

/// Laid-out byte image of code, data words and the trailing literal pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    pub base: u32,
    /// Code, data and pool bytes, zero-padded to a 4-byte multiple.
    pub bytes: Vec<u8>,
    /// Length of the code/data region (pool and final padding excluded).
    pub code_len: u32,
    /// Literal pool entries in emission order.
    pub pool: Vec<(u32, u32)>,
    /// `.word` directives placed in the stream.
    pub data_words: Vec<(u32, u32)>,
    pub symbols: BTreeMap<String, u32>,
    /// Resolved instruction at each code address.
    pub instrs: BTreeMap<u32, Instruction>,
    pub entry: u32,
    pub error_handler: Option<u32>,
}

impl ProgramImage {
    pub fn end(&self) -> u32 {
        self.base + self.bytes.len() as u32
    }

    /// The 4-aligned fetch word containing `addr`.
    pub fn fetch_word_of(&self, addr: u32) -> Result<(u32, u32), AsmError> {
        let aligned = addr & !3;
        if aligned < self.base || aligned + 4 > self.end() {
            return Err(AsmError::OutOfImage(addr));
        }
        let off = (aligned - self.base) as usize;
        let word = u32::from_le_bytes(self.bytes[off..off + 4].try_into().unwrap());
        Ok((aligned, word))
    }

    /// Instructions whose first halfword lies inside the given fetch word.
    pub fn instrs_in_word(&self, aligned: u32) -> Vec<(u32, &Instruction)> {
        self.instrs
            .range(aligned..aligned + 4)
            .map(|(addr, instr)| (*addr, instr))
            .collect()
    }

    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }
}

/// Per-line addresses from the sizing pass, reused by the rewriter to
/// re-derive PC-relative offsets for duplicated loads.
#[derive(Debug, Clone)]
pub struct AddressMap {
    /// Address of each line's item (None for label-only lines).
    pub line_addrs: Vec<Option<u32>>,
    pub labels: BTreeMap<String, u32>,
    pub code_end: u32,
}

/// Sizing pass: assigns an address to every instruction and data word.
/// Widths are already fixed, so sizes never depend on resolution.
pub fn assign_addresses(program: &SourceProgram, base: u32) -> Result<AddressMap, AsmError> {
    let mut line_addrs = Vec::with_capacity(program.lines.len());
    let mut labels = BTreeMap::new();
    let mut pending: Vec<&str> = Vec::new();
    let mut cursor = base;

    for line in &program.lines {
        pending.extend(line.labels.iter().map(String::as_str));
        match &line.item {
            Some(Item::Instr(instr)) => {
                bind(&mut labels, &mut pending, cursor)?;
                line_addrs.push(Some(cursor));
                cursor += instr.size();
            }
            Some(Item::Word(_)) => {
                cursor = align4(cursor);
                bind(&mut labels, &mut pending, cursor)?;
                line_addrs.push(Some(cursor));
                cursor += 4;
            }
            None => line_addrs.push(None),
        }
    }
    bind(&mut labels, &mut pending, cursor)?;
    Ok(AddressMap { line_addrs, labels, code_end: cursor })
}

fn bind(
    labels: &mut BTreeMap<String, u32>,
    pending: &mut Vec<&str>,
    addr: u32,
) -> Result<(), AsmError> {
    for name in pending.drain(..) {
        if labels.insert(name.to_string(), addr).is_some() {
            return Err(AsmError::DuplicateLabel(name.to_string()));
        }
    }
    Ok(())
}

fn align4(addr: u32) -> u32 {
    (addr + 3) & !3
}

/// Lays the program out at `base`: code and data words in source order, one
/// literal pool after the code (4-byte aligned, one slot per pool id in
/// first-use order, no value deduplication).
pub fn layout(program: &SourceProgram, base: u32) -> Result<ProgramImage, AsmError> {
    if !base.is_multiple_of(4) {
        return Err(AsmError::MisalignedLiteral(base));
    }
    let map = assign_addresses(program, base)?;

    // Pool slots in first-use order.
    let pool_base = align4(map.code_end);
    let mut pool_addr: BTreeMap<u32, u32> = BTreeMap::new();
    let mut pool_order: Vec<(u32, PoolValue)> = Vec::new();
    for instr in program.instructions() {
        if let Op::LdrLit { target: LitTarget::Pool { id, value }, .. } = instr.op() {
            pool_addr.entry(*id).or_insert_with(|| {
                let addr = pool_base + 4 * pool_order.len() as u32;
                pool_order.push((*id, value.clone()));
                addr
            });
        }
    }

    let resolve_label = |name: &str| -> Result<u32, AsmError> {
        map.labels.get(name).copied().ok_or_else(|| AsmError::UndefinedLabel(name.to_string()))
    };

    let end = pool_base + 4 * pool_order.len() as u32;
    let mut bytes = vec![0u8; (end - base) as usize];
    let mut instrs = BTreeMap::new();
    let mut data_words = Vec::new();

    for (line, addr) in program.lines.iter().zip(&map.line_addrs) {
        let Some(addr) = addr else { continue };
        match line.item.as_ref().unwrap() {
            Item::Instr(instr) => {
                let resolved = resolve_instr(instr, *addr, &resolve_label, &pool_addr)?;
                let enc = encode(&resolved)?;
                write_bytes(&mut bytes, *addr - base, &enc);
                instrs.insert(*addr, resolved);
            }
            Item::Word(value) => {
                bytes[(*addr - base) as usize..(*addr - base) as usize + 4]
                    .copy_from_slice(&value.to_le_bytes());
                data_words.push((*addr, *value));
            }
        }
    }

    let mut pool = Vec::new();
    for (slot, (id, value)) in pool_order.iter().enumerate() {
        let addr = pool_base + 4 * slot as u32;
        debug_assert_eq!(pool_addr[id], addr);
        debug_assert_eq!(addr % 4, 0);
        let v = match value {
            PoolValue::Imm(v) => *v,
            PoolValue::Label(name) => resolve_label(name)?,
        };
        bytes[(addr - base) as usize..(addr - base) as usize + 4].copy_from_slice(&v.to_le_bytes());
        pool.push((addr, v));
    }

    // Keep every fetch word inside the image readable.
    while !bytes.len().is_multiple_of(4) {
        bytes.push(0);
    }

    let entry = match &program.entry {
        Some(name) => resolve_label(name)?,
        None => base,
    };
    let error_handler = match &program.error_handler {
        Some(name) => Some(resolve_label(name)?),
        None => None,
    };

    Ok(ProgramImage {
        base,
        bytes,
        code_len: map.code_end - base,
        pool,
        data_words,
        symbols: map.labels,
        instrs,
        entry,
        error_handler,
    })
}

fn write_bytes(bytes: &mut [u8], off: u32, enc: &Encoding) {
    let off = off as usize;
    for (i, b) in enc.bytes().iter().enumerate() {
        bytes[off + i] = *b;
    }
}

/// PC base for branches: instruction address + 4.
fn branch_pc(addr: u32) -> i64 {
    addr as i64 + 4
}

/// PC base for adr and literal loads: Align(instruction address + 4, 4).
fn aligned_pc(addr: u32) -> i64 {
    (addr as i64 + 4) & !3
}

fn resolve_instr(
    instr: &Instruction,
    addr: u32,
    resolve_label: &impl Fn(&str) -> Result<u32, AsmError>,
    pool_addr: &BTreeMap<u32, u32>,
) -> Result<Instruction, AsmError> {
    let resolve_target = |target: &Target, pc: i64| -> Result<Target, AsmError> {
        match target {
            Target::Resolved(off) => Ok(Target::Resolved(*off)),
            Target::Label(name) => {
                let dest = resolve_label(name)? as i64;
                Ok(Target::Resolved((dest - pc) as i32))
            }
        }
    };
    let op = match instr.op() {
        Op::Adr { rd, target } => {
            Op::Adr { rd: *rd, target: resolve_target(target, aligned_pc(addr))? }
        }
        Op::BCond { cond, target } => {
            Op::BCond { cond: *cond, target: resolve_target(target, branch_pc(addr))? }
        }
        Op::B { target } => Op::B { target: resolve_target(target, branch_pc(addr))? },
        Op::Bl { target } => Op::Bl { target: resolve_target(target, branch_pc(addr))? },
        Op::LdrLit { rt, target } => {
            let off = match target {
                LitTarget::PcRel(off) => *off,
                LitTarget::Pool { id, .. } => {
                    let dest = pool_addr[id] as i64;
                    (dest - aligned_pc(addr)) as i32
                }
            };
            Op::LdrLit { rt: *rt, target: LitTarget::PcRel(off) }
        }
        other => other.clone(),
    };
    // The width itself was validated at construction; offsets resolved here
    // get their precise range check from the encoder.
    Ok(Instruction::with_width_unchecked(op, instr.width()))
}
