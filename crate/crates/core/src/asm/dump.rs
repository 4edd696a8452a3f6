//! Program-image dump format: `address: hexbytes  ; disassembly` lines plus
//! a symbol-table section. The format is bit-exact across runs and reads
//! back into an executable image; bytes are authoritative when reading,
//! the disassembly column only distinguishes data words from code.

use std::collections::BTreeMap;

use crate::isa::Instruction;

use super::decode::{classify_halfword, decode_wide, Decoded, HalfwordClass};
use super::parse::format_instr;
use super::{AsmError, ProgramImage};

/// Writes the dump text for an image.
pub fn write(image: &ProgramImage) -> String {
    let mut out = String::new();
    out.push_str("; glitchsim image\n");
    out.push_str(&format!("; base = {:#010x}\n", image.base));
    out.push_str(&format!("; entry = {:#010x}\n", image.entry));
    if let Some(err) = image.error_handler {
        out.push_str(&format!("; error = {err:#010x}\n"));
    }

    let data: BTreeMap<u32, u32> =
        image.data_words.iter().chain(image.pool.iter()).map(|&(a, v)| (a, v)).collect();

    let mut addr = image.base;
    let end = image.end();
    while addr < end {
        if let Some(instr) = image.instrs.get(&addr) {
            let size = instr.size();
            push_line(&mut out, image, addr, size, &format_instr(instr));
            addr += size;
        } else if let Some(value) = data.get(&addr) {
            push_line(&mut out, image, addr, 4, &format!(".word {value:#010x}"));
            addr += 4;
        } else {
            push_line(&mut out, image, addr, 2, "(pad)");
            addr += 2;
        }
    }

    out.push_str("; symbols:\n");
    for (name, value) in &image.symbols {
        out.push_str(&format!("; {name} = {value:#010x}\n"));
    }
    out
}

fn push_line(out: &mut String, image: &ProgramImage, addr: u32, size: u32, text: &str) {
    let off = (addr - image.base) as usize;
    let hex: Vec<String> =
        image.bytes[off..off + size as usize].iter().map(|b| format!("{b:02X}")).collect();
    out.push_str(&format!("{addr:08x}: {:<11} ; {text}\n", hex.join(" ")));
}

/// Reads a dump back into an image. Instructions are re-decoded from the
/// bytes; lines whose comment is `.word` or `(pad)` contribute bytes only.
pub fn read(text: &str) -> Result<ProgramImage, AsmError> {
    let mut base: Option<u32> = None;
    let mut entry: Option<u32> = None;
    let mut error_handler: Option<u32> = None;
    let mut symbols = BTreeMap::new();
    let mut chunks: Vec<(u32, Vec<u8>, bool)> = Vec::new(); // (addr, bytes, is_code)
    let mut data_words = Vec::new();
    let mut in_symbols = false;

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix(';') {
            let comment = comment.trim();
            if comment == "symbols:" {
                in_symbols = true;
            } else if let Some((key, value)) = comment.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                let parsed = parse_hex(value)?;
                if in_symbols {
                    symbols.insert(key.to_string(), parsed);
                } else {
                    match key {
                        "base" => base = Some(parsed),
                        "entry" => entry = Some(parsed),
                        "error" => error_handler = Some(parsed),
                        _ => return Err(AsmError::BadDump(format!("unknown header `{key}`"))),
                    }
                }
            }
            continue;
        }
        let (addr_part, rest) = line
            .split_once(':')
            .ok_or_else(|| AsmError::BadDump(format!("missing address in `{line}`")))?;
        let addr = u32::from_str_radix(addr_part.trim(), 16)
            .map_err(|_| AsmError::BadDump(format!("bad address `{addr_part}`")))?;
        let (hex_part, comment) = match rest.split_once(';') {
            Some((h, c)) => (h.trim(), c.trim()),
            None => (rest.trim(), ""),
        };
        let mut bytes = Vec::new();
        for tok in hex_part.split_whitespace() {
            bytes.push(
                u8::from_str_radix(tok, 16)
                    .map_err(|_| AsmError::BadDump(format!("bad byte `{tok}`")))?,
            );
        }
        let is_data = comment.starts_with(".word") || comment.starts_with("(pad)");
        if comment.starts_with(".word") && bytes.len() == 4 {
            data_words.push((addr, u32::from_le_bytes(bytes[..4].try_into().unwrap())));
        }
        chunks.push((addr, bytes, !is_data));
    }

    let base = base.ok_or_else(|| AsmError::BadDump("missing base header".into()))?;
    chunks.sort_by_key(|(a, ..)| *a);
    let end = chunks.last().map(|(a, b, _)| a + b.len() as u32).unwrap_or(base);
    let mut bytes = vec![0u8; (end - base) as usize];
    let mut instrs = BTreeMap::new();
    for (addr, chunk, is_code) in &chunks {
        let off = (*addr - base) as usize;
        bytes[off..off + chunk.len()].copy_from_slice(chunk);
        if *is_code {
            if let Some(instr) = decode_one(chunk) {
                instrs.insert(*addr, instr);
            }
        }
    }
    while !bytes.len().is_multiple_of(4) {
        bytes.push(0);
    }

    let code_len = bytes.len() as u32;
    Ok(ProgramImage {
        base,
        bytes,
        code_len,
        pool: Vec::new(),
        data_words,
        symbols,
        instrs,
        entry: entry.unwrap_or(base),
        error_handler,
    })
}

fn decode_one(bytes: &[u8]) -> Option<Instruction> {
    match bytes.len() {
        2 => {
            let hw = u16::from_le_bytes(bytes.try_into().ok()?);
            match classify_halfword(hw) {
                HalfwordClass::Narrow(Decoded::Instr(i)) => Some(i),
                _ => None,
            }
        }
        4 => {
            let hw1 = u16::from_le_bytes(bytes[..2].try_into().ok()?);
            let hw2 = u16::from_le_bytes(bytes[2..].try_into().ok()?);
            match decode_wide(hw1, hw2) {
                Decoded::Instr(i) => Some(i),
                _ => None,
            }
        }
        _ => None,
    }
}

fn parse_hex(s: &str) -> Result<u32, AsmError> {
    let body = s.strip_prefix("0x").unwrap_or(s);
    u32::from_str_radix(body, 16).map_err(|_| AsmError::BadDump(format!("bad value `{s}`")))
}
