//! Parser for the UAL-like subset syntax and the matching text emitter.
//!
//! Grammar per line: optional `label:` prefixes (a lone identifier that is
//! not a mnemonic also defines a label, as in the listings this tool
//! consumes), then `mnemonic[.w] operands`, `;` comments. The `ldr rX, =...`
//! pseudo-instruction binds a literal-pool slot.

use std::collections::BTreeSet;

use crate::isa::{
    Cond, Instruction, LitTarget, Op, PoolValue, Register, SpecialRegister, Target, Width,
};

use super::{AsmError, Item, SourceLine, SourceProgram};

const MNEMONICS: &[&str] = &[
    "mov", "movs", "add", "adds", "sub", "subs", "adr", "ldr", "str", "cmp", "beq", "bne", "b",
    "bl", "bx", "msr", "nop", "halt",
];

struct LineCtx<'a> {
    lineno: u32,
    text: &'a str,
}

impl LineCtx<'_> {
    fn err(&self, col: usize, msg: impl Into<String>) -> AsmError {
        AsmError::Syntax { line: self.lineno, col: col as u32 + 1, msg: msg.into() }
    }

    fn col_of(&self, token: &str) -> usize {
        self.text.find(token).unwrap_or(0)
    }
}

/// Parses assembly text into a [`SourceProgram`].
///
/// Label references are checked (each referenced label must be defined
/// exactly once); `main` and `error` become the entry and error-handler
/// labels when present.
pub fn parse(source: &str) -> Result<SourceProgram, AsmError> {
    let mut program = SourceProgram {
        lines: Vec::new(),
        entry: None,
        error_handler: None,
        next_pool_id: 0,
    };
    let mut defined = BTreeSet::new();

    for (idx, raw) in source.lines().enumerate() {
        let ctx = LineCtx { lineno: idx as u32 + 1, text: raw };
        let text = raw.split(';').next().unwrap_or("");
        let mut rest = text.trim();
        if rest.is_empty() {
            continue;
        }

        let mut line = SourceLine { labels: Vec::new(), item: None, lineno: ctx.lineno };

        // `label:` prefixes, any number.
        while let Some(colon) = rest.find(':') {
            let (name, tail) = rest.split_at(colon);
            let name = name.trim();
            if !is_identifier(name) {
                return Err(ctx.err(ctx.col_of(name), format!("bad label `{name}`")));
            }
            define_label(name, &mut defined, &mut line)?;
            rest = tail[1..].trim();
        }

        if rest.is_empty() {
            program.lines.push(line);
            continue;
        }

        // A lone identifier that is not a mnemonic or directive defines a label.
        let head = rest.split_whitespace().next().unwrap_or("");
        let head_lower = head.to_ascii_lowercase();
        let bare = head_lower.split('.').next().unwrap_or("");
        if !rest.contains(char::is_whitespace)
            && !MNEMONICS.contains(&bare)
            && !head_lower.starts_with('.')
            && is_identifier(rest)
        {
            define_label(rest, &mut defined, &mut line)?;
            program.lines.push(line);
            continue;
        }

        line.item = Some(parse_item(&ctx, rest, &mut program.next_pool_id)?);
        program.lines.push(line);
    }

    check_references(&program, &defined)?;
    if defined.contains("main") {
        program.entry = Some("main".to_string());
    }
    if defined.contains("error") {
        program.error_handler = Some("error".to_string());
    }
    Ok(program)
}

fn define_label(
    name: &str,
    defined: &mut BTreeSet<String>,
    line: &mut SourceLine,
) -> Result<(), AsmError> {
    if !defined.insert(name.to_string()) {
        return Err(AsmError::DuplicateLabel(name.to_string()));
    }
    line.labels.push(name.to_string());
    Ok(())
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_references(program: &SourceProgram, defined: &BTreeSet<String>) -> Result<(), AsmError> {
    let check = |target: &Target| match target {
        Target::Label(name) if !defined.contains(name) => {
            Err(AsmError::UndefinedLabel(name.clone()))
        }
        _ => Ok(()),
    };
    for instr in program.instructions() {
        match instr.op() {
            Op::Adr { target, .. } | Op::BCond { target, .. } | Op::B { target } | Op::Bl { target } => {
                check(target)?
            }
            Op::LdrLit { target: LitTarget::Pool { value: PoolValue::Label(name), .. }, .. }
                if !defined.contains(name) => {
                    return Err(AsmError::UndefinedLabel(name.clone()));
                }
            _ => {}
        }
    }
    Ok(())
}

fn parse_item(ctx: &LineCtx, text: &str, next_pool_id: &mut u32) -> Result<Item, AsmError> {
    let (head, tail) = match text.find(char::is_whitespace) {
        Some(pos) => (&text[..pos], text[pos..].trim()),
        None => (text, ""),
    };
    let head_lower = head.to_ascii_lowercase();

    if head_lower == ".word" {
        let value = parse_int(ctx, tail)?;
        return Ok(Item::Word(value));
    }
    if head_lower.starts_with('.') {
        return Err(ctx.err(ctx.col_of(head), format!("unknown directive `{head}`")));
    }

    let (mnemonic, wide) = match head_lower.strip_suffix(".w") {
        Some(m) => (m.to_string(), true),
        None => (head_lower, false),
    };
    if !MNEMONICS.contains(&mnemonic.as_str()) {
        return Err(AsmError::UnknownMnemonic { line: ctx.lineno, mnemonic: head.to_string() });
    }

    let operands = split_operands(tail);
    let op = build_op(ctx, &mnemonic, &operands, next_pool_id)?;

    let instr = if wide {
        Instruction::with_width(op, Width::Wide32)
    } else {
        Instruction::new(op)
    }
    .map_err(|e| AsmError::BadInstruction { line: ctx.lineno, source: e })?;
    Ok(Item::Instr(instr))
}

/// Splits on commas outside brackets.
fn split_operands(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '[' => {
                depth += 1;
                cur.push(ch);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                cur.push(ch);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    let last = cur.trim();
    if !last.is_empty() {
        out.push(last.to_string());
    }
    out
}

fn build_op(
    ctx: &LineCtx,
    mnemonic: &str,
    ops: &[String],
    next_pool_id: &mut u32,
) -> Result<Op, AsmError> {
    let arity = |n: usize| -> Result<(), AsmError> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(ctx.err(0, format!("`{mnemonic}` expects {n} operand(s), got {}", ops.len())))
        }
    };
    let reg = |s: &str| -> Result<Register, AsmError> {
        Register::parse(s).ok_or_else(|| ctx.err(ctx.col_of(s), format!("bad register `{s}`")))
    };

    match mnemonic {
        "mov" | "movs" => {
            arity(2)?;
            let rd = reg(&ops[0])?;
            let setflags = mnemonic == "movs";
            if let Some(imm) = ops[1].strip_prefix('#') {
                Ok(Op::MovImm { rd, imm: parse_int(ctx, imm)?, setflags })
            } else {
                Ok(Op::MovReg { rd, rm: reg(&ops[1])?, setflags })
            }
        }
        "add" | "adds" | "sub" | "subs" => {
            // Two-operand sugar `adds rd, #imm` means rd, rd, #imm.
            let (rd, rn, third) = match ops.len() {
                2 => (reg(&ops[0])?, reg(&ops[0])?, &ops[1]),
                3 => (reg(&ops[0])?, reg(&ops[1])?, &ops[2]),
                n => return Err(ctx.err(0, format!("`{mnemonic}` expects 2 or 3 operands, got {n}"))),
            };
            let setflags = mnemonic.ends_with('s');
            let is_add = mnemonic.starts_with("add");
            if let Some(imm) = third.strip_prefix('#') {
                let imm = parse_int(ctx, imm)?;
                Ok(if is_add {
                    Op::AddImm { rd, rn, imm, setflags }
                } else {
                    Op::SubImm { rd, rn, imm, setflags }
                })
            } else {
                let rm = reg(third)?;
                Ok(if is_add {
                    Op::AddReg { rd, rn, rm, setflags }
                } else {
                    Op::SubReg { rd, rn, rm, setflags }
                })
            }
        }
        "adr" => {
            arity(2)?;
            Ok(Op::Adr { rd: reg(&ops[0])?, target: Target::Label(label_name(ctx, &ops[1])?) })
        }
        "ldr" | "str" => {
            arity(2)?;
            let rt = reg(&ops[0])?;
            let operand = ops[1].as_str();
            if let Some(rest) = operand.strip_prefix('=') {
                if mnemonic == "str" {
                    return Err(ctx.err(ctx.col_of(operand), "str has no literal form"));
                }
                let value = if let Ok(v) = parse_int(ctx, rest) {
                    PoolValue::Imm(v)
                } else {
                    PoolValue::Label(label_name(ctx, rest)?)
                };
                let id = *next_pool_id;
                *next_pool_id += 1;
                return Ok(Op::LdrLit { rt, target: LitTarget::Pool { id, value } });
            }
            let (base, offset) = parse_mem_operand(ctx, operand)?;
            if base.is_pc() {
                if mnemonic == "str" {
                    return Err(ctx.err(ctx.col_of(operand), "str has no pc-relative form"));
                }
                return Ok(Op::LdrLit { rt, target: LitTarget::PcRel(offset as i32) });
            }
            Ok(if mnemonic == "ldr" {
                Op::LdrImm { rt, rn: base, offset }
            } else {
                Op::StrImm { rt, rn: base, offset }
            })
        }
        "cmp" => {
            arity(2)?;
            let rn = reg(&ops[0])?;
            if let Some(imm) = ops[1].strip_prefix('#') {
                Ok(Op::CmpImm { rn, imm: parse_int(ctx, imm)? })
            } else {
                Ok(Op::CmpReg { rn, rm: reg(&ops[1])? })
            }
        }
        "beq" | "bne" => {
            arity(1)?;
            let cond = if mnemonic == "beq" { Cond::Eq } else { Cond::Ne };
            Ok(Op::BCond { cond, target: Target::Label(label_name(ctx, &ops[0])?) })
        }
        "b" => {
            arity(1)?;
            Ok(Op::B { target: Target::Label(label_name(ctx, &ops[0])?) })
        }
        "bl" => {
            arity(1)?;
            Ok(Op::Bl { target: Target::Label(label_name(ctx, &ops[0])?) })
        }
        "bx" => {
            arity(1)?;
            Ok(Op::Bx { rm: reg(&ops[0])? })
        }
        "msr" => {
            arity(2)?;
            let spec = SpecialRegister::parse(&ops[0])
                .ok_or_else(|| ctx.err(ctx.col_of(&ops[0]), format!("bad special register `{}`", ops[0])))?;
            Ok(Op::Msr { spec, rn: reg(&ops[1])? })
        }
        "nop" => {
            arity(0)?;
            Ok(Op::Nop)
        }
        "halt" => {
            arity(0)?;
            Ok(Op::Halt)
        }
        _ => Err(AsmError::UnknownMnemonic { line: ctx.lineno, mnemonic: mnemonic.to_string() }),
    }
}

fn label_name(ctx: &LineCtx, s: &str) -> Result<String, AsmError> {
    if is_identifier(s) {
        Ok(s.to_string())
    } else {
        Err(ctx.err(ctx.col_of(s), format!("bad label reference `{s}`")))
    }
}

/// `[rn]`, `[rn, #imm]`; pc and sp allowed as base.
fn parse_mem_operand(ctx: &LineCtx, s: &str) -> Result<(Register, u32), AsmError> {
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| ctx.err(ctx.col_of(s), format!("bad memory operand `{s}`")))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    let base = Register::parse(parts[0])
        .ok_or_else(|| ctx.err(ctx.col_of(parts[0]), format!("bad base register `{}`", parts[0])))?;
    let offset = match parts.len() {
        1 => 0,
        2 => {
            let imm = parts[1]
                .strip_prefix('#')
                .ok_or_else(|| ctx.err(ctx.col_of(parts[1]), "offset must be `#imm`"))?;
            parse_int(ctx, imm)?
        }
        _ => return Err(ctx.err(ctx.col_of(s), format!("bad memory operand `{s}`"))),
    };
    Ok((base, offset))
}

fn parse_int(ctx: &LineCtx, s: &str) -> Result<u32, AsmError> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let parsed = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16)
    } else {
        body.parse::<u32>()
    };
    let value = parsed.map_err(|_| ctx.err(ctx.col_of(s), format!("bad integer `{s}`")))?;
    Ok(if neg { value.wrapping_neg() } else { value })
}

/// Emits a program back to parseable assembly text. The `.w` suffix is
/// printed exactly where a narrow encoding would otherwise have been chosen.
pub fn emit(program: &SourceProgram) -> String {
    let mut out = String::new();
    for line in &program.lines {
        for label in &line.labels {
            out.push_str(label);
            out.push_str(":\n");
        }
        match &line.item {
            Some(Item::Instr(instr)) => {
                out.push_str("    ");
                out.push_str(&format_instr(instr));
                out.push('\n');
            }
            Some(Item::Word(value)) => {
                out.push_str(&format!("    .word {}\n", fmt_imm(*value)));
            }
            None => {}
        }
    }
    out
}

fn fmt_imm(value: u32) -> String {
    if value < 256 {
        format!("{value}")
    } else {
        format!("{value:#x}")
    }
}

/// Canonical text for one instruction, label form.
pub fn format_instr(instr: &Instruction) -> String {
    let wide = instr.width() == Width::Wide32;
    let suffix = |op: &Op| {
        // Print `.w` only where it changes anything.
        if wide && Instruction::new(op.clone()).map(|i| i.width()) == Ok(Width::Narrow16) {
            ".w"
        } else {
            ""
        }
    };
    let op = instr.op();
    let sfx = suffix(op);
    match op {
        Op::MovReg { rd, rm, setflags } => {
            format!("{}{sfx} {rd}, {rm}", if *setflags { "movs" } else { "mov" })
        }
        Op::MovImm { rd, imm, setflags } => {
            format!("{}{sfx} {rd}, #{}", if *setflags { "movs" } else { "mov" }, fmt_imm(*imm))
        }
        Op::AddImm { rd, rn, imm, setflags } => {
            format!("{}{sfx} {rd}, {rn}, #{}", if *setflags { "adds" } else { "add" }, fmt_imm(*imm))
        }
        Op::AddReg { rd, rn, rm, setflags } => {
            format!("{}{sfx} {rd}, {rn}, {rm}", if *setflags { "adds" } else { "add" })
        }
        Op::SubImm { rd, rn, imm, setflags } => {
            format!("{}{sfx} {rd}, {rn}, #{}", if *setflags { "subs" } else { "sub" }, fmt_imm(*imm))
        }
        Op::SubReg { rd, rn, rm, setflags } => {
            format!("{}{sfx} {rd}, {rn}, {rm}", if *setflags { "subs" } else { "sub" })
        }
        Op::Adr { rd, target } => format!("adr{sfx} {rd}, {}", fmt_target(target)),
        Op::LdrLit { rt, target } => match target {
            LitTarget::Pool { value: PoolValue::Imm(v), .. } => format!("ldr{sfx} {rt}, ={v:#x}"),
            LitTarget::Pool { value: PoolValue::Label(l), .. } => format!("ldr{sfx} {rt}, ={l}"),
            LitTarget::PcRel(off) => format!("ldr{sfx} {rt}, [pc, #{off}]"),
        },
        Op::LdrImm { rt, rn, offset } => format!("ldr{sfx} {rt}, [{rn}, #{offset}]"),
        Op::StrImm { rt, rn, offset } => format!("str{sfx} {rt}, [{rn}, #{offset}]"),
        Op::CmpImm { rn, imm } => format!("cmp{sfx} {rn}, #{}", fmt_imm(*imm)),
        Op::CmpReg { rn, rm } => format!("cmp{sfx} {rn}, {rm}"),
        Op::BCond { cond, target } => format!("b{cond}{sfx} {}", fmt_target(target)),
        Op::B { target } => format!("b{sfx} {}", fmt_target(target)),
        Op::Bl { target } => format!("bl {}", fmt_target(target)),
        Op::Bx { rm } => format!("bx {rm}"),
        Op::Msr { spec, rn } => format!("msr {spec}, {rn}"),
        Op::Nop => format!("nop{sfx}"),
        Op::Halt => "halt".to_string(),
    }
}

fn fmt_target(target: &Target) -> String {
    match target {
        Target::Label(name) => name.clone(),
        Target::Resolved(off) => format!("#{off}"),
    }
}
