//! Countermeasure rewriting: fault-tolerance replacement sequences and
//! fault-detection duplication, with optional forced 32-bit encoding.
//!
//! Both schemes are source-to-source: the output re-parses under the same
//! grammar the input used. Fault-free behaviour is preserved up to the
//! reserved scratch register and the flags clobbered by inserted compares.

use std::collections::BTreeSet;

use crate::asm::layout::assign_addresses;
use crate::asm::{AsmError, Item, SourceLine, SourceProgram};
use crate::isa::{Instruction, LitTarget, Op, Register, Target, Width, LR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    FaultTolerance,
    FaultDetection,
}

/// Which instructions get rewritten.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    /// Every instruction the scheme has a rule for.
    AllSupported,
    /// Only the named mnemonics; naming one the scheme cannot cover is an
    /// error rather than a silent pass.
    Mnemonics(BTreeSet<String>),
}

impl Scope {
    pub fn only(names: &[&str]) -> Self {
        Scope::Mnemonics(names.iter().map(|s| s.to_string()).collect())
    }

    fn selects(&self, mnemonic: &str) -> bool {
        match self {
            Scope::AllSupported => true,
            Scope::Mnemonics(set) => set.contains(mnemonic),
        }
    }

    fn is_filter(&self) -> bool {
        matches!(self, Scope::Mnemonics(_))
    }
}

/// Scratch-register policy: a designated register reserved program-wide, or
/// automatic selection of the highest general register the program leaves
/// untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScratchPolicy {
    Designated(Register),
    AutoHigh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewritePlan {
    pub scheme: Scheme,
    pub scope: Scope,
    pub force_wide: bool,
    pub scratch: ScratchPolicy,
}

impl RewritePlan {
    /// Fault tolerance with the call-sequence scratch of the reference
    /// listing (r1).
    pub fn fault_tolerance() -> Self {
        RewritePlan {
            scheme: Scheme::FaultTolerance,
            scope: Scope::AllSupported,
            force_wide: false,
            scratch: ScratchPolicy::Designated(Register::new(1).unwrap()),
        }
    }

    pub fn fault_detection() -> Self {
        RewritePlan {
            scheme: Scheme::FaultDetection,
            scope: Scope::AllSupported,
            force_wide: false,
            scratch: ScratchPolicy::AutoHigh,
        }
    }

    pub fn wide(mut self) -> Self {
        self.force_wide = true;
        self
    }

    pub fn with_scope(mut self, scope: Scope) -> Self {
        self.scope = scope;
        self
    }

    pub fn with_scratch(mut self, reg: Register) -> Self {
        self.scratch = ScratchPolicy::Designated(reg);
        self
    }

    /// Short provenance string for reports.
    pub fn describe(&self) -> String {
        let scheme = match self.scheme {
            Scheme::FaultTolerance => "ft",
            Scheme::FaultDetection => "fd",
        };
        let scope = match &self.scope {
            Scope::AllSupported => "all".to_string(),
            Scope::Mnemonics(set) => set.iter().cloned().collect::<Vec<_>>().join("+"),
        };
        let scratch = match self.scratch {
            ScratchPolicy::Designated(r) => r.to_string(),
            ScratchPolicy::AutoHigh => "auto".to_string(),
        };
        format!("{scheme}:scope={scope}:wide={}:scratch={scratch}", self.force_wide)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewriteError {
    #[error("line {line}: no {scheme} rule for `{mnemonic}`: {detail}")]
    NoRule { scheme: &'static str, mnemonic: String, detail: String, line: u32 },
    #[error("line {line}: `{mnemonic}` is not coverable by fault detection")]
    Uncoverable { mnemonic: String, line: u32 },
    #[error("scratch register {0} is used by the program")]
    ScratchCollision(Register),
    #[error("scratch register {0} must be one of r0-r12")]
    BadScratch(Register),
    #[error("no free scratch register")]
    NoFreeScratch,
    #[error("fault detection requires an error-handler label")]
    MissingErrorHandler,
    #[error("unknown mnemonic `{0}` in scope filter")]
    UnknownScopeMnemonic(String),
    #[error("cannot re-derive pc-relative offset for duplicate: {0}")]
    PcRelFixup(#[from] AsmError),
}

/// Applies the plan's scheme.
pub fn apply(program: &SourceProgram, plan: &RewritePlan) -> Result<SourceProgram, RewriteError> {
    match plan.scheme {
        Scheme::FaultTolerance => apply_fault_tolerance(program, plan),
        Scheme::FaultDetection => apply_fault_detection(program, plan),
    }
}

const KNOWN_MNEMONICS: &[&str] = &[
    "mov", "movs", "add", "adds", "sub", "subs", "adr", "ldr", "str", "cmp", "b", "bl", "bx",
    "msr", "nop", "halt",
];

fn validate_scope(scope: &Scope) -> Result<(), RewriteError> {
    if let Scope::Mnemonics(set) = scope {
        for name in set {
            if !KNOWN_MNEMONICS.contains(&name.as_str()) {
                return Err(RewriteError::UnknownScopeMnemonic(name.clone()));
            }
        }
    }
    Ok(())
}

fn used_registers(program: &SourceProgram) -> BTreeSet<Register> {
    program.instructions().flat_map(|i| i.op().referenced_regs()).collect()
}

fn pick_scratch(program: &SourceProgram, policy: ScratchPolicy) -> Result<Register, RewriteError> {
    let used = used_registers(program);
    match policy {
        ScratchPolicy::Designated(reg) => {
            if reg.index() > 12 {
                return Err(RewriteError::BadScratch(reg));
            }
            if used.contains(&reg) {
                return Err(RewriteError::ScratchCollision(reg));
            }
            Ok(reg)
        }
        ScratchPolicy::AutoHigh => (1..=12)
            .rev()
            .map(|i| Register::new(i).unwrap())
            .find(|r| !used.contains(r))
            .ok_or(RewriteError::NoFreeScratch),
    }
}

/// Emission buffer that applies force_wide and tracks pc-relative duplicate
/// pairs for the post-pass offset fixup.
struct Emitter {
    lines: Vec<SourceLine>,
    force_wide: bool,
    /// (anchor line index, duplicate line index) of raw pc-relative loads.
    pcrel_pairs: Vec<(usize, usize)>,
}

impl Emitter {
    fn new(force_wide: bool) -> Self {
        Emitter { lines: Vec::new(), force_wide, pcrel_pairs: Vec::new() }
    }

    fn pass_through(&mut self, line: &SourceLine) {
        self.lines.push(line.clone());
    }

    fn labels(&mut self, labels: &[String], lineno: u32) {
        if !labels.is_empty() {
            self.lines.push(SourceLine { labels: labels.to_vec(), item: None, lineno });
        }
    }

    /// Emits one instruction, widening when the plan forces it. Operations
    /// with no 32-bit form (bx, the halt sentinel) stay narrow and get a
    /// trailing alignment nop so the next instruction starts a fresh fetch
    /// word.
    fn instr(&mut self, instr: Instruction, lineno: u32) -> usize {
        let index = self.lines.len();
        if self.force_wide {
            match instr.widened() {
                Ok(wide) => self.push(wide, lineno),
                Err(_) => {
                    self.push(instr, lineno);
                    self.push(Instruction::new(Op::Nop).unwrap(), lineno);
                }
            }
        } else {
            self.push(instr, lineno);
        }
        index
    }

    fn push(&mut self, instr: Instruction, lineno: u32) {
        self.lines.push(SourceLine { labels: Vec::new(), item: Some(Item::Instr(instr)), lineno });
    }

    fn mark_pcrel_pair(&mut self, anchor: usize, duplicate: usize) {
        self.pcrel_pairs.push((anchor, duplicate));
    }
}

fn is_raw_pcrel(instr: &Instruction) -> bool {
    matches!(instr.op(), Op::LdrLit { target: LitTarget::PcRel(_), .. })
}

/// Fresh label generator that avoids every label defined in the program.
struct LabelGen {
    taken: BTreeSet<String>,
    counter: u32,
}

impl LabelGen {
    fn new(program: &SourceProgram) -> Self {
        LabelGen { taken: program.defined_labels().map(str::to_string).collect(), counter: 0 }
    }

    fn fresh(&mut self, stem: &str) -> String {
        loop {
            let name = format!("__{stem}_{}", self.counter);
            self.counter += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }
}

/// Fault-tolerance rewriting: idempotent instructions are duplicated in
/// place; `bl` becomes the six-instruction replacement sequence that builds
/// the return address around the duplicated branch.
pub fn apply_fault_tolerance(
    program: &SourceProgram,
    plan: &RewritePlan,
) -> Result<SourceProgram, RewriteError> {
    validate_scope(&plan.scope)?;
    let mut labels = LabelGen::new(program);
    // Missing rules are the program's problem, not the plan's: report them
    // before any scratch-register concern.
    for line in &program.lines {
        if let Some(Item::Instr(instr)) = &line.item {
            if plan.scope.selects(instr.op().mnemonic())
                && !matches!(instr.op(), Op::Bl { .. })
            {
                check_idempotent(instr.op(), line.lineno)?;
            }
        }
    }
    // The call-sequence scratch is only needed when a bl is in scope.
    let needs_scratch = program
        .instructions()
        .any(|i| matches!(i.op(), Op::Bl { .. }) && plan.scope.selects("bl"));
    let scratch = if needs_scratch { Some(pick_scratch(program, plan.scratch)?) } else { None };

    let mut em = Emitter::new(plan.force_wide);
    for line in &program.lines {
        let Some(Item::Instr(instr)) = &line.item else {
            em.pass_through(line);
            continue;
        };
        if !plan.scope.selects(instr.op().mnemonic()) {
            em.pass_through(line);
            continue;
        }
        em.labels(&line.labels, line.lineno);
        match instr.op() {
            Op::Bl { target } => {
                let scratch = scratch.expect("checked above");
                let ret = labels.fresh("ft_ret");
                let adr = Instruction::new(Op::Adr { rd: scratch, target: Target::label(&ret) })
                    .expect("scratch is a general register");
                let add = Instruction::new(Op::AddImm {
                    rd: LR,
                    rn: scratch,
                    imm: 1,
                    setflags: false,
                })
                .expect("wide add");
                let b = Instruction::new(Op::B { target: target.clone() }).expect("branch");
                em.instr(adr.clone(), line.lineno);
                em.instr(adr, line.lineno);
                em.instr(add.clone(), line.lineno);
                em.instr(add, line.lineno);
                em.instr(b.clone(), line.lineno);
                em.instr(b, line.lineno);
                em.lines.push(SourceLine::label(&ret));
            }
            op => {
                check_idempotent(op, line.lineno)?;
                let first = em.instr(instr.clone(), line.lineno);
                let second = em.instr(instr.clone(), line.lineno);
                if is_raw_pcrel(instr) {
                    em.mark_pcrel_pair(first, second);
                }
            }
        }
    }
    finish(program, em)
}

/// The duplication rule covers exactly the instructions whose second
/// execution cannot change architectural state.
fn check_idempotent(op: &Op, line: u32) -> Result<(), RewriteError> {
    let aliased = |detail: &str| {
        Err(RewriteError::NoRule {
            scheme: "fault-tolerance",
            mnemonic: op.mnemonic().to_string(),
            detail: detail.to_string(),
            line,
        })
    };
    match op {
        Op::AddImm { rd, rn, .. } | Op::SubImm { rd, rn, .. } if rd == rn => {
            aliased("destination aliases the source operand")
        }
        Op::AddReg { rd, rn, rm, .. } | Op::SubReg { rd, rn, rm, .. } if rd == rn || rd == rm => {
            aliased("destination aliases a source operand")
        }
        Op::LdrImm { rt, rn, .. } if rt == rn => {
            aliased("destination aliases the base register")
        }
        _ => Ok(()),
    }
}

/// Whether fault detection can cover an instruction: ALU and load
/// instructions writing a general register. Branches, stores, `msr`, flag
/// consumers and the halt sentinel are not coverable.
pub fn fd_coverable(op: &Op) -> bool {
    matches!(
        op,
        Op::MovReg { .. }
            | Op::MovImm { .. }
            | Op::AddImm { .. }
            | Op::AddReg { .. }
            | Op::SubImm { .. }
            | Op::SubReg { .. }
            | Op::Adr { .. }
            | Op::LdrLit { .. }
            | Op::LdrImm { .. }
    )
}

fn replace_dest(op: &Op, scratch: Register) -> Op {
    let mut op = op.clone();
    match &mut op {
        Op::MovReg { rd, .. }
        | Op::MovImm { rd, .. }
        | Op::AddImm { rd, .. }
        | Op::AddReg { rd, .. }
        | Op::SubImm { rd, .. }
        | Op::SubReg { rd, .. }
        | Op::Adr { rd, .. } => *rd = scratch,
        Op::LdrLit { rt, .. } | Op::LdrImm { rt, .. } => *rt = scratch,
        _ => unreachable!("replace_dest on uncoverable op"),
    }
    op
}

/// Fault-detection rewriting: each covered instruction is duplicated into
/// the scratch register, compared, and a mismatch branches to the error
/// handler. When the destination feeds the address computation the scratch
/// copy runs first so both copies read the same location.
pub fn apply_fault_detection(
    program: &SourceProgram,
    plan: &RewritePlan,
) -> Result<SourceProgram, RewriteError> {
    validate_scope(&plan.scope)?;
    let error_label =
        program.error_handler.clone().ok_or(RewriteError::MissingErrorHandler)?;
    let needs_scratch = program
        .instructions()
        .any(|i| plan.scope.selects(i.op().mnemonic()) && fd_coverable(i.op()));
    let scratch = if needs_scratch { Some(pick_scratch(program, plan.scratch)?) } else { None };

    let mut em = Emitter::new(plan.force_wide);
    for line in &program.lines {
        let Some(Item::Instr(instr)) = &line.item else {
            em.pass_through(line);
            continue;
        };
        let op = instr.op();
        if !plan.scope.selects(op.mnemonic()) {
            em.pass_through(line);
            continue;
        }
        if !fd_coverable(op) {
            if plan.scope.is_filter() {
                return Err(RewriteError::Uncoverable {
                    mnemonic: op.mnemonic().to_string(),
                    line: line.lineno,
                });
            }
            // AllSupported covers what it can and leaves the rest alone.
            em.pass_through(line);
            continue;
        }

        let scratch = scratch.expect("coverable instruction implies scratch");
        let rd = op.dest_reg().expect("coverable instructions write a register");
        // The duplicate keeps the original's width unless the scratch
        // register itself forces the wide form.
        let dup_op = replace_dest(op, scratch);
        let dup = match instr.width() {
            Width::Wide32 => Instruction::with_width(dup_op, Width::Wide32),
            Width::Narrow16 => Instruction::new(dup_op),
        }
        .expect("coverable operations always have an encoding");
        let cmp = Instruction::new(Op::CmpReg { rn: rd, rm: scratch }).expect("cmp");
        let bne = Instruction::new(Op::BCond {
            cond: crate::isa::Cond::Ne,
            target: Target::label(&error_label),
        })
        .expect("bne");

        em.labels(&line.labels, line.lineno);
        let scratch_first = op.source_regs().contains(&rd);
        let (anchor, duplicate) = if scratch_first {
            let d = em.instr(dup, line.lineno);
            let a = em.instr(instr.clone(), line.lineno);
            (a, d)
        } else {
            let a = em.instr(instr.clone(), line.lineno);
            let d = em.instr(dup, line.lineno);
            (a, d)
        };
        if is_raw_pcrel(instr) {
            em.mark_pcrel_pair(anchor, duplicate);
        }
        em.instr(cmp, line.lineno);
        em.instr(bne, line.lineno);
    }
    finish(program, em)
}

fn finish(program: &SourceProgram, em: Emitter) -> Result<SourceProgram, RewriteError> {
    let mut out = SourceProgram {
        lines: em.lines,
        entry: program.entry.clone(),
        error_handler: program.error_handler.clone(),
        next_pool_id: program.next_pool_id,
    };
    fixup_pcrel_duplicates(&mut out, &em.pcrel_pairs)?;
    Ok(out)
}

/// Re-derives the pc-relative offset of each duplicated raw load so both
/// copies address the anchor copy's target, whatever the layout moved.
fn fixup_pcrel_duplicates(
    program: &mut SourceProgram,
    pairs: &[(usize, usize)],
) -> Result<(), RewriteError> {
    if pairs.is_empty() {
        return Ok(());
    }
    // Offsets computed at base 0 hold for any 4-aligned base.
    let map = assign_addresses(program, 0).map_err(RewriteError::PcRelFixup)?;
    for &(anchor, duplicate) in pairs {
        let a1 = map.line_addrs[anchor].expect("anchor is an instruction");
        let a2 = map.line_addrs[duplicate].expect("duplicate is an instruction");
        let off1 = match &program.lines[anchor].item {
            Some(Item::Instr(i)) => match i.op() {
                Op::LdrLit { target: LitTarget::PcRel(off), .. } => *off,
                _ => unreachable!("pcrel pair anchors a literal load"),
            },
            _ => unreachable!(),
        };
        let target = ((a1 + 4) & !3).wrapping_add_signed(off1);
        let off2 = target as i64 - ((a2 + 4) & !3) as i64;

        let Some(Item::Instr(instr)) = &mut program.lines[duplicate].item else {
            unreachable!()
        };
        let (narrow, rt) = match instr.op() {
            Op::LdrLit { rt, .. } => (instr.width() == Width::Narrow16, *rt),
            _ => unreachable!(),
        };
        let encodable =
            if narrow { (0..=1020).contains(&off2) && off2 % 4 == 0 } else { off2.abs() <= 4095 };
        if !encodable {
            return Err(RewriteError::PcRelFixup(AsmError::OffsetRange {
                what: "duplicated pc-relative load".into(),
                offset: off2 as i32,
                min: if narrow { 0 } else { -4095 },
                max: if narrow { 1020 } else { 4095 },
            }));
        }
        *instr = Instruction::with_width(
            Op::LdrLit { rt, target: LitTarget::PcRel(off2 as i32) },
            instr.width(),
        )
        .expect("validated offset");
    }
    Ok(())
}
