//! Fault campaigns: one restart-fresh simulation per fault spec, outcome
//! classification against the golden run, and aggregate metrics.

use sha2::{Digest, Sha256};

use crate::asm::ProgramImage;
use crate::fault::{CatalogDescriptor, FaultCatalog, FaultSpec};
use crate::isa::{hamming_weight, MachineState, Register, SpecialRegister, Status, STACK_TOP};
use crate::sim::{initial_state, run, RunLimits, RunResult};

/// The architecturally visible value a campaign watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetObservable {
    Reg(Register),
    Special(SpecialRegister),
    /// Word at `initial sp + offset`: a stacked argument slot.
    StackWord(u32),
}

impl TargetObservable {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some(spec) = SpecialRegister::parse(s) {
            return Some(TargetObservable::Special(spec));
        }
        if let Some(off) = s.strip_prefix("sp:") {
            return off.parse().ok().map(TargetObservable::StackWord);
        }
        Register::parse(s).map(TargetObservable::Reg)
    }

    pub fn read(&self, state: &MachineState) -> u32 {
        match self {
            TargetObservable::Reg(r) => state.reg(*r),
            TargetObservable::Special(s) => state.special(*s),
            TargetObservable::StackWord(off) => {
                state.mem.read_word(STACK_TOP.wrapping_add(*off)).unwrap_or(0)
            }
        }
    }
}

impl std::fmt::Display for TargetObservable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetObservable::Reg(r) => write!(f, "{r}"),
            TargetObservable::Special(s) => write!(f, "{s}"),
            TargetObservable::StackWord(off) => write!(f, "sp:{off}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Classification {
    Correct,
    FaultTargetReg,
    FaultOtherReg,
    Detected,
    Exception,
    Timeout,
}

impl Classification {
    pub const ALL: [Classification; 6] = [
        Classification::Correct,
        Classification::FaultTargetReg,
        Classification::FaultOtherReg,
        Classification::Detected,
        Classification::Exception,
        Classification::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Correct => "correct",
            Classification::FaultTargetReg => "fault_target_reg",
            Classification::FaultOtherReg => "fault_other_reg",
            Classification::Detected => "detected",
            Classification::Exception => "exception",
            Classification::Timeout => "timeout",
        }
    }

    fn slot(self) -> usize {
        match self {
            Classification::Correct => 0,
            Classification::FaultTargetReg => 1,
            Classification::FaultOtherReg => 2,
            Classification::Detected => 3,
            Classification::Exception => 4,
            Classification::Timeout => 5,
        }
    }
}

/// Per-spec outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub spec: FaultSpec,
    pub class: Classification,
    pub target_value: u32,
    pub target_hw: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub program_sha256: String,
    pub rewrite: String,
    pub descriptor: String,
    pub target: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignReport {
    pub outcomes: Vec<Outcome>,
    pub counts: [u64; 6],
    /// Outcomes with at least one observed register off golden
    /// (target or other), the "faults on any register" series.
    pub any_register_faults: u64,
    /// Hamming weights of the target value over FaultTargetReg outcomes.
    pub hw_histogram: [u64; 33],
    pub descriptor: CatalogDescriptor,
    pub provenance: Provenance,
}

impl CampaignReport {
    pub fn count(&self, class: Classification) -> u64 {
        self.counts[class.slot()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Exceptions and timeouts folded together, for comparability with
    /// setups that only observe crashes.
    pub fn crash_count(&self) -> u64 {
        self.count(Classification::Exception) + self.count(Classification::Timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CampaignError {
    #[error("golden run not Halted (status {0:?})")]
    GoldenNotHalted(Status),
    #[error("reports are not comparable: {0}")]
    Incomparable(String),
}

/// Registers compared against golden: r0-r12, sp, lr and the three special
/// registers. pc and flags stay out of the comparison.
fn observed_registers(state: &MachineState) -> Vec<u32> {
    let mut v: Vec<u32> = state.regs[..15].to_vec();
    v.extend_from_slice(&state.specials);
    v
}

/// Runs every spec of the catalog against a fresh reset state
/// (microcontroller-restart semantics) and classifies each outcome.
///
/// Classification precedence: reaching the error handler counts as Detected
/// even when registers also differ; exceptions and timeouts come next; then
/// the target register, then any other observed register.
pub fn run_campaign(
    image: &ProgramImage,
    golden: &RunResult,
    catalog: &FaultCatalog,
    target: TargetObservable,
    error_addr: Option<u32>,
    limits: RunLimits,
    rewrite_note: &str,
) -> Result<CampaignReport, CampaignError> {
    if golden.state.status != Status::Halted {
        return Err(CampaignError::GoldenNotHalted(golden.state.status));
    }
    let golden_target = target.read(&golden.state);
    let golden_regs = observed_registers(&golden.state);

    let mut outcomes = Vec::with_capacity(catalog.len());
    let mut counts = [0u64; 6];
    let mut any_register_faults = 0u64;
    let mut hw_histogram = [0u64; 33];

    for spec in &catalog.specs {
        let result = run(image, initial_state(image), limits, spec, error_addr);
        let target_value = target.read(&result.state);
        let class = classify(&result, target_value, golden_target, &golden_regs);
        counts[class.slot()] += 1;
        if matches!(class, Classification::FaultTargetReg | Classification::FaultOtherReg) {
            any_register_faults += 1;
        }
        if class == Classification::FaultTargetReg {
            hw_histogram[hamming_weight(target_value) as usize] += 1;
        }
        outcomes.push(Outcome {
            spec: *spec,
            class,
            target_value,
            target_hw: hamming_weight(target_value) as u8,
        });
    }

    Ok(CampaignReport {
        outcomes,
        counts,
        any_register_faults,
        hw_histogram,
        descriptor: catalog.descriptor,
        provenance: Provenance {
            program_sha256: image_hash(image),
            rewrite: rewrite_note.to_string(),
            descriptor: catalog.descriptor.descriptor_str(),
            target: target.to_string(),
            seed: catalog.descriptor.seed(),
        },
    })
}

fn classify(
    result: &RunResult,
    target_value: u32,
    golden_target: u32,
    golden_regs: &[u32],
) -> Classification {
    if result.watch_hit {
        return Classification::Detected;
    }
    match result.state.status {
        Status::Exception { .. } => Classification::Exception,
        Status::Timeout => Classification::Timeout,
        _ => {
            if target_value != golden_target {
                Classification::FaultTargetReg
            } else if observed_registers(&result.state) != golden_regs {
                Classification::FaultOtherReg
            } else {
                Classification::Correct
            }
        }
    }
}

pub fn image_hash(image: &ProgramImage) -> String {
    let mut hasher = Sha256::new();
    hasher.update(&image.bytes);
    format!("{:x}", hasher.finalize())
}

/// Report file: one row per spec, stable column order.
pub fn write_report(report: &CampaignReport) -> String {
    let mut out = String::from("kind,event,mask,classification,target_value,target_hw\n");
    for o in &report.outcomes {
        out.push_str(&format!(
            "{},{},{},{},{:#010x},{}\n",
            o.spec.kind_str(),
            o.spec.event(),
            o.spec.payload_str(),
            o.class.as_str(),
            o.target_value,
            o.target_hw
        ));
    }
    out
}

/// Summary file: aggregate counts, histogram bins 0-32 and the provenance
/// block, as deterministic `key = value` lines.
pub fn write_summary(report: &CampaignReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("total = {}\n", report.total()));
    for class in Classification::ALL {
        out.push_str(&format!("{} = {}\n", class.as_str(), report.count(class)));
    }
    out.push_str(&format!("crash = {}\n", report.crash_count()));
    out.push_str(&format!("any_register_faults = {}\n", report.any_register_faults));
    for (bin, count) in report.hw_histogram.iter().enumerate() {
        out.push_str(&format!("hist_{bin} = {count}\n"));
    }
    out.push_str(&format!("descriptor = {}\n", report.provenance.descriptor));
    out.push_str(&format!("target = {}\n", report.provenance.target));
    out.push_str(&format!("program_sha256 = {}\n", report.provenance.program_sha256));
    out.push_str(&format!("rewrite = {}\n", report.provenance.rewrite));
    match report.provenance.seed {
        Some(seed) => out.push_str(&format!("seed = {seed}\n")),
        None => out.push_str("seed = -\n"),
    }
    out
}

/// Reads a summary back into an aggregate-only report (no per-spec
/// outcomes), enough for [`compare_reports`].
pub fn read_summary(text: &str) -> Result<CampaignReport, CampaignError> {
    let mut counts = [0u64; 6];
    let mut hw_histogram = [0u64; 33];
    let mut any_register_faults = 0;
    let mut descriptor_str = String::new();
    let mut target = String::new();
    let mut program_sha256 = String::new();
    let mut rewrite = String::from("-");
    let mut seed = None;

    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else { continue };
        let (key, value) = (key.trim(), value.trim());
        let parse_u64 = || -> Result<u64, CampaignError> {
            value.parse().map_err(|_| CampaignError::Incomparable(format!("bad value for {key}")))
        };
        if let Some(class) = Classification::ALL.iter().find(|c| c.as_str() == key) {
            counts[class.slot()] = parse_u64()?;
        } else if let Some(bin) = key.strip_prefix("hist_") {
            let bin: usize = bin
                .parse()
                .map_err(|_| CampaignError::Incomparable(format!("bad histogram bin {key}")))?;
            if bin < 33 {
                hw_histogram[bin] = parse_u64()?;
            }
        } else {
            match key {
                "any_register_faults" => any_register_faults = parse_u64()?,
                "descriptor" => descriptor_str = value.to_string(),
                "target" => target = value.to_string(),
                "program_sha256" => program_sha256 = value.to_string(),
                "rewrite" => rewrite = value.to_string(),
                "seed" if value != "-" => seed = Some(parse_u64()?),
                _ => {}
            }
        }
    }

    let descriptor = crate::fault::CatalogDescriptor::parse(&descriptor_str)
        .map_err(|e| CampaignError::Incomparable(e.to_string()))?;
    Ok(CampaignReport {
        outcomes: Vec::new(),
        counts,
        any_register_faults,
        hw_histogram,
        descriptor,
        provenance: Provenance {
            program_sha256,
            rewrite,
            descriptor: descriptor_str,
            target,
            seed,
        },
    })
}

/// Comparison of two reports over comparable catalogs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportComparison {
    /// (classification, count in a, count in b, delta b - a).
    pub deltas: Vec<(Classification, u64, u64, i64)>,
    pub vulnerable_a: u64,
    pub vulnerable_b: u64,
}

impl std::fmt::Display for ReportComparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "classification      a        b        delta")?;
        for (class, a, b, delta) in &self.deltas {
            writeln!(f, "{:<18} {:<8} {:<8} {:+}", class.as_str(), a, b, delta)?;
        }
        writeln!(
            f,
            "vulnerable points (absolute fault counts on the target): {} -> {}",
            self.vulnerable_a, self.vulnerable_b
        )
    }
}

/// Emits per-classification deltas and the vulnerable-point counts.
/// Comparison is by absolute counts, not percentages; catalogs must come
/// from the same descriptor class and watch the same target.
pub fn compare_reports(
    a: &CampaignReport,
    b: &CampaignReport,
) -> Result<ReportComparison, CampaignError> {
    if a.descriptor.class() != b.descriptor.class() {
        return Err(CampaignError::Incomparable(format!(
            "descriptor classes differ: {} vs {}",
            a.descriptor.class(),
            b.descriptor.class()
        )));
    }
    if a.provenance.target != b.provenance.target {
        return Err(CampaignError::Incomparable(format!(
            "targets differ: {} vs {}",
            a.provenance.target, b.provenance.target
        )));
    }
    let deltas = Classification::ALL
        .iter()
        .map(|&c| {
            let (ca, cb) = (a.count(c), b.count(c));
            (c, ca, cb, cb as i64 - ca as i64)
        })
        .collect();
    Ok(ReportComparison {
        deltas,
        vulnerable_a: a.count(Classification::FaultTargetReg),
        vulnerable_b: b.count(Classification::FaultTargetReg),
    })
}
