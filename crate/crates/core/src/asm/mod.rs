//! Assembler front end: parsing, layout, encoding, decoding and the
//! program-image dump format.

pub mod decode;
pub mod dump;
pub mod encode;
pub mod layout;
pub mod parse;
pub mod validity;

pub use decode::{classify_halfword, decode_wide, decode_word, Decoded, DecodedItem, HalfwordClass};
pub use encode::{encode, Encoding};
pub use layout::{layout, ProgramImage};
pub use parse::parse;
pub use validity::{is_wide_prefix, narrow_valid, validity_density, wide_valid};

use crate::isa::{Instruction, Width};

/// Items a source line can carry besides labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Instr(Instruction),
    /// `.word <imm32>`: a 4-byte data constant, aligned in the stream.
    Word(u32),
}

/// One source line after parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLine {
    pub labels: Vec<String>,
    pub item: Option<Item>,
    /// 1-based line number in the original text, 0 for generated lines.
    pub lineno: u32,
}

impl SourceLine {
    pub fn instr(instr: Instruction) -> Self {
        SourceLine { labels: Vec::new(), item: Some(Item::Instr(instr)), lineno: 0 }
    }

    pub fn label(name: &str) -> Self {
        SourceLine { labels: vec![name.to_string()], item: None, lineno: 0 }
    }
}

/// A parsed program: ordered lines plus the conventional entry and
/// error-handler labels (`main` and `error`) when defined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceProgram {
    pub lines: Vec<SourceLine>,
    pub entry: Option<String>,
    pub error_handler: Option<String>,
    /// Next free literal-pool slot id.
    pub next_pool_id: u32,
}

impl SourceProgram {
    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.lines.iter().filter_map(|l| match &l.item {
            Some(Item::Instr(i)) => Some(i),
            _ => None,
        })
    }

    /// All label names defined in the program.
    pub fn defined_labels(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().flat_map(|l| l.labels.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: u32, mnemonic: String },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("unresolved target `{0}` at encode time")]
    Unresolved(String),
    #[error("{what}: offset {offset} outside encodable range [{min}, {max}]")]
    OffsetRange { what: String, offset: i32, min: i32, max: i32 },
    #[error("{what}: immediate {value:#x} not encodable")]
    ImmediateRange { what: String, value: u32 },
    #[error("`{mnemonic}` has no {width:?} encoding for these operands")]
    WidthUnavailable { mnemonic: String, width: Width },
    #[error("line {line}: {source}")]
    BadInstruction {
        line: u32,
        #[source]
        source: crate::isa::IsaError,
    },
    #[error("misaligned literal pool entry at {0:#010x}")]
    MisalignedLiteral(u32),
    #[error("address {0:#010x} outside the program image")]
    OutOfImage(u32),
    #[error("malformed image dump: {0}")]
    BadDump(String),
}
