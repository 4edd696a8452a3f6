//! Machine state: register file, special registers, flags and memory.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Register, SpecialRegister};

/// Default RAM window. The program image is mapped read-only wherever the
/// layout placed it; everything else is unmapped and faults.
pub const RAM_BASE: u32 = 0x2000_0000;
pub const RAM_SIZE: u32 = 0x2000;
/// Initial stack pointer, in the middle of RAM so both directions are usable.
pub const STACK_TOP: u32 = 0x2000_1000;

/// `lr` reset value; `bx` to any 0xFFxx_xxxx address ends the simulation,
/// mirroring an EXC_RETURN-style function exit.
pub const LR_SENTINEL: u32 = 0xFFFF_FFF1;

/// Exception class recorded when execution stops abnormally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExceptionKind {
    /// Bit pattern outside the coarse decode tables.
    UndefinedInstruction,
    /// Valid per the decode tables but outside the implemented subset.
    UnsupportedInstruction,
    UnalignedAccess,
    MemoryFault,
}

impl ExceptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExceptionKind::UndefinedInstruction => "undefined_instruction",
            ExceptionKind::UnsupportedInstruction => "unsupported_instruction",
            ExceptionKind::UnalignedAccess => "unaligned_access",
            ExceptionKind::MemoryFault => "memory_fault",
        }
    }
}

/// Execution status. Transitions are monotone: once the state leaves
/// `Running` it never changes again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    Halted,
    /// Records the address of the instruction that triggered the exception.
    Exception { kind: ExceptionKind, faulting_address: u32 },
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Flags {
    pub n: bool,
    pub z: bool,
    pub c: bool,
    pub v: bool,
}

/// Sparse byte memory. The image region (code, data words, literal pool) is
/// read-only to instructions; the RAM window is read-write and zero-filled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    image_base: u32,
    image: Arc<Vec<u8>>,
    ram_base: u32,
    ram_size: u32,
    ram: BTreeMap<u32, u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemError {
    Unmapped(u32),
    ReadOnly(u32),
    Unaligned(u32),
}

impl Memory {
    pub fn new(image_base: u32, image: Arc<Vec<u8>>) -> Self {
        Memory { image_base, image, ram_base: RAM_BASE, ram_size: RAM_SIZE, ram: BTreeMap::new() }
    }

    pub fn image_base(&self) -> u32 {
        self.image_base
    }

    pub fn image_end(&self) -> u32 {
        self.image_base + self.image.len() as u32
    }

    fn in_image(&self, addr: u32) -> bool {
        addr >= self.image_base && addr < self.image_end()
    }

    fn in_ram(&self, addr: u32) -> bool {
        addr >= self.ram_base && addr < self.ram_base + self.ram_size
    }

    pub fn read_byte(&self, addr: u32) -> Result<u8, MemError> {
        if self.in_image(addr) {
            Ok(self.image[(addr - self.image_base) as usize])
        } else if self.in_ram(addr) {
            Ok(*self.ram.get(&addr).unwrap_or(&0))
        } else {
            Err(MemError::Unmapped(addr))
        }
    }

    pub fn read_word(&self, addr: u32) -> Result<u32, MemError> {
        if !addr.is_multiple_of(4) {
            return Err(MemError::Unaligned(addr));
        }
        let mut bytes = [0u8; 4];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = self.read_byte(addr.wrapping_add(i as u32))?;
        }
        Ok(u32::from_le_bytes(bytes))
    }

    pub fn write_word(&mut self, addr: u32, value: u32) -> Result<(), MemError> {
        if !addr.is_multiple_of(4) {
            return Err(MemError::Unaligned(addr));
        }
        if self.in_image(addr) {
            return Err(MemError::ReadOnly(addr));
        }
        for (i, b) in value.to_le_bytes().iter().enumerate() {
            let a = addr.wrapping_add(i as u32);
            if !self.in_ram(a) {
                return Err(MemError::Unmapped(a));
            }
            self.ram.insert(a, *b);
        }
        Ok(())
    }

    /// RAM contents with zero bytes dropped, for state comparisons where
    /// "never written" and "wrote zero" are equivalent.
    pub fn ram_nonzero(&self) -> BTreeMap<u32, u8> {
        self.ram.iter().filter(|(_, &b)| b != 0).map(|(&a, &b)| (a, b)).collect()
    }
}

/// Full architectural state of one simulated run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    /// r0-r12, sp (13), lr (14), pc (15).
    pub regs: [u32; 16],
    /// CONTROL, PSP, BASEPRI.
    pub specials: [u32; 3],
    pub flags: Flags,
    pub mem: Memory,
    pub status: Status,
}

impl MachineState {
    /// Reset state: zeroed registers, sp at [`STACK_TOP`], lr holding the
    /// return sentinel, pc at `entry`.
    pub fn reset(mem: Memory, entry: u32) -> Self {
        let mut regs = [0u32; 16];
        regs[13] = STACK_TOP;
        regs[14] = LR_SENTINEL;
        regs[15] = entry;
        MachineState { regs, specials: [0; 3], flags: Flags::default(), mem, status: Status::Running }
    }

    pub fn pc(&self) -> u32 {
        self.regs[15]
    }

    pub fn set_pc(&mut self, pc: u32) {
        self.regs[15] = pc;
    }

    pub fn reg(&self, r: Register) -> u32 {
        self.regs[r.index() as usize]
    }

    pub fn set_reg(&mut self, r: Register, value: u32) {
        self.regs[r.index() as usize] = value;
    }

    pub fn special(&self, s: SpecialRegister) -> u32 {
        self.specials[s.slot()]
    }

    pub fn set_special(&mut self, s: SpecialRegister, value: u32) {
        self.specials[s.slot()] = value;
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }
}
