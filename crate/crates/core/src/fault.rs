//! Fault specifications, catalogs and the hook implementations that apply
//! them during simulation.
//!
//! The model is single-fault: one spec modifies at most one event of a run.
//! Corruption is an XOR mask on the 32-bit word an event carries; skips are
//! modelled as replacement by nop encodings, at one-instruction or
//! whole-fetch-word granularity.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asm::ProgramImage;
use crate::sim::{FaultHooks, FetchEvent, LoadEvent, RunResult};

const NOP: u16 = 0xBF00;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkipGranularity {
    /// Skip the instruction whose first halfword sits at halfword `slot`
    /// (0 or 1) of the targeted fetch word.
    OneInstruction { slot: u8 },
    /// Replace the whole fetch word with nop-nop.
    WholeFetchWord,
}

/// One injected fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultSpec {
    /// XOR the word delivered by fetch event `event` with `mask`.
    FetchCorrupt { event: u64, mask: u32 },
    /// XOR the value delivered by load event `event` with `mask`.
    LoadCorrupt { event: u64, mask: u32 },
    /// Suppress execution at fetch event `event`.
    Skip { event: u64, granularity: SkipGranularity },
}

impl FaultSpec {
    pub fn fetch(event: u64, mask: u32) -> Result<Self, FaultError> {
        if mask == 0 {
            return Err(FaultError::ZeroMask);
        }
        Ok(FaultSpec::FetchCorrupt { event, mask })
    }

    pub fn load(event: u64, mask: u32) -> Result<Self, FaultError> {
        if mask == 0 {
            return Err(FaultError::ZeroMask);
        }
        Ok(FaultSpec::LoadCorrupt { event, mask })
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            FaultSpec::FetchCorrupt { .. } => "fetch",
            FaultSpec::LoadCorrupt { .. } => "load",
            FaultSpec::Skip { .. } => "skip",
        }
    }

    pub fn event(&self) -> u64 {
        match self {
            FaultSpec::FetchCorrupt { event, .. }
            | FaultSpec::LoadCorrupt { event, .. }
            | FaultSpec::Skip { event, .. } => *event,
        }
    }

    /// Serialization of the mask / granularity column.
    pub fn payload_str(&self) -> String {
        match self {
            FaultSpec::FetchCorrupt { mask, .. } | FaultSpec::LoadCorrupt { mask, .. } => {
                format!("{mask:#010x}")
            }
            FaultSpec::Skip { granularity: SkipGranularity::OneInstruction { slot }, .. } => {
                format!("one@{slot}")
            }
            FaultSpec::Skip { granularity: SkipGranularity::WholeFetchWord, .. } => "word".into(),
        }
    }
}

impl FaultHooks for FaultSpec {
    fn on_fetch(&self, ev: &FetchEvent) -> u32 {
        match self {
            FaultSpec::FetchCorrupt { event, mask } if *event == ev.index => ev.word ^ mask,
            FaultSpec::Skip { event, granularity: SkipGranularity::WholeFetchWord }
                if *event == ev.index =>
            {
                (NOP as u32) | ((NOP as u32) << 16)
            }
            _ => ev.word,
        }
    }

    fn on_load(&self, ev: &LoadEvent) -> u32 {
        match self {
            FaultSpec::LoadCorrupt { event, mask } if *event == ev.index => ev.value ^ mask,
            _ => ev.value,
        }
    }

    fn on_instruction(&self, event: u64, slot: u8, halfwords: &mut Vec<u16>) {
        if let FaultSpec::Skip { event: target, granularity: SkipGranularity::OneInstruction { slot: target_slot } } = self
        {
            if *target == event && *target_slot == slot {
                for hw in halfwords.iter_mut() {
                    *hw = NOP;
                }
            }
        }
    }
}

/// Which event kinds a corruption sweep covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKinds {
    Fetch,
    Load,
    Both,
}

impl EventKinds {
    fn fetch(self) -> bool {
        matches!(self, EventKinds::Fetch | EventKinds::Both)
    }

    fn load(self) -> bool {
        matches!(self, EventKinds::Load | EventKinds::Both)
    }

    fn as_str(self) -> &'static str {
        match self {
            EventKinds::Fetch => "fetch",
            EventKinds::Load => "load",
            EventKinds::Both => "both",
        }
    }
}

/// How a catalog is generated from a golden trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogDescriptor {
    /// One spec per (event, bit): 32 per covered event.
    Exhaustive1(EventKinds),
    /// One spec per (event, bit pair): C(32,2) = 496 per covered event.
    Exhaustive2(EventKinds),
    /// `count` specs with `flips` random bits each, uniformly over the
    /// covered events, seeded.
    Sampled { flips: u8, count: u64, seed: u64, kinds: EventKinds },
    /// One skip per instruction start and one per fetch word.
    SkipSweep,
}

impl EventKinds {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "fetch" => Some(EventKinds::Fetch),
            "load" => Some(EventKinds::Load),
            "both" => Some(EventKinds::Both),
            _ => None,
        }
    }
}

impl CatalogDescriptor {
    /// Parses `exhaustive1`, `exhaustive2`, `sampled:K:N:SEED` or `skips`,
    /// each corruption form taking an optional `:fetch|:load|:both` suffix
    /// (both by default).
    pub fn parse(s: &str) -> Result<Self, FaultError> {
        let bad = || FaultError::BadDescriptor(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        match parts[0] {
            "skips" if parts.len() == 1 => Ok(CatalogDescriptor::SkipSweep),
            "exhaustive1" | "exhaustive2" => {
                let kinds = match parts.len() {
                    1 => EventKinds::Both,
                    2 => EventKinds::parse(parts[1]).ok_or_else(bad)?,
                    _ => return Err(bad()),
                };
                Ok(if parts[0] == "exhaustive1" {
                    CatalogDescriptor::Exhaustive1(kinds)
                } else {
                    CatalogDescriptor::Exhaustive2(kinds)
                })
            }
            "sampled" if parts.len() == 4 || parts.len() == 5 => {
                let flips = parts[1].parse().map_err(|_| bad())?;
                let count = parts[2].parse().map_err(|_| bad())?;
                let seed = parts[3].parse().map_err(|_| bad())?;
                let kinds = match parts.get(4) {
                    None => EventKinds::Both,
                    Some(k) => EventKinds::parse(k).ok_or_else(bad)?,
                };
                Ok(CatalogDescriptor::Sampled { flips, count, seed, kinds })
            }
            _ => Err(bad()),
        }
    }

    pub fn descriptor_str(&self) -> String {
        match self {
            CatalogDescriptor::Exhaustive1(k) => format!("exhaustive1:{}", k.as_str()),
            CatalogDescriptor::Exhaustive2(k) => format!("exhaustive2:{}", k.as_str()),
            CatalogDescriptor::Sampled { flips, count, seed, kinds } => {
                format!("sampled:{flips}:{count}:{seed}:{}", kinds.as_str())
            }
            CatalogDescriptor::SkipSweep => "skips".into(),
        }
    }

    /// Class name for report comparability checks.
    pub fn class(&self) -> &'static str {
        match self {
            CatalogDescriptor::Exhaustive1(_) => "exhaustive1",
            CatalogDescriptor::Exhaustive2(_) => "exhaustive2",
            CatalogDescriptor::Sampled { .. } => "sampled",
            CatalogDescriptor::SkipSweep => "skips",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            CatalogDescriptor::Sampled { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

/// An ordered list of fault specs, deterministic given the descriptor and
/// the golden trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultCatalog {
    pub descriptor: CatalogDescriptor,
    pub specs: Vec<FaultSpec>,
}

impl FaultCatalog {
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// One spec per line: `kind index mask|granularity`.
    pub fn to_text(&self) -> String {
        let mut out = format!("# catalog {}\n", self.descriptor.descriptor_str());
        for spec in &self.specs {
            out.push_str(&format!("{} {} {}\n", spec.kind_str(), spec.event(), spec.payload_str()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FaultError {
    #[error("corruption mask must be nonzero")]
    ZeroMask,
    #[error("golden trace has no events to target")]
    EmptyTrace,
    #[error("bad catalog descriptor `{0}`")]
    BadDescriptor(String),
}

/// Generates the fault catalog for a golden (fault-free) run.
///
/// Skip sweeps need the image to know which instructions start inside each
/// fetched word.
pub fn generate_catalog(
    descriptor: CatalogDescriptor,
    golden: &RunResult,
    image: &ProgramImage,
) -> Result<FaultCatalog, FaultError> {
    let fetch_events: Vec<&FetchEvent> = golden.fetch_events().collect();
    let load_events: Vec<&LoadEvent> = golden.load_events().collect();

    let mut specs = Vec::new();
    match descriptor {
        CatalogDescriptor::Exhaustive1(kinds) | CatalogDescriptor::Exhaustive2(kinds) => {
            let covered_fetch = kinds.fetch().then_some(&fetch_events).filter(|v| !v.is_empty());
            let covered_load = kinds.load().then_some(&load_events).filter(|v| !v.is_empty());
            if covered_fetch.is_none() && covered_load.is_none() {
                return Err(FaultError::EmptyTrace);
            }
            let masks: Vec<u32> = if matches!(descriptor, CatalogDescriptor::Exhaustive1(_)) {
                (0..32).map(|b| 1u32 << b).collect()
            } else {
                let mut m = Vec::with_capacity(496);
                for a in 0..32u32 {
                    for b in a + 1..32 {
                        m.push((1 << a) | (1 << b));
                    }
                }
                m
            };
            if let Some(events) = covered_fetch {
                for ev in events.iter() {
                    for &mask in &masks {
                        specs.push(FaultSpec::FetchCorrupt { event: ev.index, mask });
                    }
                }
            }
            if let Some(events) = covered_load {
                for ev in events.iter() {
                    for &mask in &masks {
                        specs.push(FaultSpec::LoadCorrupt { event: ev.index, mask });
                    }
                }
            }
        }
        CatalogDescriptor::Sampled { flips, count, seed, kinds } => {
            let mut pool: Vec<(bool, u64)> = Vec::new();
            if kinds.fetch() {
                pool.extend(fetch_events.iter().map(|e| (true, e.index)));
            }
            if kinds.load() {
                pool.extend(load_events.iter().map(|e| (false, e.index)));
            }
            if pool.is_empty() {
                return Err(FaultError::EmptyTrace);
            }
            let flips = flips.clamp(1, 32) as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..count {
                let (is_fetch, event) = pool[rng.gen_range(0..pool.len())];
                let mut mask = 0u32;
                while mask.count_ones() < flips as u32 {
                    mask |= 1 << rng.gen_range(0..32);
                }
                specs.push(if is_fetch {
                    FaultSpec::FetchCorrupt { event, mask }
                } else {
                    FaultSpec::LoadCorrupt { event, mask }
                });
            }
        }
        CatalogDescriptor::SkipSweep => {
            if fetch_events.is_empty() {
                return Err(FaultError::EmptyTrace);
            }
            for ev in &fetch_events {
                for (addr, _) in image.instrs_in_word(ev.addr) {
                    let slot = ((addr >> 1) & 1) as u8;
                    specs.push(FaultSpec::Skip {
                        event: ev.index,
                        granularity: SkipGranularity::OneInstruction { slot },
                    });
                }
                specs.push(FaultSpec::Skip {
                    event: ev.index,
                    granularity: SkipGranularity::WholeFetchWord,
                });
            }
        }
    }
    Ok(FaultCatalog { descriptor, specs })
}

/// The fetch-corrupt mask that rewrites an instruction's halfwords to nops,
/// for the skip-equivalence property (a skip is a specific replacement).
pub fn nop_replacement_mask(word: u32, slot: u8, wide: bool) -> u32 {
    let lo = word as u16;
    let hi = (word >> 16) as u16;
    match (slot, wide) {
        (0, false) => ((lo ^ NOP) as u32) & 0xFFFF,
        (1, false) => (((hi ^ NOP) as u32) << 16) & 0xFFFF_0000,
        (0, true) => ((lo ^ NOP) as u32) | (((hi ^ NOP) as u32) << 16),
        _ => panic!("straddling wide instruction has no single-word nop mask"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::{layout, parse};
    use crate::sim::{golden_run, RunLimits};

    fn golden(text: &str) -> (crate::asm::ProgramImage, RunResult) {
        let image = layout(&parse(text).unwrap(), 0).unwrap();
        let run = golden_run(&image, RunLimits::default());
        (image, run)
    }

    #[test]
    fn fetch_corrupt_is_a_single_bit_xor() {
        let spec = FaultSpec::fetch(0, 0x1).unwrap();
        let ev = FetchEvent { index: 0, addr: 0, word: 0xBF00_BF00 };
        assert_eq!(spec.on_fetch(&ev), 0xBF00_BF01);
        let other = FetchEvent { index: 1, addr: 4, word: 0xBF00_BF00 };
        assert_eq!(spec.on_fetch(&other), 0xBF00_BF00, "non-matching events pass through");
    }

    #[test]
    fn zero_masks_are_rejected() {
        assert_eq!(FaultSpec::fetch(0, 0), Err(FaultError::ZeroMask));
        assert_eq!(FaultSpec::load(3, 0), Err(FaultError::ZeroMask));
    }

    #[test]
    fn exhaustive1_counts() {
        // One fetch event.
        let (image, run) = golden("main:\n    halt\n");
        assert_eq!(run.fetch_count(), 1);
        let catalog =
            generate_catalog(CatalogDescriptor::Exhaustive1(EventKinds::Fetch), &run, &image)
                .unwrap();
        assert_eq!(catalog.len(), 32);

        // Three fetch events plus one load event, both kinds covered.
        let (image, run) = golden("main:\n    ldr r0, =5\n    nop\n    nop\n    nop\n    halt\n");
        assert_eq!(run.fetch_count(), 3);
        assert_eq!(run.load_count(), 1);
        let catalog =
            generate_catalog(CatalogDescriptor::Exhaustive1(EventKinds::Both), &run, &image)
                .unwrap();
        assert_eq!(catalog.len(), 128);
    }

    #[test]
    fn exhaustive2_counts() {
        let (image, run) = golden("main:\n    halt\n");
        let catalog =
            generate_catalog(CatalogDescriptor::Exhaustive2(EventKinds::Fetch), &run, &image)
                .unwrap();
        assert_eq!(catalog.len(), 496);
        assert!(catalog.specs.iter().all(|s| matches!(
            s,
            FaultSpec::FetchCorrupt { mask, .. } if mask.count_ones() == 2
        )));
    }

    #[test]
    fn sampled_catalogs_are_deterministic() {
        let (image, run) = golden("main:\n    ldr r0, =5\n    halt\n");
        let desc = CatalogDescriptor::Sampled { flips: 4, count: 1000, seed: 7, kinds: EventKinds::Both };
        let a = generate_catalog(desc, &run, &image).unwrap();
        let b = generate_catalog(desc, &run, &image).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        assert!(a.specs.iter().all(|s| matches!(
            s,
            FaultSpec::FetchCorrupt { mask, .. } | FaultSpec::LoadCorrupt { mask, .. }
                if mask.count_ones() == 4
        )));
    }

    #[test]
    fn skip_sweep_covers_instructions_and_words() {
        // Word 0: two narrow instructions; word 4: halt + pad.
        let (image, run) = golden("main:\n    nop\n    nop\n    halt\n");
        let catalog = generate_catalog(CatalogDescriptor::SkipSweep, &run, &image).unwrap();
        // Event 0: 2 one-instruction + 1 word; event 1: 1 + 1.
        assert_eq!(catalog.len(), 5);
    }

    #[test]
    fn whole_word_skip_suppresses_a_paired_duplicate() {
        // Both adr copies share the fetch word at 0; one whole-word skip
        // takes them both out and the register keeps its reset value.
        let (image, run_golden) = golden(
            "main:\n    adr r1, anchor\n    adr r1, anchor\n    halt\n    nop\nanchor:\n    halt\n",
        );
        let r1 = crate::isa::Register::new(1).unwrap();
        assert_eq!(run_golden.state.reg(r1), image.symbol("anchor").unwrap());
        let spec = FaultSpec::Skip { event: 0, granularity: SkipGranularity::WholeFetchWord };
        let res = crate::sim::run(
            &image,
            crate::sim::initial_state(&image),
            RunLimits::default(),
            &spec,
            None,
        );
        assert_eq!(res.state.reg(r1), 0, "both address loads suppressed by one event");
        assert_eq!(res.state.status, crate::isa::Status::Halted);
    }

    #[test]
    fn load_corruption_gives_full_value_diversity() {
        let (image, run_golden) = golden("main:\n    ldr r0, =0xCAFECAFE\n    halt\n");
        let r0 = crate::isa::Register::new(0).unwrap();
        assert_eq!(run_golden.state.reg(r0), 0xCAFE_CAFE);
        for mask in [0x1u32, 0x8000_0000, 0xFFFF_FFFF, 0x1234_5678] {
            let spec = FaultSpec::load(0, mask).unwrap();
            let res = crate::sim::run(
                &image,
                crate::sim::initial_state(&image),
                RunLimits::default(),
                &spec,
                None,
            );
            assert_eq!(res.state.reg(r0), 0xCAFE_CAFE ^ mask);
        }
    }

    #[test]
    fn empty_trace_is_an_error() {
        let (image, run) = golden("main:\n    halt\n");
        let err = generate_catalog(CatalogDescriptor::Exhaustive1(EventKinds::Load), &run, &image);
        assert_eq!(err, Err(FaultError::EmptyTrace));
    }

    #[test]
    fn descriptor_strings_round_trip() {
        for desc in [
            CatalogDescriptor::Exhaustive1(EventKinds::Both),
            CatalogDescriptor::Exhaustive1(EventKinds::Load),
            CatalogDescriptor::Exhaustive2(EventKinds::Fetch),
            CatalogDescriptor::Sampled { flips: 4, count: 1000, seed: 7, kinds: EventKinds::Both },
            CatalogDescriptor::SkipSweep,
        ] {
            assert_eq!(CatalogDescriptor::parse(&desc.descriptor_str()), Ok(desc));
        }
        assert_eq!(CatalogDescriptor::parse("exhaustive1"), Ok(CatalogDescriptor::Exhaustive1(EventKinds::Both)));
        assert!(CatalogDescriptor::parse("nonsense").is_err());
        assert!(CatalogDescriptor::parse("sampled:4").is_err());
    }

    #[test]
    fn catalog_serialization_shape() {
        let (image, run) = golden("main:\n    nop\n    halt\n");
        let catalog = generate_catalog(CatalogDescriptor::SkipSweep, &run, &image).unwrap();
        let text = catalog.to_text();
        assert!(text.starts_with("# catalog skips\n"));
        assert!(text.contains("skip 0 one@0"));
        assert!(text.contains("skip 0 word"));
    }
}
