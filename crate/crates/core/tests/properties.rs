//! Property tests over the simulator, layout and fault machinery.

mod common;

use common::{assemble, golden};
use glitchsim_core::asm::{layout, parse};
use glitchsim_core::fault::{
    generate_catalog, nop_replacement_mask, CatalogDescriptor, FaultSpec, SkipGranularity,
};
use glitchsim_core::isa::{hamming_weight, ExceptionKind, Status};
use glitchsim_core::sim::{initial_state, run, NoFaults, RunLimits};
use proptest::prelude::*;

proptest! {
    /// hamming_weight(a ^ b) == 0 exactly when a == b.
    #[test]
    fn hamming_distance_zero_iff_equal(a: u32, b: u32) {
        prop_assert_eq!(hamming_weight(a ^ b) == 0, a == b);
        prop_assert_eq!(hamming_weight(a ^ a), 0);
    }

    /// ceil(n/2) fetch events for a straight-line all-narrow program.
    #[test]
    fn fetch_economy_on_narrow_programs(nops in 0usize..100) {
        let mut text = String::from("main:\n");
        for _ in 0..nops {
            text.push_str("    nop\n");
        }
        text.push_str("    halt\n");
        let image = assemble(&text);
        let result = golden(&image);
        let instrs = nops as u64 + 1;
        prop_assert_eq!(result.fetch_count(), instrs.div_ceil(2));
    }

    /// Layout is a pure function of (program, base).
    #[test]
    fn layout_determinism(movs in proptest::collection::vec((0u8..8, 0u32..256), 0..20)) {
        let mut text = String::from("main:\n");
        for (rd, imm) in &movs {
            text.push_str(&format!("    movs r{rd}, #{imm}\n"));
        }
        text.push_str("    halt\n");
        let program = parse(&text).unwrap();
        let a = layout(&program, 0).unwrap();
        let b = layout(&program, 0).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Every narrow instruction at a 4-aligned address shares its fetch
    /// word with the next halfword.
    #[test]
    fn fetch_word_pairing(nops in 1usize..40) {
        let mut text = String::from("main:\n");
        for _ in 0..nops {
            text.push_str("    nop\n");
        }
        text.push_str("    halt\n");
        let image = assemble(&text);
        for (addr, instr) in &image.instrs {
            if instr.size() == 2 && addr % 4 == 0 && addr + 2 < image.end() {
                let (w0, _) = image.fetch_word_of(*addr).unwrap();
                let (w1, _) = image.fetch_word_of(addr + 2).unwrap();
                prop_assert_eq!(w0, w1);
            }
        }
    }
}

/// Identity hooks leave the run identical to a hook-free run, and a spec
/// whose event index never fires is such an identity.
#[test]
fn no_hook_transparency() {
    let image = assemble("main:\n    ldr r0, =0xCAFECAFE\n    adds r0, r0, #1\n    halt\n");
    let plain = run(&image, initial_state(&image), RunLimits::default(), &NoFaults, None);
    let spec = FaultSpec::fetch(u64::MAX, 0xFFFF_FFFF).unwrap();
    let hooked = run(&image, initial_state(&image), RunLimits::default(), &spec, None);
    assert_eq!(plain.state, hooked.state);
    assert_eq!(plain.trace, hooked.trace);
    assert_eq!(plain.steps, hooked.steps);
}

/// A one-instruction skip is the same fault as the fetch corruption that
/// rewrites the instruction's halfwords to nop encodings.
#[test]
fn skip_equals_nop_replacement_corruption() {
    // Straight-line program mixing narrow and (aligned) wide instructions.
    let image = assemble(
        "\
main:
    movs r0, #7
    movs r1, #9
    add.w r2, r0, r1
    adds r3, r2, #1
    nop
    mov.w r4, #0xff00ff00
    halt
",
    );
    let gold = golden(&image);
    let words: std::collections::BTreeMap<u64, (u32, u32)> =
        gold.fetch_events().map(|f| (f.index, (f.addr, f.word))).collect();

    let catalog = generate_catalog(CatalogDescriptor::SkipSweep, &gold, &image).unwrap();
    let mut checked = 0;
    for spec in &catalog.specs {
        let FaultSpec::Skip { event, granularity: SkipGranularity::OneInstruction { slot } } = spec
        else {
            continue;
        };
        let (addr, word) = words[event];
        let instr_addr = addr + 2 * *slot as u32;
        let instr = &image.instrs[&instr_addr];
        if instr.size() == 4 && !instr_addr.is_multiple_of(4) {
            continue; // straddling wide: no single-word mask exists
        }
        let mask = nop_replacement_mask(word, *slot, instr.size() == 4);
        let skipped = run(&image, initial_state(&image), RunLimits::default(), spec, None);
        if mask == 0 {
            // The instruction already was a nop; the skip must change nothing.
            assert_eq!(skipped.state, gold.state);
            continue;
        }
        let corrupt = FaultSpec::fetch(*event, mask).unwrap();
        let corrupted = run(&image, initial_state(&image), RunLimits::default(), &corrupt, None);
        assert_eq!(skipped.state, corrupted.state, "spec {spec:?}");
        assert_eq!(skipped.trace, corrupted.trace, "spec {spec:?}");
        checked += 1;
    }
    assert!(checked >= 5, "the sweep must exercise several equivalences, got {checked}");
}

/// A corrupted-to-undefined instruction reports its own address in the
/// exception record.
#[test]
fn exception_address_fidelity() {
    let image = assemble("main:\n    nop\n    nop\n    nop\n    nop\n    halt\n");
    let gold = golden(&image);
    // Second fetch word: first halfword is the nop at address 4.
    let word = gold.fetch_events().nth(1).unwrap().word;
    let mask = ((word as u16) ^ 0xDE00) as u32; // UDF T1
    let spec = FaultSpec::fetch(1, mask).unwrap();
    let res = run(&image, initial_state(&image), RunLimits::default(), &spec, None);
    assert_eq!(
        res.state.status,
        Status::Exception { kind: ExceptionKind::UndefinedInstruction, faulting_address: 4 }
    );
}

/// Campaign runs fan out across workers: everything they share is
/// immutable or freely copyable.
#[test]
fn core_types_transfer_between_threads() {
    fn pin<T: Send + Sync>() {}
    pin::<glitchsim_core::isa::MachineState>();
    pin::<glitchsim_core::isa::Instruction>();
    pin::<glitchsim_core::asm::ProgramImage>();
    pin::<glitchsim_core::fault::FaultSpec>();
    pin::<glitchsim_core::fault::FaultCatalog>();
    pin::<glitchsim_core::sim::RunResult>();
    pin::<glitchsim_core::campaign::CampaignReport>();
}

/// Every 16-bit pattern classifies (no panics over the whole corruption
/// space) and decoded subset instructions always sit inside the coarse
/// valid space; sampled 32-bit patterns obey the same containment.
#[test]
fn subset_decode_is_contained_in_the_validity_tables() {
    use glitchsim_core::asm::decode::{classify_halfword, decode_wide, Decoded, HalfwordClass};
    use glitchsim_core::asm::{is_wide_prefix, narrow_valid, wide_valid};
    use rand::{RngCore, SeedableRng};

    for hw in 0..=u16::MAX {
        match classify_halfword(hw) {
            HalfwordClass::Narrow(Decoded::Instr(_)) => {
                assert!(narrow_valid(hw), "{hw:#06x} decoded but the tables reject it")
            }
            HalfwordClass::Narrow(Decoded::Undefined) => {
                assert!(!narrow_valid(hw), "{hw:#06x} undefined but the tables accept it")
            }
            HalfwordClass::WidePrefix => assert!(is_wide_prefix(hw)),
            HalfwordClass::Narrow(Decoded::Unsupported) => {}
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200_000 {
        let word = rng.next_u32();
        let (hw1, hw2) = (word as u16, (word >> 16) as u16);
        if !is_wide_prefix(hw1) {
            continue;
        }
        match decode_wide(hw1, hw2) {
            Decoded::Instr(_) => assert!(wide_valid(hw1, hw2), "{hw1:#06x} {hw2:#06x}"),
            Decoded::Undefined => assert!(!wide_valid(hw1, hw2), "{hw1:#06x} {hw2:#06x}"),
            Decoded::Unsupported => {}
        }
    }
}

/// A single fault spec activates on at most one event of a run.
#[test]
fn single_fault_guarantee() {
    use glitchsim_core::sim::{FaultHooks, FetchEvent, LoadEvent};
    use std::cell::Cell;

    struct Counting<'a> {
        inner: &'a FaultSpec,
        activations: Cell<u32>,
    }
    impl FaultHooks for Counting<'_> {
        fn on_fetch(&self, ev: &FetchEvent) -> u32 {
            let out = self.inner.on_fetch(ev);
            if out != ev.word {
                self.activations.set(self.activations.get() + 1);
            }
            out
        }
        fn on_load(&self, ev: &LoadEvent) -> u32 {
            let out = self.inner.on_load(ev);
            if out != ev.value {
                self.activations.set(self.activations.get() + 1);
            }
            out
        }
        fn on_instruction(&self, event: u64, slot: u8, halfwords: &mut Vec<u16>) {
            let before = halfwords.clone();
            self.inner.on_instruction(event, slot, halfwords);
            if *halfwords != before {
                self.activations.set(self.activations.get() + 1);
            }
        }
    }

    let image = assemble("main:\n    ldr r0, =0xCAFECAFE\n    nop\n    nop\n    halt\n");
    let gold = golden(&image);
    for desc in [
        CatalogDescriptor::Exhaustive1(glitchsim_core::fault::EventKinds::Both),
        CatalogDescriptor::SkipSweep,
    ] {
        let catalog = generate_catalog(desc, &gold, &image).unwrap();
        for spec in &catalog.specs {
            let hooks = Counting { inner: spec, activations: Cell::new(0) };
            run(&image, initial_state(&image), RunLimits::default(), &hooks, None);
            assert!(hooks.activations.get() <= 1, "{spec:?} activated more than once");
        }
    }
}
