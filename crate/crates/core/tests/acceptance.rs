//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `cargo test --test acceptance -- --nocapture`).

mod common;

use common::{assemble, assemble_program, golden, reg, visible_state};
use glitchsim_core::asm::decode::{classify_halfword, decode_wide, Decoded, HalfwordClass};
use glitchsim_core::asm::parse::parse;
use glitchsim_core::asm::{encode, validity_density, Encoding};
use glitchsim_core::bench;
use glitchsim_core::campaign::{run_campaign, write_report, write_summary, Classification};
use glitchsim_core::fault::{generate_catalog, CatalogDescriptor, EventKinds, FaultSpec, SkipGranularity};
use glitchsim_core::isa::{
    hamming_weight, Cond, Instruction, LitTarget, Op, Register, SpecialRegister, Status, Target,
    Width, LR, SP,
};
use glitchsim_core::rewrite::{apply, RewritePlan, Scope};
use glitchsim_core::sim::{initial_state, run, RunLimits};

fn pass(n: u32, what: &str) {
    println!("CRITERION {n} ({what}): PASS");
}

// --- criterion 1: encoding fidelity ---------------------------------------

fn registers() -> Vec<Register> {
    [0u8, 1, 3, 7, 8, 10, 12].iter().map(|&i| reg(i)).collect()
}

fn grid() -> Vec<(Op, Width)> {
    let mut ops: Vec<Op> = Vec::new();
    let regs = registers();
    let low: Vec<Register> = regs.iter().copied().filter(|r| r.is_low()).collect();

    for &rd in &regs {
        for &rm in &regs {
            ops.push(Op::MovReg { rd, rm, setflags: false });
            ops.push(Op::MovReg { rd, rm, setflags: true });
            for setflags in [false, true] {
                ops.push(Op::AddReg { rd, rn: rm, rm: rd, setflags });
                ops.push(Op::SubReg { rd, rn: rm, rm, setflags });
            }
        }
        ops.push(Op::MovReg { rd, rm: SP, setflags: false });
        ops.push(Op::MovReg { rd, rm: LR, setflags: false });
        for imm in [0u32, 1, 7, 8, 255, 256, 0x3FC, 0x00FF_00FF, 0xFF00_FF00, 0xABAB_ABAB] {
            for setflags in [false, true] {
                ops.push(Op::MovImm { rd, imm, setflags });
                ops.push(Op::AddImm { rd, rn: rd, imm, setflags });
                ops.push(Op::SubImm { rd, rn: rd, imm, setflags });
            }
            ops.push(Op::CmpImm { rn: rd, imm });
        }
        for &rm in &regs {
            ops.push(Op::CmpReg { rn: rd, rm });
        }
        for off in [0i32, 4, 1020, 1, 4095, -1, -4095] {
            ops.push(Op::LdrLit { rt: rd, target: LitTarget::PcRel(off) });
        }
        for off in [0i32, 4, 1020, 4092] {
            ops.push(Op::Adr { rd, target: Target::Resolved(off) });
        }
        for &rn in &regs {
            for offset in [0u32, 4, 124, 1, 4095] {
                ops.push(Op::LdrImm { rt: rd, rn, offset });
                ops.push(Op::StrImm { rt: rd, rn, offset });
            }
        }
        for offset in [0u32, 4, 1020] {
            ops.push(Op::LdrImm { rt: rd, rn: SP, offset });
            ops.push(Op::StrImm { rt: rd, rn: SP, offset });
        }
        ops.push(Op::Bx { rm: rd });
    }
    ops.push(Op::Bx { rm: LR });
    for cond in [Cond::Eq, Cond::Ne] {
        for off in [-256i32, -2, 0, 2, 254, -1_048_576, 1_048_574] {
            ops.push(Op::BCond { cond, target: Target::Resolved(off) });
        }
    }
    for off in [-2048i32, 0, 2, 2046, -16_777_216, 16_777_214] {
        ops.push(Op::B { target: Target::Resolved(off) });
        ops.push(Op::Bl { target: Target::Resolved(off) });
    }
    for spec in SpecialRegister::ALL {
        for &rn in &low {
            ops.push(Op::Msr { spec, rn });
        }
    }
    ops.push(Op::Nop);
    ops.push(Op::Halt);

    let mut out = Vec::new();
    for op in ops {
        for width in [Width::Narrow16, Width::Wide32] {
            if Instruction::with_width(op.clone(), width).is_ok() {
                out.push((op.clone(), width));
            }
        }
    }
    out
}

#[test]
fn criterion_1_encoding_round_trip() {
    let start = std::time::Instant::now();
    let cases = grid();
    assert!(cases.len() > 800, "operand grid too small: {}", cases.len());
    for (op, width) in cases {
        let instr = Instruction::with_width(op, width).unwrap();
        let enc = encode(&instr).unwrap_or_else(|e| panic!("{instr:?}: {e}"));
        let back = match enc {
            Encoding::Narrow(hw) => match classify_halfword(hw) {
                HalfwordClass::Narrow(Decoded::Instr(i)) => i,
                other => panic!("{instr:?} decoded as {other:?}"),
            },
            Encoding::Wide(hw1, hw2) => match decode_wide(hw1, hw2) {
                Decoded::Instr(i) => i,
                other => panic!("{instr:?} decoded as {other:?}"),
            },
        };
        assert_eq!(back, instr, "round trip mismatch");
    }

    // Field-layout anchor, cross-checked against an independent decoder.
    let ldr = Instruction::with_width(
        Op::LdrLit { rt: reg(0), target: LitTarget::PcRel(40) },
        Width::Narrow16,
    )
    .unwrap();
    assert_eq!(encode(&ldr).unwrap(), Encoding::Narrow(0x480A));

    assert!(start.elapsed().as_secs() < 60);
    pass(1, "encoding fidelity");
}

// --- criterion 2: the golden load anchor ----------------------------------

#[test]
fn criterion_2_cafecafe_anchor() {
    let start = std::time::Instant::now();
    let bench = bench::load_benchmark("load_cafecafe").unwrap();
    let image = assemble(bench.source);
    let gold = golden(&image);
    assert_eq!(gold.state.reg(reg(0)), 0xCAFE_CAFE);
    assert_eq!(hamming_weight(gold.state.reg(reg(0))), 22);

    let loads = generate_catalog(CatalogDescriptor::Exhaustive1(EventKinds::Load), &gold, &image)
        .unwrap();
    let report = run_campaign(
        &image,
        &gold,
        &loads,
        bench.target,
        None,
        RunLimits::default(),
        "none",
    )
    .unwrap();
    assert_eq!(report.count(Classification::FaultTargetReg), 32);
    let hw_sum: u64 = report.hw_histogram[21] + report.hw_histogram[23];
    assert_eq!(hw_sum, 32, "all faulty weights sit in 22 +/- 1");

    let fetches =
        generate_catalog(CatalogDescriptor::Exhaustive1(EventKinds::Fetch), &gold, &image)
            .unwrap();
    let report = run_campaign(
        &image,
        &gold,
        &fetches,
        bench.target,
        None,
        RunLimits::default(),
        "none",
    )
    .unwrap();
    assert!(
        report.count(Classification::Exception) * 2 > report.total(),
        "fetch corruption mostly raises exceptions: {} of {}",
        report.count(Classification::Exception),
        report.total()
    );

    assert!(start.elapsed().as_secs() < 60);
    pass(2, "golden load anchor and single-bit sweeps");
}

// --- criterion 3: tolerance under single instruction skips ----------------

#[test]
fn criterion_3_ft_single_skip_tolerance() {
    let start = std::time::Instant::now();
    let bench = bench::load_benchmark("bl_call").unwrap();
    let program = parse(bench.source).unwrap();
    let rewritten = apply(&program, &RewritePlan::fault_tolerance().wide()).unwrap();
    let image = assemble_program(&rewritten);
    let gold = golden(&image);

    let sweep = generate_catalog(CatalogDescriptor::SkipSweep, &gold, &image).unwrap();
    let one_skips: Vec<FaultSpec> = sweep
        .specs
        .iter()
        .copied()
        .filter(|s| {
            matches!(s, FaultSpec::Skip { granularity: SkipGranularity::OneInstruction { .. }, .. })
        })
        .collect();
    assert!(one_skips.len() >= 10, "sweep covers every executed instruction");
    let catalog = glitchsim_core::fault::FaultCatalog {
        descriptor: CatalogDescriptor::SkipSweep,
        specs: one_skips,
    };
    let report = run_campaign(
        &image,
        &gold,
        &catalog,
        bench.target,
        None,
        RunLimits::default(),
        "ft+wide",
    )
    .unwrap();
    assert_eq!(report.count(Classification::FaultTargetReg), 0);
    assert_eq!(report.count(Classification::FaultOtherReg), 0);

    assert!(start.elapsed().as_secs() < 60);
    pass(3, "fault tolerance under exhaustive single-instruction skips");
}

// --- criterion 4: the double-corruption failure and its cure --------------

fn whole_word_skip_report(plan: &RewritePlan) -> glitchsim_core::campaign::CampaignReport {
    let bench = bench::load_benchmark("bl_call").unwrap();
    let program = parse(bench.source).unwrap();
    let rewritten = apply(&program, plan).unwrap();
    let image = assemble_program(&rewritten);
    let gold = golden(&image);
    let sweep = generate_catalog(CatalogDescriptor::SkipSweep, &gold, &image).unwrap();
    let word_skips: Vec<FaultSpec> = sweep
        .specs
        .iter()
        .copied()
        .filter(|s| {
            matches!(s, FaultSpec::Skip { granularity: SkipGranularity::WholeFetchWord, .. })
        })
        .collect();
    let catalog = glitchsim_core::fault::FaultCatalog {
        descriptor: CatalogDescriptor::SkipSweep,
        specs: word_skips,
    };
    run_campaign(
        &image,
        &gold,
        &catalog,
        bench.target,
        None,
        RunLimits::default(),
        &plan.describe(),
    )
    .unwrap()
}

#[test]
fn criterion_4_ft_needs_the_wide_encoding() {
    let narrow = whole_word_skip_report(&RewritePlan::fault_tolerance());
    let wide = whole_word_skip_report(&RewritePlan::fault_tolerance().wide());
    assert!(
        narrow.count(Classification::FaultTargetReg) >= 1,
        "default widths leave paired duplicates in shared fetch words"
    );
    assert_eq!(
        wide.count(Classification::FaultTargetReg),
        0,
        "forced 32-bit encoding removes every such pair"
    );
    // The report comparison shows the strict ordering directly.
    let cmp = glitchsim_core::campaign::compare_reports(&narrow, &wide).unwrap();
    assert!(cmp.vulnerable_b < cmp.vulnerable_a, "{cmp}");
    pass(4, "whole-fetch-word skips: 16-bit vulnerable, 32-bit clean");
}

// --- criterion 5: detection completeness -----------------------------------

#[test]
fn criterion_5_fd_detection_completeness() {
    let start = std::time::Instant::now();
    let bench = bench::load_benchmark("ldr_detect").unwrap();
    let program = parse(bench.source).unwrap();
    let rewritten = apply(&program, &RewritePlan::fault_detection().wide()).unwrap();
    let image = assemble_program(&rewritten);
    let gold = golden(&image);

    for descriptor in [
        CatalogDescriptor::Exhaustive1(EventKinds::Load),
        CatalogDescriptor::Exhaustive2(EventKinds::Load),
        CatalogDescriptor::SkipSweep,
    ] {
        let catalog = generate_catalog(descriptor, &gold, &image).unwrap();
        let report = run_campaign(
            &image,
            &gold,
            &catalog,
            bench.target,
            image.error_handler,
            RunLimits::default(),
            "fd+wide",
        )
        .unwrap();
        assert_eq!(report.count(Classification::FaultTargetReg), 0, "{descriptor:?}");
        assert_eq!(
            report.total(),
            report.count(Classification::Detected) + report.count(Classification::Correct),
            "{descriptor:?}: every spec is detected or harmless"
        );
    }

    assert!(start.elapsed().as_secs() < 300);
    pass(5, "fault detection catches every load corruption and skip");
}

// --- criterion 6: encoding-space sparsity direction ------------------------

/// Golden densities, recorded from the first computation of the coarse
/// validity tables (Narrow16 exhaustive; Wide32 at 10^6 samples, seed 42).
const NARROW_DENSITY_GOLDEN: f64 = 58320.0 / 65536.0;
const WIDE_DENSITY_GOLDEN: f64 = 78569.0 / 1_000_000.0;

#[test]
fn criterion_6_density_direction() {
    let narrow = validity_density(Width::Narrow16, 0, 0);
    let wide = validity_density(Width::Wide32, 1_000_000, 42);
    assert_eq!(narrow, NARROW_DENSITY_GOLDEN, "narrow density moved off its golden");
    assert_eq!(wide, WIDE_DENSITY_GOLDEN, "wide density moved off its golden");
    assert!(narrow > wide, "the 16-bit space is compact, the 32-bit space sparse");
    pass(6, "validity density: narrow > wide, goldens stable");
}

// --- criterion 7: the system-code scenarios --------------------------------

#[test]
fn criterion_7_system_code_scenarios() {
    // Skipping the privilege switch leaves CONTROL off its golden value.
    let bench = bench::load_benchmark("restore_context").unwrap();
    let image = assemble(bench.source);
    let gold = golden(&image);
    let sweep = generate_catalog(CatalogDescriptor::SkipSweep, &gold, &image).unwrap();
    let escalations = sweep
        .specs
        .iter()
        .filter(|spec| {
            let res = run(&image, initial_state(&image), RunLimits::default(), *spec, None);
            res.state.status == Status::Halted
                && res.state.special(SpecialRegister::Control) != bench.golden_value
        })
        .count();
    assert!(escalations >= 1, "an instruction skip can dodge the msr");

    // Task-creation argument window: detection coverage orders the fault
    // counts as full >= ldr-only protection, both beating no protection.
    let bench = bench::load_benchmark("task_create_args").unwrap();
    let program = parse(bench.source).unwrap();
    let fault_count = |rewritten: Option<RewritePlan>| -> u64 {
        let (image, note) = match &rewritten {
            None => (assemble(bench.source), "none".to_string()),
            Some(plan) => {
                (assemble_program(&apply(&program, plan).unwrap()), plan.describe())
            }
        };
        let gold = golden(&image);
        let catalog =
            generate_catalog(CatalogDescriptor::Exhaustive1(EventKinds::Both), &gold, &image)
                .unwrap();
        run_campaign(
            &image,
            &gold,
            &catalog,
            bench.target,
            image.error_handler,
            RunLimits::default(),
            &note,
        )
        .unwrap()
        .count(Classification::FaultTargetReg)
    };

    let unprotected = fault_count(None);
    let ldr_only = fault_count(Some(
        RewritePlan::fault_detection().with_scope(Scope::only(&["ldr"])).wide(),
    ));
    let full = fault_count(Some(RewritePlan::fault_detection().wide()));
    assert!(
        full <= ldr_only,
        "full coverage does not lose to ldr-only ({full} vs {ldr_only})"
    );
    assert!(
        ldr_only < unprotected,
        "ldr-only coverage beats no countermeasure ({ldr_only} vs {unprotected})"
    );
    pass(7, "system-code scenarios: privilege skip and priority protection ordering");
}

// --- criterion 8: determinism and restart isolation ------------------------

#[test]
fn criterion_8_determinism_and_restart_isolation() {
    let bench = bench::load_benchmark("task_create_args").unwrap();
    let image = assemble(bench.source);
    let gold = golden(&image);

    let descriptor =
        CatalogDescriptor::Sampled { flips: 3, count: 500, seed: 1234, kinds: EventKinds::Both };
    let run_once = || {
        let catalog = generate_catalog(descriptor, &gold, &image).unwrap();
        let report = run_campaign(
            &image,
            &gold,
            &catalog,
            bench.target,
            image.error_handler,
            RunLimits::default(),
            "none",
        )
        .unwrap();
        (write_report(&report), write_summary(&report))
    };
    let (report_a, summary_a) = run_once();
    let (report_b, summary_b) = run_once();
    assert_eq!(report_a, report_b, "same seed, byte-identical report");
    assert_eq!(summary_a, summary_b, "same seed, byte-identical summary");

    // Permuting catalog order leaves the aggregates unchanged.
    let catalog = generate_catalog(descriptor, &gold, &image).unwrap();
    let mut permuted = catalog.clone();
    permuted.specs.rotate_left(137);
    permuted.specs.reverse();
    let args = (bench.target, image.error_handler, RunLimits::default());
    let a = run_campaign(&image, &gold, &catalog, args.0, args.1, args.2, "none").unwrap();
    let b = run_campaign(&image, &gold, &permuted, args.0, args.1, args.2, "none").unwrap();
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.hw_histogram, b.hw_histogram);
    assert_eq!(a.any_register_faults, b.any_register_faults);

    // Golden visible state is independent of everything swept above.
    let gold2 = golden(&image);
    assert_eq!(visible_state(&gold.state, &[]), visible_state(&gold2.state, &[]));
    pass(8, "seeded determinism and order-insensitive aggregation");
}
