//! End-to-end properties of the two countermeasure schemes, checked by
//! exhaustive desk-scale sweeps over the bundled benchmark programs.

mod common;

use common::{assemble, assemble_program, golden, reg, visible_state};
use glitchsim_core::asm::parse::{emit, parse};
use glitchsim_core::bench;
use glitchsim_core::fault::{generate_catalog, CatalogDescriptor, FaultSpec, SkipGranularity};
use glitchsim_core::isa::Register;
use glitchsim_core::rewrite::{apply, apply_fault_tolerance, RewriteError, RewritePlan, Scope};
use glitchsim_core::sim::{initial_state, run, RunLimits};

/// Benchmarks every instruction of which has a fault-tolerance rule.
const FT_SUITE: [&str; 4] = ["load_cafecafe", "bl_call", "ldr_detect", "restore_context"];

fn one_instruction_skips(
    catalog: &glitchsim_core::fault::FaultCatalog,
) -> impl Iterator<Item = &FaultSpec> {
    catalog.specs.iter().filter(|s| {
        matches!(s, FaultSpec::Skip { granularity: SkipGranularity::OneInstruction { .. }, .. })
    })
}

/// The formally claimed property of the tolerance scheme: under any single
/// instruction skip, the widened rewrite finishes in the golden state.
#[test]
fn ft_single_skip_tolerance_across_the_suite() {
    for name in FT_SUITE {
        let bench = bench::load_benchmark(name).unwrap();
        let program = parse(bench.source).unwrap();
        let rewritten =
            apply_fault_tolerance(&program, &RewritePlan::fault_tolerance().wide()).unwrap();
        let image = assemble_program(&rewritten);
        let gold = golden(&image);
        let reference = visible_state(&gold.state, &[]);

        let catalog = generate_catalog(CatalogDescriptor::SkipSweep, &gold, &image).unwrap();
        let mut swept = 0;
        for spec in one_instruction_skips(&catalog) {
            let res = run(&image, initial_state(&image), RunLimits::default(), spec, None);
            assert_eq!(
                visible_state(&res.state, &[]),
                reference,
                "{name}: {spec:?} escaped the tolerance scheme"
            );
            swept += 1;
        }
        assert!(swept >= 4, "{name}: sweep too small ({swept})");
    }
}

/// Fault tolerance has no rule for a load that overwrites its own base
/// register, so that benchmark is rejected, not silently passed.
#[test]
fn ft_rejects_task_create_args() {
    let bench = bench::load_benchmark("task_create_args").unwrap();
    let program = parse(bench.source).unwrap();
    let err = apply_fault_tolerance(&program, &RewritePlan::fault_tolerance()).unwrap_err();
    assert!(matches!(err, RewriteError::NoRule { .. }), "got {err:?}");
}

/// Fault-free equivalence: the rewritten program reaches the original's
/// architecturally visible outputs (scratch register, lr and flags aside).
#[test]
fn fault_free_equivalence_of_both_schemes() {
    let scratch = reg(1);
    for name in FT_SUITE {
        let bench = bench::load_benchmark(name).unwrap();
        let program = parse(bench.source).unwrap();
        let original = golden(&assemble(bench.source));

        for wide in [false, true] {
            let mut plan = RewritePlan::fault_tolerance();
            if wide {
                plan = plan.wide();
            }
            let image = assemble_program(&apply_fault_tolerance(&program, &plan).unwrap());
            let rewritten = golden(&image);
            let exclude = [scratch, glitchsim_core::isa::LR];
            assert_eq!(
                visible_state(&rewritten.state, &exclude),
                visible_state(&original.state, &exclude),
                "{name} ft wide={wide}"
            );
            assert_eq!(bench.target.read(&rewritten.state), bench.golden_value, "{name}");
        }
    }

    for name in ["ldr_detect", "task_create_args"] {
        let bench = bench::load_benchmark(name).unwrap();
        let program = parse(bench.source).unwrap();
        let original_image = assemble(bench.source);
        let original = golden(&original_image);
        for wide in [false, true] {
            let mut plan = RewritePlan::fault_detection();
            if wide {
                plan = plan.wide();
            }
            let rewritten_program = apply(&program, &plan).unwrap();
            let image = assemble_program(&rewritten_program);
            let rewritten = golden(&image);
            // AutoHigh picks r12 for these programs. r0 in the task-create
            // fixture ends holding a code address, which the inserted
            // sequences legitimately move: compare it symbolically.
            let mut exclude = vec![reg(12), glitchsim_core::isa::LR];
            if name == "task_create_args" {
                exclude.push(reg(0));
                assert_eq!(original.state.reg(reg(0)), original_image.symbol("task_entry").unwrap());
                assert_eq!(rewritten.state.reg(reg(0)), image.symbol("task_entry").unwrap());
            }
            assert_eq!(
                visible_state(&rewritten.state, &exclude),
                visible_state(&original.state, &exclude),
                "{name} fd wide={wide}"
            );
            assert_eq!(bench.target.read(&rewritten.state), bench.golden_value, "{name}");
        }
    }
}

/// Applying `.w` to every instruction of the replacement sequence yields a
/// layout where no two instructions share a fetch word.
#[test]
fn width_forcing_isolates_fetch_words() {
    let listing = "\
main:
    adr.w r1, return_label
    adr.w r1, return_label
    add.w lr, r1, #1
    add.w lr, r1, #1
    b.w function
    b.w function
return_label:
    halt
function:
    movs r0, #42
    bx lr
";
    let image = assemble(listing);
    let widened: Vec<u32> = image
        .instrs
        .iter()
        .filter(|(_, i)| i.size() == 4)
        .map(|(addr, _)| *addr)
        .collect();
    assert_eq!(widened.len(), 6, "the six rewritten instructions are wide");
    for addr in widened {
        assert_eq!(addr % 4, 0, "wide instruction at {addr:#x} owns its fetch word");
    }

    // The same holds for the rewriter's own force-wide output, padding
    // nops (inert by construction) aside.
    let program = parse(bench::load_benchmark("bl_call").unwrap().source).unwrap();
    let rewritten =
        apply_fault_tolerance(&program, &RewritePlan::fault_tolerance().wide()).unwrap();
    let image = assemble_program(&rewritten);
    let mut by_word: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
    for (addr, instr) in &image.instrs {
        if instr.op() != &glitchsim_core::isa::Op::Nop {
            by_word.entry(addr & !3).or_default().push(*addr);
        }
    }
    for (word, addrs) in by_word {
        assert_eq!(addrs.len(), 1, "fetch word {word:#x} holds {addrs:?}");
    }
}

/// Detection completeness on the protected load: every load corruption and
/// every skip is either caught by the comparison or harmless.
#[test]
fn fd_detects_every_load_corruption_and_skip() {
    use glitchsim_core::campaign::{run_campaign, Classification, TargetObservable};
    use glitchsim_core::fault::EventKinds;

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
            TargetObservable::Reg(reg(0)),
            image.error_handler,
            RunLimits::default(),
            "fd",
        )
        .unwrap();
        assert_eq!(
            report.count(Classification::FaultTargetReg),
            0,
            "{descriptor:?} silently corrupted the destination"
        );
        assert_eq!(
            report.total(),
            report.count(Classification::Detected) + report.count(Classification::Correct),
            "{descriptor:?} produced classes beyond detected/correct"
        );
    }
}

/// Without the forced 32-bit encoding the two detection loads share one
/// fetch word, so a single whole-word fault beats the comparison; widening
/// removes that pairing entirely.
#[test]
fn fd_narrow_pairing_defeats_detection_and_wide_restores_it() {
    use glitchsim_core::campaign::{run_campaign, Classification, TargetObservable};

    let bench = bench::load_benchmark("ldr_detect").unwrap();
    let program = parse(bench.source).unwrap();

    let fault_count = |wide: bool| -> u64 {
        let mut plan = RewritePlan::fault_detection().with_scratch(reg(1));
        if wide {
            plan = plan.wide();
        }
        let image = assemble_program(&apply(&program, &plan).unwrap());
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
            TargetObservable::Reg(reg(0)),
            image.error_handler,
            RunLimits::default(),
            "fd",
        )
        .unwrap()
        .count(Classification::FaultTargetReg)
    };

    assert!(fault_count(false) >= 1, "paired narrow loads fall to one fetch-word fault");
    assert_eq!(fault_count(true), 0, "widened sequences leave no shared word to hit");
}

/// `--only ldr` style scoping rewrites exactly the load instructions.
#[test]
fn fd_ldr_only_scope_on_task_create_args() {
    let bench = bench::load_benchmark("task_create_args").unwrap();
    let program = parse(bench.source).unwrap();
    let plan = RewritePlan::fault_detection().with_scope(Scope::only(&["ldr"])).wide();
    let rewritten = apply(&program, &plan).unwrap();

    let ldrs_before = program.instructions().filter(|i| i.op().mnemonic() == "ldr").count();
    let ldrs_after = rewritten.instructions().filter(|i| i.op().mnemonic() == "ldr").count();
    let cmps_after = rewritten.instructions().filter(|i| i.op().mnemonic() == "cmp").count();
    assert_eq!(ldrs_before, 3);
    assert_eq!(ldrs_after, 6, "each of the three loads gains a duplicate");
    assert_eq!(cmps_after, 3, "one comparison per protected load");

    // Everything else is untouched.
    let movs_widths: Vec<_> = rewritten
        .instructions()
        .filter(|i| i.op().mnemonic() == "movs")
        .map(|i| i.width())
        .collect();
    assert!(movs_widths.iter().all(|w| *w == glitchsim_core::isa::Width::Narrow16));
}

/// Rewritten output re-parses and re-lays out with zero diagnostics for
/// every benchmark, scheme and width mode that applies to it.
#[test]
fn pipeline_closure_over_the_suite() {
    for name in bench::NAMES {
        let source = bench::load_benchmark(name).unwrap().source;
        let program = parse(source).unwrap();
        for wide in [false, true] {
            let mut plans: Vec<RewritePlan> = Vec::new();
            if name != "task_create_args" {
                plans.push(RewritePlan::fault_tolerance());
            }
            if matches!(name, "ldr_detect" | "task_create_args") {
                plans.push(RewritePlan::fault_detection());
            }
            for mut plan in plans {
                if wide {
                    plan = plan.clone().wide();
                }
                let rewritten = apply(&program, &plan).unwrap();
                let text = emit(&rewritten);
                let reparsed = parse(&text).unwrap_or_else(|e| {
                    panic!("{name} {plan:?}: rewrite output failed to re-parse: {e}")
                });
                assemble_program(&reparsed);
                assert_eq!(reparsed.instructions().count(), rewritten.instructions().count());
            }
        }
    }
}

/// Fresh labels avoid collisions with user labels.
#[test]
fn ft_return_labels_avoid_collisions() {
    let text = "\
main:
    bl f
__ft_ret_0:
    halt
f:
    bx lr
";
    let program = parse(text).unwrap();
    let rewritten = apply_fault_tolerance(&program, &RewritePlan::fault_tolerance()).unwrap();
    let labels: Vec<&str> = rewritten.defined_labels().collect();
    let fresh: Vec<&&str> = labels.iter().filter(|l| l.starts_with("__ft_ret")).collect();
    assert_eq!(fresh.len(), 2, "user label plus one fresh label: {labels:?}");
}

/// The scratch register must be encodable in the chosen sequences even
/// when designated high.
#[test]
fn designated_high_scratch_forces_wide_duplicates() {
    let program = parse("main:\n    ldr r0, =5\n    halt\nerror:\n    halt\n").unwrap();
    let plan = RewritePlan::fault_detection().with_scratch(Register::new(10).unwrap());
    let rewritten = apply(&program, &plan).unwrap();
    let widths: Vec<_> = rewritten
        .instructions()
        .filter(|i| i.op().mnemonic() == "ldr")
        .map(|i| i.width())
        .collect();
    assert_eq!(widths[0], glitchsim_core::isa::Width::Narrow16);
    assert_eq!(widths[1], glitchsim_core::isa::Width::Wide32, "high scratch needs the wide form");
}
