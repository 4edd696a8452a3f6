//! glitchsim: assemble a Thumb-2 subset, apply assembly-level fault
//! countermeasures, and sweep simulated fault-injection campaigns.

use std::fs;
use std::io::Read;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use glitchsim_core::asm::{dump, layout, parse, ProgramImage};
use glitchsim_core::bench;
use glitchsim_core::campaign::{
    compare_reports, read_summary, run_campaign, write_report, write_summary, TargetObservable,
};
use glitchsim_core::fault::{generate_catalog, CatalogDescriptor};
use glitchsim_core::isa::{Register, SpecialRegister, Status, Width};
use glitchsim_core::rewrite::{apply, RewritePlan, Scheme, Scope};
use glitchsim_core::sim::{golden_run, trace_dump, RunLimits};

#[derive(Parser)]
#[command(name = "glitchsim", version, about = "Thumb-2 subset fault-injection toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a source file into a program-image dump.
    Assemble {
        /// Input assembly ('-' for stdin).
        #[arg(default_value = "-")]
        input: String,
        /// Output path (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Image base address.
        #[arg(long, default_value_t = 0, value_parser = parse_u32)]
        base: u32,
    },
    /// Apply a countermeasure scheme to a source file.
    Rewrite {
        /// Input assembly ('-' for stdin).
        #[arg(default_value = "-")]
        input: String,
        /// Countermeasure scheme: ft (tolerance) or fd (detection).
        #[arg(long)]
        scheme: String,
        /// Force the 32-bit encoding on every rewritten instruction.
        #[arg(long)]
        force_wide: bool,
        /// Comma-separated mnemonics to rewrite (default: all supported).
        #[arg(long)]
        only: Option<String>,
        /// Scratch register (e.g. r1); default r1 for ft, automatic for fd.
        #[arg(long)]
        scratch: Option<String>,
        /// Output path ('-' for stdout).
        #[arg(short, long, default_value = "-")]
        output: String,
    },
    /// Run an assembled image and print the final state.
    Run {
        /// Input image dump ('-' for stdin).
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, default_value_t = 10_000)]
        max_steps: u64,
        /// Also print the fetch/load event trace.
        #[arg(long)]
        trace: bool,
    },
    /// Sweep a fault catalog over an image and write report + summary.
    Campaign {
        /// Input image dump ('-' for stdin).
        #[arg(default_value = "-")]
        input: String,
        /// Catalog: exhaustive1 | exhaustive2 | sampled:K:N:SEED | skips.
        #[arg(long)]
        catalog: String,
        /// Observed target: rX, control/psp/basepri, or sp:OFFSET.
        #[arg(long)]
        target: String,
        /// Error-handler label for detection classification.
        #[arg(long)]
        error_label: Option<String>,
        /// Report file (CSV rows, one per fault spec).
        #[arg(short, long)]
        output: PathBuf,
        /// Summary file (aggregate counts and provenance).
        #[arg(long)]
        summary: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_steps: u64,
        /// Provenance note recording how the program was rewritten.
        #[arg(long, default_value = "-")]
        rewrite_note: String,
    },
    /// Compare two campaign summaries (absolute counts, not percentages).
    Compare { a: PathBuf, b: PathBuf },
    /// Measure the coarse encoding-validity density.
    Density {
        /// Encoding width: 16 or 32.
        #[arg(long)]
        width: u8,
        /// Sample budget (32-bit width only).
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// RNG seed; required for the sampled 32-bit measurement.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Emit a bundled benchmark fixture.
    Bench(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Fixture name, or `list` to enumerate.
    name: String,
    /// Print the fixture's golden-expectation manifest instead.
    #[arg(long)]
    manifest: bool,
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let body = s.strip_prefix("0x").unwrap_or(s);
    let radix = if body.len() < s.len() { 16 } else { 10 };
    u32::from_str_radix(body, radix).map_err(|e| e.to_string())
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf).context("reading stdin")?;
        Ok(buf)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
    }
}

fn load_image(path: &str) -> Result<ProgramImage> {
    let text = read_input(path)?;
    Ok(dump::read(&text)?)
}

fn main() {
    // Behave like a Unix filter when the downstream end of a pipe closes.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    if let Err(err) = dispatch() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Assemble { input, output, base } => {
            let program = parse(&read_input(&input)?)?;
            let image = layout(&program, base)?;
            write_output(output.as_ref(), &dump::write(&image))
        }
        Command::Rewrite { input, scheme, force_wide, only, scratch, output } => {
            let program = parse(&read_input(&input)?)?;
            let scheme = match scheme.as_str() {
                "ft" => Scheme::FaultTolerance,
                "fd" => Scheme::FaultDetection,
                other => bail!("unknown scheme `{other}` (expected ft or fd)"),
            };
            let mut plan = match scheme {
                Scheme::FaultTolerance => RewritePlan::fault_tolerance(),
                Scheme::FaultDetection => RewritePlan::fault_detection(),
            };
            if force_wide {
                plan = plan.wide();
            }
            if let Some(list) = only {
                let names: Vec<&str> = list.split(',').map(str::trim).collect();
                plan = plan.with_scope(Scope::only(&names));
            }
            if let Some(name) = scratch {
                let reg = Register::parse(&name)
                    .ok_or_else(|| anyhow!("bad scratch register `{name}`"))?;
                plan = plan.with_scratch(reg);
            }
            let rewritten = apply(&program, &plan)?;
            let text = glitchsim_core::asm::parse::emit(&rewritten);
            if output == "-" {
                print!("{text}");
                Ok(())
            } else {
                write_output(Some(&PathBuf::from(output)), &text)
            }
        }
        Command::Run { input, max_steps, trace } => {
            let image = load_image(&input)?;
            let result = golden_run(&image, RunLimits { max_steps });
            if trace {
                print!("{}", trace_dump(&result));
            }
            print_state(&result);
            Ok(())
        }
        Command::Campaign {
            input,
            catalog,
            target,
            error_label,
            output,
            summary,
            max_steps,
            rewrite_note,
        } => {
            let image = load_image(&input)?;
            let target = TargetObservable::parse(&target)
                .ok_or_else(|| anyhow!("bad target `{target}`"))?;
            let error_addr = match error_label {
                Some(name) => Some(
                    image
                        .symbol(&name)
                        .ok_or_else(|| anyhow!("error label `{name}` not in image"))?,
                ),
                None => image.error_handler,
            };
            let limits = RunLimits { max_steps };
            let golden = golden_run(&image, limits);
            if golden.state.status != Status::Halted {
                bail!("golden run not Halted (status {:?})", golden.state.status);
            }
            let descriptor = CatalogDescriptor::parse(&catalog)?;
            let catalog = generate_catalog(descriptor, &golden, &image)?;
            let report =
                run_campaign(&image, &golden, &catalog, target, error_addr, limits, &rewrite_note)?;
            fs::write(&output, write_report(&report))
                .with_context(|| format!("writing {}", output.display()))?;
            fs::write(&summary, write_summary(&report))
                .with_context(|| format!("writing {}", summary.display()))?;
            println!(
                "campaign: {} specs, {} target faults, {} detected, {} crashes",
                report.total(),
                report.count(glitchsim_core::campaign::Classification::FaultTargetReg),
                report.count(glitchsim_core::campaign::Classification::Detected),
                report.crash_count()
            );
            Ok(())
        }
        Command::Compare { a, b } => {
            let ra = read_summary(&fs::read_to_string(&a)?)?;
            let rb = read_summary(&fs::read_to_string(&b)?)?;
            print!("{}", compare_reports(&ra, &rb)?);
            Ok(())
        }
        Command::Density { width, samples, seed } => {
            let (width, seed) = match width {
                16 => (Width::Narrow16, 0),
                32 => (
                    Width::Wide32,
                    seed.ok_or_else(|| {
                        anyhow!("--seed is required for the sampled 32-bit measurement")
                    })?,
                ),
                other => bail!("--width must be 16 or 32, got {other}"),
            };
            let density = glitchsim_core::asm::validity_density(width, samples, seed);
            println!("{density}");
            Ok(())
        }
        Command::Bench(args) => {
            if args.name == "list" {
                for name in bench::NAMES {
                    println!("{name}");
                }
                return Ok(());
            }
            let b = bench::load_benchmark(&args.name)?;
            if args.manifest {
                print!(
                    "[{}]\ntarget = {}\ngolden = {:#010x}\nerror_handler = {}\nnotes = {}\n",
                    b.name, b.target, b.golden_value, b.has_error_handler, b.notes
                );
            } else {
                print!("{}", b.source);
            }
            Ok(())
        }
    }
}

fn print_state(result: &glitchsim_core::sim::RunResult) {
    let state = &result.state;
    let status = match state.status {
        Status::Halted => "halted".to_string(),
        Status::Running => "running".to_string(),
        Status::Timeout => "timeout".to_string(),
        Status::Exception { kind, faulting_address } => {
            format!("exception:{}@{faulting_address:#010x}", kind.as_str())
        }
    };
    println!("status = {status}");
    println!("steps = {}", result.steps);
    for i in 0..13 {
        println!("r{i} = {:#010X}", state.regs[i]);
    }
    println!("sp = {:#010X}", state.regs[13]);
    println!("lr = {:#010X}", state.regs[14]);
    println!("pc = {:#010X}", state.regs[15]);
    for spec in SpecialRegister::ALL {
        println!("{spec} = {:#010X}", state.special(spec));
    }
    let f = state.flags;
    println!("flags = n={} z={} c={} v={}", f.n as u8, f.z as u8, f.c as u8, f.v as u8);
}
