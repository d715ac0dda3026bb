use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use hdrfuzz::campaign::{aggregate_timelines, run_campaign, CampaignConfig};
use hdrfuzz::fuzzer::EngineMode;
use hdrfuzz::targets::builtin_suite;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliMode {
    /// Two workers: coverage fuzzer plus headroom driver.
    Hdr,
    /// Coverage-only fuzzer, no driver (the comparison baseline).
    Baseline,
}

/// Headroom-guided greybox fuzzer for buffer-overrun detection.
#[derive(Parser, Debug)]
#[command(name = "hdrfuzz", version, about)]
struct Args {
    /// Built-in target to fuzz (see --list-targets).
    #[arg(long, required_unless_present_any = ["aggregate", "list_targets"])]
    target: Option<String>,

    /// Raw-byte seed input; defaults to the target's shipped seed.
    #[arg(long)]
    seed_file: Option<PathBuf>,

    /// Directory for report.json, stats, corpus and crash artifacts.
    #[arg(long, default_value = "hdrfuzz-out")]
    out_dir: PathBuf,

    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 60)]
    budget_secs: u64,

    /// Stop after this many fuzzer executions (combines with --budget-secs).
    #[arg(long)]
    exec_budget: Option<u64>,

    /// Percentage of non-retained offspring sampled to the driver.
    #[arg(long, default_value_t = 5)]
    sample_pct: u8,

    /// Bytes of main memory per shadow granule (power of two).
    #[arg(long, default_value_t = 8)]
    granule_bytes: usize,

    /// Redzone width in granules on each side of every buffer.
    #[arg(long, default_value_t = 2)]
    redzone_granules: usize,

    /// Capacity of each inter-worker queue, in batches.
    #[arg(long, default_value_t = 256)]
    queue_cap: usize,

    #[arg(long, default_value_t = 0)]
    rng_seed: u64,

    #[arg(long, value_enum, default_value_t = CliMode::Hdr)]
    mode: CliMode,

    /// Run the driver inline on the fuzzer thread; with --exec-budget this
    /// makes the whole campaign reproducible bit for bit.
    #[arg(long)]
    deterministic: bool,

    /// TOML file overriding mutation-operator weights.
    #[arg(long)]
    op_weights: Option<PathBuf>,

    /// Average vulns_over_time.csv across finished run directories into
    /// --out-dir instead of running a campaign.
    #[arg(long, num_args = 1.., value_name = "RUN_DIR")]
    aggregate: Option<Vec<PathBuf>>,

    /// List built-in targets and exit.
    #[arg(long)]
    list_targets: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();

    if args.list_targets {
        for t in builtin_suite() {
            println!("{:<18} {} declared site(s)", t.name, t.declared_vuln_sites.len());
        }
        return ExitCode::SUCCESS;
    }

    if let Some(dirs) = &args.aggregate {
        return match aggregate_timelines(dirs, &args.out_dir) {
            Ok(path) => {
                println!("aggregate of {} runs -> {}", dirs.len(), path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }

    let cfg = CampaignConfig {
        target: args.target.expect("clap enforces --target"),
        seed_file: args.seed_file,
        out_dir: args.out_dir,
        budget_secs: Some(args.budget_secs),
        exec_budget: args.exec_budget,
        sample_pct: args.sample_pct,
        granule_bytes: args.granule_bytes,
        redzone_granules: args.redzone_granules,
        queue_cap: args.queue_cap,
        rng_seed: args.rng_seed,
        mode: match args.mode {
            CliMode::Hdr => EngineMode::HdrFuzz,
            CliMode::Baseline => EngineMode::Baseline,
        },
        deterministic: args.deterministic,
        op_weights_file: args.op_weights,
    };

    match run_campaign(&cfg) {
        Ok(report) => {
            println!(
                "{} [{}] seed={}: {} vuln site(s) in {}s | {} execs (+{} headroom) | corpus {}+{}+{} | {} drops",
                report.target,
                report.mode,
                report.rng_seed,
                report.distinct_vuln_sites_found.len(),
                report.elapsed_secs,
                report.fuzzer_execs,
                report.headroom_execs,
                report.corpus_seed,
                report.corpus_coverage,
                report.corpus_headroom,
                report.qa_drop_count,
            );
            for (site, ms) in &report.time_to_first_crash_ms {
                println!("  site {site}: first crash at {:.1}s", *ms as f64 / 1000.0);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
