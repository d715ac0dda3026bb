//! Campaign orchestration: spawn the two workers, enforce the budget,
//! triage crashes, and write every report artifact.
//!
//! A campaign produces, under its output directory:
//!   report.json           final counts and per-site first-crash times
//!   stats.csv             one fuzzer row per second
//!   headroom.csv          minimum-headroom improvements over time
//!   vulns_over_time.csv   cumulative distinct sites per second
//!   corpus/               persisted input tree + manifest.json
//!   crashes/              one witness file per confirmed site

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, Origin};
use crate::driver::{driver_loop, DriverState, InlineDriverLink};
use crate::fuzzer::{
    fuzz_loop, CrashCandidate, EngineMode, FuzzOutcome, FuzzSinks, FuzzerConfig, NullLink,
    QueueLink,
};
use crate::harness::{ExecutionMode, Harness, HarnessConfig, RunOutcome, Target};
use crate::mutation::{MutatorConfig, OpWeights};
use crate::shadow::ShadowConfig;
use crate::targets::find_target;

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub target: String,
    /// Raw seed bytes file; the target's built-in seed when absent.
    pub seed_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub budget_secs: Option<u64>,
    pub exec_budget: Option<u64>,
    pub sample_pct: u8,
    pub granule_bytes: usize,
    pub redzone_granules: usize,
    pub queue_cap: usize,
    pub rng_seed: u64,
    pub mode: EngineMode,
    /// Run the driver inline on the fuzzer thread: single-threaded and
    /// fully reproducible together with an exec budget.
    pub deterministic: bool,
    pub op_weights_file: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            target: String::new(),
            seed_file: None,
            out_dir: PathBuf::from("hdrfuzz-out"),
            budget_secs: Some(60),
            exec_budget: None,
            sample_pct: 5,
            granule_bytes: 8,
            redzone_granules: 2,
            queue_cap: 256,
            rng_seed: 0,
            mode: EngineMode::HdrFuzz,
            deterministic: false,
            op_weights_file: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("unknown target '{0}'")]
    UnknownTarget(String),
    #[error("cannot read seed file {path}: {source}")]
    SeedUnreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("seed input does not run cleanly: {0}")]
    SeedRejected(String),
    #[error("cannot read operator weights {path}: {reason}")]
    BadWeights { path: PathBuf, reason: String },
    #[error("{which} worker panicked; partial report written")]
    WorkerPanicked { which: &'static str },
    #[error("campaign io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus: {0}")]
    Corpus(#[from] corpus::CorpusError),
    #[error("missing vulns_over_time.csv under: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingTimelines(Vec<PathBuf>),
    #[error("malformed timeline {path}: {reason}")]
    BadTimeline { path: PathBuf, reason: String },
    #[error("malformed report {path}: {reason}")]
    BadReport { path: PathBuf, reason: String },
}

/// Final accounting of one campaign. Round-trips through JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub target: String,
    pub mode: String,
    pub rng_seed: u64,
    pub budget_secs: Option<u64>,
    pub exec_budget: Option<u64>,
    pub elapsed_secs: u64,
    /// Distinct faulting store locations, each backed by a stored witness.
    pub distinct_vuln_sites_found: Vec<u32>,
    /// Site -> first confirmed crash, in milliseconds from campaign start.
    pub time_to_first_crash_ms: BTreeMap<u32, u64>,
    pub fuzzer_execs: u64,
    pub headroom_execs: u64,
    pub qa_drop_count: u64,
    pub crash_candidates: u64,
    pub corpus_seed: usize,
    pub corpus_coverage: usize,
    pub corpus_headroom: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

fn mode_name(mode: EngineMode) -> &'static str {
    match mode {
        EngineMode::HdrFuzz => "hdr",
        EngineMode::Baseline => "baseline",
    }
}

fn harness_config(cfg: &CampaignConfig) -> HarnessConfig {
    HarnessConfig {
        shadow: ShadowConfig {
            granule_bytes: cfg.granule_bytes,
            redzone_granules: cfg.redzone_granules,
            ..ShadowConfig::default()
        },
        ..HarnessConfig::default()
    }
}

fn load_seed(cfg: &CampaignConfig, target: &Target) -> Result<Vec<u8>, CampaignError> {
    match &cfg.seed_file {
        Some(path) => fs::read(path).map_err(|source| CampaignError::SeedUnreadable {
            path: path.clone(),
            source,
        }),
        None => Ok(target.seed.to_vec()),
    }
}

fn fuzzer_config(cfg: &CampaignConfig) -> Result<FuzzerConfig, CampaignError> {
    let mut mutator = MutatorConfig::default();
    if let Some(path) = &cfg.op_weights_file {
        let text = fs::read_to_string(path).map_err(|e| CampaignError::BadWeights {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        mutator.weights = OpWeights::from_toml(&text).map_err(|e| CampaignError::BadWeights {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    }
    Ok(FuzzerConfig {
        mode: cfg.mode,
        sample_pct: cfg.sample_pct,
        rng_seed: cfg.rng_seed,
        exec_budget: cfg.exec_budget,
        budget_secs: cfg.budget_secs,
        drain_all: false,
        mutator,
    })
}

struct WorkerHarvest {
    fuzz: FuzzOutcome,
    driver_execs: u64,
    driver_crashes: Vec<CrashCandidate>,
}

/// Runs the configured campaign to its budget, triages, writes all artifacts
/// under `out_dir`, and returns the report.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    if !cfg.granule_bytes.is_power_of_two() {
        return Err(CampaignError::BadConfig(format!(
            "granule size must be a power of two, got {}",
            cfg.granule_bytes
        )));
    }
    if cfg.redzone_granules == 0 {
        return Err(CampaignError::BadConfig("redzone must be at least one granule".into()));
    }
    if cfg.queue_cap == 0 {
        return Err(CampaignError::BadConfig("queue capacity must be nonzero".into()));
    }
    if cfg.sample_pct > 100 {
        return Err(CampaignError::BadConfig(format!(
            "sample percentage {} exceeds 100",
            cfg.sample_pct
        )));
    }
    let target = find_target(&cfg.target)
        .ok_or_else(|| CampaignError::UnknownTarget(cfg.target.clone()))?;
    let seed = load_seed(cfg, target)?;
    let fcfg = fuzzer_config(cfg)?;
    let hcfg = harness_config(cfg);

    fs::create_dir_all(&cfg.out_dir)?;
    let corpus_dir = cfg.out_dir.join("corpus");
    let crashes_dir = cfg.out_dir.join("crashes");
    fs::create_dir_all(&crashes_dir)?;

    let stats_file = BufWriter::new(fs::File::create(cfg.out_dir.join("stats.csv"))?);
    let mut sinks = FuzzSinks {
        stats: Some(Box::new(stats_file)),
    };
    let headroom_file: Box<dyn Write + Send> =
        Box::new(BufWriter::new(fs::File::create(cfg.out_dir.join("headroom.csv"))?));

    let epoch = Instant::now();
    let harvest = match (cfg.mode, cfg.deterministic) {
        (EngineMode::Baseline, _) => {
            // Baseline never instantiates queues or a driver.
            DriverState::new(epoch, Some(headroom_file)); // writes the csv header only
            let mut link = NullLink::default();
            let fuzz = fuzz_loop(&fcfg, target, &seed, &hcfg, &mut link, epoch, &mut sinks)
                .map_err(|e| CampaignError::SeedRejected(e.to_string()))?;
            debug_assert_eq!(link.sends + link.recvs, 0);
            WorkerHarvest {
                fuzz,
                driver_execs: 0,
                driver_crashes: Vec::new(),
            }
        }
        (EngineMode::HdrFuzz, true) => {
            let state = DriverState::new(epoch, Some(headroom_file));
            let mut link = InlineDriverLink::new(*target, hcfg, state);
            let fuzz = fuzz_loop(&fcfg, target, &seed, &hcfg, &mut link, epoch, &mut sinks)
                .map_err(|e| CampaignError::SeedRejected(e.to_string()))?;
            let state = link.into_state();
            WorkerHarvest {
                fuzz,
                driver_execs: state.execs,
                driver_crashes: state.crashes,
            }
        }
        (EngineMode::HdrFuzz, false) => {
            run_two_workers(cfg, target, &seed, &fcfg, &hcfg, epoch, &mut sinks, headroom_file)?
        }
    };

    let report = triage_and_write(cfg, target, &hcfg, epoch, harvest, &corpus_dir, &crashes_dir)?;
    Ok(report)
}

/// Threaded arrangement: fuzzer and driver each on their own thread, joined
/// by the campaign after budget expiry.
#[allow(clippy::too_many_arguments)]
fn run_two_workers(
    cfg: &CampaignConfig,
    target: &'static Target,
    seed: &[u8],
    fcfg: &FuzzerConfig,
    hcfg: &HarnessConfig,
    epoch: Instant,
    sinks: &mut FuzzSinks,
    headroom_file: Box<dyn Write + Send>,
) -> Result<WorkerHarvest, CampaignError> {
    let (candidate_tx, candidate_rx) = sync_channel(cfg.queue_cap);
    let (retain_tx, retain_rx) = sync_channel(cfg.queue_cap);
    let stop = Arc::new(AtomicBool::new(false));

    let driver_stop = Arc::clone(&stop);
    let driver_hcfg = *hcfg;
    let driver_target = *target;
    let driver_state = DriverState::new(epoch, Some(headroom_file));
    let driver = std::thread::Builder::new()
        .name("hdrfuzz-driver".into())
        .spawn(move || {
            driver_loop(
                driver_target,
                driver_hcfg,
                candidate_rx,
                retain_tx,
                &driver_stop,
                driver_state,
            )
        })
        .expect("spawn driver thread");

    let mut link = QueueLink {
        to_driver: candidate_tx,
        from_driver: retain_rx,
    };
    let fuzz_fcfg = fcfg.clone();
    let fuzz_hcfg = *hcfg;
    let fuzz_target = *target;
    let fuzz_seed = seed.to_vec();
    let mut fuzz_sinks = std::mem::take(sinks);
    let fuzzer = std::thread::Builder::new()
        .name("hdrfuzz-fuzzer".into())
        .spawn(move || {
            fuzz_loop(
                &fuzz_fcfg,
                &fuzz_target,
                &fuzz_seed,
                &fuzz_hcfg,
                &mut link,
                epoch,
                &mut fuzz_sinks,
            )
            // Dropping the link here disconnects the candidate queue,
            // which is the driver's normal shutdown signal.
        })
        .expect("spawn fuzzer thread");

    let fuzz_result = fuzzer.join();
    stop.store(true, Ordering::Relaxed);
    let driver_result = driver.join();

    let fuzz = match fuzz_result {
        Ok(Ok(out)) => out,
        Ok(Err(e)) => return Err(CampaignError::SeedRejected(e.to_string())),
        Err(_) => {
            write_aborted_report(cfg, "fuzzer")?;
            return Err(CampaignError::WorkerPanicked { which: "fuzzer" });
        }
    };
    let driver_state = match driver_result {
        Ok(state) => state,
        Err(_) => {
            write_aborted_report(cfg, "driver")?;
            return Err(CampaignError::WorkerPanicked { which: "driver" });
        }
    };
    Ok(WorkerHarvest {
        fuzz,
        driver_execs: driver_state.execs,
        driver_crashes: driver_state.crashes,
    })
}

fn write_aborted_report(cfg: &CampaignConfig, which: &str) -> Result<(), CampaignError> {
    let report = CampaignReport {
        target: cfg.target.clone(),
        mode: mode_name(cfg.mode).to_string(),
        rng_seed: cfg.rng_seed,
        budget_secs: cfg.budget_secs,
        exec_budget: cfg.exec_budget,
        elapsed_secs: 0,
        distinct_vuln_sites_found: Vec::new(),
        time_to_first_crash_ms: BTreeMap::new(),
        fuzzer_execs: 0,
        headroom_execs: 0,
        qa_drop_count: 0,
        crash_candidates: 0,
        corpus_seed: 0,
        corpus_coverage: 0,
        corpus_headroom: 0,
        aborted: Some(format!("{which} worker panicked")),
    };
    write_report(&cfg.out_dir, &report)
}

fn write_report(dir: &Path, report: &CampaignReport) -> Result<(), CampaignError> {
    let mut f = fs::File::create(dir.join("report.json"))?;
    f.write_all(serde_json::to_string_pretty(report).expect("report serializes").as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn witness_name(site: u32, input: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(input);
    let digest = h.finalize();
    format!("{site}_{}.bin", hex::encode(&digest[..4]))
}

/// Replays every crash candidate and every corpus input in plain-detect
/// mode; each distinct faulting site becomes a reported vulnerability with
/// its earliest confirming input stored as the witness.
#[allow(clippy::too_many_arguments)]
fn triage_and_write(
    cfg: &CampaignConfig,
    target: &Target,
    hcfg: &HarnessConfig,
    epoch: Instant,
    harvest: WorkerHarvest,
    corpus_dir: &Path,
    crashes_dir: &Path,
) -> Result<CampaignReport, CampaignError> {
    let elapsed_ms = epoch.elapsed().as_millis() as u64;
    let mut harness = Harness::new(*hcfg);

    let mut candidates: Vec<CrashCandidate> = harvest.fuzz.crashes;
    candidates.extend(harvest.driver_crashes);
    candidates.sort_by_key(|c| c.at_ms);
    let candidate_count = candidates.len() as u64;

    // site -> (first confirmed ms, witness bytes)
    let mut sites: BTreeMap<u32, (u64, Vec<u8>)> = BTreeMap::new();
    for cand in &candidates {
        if let RunOutcome::Overrun(rep) =
            harness.run(target, &cand.input, ExecutionMode::PlainDetect).outcome
        {
            sites
                .entry(rep.store_idx.0)
                .or_insert_with(|| (cand.at_ms, cand.input.clone()));
        }
    }
    // Corpus replay: eager harvesting should already cover every site a
    // corpus input can reach, but the replay is the ground truth.
    for node in harvest.fuzz.tree.nodes() {
        if let RunOutcome::Overrun(rep) =
            harness.run(target, &node.data, ExecutionMode::PlainDetect).outcome
        {
            sites
                .entry(rep.store_idx.0)
                .or_insert_with(|| (elapsed_ms, node.data.clone()));
        }
    }

    for (site, (_, witness)) in &sites {
        fs::write(crashes_dir.join(witness_name(*site, witness)), witness)?;
    }
    corpus::persist(&harvest.fuzz.tree, corpus_dir)?;

    let report = CampaignReport {
        target: cfg.target.clone(),
        mode: mode_name(cfg.mode).to_string(),
        rng_seed: cfg.rng_seed,
        budget_secs: cfg.budget_secs,
        exec_budget: cfg.exec_budget,
        elapsed_secs: elapsed_ms / 1000,
        distinct_vuln_sites_found: sites.keys().copied().collect(),
        time_to_first_crash_ms: sites.iter().map(|(&s, &(ms, _))| (s, ms)).collect(),
        fuzzer_execs: harvest.fuzz.stats.execs,
        headroom_execs: harvest.driver_execs,
        qa_drop_count: harvest.fuzz.stats.qa_drops,
        crash_candidates: candidate_count,
        corpus_seed: harvest.fuzz.tree.count_by_origin(Origin::Seed),
        corpus_coverage: harvest.fuzz.tree.count_by_origin(Origin::CoverageRetained),
        corpus_headroom: harvest.fuzz.tree.count_by_origin(Origin::HeadroomRetained),
        aborted: None,
    };
    write_report(&cfg.out_dir, &report)?;
    emit_timeline(&cfg.out_dir)?;
    Ok(report)
}

/// Regenerates `vulns_over_time.csv` from a run directory's report:
/// one row per second, cumulative distinct sites found by then.
pub fn emit_timeline(run_dir: &Path) -> Result<PathBuf, CampaignError> {
    let report_path = run_dir.join("report.json");
    let text = fs::read_to_string(&report_path).map_err(|e| CampaignError::BadReport {
        path: report_path.clone(),
        reason: e.to_string(),
    })?;
    let report: CampaignReport =
        serde_json::from_str(&text).map_err(|e| CampaignError::BadReport {
            path: report_path,
            reason: e.to_string(),
        })?;
    let end_secs = report
        .budget_secs
        .unwrap_or(report.elapsed_secs)
        .max(report.elapsed_secs)
        .max(report.time_to_first_crash_ms.values().map(|ms| ms / 1000).max().unwrap_or(0));
    let mut firsts: Vec<u64> = report
        .time_to_first_crash_ms
        .values()
        .map(|ms| ms / 1000)
        .collect();
    firsts.sort_unstable();
    let path = run_dir.join("vulns_over_time.csv");
    let mut out = BufWriter::new(fs::File::create(&path)?);
    out.write_all(b"secs,cumulative_sites\n")?;
    for t in 0..=end_secs {
        let found = firsts.iter().take_while(|&&f| f <= t).count();
        writeln!(out, "{t},{found}")?;
    }
    out.flush()?;
    Ok(path)
}

/// Averages the timelines of several run directories into
/// `<out_dir>/vulns_over_time.csv`. Runs shorter than the longest hold their
/// final value. Missing inputs are reported all at once.
pub fn aggregate_timelines(run_dirs: &[PathBuf], out_dir: &Path) -> Result<PathBuf, CampaignError> {
    let missing: Vec<PathBuf> = run_dirs
        .iter()
        .filter(|d| !d.join("vulns_over_time.csv").is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(CampaignError::MissingTimelines(missing));
    }
    let mut curves: Vec<Vec<u64>> = Vec::new();
    for dir in run_dirs {
        let path = dir.join("vulns_over_time.csv");
        let text = fs::read_to_string(&path)?;
        let mut curve = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            let (secs, count) = line
                .split_once(',')
                .ok_or_else(|| CampaignError::BadTimeline {
                    path: path.clone(),
                    reason: format!("line {} lacks a comma", lineno + 1),
                })?;
            let _secs: u64 = secs.parse().map_err(|_| CampaignError::BadTimeline {
                path: path.clone(),
                reason: format!("bad seconds on line {}", lineno + 1),
            })?;
            let count: u64 = count.parse().map_err(|_| CampaignError::BadTimeline {
                path: path.clone(),
                reason: format!("bad count on line {}", lineno + 1),
            })?;
            curve.push(count);
        }
        if curve.is_empty() {
            return Err(CampaignError::BadTimeline {
                path,
                reason: "no data rows".into(),
            });
        }
        curves.push(curve);
    }
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("vulns_over_time.csv");
    let mut out = BufWriter::new(fs::File::create(&path)?);
    out.write_all(b"secs,mean_cumulative_sites\n")?;
    for t in 0..len {
        let sum: f64 = curves
            .iter()
            .map(|c| *c.get(t).unwrap_or_else(|| c.last().expect("nonempty")) as f64)
            .sum();
        writeln!(out, "{t},{}", sum / curves.len() as f64)?;
    }
    out.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg(target: &str, dir: &Path) -> CampaignConfig {
        CampaignConfig {
            target: target.into(),
            out_dir: dir.to_path_buf(),
            budget_secs: None,
            exec_budget: Some(8000),
            rng_seed: 1,
            ..Default::default()
        }
    }

    #[test]
    fn invalid_config_is_rejected_before_work_starts() {
        for cfg in [
            CampaignConfig {
                target: "lenfield_copy".into(),
                granule_bytes: 3,
                ..Default::default()
            },
            CampaignConfig {
                target: "lenfield_copy".into(),
                redzone_granules: 0,
                ..Default::default()
            },
            CampaignConfig {
                target: "lenfield_copy".into(),
                sample_pct: 101,
                ..Default::default()
            },
        ] {
            assert!(matches!(run_campaign(&cfg), Err(CampaignError::BadConfig(_))));
        }
    }

    #[test]
    fn unknown_target_is_a_usage_error() {
        let cfg = CampaignConfig {
            target: "no_such_target".into(),
            ..Default::default()
        };
        assert!(matches!(
            run_campaign(&cfg),
            Err(CampaignError::UnknownTarget(_))
        ));
    }

    #[test]
    fn unreadable_seed_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CampaignConfig {
            target: "lenfield_copy".into(),
            seed_file: Some(dir.path().join("missing.seed")),
            out_dir: dir.path().join("out"),
            ..Default::default()
        };
        assert!(matches!(
            run_campaign(&cfg),
            Err(CampaignError::SeedUnreadable { .. })
        ));
    }

    #[test]
    fn zero_budget_yields_valid_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CampaignConfig {
            target: "lenfield_copy".into(),
            out_dir: dir.path().to_path_buf(),
            budget_secs: Some(0),
            ..Default::default()
        };
        let report = run_campaign(&cfg).unwrap();
        assert!(report.distinct_vuln_sites_found.is_empty());
        assert_eq!(report.corpus_seed, 1);
        assert!(dir.path().join("report.json").is_file());
        assert!(dir.path().join("vulns_over_time.csv").is_file());
        assert!(dir.path().join("corpus/manifest.json").is_file());
        let stats = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
        assert!(stats.starts_with(
            "secs,execs,corpus_seed,corpus_coverage,corpus_headroom,qa_drops,crashes\n"
        ));
        let headroom = fs::read_to_string(dir.path().join("headroom.csv")).unwrap();
        assert!(headroom.starts_with("secs,site,min_headroom\n"));
    }

    #[test]
    fn report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(&quick_cfg("lenfield_copy", dir.path())).unwrap();
        let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
        let parsed: CampaignReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn witnesses_reproduce_and_corpus_replay_adds_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(&quick_cfg("lenfield_copy", dir.path())).unwrap();
        assert!(
            !report.distinct_vuln_sites_found.is_empty(),
            "8k execs find the one-byte-mutation overrun"
        );
        let target = find_target("lenfield_copy").unwrap();
        let hcfg = HarnessConfig::default();
        let mut seen = Vec::new();
        for entry in fs::read_dir(dir.path().join("crashes")).unwrap() {
            let path = entry.unwrap().path();
            let bytes = fs::read(&path).unwrap();
            match crate::harness::run_target(target, &bytes, ExecutionMode::PlainDetect, &hcfg)
                .outcome
            {
                RunOutcome::Overrun(rep) => seen.push(rep.store_idx.0),
                other => panic!("witness {path:?} does not reproduce: {other:?}"),
            }
        }
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, report.distinct_vuln_sites_found);
    }

    #[test]
    fn baseline_campaign_reports_zero_queue_traffic() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_cfg("lenfield_copy", dir.path());
        cfg.mode = EngineMode::Baseline;
        let report = run_campaign(&cfg).unwrap();
        assert_eq!(report.mode, "baseline");
        assert_eq!(report.qa_drop_count, 0);
        assert_eq!(report.headroom_execs, 0);
        assert_eq!(report.corpus_headroom, 0);
    }

    #[test]
    fn timeline_rows_step_at_first_crash() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path()).unwrap();
        let report = CampaignReport {
            target: "t".into(),
            mode: "hdr".into(),
            rng_seed: 0,
            budget_secs: Some(5),
            exec_budget: None,
            elapsed_secs: 5,
            distinct_vuln_sites_found: vec![7],
            time_to_first_crash_ms: [(7u32, 3200u64)].into_iter().collect(),
            fuzzer_execs: 1,
            headroom_execs: 0,
            qa_drop_count: 0,
            crash_candidates: 1,
            corpus_seed: 1,
            corpus_coverage: 0,
            corpus_headroom: 0,
            aborted: None,
        };
        write_report(dir.path(), &report).unwrap();
        emit_timeline(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("vulns_over_time.csv")).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(
            rows,
            vec![
                "secs,cumulative_sites",
                "0,0",
                "1,0",
                "2,0",
                "3,1",
                "4,1",
                "5,1"
            ]
        );
    }

    #[test]
    fn aggregate_averages_curves() {
        let base = tempfile::tempdir().unwrap();
        let mut dirs = Vec::new();
        for (i, counts) in [[0u64, 1, 1], [0, 2, 2], [0, 3, 3]].iter().enumerate() {
            let d = base.path().join(format!("run{i}"));
            fs::create_dir_all(&d).unwrap();
            let mut text = String::from("secs,cumulative_sites\n");
            for (t, c) in counts.iter().enumerate() {
                text.push_str(&format!("{t},{c}\n"));
            }
            fs::write(d.join("vulns_over_time.csv"), text).unwrap();
            dirs.push(d);
        }
        let out = base.path().join("agg");
        aggregate_timelines(&dirs, &out).unwrap();
        let text = fs::read_to_string(out.join("vulns_over_time.csv")).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "secs,mean_cumulative_sites");
        assert_eq!(rows[2], "1,2");
        assert_eq!(rows[3], "2,2");
    }

    #[test]
    fn aggregate_lists_every_missing_dir() {
        let base = tempfile::tempdir().unwrap();
        let there = base.path().join("there");
        fs::create_dir_all(&there).unwrap();
        fs::write(there.join("vulns_over_time.csv"), "secs,cumulative_sites\n0,0\n").unwrap();
        let gone1 = base.path().join("gone1");
        let gone2 = base.path().join("gone2");
        match aggregate_timelines(&[there, gone1.clone(), gone2.clone()], base.path()) {
            Err(CampaignError::MissingTimelines(missing)) => {
                assert_eq!(missing, vec![gone1, gone2]);
            }
            other => panic!("expected missing-timeline error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_campaigns_produce_identical_manifests() {
        let run = |dir: &Path| -> Vec<u8> {
            let cfg = CampaignConfig {
                target: "tally_writer".into(),
                out_dir: dir.to_path_buf(),
                budget_secs: None,
                exec_budget: Some(6000),
                rng_seed: 77,
                deterministic: true,
                ..Default::default()
            };
            run_campaign(&cfg).unwrap();
            fs::read(dir.join("corpus/manifest.json")).unwrap()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        assert_eq!(run(d1.path()), run(d2.path()), "manifests differ byte-for-byte");
    }
}
