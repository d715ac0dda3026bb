//! The fuzzer worker: drain retained inputs from the driver, select, fuzz,
//! run offspring under coverage, retain the fit ones, and ship a sampled
//! subset back to the driver.
//!
//! The worker never blocks on a queue: the drain is non-blocking and a full
//! outbound queue drops the batch (counted). All queue payloads are owned
//! copies; the only shared state with the driver is the pair of queues.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::mpsc::{Receiver, SyncSender, TryRecvError, TrySendError};
use std::time::{Duration, Instant};

use crate::corpus::{CorpusTree, Origin, TestInput};
use crate::coverage::{is_fit, GlobalCoverage};
use crate::harness::{ExecutionMode, Harness, HarnessConfig, RunOutcome, Target};
use crate::mutation::{generate_offspring, get_fuzz_potential, MutatorConfig, Offspring};
use crate::rng::Rng;
use crate::shadow::CrashReport;

/// Parent input plus sampled offspring, sent fuzzer -> driver.
#[derive(Clone, Debug)]
pub struct CandidateBatch {
    pub parent: TestInput,
    pub samples: Vec<Vec<u8>>,
}

/// Parent input plus headroom-fit offspring, sent driver -> fuzzer.
#[derive(Clone, Debug)]
pub struct RetainBatch {
    pub parent: TestInput,
    pub fit: Vec<Vec<u8>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendOutcome {
    Sent,
    Dropped,
}

/// The fuzzer's only view of the driver. Both operations are non-blocking.
pub trait DriverLink {
    fn try_send(&mut self, batch: CandidateBatch) -> SendOutcome;
    fn try_recv(&mut self) -> Option<RetainBatch>;
}

/// Bounded-queue link used when the driver runs as its own worker.
pub struct QueueLink {
    pub to_driver: SyncSender<CandidateBatch>,
    pub from_driver: Receiver<RetainBatch>,
}

impl DriverLink for QueueLink {
    fn try_send(&mut self, batch: CandidateBatch) -> SendOutcome {
        match self.to_driver.try_send(batch) {
            Ok(()) => SendOutcome::Sent,
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                SendOutcome::Dropped
            }
        }
    }

    fn try_recv(&mut self) -> Option<RetainBatch> {
        match self.from_driver.try_recv() {
            Ok(b) => Some(b),
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => None,
        }
    }
}

/// Link for baseline mode; counts any traffic so tests can prove there is none.
#[derive(Default)]
pub struct NullLink {
    pub sends: u64,
    pub recvs: u64,
}

impl DriverLink for NullLink {
    fn try_send(&mut self, _batch: CandidateBatch) -> SendOutcome {
        self.sends += 1;
        SendOutcome::Dropped
    }

    fn try_recv(&mut self) -> Option<RetainBatch> {
        self.recvs += 1;
        None
    }
}

/// Test stub that echoes every sampled input back as headroom-fit.
#[derive(Default)]
pub struct EchoLink {
    pending: VecDeque<RetainBatch>,
    pub sampled: Vec<Vec<u8>>,
}

impl DriverLink for EchoLink {
    fn try_send(&mut self, batch: CandidateBatch) -> SendOutcome {
        self.sampled.extend(batch.samples.iter().cloned());
        self.pending.push_back(RetainBatch {
            parent: batch.parent,
            fit: batch.samples,
        });
        SendOutcome::Sent
    }

    fn try_recv(&mut self) -> Option<RetainBatch> {
        self.pending.pop_front()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineMode {
    /// Full two-worker operation.
    HdrFuzz,
    /// Coverage-only search; the driver and both queues are never touched.
    Baseline,
}

#[derive(Clone, Debug)]
pub struct FuzzerConfig {
    pub mode: EngineMode,
    /// Percentage of non-retained offspring sampled to the driver.
    pub sample_pct: u8,
    pub rng_seed: u64,
    pub exec_budget: Option<u64>,
    pub budget_secs: Option<u64>,
    /// Drain every queued retain batch per iteration instead of one.
    pub drain_all: bool,
    pub mutator: MutatorConfig,
}

impl Default for FuzzerConfig {
    fn default() -> Self {
        FuzzerConfig {
            mode: EngineMode::HdrFuzz,
            sample_pct: 5,
            rng_seed: 0,
            exec_budget: None,
            budget_secs: Some(60),
            drain_all: false,
            mutator: MutatorConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FuzzStats {
    pub execs: u64,
    pub iterations: u64,
    pub qa_drops: u64,
    pub batches_sent: u64,
    pub batches_received: u64,
    pub engine_errors: u64,
    /// Raw overrun count; crash candidates are deduplicated per site.
    pub overruns: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashSource {
    Fuzzer,
    Driver,
}

/// An input that produced an overrun, pending triage confirmation.
#[derive(Clone, Debug)]
pub struct CrashCandidate {
    pub input: Vec<u8>,
    pub report: CrashReport,
    pub at_ms: u64,
    pub source: CrashSource,
}

#[derive(Debug)]
pub struct FuzzOutcome {
    pub tree: CorpusTree,
    pub stats: FuzzStats,
    pub crashes: Vec<CrashCandidate>,
}

#[derive(Debug, thiserror::Error)]
pub enum FuzzError {
    #[error("seed input did not complete cleanly: {0}")]
    SeedRejected(String),
}

/// All retained offspring plus a uniform random ceil(pct%) of the rest.
pub fn sample_inputs(
    offspring: &[Offspring],
    retained: &[bool],
    pct: u8,
    rng: &mut Rng,
) -> Vec<Vec<u8>> {
    debug_assert_eq!(offspring.len(), retained.len());
    debug_assert!(pct <= 100);
    let mut out: Vec<Vec<u8>> = Vec::new();
    let mut rest: Vec<usize> = Vec::new();
    for (i, off) in offspring.iter().enumerate() {
        if retained[i] {
            out.push(off.data.clone());
        } else {
            rest.push(i);
        }
    }
    let extra = (rest.len() * pct as usize).div_ceil(100);
    for pick in rng.distinct_indices(rest.len(), extra) {
        out.push(offspring[rest[pick]].data.clone());
    }
    out
}

/// Optional live outputs of the fuzz loop.
#[derive(Default)]
pub struct FuzzSinks {
    pub stats: Option<Box<dyn Write + Send>>,
}

const STATS_HEADER: &str = "secs,execs,corpus_seed,corpus_coverage,corpus_headroom,qa_drops,crashes\n";

fn emit_stats_row(
    sink: &mut Option<Box<dyn Write + Send>>,
    epoch: Instant,
    stats: &FuzzStats,
    tree: &CorpusTree,
) {
    if let Some(out) = sink {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            epoch.elapsed().as_secs(),
            stats.execs,
            tree.count_by_origin(Origin::Seed),
            tree.count_by_origin(Origin::CoverageRetained),
            tree.count_by_origin(Origin::HeadroomRetained),
            stats.qa_drops,
            stats.overruns,
        );
    }
}

/// Runs the fuzzer worker to its budget and returns the final tree, crash
/// candidates, and counters.
///
/// Per iteration: drain one retain batch (non-blocking) and graft its fit
/// inputs under their parent; select the next input alternating origin
/// classes; compute its fuzz potential; generate that many offspring; run
/// each under coverage, retaining the coverage-fit and recording overruns as
/// crash candidates; then sample the offspring and try to enqueue the batch
/// for the driver, dropping it if the queue is full. In baseline mode the
/// drain/sample/enqueue steps do not exist.
pub fn fuzz_loop(
    cfg: &FuzzerConfig,
    target: &Target,
    seed: &[u8],
    hcfg: &HarnessConfig,
    link: &mut dyn DriverLink,
    epoch: Instant,
    sinks: &mut FuzzSinks,
) -> Result<FuzzOutcome, FuzzError> {
    let mut harness = Harness::new(*hcfg);
    let seed_run = harness.run(target, seed, ExecutionMode::CoverageOnly);
    let seed_profile = match seed_run.outcome {
        RunOutcome::Completed => seed_run.coverage.expect("coverage mode yields a profile"),
        other => return Err(FuzzError::SeedRejected(format!("{other:?}"))),
    };
    let mut global = GlobalCoverage::new(hcfg.coverage_map_size);
    let fit = is_fit(&seed_profile, &mut global);
    debug_assert!(fit, "seed profile always novel against an empty global");
    let mut tree = CorpusTree::new(seed.to_vec(), Some(seed_profile.breadth()));
    let mut rng = Rng::new(cfg.rng_seed);
    let mut stats = FuzzStats {
        execs: 1,
        ..Default::default()
    };
    let mut crashes: Vec<CrashCandidate> = Vec::new();
    let mut crashed_sites: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();

    if let Some(out) = &mut sinks.stats {
        let _ = out.write_all(STATS_HEADER.as_bytes());
    }
    let budget_start = Instant::now();
    let mut last_stats = Instant::now();
    let out_of_budget = |stats: &FuzzStats, started: &Instant| {
        if let Some(eb) = cfg.exec_budget {
            if stats.execs >= eb {
                return true;
            }
        }
        if let Some(bs) = cfg.budget_secs {
            if started.elapsed() >= Duration::from_secs(bs) {
                return true;
            }
        }
        false
    };

    'outer: loop {
        if out_of_budget(&stats, &budget_start) {
            break;
        }
        stats.iterations += 1;

        if cfg.mode == EngineMode::HdrFuzz {
            while let Some(batch) = link.try_recv() {
                stats.batches_received += 1;
                for data in batch.fit {
                    let _ = tree.add_child(batch.parent.id, data, Origin::HeadroomRetained, None);
                }
                if !cfg.drain_all {
                    break;
                }
            }
        }

        let parent = tree.select_next_h().clone();
        let n = get_fuzz_potential(&tree.fitness_of(parent.id), &tree.stats(), &cfg.mutator);
        let offspring = generate_offspring(&parent.data, n, &mut rng, &cfg.mutator, &tree);

        let mut retained = vec![false; offspring.len()];
        for (i, off) in offspring.iter().enumerate() {
            if out_of_budget(&stats, &budget_start) {
                // Iteration cut short: nothing sampled, nothing enqueued.
                break 'outer;
            }
            let rr = harness.run(target, &off.data, ExecutionMode::CoverageOnly);
            stats.execs += 1;
            match rr.outcome {
                RunOutcome::Completed => {
                    let profile = rr.coverage.expect("coverage mode yields a profile");
                    if is_fit(&profile, &mut global) {
                        retained[i] = true;
                        let _ = tree.add_child(
                            parent.id,
                            off.data.clone(),
                            Origin::CoverageRetained,
                            Some(profile.breadth()),
                        );
                    }
                }
                RunOutcome::Overrun(report) => {
                    stats.overruns += 1;
                    if crashed_sites.insert(report.store_idx.0) {
                        crashes.push(CrashCandidate {
                            input: off.data.clone(),
                            report,
                            at_ms: epoch.elapsed().as_millis() as u64,
                            source: CrashSource::Fuzzer,
                        });
                    }
                }
                RunOutcome::EngineError(_) => stats.engine_errors += 1,
            }
            if last_stats.elapsed() >= Duration::from_secs(1) {
                emit_stats_row(&mut sinks.stats, epoch, &stats, &tree);
                last_stats = Instant::now();
            }
        }

        if cfg.mode == EngineMode::HdrFuzz {
            let samples = sample_inputs(&offspring, &retained, cfg.sample_pct, &mut rng);
            if !samples.is_empty() {
                match link.try_send(CandidateBatch {
                    parent: parent.clone(),
                    samples,
                }) {
                    SendOutcome::Sent => stats.batches_sent += 1,
                    SendOutcome::Dropped => stats.qa_drops += 1,
                }
            }
        }
    }
    emit_stats_row(&mut sinks.stats, epoch, &stats, &tree);
    if let Some(out) = &mut sinks.stats {
        let _ = out.flush();
    }
    Ok(FuzzOutcome {
        tree,
        stats,
        crashes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::MutationOpKind;
    use crate::targets::find_target;

    fn offspring_of(datas: &[&[u8]]) -> Vec<Offspring> {
        datas
            .iter()
            .map(|d| Offspring {
                data: d.to_vec(),
                ops: vec![MutationOpKind::BitFlip],
            })
            .collect()
    }

    #[test]
    fn sample_pct_zero_keeps_only_retained() {
        let offs = offspring_of(&[b"a", b"b", b"c", b"d"]);
        let retained = vec![true, false, true, false];
        let mut rng = Rng::new(1);
        let mut s = sample_inputs(&offs, &retained, 0, &mut rng);
        s.sort();
        assert_eq!(s, vec![b"a".to_vec(), b"c".to_vec()]);
    }

    #[test]
    fn sample_pct_hundred_keeps_everything() {
        let offs = offspring_of(&[b"a", b"b", b"c", b"d"]);
        let retained = vec![false, true, false, false];
        let mut rng = Rng::new(2);
        let s = sample_inputs(&offs, &retained, 100, &mut rng);
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn sample_extra_count_is_ceil_of_pct() {
        // 1000 non-retained at 5% -> exactly ceil(50) = 50 extras, so the
        // mean over trials is 50, inside the [40, 60] acceptance band.
        let datas: Vec<Vec<u8>> = (0..1000u32).map(|i| i.to_le_bytes().to_vec()).collect();
        let offs: Vec<Offspring> = datas
            .iter()
            .map(|d| Offspring {
                data: d.clone(),
                ops: vec![],
            })
            .collect();
        let retained = vec![false; offs.len()];
        let mut rng = Rng::new(3);
        let mut total = 0usize;
        for _ in 0..100 {
            total += sample_inputs(&offs, &retained, 5, &mut rng).len();
        }
        let mean = total as f64 / 100.0;
        assert!((40.0..=60.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn budget_zero_returns_seed_only_tree() {
        let target = find_target("lenfield_copy").unwrap();
        let cfg = FuzzerConfig {
            budget_secs: Some(0),
            ..Default::default()
        };
        let mut link = EchoLink::default();
        let out = fuzz_loop(
            &cfg,
            target,
            target.seed,
            &HarnessConfig::default(),
            &mut link,
            Instant::now(),
            &mut FuzzSinks::default(),
        )
        .unwrap();
        assert_eq!(out.tree.len(), 1);
        assert_eq!(out.tree.root().origin, Origin::Seed);
    }

    #[test]
    fn baseline_never_touches_the_link() {
        let target = find_target("lenfield_copy").unwrap();
        let cfg = FuzzerConfig {
            mode: EngineMode::Baseline,
            exec_budget: Some(3000),
            budget_secs: None,
            ..Default::default()
        };
        let mut link = NullLink::default();
        let out = fuzz_loop(
            &cfg,
            target,
            target.seed,
            &HarnessConfig::default(),
            &mut link,
            Instant::now(),
            &mut FuzzSinks::default(),
        )
        .unwrap();
        assert_eq!(link.sends, 0);
        assert_eq!(link.recvs, 0);
        assert_eq!(out.stats.qa_drops, 0);
        assert!(out.stats.execs >= 3000);
    }

    struct PreloadedLink {
        queued: VecDeque<RetainBatch>,
    }

    impl DriverLink for PreloadedLink {
        fn try_send(&mut self, _batch: CandidateBatch) -> SendOutcome {
            SendOutcome::Sent
        }
        fn try_recv(&mut self) -> Option<RetainBatch> {
            self.queued.pop_front()
        }
    }

    #[test]
    fn one_batch_drained_per_iteration_unless_drain_all() {
        let target = find_target("lenfield_copy").unwrap();
        let preload = |tree_seed: &[u8]| {
            let parent = crate::corpus::CorpusTree::new(tree_seed.to_vec(), None)
                .root()
                .clone();
            (0..3)
                .map(|i| RetainBatch {
                    parent: parent.clone(),
                    fit: vec![vec![i as u8, 1, 2]],
                })
                .collect::<VecDeque<_>>()
        };
        for (drain_all, expect) in [(false, 1u64), (true, 3u64)] {
            let cfg = FuzzerConfig {
                exec_budget: Some(2),
                budget_secs: None,
                drain_all,
                ..Default::default()
            };
            let mut link = PreloadedLink {
                queued: preload(target.seed),
            };
            let out = fuzz_loop(
                &cfg,
                target,
                target.seed,
                &HarnessConfig::default(),
                &mut link,
                Instant::now(),
                &mut FuzzSinks::default(),
            )
            .unwrap();
            assert_eq!(out.stats.batches_received, expect, "drain_all={drain_all}");
        }
    }

    #[test]
    fn crashing_seed_is_rejected() {
        let target = find_target("lenfield_copy").unwrap();
        let cfg = FuzzerConfig::default();
        let mut link = NullLink::default();
        let err = fuzz_loop(
            &cfg,
            target,
            &[200, 0, 0],
            &HarnessConfig::default(),
            &mut link,
            Instant::now(),
            &mut FuzzSinks::default(),
        );
        assert!(matches!(err, Err(FuzzError::SeedRejected(_))));
    }

    #[test]
    fn exec_budget_is_exact() {
        let target = find_target("tally_writer").unwrap();
        let cfg = FuzzerConfig {
            exec_budget: Some(500),
            budget_secs: None,
            ..Default::default()
        };
        let mut link = EchoLink::default();
        let out = fuzz_loop(
            &cfg,
            target,
            target.seed,
            &HarnessConfig::default(),
            &mut link,
            Instant::now(),
            &mut FuzzSinks::default(),
        )
        .unwrap();
        assert_eq!(out.stats.execs, 500);
    }

    #[test]
    fn crash_candidates_carry_exact_offspring_bytes() {
        let target = find_target("lenfield_copy").unwrap();
        let cfg = FuzzerConfig {
            exec_budget: Some(20_000),
            budget_secs: None,
            rng_seed: 7,
            ..Default::default()
        };
        let mut link = NullLink::default();
        let out = fuzz_loop(
            &cfg,
            target,
            target.seed,
            &HarnessConfig::default(),
            &mut link,
            Instant::now(),
            &mut FuzzSinks::default(),
        )
        .unwrap();
        assert!(
            !out.crashes.is_empty(),
            "a one-byte mutation reaches this overrun; 20k execs must find it"
        );
        let hcfg = HarnessConfig::default();
        for c in &out.crashes {
            let rr = crate::harness::run_target(
                target,
                &c.input,
                ExecutionMode::PlainDetect,
                &hcfg,
            );
            match rr.outcome {
                RunOutcome::Overrun(rep) => assert_eq!(rep.store_idx, c.report.store_idx),
                other => panic!("crash candidate does not reproduce: {other:?}"),
            }
        }
    }

    #[test]
    fn coverage_retention_matches_is_fit_replay() {
        // Rebuild the global coverage by replaying retained nodes in id
        // order; every coverage-retained node must be fit at its turn.
        let target = find_target("record_assembler").unwrap();
        let hcfg = HarnessConfig::default();
        let cfg = FuzzerConfig {
            exec_budget: Some(4000),
            budget_secs: None,
            rng_seed: 11,
            ..Default::default()
        };
        let mut link = EchoLink::default();
        let out = fuzz_loop(
            &cfg,
            target,
            target.seed,
            &hcfg,
            &mut link,
            Instant::now(),
            &mut FuzzSinks::default(),
        )
        .unwrap();
        let mut harness = Harness::new(hcfg);
        let mut global = GlobalCoverage::new(hcfg.coverage_map_size);
        for node in out.tree.nodes() {
            match node.origin {
                Origin::Seed | Origin::CoverageRetained => {
                    let rr = harness.run(target, &node.data, ExecutionMode::CoverageOnly);
                    assert!(
                        is_fit(&rr.coverage.unwrap(), &mut global),
                        "node {} retained without novel coverage",
                        node.id
                    );
                }
                Origin::HeadroomRetained => {}
            }
        }
    }

    #[test]
    fn echoed_samples_become_headroom_retained() {
        let target = find_target("tally_writer").unwrap();
        let cfg = FuzzerConfig {
            exec_budget: Some(3000),
            budget_secs: None,
            rng_seed: 5,
            ..Default::default()
        };
        let mut link = EchoLink::default();
        let out = fuzz_loop(
            &cfg,
            target,
            target.seed,
            &HarnessConfig::default(),
            &mut link,
            Instant::now(),
            &mut FuzzSinks::default(),
        )
        .unwrap();
        let tree_payloads: std::collections::HashSet<Vec<u8>> =
            out.tree.nodes().map(|n| n.data.clone()).collect();
        assert!(out.tree.count_by_origin(Origin::HeadroomRetained) > 0);
        // Every echoed sample appears in the tree except those still queued
        // when the budget ended (at most the final undrained batches).
        let missing = link
            .sampled
            .iter()
            .filter(|s| !tree_payloads.contains(*s))
            .count();
        let queued: usize = link.pending.iter().map(|b| b.fit.len()).sum();
        assert!(
            missing <= queued,
            "{missing} sampled inputs vanished but only {queued} are still queued"
        );
    }
}
