//! The driver worker: re-run sampled inputs under headroom profiling and
//! send back the ones that lower the global minimum headroom profile.
//!
//! The driver owns its runtime, its minimum profile, the consumer end of the
//! candidate queue and the producer end of the retain queue. It blocks
//! waiting for candidates (demand-driven); a shutdown flag or queue
//! disconnect unblocks it.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::time::{Duration, Instant};

use crate::fuzzer::{CandidateBatch, CrashCandidate, CrashSource, DriverLink, RetainBatch, SendOutcome};
use crate::harness::{ExecutionMode, Harness, HarnessConfig, RunOutcome, Target};
use crate::shadow::{HeadroomProfile, HEADROOM_MAX};
use crate::LocationId;

/// Elementwise minimum of every headroom profile processed so far. Entries
/// only ever decrease and absent sites read as 128.
#[derive(Clone, Debug, Default)]
pub struct MinHProfile {
    entries: BTreeMap<LocationId, u8>,
}

impl MinHProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, site: LocationId) -> u8 {
        self.entries.get(&site).copied().unwrap_or(HEADROOM_MAX)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LocationId, u8)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Elementwise min with `profile`; returns the entries that decreased.
    pub fn absorb(&mut self, profile: &HeadroomProfile) -> Vec<(LocationId, u8)> {
        let mut lowered = Vec::new();
        for (site, value) in profile.iter() {
            let e = self.entries.entry(site).or_insert(HEADROOM_MAX);
            if value < *e {
                *e = value;
                lowered.push((site, value));
            }
        }
        lowered
    }
}

/// True iff any entry of `profile` is strictly below the corresponding entry
/// of `min`. Absent profile entries read as 128 and can never win.
pub fn is_less(profile: &HeadroomProfile, min: &MinHProfile) -> bool {
    profile.iter().any(|(site, value)| value < min.get(site))
}

/// Mutable state of one driver worker.
pub struct DriverState {
    pub min_profile: MinHProfile,
    pub execs: u64,
    pub engine_errors: u64,
    /// Raw overrun count; crash candidates are deduplicated per site.
    pub overruns: u64,
    pub crashes: Vec<CrashCandidate>,
    crashed_sites: std::collections::BTreeSet<u32>,
    epoch: Instant,
    hlog: Option<Box<dyn Write + Send>>,
}

const HEADROOM_HEADER: &str = "secs,site,min_headroom\n";

impl DriverState {
    pub fn new(epoch: Instant, mut hlog: Option<Box<dyn Write + Send>>) -> Self {
        if let Some(out) = &mut hlog {
            let _ = out.write_all(HEADROOM_HEADER.as_bytes());
        }
        DriverState {
            min_profile: MinHProfile::new(),
            execs: 0,
            engine_errors: 0,
            overruns: 0,
            crashes: Vec::new(),
            crashed_sites: std::collections::BTreeSet::new(),
            epoch,
            hlog,
        }
    }

    /// Retention decision for one completed run's profile: keep the input iff
    /// it strictly lowers some entry, folding it into the minimum when it does.
    pub fn observe(&mut self, profile: &HeadroomProfile) -> bool {
        if !is_less(profile, &self.min_profile) {
            return false;
        }
        let lowered = self.min_profile.absorb(profile);
        if let Some(out) = &mut self.hlog {
            let secs = self.epoch.elapsed().as_secs();
            for (site, value) in &lowered {
                let _ = writeln!(out, "{secs},{site},{value}");
            }
            let _ = out.flush();
        }
        true
    }

    /// Runs every sample of a batch in headroom mode, sequentially with
    /// immediate minimum updates. A sample that overruns is not subject to
    /// the strictly-less test: the first one seen per faulting site is
    /// forwarded and recorded as a crash candidate (repeat crashers at a
    /// known site carry no new information and would flood the corpus).
    /// Returns the retain batch, or nothing if no sample was kept.
    pub fn process_batch(
        &mut self,
        harness: &mut Harness,
        target: &Target,
        batch: &CandidateBatch,
        stop: Option<&AtomicBool>,
    ) -> Option<RetainBatch> {
        let mut fit: Vec<Vec<u8>> = Vec::new();
        for sample in &batch.samples {
            if let Some(flag) = stop {
                if flag.load(Ordering::Relaxed) {
                    break;
                }
            }
            let rr = harness.run(target, sample, ExecutionMode::HeadroomProfiled);
            self.execs += 1;
            match rr.outcome {
                RunOutcome::Completed => {
                    let profile = rr.headroom.expect("headroom mode yields a profile");
                    if self.observe(&profile) {
                        fit.push(sample.clone());
                    }
                }
                RunOutcome::Overrun(report) => {
                    self.overruns += 1;
                    if self.crashed_sites.insert(report.store_idx.0) {
                        self.crashes.push(CrashCandidate {
                            input: sample.clone(),
                            report,
                            at_ms: self.epoch.elapsed().as_millis() as u64,
                            source: CrashSource::Driver,
                        });
                        fit.push(sample.clone());
                    }
                }
                RunOutcome::EngineError(_) => self.engine_errors += 1,
            }
        }
        if fit.is_empty() {
            None
        } else {
            Some(RetainBatch {
                parent: batch.parent.clone(),
                fit,
            })
        }
    }
}

/// Blocking driver loop for the threaded two-worker arrangement. Exits when
/// the candidate queue disconnects or the stop flag rises; returns its state
/// for end-of-campaign harvesting.
pub fn driver_loop(
    target: Target,
    hcfg: HarnessConfig,
    from_fuzzer: Receiver<CandidateBatch>,
    to_fuzzer: SyncSender<RetainBatch>,
    stop: &AtomicBool,
    mut state: DriverState,
) -> DriverState {
    let mut harness = Harness::new(hcfg);
    loop {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let batch = match from_fuzzer.recv_timeout(Duration::from_millis(25)) {
            Ok(b) => b,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        if let Some(mut rb) = state.process_batch(&mut harness, &target, &batch, Some(stop)) {
            loop {
                match to_fuzzer.try_send(rb) {
                    Ok(()) => break,
                    Err(TrySendError::Full(back)) => {
                        if stop.load(Ordering::Relaxed) {
                            return state;
                        }
                        rb = back;
                        std::thread::sleep(Duration::from_millis(1));
                    }
                    Err(TrySendError::Disconnected(_)) => return state,
                }
            }
        }
    }
    state
}

/// Runs the driver synchronously inside the fuzzer's thread: every sent
/// batch is processed on the spot and its retain batch queued for the next
/// drain. Gives single-threaded deterministic campaigns the full driver
/// semantics.
pub struct InlineDriverLink {
    state: DriverState,
    harness: Harness,
    target: Target,
    pending: VecDeque<RetainBatch>,
}

impl InlineDriverLink {
    pub fn new(target: Target, hcfg: HarnessConfig, state: DriverState) -> Self {
        InlineDriverLink {
            state,
            harness: Harness::new(hcfg),
            target,
            pending: VecDeque::new(),
        }
    }

    pub fn into_state(self) -> DriverState {
        self.state
    }

    pub fn state(&self) -> &DriverState {
        &self.state
    }
}

impl DriverLink for InlineDriverLink {
    fn try_send(&mut self, batch: CandidateBatch) -> SendOutcome {
        if let Some(rb) = self
            .state
            .process_batch(&mut self.harness, &self.target, &batch, None)
        {
            self.pending.push_back(rb);
        }
        SendOutcome::Sent
    }

    fn try_recv(&mut self) -> Option<RetainBatch> {
        self.pending.pop_front()
    }
}
