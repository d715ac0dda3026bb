//! In-process execution harness for target programs.
//!
//! A target is a deterministic procedure over (input bytes, run context).
//! Targets use memory only through the context, which routes every buffer
//! write through the shadow map, and they report a coverage edge at every
//! basic-block boundary. One target body serves all execution modes; the
//! mode selects which bookkeeping runs.

use std::time::Instant;

use crate::coverage::{CoverageProfile, CoverageRecorder, DEFAULT_MAP_SIZE};
use crate::shadow::{BufferHandle, CrashReport, HeadroomProfile, ShadowConfig, ShadowMap, WriteOutcome};
use crate::{EngineError, LocationId};

/// Which bookkeeping a run performs. All modes share the same memory
/// semantics, so overruns fire identically in each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecutionMode {
    /// Record edge coverage; skip headroom walks (the fast path).
    CoverageOnly,
    /// Record per-write-site headroom; skip coverage.
    HeadroomProfiled,
    /// Detect overruns only (triage replay).
    PlainDetect,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    Overrun(CrashReport),
    EngineError(EngineError),
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub coverage: Option<CoverageProfile>,
    pub headroom: Option<HeadroomProfile>,
    pub exec_nanos: u64,
}

impl RunResult {
    pub fn is_overrun(&self) -> bool {
        matches!(self.outcome, RunOutcome::Overrun(_))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HarnessConfig {
    pub shadow: ShadowConfig,
    pub coverage_map_size: usize,
    /// Hang guard: maximum harness events per run.
    pub step_budget: u64,
    pub max_input_len: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            shadow: ShadowConfig::default(),
            coverage_map_size: DEFAULT_MAP_SIZE,
            step_budget: 1_000_000,
            max_input_len: 4096,
        }
    }
}

/// Marker for a run that must stop (overrun detected or engine error).
/// Target code propagates it with `?` so the entry unwinds promptly.
#[derive(Debug)]
pub struct Stopped;

pub type Step = Result<(), Stopped>;

/// Per-run state handed to a target's entry procedure.
pub struct RunCtx {
    mode: ExecutionMode,
    shadow: ShadowMap,
    profile: HeadroomProfile,
    recorder: CoverageRecorder,
    steps: u64,
    step_budget: u64,
    fault: Option<CrashReport>,
    engine_error: Option<EngineError>,
}

impl RunCtx {
    fn new(cfg: &HarnessConfig, mode: ExecutionMode) -> Self {
        RunCtx {
            mode,
            shadow: ShadowMap::new(cfg.shadow),
            profile: HeadroomProfile::new(),
            recorder: CoverageRecorder::new(cfg.coverage_map_size),
            steps: 0,
            step_budget: cfg.step_budget,
            fault: None,
            engine_error: None,
        }
    }

    fn reset(&mut self, mode: ExecutionMode) {
        self.mode = mode;
        self.shadow.clear();
        self.profile.reset();
        self.recorder.reset();
        self.steps = 0;
        self.fault = None;
        self.engine_error = None;
    }

    fn tick(&mut self) -> Step {
        self.steps += 1;
        if self.steps > self.step_budget {
            self.engine_error = Some(EngineError::StepBudgetExceeded {
                budget: self.step_budget,
            });
            return Err(Stopped);
        }
        Ok(())
    }

    /// Basic-block boundary hook.
    pub fn edge(&mut self, loc: LocationId) -> Step {
        self.tick()?;
        if self.mode == ExecutionMode::CoverageOnly {
            self.recorder.trace_edge(loc);
        }
        Ok(())
    }

    pub fn alloc(&mut self, size_bytes: usize, site: LocationId) -> Result<BufferHandle, Stopped> {
        self.tick()?;
        match self.shadow.alloc_buffer(size_bytes, site) {
            Ok(h) => Ok(h),
            Err(e) => {
                self.engine_error = Some(e);
                Err(Stopped)
            }
        }
    }

    pub fn free(&mut self, h: BufferHandle) -> Step {
        self.tick()?;
        match self.shadow.free_buffer(h) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.engine_error = Some(e);
                Err(Stopped)
            }
        }
    }

    /// Buffer-write event. Detects overruns in every mode; measures headroom
    /// only in `HeadroomProfiled` mode. An overrun terminates the run.
    pub fn write(
        &mut self,
        h: BufferHandle,
        offset_bytes: i64,
        len_bytes: usize,
        store_idx: LocationId,
    ) -> Step {
        self.tick()?;
        let profile = match self.mode {
            ExecutionMode::HeadroomProfiled => Some(&mut self.profile),
            _ => None,
        };
        match self.shadow.checked_write(h, offset_bytes, len_bytes, store_idx, profile) {
            WriteOutcome::InBounds { .. } => Ok(()),
            WriteOutcome::Overrun(rep) => {
                self.fault = Some(rep);
                Err(Stopped)
            }
        }
    }
}

pub type TargetFn = fn(&mut RunCtx, &[u8]) -> Step;

/// Builds the witness input proving one declared site overrunnable.
pub type WitnessFn = fn() -> Vec<u8>;

/// A target program plus its evaluation metadata. `declared_vuln_sites` is
/// ground truth for scoring only; the engine never reads it.
#[derive(Clone, Copy)]
pub struct Target {
    pub name: &'static str,
    pub entry: TargetFn,
    pub declared_vuln_sites: &'static [LocationId],
    pub seed: &'static [u8],
    /// Per-site witness builders proving each declared site is overrunnable.
    pub witnesses: &'static [(LocationId, WitnessFn)],
}

impl std::fmt::Debug for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Target").field("name", &self.name).finish()
    }
}

/// Reusable execution context: one per worker, fresh state per run.
pub struct Harness {
    cfg: HarnessConfig,
    ctx: RunCtx,
}

impl Harness {
    pub fn new(cfg: HarnessConfig) -> Self {
        let ctx = RunCtx::new(&cfg, ExecutionMode::PlainDetect);
        Harness { cfg, ctx }
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.cfg
    }

    pub fn run(&mut self, target: &Target, input: &[u8], mode: ExecutionMode) -> RunResult {
        let start = Instant::now();
        if input.len() > self.cfg.max_input_len {
            return RunResult {
                outcome: RunOutcome::EngineError(EngineError::InputTooLong {
                    len: input.len(),
                    max: self.cfg.max_input_len,
                }),
                coverage: None,
                headroom: None,
                exec_nanos: start.elapsed().as_nanos() as u64,
            };
        }
        self.ctx.reset(mode);
        let _ = (target.entry)(&mut self.ctx, input);
        let outcome = if let Some(e) = self.ctx.engine_error.take() {
            RunOutcome::EngineError(e)
        } else if let Some(rep) = self.ctx.fault.take() {
            RunOutcome::Overrun(rep)
        } else {
            RunOutcome::Completed
        };
        let coverage = match mode {
            ExecutionMode::CoverageOnly => Some(self.ctx.recorder.finalize()),
            _ => None,
        };
        let headroom = match mode {
            ExecutionMode::HeadroomProfiled => Some(self.ctx.profile.snapshot()),
            _ => None,
        };
        RunResult {
            outcome,
            coverage,
            headroom,
            exec_nanos: start.elapsed().as_nanos() as u64,
        }
    }
}

/// One-shot convenience wrapper around [`Harness::run`].
pub fn run_target(
    target: &Target,
    input: &[u8],
    mode: ExecutionMode,
    cfg: &HarnessConfig,
) -> RunResult {
    Harness::new(*cfg).run(target, input, mode)
}
