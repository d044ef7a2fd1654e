//! The full pipeline: enumerate the grid, evaluate guesses, correct the
//! feasible ones, and append converged transfers to a checkpointed catalog.
//!
//! Candidates are independent, so chunks are distributed over a worker pool
//! and merged back in grid order; the catalog bytes do not depend on the
//! worker count. A progress marker after every chunk makes interrupted
//! sweeps resumable at the exact candidate where they stopped.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::catalog::{
    load_catalog, CatalogError, CatalogHeader, CatalogWriter, TransferSolution,
};
use crate::config::{ConfigError, RunConfig};
use crate::constants::SystemConstants;
use crate::corrector::{correct, CorrectionStatus};
use crate::search::{evaluate_candidate, screen, CandidateStatus};
use crate::transfer::{departure_state, impulses, insertion_sense, OrbitSpec};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("checkpoint does not match this configuration: {0}")]
    CheckpointMismatch(String),
    #[error("sweep interrupted after a checkpoint; resume to continue: {source}")]
    Resumable {
        #[source]
        source: Box<SweepError>,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Counters for one sweep invocation. A resumed run counts only the
/// candidates it processed itself.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepSummary {
    pub total_candidates: u64,
    pub processed: u64,
    pub feasible: u64,
    pub collided: u64,
    pub integrator_failures: u64,
    pub screened_out: u64,
    pub corrected: u64,
    pub converged: u64,
    pub stalled: u64,
    pub bound_locked: u64,
    pub collided_during_iteration: u64,
    pub budget_exhausted: u64,
    pub wall_seconds: f64,
    pub resumed_from: Option<u64>,
    pub already_complete: bool,
}

impl SweepSummary {
    pub fn print(&self) {
        println!("candidates total      {}", self.total_candidates);
        println!("processed             {}", self.processed);
        println!("  feasible guesses    {}", self.feasible);
        println!("  collided            {}", self.collided);
        println!("  integrator failures {}", self.integrator_failures);
        println!("  screened out        {}", self.screened_out);
        println!("corrections run       {}", self.corrected);
        println!("  converged           {}", self.converged);
        println!("  stalled             {}", self.stalled);
        println!("  bound locked        {}", self.bound_locked);
        println!("  collided in loop    {}", self.collided_during_iteration);
        println!("  budget exhausted    {}", self.budget_exhausted);
        println!("wall time             {:.1} s", self.wall_seconds);
        if let Some(idx) = self.resumed_from {
            println!("resumed from index    {idx}");
        }
    }
}

struct CandidateResult {
    status: CandidateStatus,
    screened_out: bool,
    correction: Option<(CorrectionStatus, Option<TransferSolution>)>,
}

/// Starts a fresh sweep, overwriting `catalog_path`.
pub fn run_search(
    cfg: &RunConfig,
    catalog_path: &Path,
    verbose: bool,
) -> Result<SweepSummary, SweepError> {
    cfg.validate()?;
    let header = CatalogHeader::new(cfg.constants_hash(), cfg.run_hash(), cfg.grid.total());
    let writer = CatalogWriter::create(catalog_path, &header)?;
    run_from(cfg, writer, 0, None, verbose)
}

/// Continues an interrupted sweep from its last checkpoint. The catalog
/// header must match the configuration exactly.
pub fn resume_search(
    cfg: &RunConfig,
    catalog_path: &Path,
    verbose: bool,
) -> Result<SweepSummary, SweepError> {
    cfg.validate()?;
    let data = load_catalog(catalog_path)?;
    if data.header.constants_hash != cfg.constants_hash() {
        return Err(SweepError::CheckpointMismatch(
            "constants hash differs".into(),
        ));
    }
    if data.header.run_hash != cfg.run_hash() {
        return Err(SweepError::CheckpointMismatch(
            "grid or correction settings differ".into(),
        ));
    }
    if data.header.total_candidates != cfg.grid.total() {
        return Err(SweepError::CheckpointMismatch(
            "candidate count differs".into(),
        ));
    }
    if data.complete {
        return Ok(SweepSummary {
            total_candidates: cfg.grid.total(),
            already_complete: true,
            ..SweepSummary::default()
        });
    }

    // Drop any records past the last durable checkpoint (an interrupted
    // chunk may have been partially appended), then continue.
    let completed_through = data.completed_through;
    let start = completed_through.map_or(0, |p| p + 1);
    let mut writer = CatalogWriter::create(catalog_path, &data.header)?;
    for sol in data
        .solutions
        .iter()
        .filter(|s| completed_through.is_some_and(|p| s.grid_index <= p))
    {
        writer.record(sol)?;
    }
    if let Some(p) = completed_through {
        writer.progress(p)?;
    }
    run_from(cfg, writer, start, completed_through, verbose)
}

fn run_from(
    cfg: &RunConfig,
    mut writer: CatalogWriter,
    start: u64,
    resumed_from: Option<u64>,
    verbose: bool,
) -> Result<SweepSummary, SweepError> {
    let clock = Instant::now();
    let constants = cfg.system_constants()?;
    let orbit = cfg.orbit;
    let total = cfg.grid.total();

    let mut summary = SweepSummary {
        total_candidates: total,
        resumed_from,
        ..SweepSummary::default()
    };

    if total == 0 {
        writer.complete()?;
        summary.wall_seconds = clock.elapsed().as_secs_f64();
        return Ok(summary);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;

    let chunk = cfg.run.checkpoint_interval as u64;
    let mut persisted_any = resumed_from.is_some();
    let mut next = start;
    while next < total {
        let end = (next + chunk).min(total);
        let results: Vec<CandidateResult> = pool.install(|| {
            (next..end)
                .into_par_iter()
                .map(|index| process_candidate(&constants, &orbit, cfg, index))
                .collect()
        });

        let merge = |summary: &mut SweepSummary,
                     writer: &mut CatalogWriter|
         -> Result<(), SweepError> {
            for result in &results {
                summary.processed += 1;
                match result.status {
                    CandidateStatus::FeasibleGuess => summary.feasible += 1,
                    CandidateStatus::Collided => summary.collided += 1,
                    CandidateStatus::IntegratorFailure => summary.integrator_failures += 1,
                }
                if result.screened_out {
                    summary.screened_out += 1;
                }
                if let Some((status, solution)) = &result.correction {
                    summary.corrected += 1;
                    match status {
                        CorrectionStatus::Converged => summary.converged += 1,
                        CorrectionStatus::Stalled => summary.stalled += 1,
                        CorrectionStatus::BoundLocked => summary.bound_locked += 1,
                        CorrectionStatus::CollidedDuringIteration => {
                            summary.collided_during_iteration += 1
                        }
                        CorrectionStatus::BudgetExhausted => summary.budget_exhausted += 1,
                    }
                    if let Some(sol) = solution {
                        writer.record(sol)?;
                    }
                }
            }
            writer.progress(end - 1)?;
            Ok(())
        };
        if let Err(err) = merge(&mut summary, &mut writer) {
            // Progress up to the previous chunk is durable.
            return Err(if persisted_any {
                SweepError::Resumable {
                    source: Box::new(err),
                }
            } else {
                err
            });
        }
        persisted_any = true;

        if verbose {
            let done = end - start;
            let span = total - start;
            let rate = done as f64 / clock.elapsed().as_secs_f64().max(1e-9);
            eprintln!(
                "[search] {end}/{total} ({:.1}%) {:.0} cand/s, {} converged",
                100.0 * done as f64 / span as f64,
                rate,
                summary.converged
            );
        }
        next = end;
    }

    writer.complete()?;
    summary.wall_seconds = clock.elapsed().as_secs_f64();
    Ok(summary)
}

fn process_candidate(
    constants: &SystemConstants,
    orbit: &OrbitSpec,
    cfg: &RunConfig,
    index: u64,
) -> CandidateResult {
    let params = cfg.grid.params_at(index);
    let candidate = evaluate_candidate(
        constants,
        orbit,
        index,
        params,
        cfg.propagation.tolerance,
    );

    if candidate.status != CandidateStatus::FeasibleGuess {
        return CandidateResult {
            status: candidate.status,
            screened_out: false,
            correction: None,
        };
    }
    if !screen(&candidate, cfg.run.screen_threshold) {
        return CandidateResult {
            status: candidate.status,
            screened_out: true,
            correction: None,
        };
    }

    let outcome = correct(
        constants,
        orbit,
        candidate.params,
        candidate.final_state,
        &cfg.correction,
    );
    let solution = (outcome.status == CorrectionStatus::Converged)
        .then(|| build_solution(constants, orbit, index, &outcome));
    CandidateResult {
        status: candidate.status,
        screened_out: false,
        correction: Some((outcome.status, solution)),
    }
}

fn build_solution(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    grid_index: u64,
    outcome: &crate::corrector::CorrectionOutcome,
) -> TransferSolution {
    let insertion = outcome
        .insertion_state
        .expect("converged corrections carry the terminal state");
    let departure = departure_state(c, orbit, &outcome.params);
    let imp = impulses(c, orbit, &departure, &insertion);
    TransferSolution {
        grid_index,
        alpha: outcome.params.alpha,
        beta: outcome.params.beta,
        tof: outcome.params.tof,
        tof_days: c.time_to_days(outcome.params.tof),
        departure,
        insertion,
        dv_departure_km_s: imp.departure_km_s,
        dv_insertion_km_s: imp.insertion_km_s,
        dv_total_km_s: imp.total_km_s,
        residual_norm: outcome.residual_norm,
        insertion_sense: insertion_sense(c, &insertion),
        iterations: outcome.iterations as u32,
    }
}
