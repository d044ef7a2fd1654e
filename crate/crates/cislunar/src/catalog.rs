//! Solution catalog: persistence, deduplication, solution-space map
//! exports, and the time-of-flight branch analysis.
//!
//! Catalogs are newline-delimited JSON. The first line is a versioned
//! header carrying hashes of the physical constants and of the run
//! configuration, so catalogs from mismatched configurations cannot be
//! silently merged or resumed. Solution records are appended in grid order,
//! interleaved with progress markers that make interrupted sweeps exactly
//! resumable.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::SystemConstants;
use crate::dynamics::PlanarState;

/// Residual ceiling for any record admitted to a catalog.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

pub const CATALOG_FORMAT: &str = "cislunar-catalog";
pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed catalog line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error("catalog does not start with a header line")]
    MissingHeader,
    #[error("unsupported catalog format {format} v{version}")]
    UnsupportedFormat { format: String, version: u32 },
    #[error("record violates invariant: {0}")]
    InvalidRecord(String),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// One converged, recorded transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSolution {
    /// Index of the originating grid cell.
    pub grid_index: u64,
    /// Departure phase angle (rad), untouched by the correction.
    pub alpha: f64,
    /// Corrected velocity ratio.
    pub beta: f64,
    /// Corrected time of flight (TU).
    pub tof: f64,
    /// Time of flight in days, consistent with `tof` under the run's
    /// constants.
    pub tof_days: f64,
    pub departure: PlanarState,
    pub insertion: PlanarState,
    pub dv_departure_km_s: f64,
    pub dv_insertion_km_s: f64,
    pub dv_total_km_s: f64,
    pub residual_norm: f64,
    /// +1 for a prograde (counterclockwise) insertion, -1 for retrograde.
    pub insertion_sense: i8,
    /// Accepted corrector iterations.
    pub iterations: u32,
}

impl TransferSolution {
    /// Structural invariants every record must satisfy.
    pub fn validate(&self) -> Result<(), CatalogError> {
        if !(self.residual_norm < RESIDUAL_LIMIT) {
            return Err(CatalogError::InvalidRecord(format!(
                "residual norm {} is not below {RESIDUAL_LIMIT}",
                self.residual_norm
            )));
        }
        if self.dv_total_km_s != self.dv_departure_km_s + self.dv_insertion_km_s {
            return Err(CatalogError::InvalidRecord(
                "total impulse is not the exact component sum".into(),
            ));
        }
        if !(self.tof > 0.0 && self.tof_days > 0.0) {
            return Err(CatalogError::InvalidRecord("time of flight must be positive".into()));
        }
        if self.insertion_sense != 1 && self.insertion_sense != -1 {
            return Err(CatalogError::InvalidRecord("insertion sense must be ±1".into()));
        }
        let finite = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.tof.is_finite()
            && self.departure.is_finite()
            && self.insertion.is_finite()
            && self.dv_total_km_s.is_finite();
        if !finite {
            return Err(CatalogError::InvalidRecord("non-finite field".into()));
        }
        Ok(())
    }

    /// Full validation including unit consistency under the given constants.
    pub fn validate_with_constants(&self, c: &SystemConstants) -> Result<(), CatalogError> {
        self.validate()?;
        let expect = c.time_to_days(self.tof);
        if (self.tof_days - expect).abs() > 1e-12 * expect.abs().max(1.0) {
            return Err(CatalogError::InvalidRecord(format!(
                "tof_days {} inconsistent with tof {} TU",
                self.tof_days, self.tof
            )));
        }
        Ok(())
    }
}

/// Versioned first line of a catalog file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogHeader {
    pub format: String,
    pub version: u32,
    /// Hash over the physical constants and orbit geometry.
    pub constants_hash: String,
    /// Hash over grid, correction settings, and screening.
    pub run_hash: String,
    pub total_candidates: u64,
}

impl CatalogHeader {
    pub fn new(constants_hash: String, run_hash: String, total_candidates: u64) -> Self {
        Self {
            format: CATALOG_FORMAT.to_string(),
            version: CATALOG_VERSION,
            constants_hash,
            run_hash,
            total_candidates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CatalogLine {
    Header(CatalogHeader),
    Solution(TransferSolution),
    Progress { completed_through: u64 },
    Complete,
}

/// Append-only catalog writer; one JSON object per line.
pub struct CatalogWriter {
    out: BufWriter<File>,
}

impl CatalogWriter {
    /// Starts a fresh catalog, truncating any existing file.
    pub fn create(path: &Path, header: &CatalogHeader) -> Result<Self, CatalogError> {
        let file = File::create(path)?;
        let mut writer = Self {
            out: BufWriter::new(file),
        };
        writer.write_line(&CatalogLine::Header(header.clone()))?;
        writer.out.flush()?;
        Ok(writer)
    }

    /// Reopens an interrupted catalog for appending.
    pub fn append(path: &Path) -> Result<Self, CatalogError> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    fn write_line(&mut self, line: &CatalogLine) -> Result<(), CatalogError> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    /// Appends a record after checking its invariants.
    pub fn record(&mut self, solution: &TransferSolution) -> Result<(), CatalogError> {
        solution.validate()?;
        self.write_line(&CatalogLine::Solution(solution.clone()))
    }

    /// Marks every grid index up to and including `completed_through` as
    /// processed and makes the file durable up to this point.
    pub fn progress(&mut self, completed_through: u64) -> Result<(), CatalogError> {
        self.write_line(&CatalogLine::Progress { completed_through })?;
        self.out.flush()?;
        Ok(())
    }

    pub fn complete(&mut self) -> Result<(), CatalogError> {
        self.write_line(&CatalogLine::Complete)?;
        self.out.flush()?;
        Ok(())
    }
}

/// A catalog loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogData {
    pub header: CatalogHeader,
    pub solutions: Vec<TransferSolution>,
    /// Highest grid index covered by a progress marker.
    pub completed_through: Option<u64>,
    pub complete: bool,
}

pub fn load_catalog(path: &Path) -> Result<CatalogData, CatalogError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((idx, line)) => {
            let line = line?;
            match serde_json::from_str::<CatalogLine>(&line) {
                Ok(CatalogLine::Header(h)) => h,
                Ok(_) => return Err(CatalogError::MissingHeader),
                Err(source) => return Err(CatalogError::Malformed { line: idx + 1, source }),
            }
        }
        None => return Err(CatalogError::MissingHeader),
    };
    if header.format != CATALOG_FORMAT || header.version != CATALOG_VERSION {
        return Err(CatalogError::UnsupportedFormat {
            format: header.format.clone(),
            version: header.version,
        });
    }

    let mut solutions = Vec::new();
    let mut completed_through = None;
    let mut complete = false;
    for (idx, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<CatalogLine>(&line) {
            Ok(CatalogLine::Solution(s)) => {
                s.validate()?;
                solutions.push(s);
            }
            Ok(CatalogLine::Progress { completed_through: p }) => {
                completed_through = Some(completed_through.map_or(p, |q: u64| q.max(p)));
            }
            Ok(CatalogLine::Complete) => complete = true,
            Ok(CatalogLine::Header(_)) => {
                return Err(CatalogError::InvalidRecord(format!(
                    "unexpected second header at line {}",
                    idx + 1
                )))
            }
            Err(source) => return Err(CatalogError::Malformed { line: idx + 1, source }),
        }
    }
    Ok(CatalogData {
        header,
        solutions,
        completed_through,
        complete,
    })
}

/// Clustering tolerances for duplicate removal; solutions from different
/// phase angles never merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedupTolerances {
    pub beta: f64,
    pub tof: f64,
}

impl Default for DedupTolerances {
    fn default() -> Self {
        Self {
            beta: 1e-6,
            tof: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    pub kept: Vec<TransferSolution>,
    /// Record count before deduplication, retained as metadata.
    pub original_count: usize,
}

/// Keeps one representative (the lowest residual) per tolerance cluster of
/// (beta, tof), grouped by exact phase angle. Clusters are separated far
/// beyond the tolerances in any real catalog, where duplicates are repeated
/// convergences to the same solution from neighboring grid cells.
pub fn deduplicate(solutions: &[TransferSolution], tol: &DedupTolerances) -> DedupOutcome {
    let mut sorted: Vec<&TransferSolution> = solutions.iter().collect();
    sorted.sort_by(|a, b| {
        a.alpha
            .total_cmp(&b.alpha)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.tof.total_cmp(&b.tof))
    });

    let mut kept: Vec<TransferSolution> = Vec::new();
    let mut anchor: Option<(u64, f64, f64)> = None;
    let mut best: Option<&TransferSolution> = None;

    let flush = |best: &mut Option<&TransferSolution>, kept: &mut Vec<TransferSolution>| {
        if let Some(b) = best.take() {
            kept.push(b.clone());
        }
    };

    for s in sorted {
        let same_cluster = match anchor {
            Some((alpha_bits, beta0, tof0)) => {
                s.alpha.to_bits() == alpha_bits
                    && (s.beta - beta0).abs() <= tol.beta
                    && (s.tof - tof0).abs() <= tol.tof
            }
            None => false,
        };
        if same_cluster {
            if s.residual_norm < best.map_or(f64::INFINITY, |b| b.residual_norm) {
                best = Some(s);
            }
        } else {
            flush(&mut best, &mut kept);
            anchor = Some((s.alpha.to_bits(), s.beta, s.tof));
            best = Some(s);
        }
    }
    flush(&mut best, &mut kept);

    DedupOutcome {
        kept,
        original_count: solutions.len(),
    }
}

/// The four solution-space projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionMap {
    TofDv,
    TofAlpha,
    AlphaBeta,
    TofBeta,
}

impl SolutionMap {
    pub const ALL: [SolutionMap; 4] = [
        SolutionMap::TofDv,
        SolutionMap::TofAlpha,
        SolutionMap::AlphaBeta,
        SolutionMap::TofBeta,
    ];

    pub fn file_name(&self) -> &'static str {
        match self {
            SolutionMap::TofDv => "map_tof_dv.csv",
            SolutionMap::TofAlpha => "map_tof_alpha.csv",
            SolutionMap::AlphaBeta => "map_alpha_beta.csv",
            SolutionMap::TofBeta => "map_tof_beta.csv",
        }
    }

    pub fn column_names(&self) -> (&'static str, &'static str) {
        match self {
            SolutionMap::TofDv => ("tof_days", "dv_total_km_s"),
            SolutionMap::TofAlpha => ("tof_days", "alpha_rad"),
            SolutionMap::AlphaBeta => ("alpha_rad", "beta"),
            SolutionMap::TofBeta => ("tof_days", "beta"),
        }
    }

    pub fn values(&self, s: &TransferSolution) -> (f64, f64) {
        match self {
            SolutionMap::TofDv => (s.tof_days, s.dv_total_km_s),
            SolutionMap::TofAlpha => (s.tof_days, s.alpha),
            SolutionMap::AlphaBeta => (s.alpha, s.beta),
            SolutionMap::TofBeta => (s.tof_days, s.beta),
        }
    }
}

/// Writes one map as CSV: solution id plus the two plotted columns.
pub fn write_map<W: Write>(
    out: &mut W,
    map: SolutionMap,
    solutions: &[TransferSolution],
) -> std::io::Result<()> {
    let (c1, c2) = map.column_names();
    writeln!(out, "id,{c1},{c2}")?;
    for s in solutions {
        let (v1, v2) = map.values(s);
        writeln!(out, "{},{},{}", s.grid_index, v1, v2)?;
    }
    Ok(())
}

/// Writes all four maps into `dir`; returns the created paths.
pub fn export_maps(dir: &Path, solutions: &[TransferSolution]) -> Result<Vec<PathBuf>, CatalogError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for map in SolutionMap::ALL {
        let path = dir.join(map.file_name());
        let mut out = BufWriter::new(File::create(&path)?);
        write_map(&mut out, map, solutions)?;
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// A gap-separated cluster of times of flight at one phase angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub tof_min_days: f64,
    pub tof_max_days: f64,
    pub count: usize,
    pub center_days: f64,
}

/// Per-phase-angle decomposition of solution times of flight into bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub alpha: f64,
    pub solution_count: usize,
    pub bands: Vec<Band>,
    /// Edge-to-edge gaps between consecutive bands (days).
    pub gaps_days: Vec<f64>,
}

impl BranchReport {
    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    /// Center-to-center spacings between consecutive bands (days).
    pub fn center_spacings_days(&self) -> Vec<f64> {
        self.bands
            .windows(2)
            .map(|w| w[1].center_days - w[0].center_days)
            .collect()
    }

    /// Largest within-band spread between consecutive solutions (days).
    pub fn max_intra_band_gap(&self, tofs_days: &[f64]) -> f64 {
        let mut max_gap: f64 = 0.0;
        for band in &self.bands {
            let mut members: Vec<f64> = tofs_days
                .iter()
                .copied()
                .filter(|t| *t >= band.tof_min_days && *t <= band.tof_max_days)
                .collect();
            members.sort_by(f64::total_cmp);
            for w in members.windows(2) {
                max_gap = max_gap.max(w[1] - w[0]);
            }
        }
        max_gap
    }
}

/// Splits the times of flight at one phase angle into bands wherever the
/// sorted sequence jumps by more than `gap_threshold_days`.
pub fn detect_branches(
    solutions: &[TransferSolution],
    alpha: f64,
    gap_threshold_days: f64,
) -> Option<BranchReport> {
    let bits = alpha.to_bits();
    let mut tofs: Vec<f64> = solutions
        .iter()
        .filter(|s| s.alpha.to_bits() == bits)
        .map(|s| s.tof_days)
        .collect();
    if tofs.is_empty() {
        return None;
    }
    tofs.sort_by(f64::total_cmp);

    let mut bands = Vec::new();
    let mut gaps = Vec::new();
    let mut start = tofs[0];
    let mut end = tofs[0];
    let mut count = 1usize;
    for &t in &tofs[1..] {
        if t - end > gap_threshold_days {
            bands.push(make_band(start, end, count));
            gaps.push(t - end);
            start = t;
            end = t;
            count = 1;
        } else {
            end = t;
            count += 1;
        }
    }
    bands.push(make_band(start, end, count));

    Some(BranchReport {
        alpha,
        solution_count: tofs.len(),
        bands,
        gaps_days: gaps,
    })
}

fn make_band(start: f64, end: f64, count: usize) -> Band {
    Band {
        tof_min_days: start,
        tof_max_days: end,
        count,
        center_days: 0.5 * (start + end),
    }
}

/// Branch reports for every distinct phase angle, ascending.
pub fn branch_reports(
    solutions: &[TransferSolution],
    gap_threshold_days: f64,
) -> Vec<BranchReport> {
    let mut alphas: Vec<f64> = solutions.iter().map(|s| s.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup_by(|a, b| a.to_bits() == b.to_bits());
    alphas
        .iter()
        .filter_map(|&a| detect_branches(solutions, a, gap_threshold_days))
        .collect()
}

/// Least-squares slope of one band's phase angle against its center time of
/// flight across phase angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSlope {
    pub band_index: usize,
    pub points: usize,
    /// `None` when the band spans fewer than two phase angles.
    pub slope_rad_per_day: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSlopeSummary {
    pub slopes: Vec<BandSlope>,
    /// Standard deviation of the fitted slopes over their mean magnitude;
    /// `None` with fewer than two fitted bands.
    pub relative_dispersion: Option<f64>,
}

/// Fits the phase angle (unwrapped by whole turns) against band-center time
/// of flight, band index by band index across the reports.
pub fn band_slopes(reports: &[BranchReport]) -> BandSlopeSummary {
    let max_bands = reports.iter().map(|r| r.bands.len()).max().unwrap_or(0);
    let mut slopes = Vec::new();
    for band_index in 0..max_bands {
        let mut points: Vec<(f64, f64)> = reports
            .iter()
            .filter_map(|r| {
                r.bands
                    .get(band_index)
                    .map(|b| (b.center_days, r.alpha))
            })
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let slope = fit_unwrapped_slope(&mut points);
        slopes.push(BandSlope {
            band_index,
            points: points.len(),
            slope_rad_per_day: slope,
        });
    }

    let fitted: Vec<f64> = slopes.iter().filter_map(|s| s.slope_rad_per_day).collect();
    let relative_dispersion = if fitted.len() >= 2 {
        let mean = fitted.iter().sum::<f64>() / fitted.len() as f64;
        let var = fitted.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / fitted.len() as f64;
        if mean.abs() > 0.0 {
            Some(var.sqrt() / mean.abs())
        } else {
            None
        }
    } else {
        None
    };
    BandSlopeSummary {
        slopes,
        relative_dispersion,
    }
}

/// Unwraps the angles by integer turns for sequential continuity, then
/// fits the ordinary least-squares slope. Needs at least two distinct
/// abscissae.
fn fit_unwrapped_slope(points: &mut [(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
    for i in 1..points.len() {
        let prev = points[i - 1].1;
        let turns = ((prev - points[i].1) / TWO_PI).round();
        points[i].1 += TWO_PI * turns;
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let a_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, a) in points.iter() {
        num += (t - t_mean) * (a - a_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return None;
    }
    Some(num / den)
}
