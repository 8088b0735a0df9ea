//! Experiment harnesses: delay difference-limen sweeps, iso-sensitivity
//! scans over second-highlight amplitude, and labeled matching runs.
//!
//! Every trial regenerates fresh echo series from per-trial derived seeds,
//! so grid points can be evaluated in any order or in parallel without
//! changing the numbers. A threshold is accepted only when discrimination
//! holds on three independent repetitions, which guards against lucky
//! jitter draws.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::Error;
use crate::seed::{derive_seed, derive_seed_path};
use crate::signal::{BandConstants, SampledEcho};
use crate::synth::{synth_series, EchoSpec, NoiseSpec};
use crate::target::{
    compare_images, discriminate_sets, distinct_at, identify, train_target, Discrimination,
    FeatureLevel, IdentificationResult, TargetDatabase, TrainingConfig,
};
use crate::Result;

/// Repetitions a threshold must survive before it is accepted.
pub const THRESHOLD_REPS: usize = 3;

/// Measured threshold ordinate: a value, or a marker that the scan budget
/// was exhausted without reaching one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdValue {
    Reached(f64),
    NotReached,
}

/// One point of a threshold curve. `x` is the center delay in microseconds;
/// `value` is the measured threshold (microseconds for delay limens, dB for
/// amplitude scans). `feature_used` names the feature that carried the
/// decision, or the forced feature for single-feature scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub x: f64,
    pub value: ThresholdValue,
    pub feature_used: Option<FeatureLevel>,
}

/// Delay difference-limen sweep: for each center delay, find the smallest
/// added delay the model can discriminate.
#[derive(Debug, Clone, PartialEq)]
pub struct DltRun {
    pub center_delays_us: Vec<f64>,
    pub jitter_fraction: f64,
    /// Window signal-to-noise ratio in dB; None runs noise-free.
    pub noise_snr_db: Option<f64>,
    pub cfg: TrainingConfig,
    /// Search resolution of the ascending delta scan, microseconds.
    pub step_us: f64,
    pub seed: u64,
}

impl DltRun {
    pub fn new(center_delays_us: Vec<f64>, cfg: TrainingConfig, seed: u64) -> Self {
        Self {
            center_delays_us,
            jitter_fraction: 0.2,
            noise_snr_db: None,
            cfg,
            step_us: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.center_delays_us.is_empty() {
            return Err(Error::InvalidSpec("no center delays given".into()));
        }
        for &c in &self.center_delays_us {
            if !c.is_finite() || c <= 0.0 || c >= BandConstants::CIT_US {
                return Err(Error::InvalidSpec(format!(
                    "center delay must lie in (0, {}), got {c}",
                    BandConstants::CIT_US
                )));
            }
        }
        if !(self.step_us > 0.0) || !self.step_us.is_finite() {
            return Err(Error::InvalidSpec("step must be positive".into()));
        }
        Ok(())
    }
}

/// Iso-sensitivity scan: for each delay of a close-spaced highlight pair,
/// find the smallest pair amplitude that lets the model tell the two pair
/// spacings apart. Thresholds are reported in dB (20 log10 a).
#[derive(Debug, Clone, PartialEq)]
pub struct IsoRun {
    pub delta_t_values_us: Vec<f64>,
    /// Ascending amplitude grid, all values within [0.003, 0.06].
    pub a_grid: Vec<f64>,
    pub pair_spacing_close_us: f64,
    pub pair_spacing_far_us: f64,
    /// Peak-relative white noise level, dB.
    pub noise_peak_db: f64,
    /// Leading-delay jitter; zero by default so the pair spacing is the
    /// only systematic difference between the compared series.
    pub jitter_fraction: f64,
    pub cfg: TrainingConfig,
    pub seed: u64,
}

/// Default amplitude grid: 27 geometric steps from 0.003 to 0.06, about
/// 1 dB apart.
pub fn default_a_grid() -> Vec<f64> {
    let n = 27;
    let (lo, hi) = (0.003f64, 0.06f64);
    let mut grid: Vec<f64> = (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect();
    grid[0] = lo;
    grid[n - 1] = hi;
    grid
}

impl IsoRun {
    pub fn new(delta_t_values_us: Vec<f64>, cfg: TrainingConfig, seed: u64) -> Self {
        Self {
            delta_t_values_us,
            a_grid: default_a_grid(),
            pair_spacing_close_us: 7.0,
            pair_spacing_far_us: 10.0,
            noise_peak_db: -40.0,
            jitter_fraction: 0.0,
            cfg,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta_t_values_us.is_empty() || self.a_grid.is_empty() {
            return Err(Error::InvalidSpec(
                "need at least one delay and one amplitude".into(),
            ));
        }
        if !(0.0 < self.pair_spacing_close_us && self.pair_spacing_close_us < self.pair_spacing_far_us)
        {
            return Err(Error::InvalidSpec(format!(
                "pair spacings must be ordered and positive, got {} / {}",
                self.pair_spacing_close_us, self.pair_spacing_far_us
            )));
        }
        for &t in &self.delta_t_values_us {
            if !t.is_finite() || t < 0.0 || t + self.pair_spacing_far_us >= BandConstants::CIT_US {
                return Err(Error::InvalidSpec(format!(
                    "delay {t} us puts the far pair component outside the {} us window",
                    BandConstants::CIT_US
                )));
            }
        }
        let mut prev = 0.0;
        for &a in &self.a_grid {
            if !(a > prev) || !(0.003 - 1e-12..=0.06 + 1e-12).contains(&a) {
                return Err(Error::InvalidSpec(format!(
                    "amplitude grid must ascend within [0.003, 0.06], offending value {a}"
                )));
            }
            prev = a;
        }
        Ok(())
    }
}

/// Both iso-sensitivity curves plus the unconstrained hierarchical one.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoResult {
    /// Full hierarchy: threshold where any feature separates the variants.
    pub hierarchical: Vec<ThresholdPoint>,
    /// Coarse-shape feature alone.
    pub maps_only: Vec<ThresholdPoint>,
    /// Fine-structure feature alone.
    pub mips_only: Vec<ThresholdPoint>,
}

/// Deterministic parallel map: output order follows input order regardless
/// of scheduling; `jobs <= 1` runs inline.
fn parallel_map<T, U, F>(items: &[T], jobs: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<U>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(i, &items[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("slot filled"))
        .collect()
}

fn two_highlight_series(
    center_us: f64,
    jitter: f64,
    noise_snr_db: Option<f64>,
    count: usize,
    seed: u64,
) -> Result<Vec<SampledEcho>> {
    let mut spec = EchoSpec::two_highlight(1.0, center_us, seed).with_jitter(jitter);
    if let Some(db) = noise_snr_db {
        spec = spec.with_noise(NoiseSpec::SnrOverWindow(db));
    }
    synth_series(&spec, count)
}

fn dlt_point(run: &DltRun, ci: usize, center: f64) -> Result<ThresholdPoint> {
    let mut tested_max = 0.0f64;
    let mut di = 1usize;
    loop {
        let delta = di as f64 * run.step_us;
        // the scan budget is half the center delay, clipped so the shifted
        // series still fits inside the synthesis window
        if delta > 0.5 * center || center + delta >= BandConstants::CIT_US {
            return Err(Error::InsufficientBudget {
                center_us: center,
                max_delta_us: tested_max,
            });
        }
        let mut all_distinct = true;
        let mut level_first_rep = None;
        for rep in 0..THRESHOLD_REPS {
            let trial = derive_seed_path(run.seed, &[ci as u64, di as u64, rep as u64]);
            let series_a = two_highlight_series(
                center,
                run.jitter_fraction,
                run.noise_snr_db,
                run.cfg.standard_count,
                derive_seed(trial, 0),
            )?;
            let series_b = two_highlight_series(
                center + delta,
                run.jitter_fraction,
                run.noise_snr_db,
                run.cfg.standard_count,
                derive_seed(trial, 1),
            )?;
            match discriminate_sets(&series_a, &series_b, &run.cfg, derive_seed(trial, 2))? {
                Discrimination::Distinct(level) => {
                    if rep == 0 {
                        level_first_rep = Some(level);
                    }
                }
                Discrimination::Indistinguishable => {
                    all_distinct = false;
                    break;
                }
            }
        }
        if all_distinct {
            return Ok(ThresholdPoint {
                x: center,
                value: ThresholdValue::Reached(delta),
                feature_used: level_first_rep,
            });
        }
        tested_max = delta;
        di += 1;
    }
}

/// Run the delay difference-limen sweep. For each center delay the ascending
/// delta scan stops at the first delta where all repetitions discriminate;
/// exhausting half the center delay without success is an error. Points come
/// back sorted by center delay.
pub fn run_dlt(run: &DltRun, jobs: usize) -> Result<Vec<ThresholdPoint>> {
    run.validate()?;
    let results = parallel_map(&run.center_delays_us, jobs, |ci, &center| {
        dlt_point(run, ci, center)
    });
    let mut points = results.into_iter().collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(points)
}

fn iso_series(
    run: &IsoRun,
    delta_t: f64,
    spacing: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<SampledEcho>> {
    let spec = EchoSpec::three_component(amplitude, delta_t, delta_t + spacing, seed)
        .with_jitter(run.jitter_fraction)
        .with_noise(NoiseSpec::RelativeToFirstHighlightPeak(run.noise_peak_db));
    synth_series(&spec, run.cfg.standard_count)
}

struct CurveState {
    found: Option<(f64, Option<FeatureLevel>)>,
}

fn iso_point(run: &IsoRun, ti: usize, delta_t: f64) -> Result<[ThresholdPoint; 3]> {
    // curve order: hierarchical, coarse-only, fine-only
    let mut curves = [
        CurveState { found: None },
        CurveState { found: None },
        CurveState { found: None },
    ];
    for (ai, &a) in run.a_grid.iter().enumerate() {
        if curves.iter().all(|c| c.found.is_some()) {
            break;
        }
        let mut pass = [true; 3];
        let mut hier_level = None;
        for rep in 0..THRESHOLD_REPS {
            let pending0 = curves[0].found.is_none() && pass[0];
            let pending1 = curves[1].found.is_none() && pass[1];
            let pending2 = curves[2].found.is_none() && pass[2];
            if !(pending0 || pending1 || pending2) {
                break;
            }
            let trial = derive_seed_path(run.seed, &[ti as u64, ai as u64, rep as u64]);
            let close = iso_series(
                run,
                delta_t,
                run.pair_spacing_close_us,
                a,
                derive_seed(trial, 0),
            )?;
            let far = iso_series(
                run,
                delta_t,
                run.pair_spacing_far_us,
                a,
                derive_seed(trial, 1),
            )?;
            let img_close = train_target("close", &close, &run.cfg, derive_seed(trial, 2))?;
            let img_far = train_target("far", &far, &run.cfg, derive_seed(trial, 3))?;
            if pending0 {
                match compare_images(&img_close, &img_far)? {
                    Discrimination::Distinct(level) => {
                        if rep == 0 {
                            hier_level = Some(level);
                        }
                    }
                    Discrimination::Indistinguishable => pass[0] = false,
                }
            }
            if pending1 && !distinct_at(&img_close, &img_far, FeatureLevel::Maps)? {
                pass[1] = false;
            }
            if pending2 && !distinct_at(&img_close, &img_far, FeatureLevel::Mips)? {
                pass[2] = false;
            }
        }
        let threshold_db = 20.0 * a.log10();
        let levels = [hier_level, Some(FeatureLevel::Maps), Some(FeatureLevel::Mips)];
        for i in 0..3 {
            if curves[i].found.is_none() && pass[i] {
                curves[i].found = Some((threshold_db, levels[i]));
            }
        }
    }
    let forced = [None, Some(FeatureLevel::Maps), Some(FeatureLevel::Mips)];
    let mut out = Vec::with_capacity(3);
    for (i, c) in curves.iter().enumerate() {
        out.push(match c.found {
            Some((db, level)) => ThresholdPoint {
                x: delta_t,
                value: ThresholdValue::Reached(db),
                feature_used: level,
            },
            None => ThresholdPoint {
                x: delta_t,
                value: ThresholdValue::NotReached,
                feature_used: forced[i],
            },
        });
    }
    Ok([out[0], out[1], out[2]])
}

/// Run the iso-sensitivity scan. For every delay, the amplitude grid is
/// scanned upward until the two pair spacings become distinguishable; the
/// hierarchical curve and both single-feature curves come from the same
/// trained image pairs. A curve that never separates within the grid gets a
/// NotReached marker instead of a number.
pub fn run_iso(run: &IsoRun, jobs: usize) -> Result<IsoResult> {
    run.validate()?;
    let results = parallel_map(&run.delta_t_values_us, jobs, |ti, &delta_t| {
        iso_point(run, ti, delta_t)
    });
    let mut triples = results.into_iter().collect::<Result<Vec<_>>>()?;
    triples.sort_by(|a, b| a[0].x.total_cmp(&b[0].x));
    let mut result = IsoResult {
        hierarchical: Vec::with_capacity(triples.len()),
        maps_only: Vec::with_capacity(triples.len()),
        mips_only: Vec::with_capacity(triples.len()),
    };
    for [h, ma, mi] in triples {
        result.hierarchical.push(h);
        result.maps_only.push(ma);
        result.mips_only.push(mi);
    }
    Ok(result)
}

/// Outcome of a labeled matching run: one trained image per class, one
/// identification per probe series.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// Class names in training order.
    pub trained: Vec<String>,
    /// Per probe set: its true label and the identification outcome.
    pub outcomes: Vec<(String, IdentificationResult)>,
}

impl MatchReport {
    /// Fraction of probe sets identified as their own label.
    pub fn diagonal_fraction(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        let hits = self
            .outcomes
            .iter()
            .filter(|(label, res)| {
                matches!(res, IdentificationResult::Identified { name, .. } if name == label)
            })
            .count();
        hits as f64 / self.outcomes.len() as f64
    }

    /// Plain-text confusion table: one row per probe label, one column per
    /// trained class plus unknown/ambiguous spill columns.
    pub fn render_table(&self) -> String {
        let mut labels: Vec<&str> = Vec::new();
        for (label, _) in &self.outcomes {
            if !labels.contains(&label.as_str()) {
                labels.push(label);
            }
        }
        let mut columns: Vec<&str> = self.trained.iter().map(|s| s.as_str()).collect();
        columns.push("unknown");
        columns.push("ambiguous");
        let width = columns
            .iter()
            .map(|c| c.len())
            .chain(labels.iter().map(|l| l.len()))
            .chain(std::iter::once("probe".len()))
            .max()
            .unwrap_or(8)
            + 2;
        let mut out = String::new();
        out.push_str(&format!("{:width$}", "probe"));
        for c in &columns {
            out.push_str(&format!("{c:>width$}"));
        }
        out.push('\n');
        for label in &labels {
            let mut counts = vec![0usize; columns.len()];
            for (true_label, res) in &self.outcomes {
                if true_label != label {
                    continue;
                }
                match res {
                    IdentificationResult::Identified { name, .. } => {
                        if let Some(i) = self.trained.iter().position(|t| t == name) {
                            counts[i] += 1;
                        }
                    }
                    IdentificationResult::Unknown => {
                        let n = counts.len();
                        counts[n - 2] += 1;
                    }
                    IdentificationResult::Indistinguishable { .. } => {
                        let n = counts.len();
                        counts[n - 1] += 1;
                    }
                }
            }
            out.push_str(&format!("{label:width$}"));
            for c in &counts {
                out.push_str(&format!("{c:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Train one image per labeled echo set, then identify every probe set
/// against the resulting database. Probe identification averages the first
/// `subset_size` echoes of each probe set.
pub fn run_matching(
    train_sets: &[(String, Vec<SampledEcho>)],
    probe_sets: &[(String, Vec<SampledEcho>)],
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<MatchReport> {
    if train_sets.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut db = TargetDatabase::new();
    for (i, (name, echoes)) in train_sets.iter().enumerate() {
        let img = train_target(name, echoes, cfg, derive_seed(seed, i as u64))?;
        db.append(img)?;
    }
    let mut outcomes = Vec::with_capacity(probe_sets.len());
    for (label, echoes) in probe_sets {
        let res = identify(echoes, &db, cfg.subset_size)?;
        outcomes.push((label.clone(), res));
    }
    Ok(MatchReport {
        trained: train_sets.iter().map(|(n, _)| n.clone()).collect(),
        outcomes,
    })
}
