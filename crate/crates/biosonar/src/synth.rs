//! Synthetic multipath echoes: a decaying-sine base highlight plus one or two
//! delayed, scaled copies, with randomized delay and calibrated white noise.
//!
//! Highlights are evaluated analytically at real-valued time arguments, so
//! fractional-microsecond delays are exact even though the output is sampled
//! on a fixed grid. All randomness is seeded; an `EchoSpec` plus its seed
//! fully determines the waveform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::seed::derive_seed;
use crate::signal::{window_to_cit, BandConstants, SampledEcho};
use crate::Result;

/// Base highlight waveform parameters: exp(-decay t) sin(omega t) for t >= 0,
/// t in microseconds. The defaults put the carrier near 139 kHz, inside the
/// 30..190 kHz analysis band, with an amplitude e-folding time of 10 us.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighlightParams {
    pub decay_per_us: f64,
    pub omega_rad_per_us: f64,
    /// Length of the synthesized echo, microseconds.
    pub duration_us: f64,
}

impl Default for HighlightParams {
    fn default() -> Self {
        Self {
            decay_per_us: 0.1,
            omega_rad_per_us: 0.875,
            duration_us: BandConstants::CIT_US,
        }
    }
}

/// Delay layout of the scaled highlight copies, microseconds after the first
/// highlight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HighlightDelays {
    /// One delayed copy at the given center delay.
    Single(f64),
    /// Two delayed copies. Jitter shifts the first delay; the spacing
    /// between the two stays fixed, so the pair's internal structure
    /// survives randomization.
    Pair(f64, f64),
}

/// White-noise calibration convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Signal-to-noise ratio in dB, energies taken over the 200 us analysis
    /// window. `+inf` means no noise.
    SnrOverWindow(f64),
    /// Noise RMS relative to the echo's peak absolute sample, in dB
    /// (e.g. -40 gives RMS = peak / 100). `-inf` means no noise.
    RelativeToFirstHighlightPeak(f64),
}

/// Full recipe for one synthetic echo.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSpec {
    /// Amplitude coefficient of the delayed highlight copies.
    pub amplitude: f64,
    pub delays: HighlightDelays,
    /// Half-width of delay randomization as a fraction of the center delay,
    /// in [0, 0.5]. The realized delay stays within center * (1 +- fraction).
    pub jitter_fraction: f64,
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
    pub highlight: HighlightParams,
    pub sample_interval_us: f64,
}

impl EchoSpec {
    /// Two-highlight echo with the default jitter (20%), no noise, 1 us grid.
    pub fn two_highlight(amplitude: f64, delay_us: f64, seed: u64) -> Self {
        Self {
            amplitude,
            delays: HighlightDelays::Single(delay_us),
            jitter_fraction: 0.2,
            noise: None,
            seed,
            highlight: HighlightParams::default(),
            sample_interval_us: 1.0,
        }
    }

    /// Three-component echo (first highlight plus a delayed pair) with the
    /// default jitter, no noise, 1 us grid.
    pub fn three_component(amplitude: f64, d1_us: f64, d2_us: f64, seed: u64) -> Self {
        Self {
            amplitude,
            delays: HighlightDelays::Pair(d1_us, d2_us),
            jitter_fraction: 0.2,
            noise: None,
            seed,
            highlight: HighlightParams::default(),
            sample_interval_us: 1.0,
        }
    }

    pub fn with_jitter(mut self, fraction: f64) -> Self {
        self.jitter_fraction = fraction;
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        let p = &self.highlight;
        if !(p.decay_per_us > 0.0) || !(p.omega_rad_per_us > 0.0) || !(p.duration_us > 0.0) {
            return Err(Error::InvalidSpec(
                "highlight decay, frequency, and duration must be positive".into(),
            ));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidSpec("amplitude must be finite".into()));
        }
        if !(0.0..=0.5).contains(&self.jitter_fraction) {
            return Err(Error::InvalidSpec(format!(
                "jitter fraction must lie in [0, 0.5], got {}",
                self.jitter_fraction
            )));
        }
        if !(self.sample_interval_us > 0.0) {
            return Err(Error::InvalidSpec("sample interval must be positive".into()));
        }
        let check = |d: f64, name: &str| -> Result<()> {
            if !d.is_finite() || d < 0.0 || d >= p.duration_us {
                return Err(Error::InvalidSpec(format!(
                    "{name} delay must lie in [0, {}), got {d}",
                    p.duration_us
                )));
            }
            Ok(())
        };
        match self.delays {
            HighlightDelays::Single(d) => check(d, "highlight")?,
            HighlightDelays::Pair(d1, d2) => {
                check(d1, "first")?;
                check(d2, "second")?;
                if d2 <= d1 {
                    return Err(Error::InvalidSpec(format!(
                        "pair delays must be ordered, got {d1} >= {d2}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Base highlight value at time `t_us` (microseconds): zero before onset,
/// decaying sine after.
pub fn highlight(t_us: f64, params: &HighlightParams) -> f64 {
    if t_us < 0.0 {
        0.0
    } else {
        (-params.decay_per_us * t_us).exp() * (params.omega_rad_per_us * t_us).sin()
    }
}

/// Draw a randomized delay: truncated normal centered on `center_us` with
/// sigma = fraction * center / 3, hard-truncated at +- fraction * center.
/// One-sigma-in-three truncation keeps the acceptance rate above 99.7%, and
/// the hard bound guarantees every draw lies inside the stated limits.
pub fn jittered_delay<R: Rng + ?Sized>(center_us: f64, fraction: f64, rng: &mut R) -> f64 {
    let range = fraction * center_us;
    if range == 0.0 {
        return center_us;
    }
    let normal = Normal::new(0.0, range / 3.0).expect("finite sigma");
    loop {
        let dev = normal.sample(rng);
        if dev.abs() <= range {
            return center_us + dev;
        }
    }
}

fn synth_one(spec: &EchoSpec) -> Result<SampledEcho> {
    spec.validate()?;
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0));
    let delays = match spec.delays {
        HighlightDelays::Single(d) => {
            vec![jittered_delay(d, spec.jitter_fraction, &mut jitter_rng)]
        }
        HighlightDelays::Pair(d1, d2) => {
            let j1 = jittered_delay(d1, spec.jitter_fraction, &mut jitter_rng);
            vec![j1, j1 + (d2 - d1)]
        }
    };
    let dt = spec.sample_interval_us;
    let n = (spec.highlight.duration_us / dt).round() as usize;
    if n < 2 {
        return Err(Error::InvalidSpec(
            "duration shorter than two samples".into(),
        ));
    }
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let mut x = highlight(t, &spec.highlight);
        for &d in &delays {
            x += spec.amplitude * highlight(t - d, &spec.highlight);
        }
        samples.push(x);
    }
    let echo = SampledEcho {
        samples,
        sample_interval_us: dt,
        label: None,
    };
    match spec.noise {
        Some(noise) => add_white_noise(&echo, noise, derive_seed(spec.seed, 1)),
        None => Ok(echo),
    }
}

/// Echo with one delayed highlight copy: base(t) + a * base(t - d), with d
/// drawn from the jitter law around the spec's center delay.
pub fn synth_two_highlight(spec: &EchoSpec) -> Result<SampledEcho> {
    match spec.delays {
        HighlightDelays::Single(_) => synth_one(spec),
        HighlightDelays::Pair(..) => Err(Error::InvalidSpec(
            "two-highlight synthesis needs a single delay".into(),
        )),
    }
}

/// Echo with a delayed pair of highlight copies. Jitter moves the pair as a
/// unit: the first delay is randomized, the spacing is preserved.
pub fn synth_three_component(spec: &EchoSpec) -> Result<SampledEcho> {
    match spec.delays {
        HighlightDelays::Pair(..) => synth_one(spec),
        HighlightDelays::Single(_) => Err(Error::InvalidSpec(
            "three-component synthesis needs a delay pair".into(),
        )),
    }
}

/// Generate `count` echoes from one spec. Echo `i` uses the derived seed
/// stream `i`, so any subrange can be regenerated independently.
pub fn synth_series(spec: &EchoSpec, count: usize) -> Result<Vec<SampledEcho>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let per_echo = EchoSpec {
            seed: derive_seed(spec.seed, i as u64),
            ..spec.clone()
        };
        out.push(synth_one(&per_echo)?);
    }
    Ok(out)
}

/// Add seeded Gaussian white noise to every sample.
///
/// `SnrOverWindow(db)`: sigma is set so the expected noise energy over the
/// 200 us analysis window sits `db` decibels below the echo's energy in that
/// window. `RelativeToFirstHighlightPeak(db)`: sigma = peak absolute sample
/// times 10^(db/20); with amplitude coefficients at or below 1 the peak
/// sample is the first highlight's peak.
pub fn add_white_noise(echo: &SampledEcho, noise: NoiseSpec, seed: u64) -> Result<SampledEcho> {
    let sigma = match noise {
        NoiseSpec::SnrOverWindow(db) => {
            if db == f64::INFINITY {
                return Ok(echo.clone());
            }
            if !db.is_finite() {
                return Err(Error::InvalidLevel(format!(
                    "signal-to-noise ratio must be finite or +inf, got {db}"
                )));
            }
            let windowed = window_to_cit(echo, 0.0)?;
            let signal_energy = windowed.sum_squares();
            if signal_energy == 0.0 {
                return Err(Error::DegenerateSignal(
                    "zero-energy window cannot define a signal-to-noise ratio".into(),
                ));
            }
            let n_noisy = echo.samples.len().min(windowed.samples.len());
            (signal_energy / (n_noisy as f64 * 10f64.powf(db / 10.0))).sqrt()
        }
        NoiseSpec::RelativeToFirstHighlightPeak(db) => {
            if db == f64::NEG_INFINITY {
                return Ok(echo.clone());
            }
            if !db.is_finite() {
                return Err(Error::InvalidLevel(format!(
                    "peak-relative noise level must be finite or -inf, got {db}"
                )));
            }
            let peak = echo.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            peak * 10f64.powf(db / 20.0)
        }
    };
    if sigma == 0.0 {
        return Ok(echo.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidLevel(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = echo
        .samples
        .iter()
        .map(|&s| s + normal.sample(&mut rng))
        .collect();
    Ok(SampledEcho {
        samples,
        sample_interval_us: echo.sample_interval_us,
        label: echo.label.clone(),
    })
}
