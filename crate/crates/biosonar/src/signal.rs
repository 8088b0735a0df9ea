//! Sampled-echo representation, analysis windowing, power spectral density,
//! and cepstrum.
//!
//! Every feature downstream is computed from a single 200 us analysis window,
//! the critical interval of time within which overlapping reflections merge
//! into one image. Inside that window the power spectrum is the sole source
//! of information: phase and polarity are discarded by construction.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::Error;
use crate::Result;

/// Fixed constants of the analysis band and window.
pub struct BandConstants;

impl BandConstants {
    /// Lower edge of the analysed frequency band, Hz.
    pub const F_LO_HZ: f64 = 30_000.0;
    /// Upper edge of the analysed frequency band, Hz.
    pub const F_HI_HZ: f64 = 190_000.0;
    /// Length of the analysis window (critical interval of time), microseconds.
    pub const CIT_US: f64 = 200.0;
    /// Number of coarse spectral bands; each spans exactly 10 kHz.
    pub const MAPS_BINS: usize = 16;
    /// Number of fine-structure quefrency bands.
    pub const MIPS_BINS: usize = 19;
    /// Lower edge of the quefrency range, microseconds.
    pub const TAU_LO_US: f64 = 75.0;
    /// Upper edge of the quefrency range, microseconds.
    pub const TAU_HI_US: f64 = 200.0;
}

/// A digitized echo waveform on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledEcho {
    /// Amplitude samples, arbitrary linear units.
    pub samples: Vec<f64>,
    /// Time step between samples, microseconds.
    pub sample_interval_us: f64,
    /// Optional name carried through windowing and serialization.
    pub label: Option<String>,
}

impl SampledEcho {
    /// Validating constructor. Requires at least two finite samples and a
    /// positive finite sample interval.
    pub fn new(samples: Vec<f64>, sample_interval_us: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidEcho(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_interval_us > 0.0) || !sample_interval_us.is_finite() {
            return Err(Error::InvalidEcho(format!(
                "sample interval must be positive and finite, got {sample_interval_us}"
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidEcho("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_interval_us,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total spanned time, microseconds.
    pub fn duration_us(&self) -> f64 {
        self.samples.len() as f64 * self.sample_interval_us
    }

    pub fn is_all_zero(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }

    /// Sum of squared samples (discrete energy, no time scaling).
    pub fn sum_squares(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Two-sided power spectral density of a windowed echo.
///
/// `density[k]` is the squared DFT magnitude at frequency `k * freq_resolution_hz`;
/// indices above the Nyquist bin hold the mirror (negative-frequency) half,
/// which band integrals never touch because `band_hi_hz` stays at or below
/// Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub density: Vec<f64>,
    pub freq_resolution_hz: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
}

impl PowerSpectrum {
    /// Rectangle-rule integral of the density over `[lo_hz, hi_hz)`.
    ///
    /// A bin at frequency `k * freq_resolution_hz` belongs to the band when
    /// `lo_hz <= k * freq_resolution_hz < hi_hz` (bin-center membership).
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let df = self.freq_resolution_hz;
        let mut acc = 0.0;
        for (k, &d) in self.density.iter().enumerate() {
            let f = k as f64 * df;
            if f >= lo_hz && f < hi_hz {
                acc += d;
            }
        }
        acc * df
    }

    /// Band power over the full analysis band `[band_lo_hz, band_hi_hz)`.
    pub fn total_band_power(&self) -> f64 {
        self.band_power(self.band_lo_hz, self.band_hi_hz)
    }
}

/// Cepstrum of a windowed echo: real part of the inverse DFT of the
/// log-normalized power spectrum. `values[q]` sits at quefrency
/// `q * quefrency_resolution_us`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cepstrum {
    pub values: Vec<f64>,
    pub quefrency_resolution_us: f64,
}

thread_local! {
    static FFT_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn run_fft(buf: &mut [Complex64], forward: bool) {
    FFT_PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let fft = if forward {
            planner.plan_fft_forward(buf.len())
        } else {
            planner.plan_fft_inverse(buf.len())
        };
        fft.process(buf);
    });
}

/// Restrict an echo to the 200 us analysis window starting at `start_us`,
/// zero-padding on the right if the echo runs out early. The sample grid is
/// preserved; the window begins at the first sample at or after `start_us`.
pub fn window_to_cit(echo: &SampledEcho, start_us: f64) -> Result<SampledEcho> {
    if !(start_us >= 0.0) {
        return Err(Error::InvalidEcho(format!(
            "window start must be >= 0, got {start_us}"
        )));
    }
    let dt = echo.sample_interval_us;
    let n_out = (BandConstants::CIT_US / dt).round() as usize;
    if n_out < 2 {
        return Err(Error::InvalidEcho(format!(
            "sample interval {dt} us too coarse for a {} us window",
            BandConstants::CIT_US
        )));
    }
    let i0 = (start_us / dt).ceil() as usize;
    if i0 >= echo.samples.len() {
        return Err(Error::EmptyWindow {
            start_us,
            end_us: start_us + BandConstants::CIT_US,
        });
    }
    let end = (i0 + n_out).min(echo.samples.len());
    let mut samples = echo.samples[i0..end].to_vec();
    samples.resize(n_out, 0.0);
    Ok(SampledEcho {
        samples,
        sample_interval_us: dt,
        label: echo.label.clone(),
    })
}

/// Transform length for feature extraction: the next power of two at or above
/// `max(1024, signal_len)`, stretched on coarser grids so the frequency
/// resolution stays at or below 1 kHz (which also keeps the quefrency axis
/// covering the full 75..200 us range). On the default 1 us grid this is
/// exactly the next power of two >= max(1024, signal_len).
pub fn default_transform_length(signal_len: usize, sample_interval_us: f64) -> usize {
    let min_for_resolution = (1000.0 / sample_interval_us).ceil() as usize;
    signal_len
        .max(1024)
        .max(min_for_resolution)
        .next_power_of_two()
}

/// Power spectral density of an echo, zero-padded to `transform_length`.
///
/// The density covers the full two-sided spectrum; its frequency resolution
/// is `1e6 / (transform_length * sample_interval_us)` Hz. The sampling rate
/// must place Nyquist at or above the 190 kHz band edge.
pub fn compute_psd(echo: &SampledEcho, transform_length: usize) -> Result<PowerSpectrum> {
    if transform_length < echo.samples.len() {
        return Err(Error::InvalidSpec(format!(
            "transform length {transform_length} shorter than signal ({} samples)",
            echo.samples.len()
        )));
    }
    let nyquist_hz = 0.5e6 / echo.sample_interval_us;
    if nyquist_hz < BandConstants::F_HI_HZ {
        return Err(Error::InsufficientBandwidth {
            nyquist_hz,
            required_hz: BandConstants::F_HI_HZ,
        });
    }
    if echo.is_all_zero() {
        return Err(Error::DegenerateSignal("all samples are zero".into()));
    }
    let mut buf: Vec<Complex64> = echo
        .samples
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .collect();
    buf.resize(transform_length, Complex64::new(0.0, 0.0));
    run_fft(&mut buf, true);
    let density = buf.iter().map(|c| c.norm_sqr()).collect();
    Ok(PowerSpectrum {
        density,
        freq_resolution_hz: 1e6 / (transform_length as f64 * echo.sample_interval_us),
        band_lo_hz: BandConstants::F_LO_HZ,
        band_hi_hz: BandConstants::F_HI_HZ,
    })
}

/// Cepstrum: real part of the inverse DFT of `ln(density / total_band_power + 1)`
/// taken over the full symmetric spectrum, so the result is real up to
/// rounding. The `+ 1` bounds the logarithm at zero-density bins.
///
/// `total_band_power` is the 30..190 kHz band integral of the same spectrum
/// (normally `psd.total_band_power()`); normalizing by it makes the cepstrum
/// invariant to amplitude scaling of the echo.
pub fn compute_cepstrum(psd: &PowerSpectrum, total_band_power: f64) -> Result<Cepstrum> {
    if !(total_band_power > 0.0) || !total_band_power.is_finite() {
        return Err(Error::DegenerateSignal(format!(
            "total band power must be positive and finite, got {total_band_power}"
        )));
    }
    let len = psd.density.len();
    let quefrency_resolution_us = 1e6 / (len as f64 * psd.freq_resolution_hz);
    if (len as f64 - 1.0) * quefrency_resolution_us < BandConstants::TAU_HI_US {
        return Err(Error::InvalidSpec(format!(
            "spectrum of {len} bins covers quefrencies only up to {:.1} us, need {}",
            (len as f64 - 1.0) * quefrency_resolution_us,
            BandConstants::TAU_HI_US
        )));
    }
    let mut buf: Vec<Complex64> = psd
        .density
        .iter()
        .map(|&d| Complex64::new((d / total_band_power + 1.0).ln(), 0.0))
        .collect();
    run_fft(&mut buf, false);
    let scale = 1.0 / len as f64;
    let values = buf.iter().map(|c| c.re * scale).collect();
    Ok(Cepstrum {
        values,
        quefrency_resolution_us,
    })
}
