//! The three hierarchical echo features and series averaging.
//!
//! Senior to minor: the coarse spectral shape (16 normalized 10 kHz band
//! energies), the fine spectral structure (19 weighted cepstral band
//! integrals over quefrencies 75..200 us), and the total band power. The
//! first two are invariant to amplitude scale and polarity; the last is the
//! only feature that sees overall echo energy.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::signal::{
    compute_cepstrum, compute_psd, default_transform_length, window_to_cit, BandConstants,
    Cepstrum, PowerSpectrum, SampledEcho,
};
use crate::Result;

/// Coarse spectral shape: 16 normalized band energies over 30..190 kHz.
/// Components are non-negative and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaPsVector(pub [f64; 16]);

/// Fine spectral structure: 19 weighted cepstral band integrals over
/// quefrencies 75..200 us. Dimensionless signed scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiPsVector(pub [f64; 19]);

/// Total band-limited power over 30..190 kHz. Non-negative; scales with the
/// square of echo amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerValue(pub f64);

/// One echo's image: the three features in hierarchy order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTriple {
    pub maps: MaPsVector,
    pub mips: MiPsVector,
    pub power: PowerValue,
}

/// Quefrency band edges: 20 values from 75 to 200 us in geometric
/// progression, step ratio (200/75)^(1/19) ~ 1.0530. The constant ~5.3%
/// step realizes a relative difference threshold for time delays while
/// hitting both range endpoints exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct QuefrencyGrid {
    pub edges: [f64; 20],
}

impl QuefrencyGrid {
    pub fn standard() -> Self {
        let lo = BandConstants::TAU_LO_US;
        let hi = BandConstants::TAU_HI_US;
        let mut edges = [0.0; 20];
        for (j, e) in edges.iter_mut().enumerate() {
            *e = lo * (hi / lo).powf(j as f64 / 19.0);
        }
        edges[0] = lo;
        edges[19] = hi;
        Self { edges }
    }

    /// Index of the band containing quefrency `t_us`, or None outside
    /// [75, 200]. Bands are half-open on the right except the last, which
    /// closes at 200 us.
    pub fn band_of(&self, t_us: f64) -> Option<usize> {
        if t_us < self.edges[0] || t_us > self.edges[19] {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= t_us);
        Some((idx - 1).min(18))
    }
}

impl Default for QuefrencyGrid {
    fn default() -> Self {
        Self::standard()
    }
}

/// Per-band weight: 1 / (1 + 0.05 (j - 1)) for 1-based band j.
fn mips_weight(band: usize) -> f64 {
    1.0 / (1.0 + 0.05 * band as f64)
}

/// Normalized band energies: each 10 kHz sub-band's power divided by the
/// full 30..190 kHz band power. The shared denominator makes the components
/// sum to 1 and cancels amplitude scale.
pub fn extract_maps(psd: &PowerSpectrum) -> Result<MaPsVector> {
    let lo = BandConstants::F_LO_HZ;
    let hi = BandConstants::F_HI_HZ;
    let width = (hi - lo) / BandConstants::MAPS_BINS as f64;
    let df = psd.freq_resolution_hz;
    let mut numer = [0.0f64; 16];
    for (k, &d) in psd.density.iter().enumerate() {
        let f = k as f64 * df;
        if f >= lo && f < hi {
            let j = (((f - lo) / width) as usize).min(15);
            numer[j] += d;
        }
    }
    let total: f64 = numer.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSignal(
            "no power inside the 30..190 kHz band".into(),
        ));
    }
    let mut mac = [0.0; 16];
    for (m, n) in mac.iter_mut().zip(&numer) {
        *m = n / total;
    }
    Ok(MaPsVector(mac))
}

/// Weighted cepstral band integrals over the quefrency grid. Rectangle rule
/// on cepstrum bins; a bin at quefrency q belongs to the band whose edges
/// satisfy lower <= q < upper (the last band also takes q = 200 us exactly).
pub fn extract_mips(cepstrum: &Cepstrum, grid: &QuefrencyGrid) -> MiPsVector {
    let dq = cepstrum.quefrency_resolution_us;
    debug_assert!(
        (cepstrum.values.len() as f64 - 1.0) * dq >= BandConstants::TAU_HI_US,
        "cepstrum must cover the full quefrency range"
    );
    let mut sums = [0.0f64; 19];
    for (q, &v) in cepstrum.values.iter().enumerate() {
        let t = q as f64 * dq;
        if let Some(j) = grid.band_of(t) {
            sums[j] += v;
        }
    }
    let mut mic = [0.0; 19];
    for (j, (m, s)) in mic.iter_mut().zip(&sums).enumerate() {
        *m = mips_weight(j) * s * dq;
    }
    MiPsVector(mic)
}

/// Total power over the 30..190 kHz band, not normalized.
pub fn extract_power(psd: &PowerSpectrum) -> PowerValue {
    PowerValue(psd.total_band_power())
}

/// Full single-echo pipeline: window to the 200 us analysis interval from
/// the first sample, transform, and extract all three features.
pub fn extract_triple(echo: &SampledEcho) -> Result<FeatureTriple> {
    let windowed = window_to_cit(echo, 0.0)?;
    let len = default_transform_length(windowed.len(), windowed.sample_interval_us);
    let psd = compute_psd(&windowed, len)?;
    let maps = extract_maps(&psd)?;
    let cepstrum = compute_cepstrum(&psd, psd.total_band_power())?;
    let mips = extract_mips(&cepstrum, &QuefrencyGrid::standard());
    Ok(FeatureTriple {
        maps,
        mips,
        power: extract_power(&psd),
    })
}

/// Componentwise arithmetic mean over a series of feature triples.
/// Averaging happens in feature space, not signal space: echoes with
/// incoherent fine delays would cancel if their waveforms were averaged,
/// while their features average stably.
pub fn average_features(triples: &[FeatureTriple]) -> Result<FeatureTriple> {
    if triples.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = triples.len() as f64;
    let mut maps = [0.0f64; 16];
    let mut mips = [0.0f64; 19];
    let mut power = 0.0f64;
    for t in triples {
        for (acc, v) in maps.iter_mut().zip(&t.maps.0) {
            *acc += v;
        }
        for (acc, v) in mips.iter_mut().zip(&t.mips.0) {
            *acc += v;
        }
        power += t.power.0;
    }
    for v in maps.iter_mut() {
        *v /= n;
    }
    for v in mips.iter_mut() {
        *v /= n;
    }
    Ok(FeatureTriple {
        maps: MaPsVector(maps),
        mips: MiPsVector(mips),
        power: PowerValue(power / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_geometric_and_hits_endpoints() {
        let g = QuefrencyGrid::standard();
        assert_eq!(g.edges[0], 75.0);
        assert_eq!(g.edges[19], 200.0);
        let ratio = (200.0f64 / 75.0).powf(1.0 / 19.0);
        for w in g.edges.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
        // step stays within 0.3 percentage points of a flat 5% rule
        assert!((ratio - 1.05).abs() < 0.003);
    }

    #[test]
    fn band_lookup_covers_range() {
        let g = QuefrencyGrid::standard();
        assert_eq!(g.band_of(74.9), None);
        assert_eq!(g.band_of(75.0), Some(0));
        assert_eq!(g.band_of(200.0), Some(18));
        assert_eq!(g.band_of(200.1), None);
        for j in 0..19 {
            let mid = 0.5 * (g.edges[j] + g.edges[j + 1]);
            assert_eq!(g.band_of(mid), Some(j));
        }
    }

    fn flat_psd(df: f64, bins: usize) -> PowerSpectrum {
        PowerSpectrum {
            density: vec![1.0; bins],
            freq_resolution_hz: df,
            band_lo_hz: BandConstants::F_LO_HZ,
            band_hi_hz: BandConstants::F_HI_HZ,
        }
    }

    #[test]
    fn flat_spectrum_gives_equal_bands() {
        // 500 Hz resolution divides every band edge exactly: 20 bins per band
        let psd = flat_psd(500.0, 401);
        let maps = extract_maps(&psd).unwrap();
        for m in maps.0 {
            assert!((m - 1.0 / 16.0).abs() < 1e-12);
        }
        let sum: f64 = maps.0.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maps_sum_to_one_on_uneven_spectrum() {
        let mut psd = flat_psd(976.5625, 1024);
        for (k, d) in psd.density.iter_mut().enumerate() {
            *d = 1.0 + (k as f64 * 0.013).sin().abs() * 3.0;
        }
        let maps = extract_maps(&psd).unwrap();
        let sum: f64 = maps.0.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(maps.0.iter().all(|&m| (0.0..=1.0).contains(&m)));
    }

    #[test]
    fn out_of_band_power_is_degenerate() {
        let mut psd = flat_psd(976.5625, 1024);
        for (k, d) in psd.density.iter_mut().enumerate() {
            let f = k as f64 * 976.5625;
            *d = if (30_000.0..190_000.0).contains(&f) {
                0.0
            } else {
                1.0
            };
        }
        assert!(matches!(
            extract_maps(&psd),
            Err(Error::DegenerateSignal(_))
        ));
        assert_eq!(extract_power(&psd).0, 0.0);
    }

    #[test]
    fn single_spike_lands_in_one_weighted_band() {
        let mut values = vec![0.0; 1024];
        values[100] = 2.0;
        let cep = Cepstrum {
            values,
            quefrency_resolution_us: 1.0,
        };
        let grid = QuefrencyGrid::standard();
        let mips = extract_mips(&cep, &grid);
        let j = grid.band_of(100.0).unwrap();
        assert_eq!(j, 5);
        let expected = 2.0 / (1.0 + 0.05 * j as f64);
        assert!((mips.0[j] - expected).abs() < 1e-12);
        for (i, v) in mips.0.iter().enumerate() {
            if i != j {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn averaging_identity_and_constancy() {
        let t = FeatureTriple {
            maps: MaPsVector([1.0 / 16.0; 16]),
            mips: MiPsVector([0.25; 19]),
            power: PowerValue(3.5),
        };
        let one = average_features(&[t]).unwrap();
        assert_eq!(one, t);
        let many = average_features(&[t; 7]).unwrap();
        for (a, b) in many.maps.0.iter().zip(&t.maps.0) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((many.power.0 - 3.5).abs() < 1e-15);
    }

    #[test]
    fn empty_series_rejected() {
        assert!(matches!(average_features(&[]), Err(Error::EmptySeries)));
    }
}
