//! Shared helpers for integration tests: brute-force spectral oracles that
//! deliberately avoid the library's FFT path.
#![allow(dead_code)]

use biosonar::{EchoSpec, SampledEcho};

/// O(L^2) discrete-transform power density of `samples` zero-padded to
/// `transform_length`. Same conventions as the library: unnormalized forward
/// transform, squared magnitude.
pub fn naive_psd(samples: &[f64], transform_length: usize) -> Vec<f64> {
    let l = transform_length;
    let mut density = vec![0.0; l];
    for (k, d) in density.iter_mut().enumerate() {
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, &x) in samples.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * (k as f64) * (n as f64) / l as f64;
            re += x * phase.cos();
            im += x * phase.sin();
        }
        *d = re * re + im * im;
    }
    density
}

/// O(L^2) inverse-transform of the bounded log spectrum, returning the real
/// part and the largest absolute imaginary residue. Same conventions as the
/// library: ln(density/total_band_power + 1), inverse transform scaled by 1/L.
pub fn naive_cepstrum(density: &[f64], total_band_power: f64) -> (Vec<f64>, f64) {
    let l = density.len();
    let logspec: Vec<f64> = density
        .iter()
        .map(|&d| (d / total_band_power + 1.0).ln())
        .collect();
    let mut values = vec![0.0; l];
    let mut worst_imag = 0.0f64;
    for (k, v) in values.iter_mut().enumerate() {
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, &s) in logspec.iter().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * (k as f64) * (n as f64) / l as f64;
            re += s * phase.cos();
            im += s * phase.sin();
        }
        *v = re / l as f64;
        worst_imag = worst_imag.max((im / l as f64).abs());
    }
    (values, worst_imag)
}

/// Deterministic pseudo-random sample vector for oracle comparisons.
pub fn random_samples(len: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Noise-free unjittered two-highlight echo.
pub fn clean_two_highlight(amplitude: f64, delay_us: f64) -> SampledEcho {
    let spec = EchoSpec::two_highlight(amplitude, delay_us, 0).with_jitter(0.0);
    biosonar::synth_two_highlight(&spec).unwrap()
}
