//! Biosonar echo-image modeling: hierarchical power-spectrum features,
//! target training and identification, synthetic multipath echoes, and
//! threshold-sweep experiment harnesses.
//!
//! An echo is reduced to a string of three hierarchically ordered features:
//!
//! * **MaPS**, macrostructure of the power spectrum: 16 normalized 10 kHz
//!   band energies over the 30-190 kHz perception band (senior feature);
//! * **MiPS**, microstructure of the power spectrum: 19 weighted cepstral
//!   band integrals over quefrencies 75-200 us (middle feature);
//! * **P**, total band power over 30-190 kHz (minor feature).
//!
//! Targets are trained into images (feature standards plus confidence radii)
//! and probes are identified by comparing features senior to minor,
//! stopping at the first feature that decides.

pub mod error;
pub mod features;
pub mod harness;
pub mod io;
pub mod seed;
pub mod signal;
pub mod synth;
pub mod target;

pub use error::Error;
pub use harness::{
    default_a_grid, run_dlt, run_iso, run_matching, DltRun, IsoResult, IsoRun, MatchReport,
    ThresholdPoint, ThresholdValue,
};
pub use features::{
    average_features, extract_maps, extract_mips, extract_power, extract_triple, FeatureTriple,
    MaPsVector, MiPsVector, PowerValue, QuefrencyGrid,
};
pub use signal::{
    compute_cepstrum, compute_psd, default_transform_length, window_to_cit, BandConstants,
    Cepstrum, PowerSpectrum, SampledEcho,
};
pub use synth::{
    add_white_noise, highlight, synth_series, synth_three_component, synth_two_highlight,
    EchoSpec, HighlightDelays, HighlightParams, NoiseSpec,
};
pub use target::{
    compare_images, discriminate_sets, distinct_at, feature_distance_maps, feature_distance_mips,
    feature_distance_p, identify, train_target, Discrimination, FeatureLevel,
    IdentificationResult, TargetDatabase, TargetImage, TrainingConfig,
};

/// Convenient result alias for fallible library operations.
pub type Result<T> = std::result::Result<T, Error>;
