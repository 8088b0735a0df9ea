//! Target images, training, hierarchical identification, and set
//! discrimination.
//!
//! A target's image is its three feature standards plus a confidence radius
//! per feature. Comparison always walks the hierarchy senior to minor:
//! coarse spectral shape first, fine structure second, total power last, and
//! stops at the first feature that settles the question. Levels below the
//! decisive one are never consulted.

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::features::{
    average_features, extract_triple, FeatureTriple, MaPsVector, MiPsVector, PowerValue,
};
use crate::seed::derive_seed;
use crate::signal::SampledEcho;
use crate::Result;

/// Training parameters: how many echoes form the standard, and how many
/// random subsets of what size estimate the dispersion around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Echoes averaged into the feature standard.
    pub standard_count: usize,
    /// Random subsets used to estimate dispersion.
    pub subset_count: usize,
    /// Echoes per subset; also the probe series length this image expects.
    pub subset_size: usize,
    /// Confidence radius = mean subset distance + this many standard
    /// deviations.
    pub radius_sigma: f64,
    /// Lower bound on every radius; keeps noise-free training from
    /// producing zero-width intervals.
    pub radius_floor: f64,
}

impl TrainingConfig {
    pub fn new(standard_count: usize, subset_count: usize, subset_size: usize) -> Self {
        Self {
            standard_count,
            subset_count,
            subset_size,
            radius_sigma: 3.0,
            radius_floor: 1e-12,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.standard_count < 2 || self.subset_count < 2 || self.subset_size < 1 {
            return Err(Error::InvalidSpec(format!(
                "training needs standard_count >= 2, subset_count >= 2, subset_size >= 1; \
                 got {}, {}, {}",
                self.standard_count, self.subset_count, self.subset_size
            )));
        }
        if self.subset_size > self.standard_count {
            return Err(Error::InvalidSpec(format!(
                "subset_size {} exceeds standard_count {}",
                self.subset_size, self.standard_count
            )));
        }
        if !(self.radius_sigma >= 0.0) || !(self.radius_floor > 0.0) {
            return Err(Error::InvalidSpec(
                "radius_sigma must be >= 0 and radius_floor > 0".into(),
            ));
        }
        Ok(())
    }
}

/// The three feature levels in hierarchy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureLevel {
    Maps,
    Mips,
    Power,
}

impl FeatureLevel {
    pub const HIERARCHY: [FeatureLevel; 3] =
        [FeatureLevel::Maps, FeatureLevel::Mips, FeatureLevel::Power];
}

impl std::fmt::Display for FeatureLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureLevel::Maps => "MaPS",
            FeatureLevel::Mips => "MiPS",
            FeatureLevel::Power => "P",
        })
    }
}

/// One trained target: feature standards plus one confidence radius per
/// feature level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetImage {
    pub name: String,
    pub standard: FeatureTriple,
    pub radius_maps: f64,
    pub radius_mips: f64,
    pub radius_p: f64,
    pub config_used: TrainingConfig,
}

impl TargetImage {
    pub fn radius(&self, level: FeatureLevel) -> f64 {
        match level {
            FeatureLevel::Maps => self.radius_maps,
            FeatureLevel::Mips => self.radius_mips,
            FeatureLevel::Power => self.radius_p,
        }
    }
}

/// Append-only collection of target images with unique names. Adding an
/// image never touches existing entries; targets are trained independently
/// of one another.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetDatabase {
    images: Vec<TargetImage>,
}

impl TargetDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_images(images: Vec<TargetImage>) -> Result<Self> {
        let mut db = Self::new();
        for img in images {
            db.append(img)?;
        }
        Ok(db)
    }

    pub fn append(&mut self, image: TargetImage) -> Result<()> {
        if self.images.iter().any(|i| i.name == image.name) {
            return Err(Error::DuplicateTarget(image.name));
        }
        self.images.push(image);
        Ok(())
    }

    pub fn images(&self) -> &[TargetImage] {
        &self.images
    }

    pub fn get(&self, name: &str) -> Option<&TargetImage> {
        self.images.iter().find(|i| i.name == name)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Outcome of identifying a probe series against a database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdentificationResult {
    /// No stored image accepted the probe at some level.
    Unknown,
    /// Exactly one image survived; `level` is the deepest feature consulted.
    Identified { name: String, level: FeatureLevel },
    /// Several images still accepted the probe after the last feature.
    Indistinguishable { names: Vec<String> },
}

/// Outcome of comparing two trained images feature by feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discrimination {
    /// The standards at this level sit farther apart than the sum of the two
    /// confidence radii.
    Distinct(FeatureLevel),
    Indistinguishable,
}

pub fn feature_distance_maps(a: &MaPsVector, b: &MaPsVector) -> f64 {
    euclidean(&a.0, &b.0)
}

pub fn feature_distance_mips(a: &MiPsVector, b: &MiPsVector) -> f64 {
    euclidean(&a.0, &b.0)
}

/// Scale-robust distance between two powers: |ln(a/b)|. Symmetric, zero iff
/// equal, independent of measurement units.
pub fn feature_distance_p(a: &PowerValue, b: &PowerValue) -> Result<f64> {
    if !(a.0 > 0.0) || !(b.0 > 0.0) {
        return Err(Error::NonPositivePower(a.0, b.0));
    }
    Ok((a.0 / b.0).ln().abs())
}

fn euclidean<const K: usize>(a: &[f64; K], b: &[f64; K]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train a target image from a pool of echoes.
///
/// The standard averages `standard_count` echoes drawn from the pool without
/// replacement. Each of `subset_count` further draws takes `subset_size`
/// echoes (without replacement within a draw, pools may overlap across
/// draws), averages them, and measures its distance to the standard per
/// feature; the confidence radius is the mean of those distances plus
/// `radius_sigma` standard deviations, floored at `radius_floor`. Fully
/// deterministic given the seed.
pub fn train_target(
    name: &str,
    echoes: &[SampledEcho],
    cfg: &TrainingConfig,
    rng_seed: u64,
) -> Result<TargetImage> {
    cfg.validate()?;
    if echoes.len() < cfg.standard_count {
        return Err(Error::InsufficientEchoes {
            needed: cfg.standard_count,
            got: echoes.len(),
        });
    }
    let triples: Vec<FeatureTriple> = echoes.iter().map(extract_triple).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let standard_idx = rand::seq::index::sample(&mut rng, triples.len(), cfg.standard_count);
    let standard_triples: Vec<FeatureTriple> =
        standard_idx.iter().map(|i| triples[i]).collect();
    let standard = average_features(&standard_triples)?;

    let mut d_maps = Vec::with_capacity(cfg.subset_count);
    let mut d_mips = Vec::with_capacity(cfg.subset_count);
    let mut d_p = Vec::with_capacity(cfg.subset_count);
    for _ in 0..cfg.subset_count {
        let idx = rand::seq::index::sample(&mut rng, triples.len(), cfg.subset_size);
        let subset: Vec<FeatureTriple> = idx.iter().map(|i| triples[i]).collect();
        let avg = average_features(&subset)?;
        d_maps.push(feature_distance_maps(&avg.maps, &standard.maps));
        d_mips.push(feature_distance_mips(&avg.mips, &standard.mips));
        d_p.push(feature_distance_p(&avg.power, &standard.power)?);
    }

    let radius = |ds: &[f64]| {
        let (mean, std) = mean_and_std(ds);
        (mean + cfg.radius_sigma * std).max(cfg.radius_floor)
    };
    Ok(TargetImage {
        name: name.to_string(),
        standard,
        radius_maps: radius(&d_maps),
        radius_mips: radius(&d_mips),
        radius_p: radius(&d_p),
        config_used: *cfg,
    })
}

/// Identify a probe series against the database.
///
/// The probe image averages the first `n` echoes. Walking the hierarchy, at
/// each level only images whose confidence radius covers the probe's
/// distance stay candidates: none left means the target is unknown, exactly
/// one identifies it at that level, several defer to the next feature. If
/// candidates remain after the last level they are indistinguishable.
pub fn identify(
    probe_echoes: &[SampledEcho],
    db: &TargetDatabase,
    n: usize,
) -> Result<IdentificationResult> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if n < 1 {
        return Err(Error::InvalidSpec("probe size must be at least 1".into()));
    }
    if probe_echoes.len() < n {
        return Err(Error::InsufficientEchoes {
            needed: n,
            got: probe_echoes.len(),
        });
    }
    let triples: Vec<FeatureTriple> = probe_echoes[..n]
        .iter()
        .map(extract_triple)
        .collect::<Result<_>>()?;
    let probe = average_features(&triples)?;

    let mut candidates: Vec<&TargetImage> = db.images().iter().collect();
    for level in FeatureLevel::HIERARCHY {
        let mut kept = Vec::with_capacity(candidates.len());
        for img in &candidates {
            let within = match level {
                FeatureLevel::Maps => {
                    feature_distance_maps(&probe.maps, &img.standard.maps) <= img.radius_maps
                }
                FeatureLevel::Mips => {
                    feature_distance_mips(&probe.mips, &img.standard.mips) <= img.radius_mips
                }
                FeatureLevel::Power => {
                    feature_distance_p(&probe.power, &img.standard.power)? <= img.radius_p
                }
            };
            if within {
                kept.push(*img);
            }
        }
        match kept.len() {
            0 => return Ok(IdentificationResult::Unknown),
            1 => {
                return Ok(IdentificationResult::Identified {
                    name: kept[0].name.clone(),
                    level,
                })
            }
            _ => candidates = kept,
        }
    }
    Ok(IdentificationResult::Indistinguishable {
        names: candidates.iter().map(|i| i.name.clone()).collect(),
    })
}

/// Whether two images are distinguishable by one feature alone: true when
/// the standards' distance at that level exceeds the sum of the two
/// confidence radii.
pub fn distinct_at(a: &TargetImage, b: &TargetImage, level: FeatureLevel) -> Result<bool> {
    let dist = match level {
        FeatureLevel::Maps => feature_distance_maps(&a.standard.maps, &b.standard.maps),
        FeatureLevel::Mips => feature_distance_mips(&a.standard.mips, &b.standard.mips),
        FeatureLevel::Power => feature_distance_p(&a.standard.power, &b.standard.power)?,
    };
    Ok(dist > a.radius(level) + b.radius(level))
}

/// Compare two trained images feature by feature in hierarchy order. The
/// images are distinct at the first level that separates them; distances at
/// lower levels are then never computed.
pub fn compare_images(a: &TargetImage, b: &TargetImage) -> Result<Discrimination> {
    for level in FeatureLevel::HIERARCHY {
        if distinct_at(a, b, level)? {
            return Ok(Discrimination::Distinct(level));
        }
    }
    Ok(Discrimination::Indistinguishable)
}

/// Train an image on each echo series and compare them. Two independent
/// seed streams are derived so the series' subset draws are uncorrelated.
pub fn discriminate_sets(
    series_a: &[SampledEcho],
    series_b: &[SampledEcho],
    cfg: &TrainingConfig,
    rng_seed: u64,
) -> Result<Discrimination> {
    let img_a = train_target("set-a", series_a, cfg, derive_seed(rng_seed, 0))?;
    let img_b = train_target("set-b", series_b, cfg, derive_seed(rng_seed, 1))?;
    compare_images(&img_a, &img_b)
}
