//! Synthetic datasets with ground-truth noise provenance.
//!
//! Every injector returns a new dataset and leaves unselected samples
//! bit-identical. "Randomize" always means a uniform redraw over all `k`
//! classes, so a visited sample can keep its original label; the
//! `randomized` flag marks visits, not changes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seed;

/// Per-sample provenance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseFlags {
    pub randomized: bool,
    pub structured_feature: bool,
}

impl NoiseFlags {
    pub const RANDOMIZED: u8 = 0b01;
    pub const STRUCTURED_FEATURE: u8 = 0b10;

    pub fn to_byte(self) -> u8 {
        (if self.randomized { Self::RANDOMIZED } else { 0 })
            | (if self.structured_feature { Self::STRUCTURED_FEATURE } else { 0 })
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        if b & !(Self::RANDOMIZED | Self::STRUCTURED_FEATURE) != 0 {
            return None;
        }
        Some(Self {
            randomized: b & Self::RANDOMIZED != 0,
            structured_feature: b & Self::STRUCTURED_FEATURE != 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    k: usize,
    features: Matrix,
    labels: Vec<usize>,
    original_labels: Vec<usize>,
    flags: Vec<NoiseFlags>,
    description: String,
}

impl NoisyDataset {
    pub fn from_parts(
        k: usize,
        features: Matrix,
        labels: Vec<usize>,
        original_labels: Vec<usize>,
        flags: Vec<NoiseFlags>,
        description: String,
    ) -> Result<Self> {
        let n = features.rows();
        if k < 2 {
            return Err(Error::InvalidInput(format!("need k >= 2 classes, got {k}")));
        }
        if labels.len() != n || original_labels.len() != n || flags.len() != n {
            return Err(Error::InvalidInput(format!(
                "{n} feature rows but {} labels, {} original labels, {} flags",
                labels.len(),
                original_labels.len(),
                flags.len()
            )));
        }
        if let Some(&bad) = labels.iter().chain(&original_labels).find(|&&c| c >= k) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for k = {k}")));
        }
        for i in 0..n {
            if !flags[i].randomized && labels[i] != original_labels[i] {
                return Err(Error::InvalidInput(format!(
                    "sample {i} has a changed label but no randomized flag"
                )));
            }
        }
        Ok(Self {
            k,
            features,
            labels,
            original_labels,
            flags,
            description,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn original_labels(&self) -> &[usize] {
        &self.original_labels
    }

    pub fn flags(&self) -> &[NoiseFlags] {
        &self.flags
    }

    /// Semicolon-separated record of generator and injections applied.
    pub fn description(&self) -> &str {
        &self.description
    }

    /// Samples whose current label differs from the original.
    pub fn corrupted_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] != self.original_labels[i])
            .collect()
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            k: self.k,
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            original_labels: indices.iter().map(|&i| self.original_labels[i]).collect(),
            flags: indices.iter().map(|&i| self.flags[i]).collect(),
            description: self.description.clone(),
        }
    }

    /// Dataset with the given indices removed. Duplicates and out-of-range
    /// indices are ignored.
    pub fn without(&self, removed: &[usize]) -> Self {
        let mut keep = vec![true; self.len()];
        for &i in removed {
            if let Some(slot) = keep.get_mut(i) {
                *slot = false;
            }
        }
        let kept: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        self.subset(&kept)
    }

    /// Puts the original labels back and clears the `randomized` flags,
    /// keeping feature transforms. Used to build clean-labelled held-out
    /// sets that still carry structured features.
    pub fn with_original_labels(&self) -> Self {
        let mut out = self.clone();
        out.labels.clone_from(&out.original_labels);
        for f in &mut out.flags {
            f.randomized = false;
        }
        out
    }

    fn noted(mut self, note: &str) -> Self {
        if !self.description.is_empty() {
            self.description.push(';');
        }
        self.description.push_str(note);
        self
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// `floor(fraction * n)` distinct indices, sorted ascending.
fn select(n: usize, fraction: f64, rng: &mut impl Rng) -> Vec<usize> {
    let amount = libm::floor(fraction * n as f64) as usize;
    let mut picked = index::sample(rng, n, amount.min(n)).into_vec();
    picked.sort_unstable();
    picked
}

/// `k` unit-covariance Gaussian clusters in `d` dimensions.
///
/// Centers sit on the cross-polytope `+-(separation / sqrt 2) e_i`, so any
/// two are at least `separation` apart; this fits at most `2d` classes.
/// Samples are stored class by class.
pub fn gen_blobs(k: usize, d: usize, n_per_class: usize, separation: f64, seed: u64) -> Result<NoisyDataset> {
    if k < 2 || d < 2 {
        return Err(Error::Config(format!("need k >= 2 and d >= 2, got k = {k}, d = {d}")));
    }
    if k > 2 * d {
        return Err(Error::Config(format!(
            "cannot place {k} separated centers in {d} dimensions (at most {})",
            2 * d
        )));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::Config(format!("separation must be positive, got {separation}")));
    }
    let radius = separation / core::f64::consts::SQRT_2;
    let mut rng = seed::rng(seed);
    let n = k * n_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for class in 0..k {
        let axis = class / 2;
        let sign = if class % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..n_per_class {
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(if j == axis { sign * radius + z } else { z });
            }
            labels.push(class);
        }
    }
    NoisyDataset::from_parts(
        k,
        Matrix::from_vec(n, d, data)?,
        labels.clone(),
        labels,
        vec![NoiseFlags::default(); n],
        format!("blobs(k={k},d={d},n_per_class={n_per_class},separation={separation},seed={seed})"),
    )
}

/// Redraws the labels of a `floor(fraction * n)` subset uniformly.
pub fn inject_uniform(ds: &NoisyDataset, fraction: f64, seed: u64) -> Result<NoisyDataset> {
    check_unit_interval("fraction", fraction)?;
    let mut rng = seed::rng(seed);
    let mut out = ds.clone();
    for i in select(ds.len(), fraction, &mut rng) {
        out.labels[i] = rng.random_range(0..ds.k);
        out.flags[i].randomized = true;
    }
    Ok(out.noted(&format!("uniform(fraction={fraction},seed={seed})")))
}

/// Each sample independently moves to `mapping[label]` with probability
/// `eta`. Flags are set on the samples that moved.
pub fn inject_mapped_flip(ds: &NoisyDataset, eta: f64, mapping: &[usize], seed: u64) -> Result<NoisyDataset> {
    let note = format!("mapped_flip(eta={eta},map={mapping:?},seed={seed})");
    flip(ds, eta, mapping, seed, &note)
}

/// Circular flips `c -> (c + 1) mod k` with probability `eta`.
pub fn inject_class_dependent(ds: &NoisyDataset, eta: f64, seed: u64) -> Result<NoisyDataset> {
    let mapping: Vec<usize> = (0..ds.k).map(|c| (c + 1) % ds.k).collect();
    flip(ds, eta, &mapping, seed, &format!("circular_flip(eta={eta},seed={seed})"))
}

fn flip(ds: &NoisyDataset, eta: f64, mapping: &[usize], seed: u64, note: &str) -> Result<NoisyDataset> {
    check_unit_interval("eta", eta)?;
    if mapping.len() != ds.k || mapping.iter().any(|&c| c >= ds.k) {
        return Err(Error::InvalidInput(format!(
            "flip mapping must send each of {} classes to a class, got {mapping:?}",
            ds.k
        )));
    }
    let mut rng = seed::rng(seed);
    let mut out = ds.clone();
    for i in 0..ds.len() {
        // one draw per sample regardless of eta keeps streams aligned
        let u: f64 = rng.random();
        if u < eta {
            out.labels[i] = mapping[ds.labels[i]];
            out.flags[i].randomized = true;
        }
    }
    Ok(out.noted(note))
}

/// Overwrites feature coordinates `0..width` with `magnitude` on a
/// `floor(fraction * n)` subset and redraws those labels.
pub fn inject_smudge(ds: &NoisyDataset, fraction: f64, magnitude: f64, width: usize, seed: u64) -> Result<NoisyDataset> {
    check_unit_interval("fraction", fraction)?;
    if width > ds.d() {
        return Err(Error::InvalidInput(format!(
            "smudge width {width} exceeds feature dimension {}",
            ds.d()
        )));
    }
    if !magnitude.is_finite() {
        return Err(Error::InvalidInput(format!("smudge magnitude must be finite, got {magnitude}")));
    }
    let mut rng = seed::rng(seed);
    let mut out = ds.clone();
    for i in select(ds.len(), fraction, &mut rng) {
        for x in &mut out.features.row_mut(i)[..width] {
            *x = magnitude;
        }
        out.labels[i] = rng.random_range(0..ds.k);
        out.flags[i] = NoiseFlags {
            randomized: true,
            structured_feature: true,
        };
    }
    Ok(out.noted(&format!(
        "smudge(fraction={fraction},magnitude={magnitude},width={width},seed={seed})"
    )))
}

/// Blends a `floor(fraction * n)` subset towards the dataset mean,
/// `x <- (1 - blend) x + blend * mean`, and redraws those labels.
pub fn inject_degradation(ds: &NoisyDataset, fraction: f64, blend: f64, seed: u64) -> Result<NoisyDataset> {
    check_unit_interval("fraction", fraction)?;
    check_unit_interval("blend", blend)?;
    let d = ds.d();
    let mut mean = vec![0.0; d];
    for row in ds.features.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    if !ds.is_empty() {
        for m in &mut mean {
            *m /= ds.len() as f64;
        }
    }
    let mut rng = seed::rng(seed);
    let mut out = ds.clone();
    for i in select(ds.len(), fraction, &mut rng) {
        for (x, m) in out.features.row_mut(i).iter_mut().zip(&mean) {
            *x = (1.0 - blend) * *x + blend * m;
        }
        out.labels[i] = rng.random_range(0..ds.k);
        out.flags[i] = NoiseFlags {
            randomized: true,
            structured_feature: true,
        };
    }
    Ok(out.noted(&format!("degradation(fraction={fraction},blend={blend},seed={seed})")))
}

/// Redraws the label of every sample whose original class is `target_class`.
pub fn inject_class_randomization(ds: &NoisyDataset, target_class: usize, seed: u64) -> Result<NoisyDataset> {
    if target_class >= ds.k {
        return Err(Error::InvalidTarget {
            class: target_class,
            k: ds.k,
        });
    }
    let mut rng = seed::rng(seed);
    let mut out = ds.clone();
    for i in 0..ds.len() {
        if ds.original_labels[i] == target_class {
            out.labels[i] = rng.random_range(0..ds.k);
            out.flags[i].randomized = true;
        }
    }
    Ok(out.noted(&format!("class_randomization(class={target_class},seed={seed})")))
}

/// Declarative form of one injection, as read from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    None,
    Uniform { fraction: f64 },
    ClassDependentCircular { eta: f64 },
    Smudge { fraction: f64, magnitude: f64, width: usize },
    Degradation { fraction: f64, blend: f64 },
    ClassRandomization { class: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn apply(&self, ds: &NoisyDataset) -> Result<NoisyDataset> {
        match self.kind {
            NoiseKind::None => Ok(ds.clone()),
            NoiseKind::Uniform { fraction } => inject_uniform(ds, fraction, self.seed),
            NoiseKind::ClassDependentCircular { eta } => inject_class_dependent(ds, eta, self.seed),
            NoiseKind::Smudge {
                fraction,
                magnitude,
                width,
            } => inject_smudge(ds, fraction, magnitude, width, self.seed),
            NoiseKind::Degradation { fraction, blend } => {
                inject_degradation(ds, fraction, blend, self.seed)
            }
            NoiseKind::ClassRandomization { class } => {
                inject_class_randomization(ds, class, self.seed)
            }
        }
    }

    /// Whether the injection also transforms features (and therefore should
    /// be mirrored onto held-out sets).
    pub fn is_structured(&self) -> bool {
        matches!(
            self.kind,
            NoiseKind::Smudge { .. } | NoiseKind::Degradation { .. }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> NoisyDataset {
        gen_blobs(4, 2, 250, 10.0, 3).unwrap()
    }

    #[test]
    fn blobs_are_deterministic_and_shaped() {
        let a = blobs();
        assert_eq!(a, blobs());
        assert_eq!(a.len(), 1000);
        assert_eq!(a.d(), 2);
        assert!(a.flags().iter().all(|f| *f == NoiseFlags::default()));
        assert_ne!(a.features(), gen_blobs(4, 2, 250, 10.0, 4).unwrap().features());
    }

    #[test]
    fn empty_blobs_are_valid() {
        let e = gen_blobs(3, 2, 0, 5.0, 0).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn infeasible_packing() {
        assert!(matches!(gen_blobs(5, 2, 10, 5.0, 0), Err(Error::Config(_))));
        assert!(gen_blobs(1, 2, 10, 5.0, 0).is_err());
    }

    #[test]
    fn uniform_counts() {
        let ds = gen_blobs(5, 3, 200, 10.0, 1).unwrap();
        assert_eq!(inject_uniform(&ds, 0.0, 9).unwrap().labels(), ds.labels());
        let noisy = inject_uniform(&ds, 0.4, 9).unwrap();
        assert_eq!(noisy.flags().iter().filter(|f| f.randomized).count(), 400);
        assert!(inject_uniform(&ds, 1.5, 9).is_err());
    }

    #[test]
    fn circular_flip_extremes() {
        let ds = blobs();
        assert_eq!(inject_class_dependent(&ds, 0.0, 1).unwrap().labels(), ds.labels());
        let all = inject_class_dependent(&ds, 1.0, 1).unwrap();
        for i in 0..ds.len() {
            assert_eq!(all.labels()[i], (ds.labels()[i] + 1) % 4);
        }
        assert!(all.description().contains("circular_flip"));
        assert!(!all.description().contains("mapped_flip"));
    }

    #[test]
    fn smudge_degenerate_transform_keeps_features() {
        let ds = blobs();
        let s = inject_smudge(&ds, 0.1, 0.0, 0, 2).unwrap();
        assert_eq!(s.features(), ds.features());
        let flagged = s.flags().iter().filter(|f| f.structured_feature && f.randomized).count();
        assert_eq!(flagged, 100);
        assert!(inject_smudge(&ds, 0.1, 1.0, 3, 2).is_err());
    }

    #[test]
    fn smudge_is_local() {
        let ds = gen_blobs(4, 5, 50, 10.0, 3).unwrap();
        let s = inject_smudge(&ds, 0.5, 42.0, 2, 8).unwrap();
        for i in 0..ds.len() {
            let changed = (0..5).filter(|&j| s.features().get(i, j) != ds.features().get(i, j)).count();
            if s.flags()[i].structured_feature {
                assert_eq!(changed, 2);
            } else {
                assert_eq!(changed, 0);
            }
        }
    }

    #[test]
    fn degradation_extremes() {
        let ds = blobs();
        let same = inject_degradation(&ds, 0.2, 0.0, 5).unwrap();
        assert_eq!(same.features(), ds.features());
        assert_eq!(same.flags().iter().filter(|f| f.structured_feature).count(), 200);
        let collapsed = inject_degradation(&ds, 0.2, 1.0, 5).unwrap();
        let rows: Vec<&[f64]> = (0..ds.len())
            .filter(|&i| collapsed.flags()[i].structured_feature)
            .map(|i| collapsed.features().row(i))
            .collect();
        assert!(rows.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn class_randomization_counts() {
        let ds = blobs();
        let r = inject_class_randomization(&ds, 2, 4).unwrap();
        assert_eq!(r.flags().iter().filter(|f| f.randomized).count(), 250);
        for i in 0..ds.len() {
            assert_eq!(r.flags()[i].randomized, ds.original_labels()[i] == 2);
        }
        let empty = gen_blobs(4, 2, 0, 10.0, 0).unwrap();
        assert_eq!(inject_class_randomization(&empty, 1, 4).unwrap(), empty.noted("class_randomization(class=1,seed=4)"));
        assert!(inject_class_randomization(&ds, 4, 4).is_err());
    }

    #[test]
    fn restored_labels_keep_structure() {
        let s = inject_smudge(&blobs(), 0.1, 20.0, 1, 2).unwrap();
        let clean = s.with_original_labels();
        assert_eq!(clean.labels(), clean.original_labels());
        assert_eq!(clean.features(), s.features());
        assert_eq!(clean.flags().iter().filter(|f| f.structured_feature).count(), 100);
    }

    #[test]
    fn flag_bytes() {
        for b in 0..4u8 {
            assert_eq!(NoiseFlags::from_byte(b).unwrap().to_byte(), b);
        }
        assert!(NoiseFlags::from_byte(4).is_none());
    }

    #[test]
    fn without_drops_indices() {
        let ds = blobs();
        let kept = ds.without(&[0, 0, 5, 5000]);
        assert_eq!(kept.len(), ds.len() - 2);
        assert_eq!(kept.features().row(0), ds.features().row(1));
    }
}
