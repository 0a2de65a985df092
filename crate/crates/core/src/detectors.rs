//! Linear target detectors: CEM, the matched filter, and augmented CEM.
//!
//! All three produce a weight vector w and score pixels by a dot product.
//! CEM solves min w'Rw subject to w'd = 1 and needs only the correlation
//! matrix. The matched filter uses the covariance and the centered
//! signature. Augmented CEM (ACEM) is CEM run on the cube extended with a
//! constant all-one band; its first L weights act on the spectrum and the
//! last one is a fixed offset. The matched filter also has an expanded
//! form that needs only correlation solves, using the same rank-one
//! identities as [`crate::linalg`]; both routes return the same filter.

use crate::linalg::{self, spd_solve, LinalgError};
use crate::stats::{augment_stats, SceneStats, SpectralCube};
use thiserror::Error;

/// Errors from weight construction and map application.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    /// The correlation matrix could not be factored.
    #[error("singular correlation matrix: {0}")]
    SingularCorrelation(LinalgError),

    /// The covariance matrix could not be factored.
    #[error("singular covariance matrix: {0}")]
    SingularCovariance(LinalgError),

    /// The all-one-band augmented correlation could not be factored,
    /// typically because the input was already augmented.
    #[error("singular augmented correlation matrix: {0}")]
    SingularAugmentedCorrelation(LinalgError),

    /// The target signature is the zero vector.
    #[error("target signature is zero")]
    ZeroSignature,

    /// The target signature equals the scene mean, so the matched filter
    /// denominator vanishes.
    #[error("target signature equals the scene mean")]
    TargetEqualsMean,

    /// `1 - m'R^-1 m` was not safely positive in the expanded route.
    #[error("degenerate mean: {0}")]
    DegenerateMean(LinalgError),

    /// A band subset with no members.
    #[error("band subset is empty")]
    EmptySubset,

    /// A 1-based band index outside 1..=bands.
    #[error("band index {index} out of range for {bands} bands")]
    BandOutOfRange { index: usize, bands: usize },

    /// Weight, signature, cube, or statistics lengths disagree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// A known target spectrum, in the same units as the cube values.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSignature {
    values: Vec<f64>,
    name: Option<String>,
}

impl TargetSignature {
    pub fn new(values: Vec<f64>) -> Self {
        TargetSignature { values, name: None }
    }

    pub fn named(values: Vec<f64>, name: impl Into<String>) -> Self {
        TargetSignature {
            values,
            name: Some(name.into()),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// A set of 1-based band indices, stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandSubset {
    indices: Vec<usize>,
}

impl BandSubset {
    /// Validate indices against a total band count. Duplicates collapse,
    /// order does not matter, and the full set is allowed.
    pub fn new(indices: &[usize], bands: usize) -> Result<Self, DetectorError> {
        if indices.is_empty() {
            return Err(DetectorError::EmptySubset);
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &index in &sorted {
            if index == 0 || index > bands {
                return Err(DetectorError::BandOutOfRange { index, bands });
            }
        }
        Ok(BandSubset { indices: sorted })
    }

    /// 1-based indices, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// True when this subset omits at least one of the `bands` bands.
    pub fn is_proper(&self, bands: usize) -> bool {
        self.indices.len() < bands
    }

    fn zero_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i - 1).collect()
    }

    fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|i| full[i - 1]).collect()
    }
}

impl std::fmt::Display for BandSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (k, index) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{index}")?;
        }
        write!(f, "}}")
    }
}

/// Which detector a weight vector or score map belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Cem,
    Mf,
    Acem,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DetectorKind::Cem => "cem",
            DetectorKind::Mf => "mf",
            DetectorKind::Acem => "acem",
        })
    }
}

/// A finished linear detector: the weight vector, the positive normalizer
/// its direction was divided by, and the kind that tells
/// [`apply_detector`] how to score a pixel.
///
/// CEM weights built over a band subset carry that subset so application
/// gathers the right bands.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorWeights {
    kind: DetectorKind,
    weights: Vec<f64>,
    normalizer: f64,
    subset: Option<BandSubset>,
}

impl DetectorWeights {
    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// 1 over the quadratic form in the denominator. For CEM this equals
    /// the minimal mean output energy of the filter.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn subset(&self) -> Option<&BandSubset> {
        self.subset.as_ref()
    }
}

/// Scores for every pixel of a cube, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMap {
    rows: usize,
    cols: usize,
    kind: DetectorKind,
    scores: Vec<f64>,
}

impl DetectionMap {
    pub fn new(
        rows: usize,
        cols: usize,
        kind: DetectorKind,
        scores: Vec<f64>,
    ) -> Result<Self, DetectorError> {
        check_len(rows * cols, scores.len())?;
        Ok(DetectionMap {
            rows,
            cols,
            kind,
            scores,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score_at(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    /// Mean squared score, the quantity CEM minimizes.
    pub fn mean_square(&self) -> f64 {
        self.scores.iter().map(|y| y * y).sum::<f64>() / self.scores.len() as f64
    }
}

fn check_len(expected: usize, actual: usize) -> Result<(), DetectorError> {
    if expected != actual {
        return Err(DetectorError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// CEM: w = R^-1 d / (d'R^-1 d). The normalizer 1/(d'R^-1 d) is also the
/// minimal mean output energy.
pub fn cem_weights(
    stats: &SceneStats,
    target: &TargetSignature,
) -> Result<DetectorWeights, DetectorError> {
    check_len(stats.bands(), target.len())?;
    if target.is_zero() {
        return Err(DetectorError::ZeroSignature);
    }
    let x = spd_solve(stats.correlation(), target.values())
        .map_err(DetectorError::SingularCorrelation)?;
    let denom = linalg::dot(target.values(), &x);
    let normalizer = 1.0 / denom;
    Ok(DetectorWeights {
        kind: DetectorKind::Cem,
        weights: x.iter().map(|v| v * normalizer).collect(),
        normalizer,
        subset: None,
    })
}

/// CEM restricted to a band subset: the filter the scene would get if only
/// those bands had been collected.
pub fn cem_subset_weights(
    stats: &SceneStats,
    target: &TargetSignature,
    subset: &BandSubset,
) -> Result<DetectorWeights, DetectorError> {
    check_len(stats.bands(), target.len())?;
    if let Some(&index) = subset.indices().iter().find(|&&i| i > stats.bands()) {
        return Err(DetectorError::BandOutOfRange {
            index,
            bands: stats.bands(),
        });
    }
    let d_sub = subset.gather(target.values());
    if d_sub.iter().all(|v| *v == 0.0) {
        return Err(DetectorError::ZeroSignature);
    }
    let r_sub = stats.correlation().principal_submatrix(&subset.zero_based());
    let x = spd_solve(&r_sub, &d_sub).map_err(DetectorError::SingularCorrelation)?;
    let denom = linalg::dot(&d_sub, &x);
    let normalizer = 1.0 / denom;
    Ok(DetectorWeights {
        kind: DetectorKind::Cem,
        weights: x.iter().map(|v| v * normalizer).collect(),
        normalizer,
        subset: Some(subset.clone()),
    })
}

/// Matched filter: w = K^-1 (d - m) / ((d-m)'K^-1 (d-m)), applied to
/// mean-centered pixels. A pixel equal to the signature scores 1.
pub fn mf_weights(
    stats: &SceneStats,
    target: &TargetSignature,
) -> Result<DetectorWeights, DetectorError> {
    check_len(stats.bands(), target.len())?;
    let centered: Vec<f64> = target
        .values()
        .iter()
        .zip(stats.mean())
        .map(|(d, m)| d - m)
        .collect();
    if centered.iter().all(|v| *v == 0.0) {
        return Err(DetectorError::TargetEqualsMean);
    }
    let x = spd_solve(stats.covariance(), &centered)
        .map_err(DetectorError::SingularCovariance)?;
    let denom = linalg::dot(&centered, &x);
    let normalizer = 1.0 / denom;
    Ok(DetectorWeights {
        kind: DetectorKind::Mf,
        weights: x.iter().map(|v| v * normalizer).collect(),
        normalizer,
        subset: None,
    })
}

/// Matched filter computed from correlation solves only, through the
/// rank-one downdate scalars b1 = 1/(1 - m'R^-1 m) and b2 = m'R^-1 d:
/// the direction is R^-1 d + b1 (b2 - 1) R^-1 m. Returns the same filter
/// as [`mf_weights`] up to roundoff.
pub fn mf_weights_expanded(
    stats: &SceneStats,
    target: &TargetSignature,
) -> Result<DetectorWeights, DetectorError> {
    check_len(stats.bands(), target.len())?;
    let centered: Vec<f64> = target
        .values()
        .iter()
        .zip(stats.mean())
        .map(|(d, m)| d - m)
        .collect();
    if centered.iter().all(|v| *v == 0.0) {
        return Err(DetectorError::TargetEqualsMean);
    }
    let xd = spd_solve(stats.correlation(), target.values())
        .map_err(DetectorError::SingularCorrelation)?;
    let xm = spd_solve(stats.correlation(), stats.mean())
        .map_err(DetectorError::SingularCorrelation)?;
    let one_minus = 1.0 - linalg::dot(stats.mean(), &xm);
    if one_minus <= 1e-12 {
        return Err(DetectorError::DegenerateMean(LinalgError::DegenerateMean {
            value: one_minus,
        }));
    }
    let b1 = 1.0 / one_minus;
    let b2 = linalg::dot(stats.mean(), &xd);
    let scale = b1 * (b2 - 1.0);
    let direction: Vec<f64> = xd.iter().zip(&xm).map(|(d, m)| d + scale * m).collect();
    let denom = linalg::dot(&centered, &direction);
    let normalizer = 1.0 / denom;
    Ok(DetectorWeights {
        kind: DetectorKind::Mf,
        weights: direction.iter().map(|v| v * normalizer).collect(),
        normalizer,
        subset: None,
    })
}

/// Augmented CEM: plain CEM on the statistics of the cube extended with an
/// all-one band and the signature extended with 1. The returned vector has
/// L+1 entries; the last is the constant offset added to every score.
pub fn acem_weights(
    stats: &SceneStats,
    target: &TargetSignature,
) -> Result<DetectorWeights, DetectorError> {
    check_len(stats.bands(), target.len())?;
    let augmented = augment_stats(stats);
    let mut d_aug = target.values().to_vec();
    d_aug.push(1.0);
    let x = spd_solve(augmented.correlation(), &d_aug)
        .map_err(DetectorError::SingularAugmentedCorrelation)?;
    let denom = linalg::dot(&d_aug, &x);
    let normalizer = 1.0 / denom;
    Ok(DetectorWeights {
        kind: DetectorKind::Acem,
        weights: x.iter().map(|v| v * normalizer).collect(),
        normalizer,
        subset: None,
    })
}

/// Minimal CEM mean output energy 1/(d'R^-1 d) over all bands, or over a
/// subset of them. Smaller is better: the filter suppresses the background
/// more.
pub fn output_energy(
    stats: &SceneStats,
    target: &TargetSignature,
    subset: Option<&BandSubset>,
) -> Result<f64, DetectorError> {
    let weights = match subset {
        None => cem_weights(stats, target)?,
        Some(sub) => cem_subset_weights(stats, target, sub)?,
    };
    Ok(weights.normalizer())
}

/// Score every pixel of a cube with a finished detector.
///
/// CEM scores are w'r (over the carried subset if any), matched-filter
/// scores are w'(r - m) with m taken from `stats`, and ACEM scores are the
/// first L weights against the spectrum plus the constant last weight.
pub fn apply_detector(
    cube: &SpectralCube,
    weights: &DetectorWeights,
    stats: &SceneStats,
) -> Result<DetectionMap, DetectorError> {
    let bands = cube.bands();
    let n = cube.n_pixels();
    let mut scores = vec![0.0; n];
    match weights.kind {
        DetectorKind::Cem => match &weights.subset {
            None => {
                check_len(bands, weights.weights.len())?;
                for p in 0..n {
                    scores[p] = linalg::dot(&weights.weights, cube.pixel(p));
                }
            }
            Some(subset) => {
                check_len(subset.len(), weights.weights.len())?;
                if let Some(&index) = subset.indices().iter().find(|&&i| i > bands) {
                    return Err(DetectorError::BandOutOfRange { index, bands });
                }
                let idx = subset.zero_based();
                for p in 0..n {
                    let pixel = cube.pixel(p);
                    scores[p] = idx
                        .iter()
                        .zip(&weights.weights)
                        .map(|(&i, w)| w * pixel[i])
                        .sum();
                }
            }
        },
        DetectorKind::Mf => {
            check_len(bands, weights.weights.len())?;
            check_len(bands, stats.mean().len())?;
            let m = stats.mean();
            for p in 0..n {
                let pixel = cube.pixel(p);
                scores[p] = (0..bands)
                    .map(|i| weights.weights[i] * (pixel[i] - m[i]))
                    .sum();
            }
        }
        DetectorKind::Acem => {
            check_len(bands + 1, weights.weights.len())?;
            let offset = weights.weights[bands];
            for p in 0..n {
                scores[p] = linalg::dot(&weights.weights[..bands], cube.pixel(p)) + offset;
            }
        }
    }
    Ok(DetectionMap {
        rows: cube.rows(),
        cols: cube.cols(),
        kind: weights.kind,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::accumulate_stats;
    use proptest::prelude::*;

    fn fixture_cube() -> SpectralCube {
        SpectralCube::new(3, 1, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()
    }

    fn fixture_stats() -> SceneStats {
        accumulate_stats(&fixture_cube()).unwrap()
    }

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64, what: &str) {
        assert_eq!(actual.len(), expected.len(), "{what}: length");
        for (k, (a, e)) in actual.iter().zip(expected).enumerate() {
            assert!(
                (a - e).abs() <= tol * e.abs().max(1.0),
                "{what}: entry {k} was {a}, expected {e}"
            );
        }
    }

    /// Four symmetric pixels: mean is exactly zero and R = 0.5 I.
    fn zero_mean_cube() -> SpectralCube {
        SpectralCube::new(4, 1, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    #[test]
    fn cem_fixture_by_hand() {
        // d = (1,1), R^-1 d = (1,1), d'R^-1 d = 2: w = (1/2, 1/2).
        let w = cem_weights(&fixture_stats(), &TargetSignature::new(vec![1.0, 1.0])).unwrap();
        assert_close(w.weights(), &[0.5, 0.5], 1e-12, "CEM weights");
        assert!((w.normalizer() - 0.5).abs() <= 1e-12);
        assert_eq!(w.kind(), DetectorKind::Cem);
    }

    #[test]
    fn cem_on_scaled_identity_correlation() {
        // R = 0.5 I, d = (1,0): w = R^-1 d / 2 = (1, 0).
        let stats = accumulate_stats(&zero_mean_cube()).unwrap();
        let w = cem_weights(&stats, &TargetSignature::new(vec![1.0, 0.0])).unwrap();
        assert_close(w.weights(), &[1.0, 0.0], 1e-12, "CEM weights");
    }

    #[test]
    fn cem_satisfies_unit_response() {
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let w = cem_weights(&fixture_stats(), &d).unwrap();
        let response = linalg::dot(w.weights(), d.values());
        assert!((response - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cem_rejects_zero_signature() {
        assert_eq!(
            cem_weights(&fixture_stats(), &TargetSignature::new(vec![0.0, 0.0])).unwrap_err(),
            DetectorError::ZeroSignature
        );
    }

    #[test]
    fn cem_rejects_wrong_length() {
        assert!(matches!(
            cem_weights(&fixture_stats(), &TargetSignature::new(vec![1.0])),
            Err(DetectorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mf_fixture_by_hand() {
        // d - m = (1/3, 1/3), K^-1 (d-m) = (3,3), denominator 2: w = (1.5, 1.5).
        let w = mf_weights(&fixture_stats(), &TargetSignature::new(vec![1.0, 1.0])).unwrap();
        assert_close(w.weights(), &[1.5, 1.5], 1e-12, "MF weights");
        assert!((w.normalizer() - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn mf_rejects_target_equal_to_mean() {
        let d = TargetSignature::new(vec![2.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(
            mf_weights(&fixture_stats(), &d).unwrap_err(),
            DetectorError::TargetEqualsMean
        );
    }

    #[test]
    fn mf_equals_cem_on_zero_mean_data() {
        let stats = accumulate_stats(&zero_mean_cube()).unwrap();
        let d = TargetSignature::new(vec![1.0, 2.0]);
        let mf = mf_weights(&stats, &d).unwrap();
        let cem = cem_weights(&stats, &d).unwrap();
        assert_eq!(mf.weights(), cem.weights());
        assert_eq!(mf.normalizer(), cem.normalizer());
    }

    #[test]
    fn expanded_mf_matches_direct_mf_on_fixture() {
        // Internals on this scene: b1 = 9, b2 = 4/3, direction (3,3).
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let direct = mf_weights(&fixture_stats(), &d).unwrap();
        let expanded = mf_weights_expanded(&fixture_stats(), &d).unwrap();
        assert_close(expanded.weights(), direct.weights(), 1e-12, "expanded MF");
        assert!((expanded.normalizer() - direct.normalizer()).abs() <= 1e-12);
        assert_eq!(expanded.kind(), DetectorKind::Mf);
    }

    #[test]
    fn expanded_mf_handles_zero_mean() {
        let stats = accumulate_stats(&zero_mean_cube()).unwrap();
        let d = TargetSignature::new(vec![1.0, 2.0]);
        let expanded = mf_weights_expanded(&stats, &d).unwrap();
        let cem = cem_weights(&stats, &d).unwrap();
        assert_close(expanded.weights(), cem.weights(), 1e-12, "zero-mean MF");
    }

    #[test]
    fn acem_fixture_by_hand() {
        // Augmented solve gives R~^-1 d~ = (3,3,-3), denominator 3:
        // w = (1, 1, -1) with normalizer 1/3.
        let w = acem_weights(&fixture_stats(), &TargetSignature::new(vec![1.0, 1.0])).unwrap();
        assert_close(w.weights(), &[1.0, 1.0, -1.0], 1e-12, "ACEM weights");
        assert!((w.normalizer() - 1.0 / 3.0).abs() <= 1e-12);
        assert_eq!(w.kind(), DetectorKind::Acem);
    }

    #[test]
    fn acem_offset_on_zero_mean_data_is_the_normalizer() {
        // With m = 0 the augmented correlation is block diagonal, so the
        // offset entry reduces to the normalizer itself.
        let stats = accumulate_stats(&zero_mean_cube()).unwrap();
        let w = acem_weights(&stats, &TargetSignature::new(vec![1.0, 2.0])).unwrap();
        let offset = w.weights()[2];
        assert!((offset - w.normalizer()).abs() <= 1e-12);
    }

    #[test]
    fn acem_rejects_already_augmented_statistics() {
        // Augmenting twice makes the correlation exactly singular.
        let once = augment_stats(&fixture_stats());
        assert!(matches!(
            acem_weights(&once, &TargetSignature::new(vec![1.0, 1.0, 1.0])),
            Err(DetectorError::SingularAugmentedCorrelation(_))
        ));
    }

    #[test]
    fn subset_fixture_by_hand() {
        // Band 1 alone: R = 2/3, d = 1, energy 2/3, w = (1).
        let stats = fixture_stats();
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let subset = BandSubset::new(&[1], 2).unwrap();
        let w = cem_subset_weights(&stats, &d, &subset).unwrap();
        assert_close(w.weights(), &[1.0], 1e-12, "subset weights");
        assert!((w.normalizer() - 2.0 / 3.0).abs() <= 1e-12);
        assert_eq!(w.subset(), Some(&subset));
    }

    #[test]
    fn full_subset_matches_plain_cem() {
        let stats = fixture_stats();
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let full = BandSubset::new(&[1, 2], 2).unwrap();
        let via_subset = cem_subset_weights(&stats, &d, &full).unwrap();
        let plain = cem_weights(&stats, &d).unwrap();
        assert_eq!(via_subset.weights(), plain.weights());
        assert_eq!(via_subset.normalizer(), plain.normalizer());
    }

    #[test]
    fn empty_subset_is_rejected() {
        assert_eq!(
            BandSubset::new(&[], 4).unwrap_err(),
            DetectorError::EmptySubset
        );
    }

    #[test]
    fn out_of_range_subset_is_rejected() {
        assert_eq!(
            BandSubset::new(&[1, 3], 2).unwrap_err(),
            DetectorError::BandOutOfRange { index: 3, bands: 2 }
        );
        assert_eq!(
            BandSubset::new(&[0], 2).unwrap_err(),
            DetectorError::BandOutOfRange { index: 0, bands: 2 }
        );
    }

    #[test]
    fn subset_normalizes_order_and_duplicates() {
        let subset = BandSubset::new(&[3, 1, 3], 4).unwrap();
        assert_eq!(subset.indices(), &[1, 3]);
        assert_eq!(subset.to_string(), "{1,3}");
    }

    #[test]
    fn output_energy_fixture_values() {
        let stats = fixture_stats();
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let full = output_energy(&stats, &d, None).unwrap();
        assert!((full - 0.5).abs() <= 1e-12, "full energy was {full}");
        let subset = BandSubset::new(&[1], 2).unwrap();
        let restricted = output_energy(&stats, &d, Some(&subset)).unwrap();
        assert!(
            (restricted - 2.0 / 3.0).abs() <= 1e-12,
            "subset energy was {restricted}"
        );
        assert!(full < restricted);
    }

    #[test]
    fn output_energy_matches_mean_square_of_the_map() {
        let cube = fixture_cube();
        let stats = fixture_stats();
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let w = cem_weights(&stats, &d).unwrap();
        let map = apply_detector(&cube, &w, &stats).unwrap();
        let energy = output_energy(&stats, &d, None).unwrap();
        assert!((map.mean_square() - energy).abs() <= 1e-8 * energy);
    }

    #[test]
    fn cem_map_on_fixture() {
        let cube = fixture_cube();
        let stats = fixture_stats();
        let w = cem_weights(&stats, &TargetSignature::new(vec![1.0, 1.0])).unwrap();
        let map = apply_detector(&cube, &w, &stats).unwrap();
        assert_close(map.scores(), &[0.5, 0.5, 1.0], 1e-12, "CEM map");
        assert_eq!((map.rows(), map.cols()), (3, 1));
    }

    #[test]
    fn mf_scores_signature_pixel_as_one() {
        let cube = fixture_cube();
        let stats = fixture_stats();
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let w = mf_weights(&stats, &d).unwrap();
        let map = apply_detector(&cube, &w, &stats).unwrap();
        // The third pixel is exactly the signature.
        assert!((map.scores()[2] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn acem_map_on_fixture() {
        let cube = fixture_cube();
        let stats = fixture_stats();
        let w = acem_weights(&stats, &TargetSignature::new(vec![1.0, 1.0])).unwrap();
        let map = apply_detector(&cube, &w, &stats).unwrap();
        assert_close(map.scores(), &[0.0, 0.0, 1.0], 1e-12, "ACEM map");
    }

    #[test]
    fn subset_map_gathers_the_right_bands() {
        let cube = fixture_cube();
        let stats = fixture_stats();
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let subset = BandSubset::new(&[2], 2).unwrap();
        let w = cem_subset_weights(&stats, &d, &subset).unwrap();
        let map = apply_detector(&cube, &w, &stats).unwrap();
        // Band 2 values are (0, 1, 1); w = (1) over that band.
        assert_close(map.scores(), &[0.0, 1.0, 1.0], 1e-12, "subset map");
    }

    #[test]
    fn apply_rejects_mismatched_weights() {
        let cube = fixture_cube();
        let stats = fixture_stats();
        let three = accumulate_stats(
            &SpectralCube::new(1, 3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
                .unwrap(),
        )
        .unwrap();
        let w = cem_weights(&three, &TargetSignature::new(vec![1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(
            apply_detector(&cube, &w, &stats),
            Err(DetectorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cem_weights_minimize_energy_among_unit_response_filters() {
        let stats = fixture_stats();
        let d = TargetSignature::new(vec![1.0, 1.0]);
        let w = cem_weights(&stats, &d).unwrap();
        let base = stats.correlation().quad_form(w.weights());
        // Perturb within the constraint plane: v = (1, -1) satisfies d'v = 0.
        for t in [-0.5, -0.1, 0.03, 0.2, 1.0] {
            let perturbed = [w.weights()[0] + t, w.weights()[1] - t];
            let energy = stats.correlation().quad_form(&perturbed);
            assert!(
                energy >= base - 1e-12,
                "perturbation {t} lowered the energy: {energy} < {base}"
            );
        }
    }

    fn random_scene(bands: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, bands), n)
    }

    fn stats_of(pixels: &[Vec<f64>]) -> SceneStats {
        let mut flat = Vec::new();
        for p in pixels {
            flat.extend_from_slice(p);
        }
        let cube = SpectralCube::new(pixels.len(), 1, pixels[0].len(), flat).unwrap();
        accumulate_stats(&cube).unwrap()
    }

    proptest! {
        #[test]
        fn unit_response_constraints_hold(
            pixels in random_scene(3, 12),
            d in proptest::collection::vec(0.5f64..2.0, 3),
        ) {
            let stats = stats_of(&pixels);
            let target = TargetSignature::new(d.clone());
            if let Ok(w) = cem_weights(&stats, &target) {
                prop_assert!((linalg::dot(w.weights(), &d) - 1.0).abs() <= 1e-10);
                prop_assert!(w.normalizer() > 0.0);
            }
            if let Ok(w) = mf_weights(&stats, &target) {
                let centered: Vec<f64> =
                    d.iter().zip(stats.mean()).map(|(a, b)| a - b).collect();
                prop_assert!((linalg::dot(w.weights(), &centered) - 1.0).abs() <= 1e-10);
                prop_assert!(w.normalizer() > 0.0);
            }
            if let Ok(w) = acem_weights(&stats, &target) {
                let mut d_aug = d.clone();
                d_aug.push(1.0);
                prop_assert!((linalg::dot(w.weights(), &d_aug) - 1.0).abs() <= 1e-10);
                prop_assert!(w.normalizer() > 0.0);
            }
        }

        #[test]
        fn expanded_mf_agrees_with_direct_route(
            pixels in random_scene(3, 12),
            d in proptest::collection::vec(0.5f64..2.0, 3),
        ) {
            let stats = stats_of(&pixels);
            let target = TargetSignature::new(d);
            let direct = mf_weights(&stats, &target);
            let expanded = mf_weights_expanded(&stats, &target);
            if let (Ok(a), Ok(b)) = (direct, expanded) {
                let scale = a
                    .weights()
                    .iter()
                    .fold(0.0f64, |acc, w| acc.max(w.abs()))
                    .max(1e-300);
                for (x, y) in a.weights().iter().zip(b.weights()) {
                    prop_assert!((x - y).abs() <= 1e-9 * scale);
                }
            }
        }
    }
}
