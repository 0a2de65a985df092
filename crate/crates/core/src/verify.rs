//! Numerical certification of the two facts that justify the augmented
//! detector.
//!
//! The first check confirms that the full-band CEM energy is strictly
//! smaller than the energy over every proper band subset, which is what
//! "more bands help" means for this filter. The second confirms that the
//! ACEM weight vector is a positive multiple of the matched filter on its
//! first L entries, and that the two score maps are affinely related, so
//! both detectors rank pixels identically.
//!
//! Also here: the scalar comparison tools the checks are built from,
//! a squared Pearson correlation and a rank-based ROC AUC.

use crate::detectors::{
    acem_weights, apply_detector, mf_weights, output_energy, BandSubset, DetectionMap,
    DetectorError, TargetSignature,
};
use crate::linalg::{self, cholesky};
use crate::stats::{accumulate_stats, SceneStats, SpectralCube, StatsError};
use thiserror::Error;

/// Errors from the comparison tools and theorem checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    /// One of the score series is constant, so correlation is undefined.
    #[error("scores have zero variance, correlation is undefined")]
    DegenerateVariance,

    /// The truth mask has no positives or no negatives.
    #[error("truth mask needs at least one positive and one negative label")]
    DegenerateTruth,

    /// Series lengths disagree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// All-proper subset enumeration was requested for too many bands.
    #[error("all-proper subset enumeration is limited to {limit} bands, got {bands}")]
    SubsetEnumerationTooLarge { bands: usize, limit: usize },

    /// An explicit subset covers every band, so the strict comparison is
    /// meaningless for it.
    #[error("subset {0} is not a proper subset")]
    SubsetNotProper(BandSubset),

    #[error(transparent)]
    Detector(#[from] DetectorError),

    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Most bands for which enumerating all nonempty proper subsets is allowed.
pub const ALL_PROPER_LIMIT: usize = 12;

/// Which band subsets a band-addition check should compare against.
#[derive(Debug, Clone)]
pub enum SubsetSelection {
    /// Every nonempty proper subset. Only allowed for small band counts.
    AllProper,
    /// The L subsets that each drop a single band.
    LeaveOneOut,
    /// Caller-provided subsets; each must be proper.
    Explicit(Vec<BandSubset>),
}

/// Every nonempty proper subset of {1..bands}, in mask order.
pub fn all_proper_subsets(bands: usize) -> Vec<BandSubset> {
    let full: u32 = (1u32 << bands) - 1;
    let mut subsets = Vec::with_capacity((full as usize).saturating_sub(1));
    for mask in 1..full {
        let indices: Vec<usize> = (0..bands).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect();
        subsets.push(BandSubset::new(&indices, bands).expect("mask enumeration is valid"));
    }
    subsets
}

/// The subsets that drop exactly one band each.
pub fn leave_one_out_subsets(bands: usize) -> Vec<BandSubset> {
    (1..=bands)
        .map(|drop| {
            let indices: Vec<usize> = (1..=bands).filter(|&i| i != drop).collect();
            BandSubset::new(&indices, bands).expect("leave-one-out is valid")
        })
        .collect()
}

/// Outcome of the band-addition energy check.
///
/// `violations` lists the subsets whose energy failed to exceed the
/// full-band energy by more than `tolerance * full_energy`; an empty list
/// certifies the strict inequality on this scene. `skipped` holds subsets
/// that could not be evaluated (restriction of the signature was zero),
/// which cannot witness a violation. `strict_margin` is the smallest
/// subset-minus-full energy gap observed.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub full_energy: f64,
    pub subset_energies: Vec<(BandSubset, f64)>,
    pub violations: Vec<BandSubset>,
    pub skipped: Vec<(BandSubset, DetectorError)>,
    pub strict_margin: f64,
    pub tolerance: f64,
}

impl Theorem1Report {
    pub fn certified(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compare the full-band CEM energy against restricted-band energies.
///
/// Requires the full correlation matrix to be positive definite; an exactly
/// dependent band set surfaces as a SingularCorrelation error because the
/// strict statement has nothing to certify there. Subsets are judged at
/// relative tolerance `tolerance`: subset energy must exceed the full
/// energy by more than `tolerance * full_energy`.
pub fn check_theorem1(
    stats: &SceneStats,
    target: &TargetSignature,
    selection: &SubsetSelection,
    tolerance: f64,
) -> Result<Theorem1Report, VerifyError> {
    let bands = stats.bands();
    let subsets: Vec<BandSubset> = match selection {
        SubsetSelection::AllProper => {
            if bands > ALL_PROPER_LIMIT {
                return Err(VerifyError::SubsetEnumerationTooLarge {
                    bands,
                    limit: ALL_PROPER_LIMIT,
                });
            }
            all_proper_subsets(bands)
        }
        SubsetSelection::LeaveOneOut => leave_one_out_subsets(bands),
        SubsetSelection::Explicit(list) => {
            for subset in list {
                if !subset.is_proper(bands) {
                    return Err(VerifyError::SubsetNotProper(subset.clone()));
                }
            }
            list.clone()
        }
    };

    let full_energy = output_energy(stats, target, None)?;
    let mut subset_energies = Vec::with_capacity(subsets.len());
    let mut violations = Vec::new();
    let mut skipped = Vec::new();
    let mut strict_margin = f64::INFINITY;
    for subset in subsets {
        match output_energy(stats, target, Some(&subset)) {
            Ok(energy) => {
                let gap = energy - full_energy;
                if gap < strict_margin {
                    strict_margin = gap;
                }
                if gap <= tolerance * full_energy {
                    violations.push(subset.clone());
                }
                subset_energies.push((subset, energy));
            }
            Err(err) => skipped.push((subset, err)),
        }
    }
    Ok(Theorem1Report {
        full_energy,
        subset_energies,
        violations,
        skipped,
        strict_margin,
        tolerance,
    })
}

/// Outcome of the ACEM-equals-MF check.
///
/// `c_ratio` is the predicted proportionality constant (the ratio of the
/// two normalizers), `max_component_deviation` the worst relative mismatch
/// between the first L ACEM weights and `c_ratio` times the MF weights,
/// and `map_r2` the squared correlation between the two score maps.
/// `slope`/`intercept` are the least-squares affine fit of the ACEM map on
/// the MF map; `expected_intercept` is the closed-form prediction
/// c * w_mf'm + w_acem[L].
#[derive(Debug, Clone)]
pub struct Theorem2Report {
    pub c_ratio: f64,
    pub max_component_deviation: f64,
    pub map_r2: f64,
    pub slope: f64,
    pub intercept: f64,
    pub expected_intercept: f64,
    pub tolerance: f64,
}

impl Theorem2Report {
    pub fn certified(&self) -> bool {
        self.max_component_deviation <= self.tolerance && self.map_r2 >= 1.0 - self.tolerance
    }
}

/// Check that ACEM is the matched filter up to a positive affine map.
///
/// Certified when the first L ACEM weights match `c_ratio * w_mf`
/// componentwise within `tolerance` (relative to the largest MF weight)
/// and the two score maps correlate with R^2 at least 1 - tolerance.
pub fn check_theorem2(
    cube: &SpectralCube,
    target: &TargetSignature,
    tolerance: f64,
) -> Result<Theorem2Report, VerifyError> {
    let stats = accumulate_stats(cube)?;
    let mf = mf_weights(&stats, target)?;
    let acem = acem_weights(&stats, target)?;
    let bands = stats.bands();

    let c_ratio = acem.normalizer() / mf.normalizer();
    let mf_scale = mf
        .weights()
        .iter()
        .fold(0.0f64, |acc, w| acc.max(w.abs()));
    let max_component_deviation = (0..bands)
        .map(|i| (acem.weights()[i] - c_ratio * mf.weights()[i]).abs() / mf_scale)
        .fold(0.0f64, f64::max);

    let mf_map = apply_detector(cube, &mf, &stats)?;
    let acem_map = apply_detector(cube, &acem, &stats)?;
    let map_r2 = pearson_r2(mf_map.scores(), acem_map.scores())?;
    let (slope, intercept) = affine_fit(mf_map.scores(), acem_map.scores())?;
    let expected_intercept =
        c_ratio * linalg::dot(mf.weights(), stats.mean()) + acem.weights()[bands];

    Ok(Theorem2Report {
        c_ratio,
        max_component_deviation,
        map_r2,
        slope,
        intercept,
        expected_intercept,
        tolerance,
    })
}

/// Centered sums (sum of squares of x, of y, and of cross products).
fn centered_sums(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64), VerifyError> {
    if x.len() != y.len() {
        return Err(VerifyError::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(VerifyError::DegenerateVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Ok((sxx, syy, sxy))
}

/// Squared Pearson correlation of two equally long score series.
///
/// Invariant under affine rescaling of either series and blind to the sign
/// of the relationship. Exactly affinely related inputs give 1 up to
/// roundoff.
pub fn pearson_r2(x: &[f64], y: &[f64]) -> Result<f64, VerifyError> {
    let (sxx, syy, sxy) = centered_sums(x, y)?;
    if sxx == 0.0 || syy == 0.0 {
        return Err(VerifyError::DegenerateVariance);
    }
    Ok((sxy * sxy) / (sxx * syy))
}

/// Least-squares fit y ~ slope * x + intercept.
fn affine_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64), VerifyError> {
    let (sxx, _, sxy) = centered_sums(x, y)?;
    if sxx == 0.0 {
        return Err(VerifyError::DegenerateVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Ranks 1..n with ties sharing their average rank.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks are 1-based; a tie group spanning positions start..end gets
        // the average of those positions.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Area under the ROC curve via the rank-sum statistic, with tied scores
/// contributing half. Equals the probability that a random positive
/// outscores a random negative, plus half the probability of a tie.
pub fn roc_auc(map: &DetectionMap, truth: &[bool]) -> Result<f64, VerifyError> {
    roc_auc_scores(map.scores(), truth)
}

/// [`roc_auc`] on a bare score slice.
pub fn roc_auc_scores(scores: &[f64], truth: &[bool]) -> Result<f64, VerifyError> {
    if scores.len() != truth.len() {
        return Err(VerifyError::DimensionMismatch {
            expected: scores.len(),
            actual: truth.len(),
        });
    }
    let n_pos = truth.iter().filter(|t| **t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(VerifyError::DegenerateTruth);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(truth)
        .filter(|(_, t)| **t)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Conditioning probe for "the bands are linearly independent": the ratio
/// of smallest to largest Cholesky pivot of the correlation matrix must
/// exceed `threshold`. A failed factorization counts as dependent.
pub fn bands_independent(stats: &SceneStats, threshold: f64) -> bool {
    match cholesky(stats.correlation()) {
        Ok(factor) => {
            let pivots = factor.pivots();
            let max = pivots.iter().fold(0.0f64, |a, &p| a.max(p));
            let min = pivots.iter().fold(f64::INFINITY, |a, &p| a.min(p));
            min > threshold * max
        }
        Err(_) => false,
    }
}
