//! Scene statistics in a single pass: mean, correlation, covariance.
//!
//! The accumulator keeps compensated raw sums (sum of pixels and sum of
//! pixel outer products), so statistics can be built streaming, merged
//! across partitions, and finalized once. The covariance is constructed
//! as K = R - m m' from the finalized correlation and mean, which keeps
//! the three quantities exactly consistent with each other.

use crate::linalg::SymMatrix;
use thiserror::Error;

/// Errors from cube construction and statistics accumulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    /// No pixels, no bands, or an attempt to finalize an empty accumulator.
    #[error("cube has no pixels or no bands")]
    EmptyCube,

    /// A pixel or payload length disagrees with the band count.
    #[error("band count mismatch: expected {expected}, got {actual}")]
    BandCountMismatch { expected: usize, actual: usize },

    /// A value was NaN or infinite.
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
}

/// An image cube: rows x cols pixels, each an L-band spectrum.
///
/// Values are stored pixel-major (all bands of pixel 0, then pixel 1, ...),
/// regardless of the interleave of any file they came from, so two cubes
/// with equal values compare equal no matter how they were serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    rows: usize,
    cols: usize,
    bands: usize,
    values: Vec<f64>,
}

impl SpectralCube {
    /// Build from pixel-major values. All dimensions must be positive, the
    /// value count must be rows * cols * bands, and every value finite.
    pub fn new(
        rows: usize,
        cols: usize,
        bands: usize,
        values: Vec<f64>,
    ) -> Result<Self, StatsError> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(StatsError::EmptyCube);
        }
        if values.len() != rows * cols * bands {
            return Err(StatsError::BandCountMismatch {
                expected: rows * cols * bands,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFiniteValue { index });
        }
        Ok(SpectralCube {
            rows,
            cols,
            bands,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Pixel-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spectrum of the pixel with flat index `p` (row-major over the grid).
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.values[p * self.bands..(p + 1) * self.bands]
    }

    /// Spectrum at (row, col).
    pub fn pixel_at(&self, row: usize, col: usize) -> &[f64] {
        self.pixel(row * self.cols + col)
    }

    /// New cube with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SpectralCube {
        SpectralCube {
            rows: self.rows,
            cols: self.cols,
            bands: self.bands,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Compensated add: folds `x` into `sum` carrying the lost low-order bits
/// in `comp` (Kahan).
fn kahan_add(sum: &mut f64, comp: &mut f64, x: f64) {
    let y = x - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// Packed index of the upper-triangle entry (i, j), i <= j, for order n.
fn packed(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + j
}

/// Streaming accumulator for scene statistics.
///
/// A fresh accumulator is the identity for [`StatsAccumulator::merge`],
/// and merging partition accumulators reproduces the single-stream result
/// because only raw sums are combined.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    bands: usize,
    n: usize,
    sum: Vec<f64>,
    sum_comp: Vec<f64>,
    outer: Vec<f64>,
    outer_comp: Vec<f64>,
}

impl StatsAccumulator {
    pub fn new(bands: usize) -> Self {
        let packed_len = bands * (bands + 1) / 2;
        StatsAccumulator {
            bands,
            n: 0,
            sum: vec![0.0; bands],
            sum_comp: vec![0.0; bands],
            outer: vec![0.0; packed_len],
            outer_comp: vec![0.0; packed_len],
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.n
    }

    /// Fold one pixel spectrum into the running sums.
    pub fn push_pixel(&mut self, pixel: &[f64]) -> Result<(), StatsError> {
        if pixel.len() != self.bands {
            return Err(StatsError::BandCountMismatch {
                expected: self.bands,
                actual: pixel.len(),
            });
        }
        self.n += 1;
        for i in 0..self.bands {
            kahan_add(&mut self.sum[i], &mut self.sum_comp[i], pixel[i]);
            for j in i..self.bands {
                let k = packed(i, j, self.bands);
                kahan_add(&mut self.outer[k], &mut self.outer_comp[k], pixel[i] * pixel[j]);
            }
        }
        Ok(())
    }

    /// Combine another accumulator into this one. Order of merging does not
    /// change the totals beyond roundoff.
    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<(), StatsError> {
        if other.bands != self.bands {
            return Err(StatsError::BandCountMismatch {
                expected: self.bands,
                actual: other.bands,
            });
        }
        self.n += other.n;
        for i in 0..self.sum.len() {
            kahan_add(&mut self.sum[i], &mut self.sum_comp[i], other.sum[i]);
            kahan_add(&mut self.sum[i], &mut self.sum_comp[i], -other.sum_comp[i]);
        }
        for k in 0..self.outer.len() {
            kahan_add(&mut self.outer[k], &mut self.outer_comp[k], other.outer[k]);
            kahan_add(&mut self.outer[k], &mut self.outer_comp[k], -other.outer_comp[k]);
        }
        Ok(())
    }

    /// Divide through by the pixel count and fix the statistics.
    pub fn finalize(&self) -> Result<SceneStats, StatsError> {
        if self.n == 0 {
            return Err(StatsError::EmptyCube);
        }
        let n = self.n as f64;
        let bands = self.bands;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let correlation = SymMatrix::from_fn(bands, |i, j| {
            self.outer[packed(i.min(j), i.max(j), bands)] / n
        });
        let covariance = covariance_from(&correlation, &mean);
        Ok(SceneStats {
            n_pixels: self.n,
            mean,
            correlation,
            covariance,
            raw_sum: self.sum.clone(),
            raw_outer: self.outer.clone(),
        })
    }
}

/// K = R - m m', symmetrized by construction.
fn covariance_from(correlation: &SymMatrix, mean: &[f64]) -> SymMatrix {
    SymMatrix::from_fn(correlation.order(), |i, j| {
        correlation.get(i, j) - mean[i] * mean[j]
    })
}

/// Finalized statistics of one scene: pixel count, mean spectrum, sample
/// correlation R = (1/N) sum r r', and sample covariance K = R - m m'.
///
/// Raw sums ride along (privately) so two finalized statistics can still be
/// merged exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneStats {
    n_pixels: usize,
    mean: Vec<f64>,
    correlation: SymMatrix,
    covariance: SymMatrix,
    raw_sum: Vec<f64>,
    raw_outer: Vec<f64>,
}

impl SceneStats {
    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn correlation(&self) -> &SymMatrix {
        &self.correlation
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.covariance
    }

    /// Merge identity: zero pixels, zero sums. Merging it into anything is
    /// a no-op; finalizable statistics require at least one pixel.
    pub fn empty(bands: usize) -> SceneStats {
        SceneStats {
            n_pixels: 0,
            mean: vec![0.0; bands],
            correlation: SymMatrix::from_fn(bands, |_, _| 0.0),
            covariance: SymMatrix::from_fn(bands, |_, _| 0.0),
            raw_sum: vec![0.0; bands],
            raw_outer: vec![0.0; bands * (bands + 1) / 2],
        }
    }

    /// Copy with a ridge added to the correlation diagonal:
    /// R' = R + epsilon * trace(R)/L * I, K' = R' - m m'.
    ///
    /// Intended for rank-deficient scenes where detection should proceed
    /// anyway; regularized statistics must not feed theorem verification.
    pub fn ridged(&self, epsilon: f64) -> SceneStats {
        let l = self.bands() as f64;
        let shift = epsilon * self.correlation.trace() / l;
        let correlation = self.correlation.add_diagonal(shift);
        let covariance = covariance_from(&correlation, &self.mean);
        SceneStats {
            n_pixels: self.n_pixels,
            mean: self.mean.clone(),
            correlation,
            covariance,
            raw_sum: self.raw_sum.clone(),
            raw_outer: self.raw_outer.clone(),
        }
    }
}

/// Accumulate statistics over every pixel of a cube.
pub fn accumulate_stats(cube: &SpectralCube) -> Result<SceneStats, StatsError> {
    let mut acc = StatsAccumulator::new(cube.bands());
    for p in 0..cube.n_pixels() {
        acc.push_pixel(cube.pixel(p))?;
    }
    acc.finalize()
}

/// Merge two finalized statistics as if their pixel sets were concatenated.
///
/// Raw sums are added entrywise, so the operation is commutative and, up to
/// roundoff, associative. The empty statistics value is the identity.
pub fn merge_stats(a: &SceneStats, b: &SceneStats) -> Result<SceneStats, StatsError> {
    if a.bands() != b.bands() {
        return Err(StatsError::BandCountMismatch {
            expected: a.bands(),
            actual: b.bands(),
        });
    }
    let n = a.n_pixels + b.n_pixels;
    if n == 0 {
        return Err(StatsError::EmptyCube);
    }
    let bands = a.bands();
    let raw_sum: Vec<f64> = a.raw_sum.iter().zip(&b.raw_sum).map(|(x, y)| x + y).collect();
    let raw_outer: Vec<f64> = a
        .raw_outer
        .iter()
        .zip(&b.raw_outer)
        .map(|(x, y)| x + y)
        .collect();
    let nf = n as f64;
    let mean: Vec<f64> = raw_sum.iter().map(|s| s / nf).collect();
    let correlation =
        SymMatrix::from_fn(bands, |i, j| raw_outer[packed(i.min(j), i.max(j), bands)] / nf);
    let covariance = covariance_from(&correlation, &mean);
    Ok(SceneStats {
        n_pixels: n,
        mean,
        correlation,
        covariance,
        raw_sum,
        raw_outer,
    })
}

/// Statistics of the cube extended with a constant all-one band.
///
/// The augmented mean is (m, 1), the augmented correlation is
/// [[R, m], [m', 1]], and the augmented covariance follows as
/// R~ - m~ m~' (its new row and column are zero: the added band has no
/// variance). Raw sums extend exactly, so merging still works.
pub fn augment_stats(stats: &SceneStats) -> SceneStats {
    let l = stats.bands();
    let mut mean = stats.mean.clone();
    mean.push(1.0);
    let correlation = SymMatrix::from_fn(l + 1, |i, j| match (i == l, j == l) {
        (false, false) => stats.correlation.get(i, j),
        (false, true) => stats.mean[i],
        (true, false) => stats.mean[j],
        (true, true) => 1.0,
    });
    let covariance = covariance_from(&correlation, &mean);
    let mut raw_sum = stats.raw_sum.clone();
    raw_sum.push(stats.n_pixels as f64);
    let mut raw_outer = vec![0.0; (l + 1) * (l + 2) / 2];
    for i in 0..l {
        for j in i..l {
            raw_outer[packed(i, j, l + 1)] = stats.raw_outer[packed(i, j, l)];
        }
        raw_outer[packed(i, l, l + 1)] = stats.raw_sum[i];
    }
    raw_outer[packed(l, l, l + 1)] = stats.n_pixels as f64;
    SceneStats {
        n_pixels: stats.n_pixels,
        mean,
        correlation,
        covariance,
        raw_sum,
        raw_outer,
    }
}
