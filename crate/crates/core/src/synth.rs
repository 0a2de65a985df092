//! Seeded synthetic scenes: correlated Gaussian background, rectangular
//! constant-signature target.
//!
//! Reproducibility is a contract here, not a convenience. The generator is
//! SplitMix64 (state advances by 0x9E3779B97F4A7C15; output mixes with two
//! xor-shift-multiply rounds, constants 0xBF58476D1CE4E5B9 and
//! 0x94D049BB133111EB, final shift 31), which is trivial to reimplement
//! anywhere. Normals come from the trigonometric Box-Muller transform: each
//! pair consumes exactly two generator draws, u1 in (0,1] and u2 in [0,1),
//! giving sqrt(-2 ln u1) * (cos, sin)(2 pi u2). The second normal of a pair
//! is cached and handed out before anything new is drawn, and the cache
//! survives across pixels, so one scene consumes one contiguous stream.
//! Background values are drawn for every pixel, including those the target
//! rectangle later overwrites; moving the rectangle never shifts the
//! background.

use crate::detectors::TargetSignature;
use crate::linalg::SymMatrix;
use crate::stats::SpectralCube;
use thiserror::Error;

/// Errors from scene configuration and generation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    /// Target rectangle is empty or leaves the image grid.
    #[error("invalid target rectangle: {0}")]
    InvalidRect(String),

    /// Background covariance has a negative direction.
    #[error("background covariance is not positive semidefinite: pivot {pivot:.6e} at index {index}")]
    NotPsdCovariance { index: usize, pivot: f64 },

    /// Config text or field values could not be interpreted.
    #[error("scene config: {0}")]
    Config(String),

    /// Mean, covariance, or signature length disagrees with the band count.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// SplitMix64: 64 bits of state, one add and two mixing rounds per draw.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), 53 significant bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Standard normal stream: Box-Muller on a SplitMix64, pairs cached.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: SplitMix64::new(seed),
            spare: None,
        }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 is shifted into (0, 1] so the log never sees zero.
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
        let u2 = self.rng.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Lower-triangular factor of a positive semidefinite matrix. Zero pivots
/// are tolerated (their columns become zero directions), negative ones are
/// not.
fn psd_factor(cov: &SymMatrix) -> Result<Vec<f64>, SynthError> {
    let n = cov.order();
    let max_diag = (0..n).map(|i| cov.get(i, i).abs()).fold(0.0, f64::max);
    let tolerance = n as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = cov.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -tolerance {
            return Err(SynthError::NotPsdCovariance { index: j, pivot: d });
        }
        if d <= tolerance {
            // Flat direction: contributes nothing to the samples.
            continue;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = cov.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(l)
}

/// Draw `n` samples from N(mean, cov). Sample i is row i of the result.
pub fn sample_mvn(
    mean: &[f64],
    cov: &SymMatrix,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SynthError> {
    if cov.order() != mean.len() {
        return Err(SynthError::DimensionMismatch(format!(
            "mean length {} vs covariance order {}",
            mean.len(),
            cov.order()
        )));
    }
    let bands = mean.len();
    let factor = psd_factor(cov)?;
    let mut stream = NormalStream::new(seed);
    let mut samples = Vec::with_capacity(n);
    let mut z = vec![0.0; bands];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = stream.next();
        }
        let mut x = mean.to_vec();
        for i in 0..bands {
            let row = &factor[i * bands..i * bands + i + 1];
            for (k, l) in row.iter().enumerate() {
                x[i] += l * z[k];
            }
        }
        samples.push(x);
    }
    Ok(samples)
}

/// Axis-aligned rectangle: top-left corner plus extent, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0
            && row < self.row0 + self.height
            && col >= self.col0
            && col < self.col0 + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Everything needed to generate a scene deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub seed: u64,
    pub background_mean: Vec<f64>,
    pub background_covariance: SymMatrix,
    pub target_rect: Rect,
    pub target_signature: Vec<f64>,
}

impl Default for SceneConfig {
    /// The two-band demonstration scene: 50x50 standard-normal background
    /// with 0.95 inter-band correlation and a centered 5x5 target at
    /// (1.5, 1.5).
    fn default() -> Self {
        SceneConfig::default_for_bands(2)
    }
}

impl SceneConfig {
    /// The demonstration scene generalized to L bands: zero mean, unit
    /// variance, 0.95 correlation between every pair of bands, target
    /// signature 1.5 in every band.
    pub fn default_for_bands(bands: usize) -> Self {
        SceneConfig {
            rows: 50,
            cols: 50,
            bands,
            seed: 42,
            background_mean: vec![0.0; bands],
            background_covariance: SymMatrix::from_fn(bands, |i, j| {
                if i == j {
                    1.0
                } else {
                    0.95
                }
            }),
            target_rect: Rect {
                row0: 22,
                col0: 22,
                height: 5,
                width: 5,
            },
            target_signature: vec![1.5; bands],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.rows == 0 || self.cols == 0 || self.bands == 0 {
            return Err(SynthError::Config(
                "rows, cols, and bands must be positive".into(),
            ));
        }
        if self.background_mean.len() != self.bands {
            return Err(SynthError::DimensionMismatch(format!(
                "background_mean has {} entries for {} bands",
                self.background_mean.len(),
                self.bands
            )));
        }
        if self.background_covariance.order() != self.bands {
            return Err(SynthError::DimensionMismatch(format!(
                "background_covariance has order {} for {} bands",
                self.background_covariance.order(),
                self.bands
            )));
        }
        if self.target_signature.len() != self.bands {
            return Err(SynthError::DimensionMismatch(format!(
                "target_signature has {} entries for {} bands",
                self.target_signature.len(),
                self.bands
            )));
        }
        let r = &self.target_rect;
        if r.height == 0 || r.width == 0 {
            return Err(SynthError::InvalidRect("rectangle has zero area".into()));
        }
        if r.row0 + r.height > self.rows || r.col0 + r.width > self.cols {
            return Err(SynthError::InvalidRect(format!(
                "rectangle ({},{})+{}x{} leaves the {}x{} grid",
                r.row0, r.col0, r.height, r.width, self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Parse `key = value` lines. Unknown keys are errors; omitted keys keep
    /// the default for the configured band count. Lists are comma-separated;
    /// `target_rect` is `row0,col0,height,width`. Lines starting with `#`
    /// are comments.
    pub fn from_key_value_text(text: &str) -> Result<SceneConfig, SynthError> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SynthError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let lookup = |name: &str| {
            pairs
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v.as_str())
        };
        for (key, _) in &pairs {
            const KNOWN: [&str; 8] = [
                "rows",
                "cols",
                "bands",
                "seed",
                "background_mean",
                "background_covariance",
                "target_rect",
                "target_signature",
            ];
            if !KNOWN.contains(&key.as_str()) {
                return Err(SynthError::Config(format!("unknown key `{key}`")));
            }
        }

        let bands = match lookup("bands") {
            Some(v) => parse_usize("bands", v)?,
            None => 2,
        };
        let mut config = SceneConfig::default_for_bands(bands);
        if let Some(v) = lookup("rows") {
            config.rows = parse_usize("rows", v)?;
        }
        if let Some(v) = lookup("cols") {
            config.cols = parse_usize("cols", v)?;
        }
        if let Some(v) = lookup("seed") {
            config.seed = v
                .parse::<u64>()
                .map_err(|_| SynthError::Config(format!("seed: invalid integer `{v}`")))?;
        }
        if let Some(v) = lookup("background_mean") {
            config.background_mean = parse_f64_list("background_mean", v)?;
        }
        if let Some(v) = lookup("background_covariance") {
            let entries = parse_f64_list("background_covariance", v)?;
            if entries.len() != bands * bands {
                return Err(SynthError::Config(format!(
                    "background_covariance needs {} entries, got {}",
                    bands * bands,
                    entries.len()
                )));
            }
            config.background_covariance = SymMatrix::new(bands, entries);
        }
        if let Some(v) = lookup("target_signature") {
            config.target_signature = parse_f64_list("target_signature", v)?;
        }
        if let Some(v) = lookup("target_rect") {
            let parts = parse_f64_list("target_rect", v)?;
            if parts.len() != 4 {
                return Err(SynthError::Config(
                    "target_rect needs row0,col0,height,width".into(),
                ));
            }
            config.target_rect = Rect {
                row0: parts[0] as usize,
                col0: parts[1] as usize,
                height: parts[2] as usize,
                width: parts[3] as usize,
            };
        } else {
            // Re-center the default rectangle for non-default grids.
            let height = config.target_rect.height.min(config.rows);
            let width = config.target_rect.width.min(config.cols);
            config.target_rect = Rect {
                row0: (config.rows - height) / 2,
                col0: (config.cols - width) / 2,
                height,
                width,
            };
        }
        config.validate()?;
        Ok(config)
    }

    /// The inverse of [`SceneConfig::from_key_value_text`], with one key per
    /// line in a fixed order.
    pub fn to_key_value_text(&self) -> String {
        let join = |values: &[f64]| {
            values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        out.push_str(&format!("rows = {}\n", self.rows));
        out.push_str(&format!("cols = {}\n", self.cols));
        out.push_str(&format!("bands = {}\n", self.bands));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!(
            "background_mean = {}\n",
            join(&self.background_mean)
        ));
        out.push_str(&format!(
            "background_covariance = {}\n",
            join(self.background_covariance.entries())
        ));
        out.push_str(&format!(
            "target_rect = {},{},{},{}\n",
            self.target_rect.row0,
            self.target_rect.col0,
            self.target_rect.height,
            self.target_rect.width
        ));
        out.push_str(&format!(
            "target_signature = {}\n",
            join(&self.target_signature)
        ));
        out
    }
}

fn parse_usize(field: &str, value: &str) -> Result<usize, SynthError> {
    value
        .parse::<usize>()
        .map_err(|_| SynthError::Config(format!("{field}: invalid integer `{value}`")))
}

fn parse_f64_list(field: &str, value: &str) -> Result<Vec<f64>, SynthError> {
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| SynthError::Config(format!("{field}: invalid number `{part}`")))
        })
        .collect()
}

/// A generated scene: the cube, the per-pixel target mask (row-major), and
/// the signature that was planted.
#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub cube: SpectralCube,
    pub truth: Vec<bool>,
    pub target: TargetSignature,
}

/// Generate the scene a config describes. Same config, same bytes.
pub fn generate_scene(config: &SceneConfig) -> Result<GeneratedScene, SynthError> {
    config.validate()?;
    let bands = config.bands;
    let factor = psd_factor(&config.background_covariance)?;
    let mut stream = NormalStream::new(config.seed);
    let n = config.rows * config.cols;
    let mut values = Vec::with_capacity(n * bands);
    let mut z = vec![0.0; bands];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = stream.next();
        }
        for i in 0..bands {
            let mut x = config.background_mean[i];
            for k in 0..=i {
                x += factor[i * bands + k] * z[k];
            }
            values.push(x);
        }
    }
    let mut truth = vec![false; n];
    for row in 0..config.rows {
        for col in 0..config.cols {
            if config.target_rect.contains(row, col) {
                let p = row * config.cols + col;
                truth[p] = true;
                values[p * bands..(p + 1) * bands].copy_from_slice(&config.target_signature);
            }
        }
    }
    let cube = SpectralCube::new(config.rows, config.cols, bands, values)
        .expect("generated dimensions are consistent");
    Ok(GeneratedScene {
        cube,
        truth,
        target: TargetSignature::new(config.target_signature.clone()),
    })
}
