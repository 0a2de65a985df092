//! Exit-code policy and small file helpers shared by the subcommands.
//!
//! Exit statuses are part of the tool's contract: 0 means success (and for
//! `verify`, certified), 1 means a verification check found a violation,
//! 2 means the invocation or configuration was wrong, 3 means the math hit
//! a degeneracy in the data (singular statistics and friends), 4 means a
//! file could not be read or written.

use specdet::detectors::DetectorError;
use specdet::io::IoError;
use specdet::stats::StatsError;
use specdet::synth::SynthError;
use specdet::verify::VerifyError;
use std::path::{Path, PathBuf};

pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// A failed run: what to print and what status to exit with.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        fail(EXIT_IO, e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Failure {
        fail(EXIT_IO, e.to_string())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Failure {
        fail(EXIT_USAGE, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Failure {
        fail(EXIT_NUMERICAL, e.to_string())
    }
}

impl From<DetectorError> for Failure {
    fn from(e: DetectorError) -> Failure {
        let code = match e {
            DetectorError::DimensionMismatch { .. }
            | DetectorError::EmptySubset
            | DetectorError::BandOutOfRange { .. } => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        fail(code, e.to_string())
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Failure {
        match e {
            VerifyError::Detector(inner) => inner.into(),
            VerifyError::Stats(inner) => inner.into(),
            VerifyError::SubsetEnumerationTooLarge { .. } | VerifyError::SubsetNotProper(_) => {
                fail(EXIT_USAGE, e.to_string())
            }
            VerifyError::DimensionMismatch { .. } => fail(EXIT_USAGE, e.to_string()),
            VerifyError::DegenerateVariance | VerifyError::DegenerateTruth => {
                fail(EXIT_NUMERICAL, e.to_string())
            }
        }
    }
}

/// Write through a temporary sibling and rename, so readers never observe a
/// half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Turn `--input` into a header/payload path pair. Accepts the header path,
/// the payload path, or a bare stem.
pub fn resolve_cube_paths(input: &Path) -> Result<(PathBuf, PathBuf), Failure> {
    let ext = input
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (hdr, img) = match ext.as_deref() {
        Some("hdr") => (input.to_path_buf(), input.with_extension("img")),
        Some("img") | Some("dat") => (input.with_extension("hdr"), input.to_path_buf()),
        _ => {
            let mut hdr = input.as_os_str().to_os_string();
            hdr.push(".hdr");
            let mut img = input.as_os_str().to_os_string();
            img.push(".img");
            (PathBuf::from(hdr), PathBuf::from(img))
        }
    };
    if !hdr.exists() {
        return Err(fail(
            EXIT_IO,
            format!("no cube header at {}", hdr.display()),
        ));
    }
    if !img.exists() {
        return Err(fail(
            EXIT_IO,
            format!("no cube payload at {}", img.display()),
        ));
    }
    Ok((hdr, img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_paths_resolve_from_header_payload_or_stem() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("scene.hdr");
        let img = dir.path().join("scene.img");
        std::fs::write(&hdr, "ENVI\n").unwrap();
        std::fs::write(&img, []).unwrap();
        for input in ["scene.hdr", "scene.img", "scene"] {
            let (h, i) = resolve_cube_paths(&dir.path().join(input)).unwrap();
            assert_eq!(h, hdr, "{input}");
            assert_eq!(i, img, "{input}");
        }
    }

    #[test]
    fn missing_cube_reports_the_path_it_tried() {
        let failure = resolve_cube_paths(Path::new("/nonexistent/scene")).unwrap_err();
        assert_eq!(failure.code, EXIT_IO);
        assert!(failure.message.contains("/nonexistent/scene.hdr"));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
