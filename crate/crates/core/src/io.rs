//! ENVI-style cube files and the flat text formats used around them.
//!
//! A cube on disk is a text header plus a raw payload. The header is the
//! magic line `ENVI` followed by `key = value` lines; values in braces may
//! span lines. The payload is a dense array whose element order is set by
//! the interleave: `bsq` stores whole bands one after another, `bil` stores
//! one row of every band before the next row, `bip` stores every band of a
//! pixel together. Readers accept all three plus u16, f32, and f64 samples
//! in either byte order, and always return the same in-memory cube, so the
//! on-disk layout never leaks into the math.
//!
//! Detection maps additionally export as `row,col,score` CSV (full
//! precision, reparses to identical bits) and as 16-bit PGM for quick
//! visual inspection (min-max scaled, so absolute score values are not
//! preserved there).

use crate::detectors::DetectionMap;
use crate::stats::{SpectralCube, StatsError};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Errors from reading or writing cube and map files.
#[derive(Debug, Error)]
pub enum IoError {
    /// Header does not start with the `ENVI` magic line.
    #[error("missing ENVI magic line")]
    MissingMagic,

    /// A field the reader cannot default is absent.
    #[error("missing required header field `{0}`")]
    MissingRequiredField(String),

    /// A braced value never closes.
    #[error("unterminated braced value for `{0}`")]
    MalformedList(String),

    /// A malformed CSV record.
    #[error("malformed record `{0}`")]
    MalformedRecord(String),

    /// A field holds something that does not parse as a number.
    #[error("field `{field}`: invalid number `{value}`")]
    InvalidNumber { field: String, value: String },

    /// A data type code this reader does not handle.
    #[error("unsupported data type code {0} (supported: 4, 5, 12)")]
    UnsupportedDataType(u8),

    /// An interleave outside bsq, bil, bip.
    #[error("unsupported interleave `{0}`")]
    UnsupportedInterleave(String),

    /// A byte order outside 0 and 1.
    #[error("unsupported byte order `{0}`")]
    UnsupportedByteOrder(String),

    /// Payload length disagrees with the header geometry.
    #[error("payload holds {actual} bytes, header implies {expected}")]
    PayloadSizeMismatch { expected: usize, actual: usize },

    /// Writing u16 would change values and the caller did not allow that.
    #[error("value {value} at index {index} does not fit u16 exactly; pass allow_lossy to round and clamp")]
    LossyConversionRequired { index: usize, value: f64 },

    /// The decoded payload does not form a valid cube.
    #[error(transparent)]
    Cube(#[from] StatsError),

    /// Underlying file system failure.
    #[error(transparent)]
    File(#[from] std::io::Error),
}

/// Sample encodings this reader and writer support, with their ENVI codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnviDataType {
    F32,
    F64,
    U16,
}

impl EnviDataType {
    pub fn code(self) -> u8 {
        match self {
            EnviDataType::F32 => 4,
            EnviDataType::F64 => 5,
            EnviDataType::U16 => 12,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, IoError> {
        match code {
            4 => Ok(EnviDataType::F32),
            5 => Ok(EnviDataType::F64),
            12 => Ok(EnviDataType::U16),
            other => Err(IoError::UnsupportedDataType(other)),
        }
    }

    pub fn bytes_per_sample(self) -> usize {
        match self {
            EnviDataType::F32 => 4,
            EnviDataType::F64 => 8,
            EnviDataType::U16 => 2,
        }
    }
}

/// Payload element orderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    pub fn name(self) -> &'static str {
        match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, IoError> {
        match name.to_ascii_lowercase().as_str() {
            "bsq" => Ok(Interleave::Bsq),
            "bil" => Ok(Interleave::Bil),
            "bip" => Ok(Interleave::Bip),
            other => Err(IoError::UnsupportedInterleave(other.to_string())),
        }
    }
}

/// Payload endianness; ENVI spells these 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    pub fn code(self) -> u8 {
        match self {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        }
    }
}

/// Parsed header. `samples` counts columns and `lines` counts rows, matching
/// the conventional field names.
#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub data_type: EnviDataType,
    pub interleave: Interleave,
    pub byte_order: ByteOrder,
    pub header_offset: usize,
    pub description: Option<String>,
    pub band_names: Option<Vec<String>>,
    pub wavelengths: Option<Vec<f64>>,
    /// Keys this reader has no meaning for, kept verbatim in file order.
    pub extra: Vec<(String, String)>,
}

impl EnviHeader {
    /// Minimal header for a cube with the writer's defaults: f64 samples,
    /// band-sequential, little-endian.
    pub fn for_cube(cube: &SpectralCube) -> EnviHeader {
        EnviHeader {
            samples: cube.cols(),
            lines: cube.rows(),
            bands: cube.bands(),
            data_type: EnviDataType::F64,
            interleave: Interleave::Bsq,
            byte_order: ByteOrder::Little,
            header_offset: 0,
            description: None,
            band_names: None,
            wavelengths: None,
            extra: Vec::new(),
        }
    }

    pub fn payload_len(&self) -> usize {
        self.samples * self.lines * self.bands * self.data_type.bytes_per_sample()
    }
}

fn normalize_key(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

fn parse_header_field<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, IoError> {
    value.trim().parse::<T>().map_err(|_| IoError::InvalidNumber {
        field: field.to_string(),
        value: value.trim().to_string(),
    })
}

fn strip_braces(value: &str) -> &str {
    value
        .trim()
        .strip_prefix('{')
        .and_then(|v| v.strip_suffix('}'))
        .map(str::trim)
        .unwrap_or(value.trim())
}

/// Parse header text into its fields. Keys are case-insensitive; byte order
/// defaults to little-endian and header offset to zero when absent.
pub fn parse_envi_header(text: &str) -> Result<EnviHeader, IoError> {
    let mut lines = text.lines();
    let magic = loop {
        match lines.next() {
            Some(line) if line.trim().is_empty() => continue,
            Some(line) => break line.trim(),
            None => return Err(IoError::MissingMagic),
        }
    };
    if magic != "ENVI" {
        return Err(IoError::MissingMagic);
    }

    let mut pairs: Vec<(String, String)> = Vec::new();
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((raw_key, raw_value)) = line.split_once('=') else {
            continue;
        };
        let key = normalize_key(raw_key);
        let mut value = raw_value.trim().to_string();
        if value.starts_with('{') && !value.contains('}') {
            let mut closed = false;
            while let Some(continuation) = lines.next() {
                value.push(' ');
                value.push_str(continuation.trim());
                if continuation.contains('}') {
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(IoError::MalformedList(key));
            }
        }
        pairs.push((key, value));
    }

    let mut take = |name: &str| -> Option<String> {
        pairs
            .iter()
            .position(|(k, _)| k == name)
            .map(|i| pairs.remove(i).1)
    };
    let require = |field: &str, value: Option<String>| {
        value.ok_or_else(|| IoError::MissingRequiredField(field.to_string()))
    };

    let samples = parse_header_field("samples", &require("samples", take("samples"))?)?;
    let lines_field = parse_header_field("lines", &require("lines", take("lines"))?)?;
    let bands = parse_header_field("bands", &require("bands", take("bands"))?)?;
    let data_type =
        EnviDataType::from_code(parse_header_field("data type", &require("data type", take("data type"))?)?)?;
    let interleave = Interleave::from_name(&require("interleave", take("interleave"))?)?;
    let byte_order = match take("byte order") {
        None => ByteOrder::Little,
        Some(v) => match v.trim() {
            "0" => ByteOrder::Little,
            "1" => ByteOrder::Big,
            other => return Err(IoError::UnsupportedByteOrder(other.to_string())),
        },
    };
    let header_offset = match take("header offset") {
        None => 0,
        Some(v) => parse_header_field("header offset", &v)?,
    };
    let description = take("description").map(|v| strip_braces(&v).to_string());
    let band_names = take("band names").map(|v| {
        strip_braces(&v)
            .split(',')
            .map(|name| name.trim().to_string())
            .collect::<Vec<_>>()
    });
    let wavelengths = match take("wavelength") {
        None => None,
        Some(v) => Some(
            strip_braces(&v)
                .split(',')
                .map(|part| parse_header_field::<f64>("wavelength", part))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    take("file type"); // writer-constant, nothing to keep

    Ok(EnviHeader {
        samples,
        lines: lines_field,
        bands,
        data_type,
        interleave,
        byte_order,
        header_offset,
        description,
        band_names,
        wavelengths,
        extra: pairs,
    })
}

/// Render a header as text, with a stable key order.
pub fn write_envi_header(header: &EnviHeader) -> String {
    let mut out = String::from("ENVI\n");
    if let Some(description) = &header.description {
        let _ = writeln!(out, "description = {{{description}}}");
    }
    let _ = writeln!(out, "samples = {}", header.samples);
    let _ = writeln!(out, "lines = {}", header.lines);
    let _ = writeln!(out, "bands = {}", header.bands);
    let _ = writeln!(out, "header offset = {}", header.header_offset);
    let _ = writeln!(out, "file type = ENVI Standard");
    let _ = writeln!(out, "data type = {}", header.data_type.code());
    let _ = writeln!(out, "interleave = {}", header.interleave.name());
    let _ = writeln!(out, "byte order = {}", header.byte_order.code());
    if let Some(names) = &header.band_names {
        let _ = writeln!(out, "band names = {{{}}}", names.join(", "));
    }
    if let Some(wavelengths) = &header.wavelengths {
        let rendered = wavelengths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "wavelength = {{{rendered}}}");
    }
    for (key, value) in &header.extra {
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

/// Byte position of one sample within the payload, before the per-sample
/// width is applied.
fn file_index(
    interleave: Interleave,
    rows: usize,
    cols: usize,
    bands: usize,
    row: usize,
    col: usize,
    band: usize,
) -> usize {
    match interleave {
        Interleave::Bsq => band * rows * cols + row * cols + col,
        Interleave::Bil => row * bands * cols + band * cols + col,
        Interleave::Bip => (row * cols + col) * bands + band,
    }
}

fn decode_sample(data_type: EnviDataType, byte_order: ByteOrder, bytes: &[u8]) -> f64 {
    match data_type {
        EnviDataType::F32 => {
            let raw: [u8; 4] = bytes.try_into().unwrap();
            let v = match byte_order {
                ByteOrder::Little => f32::from_le_bytes(raw),
                ByteOrder::Big => f32::from_be_bytes(raw),
            };
            v as f64
        }
        EnviDataType::F64 => {
            let raw: [u8; 8] = bytes.try_into().unwrap();
            match byte_order {
                ByteOrder::Little => f64::from_le_bytes(raw),
                ByteOrder::Big => f64::from_be_bytes(raw),
            }
        }
        EnviDataType::U16 => {
            let raw: [u8; 2] = bytes.try_into().unwrap();
            let v = match byte_order {
                ByteOrder::Little => u16::from_le_bytes(raw),
                ByteOrder::Big => u16::from_be_bytes(raw),
            };
            v as f64
        }
    }
}

/// Decode a payload into the canonical in-memory cube. The payload must be
/// exactly `header offset` bytes of preamble plus the implied sample data.
pub fn read_cube(header: &EnviHeader, payload: &[u8]) -> Result<SpectralCube, IoError> {
    let expected = header.header_offset + header.payload_len();
    if payload.len() != expected {
        return Err(IoError::PayloadSizeMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let data = &payload[header.header_offset..];
    let (rows, cols, bands) = (header.lines, header.samples, header.bands);
    let bps = header.data_type.bytes_per_sample();
    let mut values = Vec::with_capacity(rows * cols * bands);
    for row in 0..rows {
        for col in 0..cols {
            for band in 0..bands {
                let src = file_index(header.interleave, rows, cols, bands, row, col, band) * bps;
                values.push(decode_sample(
                    header.data_type,
                    header.byte_order,
                    &data[src..src + bps],
                ));
            }
        }
    }
    Ok(SpectralCube::new(rows, cols, bands, values)?)
}

/// How a cube should be laid out on disk.
#[derive(Debug, Clone)]
pub struct EnviWriteOptions {
    pub data_type: EnviDataType,
    pub interleave: Interleave,
    pub byte_order: ByteOrder,
    pub description: Option<String>,
    pub band_names: Option<Vec<String>>,
    /// Permit rounding and clamping when writing u16 samples. Writing f32
    /// always rounds to the nearest representable value and needs no flag.
    pub allow_lossy: bool,
}

impl Default for EnviWriteOptions {
    fn default() -> Self {
        EnviWriteOptions {
            data_type: EnviDataType::F64,
            interleave: Interleave::Bsq,
            byte_order: ByteOrder::Little,
            description: None,
            band_names: None,
            allow_lossy: false,
        }
    }
}

fn encode_sample(
    value: f64,
    data_type: EnviDataType,
    byte_order: ByteOrder,
    out: &mut [u8],
) {
    match data_type {
        EnviDataType::F32 => {
            let raw = match byte_order {
                ByteOrder::Little => (value as f32).to_le_bytes(),
                ByteOrder::Big => (value as f32).to_be_bytes(),
            };
            out.copy_from_slice(&raw);
        }
        EnviDataType::F64 => {
            let raw = match byte_order {
                ByteOrder::Little => value.to_le_bytes(),
                ByteOrder::Big => value.to_be_bytes(),
            };
            out.copy_from_slice(&raw);
        }
        EnviDataType::U16 => {
            let clamped = value.round().clamp(0.0, 65535.0) as u16;
            let raw = match byte_order {
                ByteOrder::Little => clamped.to_le_bytes(),
                ByteOrder::Big => clamped.to_be_bytes(),
            };
            out.copy_from_slice(&raw);
        }
    }
}

/// Encode a cube as header text plus payload bytes.
pub fn write_cube(
    cube: &SpectralCube,
    options: &EnviWriteOptions,
) -> Result<(String, Vec<u8>), IoError> {
    if options.data_type == EnviDataType::U16 && !options.allow_lossy {
        for (index, &value) in cube.values().iter().enumerate() {
            if value.fract() != 0.0 || !(0.0..=65535.0).contains(&value) {
                return Err(IoError::LossyConversionRequired { index, value });
            }
        }
    }
    let header = EnviHeader {
        data_type: options.data_type,
        interleave: options.interleave,
        byte_order: options.byte_order,
        description: options.description.clone(),
        band_names: options.band_names.clone(),
        ..EnviHeader::for_cube(cube)
    };
    let bps = options.data_type.bytes_per_sample();
    let (rows, cols, bands) = (cube.rows(), cube.cols(), cube.bands());
    let mut payload = vec![0u8; rows * cols * bands * bps];
    for row in 0..rows {
        for col in 0..cols {
            let pixel = cube.pixel_at(row, col);
            for (band, &value) in pixel.iter().enumerate() {
                let dst = file_index(options.interleave, rows, cols, bands, row, col, band) * bps;
                encode_sample(value, options.data_type, options.byte_order, &mut payload[dst..dst + bps]);
            }
        }
    }
    Ok((write_envi_header(&header), payload))
}

/// Read a cube from a header file and payload file pair.
pub fn load_cube(header_path: &Path, payload_path: &Path) -> Result<(EnviHeader, SpectralCube), IoError> {
    let header = parse_envi_header(&std::fs::read_to_string(header_path)?)?;
    let payload = std::fs::read(payload_path)?;
    let cube = read_cube(&header, &payload)?;
    Ok((header, cube))
}

/// Write a cube to a header file and payload file pair.
pub fn save_cube(
    header_path: &Path,
    payload_path: &Path,
    cube: &SpectralCube,
    options: &EnviWriteOptions,
) -> Result<(), IoError> {
    let (header, payload) = write_cube(cube, options)?;
    std::fs::write(header_path, header)?;
    std::fs::write(payload_path, payload)?;
    Ok(())
}

/// Render a detection map as `row,col,score` lines. Scores use the shortest
/// decimal form that parses back to the identical f64.
pub fn map_to_csv(map: &DetectionMap) -> String {
    let mut out = String::new();
    for row in 0..map.rows() {
        for col in 0..map.cols() {
            let _ = writeln!(out, "{row},{col},{}", map.score_at(row, col));
        }
    }
    out
}

/// Parse `row,col,score` lines back into triples, in file order.
pub fn parse_map_csv(text: &str) -> Result<Vec<(usize, usize, f64)>, IoError> {
    let mut records = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (Some(row), Some(col), Some(score)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(IoError::MalformedRecord(line.to_string()));
        };
        records.push((
            parse_header_field("row", row)?,
            parse_header_field("col", col)?,
            parse_header_field("score", score)?,
        ));
    }
    Ok(records)
}

/// Render a detection map as a 16-bit binary PGM, min-max scaled to the full
/// dynamic range. A constant map renders black.
pub fn map_to_pgm16(map: &DetectionMap) -> Vec<u8> {
    let scores = map.scores();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let mut out = format!("P5\n{} {}\n65535\n", map.cols(), map.rows()).into_bytes();
    for &score in scores {
        let level = if range == 0.0 {
            0u16
        } else {
            ((score - min) / range * 65535.0).round() as u16
        };
        // PGM samples above 255 are big-endian by definition.
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

/// Render a detection map as a one-band ENVI cube (f64, bsq, little-endian),
/// named after the detector that produced it.
pub fn map_to_envi(map: &DetectionMap) -> (String, Vec<u8>) {
    let cube = SpectralCube::new(map.rows(), map.cols(), 1, map.scores().to_vec())
        .expect("detection maps hold finite scores");
    let options = EnviWriteOptions {
        band_names: Some(vec![format!("{} score", map.kind())]),
        ..EnviWriteOptions::default()
    };
    write_cube(&cube, &options).expect("f64 export is lossless")
}

/// Render a per-pixel truth mask as `row,col,flag` lines with 0/1 flags.
pub fn truth_to_csv(truth: &[bool], rows: usize, cols: usize) -> String {
    let mut out = String::new();
    for row in 0..rows {
        for col in 0..cols {
            let flag = u8::from(truth[row * cols + col]);
            let _ = writeln!(out, "{row},{col},{flag}");
        }
    }
    out
}

/// Parse `row,col,flag` lines back into triples, in file order.
pub fn parse_truth_csv(text: &str) -> Result<Vec<(usize, usize, bool)>, IoError> {
    let mut records = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (Some(row), Some(col), Some(flag)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(IoError::MalformedRecord(line.to_string()));
        };
        let flag = match flag.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(IoError::InvalidNumber {
                    field: "flag".to_string(),
                    value: other.to_string(),
                })
            }
        };
        records.push((
            parse_header_field("row", row)?,
            parse_header_field("col", col)?,
            flag,
        ));
    }
    Ok(records)
}

/// Render a spectrum as one value per line.
pub fn signature_to_lines(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

/// Parse a one-value-per-line spectrum. Blank lines and `#` comments are
/// skipped.
pub fn parse_signature_lines(text: &str) -> Result<Vec<f64>, IoError> {
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(parse_header_field("signature", line)?);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::DetectorKind;
    use proptest::prelude::*;

    fn two_by_one_cube() -> SpectralCube {
        // Pixel (0,0) holds (1,2), pixel (1,0) holds (3,4).
        SpectralCube::new(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    fn f64_le_payload(values: &[f64]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn header(interleave: Interleave) -> EnviHeader {
        EnviHeader {
            samples: 1,
            lines: 2,
            bands: 2,
            data_type: EnviDataType::F64,
            interleave,
            byte_order: ByteOrder::Little,
            header_offset: 0,
            description: None,
            band_names: None,
            wavelengths: None,
            extra: Vec::new(),
        }
    }

    #[test]
    fn minimal_header_parses_with_defaults() {
        let text = "ENVI\nsamples = 3\nlines = 2\nbands = 4\ndata type = 5\ninterleave = BIP\n";
        let header = parse_envi_header(text).unwrap();
        assert_eq!(header.samples, 3);
        assert_eq!(header.lines, 2);
        assert_eq!(header.bands, 4);
        assert_eq!(header.data_type, EnviDataType::F64);
        assert_eq!(header.interleave, Interleave::Bip);
        assert_eq!(header.byte_order, ByteOrder::Little);
        assert_eq!(header.header_offset, 0);
        assert!(header.extra.is_empty());
    }

    #[test]
    fn magic_line_is_mandatory() {
        assert!(matches!(
            parse_envi_header("samples = 1\n"),
            Err(IoError::MissingMagic)
        ));
        assert!(matches!(parse_envi_header(""), Err(IoError::MissingMagic)));
    }

    #[test]
    fn missing_band_count_is_reported_by_name() {
        let text = "ENVI\nsamples = 3\nlines = 2\ndata type = 5\ninterleave = bsq\n";
        match parse_envi_header(text) {
            Err(IoError::MissingRequiredField(field)) => assert_eq!(field, "bands"),
            other => panic!("expected missing field, got {other:?}"),
        }
    }

    #[test]
    fn braced_lists_may_span_lines() {
        let text = "ENVI\nsamples = 1\nlines = 1\nbands = 2\ndata type = 5\ninterleave = bsq\nband names = {alpha,\n beta}\n";
        let header = parse_envi_header(text).unwrap();
        assert_eq!(
            header.band_names,
            Some(vec!["alpha".to_string(), "beta".to_string()])
        );
    }

    #[test]
    fn unterminated_braced_list_is_rejected() {
        let text = "ENVI\nsamples = 1\nlines = 1\nbands = 2\ndata type = 5\ninterleave = bsq\nband names = {alpha,\n beta\n";
        assert!(matches!(
            parse_envi_header(text),
            Err(IoError::MalformedList(key)) if key == "band names"
        ));
    }

    #[test]
    fn unknown_data_type_code_is_rejected() {
        let text = "ENVI\nsamples = 1\nlines = 1\nbands = 1\ndata type = 3\ninterleave = bsq\n";
        assert!(matches!(
            parse_envi_header(text),
            Err(IoError::UnsupportedDataType(3))
        ));
    }

    #[test]
    fn unknown_interleave_is_rejected() {
        let text = "ENVI\nsamples = 1\nlines = 1\nbands = 1\ndata type = 5\ninterleave = bsqq\n";
        assert!(matches!(
            parse_envi_header(text),
            Err(IoError::UnsupportedInterleave(name)) if name == "bsqq"
        ));
    }

    #[test]
    fn keys_are_case_and_spacing_insensitive() {
        let text = "ENVI\nSAMPLES = 1\nLines = 1\nbands = 1\nData  Type = 5\nINTERLEAVE = bsq\nByte Order = 1\n";
        let header = parse_envi_header(text).unwrap();
        assert_eq!(header.byte_order, ByteOrder::Big);
    }

    #[test]
    fn unknown_keys_are_preserved() {
        let text = "ENVI\nsamples = 1\nlines = 1\nbands = 1\ndata type = 5\ninterleave = bsq\nsensor type = Unknown\n";
        let header = parse_envi_header(text).unwrap();
        assert_eq!(
            header.extra,
            vec![("sensor type".to_string(), "Unknown".to_string())]
        );
    }

    #[test]
    fn written_header_text_is_stable() {
        let mut header = header(Interleave::Bsq);
        header.samples = 3;
        header.description = Some("unit test header".to_string());
        header.band_names = Some(vec!["alpha".to_string(), "beta".to_string()]);
        let expected = "ENVI\n\
            description = {unit test header}\n\
            samples = 3\n\
            lines = 2\n\
            bands = 2\n\
            header offset = 0\n\
            file type = ENVI Standard\n\
            data type = 5\n\
            interleave = bsq\n\
            byte order = 0\n\
            band names = {alpha, beta}\n";
        assert_eq!(write_envi_header(&header), expected);
    }

    #[test]
    fn header_text_roundtrips() {
        let mut original = header(Interleave::Bil);
        original.description = Some("scene".to_string());
        original.wavelengths = Some(vec![0.45, 0.55]);
        original.extra = vec![("sensor type".to_string(), "Unknown".to_string())];
        let parsed = parse_envi_header(&write_envi_header(&original)).unwrap();
        assert_eq!(parsed, original);
    }

    #[test]
    fn bsq_layout_reads_bands_stored_whole() {
        let cube = read_cube(&header(Interleave::Bsq), &f64_le_payload(&[1.0, 3.0, 2.0, 4.0]))
            .unwrap();
        assert_eq!(cube, two_by_one_cube());
    }

    #[test]
    fn bil_layout_reads_rows_of_each_band() {
        let cube = read_cube(&header(Interleave::Bil), &f64_le_payload(&[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        assert_eq!(cube, two_by_one_cube());
    }

    #[test]
    fn bip_layout_reads_pixels_stored_whole() {
        let cube = read_cube(&header(Interleave::Bip), &f64_le_payload(&[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        assert_eq!(cube, two_by_one_cube());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let payload = f64_le_payload(&[1.0, 2.0, 3.0]);
        match read_cube(&header(Interleave::Bsq), &payload) {
            Err(IoError::PayloadSizeMismatch { expected, actual }) => {
                assert_eq!(expected, 32);
                assert_eq!(actual, 24);
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn header_offset_skips_leading_bytes() {
        let mut header = header(Interleave::Bip);
        header.header_offset = 3;
        let mut payload = vec![0xAA, 0xBB, 0xCC];
        payload.extend(f64_le_payload(&[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(read_cube(&header, &payload).unwrap(), two_by_one_cube());
    }

    #[test]
    fn u16_samples_widen_to_f64() {
        let mut header = header(Interleave::Bip);
        header.data_type = EnviDataType::U16;
        let payload = [1u16, 0, 65535, 7]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect::<Vec<_>>();
        let cube = read_cube(&header, &payload).unwrap();
        assert_eq!(cube.values(), &[1.0, 0.0, 65535.0, 7.0]);
    }

    #[test]
    fn big_endian_f64_roundtrips() {
        let cube = two_by_one_cube();
        let options = EnviWriteOptions {
            byte_order: ByteOrder::Big,
            ..EnviWriteOptions::default()
        };
        let (header_text, payload) = write_cube(&cube, &options).unwrap();
        let parsed = parse_envi_header(&header_text).unwrap();
        assert_eq!(parsed.byte_order, ByteOrder::Big);
        assert_eq!(read_cube(&parsed, &payload).unwrap(), cube);
    }

    #[test]
    fn every_interleave_reads_back_the_same_cube() {
        let cube = two_by_one_cube();
        for interleave in [Interleave::Bsq, Interleave::Bil, Interleave::Bip] {
            let options = EnviWriteOptions {
                interleave,
                ..EnviWriteOptions::default()
            };
            let (header_text, payload) = write_cube(&cube, &options).unwrap();
            let parsed = parse_envi_header(&header_text).unwrap();
            assert_eq!(read_cube(&parsed, &payload).unwrap(), cube, "{interleave:?}");
        }
    }

    #[test]
    fn writing_u16_requires_opt_in() {
        let cube = SpectralCube::new(1, 1, 2, vec![1.5, 2.0]).unwrap();
        let options = EnviWriteOptions {
            data_type: EnviDataType::U16,
            ..EnviWriteOptions::default()
        };
        match write_cube(&cube, &options) {
            Err(IoError::LossyConversionRequired { index, value }) => {
                assert_eq!(index, 0);
                assert_eq!(value, 1.5);
            }
            other => panic!("expected lossy rejection, got {other:?}"),
        }
    }

    #[test]
    fn lossy_u16_write_rounds_and_clamps() {
        let cube = SpectralCube::new(1, 1, 3, vec![-1.2, 7.5, 70000.0]).unwrap();
        let options = EnviWriteOptions {
            data_type: EnviDataType::U16,
            allow_lossy: true,
            ..EnviWriteOptions::default()
        };
        let (header_text, payload) = write_cube(&cube, &options).unwrap();
        let parsed = parse_envi_header(&header_text).unwrap();
        let read = read_cube(&parsed, &payload).unwrap();
        assert_eq!(read.values(), &[0.0, 8.0, 65535.0]);
    }

    #[test]
    fn exact_u16_integers_write_without_the_flag() {
        let cube = SpectralCube::new(1, 1, 3, vec![0.0, 300.0, 65535.0]).unwrap();
        let options = EnviWriteOptions {
            data_type: EnviDataType::U16,
            ..EnviWriteOptions::default()
        };
        let (header_text, payload) = write_cube(&cube, &options).unwrap();
        let parsed = parse_envi_header(&header_text).unwrap();
        assert_eq!(read_cube(&parsed, &payload).unwrap(), cube);
    }

    #[test]
    fn f32_write_quantizes_to_nearest_f32() {
        let cube = SpectralCube::new(1, 1, 1, vec![0.1]).unwrap();
        let options = EnviWriteOptions {
            data_type: EnviDataType::F32,
            ..EnviWriteOptions::default()
        };
        let (header_text, payload) = write_cube(&cube, &options).unwrap();
        let parsed = parse_envi_header(&header_text).unwrap();
        let read = read_cube(&parsed, &payload).unwrap();
        assert_eq!(read.values()[0], 0.1f32 as f64);
    }

    #[test]
    fn save_and_load_roundtrip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("cube.hdr");
        let img = dir.path().join("cube.img");
        let cube = two_by_one_cube();
        save_cube(&hdr, &img, &cube, &EnviWriteOptions::default()).unwrap();
        let (_, loaded) = load_cube(&hdr, &img).unwrap();
        assert_eq!(loaded, cube);
    }

    fn sample_map() -> DetectionMap {
        DetectionMap::new(1, 3, DetectorKind::Cem, vec![0.0, 1.0, 2.0]).unwrap()
    }

    #[test]
    fn map_csv_lists_every_pixel_in_row_major_order() {
        let csv = map_to_csv(&sample_map());
        assert_eq!(csv, "0,0,0\n0,1,1\n0,2,2\n");
    }

    #[test]
    fn map_csv_scores_reparse_to_identical_bits() {
        let map = DetectionMap::new(
            1,
            3,
            DetectorKind::Mf,
            vec![0.1 + 0.2, -1.0 / 3.0, 1e-300],
        )
        .unwrap();
        let records = parse_map_csv(&map_to_csv(&map)).unwrap();
        for (record, &score) in records.iter().zip(map.scores()) {
            assert_eq!(record.2.to_bits(), score.to_bits());
        }
    }

    #[test]
    fn malformed_map_record_is_rejected() {
        assert!(matches!(
            parse_map_csv("0,0\n"),
            Err(IoError::MalformedRecord(_))
        ));
    }

    #[test]
    fn pgm_scales_scores_to_the_full_range() {
        let pgm = map_to_pgm16(&sample_map());
        let expected_header = b"P5\n3 1\n65535\n";
        assert_eq!(&pgm[..expected_header.len()], expected_header);
        let samples = &pgm[expected_header.len()..];
        assert_eq!(samples, &[0u8, 0, 0x80, 0x00, 0xFF, 0xFF]);
    }

    #[test]
    fn constant_map_renders_black() {
        let map = DetectionMap::new(1, 2, DetectorKind::Acem, vec![5.0, 5.0]).unwrap();
        let pgm = map_to_pgm16(&map);
        assert_eq!(&pgm[pgm.len() - 4..], &[0u8, 0, 0, 0]);
    }

    #[test]
    fn map_envi_export_reads_back_bit_exact() {
        let map = DetectionMap::new(1, 3, DetectorKind::Cem, vec![0.25, -1.5, 0.1]).unwrap();
        let (header_text, payload) = map_to_envi(&map);
        let parsed = parse_envi_header(&header_text).unwrap();
        assert_eq!(parsed.band_names, Some(vec!["cem score".to_string()]));
        let cube = read_cube(&parsed, &payload).unwrap();
        assert_eq!(cube.values(), map.scores());
    }

    #[test]
    fn truth_csv_roundtrips() {
        let truth = vec![true, false, false, true];
        let csv = truth_to_csv(&truth, 2, 2);
        assert_eq!(csv, "0,0,1\n0,1,0\n1,0,0\n1,1,1\n");
        let records = parse_truth_csv(&csv).unwrap();
        assert_eq!(records[0], (0, 0, true));
        assert_eq!(records[2], (1, 0, false));
    }

    #[test]
    fn signature_lines_roundtrip() {
        let text = signature_to_lines(&[1.5, -0.25]);
        assert_eq!(text, "1.5\n-0.25\n");
        let parsed = parse_signature_lines("# two bands\n1.5\n\n-0.25\n").unwrap();
        assert_eq!(parsed, vec![1.5, -0.25]);
    }

    proptest! {
        #[test]
        fn any_layout_roundtrips_f64_cubes_exactly(
            rows in 1usize..4,
            cols in 1usize..4,
            bands in 1usize..4,
            seed in any::<i64>(),
            interleave_pick in 0usize..3,
            big_endian in any::<bool>(),
        ) {
            let n = rows * cols * bands;
            let values: Vec<f64> = (0..n)
                .map(|i| ((seed.wrapping_add(i as i64 * 2654435761)) as f64) * 1e-9)
                .collect();
            let cube = SpectralCube::new(rows, cols, bands, values).unwrap();
            let options = EnviWriteOptions {
                interleave: [Interleave::Bsq, Interleave::Bil, Interleave::Bip][interleave_pick],
                byte_order: if big_endian { ByteOrder::Big } else { ByteOrder::Little },
                ..EnviWriteOptions::default()
            };
            let (header_text, payload) = write_cube(&cube, &options).unwrap();
            let parsed = parse_envi_header(&header_text).unwrap();
            prop_assert_eq!(read_cube(&parsed, &payload).unwrap(), cube);
        }

        #[test]
        fn f32_roundtrips_are_exact_on_quantized_values(
            raw in proptest::collection::vec(-1e6f64..1e6, 1..12),
            interleave_pick in 0usize..3,
        ) {
            let quantized: Vec<f64> = raw.iter().map(|v| *v as f32 as f64).collect();
            let bands = quantized.len();
            let cube = SpectralCube::new(1, 1, bands, quantized).unwrap();
            let options = EnviWriteOptions {
                data_type: EnviDataType::F32,
                interleave: [Interleave::Bsq, Interleave::Bil, Interleave::Bip][interleave_pick],
                ..EnviWriteOptions::default()
            };
            let (header_text, payload) = write_cube(&cube, &options).unwrap();
            let parsed = parse_envi_header(&header_text).unwrap();
            prop_assert_eq!(read_cube(&parsed, &payload).unwrap(), cube);
        }
    }
}
