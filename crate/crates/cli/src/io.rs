//! Grayscale image files and the raw float sidecar.
//!
//! PGM (P5) is read at maxval 255 or 65535 and PNG as 8- or 16-bit grayscale. Samples
//! are mapped to floats on the 0..255 scale. Saving clamps to [0, 255] and rounds half
//! to even. The `.f64` sidecar stores a grid losslessly:
//! `F64GRID1 <rows> <cols>\n` followed by little-endian f64 values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use fixdecomp_core::RealGrid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: unsupported format: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("{path}: corrupt header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn header(path: &Path, reason: impl Into<String>) -> Self {
        Self::CorruptHeader { path: path.to_path_buf(), reason: reason.into() }
    }

    fn unsupported(path: &Path, reason: impl Into<String>) -> Self {
        Self::UnsupportedFormat { path: path.to_path_buf(), reason: reason.into() }
    }
}

pub type IoResult<T> = Result<T, IoError>;

const SIDECAR_MAGIC: &str = "F64GRID1";

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Loads a PGM, PNG or `.f64` sidecar, chosen by the file's magic bytes.
pub fn load_image(path: &Path) -> IoResult<RealGrid> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(path, &bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(path, &bytes)
    } else if bytes.starts_with(SIDECAR_MAGIC.as_bytes()) {
        decode_sidecar(path, &bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P6") || bytes.starts_with(b"P3") {
        Err(IoError::unsupported(path, "only binary grayscale PGM (P5) is supported"))
    } else {
        Err(IoError::unsupported(path, "not a PGM, PNG or F64GRID1 file"))
    }
}

/// Saves as 8-bit PGM or PNG (by extension), or as a sidecar for `.f64`.
pub fn save_image(grid: &RealGrid, path: &Path) -> IoResult<()> {
    let bytes = match extension(path).as_str() {
        "pgm" => encode_pgm(grid),
        "png" => encode_png(grid).map_err(|e| IoError::unsupported(path, e.to_string()))?,
        "f64" => encode_sidecar(grid),
        other => return Err(IoError::unsupported(path, format!("unknown extension {other:?}"))),
    };
    write_file(path, &bytes)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> IoResult<()> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| IoError::io(path, e))
}

/// Clamps to [0, 255] and rounds half to even. NaN maps to 0.
pub fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, 255.0).round_ties_even() as u8
}

// Header tokens of a PNM file, skipping `#` comments. Returns the tokens and the
// offset of the single whitespace byte that ends the header.
fn pnm_header<'a>(path: &Path, bytes: &'a [u8], count: usize) -> IoResult<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err(IoError::header(path, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| IoError::header(path, "non-ASCII header"))?;
        tokens.push(tok);
    }
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(IoError::header(path, "missing whitespace after header"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(path: &Path, tok: &str, what: &str) -> IoResult<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(IoError::header(path, format!("bad {what} {tok:?}"))),
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> IoResult<RealGrid> {
    let (tok, start) = pnm_header(path, bytes, 4)?;
    let width = parse_dim(path, tok[1], "width")?;
    let height = parse_dim(path, tok[2], "height")?;
    let maxval = parse_dim(path, tok[3], "maxval")?;
    let wide = match maxval {
        255 => false,
        65535 => true,
        other => return Err(IoError::unsupported(path, format!("maxval {other}; expected 255 or 65535"))),
    };
    let count = width.checked_mul(height).ok_or_else(|| IoError::header(path, "size overflow"))?;
    let need = count * if wide { 2 } else { 1 };
    let body = &bytes[start..];
    if body.len() < need {
        return Err(IoError::header(path, format!("expected {need} data bytes, found {}", body.len())));
    }
    let data: Vec<f64> = if wide {
        body[..need].chunks_exact(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) * 255.0 / 65535.0).collect()
    } else {
        body[..need].iter().map(|&b| f64::from(b)).collect()
    };
    RealGrid::new(height, width, data).map_err(|e| IoError::header(path, e.to_string()))
}

pub fn encode_pgm(grid: &RealGrid) -> Vec<u8> {
    let (rows, cols) = grid.shape();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(grid.as_slice().iter().map(|&v| to_u8(v)));
    out
}

fn decode_png(path: &Path, bytes: &[u8]) -> IoResult<RealGrid> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| IoError::header(path, e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| IoError::header(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| IoError::header(path, e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(IoError::unsupported(path, format!("color type {:?}; only grayscale", info.color_type)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => buf[..w * h].iter().map(|&b| f64::from(b)).collect(),
        png::BitDepth::Sixteen => buf[..2 * w * h]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) * 255.0 / 65535.0)
            .collect(),
        other => return Err(IoError::unsupported(path, format!("bit depth {other:?}"))),
    };
    RealGrid::new(h, w, data).map_err(|e| IoError::header(path, e.to_string()))
}

fn encode_png(grid: &RealGrid) -> Result<Vec<u8>, png::EncodingError> {
    let (rows, cols) = grid.shape();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, cols as u32, rows as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        let data: Vec<u8> = grid.as_slice().iter().map(|&v| to_u8(v)).collect();
        writer.write_image_data(&data)?;
    }
    Ok(out)
}

pub fn encode_sidecar(grid: &RealGrid) -> Vec<u8> {
    let (rows, cols) = grid.shape();
    let mut out = format!("{SIDECAR_MAGIC} {rows} {cols}\n").into_bytes();
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_sidecar(path: &Path, bytes: &[u8]) -> IoResult<RealGrid> {
    let (tok, start) = pnm_header(path, bytes, 3)?;
    let rows = parse_dim(path, tok[1], "rows")?;
    let cols = parse_dim(path, tok[2], "cols")?;
    let body = &bytes[start..];
    if Some(body.len()) != rows.checked_mul(cols).and_then(|c| c.checked_mul(8)) {
        return Err(IoError::header(path, format!("expected {rows}x{cols} doubles, found {} bytes", body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    RealGrid::new(rows, cols, data).map_err(|e| IoError::header(path, e.to_string()))
}

/// Reads a whole file, for formats parsed elsewhere.
pub(crate) fn read_file(path: &Path) -> IoResult<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path).and_then(|f| BufReader::new(f).read_to_end(&mut buf)).map_err(|e| IoError::io(path, e))?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_written_pgm() {
        let bytes = b"P5\n# three by two\n3 2\n255\n\x00\x01\x7f\x80\xfe\xff";
        let g = decode_pgm(Path::new("x.pgm"), bytes).unwrap();
        assert_eq!(g.shape(), (2, 3));
        assert_eq!(g.as_slice(), &[0.0, 1.0, 127.0, 128.0, 254.0, 255.0]);
    }

    #[test]
    fn clamp_and_round_half_even() {
        assert_eq!(to_u8(255.7), 255);
        assert_eq!(to_u8(-3.0), 0);
        assert_eq!(to_u8(2.5), 2);
        assert_eq!(to_u8(3.5), 4);
        assert_eq!(to_u8(f64::NAN), 0);
    }

    #[test]
    fn sixteen_bit_pgm_scales_to_255() {
        let bytes = b"P5 2 1 65535\n\xff\xff\x00\x00";
        let g = decode_pgm(Path::new("x.pgm"), bytes).unwrap();
        assert_eq!(g.as_slice(), &[255.0, 0.0]);
    }

    #[test]
    fn bad_headers() {
        let p = Path::new("x.pgm");
        assert!(matches!(decode_pgm(p, b"P5\n3 2\n"), Err(IoError::CorruptHeader { .. })));
        assert!(matches!(decode_pgm(p, b"P5\n3 2\n255\n\x00"), Err(IoError::CorruptHeader { .. })));
        assert!(matches!(decode_pgm(p, b"P5\n1 1\n100\n\x00"), Err(IoError::UnsupportedFormat { .. })));
        assert!(matches!(decode_pgm(p, b"P5\n0 1\n255\n"), Err(IoError::CorruptHeader { .. })));
    }

    #[test]
    fn png_round_trip() {
        let g = RealGrid::from_fn(3, 5, |k, l| (k * 50 + l * 3) as f64);
        let bytes = encode_png(&g).unwrap();
        assert_eq!(decode_png(Path::new("x.png"), &bytes).unwrap(), g);
    }

    #[test]
    fn sidecar_round_trip_is_bit_exact() {
        let g = RealGrid::from_fn(4, 3, |k, l| (k as f64 - 1.3).powi(3) / (l as f64 + 0.7) - 1e-300);
        let back = decode_sidecar(Path::new("x.f64"), &encode_sidecar(&g)).unwrap();
        let bits = |g: &RealGrid| g.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&g));
    }

    #[test]
    fn save_picks_format_by_extension() {
        let g = RealGrid::filled(1, 1, 1.0);
        let err = save_image(&g, Path::new("/nonexistent/x.tif")).unwrap_err();
        assert!(matches!(err, IoError::UnsupportedFormat { .. }));
    }
}
