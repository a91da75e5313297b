//! The FBANK1 container for filter symbols.
//!
//! Layout, little-endian throughout:
//!
//! | bytes | field |
//! |---|---|
//! | 6 | magic `FBANK1` |
//! | 1 | kind: `B`, `T` (B̃), `A` or `Y` |
//! | 1 | reserved, zero |
//! | 4 | n (rows), u32 |
//! | 4 | m (cols), u32 |
//! | 4 | P (symbol count), u32 |
//! | 4 | metadata length, u32 |
//! | .. | metadata: `key=value` ASCII lines |
//! | 16·n·m·P | symbols as (re, im) f64 pairs, row-major, one after another |

use std::path::Path;

use fixdecomp_core::{ComplexGrid, FilterBank, SpectralFilter, C64};

use crate::io::{read_file, write_file, IoError, IoResult};

const MAGIC: &[u8; 6] = b"FBANK1";
const HEADER_LEN: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbankKind {
    B,
    Btilde,
    A,
    Y,
}

impl FbankKind {
    pub fn tag(self) -> u8 {
        match self {
            Self::B => b'B',
            Self::Btilde => b'T',
            Self::A => b'A',
            Self::Y => b'Y',
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            b'B' => Some(Self::B),
            b'T' => Some(Self::Btilde),
            b'A' => Some(Self::A),
            b'Y' => Some(Self::Y),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::B => "B",
            Self::Btilde => "Btilde",
            Self::A => "A",
            Self::Y => "Y",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FbankContainer {
    pub kind: FbankKind,
    pub rows: usize,
    pub cols: usize,
    pub meta: Vec<(String, String)>,
    pub symbols: Vec<ComplexGrid>,
}

impl FbankContainer {
    pub fn from_bank(kind: FbankKind, bank: &FilterBank, meta: Vec<(String, String)>) -> Self {
        let (rows, cols) = bank.shape();
        let symbols = bank.members().iter().map(|f| f.symbol().clone()).collect();
        Self { kind, rows, cols, meta, symbols }
    }

    pub fn from_filter(kind: FbankKind, filter: &SpectralFilter, meta: Vec<(String, String)>) -> Self {
        let (rows, cols) = filter.shape();
        Self { kind, rows, cols, meta, symbols: vec![filter.symbol().clone()] }
    }

    pub fn to_bank(&self) -> fixdecomp_core::Result<FilterBank> {
        FilterBank::new(self.symbols.iter().cloned().map(SpectralFilter::from_symbol).collect())
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn encode(&self) -> Vec<u8> {
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + 16 * self.rows * self.cols * self.symbols.len());
        out.extend_from_slice(MAGIC);
        out.push(self.kind.tag());
        out.push(0);
        for v in [self.rows, self.cols, self.symbols.len(), meta.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(meta.as_bytes());
        for s in &self.symbols {
            for z in s.as_slice() {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < HEADER_LEN || &bytes[..6] != MAGIC {
            return Err("missing FBANK1 magic".into());
        }
        let kind = FbankKind::from_tag(bytes[6]).ok_or_else(|| format!("unknown kind tag {:#04x}", bytes[6]))?;
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let (rows, cols, count, meta_len) = (word(0), word(1), word(2), word(3));
        if rows == 0 || cols == 0 || count == 0 {
            return Err(format!("degenerate header {rows}x{cols}, P = {count}"));
        }
        let meta_end =
            HEADER_LEN.checked_add(meta_len).filter(|&e| e <= bytes.len()).ok_or("metadata runs past the end")?;
        let meta_text = std::str::from_utf8(&bytes[HEADER_LEN..meta_end]).map_err(|_| "metadata is not ASCII")?;
        let mut meta = Vec::new();
        for line in meta_text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| format!("metadata line {line:?} lacks '='"))?;
            meta.push((k.to_string(), v.to_string()));
        }
        let payload = &bytes[meta_end..];
        let want = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(count))
            .and_then(|v| v.checked_mul(16))
            .ok_or("payload size overflows")?;
        if payload.len() != want {
            return Err(format!("payload is {} bytes, header implies {want}", payload.len()));
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
        let symbols = payload
            .chunks_exact(16 * rows * cols)
            .map(|chunk| {
                let data = chunk.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect();
                ComplexGrid::new(rows, cols, data).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { kind, rows, cols, meta, symbols })
    }

    pub fn write(&self, path: &Path) -> IoResult<()> {
        write_file(path, &self.encode())
    }

    pub fn read(path: &Path) -> IoResult<Self> {
        let bytes = read_file(path)?;
        Self::decode(&bytes).map_err(|reason| IoError::CorruptHeader { path: path.to_path_buf(), reason })
    }
}
