//! Dense periodic grids, the 2-D discrete Fourier transform and circular
//! convolutions of single matrices and matrix families.
//!
//! Conventions:
//!
//! * grids are `n x m`, row-major, and every index is taken modulo `(n, m)`;
//! * the forward transform is unnormalized, `ĝ[r,s] = Σ g[k,l] e^{-2πi(kr/n + ls/m)}`,
//!   and the inverse carries the factor `1/(nm)`;
//! * a [`SpectralFilter`] stores a symbol and acts by `𝔉⁻¹(symbol ⊙ ĝ)`.
//!   [`SpectralFilter::from_kernel`] builds the symbol of a spatial kernel `A` so that
//!   the action reproduces the index-domain sum `Σ_{k,l} A[k-r, l-s] G[k,l]`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance used when casting an inverse transform back to a real grid.
pub const REAL_CAST_TOL: f64 = 1e-9;

fn check_shape(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidGrid(format!("shape {rows}x{cols} has an empty axis")));
    }
    if rows * cols != len {
        return Err(Error::InvalidGrid(format!("data length {len} does not match shape {rows}x{cols}")));
    }
    Ok(())
}

fn same_shape(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { left, right })
    }
}

#[inline]
fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// A real `n x m` matrix with periodic index semantics.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite entry at index {index}")));
        }
        Ok(Self { rows, cols, data })
    }

    /// Wraps data produced by grid arithmetic. Finiteness is the caller's invariant.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid axes must be non-empty");
        assert!(value.is_finite());
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    /// Unit impulse at `(k, l)` (taken modulo the shape).
    pub fn delta(rows: usize, cols: usize, k: i64, l: i64) -> Self {
        let mut g = Self::zeros(rows, cols);
        let idx = wrap(k, rows) * cols + wrap(l, cols);
        g.data[idx] = 1.0;
        g
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid axes must be non-empty");
        let mut data = Vec::with_capacity(rows * cols);
        for k in 0..rows {
            for l in 0..cols {
                let v = f(k, l);
                assert!(v.is_finite(), "non-finite value at ({k},{l})");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Periodic accessor: `get(k, l) = data[(k mod n) * m + (l mod m)]`.
    #[inline]
    pub fn get(&self, k: i64, l: i64) -> f64 {
        self.data[wrap(k, self.rows) * self.cols + wrap(l, self.cols)]
    }

    #[inline]
    pub fn at(&self, k: usize, l: usize) -> f64 {
        self.data[k * self.cols + l]
    }

    pub fn set(&mut self, k: usize, l: usize, value: f64) {
        assert!(value.is_finite(), "non-finite value at ({k},{l})");
        self.data[k * self.cols + l] = value;
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        Self::new(self.rows, self.cols, data).expect("map produced a non-finite value")
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        same_shape(self.shape(), other.shape())?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.rows, self.cols, data)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |k, l| self.at(l, k))
    }

    pub fn to_complex(&self) -> ComplexGrid {
        ComplexGrid::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| C64::new(v, 0.0)).collect())
    }
}

/// A complex `n x m` matrix, used for spectra and filter symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        check_shape(rows, cols, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite entry at index {index}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "grid axes must be non-empty");
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    /// Builds a grid from a closure; fails if any produced value is not finite.
    pub fn try_from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for k in 0..rows {
            for l in 0..cols {
                data.push(f(k, l));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::try_from_fn(rows, cols, f).expect("closure produced a non-finite value")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, k: i64, l: i64) -> C64 {
        self.data[wrap(k, self.rows) * self.cols + wrap(l, self.cols)]
    }

    #[inline]
    pub fn at(&self, k: usize, l: usize) -> C64 {
        self.data[k * self.cols + l]
    }

    pub fn set(&mut self, k: usize, l: usize, value: C64) {
        assert!(value.is_finite(), "non-finite value at ({k},{l})");
        self.data[k * self.cols + l] = value;
    }

    pub fn map(&self, f: impl FnMut(&C64) -> C64) -> Self {
        let data: Vec<C64> = self.data.iter().map(f).collect();
        Self::new(self.rows, self.cols, data).expect("map produced a non-finite value")
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(C64, C64) -> C64) -> Result<Self> {
        same_shape(self.shape(), other.shape())?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.rows, self.cols, data)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.im.abs()))
    }

    pub fn re(&self) -> RealGrid {
        RealGrid::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|v| v.re).collect())
    }

    /// Drops the imaginary parts if they are at most `REAL_CAST_TOL * reference_norm`.
    pub fn to_real(&self, reference_norm: f64) -> Result<RealGrid> {
        let residue = self.max_imag();
        let tolerance = REAL_CAST_TOL * reference_norm;
        if residue > tolerance {
            return Err(Error::RealCast { residue, tolerance });
        }
        Ok(self.re())
    }
}

struct Plan2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

// Below this many entries, rows are transformed on the calling thread.
const PARALLEL_MIN_LEN: usize = 1 << 14;

fn process_rows(fft: &Arc<dyn Fft<f64>>, buf: &mut [C64], len: usize) {
    if buf.len() >= PARALLEL_MIN_LEN {
        let rows_per_task = (PARALLEL_MIN_LEN / 4 / len).max(1);
        buf.par_chunks_mut(len * rows_per_task).for_each(|chunk| fft.process(chunk));
    } else {
        fft.process(buf);
    }
}

fn transpose_into(src: &[C64], rows: usize, cols: usize, dst: &mut [C64]) {
    for k in 0..rows {
        for l in 0..cols {
            dst[l * rows + k] = src[k * cols + l];
        }
    }
}

impl Plan2 {
    fn transform(&self, buf: &mut [C64], inverse: bool) {
        let (row_fft, col_fft) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        process_rows(row_fft, buf, self.cols);
        let mut scratch = vec![C64::new(0.0, 0.0); buf.len()];
        transpose_into(buf, self.rows, self.cols, &mut scratch);
        process_rows(col_fft, &mut scratch, self.rows);
        transpose_into(&scratch, self.cols, self.rows, buf);
        if inverse {
            let scale = 1.0 / (self.rows * self.cols) as f64;
            buf.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

fn plan(rows: usize, cols: usize) -> Arc<Plan2> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Plan2>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((rows, cols))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plan2 {
                rows,
                cols,
                row_fwd: planner.plan_fft_forward(cols),
                row_inv: planner.plan_fft_inverse(cols),
                col_fwd: planner.plan_fft_forward(rows),
                col_inv: planner.plan_fft_inverse(rows),
            })
        })
        .clone()
}

/// Forward transform of a real grid.
pub fn dft2(g: &RealGrid) -> ComplexGrid {
    let mut out = g.to_complex();
    plan(g.rows, g.cols).transform(&mut out.data, false);
    out
}

/// Forward transform of a complex grid.
pub fn dft2_complex(g: &ComplexGrid) -> ComplexGrid {
    let mut out = g.clone();
    plan(g.rows, g.cols).transform(&mut out.data, false);
    out
}

/// Inverse transform including the `1/(nm)` factor.
pub fn idft2(spectrum: &ComplexGrid) -> ComplexGrid {
    let mut out = spectrum.clone();
    plan(spectrum.rows, spectrum.cols).transform(&mut out.data, true);
    out
}

/// Inverse transform followed by a checked cast to a real grid.
///
/// The imaginary residue must stay below `1e-9 * ‖ĝ‖`; a larger residue means the
/// spectrum is not Hermitian and does not describe a real grid.
pub fn idft2_real(spectrum: &ComplexGrid) -> Result<RealGrid> {
    idft2(spectrum).to_real(spectrum.norm())
}

/// Inverse transform keeping only the real part. Used on spectra that are Hermitian
/// up to rounding, and as the real projection of a general circular operator.
pub(crate) fn idft2_re(mut spectrum: ComplexGrid) -> RealGrid {
    plan(spectrum.rows, spectrum.cols).transform(&mut spectrum.data, true);
    spectrum.re()
}

/// The Fourier symbol of a circular convolution operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFilter {
    symbol: ComplexGrid,
}

impl SpectralFilter {
    pub fn from_symbol(symbol: ComplexGrid) -> Self {
        Self { symbol }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self { symbol: ComplexGrid::from_fn(rows, cols, f) }
    }

    pub fn from_real_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_fn(rows, cols, |k, l| C64::new(f(k, l), 0.0))
    }

    /// The filter whose action is `C_A(G)[r,s] = Σ_{k,l} A[k-r, l-s] G[k,l]`.
    ///
    /// In the transform domain this is multiplication with `conj(dft2(A))`.
    pub fn from_kernel(kernel: &RealGrid) -> Self {
        Self { symbol: dft2(kernel).conj() }
    }

    /// Inverse of [`SpectralFilter::from_kernel`]; fails for symbols of complex kernels.
    pub fn kernel(&self) -> Result<RealGrid> {
        let conj = self.symbol.conj();
        idft2(&conj).to_real(conj.norm())
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        Self::from_real_fn(rows, cols, |_, _| 1.0)
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self { symbol: ComplexGrid::zeros(rows, cols) }
    }

    pub fn symbol(&self) -> &ComplexGrid {
        &self.symbol
    }

    pub fn into_symbol(self) -> ComplexGrid {
        self.symbol
    }

    pub fn shape(&self) -> (usize, usize) {
        self.symbol.shape()
    }

    #[inline]
    pub fn at(&self, k: usize, l: usize) -> C64 {
        self.symbol.at(k, l)
    }

    /// Symbol of the adjoint operator.
    pub fn adjoint(&self) -> Self {
        Self { symbol: self.symbol.conj() }
    }

    /// Composition `C_self ∘ C_other` (bin-wise product of symbols).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        Ok(Self { symbol: self.symbol.zip_map(&other.symbol, |a, b| a * b)? })
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { symbol: self.symbol.map(|v| v * factor) }
    }
}

/// An ordered family of `P >= 1` real grids sharing one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFamily {
    members: Vec<RealGrid>,
}

impl GridFamily {
    pub fn new(members: Vec<RealGrid>) -> Result<Self> {
        let first =
            members.first().ok_or_else(|| Error::InvalidGrid("a grid family needs at least one member".into()))?;
        let shape = first.shape();
        for m in &members[1..] {
            same_shape(shape, m.shape())?;
        }
        Ok(Self { members })
    }

    pub fn zeros(count: usize, rows: usize, cols: usize) -> Self {
        assert!(count > 0, "a grid family needs at least one member");
        Self { members: vec![RealGrid::zeros(rows, cols); count] }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.members[0].shape()
    }

    pub fn members(&self) -> &[RealGrid] {
        &self.members
    }

    pub fn member(&self, p: usize) -> &RealGrid {
        &self.members[p]
    }

    pub fn into_members(self) -> Vec<RealGrid> {
        self.members
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::FamilySizeMismatch { left: self.len(), right: other.len() });
        }
        same_shape(self.shape(), other.shape())
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        let members =
            self.members.iter().zip(&other.members).map(|(a, b)| a.zip_map(b, &mut f)).collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { members: self.members.iter().map(|m| m.scale(factor)).collect() }
    }

    pub fn norm(&self) -> f64 {
        self.members.iter().map(|m| m.as_slice().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.members.iter().fold(0.0, |acc, m| acc.max(m.max_abs()))
    }

    /// The `P`-vector of member values at pixel `(k, l)`.
    pub fn site(&self, k: usize, l: usize) -> Vec<f64> {
        self.members.iter().map(|m| m.at(k, l)).collect()
    }
}

/// An ordered family of `P >= 1` spectral filters sharing one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    members: Vec<SpectralFilter>,
}

impl FilterBank {
    pub fn new(members: Vec<SpectralFilter>) -> Result<Self> {
        let first =
            members.first().ok_or_else(|| Error::InvalidGrid("a filter bank needs at least one member".into()))?;
        let shape = first.shape();
        for m in &members[1..] {
            same_shape(shape, m.shape())?;
        }
        Ok(Self { members })
    }

    pub fn zeros(count: usize, rows: usize, cols: usize) -> Self {
        assert!(count > 0, "a filter bank needs at least one member");
        Self { members: vec![SpectralFilter::zero(rows, cols); count] }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.members[0].shape()
    }

    pub fn members(&self) -> &[SpectralFilter] {
        &self.members
    }

    pub fn member(&self, p: usize) -> &SpectralFilter {
        &self.members[p]
    }

    pub fn into_members(self) -> Vec<SpectralFilter> {
        self.members
    }

    /// `Σ_p |symbol_p|²` per bin.
    pub fn power(&self) -> RealGrid {
        let (rows, cols) = self.shape();
        let mut acc = vec![0.0; rows * cols];
        for member in &self.members {
            for (a, v) in acc.iter_mut().zip(member.symbol.as_slice()) {
                *a += v.norm_sqr();
            }
        }
        RealGrid::from_vec_unchecked(rows, cols, acc)
    }
}

/// `𝔉⁻¹(f ⊙ ĝ)`, real part.
pub fn convolve(f: &SpectralFilter, g: &RealGrid) -> Result<RealGrid> {
    same_shape(f.shape(), g.shape())?;
    Ok(apply_symbol(f.symbol(), &dft2(g), false))
}

/// The adjoint of [`convolve`]: multiplication with the conjugated symbol.
pub fn convolve_adjoint(f: &SpectralFilter, g: &RealGrid) -> Result<RealGrid> {
    same_shape(f.shape(), g.shape())?;
    Ok(apply_symbol(f.symbol(), &dft2(g), true))
}

/// `(C_{B_1}(g), ..., C_{B_P}(g))`.
pub fn family_convolve(bank: &FilterBank, g: &RealGrid) -> Result<GridFamily> {
    same_shape(bank.shape(), g.shape())?;
    let spectrum = dft2(g);
    Ok(apply_bank(bank, &spectrum))
}

/// `Σ_p C*_{B_p}(H_p)`.
pub fn family_adjoint(bank: &FilterBank, fam: &GridFamily) -> Result<RealGrid> {
    if bank.len() != fam.len() {
        return Err(Error::FamilySizeMismatch { left: bank.len(), right: fam.len() });
    }
    same_shape(bank.shape(), fam.shape())?;
    let spectra: Vec<ComplexGrid> = fam.members().par_iter().map(dft2).collect();
    Ok(apply_bank_adjoint(bank, &spectra))
}

/// `(C_{B_1}(H_1), ..., C_{B_P}(H_P))`.
pub fn diag_family_convolve(bank: &FilterBank, fam: &GridFamily) -> Result<GridFamily> {
    if bank.len() != fam.len() {
        return Err(Error::FamilySizeMismatch { left: bank.len(), right: fam.len() });
    }
    same_shape(bank.shape(), fam.shape())?;
    let members = bank
        .members()
        .par_iter()
        .zip(fam.members().par_iter())
        .map(|(f, h)| apply_symbol(f.symbol(), &dft2(h), false))
        .collect();
    Ok(GridFamily { members })
}

/// Multiplies a spectrum by a symbol (optionally conjugated) and returns the real
/// part of the inverse transform.
pub(crate) fn apply_symbol(symbol: &ComplexGrid, spectrum: &ComplexGrid, conjugate: bool) -> RealGrid {
    let data = symbol
        .as_slice()
        .iter()
        .zip(spectrum.as_slice())
        .map(|(s, g)| if conjugate { s.conj() * g } else { s * g })
        .collect();
    idft2_re(ComplexGrid::from_vec_unchecked(symbol.rows, symbol.cols, data))
}

pub(crate) fn apply_bank(bank: &FilterBank, spectrum: &ComplexGrid) -> GridFamily {
    let members = bank.members().par_iter().map(|f| apply_symbol(f.symbol(), spectrum, false)).collect();
    GridFamily { members }
}

/// `𝔉⁻¹(Σ_p conj(B̂_p) ⊙ Ĥ_p)`; the member sum runs in fixed order for every bin.
pub(crate) fn apply_bank_adjoint(bank: &FilterBank, spectra: &[ComplexGrid]) -> RealGrid {
    let (rows, cols) = bank.shape();
    let mut acc = vec![C64::new(0.0, 0.0); rows * cols];
    acc.par_chunks_mut(cols).enumerate().for_each(|(k, row)| {
        for (filter, h) in bank.members().iter().zip(spectra) {
            let s = &filter.symbol.as_slice()[k * cols..(k + 1) * cols];
            let hv = &h.as_slice()[k * cols..(k + 1) * cols];
            for ((a, b), c) in row.iter_mut().zip(s).zip(hv) {
                *a += b.conj() * c;
            }
        }
    });
    idft2_re(ComplexGrid::from_vec_unchecked(rows, cols, acc))
}

/// Trace inner product `Σ a[k,l] b[k,l]`.
pub fn inner(a: &RealGrid, b: &RealGrid) -> Result<f64> {
    same_shape(a.shape(), b.shape())?;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum())
}

pub fn family_inner(a: &GridFamily, b: &GridFamily) -> Result<f64> {
    a.check_compatible(b)?;
    a.members().iter().zip(b.members()).map(|(x, y)| inner(x, y)).sum()
}

/// Frobenius norm of a grid.
pub fn frobenius(x: &RealGrid) -> f64 {
    x.norm()
}

/// `Σ_{p,k,l} |B_p[k,l]|`.
pub fn l1_aniso(fam: &GridFamily) -> f64 {
    fam.members().iter().map(|m| m.as_slice().iter().map(|v| v.abs()).sum::<f64>()).sum()
}

/// `Σ_{k,l} ‖(B_1[k,l], ..., B_P[k,l])‖₂`.
pub fn l1_iso(fam: &GridFamily) -> f64 {
    let n = fam.members()[0].len();
    (0..n).map(|i| fam.members().iter().map(|m| m.as_slice()[i].powi(2)).sum::<f64>().sqrt()).sum()
}
