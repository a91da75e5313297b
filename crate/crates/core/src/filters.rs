//! Closed-form filter triples and the checks on them: weak and strong factors and the
//! spectrum `σ = Σ_p conj(B̃̂_p) B̂_p` that decides the (non-)expansiveness conditions.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, FilterBank, RealGrid, SpectralFilter, C64};
use crate::shrink::Penalty;
use crate::solver::InputFilterTriple;

/// Tolerance for factor reality/positivity and for the NEPC bounds.
pub const FACTOR_TOL: f64 = 1e-9;
/// Margin below 1 that the largest `σ` must keep for the contraction condition.
pub const CPC_MARGIN: f64 = 1e-9;
/// Largest exponent magnitude accepted in the Model II weight.
pub const EXP_GUARD: f64 = 700.0;

/// Frequency of bin `k` on an axis of length `n`, in `[-π, π)`.
pub fn omega(k: usize, n: usize) -> f64 {
    let t = 2.0 * PI * k as f64 / n as f64;
    if 2 * k < n {
        t
    } else {
        -2.0 * PI + t
    }
}

pub fn omega_axis(n: usize) -> Vec<f64> {
    (0..n).map(|k| omega(k, n)).collect()
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be positive and finite, got {v}") })
    }
}

/// Periodic forward differences: member 1 maps `U` to `U[k+1,l] − U[k,l]`, member 2
/// to `U[k,l+1] − U[k,l]`.
pub fn gradient_bank(n: usize, m: usize) -> Result<FilterBank> {
    if n < 2 || m < 2 {
        return Err(Error::DegenerateShape { rows: n, cols: m, reason: "the gradient needs n, m >= 2" });
    }
    let d1 = SpectralFilter::from_fn(n, m, |k, _| C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64) - 1.0);
    let d2 = SpectralFilter::from_fn(n, m, |_, l| C64::from_polar(1.0, 2.0 * PI * l as f64 / m as f64) - 1.0);
    FilterBank::new(vec![d1, d2])
}

/// `4 sin²(πk/n) + 4 sin²(πl/m)`, the symbol of the negative discrete Laplacian.
pub fn gradient_power(n: usize, m: usize) -> RealGrid {
    RealGrid::from_fn(n, m, |k, l| {
        let a = (PI * k as f64 / n as f64).sin();
        let b = (PI * l as f64 / m as f64).sin();
        4.0 * a * a + 4.0 * b * b
    })
}

// β / (μ w + β s) per bin, with w the data weight (1, or |M̂|² for TV-Hilbert).
fn coupling(s: &RealGrid, weight: Option<&RealGrid>, mu: f64, beta: f64) -> RealGrid {
    RealGrid::from_fn(s.rows(), s.cols(), |k, l| {
        let w = weight.map_or(1.0, |g| g.at(k, l));
        beta / (mu * w + beta * s.at(k, l))
    })
}

fn scaled_bank(bank: &FilterBank, factor: impl Fn(usize, usize, usize) -> f64) -> Result<FilterBank> {
    let (n, m) = bank.shape();
    FilterBank::new(
        bank.members()
            .iter()
            .enumerate()
            .map(|(p, f)| SpectralFilter::from_fn(n, m, |k, l| f.at(k, l) * factor(p, k, l)))
            .collect(),
    )
}

/// Model I, the classical TV-ℓ² triple:
/// `Â = μ/(μ+βs)`, `B = D`, `B̃̂_p = β/(μ+βs)·D̂_p`.
pub fn build_tv_l2(n: usize, m: usize, mu: f64, beta: f64, penalty: Penalty) -> Result<InputFilterTriple> {
    positive("mu", mu)?;
    positive("beta", beta)?;
    let d = gradient_bank(n, m)?;
    let s = gradient_power(n, m);
    let c = coupling(&s, None, mu, beta);
    let a = SpectralFilter::from_real_fn(n, m, |k, l| mu / (mu + beta * s.at(k, l)));
    let bt = scaled_bank(&d, |_, k, l| c.at(k, l))?;
    InputFilterTriple::new(a, d, bt, beta, penalty)
}

/// Model II: gradients weighted by `V̂ = exp(−y₁ω_k² − y₂ω_l²)`.
///
/// `B̂_p = D̂_p V̂`, `B̃̂_p = β/(μ+βs)·V̂⁻¹ D̂_p`, `Â` as in Model I.
pub fn build_model2(
    n: usize,
    m: usize,
    mu: f64,
    beta: f64,
    y1: f64,
    y2: f64,
    penalty: Penalty,
) -> Result<InputFilterTriple> {
    positive("mu", mu)?;
    positive("beta", beta)?;
    if !(y1.is_finite() && y2.is_finite()) {
        return Err(Error::InvalidParameter { name: "y", reason: "weights must be finite".into() });
    }
    let (wk, wl) = (omega_axis(n), omega_axis(m));
    let mut exps = vec![0.0; n * m];
    for k in 0..n {
        for l in 0..m {
            let e = -y1 * wk[k] * wk[k] - y2 * wl[l] * wl[l];
            if e.abs() > EXP_GUARD {
                return Err(Error::OverflowGuard { k, l, exponent: e });
            }
            exps[k * m + l] = e;
        }
    }
    let base = build_tv_l2(n, m, mu, beta, penalty)?;
    let b = scaled_bank(base.b(), |_, k, l| exps[k * m + l].exp())?;
    let bt = scaled_bank(base.btilde(), |_, k, l| (-exps[k * m + l]).exp())?;
    InputFilterTriple::new(base.a().clone(), b, bt, beta, penalty)
}

/// Model III: directional weights `B̂_p = D̂_p / r_p`, `B̃̂_p = β r_p/(μ+βs)·D̂_p`.
pub fn build_model3(
    n: usize,
    m: usize,
    mu: f64,
    beta: f64,
    r1: f64,
    r2: f64,
    penalty: Penalty,
) -> Result<InputFilterTriple> {
    positive("r1", r1)?;
    positive("r2", r2)?;
    let base = build_tv_l2(n, m, mu, beta, penalty)?;
    let r = [r1, r2];
    let b = scaled_bank(base.b(), |p, _, _| 1.0 / r[p])?;
    let bt = scaled_bank(base.btilde(), |p, _, _| r[p])?;
    InputFilterTriple::new(base.a().clone(), b, bt, beta, penalty)
}

/// Rejects masks with a non-real or non-positive entry.
pub fn check_mask(mask: &SpectralFilter) -> Result<()> {
    let (n, m) = mask.shape();
    for k in 0..n {
        for l in 0..m {
            let v = mask.at(k, l);
            if !(v.re > 0.0) || v.im.abs() > 1e-12 * v.re.abs().max(1.0) {
                return Err(Error::InvalidMask { k, l, value: format!("{}{:+}i", v.re, v.im) });
            }
        }
    }
    Ok(())
}

/// TV-Hilbert triple for a real positive mask `M̂`:
/// `Â = μ|M̂|²/(μ|M̂|²+βs)`, `B = D`, `B̃̂_p = β/(μ|M̂|²+βs)·D̂_p`.
pub fn build_tv_hilbert(
    n: usize,
    m: usize,
    mu: f64,
    beta: f64,
    mask: &SpectralFilter,
    penalty: Penalty,
) -> Result<InputFilterTriple> {
    positive("mu", mu)?;
    positive("beta", beta)?;
    if mask.shape() != (n, m) {
        return Err(Error::ShapeMismatch { left: (n, m), right: mask.shape() });
    }
    check_mask(mask)?;
    let d = gradient_bank(n, m)?;
    let s = gradient_power(n, m);
    let w = RealGrid::from_fn(n, m, |k, l| mask.at(k, l).re.powi(2));
    let c = coupling(&s, Some(&w), mu, beta);
    let a = SpectralFilter::from_real_fn(n, m, |k, l| mu * w.at(k, l) / (mu * w.at(k, l) + beta * s.at(k, l)));
    let bt = scaled_bank(&d, |_, k, l| c.at(k, l))?;
    InputFilterTriple::new(a, d, bt, beta, penalty)
}

/// A real, non-negative multiplier per member with `B̃̂_p = Ŷ_p B̂_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorFamily {
    pub y: FilterBank,
}

impl FactorFamily {
    pub fn member(&self, p: usize) -> &SpectralFilter {
        self.y.member(p)
    }
}

fn check_banks(b: &FilterBank, bt: &FilterBank) -> Result<()> {
    if b.len() != bt.len() {
        return Err(Error::FamilySizeMismatch { left: b.len(), right: bt.len() });
    }
    if b.shape() != bt.shape() {
        return Err(Error::ShapeMismatch { left: b.shape(), right: bt.shape() });
    }
    Ok(())
}

/// Recovers the weak factor `Ŷ_p = B̃̂_p / B̂_p`.
///
/// Where `|B̂_p| > tol` the quotient must be real and non-negative. Reality is tested
/// on the residual `|Im Ŷ_p|·|B̂_p| ≤ tol·(1 + |B̃̂_p|)` so that tiny symbols, whose
/// quotients carry amplified rounding, are judged on the same absolute scale as
/// large ones. Where `|B̂_p| ≤ tol`, `B̃̂_p` has to vanish too and `Ŷ_p = 0`.
pub fn weak_factor(b: &FilterBank, bt: &FilterBank, tol: f64) -> Result<FactorFamily> {
    check_banks(b, bt)?;
    let (n, m) = b.shape();
    let mut members = Vec::with_capacity(b.len());
    for (p, (bf, btf)) in b.members().iter().zip(bt.members()).enumerate() {
        let mut data = Vec::with_capacity(n * m);
        for k in 0..n {
            for l in 0..m {
                let (x, y) = (bf.at(k, l), btf.at(k, l));
                let (xa, ya) = (x.norm(), y.norm());
                if xa > tol {
                    let q = y / x;
                    let slack = tol * (1.0 + ya);
                    if q.im.abs() * xa > slack || q.re * xa < -slack {
                        return Err(Error::NotWeaklyFactoring { p, k, l, ratio_re: q.re, ratio_im: q.im });
                    }
                    data.push(Complex64::new(q.re.max(0.0), 0.0));
                } else if ya > tol {
                    return Err(Error::NotWeaklyFactoring { p, k, l, ratio_re: f64::INFINITY, ratio_im: 0.0 });
                } else {
                    data.push(Complex64::new(0.0, 0.0));
                }
            }
        }
        members.push(SpectralFilter::from_symbol(ComplexGrid::new(n, m, data)?));
    }
    Ok(FactorFamily { y: FilterBank::new(members)? })
}

/// A single multiplier `Ŷ` shared by all members, `B̃̂_p = Ŷ B̂_p`.
///
/// Members whose `B̂_p` vanishes at a bin impose no constraint there; bins where every
/// member vanishes get `Ŷ = 0`.
pub fn strong_factor(b: &FilterBank, bt: &FilterBank, tol: f64) -> Result<SpectralFilter> {
    let weak = weak_factor(b, bt, tol)?;
    let (n, m) = b.shape();
    let mut data = Vec::with_capacity(n * m);
    for k in 0..n {
        for l in 0..m {
            let mut shared: Option<f64> = None;
            for p in 0..b.len() {
                if b.member(p).at(k, l).norm() <= tol {
                    continue;
                }
                let y = weak.member(p).at(k, l).re;
                match shared {
                    None => shared = Some(y),
                    Some(first) if (y - first).abs() > tol * (1.0 + first.abs()) => {
                        return Err(Error::NotStronglyFactoring { k, l, first, other: y });
                    }
                    Some(_) => {}
                }
            }
            data.push(Complex64::new(shared.unwrap_or(0.0), 0.0));
        }
    }
    Ok(SpectralFilter::from_symbol(ComplexGrid::new(n, m, data)?))
}

/// The bin-wise spectrum of `C*_B̃ C_B` with its extremes and the NEPC/CPC verdicts.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    /// Real part of `σ`.
    pub sigma: RealGrid,
    pub max_imag: f64,
    pub min_val: f64,
    pub max_val: f64,
    pub argmax: (usize, usize),
    pub nepc_ok: bool,
    pub cpc_ok: bool,
    sigma_complex: ComplexGrid,
}

impl ConditionReport {
    pub fn sigma_complex(&self) -> &ComplexGrid {
        &self.sigma_complex
    }

    pub fn require_cpc(&self) -> Result<()> {
        if self.cpc_ok {
            Ok(())
        } else {
            let (k, l) = self.argmax;
            Err(Error::CpcViolation { k, l, max_val: self.max_val })
        }
    }
}

pub fn sigma_spectrum(b: &FilterBank, bt: &FilterBank) -> ConditionReport {
    assert_eq!(b.len(), bt.len(), "sigma_spectrum needs banks of equal size");
    assert_eq!(b.shape(), bt.shape(), "sigma_spectrum needs banks of equal shape");
    let (n, m) = b.shape();
    let mut acc = vec![Complex64::new(0.0, 0.0); n * m];
    for (bf, btf) in b.members().iter().zip(bt.members()) {
        for ((a, x), y) in acc.iter_mut().zip(bf.symbol().as_slice()).zip(btf.symbol().as_slice()) {
            *a += y.conj() * x;
        }
    }
    let sigma_complex = ComplexGrid::from_vec_unchecked(n, m, acc);
    let sigma = sigma_complex.re();
    let max_imag = sigma_complex.max_imag();
    let mut min_val = f64::INFINITY;
    let mut max_val = f64::NEG_INFINITY;
    let mut argmax = (0, 0);
    for k in 0..n {
        for l in 0..m {
            let v = sigma.at(k, l);
            min_val = min_val.min(v);
            if v > max_val {
                max_val = v;
                argmax = (k, l);
            }
        }
    }
    let base = max_imag <= FACTOR_TOL && min_val >= -FACTOR_TOL;
    ConditionReport {
        sigma,
        max_imag,
        min_val,
        max_val,
        argmax,
        nepc_ok: base && max_val <= 1.0 + FACTOR_TOL,
        cpc_ok: base && max_val <= 1.0 - CPC_MARGIN,
        sigma_complex,
    }
}

/// `βs/(μw+βs)`: the closed-form σ of Models I–III (w = 1) and TV-Hilbert (w = |M̂|²).
pub fn closed_form_sigma(n: usize, m: usize, mu: f64, beta: f64, weight: Option<&RealGrid>) -> RealGrid {
    let s = gradient_power(n, m);
    RealGrid::from_fn(n, m, |k, l| {
        let w = weight.map_or(1.0, |g| g.at(k, l));
        beta * s.at(k, l) / (mu * w + beta * s.at(k, l))
    })
}
