//! The generalized AL/ADMM fixpoint iteration and its diagnostics.
//!
//! One sweep maps `(U^{τ-1}, λ^τ)` to
//!
//! ```text
//! W^τ     = S_κ(C_B U^{τ-1} - λ^τ/β; 1/β)
//! U^τ     = C_A F + C*_B̃ (W^τ + λ^τ/β)
//! λ^{τ+1} = λ^τ + β (W^τ - C_B U^τ)
//! ```
//!
//! and stops once `‖U^τ - U^{τ-1}‖ / ‖U^{τ-1}‖ < ε`.

use std::io::Write;

use log::warn;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filters::sigma_spectrum;
use crate::grid::{
    apply_bank, apply_bank_adjoint, dft2, family_convolve, idft2_re, ComplexGrid, FilterBank, GridFamily, RealGrid,
    SpectralFilter,
};
use crate::shrink::Penalty;

/// `(A, B, B̃)` together with `β` and the penalty type: everything a sweep needs.
#[derive(Clone, Debug, PartialEq)]
pub struct InputFilterTriple {
    a: SpectralFilter,
    b: FilterBank,
    btilde: FilterBank,
    beta: f64,
    penalty: Penalty,
}

impl InputFilterTriple {
    pub fn new(a: SpectralFilter, b: FilterBank, btilde: FilterBank, beta: f64, penalty: Penalty) -> Result<Self> {
        if b.len() != btilde.len() {
            return Err(Error::FamilySizeMismatch { left: b.len(), right: btilde.len() });
        }
        for shape in [b.shape(), btilde.shape()] {
            if shape != a.shape() {
                return Err(Error::ShapeMismatch { left: a.shape(), right: shape });
            }
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be positive and finite, got {beta}"),
            });
        }
        Ok(Self { a, b, btilde, beta, penalty })
    }

    pub fn a(&self) -> &SpectralFilter {
        &self.a
    }

    pub fn b(&self) -> &FilterBank {
        &self.b
    }

    pub fn btilde(&self) -> &FilterBank {
        &self.btilde
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty
    }

    pub fn shape(&self) -> (usize, usize) {
        self.a.shape()
    }

    /// Member count `P`.
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta = beta;
        Self::new(self.a, self.b, self.btilde, beta, self.penalty)
    }

    pub fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = penalty;
        self
    }

    fn check_image(&self, f: &RealGrid) -> Result<()> {
        if f.shape() != self.shape() {
            return Err(Error::ShapeMismatch { left: self.shape(), right: f.shape() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, max_iters: 500, record_trace: false }
    }
}

impl SolverConfig {
    pub fn new(epsilon: f64, max_iters: usize) -> Result<Self> {
        let cfg = Self { epsilon, max_iters, record_trace: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn traced(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be positive, got {}", self.epsilon),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter { name: "max_iters", reason: "must be at least 1".into() });
        }
        Ok(())
    }
}

/// A point on the trajectory, after `tau` sweeps.
///
/// `u`, `w` are `U^τ`, `W^τ`; `lambda` is `λ^{τ+1}`, the multiplier the next sweep
/// consumes. The inputs of the last sweep are kept so that the residuals can be
/// evaluated on the pairing for which they hold by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub u: RealGrid,
    pub w: GridFamily,
    pub lambda: GridFamily,
    pub tau: usize,
    pub rel_change: f64,
    prev_u: RealGrid,
    prev_lambda: GridFamily,
    // C_B U^τ, reused as C_B U^{τ-1} by the next sweep.
    bu: GridFamily,
}

impl SolverState {
    /// `U^{τ-1}`, the iterate the last sweep started from.
    pub fn prev_u(&self) -> &RealGrid {
        &self.prev_u
    }

    /// `λ^τ`, the multiplier the last sweep consumed.
    pub fn prev_lambda(&self) -> &GridFamily {
        &self.prev_lambda
    }

    /// `C_B U^τ`.
    pub fn bu(&self) -> &GridFamily {
        &self.bu
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub res_omega1: f64,
    pub res_omega2: f64,
    pub res_omega_c: f64,
    pub res_dual_feas: f64,
    /// `None` when the contraction condition fails and the affine map is undefined.
    pub res_omega_f: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rel_change: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub tau: usize,
    pub rel_change: f64,
    pub res_omega_c: f64,
    pub energy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DecompositionResult {
    pub u: RealGrid,
    pub residual: RealGrid,
    pub diagnostics: DiagnosticsReport,
    pub state: SolverState,
    pub trace: Vec<TraceRow>,
}

pub fn init_state(f: &RealGrid, triple: &InputFilterTriple) -> Result<SolverState> {
    triple.check_image(f)?;
    let (n, m) = f.shape();
    let p = triple.len();
    let zeros = GridFamily::zeros(p, n, m);
    Ok(SolverState {
        u: f.clone(),
        w: zeros.clone(),
        lambda: zeros.clone(),
        tau: 0,
        rel_change: f64::INFINITY,
        prev_u: f.clone(),
        prev_lambda: zeros,
        bu: family_convolve(triple.b(), f)?,
    })
}

/// Buffers that stay fixed along one trajectory.
struct Sweeper<'a> {
    triple: &'a InputFilterTriple,
    caf_hat: ComplexGrid,
}

impl<'a> Sweeper<'a> {
    fn new(f: &RealGrid, triple: &'a InputFilterTriple) -> Result<Self> {
        triple.check_image(f)?;
        let f_hat = dft2(f);
        let caf_hat = triple.a().symbol().zip_map(&f_hat, |a, g| a * g)?;
        Ok(Self { triple, caf_hat })
    }

    /// `C_A F + C*_B̃(h)` evaluated with a single inverse transform.
    fn u_step(&self, h: &GridFamily) -> RealGrid {
        let spectra: Vec<ComplexGrid> = {
            use rayon::prelude::*;
            h.members().par_iter().map(dft2).collect()
        };
        let (n, m) = self.triple.shape();
        let bt = self.triple.btilde();
        let mut acc: Vec<Complex64> = self.caf_hat.as_slice().to_vec();
        for (filter, hs) in bt.members().iter().zip(&spectra) {
            for ((a, s), v) in acc.iter_mut().zip(filter.symbol().as_slice()).zip(hs.as_slice()) {
                *a += s.conj() * v;
            }
        }
        idft2_re(ComplexGrid::from_vec_unchecked(n, m, acc))
    }

    fn sweep(&self, state: &SolverState) -> Result<SolverState> {
        let beta = self.triple.beta();
        let inv_beta = 1.0 / beta;
        let shifted = state.bu.zip_map(&state.lambda, |x, l| x - l * inv_beta)?;
        let w = self.triple.penalty().shrink(&shifted, inv_beta)?;
        let h = w.zip_map(&state.lambda, |x, l| x + l * inv_beta)?;
        let u = self.u_step(&h);
        let bu = apply_bank(self.triple.b(), &dft2(&u));
        let lambda = GridFamily::new(
            state
                .lambda
                .members()
                .iter()
                .zip(w.members())
                .zip(bu.members())
                .map(|((l, w), b)| {
                    let data = l
                        .as_slice()
                        .iter()
                        .zip(w.as_slice())
                        .zip(b.as_slice())
                        .map(|((l, w), b)| l + beta * (w - b))
                        .collect();
                    RealGrid::from_vec_unchecked(l.rows(), l.cols(), data)
                })
                .collect(),
        )?;
        let rel_change = relative_change(&u, &state.u);
        Ok(SolverState {
            prev_u: state.u.clone(),
            prev_lambda: state.lambda.clone(),
            u,
            w,
            lambda,
            tau: state.tau + 1,
            rel_change,
            bu,
        })
    }
}

/// `‖new − old‖ / ‖old‖`, or the absolute change when `‖old‖ < 1e-300`.
pub fn relative_change(new: &RealGrid, old: &RealGrid) -> f64 {
    let diff = new.as_slice().iter().zip(old.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let denom = old.norm();
    if denom < 1e-300 {
        diff
    } else {
        diff / denom
    }
}

/// One sweep of the iteration.
pub fn iterate(state: &SolverState, f: &RealGrid, triple: &InputFilterTriple) -> Result<SolverState> {
    check_state(state, triple)?;
    Sweeper::new(f, triple)?.sweep(state)
}

fn check_state(state: &SolverState, triple: &InputFilterTriple) -> Result<()> {
    if state.u.shape() != triple.shape() {
        return Err(Error::ShapeMismatch { left: triple.shape(), right: state.u.shape() });
    }
    for fam in [&state.w, &state.lambda] {
        if fam.len() != triple.len() {
            return Err(Error::FamilySizeMismatch { left: triple.len(), right: fam.len() });
        }
        if fam.shape() != triple.shape() {
            return Err(Error::ShapeMismatch { left: triple.shape(), right: fam.shape() });
        }
    }
    Ok(())
}

/// Iterates until the relative change drops below `ε` or `max_iters` sweeps ran.
/// Non-convergence is reported through `diagnostics.converged`.
pub fn solve(f: &RealGrid, triple: &InputFilterTriple, cfg: &SolverConfig) -> Result<DecompositionResult> {
    solve_inner(f, triple, cfg, None)
}

/// As [`solve`], with an energy functional evaluated on every traced iterate.
pub fn solve_with_energy(
    f: &RealGrid,
    triple: &InputFilterTriple,
    cfg: &SolverConfig,
    energy: &dyn Fn(&RealGrid) -> f64,
) -> Result<DecompositionResult> {
    solve_inner(f, triple, cfg, Some(energy))
}

fn solve_inner(
    f: &RealGrid,
    triple: &InputFilterTriple,
    cfg: &SolverConfig,
    energy: Option<&dyn Fn(&RealGrid) -> f64>,
) -> Result<DecompositionResult> {
    cfg.validate()?;
    let sweeper = Sweeper::new(f, triple)?;
    let mut state = init_state(f, triple)?;
    let mut trace = Vec::new();
    let mut converged = false;
    while state.tau < cfg.max_iters {
        state = sweeper.sweep(&state)?;
        if cfg.record_trace {
            trace.push(TraceRow {
                tau: state.tau,
                rel_change: state.rel_change,
                res_omega_c: state.bu.sub(&state.w)?.norm(),
                energy: energy.map(|e| e(&state.u)),
            });
        }
        if state.rel_change < cfg.epsilon {
            converged = true;
            break;
        }
    }
    let diagnostics = diagnostics_inner(&state, f, triple, converged)?;
    let (u, residual) = exact_split(&state.u, f);
    Ok(DecompositionResult { u, residual, diagnostics, state, trace })
}

/// Splits `F` into `(U', F − U')` with `U' ≈ U` chosen so that `U' + (F − U') == F`
/// holds exactly in floating point.
///
/// `U' = fl(F − fl(F − U))`, followed by a few ulp nudges. This always succeeds when
/// `F` is quantized (integer pixel values) or `U` lies within a factor of two of `F`.
/// Otherwise no float pair near `(U, F − U)` may add up to `F`; such entries keep
/// `U` and are counted in a log warning.
pub fn exact_split(u: &RealGrid, f: &RealGrid) -> (RealGrid, RealGrid) {
    let mut us = Vec::with_capacity(u.len());
    let mut rs = Vec::with_capacity(u.len());
    let mut inexact = 0usize;
    for (&uv, &fv) in u.as_slice().iter().zip(f.as_slice()) {
        let (a, b, exact) = split_entry(uv, fv);
        inexact += usize::from(!exact);
        us.push(a);
        rs.push(b);
    }
    if inexact > 0 {
        warn!("{inexact} entries admit no exact split U + (F - U) = F");
    }
    let (n, m) = f.shape();
    (RealGrid::from_vec_unchecked(n, m, us), RealGrid::from_vec_unchecked(n, m, rs))
}

fn split_entry(u: f64, f: f64) -> (f64, f64, bool) {
    let mut cand = f - (f - u);
    for _ in 0..8 {
        let r = f - cand;
        let s = cand + r;
        if s == f {
            return (cand, r, true);
        }
        cand = if s > f { cand.next_down() } else { cand.next_up() };
    }
    (u, f - u, false)
}

/// Residuals of the sets `Ω₁`, `Ω₂`, `Ω_C` and the dual feasibility measure.
///
/// `Ω₁` and `Ω₂` are evaluated on the sweep pairing `(U^{τ-1}, W^τ, λ^τ)` and
/// `(U^τ, W^τ, λ^τ)` respectively, for which they hold up to rounding after every
/// sweep; `res_omega_c = ‖C_B U^τ − W^τ‖` measures the remaining distance to a
/// fixpoint. `res_omega_f` is the distance of `(U^τ, λ^τ)` to the affine set `Ω_F`.
///
/// The stopping rule is not known here, so `converged` is left `false`.
pub fn residuals(state: &SolverState, f: &RealGrid, triple: &InputFilterTriple) -> Result<DiagnosticsReport> {
    diagnostics_inner(state, f, triple, false)
}

fn diagnostics_inner(
    state: &SolverState,
    f: &RealGrid,
    triple: &InputFilterTriple,
    converged: bool,
) -> Result<DiagnosticsReport> {
    check_state(state, triple)?;
    let sweeper = Sweeper::new(f, triple)?;
    let beta = triple.beta();
    let inv_beta = 1.0 / beta;

    let bu_prev = family_convolve(triple.b(), &state.prev_u)?;
    let shifted = bu_prev.zip_map(&state.prev_lambda, |x, l| x - l * inv_beta)?;
    let w_ref = triple.penalty().shrink(&shifted, inv_beta)?;
    let res_omega1 = state.w.sub(&w_ref)?.norm();

    let h = state.w.zip_map(&state.prev_lambda, |x, l| x + l * inv_beta)?;
    let res_omega2 = state.u.sub(&sweeper.u_step(&h))?.norm();

    let bu = family_convolve(triple.b(), &state.u)?;
    let res_omega_c = bu.sub(&state.w)?.norm();

    let res_dual_feas = dual_feasibility(&state.lambda, &state.w, triple.penalty());
    let res_omega_f = match omega_f_residual(&state.u, &state.prev_lambda, f, triple) {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("skipping the Ω_F residual: {e}");
            None
        }
    };
    Ok(DiagnosticsReport {
        res_omega1,
        res_omega2,
        res_omega_c,
        res_dual_feas,
        res_omega_f,
        iterations: state.tau,
        converged,
        rel_change: state.rel_change,
    })
}

/// The three set residuals evaluated literally at one point `(U, W, λ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointResiduals {
    pub omega1: f64,
    pub omega2: f64,
    pub omega_c: f64,
}

pub fn point_residuals(
    u: &RealGrid,
    w: &GridFamily,
    lambda: &GridFamily,
    f: &RealGrid,
    triple: &InputFilterTriple,
) -> Result<PointResiduals> {
    let sweeper = Sweeper::new(f, triple)?;
    let inv_beta = 1.0 / triple.beta();
    let bu = family_convolve(triple.b(), u)?;
    let shifted = bu.zip_map(lambda, |x, l| x - l * inv_beta)?;
    let omega1 = w.sub(&triple.penalty().shrink(&shifted, inv_beta)?)?.norm();
    let h = w.zip_map(lambda, |x, l| x + l * inv_beta)?;
    let omega2 = u.sub(&sweeper.u_step(&h))?.norm();
    let omega_c = bu.sub(w)?.norm();
    Ok(PointResiduals { omega1, omega2, omega_c })
}

/// Largest violation of the subgradient conditions on `λ`.
///
/// For `κ = 1`, `λ_p = −sign(W_p)` where `W_p ≠ 0` and `|λ_p| ≤ 1` elsewhere; for
/// `κ = 2` the per-pixel vector analogue with the unit ball. The support is read
/// from `W`, which the shrinkage step makes exactly sparse.
pub fn dual_feasibility(lambda: &GridFamily, w: &GridFamily, penalty: Penalty) -> f64 {
    let (n, m) = w.shape();
    let mut worst: f64 = 0.0;
    match penalty {
        Penalty::Anisotropic => {
            for (lm, wm) in lambda.members().iter().zip(w.members()) {
                for (&l, &x) in lm.as_slice().iter().zip(wm.as_slice()) {
                    let v = if x != 0.0 { (l + x.signum()).abs() } else { (l.abs() - 1.0).max(0.0) };
                    worst = worst.max(v);
                }
            }
        }
        Penalty::Isotropic => {
            for k in 0..n {
                for l in 0..m {
                    let ls = lambda.site(k, l);
                    let ws = w.site(k, l);
                    let wn = ws.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let v = if wn > 0.0 {
                        ls.iter().zip(&ws).map(|(a, b)| (a + b / wn).powi(2)).sum::<f64>().sqrt()
                    } else {
                        (ls.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).max(0.0)
                    };
                    worst = worst.max(v);
                }
            }
        }
    }
    worst
}

/// `‖U − (𝔈 − C*_B̃ C_B)⁻¹ (C_A F + β⁻¹ C*_B̃ λ)‖`; requires the contraction condition.
pub fn omega_f_residual(u: &RealGrid, lambda: &GridFamily, f: &RealGrid, triple: &InputFilterTriple) -> Result<f64> {
    let report = sigma_spectrum(triple.b(), triple.btilde());
    report.require_cpc()?;
    let (n, m) = triple.shape();
    let inv_beta = 1.0 / triple.beta();
    let spectra: Vec<ComplexGrid> = lambda.members().iter().map(|l| dft2(&l.scale(inv_beta))).collect();
    let rhs = apply_bank_adjoint(triple.btilde(), &spectra);
    let rhs_hat = dft2(&rhs);
    let f_hat = dft2(f);
    let sig = report.sigma_complex();
    let data: Vec<Complex64> = (0..n * m)
        .map(|i| {
            let num = triple.a().symbol().as_slice()[i] * f_hat.as_slice()[i] + rhs_hat.as_slice()[i];
            num / (Complex64::new(1.0, 0.0) - sig.as_slice()[i])
        })
        .collect();
    let target = idft2_re(ComplexGrid::from_vec_unchecked(n, m, data));
    u.sub(&target).map(|d| d.norm())
}

/// `‖C_B U‖_{1,κ} + (μ/2)‖U − F‖²`.
pub fn energy_var(u: &RealGrid, b: &FilterBank, f: &RealGrid, mu: f64, penalty: Penalty) -> Result<f64> {
    let reg = penalty.norm(&family_convolve(b, u)?);
    let d = u.sub(f)?.norm();
    Ok(reg + 0.5 * mu * d * d)
}

/// `‖C_B U‖_{1,κ} + (μ/2)‖C_M(U − F)‖²` for a real, strictly positive mask `M̂`.
pub fn energy_hilbert(
    u: &RealGrid,
    b: &FilterBank,
    mask: &SpectralFilter,
    f: &RealGrid,
    mu: f64,
    penalty: Penalty,
) -> Result<f64> {
    crate::filters::check_mask(mask)?;
    let reg = penalty.norm(&family_convolve(b, u)?);
    let d = crate::grid::convolve(mask, &u.sub(f)?)?.norm();
    Ok(reg + 0.5 * mu * d * d)
}

/// Writes `tau,rel_change,res_omega_c,energy` lines.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "tau,rel_change,res_omega_c,energy")?;
    for r in rows {
        match r.energy {
            Some(e) => writeln!(out, "{},{:e},{:e},{:e}", r.tau, r.rel_change, r.res_omega_c, e)?,
            None => writeln!(out, "{},{:e},{:e},", r.tau, r.rel_change, r.res_omega_c)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{build_tv_l2, gradient_bank};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(seed: u64, n: usize, m: usize, amp: f64) -> RealGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealGrid::from_fn(n, m, |_, _| rng.random_range(-amp..amp))
    }

    #[test]
    fn init_is_zero_multiplier() {
        let f = random_grid(1, 6, 5, 1.0);
        let t = build_tv_l2(6, 5, 0.1, 0.5, Penalty::Isotropic).unwrap();
        let s = init_state(&f, &t).unwrap();
        assert_eq!(s.u, f);
        assert_eq!(s.tau, 0);
        assert_eq!(s.lambda.max_abs(), 0.0);
        assert_eq!(s.w.max_abs(), 0.0);

        let zero = init_state(&RealGrid::zeros(6, 5), &t).unwrap();
        assert_eq!(zero.u.max_abs() + zero.bu.max_abs(), 0.0);
        assert!(init_state(&RealGrid::zeros(5, 5), &t).is_err());
    }

    #[test]
    fn constant_image_is_a_fixpoint() {
        let f = RealGrid::filled(8, 8, 3.25);
        let t = build_tv_l2(8, 8, 0.054, 0.1, Penalty::Isotropic).unwrap();
        let s = iterate(&init_state(&f, &t).unwrap(), &f, &t).unwrap();
        assert!(s.u.sub(&f).unwrap().max_abs() < 1e-12);
        assert!(s.w.max_abs() == 0.0);
        assert!(s.lambda.max_abs() < 1e-12);
        let r = residuals(&s, &f, &t).unwrap();
        for v in [r.res_omega1, r.res_omega2, r.res_omega_c, r.res_omega_f.unwrap()] {
            assert!(v < 1e-12, "{r:?}");
        }
        let out = solve(&f, &t, &SolverConfig::default()).unwrap();
        assert!(out.diagnostics.converged && out.diagnostics.iterations <= 2);
    }

    #[test]
    fn zero_synthesis_bank_decouples() {
        let f = random_grid(2, 6, 6, 1.0);
        let base = build_tv_l2(6, 6, 0.3, 0.7, Penalty::Anisotropic).unwrap();
        let t = InputFilterTriple::new(
            base.a().clone(),
            base.b().clone(),
            FilterBank::zeros(2, 6, 6),
            0.7,
            Penalty::Anisotropic,
        )
        .unwrap();
        let caf = crate::grid::convolve(t.a(), &f).unwrap();
        let mut s = init_state(&f, &t).unwrap();
        for _ in 0..3 {
            s = iterate(&s, &f, &t).unwrap();
            assert!(s.u.sub(&caf).unwrap().max_abs() < 1e-13);
        }
    }

    #[test]
    fn triple_validation() {
        let (a, b) = (SpectralFilter::identity(4, 4), gradient_bank(4, 4).unwrap());
        assert!(
            InputFilterTriple::new(a.clone(), b.clone(), FilterBank::zeros(3, 4, 4), 1.0, Penalty::Isotropic).is_err()
        );
        assert!(InputFilterTriple::new(a.clone(), b.clone(), b.clone(), 0.0, Penalty::Isotropic).is_err());
        assert!(InputFilterTriple::new(SpectralFilter::identity(4, 5), b.clone(), b, 1.0, Penalty::Isotropic).is_err());
        assert!(SolverConfig::new(0.0, 3).is_err());
        assert!(SolverConfig::new(1e-3, 0).is_err());
    }

    #[test]
    fn sweep_residuals_vanish_by_construction() {
        let f = random_grid(3, 12, 10, 10.0);
        let t = build_tv_l2(12, 10, 0.2, 0.5, Penalty::Isotropic).unwrap();
        let mut s = init_state(&f, &t).unwrap();
        for _ in 0..5 {
            s = iterate(&s, &f, &t).unwrap();
            let r = residuals(&s, &f, &t).unwrap();
            assert_eq!(r.res_omega1, 0.0);
            assert!(r.res_omega2 < 1e-12 * f.norm());
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let f = random_grid(4, 16, 16, 5.0);
        let t = build_tv_l2(16, 16, 0.1, 0.3, Penalty::Isotropic).unwrap();
        let cfg = SolverConfig::new(1e-9, 40).unwrap();
        let a = solve(&f, &t, &cfg).unwrap();
        let b = solve(&f, &t, &cfg).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn energy_basics() {
        let b = gradient_bank(6, 6).unwrap();
        let c = RealGrid::filled(6, 6, 2.0);
        assert!(energy_var(&c, &b, &c, 0.5, Penalty::Isotropic).unwrap().abs() < 1e-12);
        let f = random_grid(5, 6, 6, 1.0);
        let tv = crate::grid::l1_iso(&family_convolve(&b, &f).unwrap());
        assert_eq!(energy_var(&f, &b, &f, 9.0, Penalty::Isotropic).unwrap(), tv);

        let u = random_grid(6, 6, 6, 1.0);
        let id = SpectralFilter::identity(6, 6);
        for p in [Penalty::Anisotropic, Penalty::Isotropic] {
            let ev = energy_var(&u, &b, &f, 0.3, p).unwrap();
            let eh = energy_hilbert(&u, &b, &id, &f, 0.3, p).unwrap();
            assert!((ev - eh).abs() < 1e-12 * ev);
        }
        let bad = SpectralFilter::from_real_fn(6, 6, |k, _| if k == 2 { 0.0 } else { 1.0 });
        assert!(matches!(energy_hilbert(&u, &b, &bad, &f, 0.3, Penalty::Isotropic), Err(Error::InvalidMask { .. })));
    }

    #[test]
    fn trace_rows_and_csv() {
        let f = random_grid(7, 8, 8, 5.0);
        let t = build_tv_l2(8, 8, 0.1, 0.3, Penalty::Isotropic).unwrap();
        let cfg = SolverConfig::new(1e-6, 15).unwrap().traced();
        let b = t.b().clone();
        let g = f.clone();
        let out =
            solve_with_energy(&f, &t, &cfg, &|u| energy_var(u, &b, &g, 0.1, Penalty::Isotropic).unwrap()).unwrap();
        assert_eq!(out.trace.len(), out.diagnostics.iterations);
        let mut buf = Vec::new();
        write_trace_csv(&out.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), out.trace.len() + 1);
        assert!(text.lines().nth(1).unwrap().starts_with("1,"));
    }

    #[test]
    fn non_convergence_is_reported() {
        let f = random_grid(8, 16, 16, 50.0);
        let t = build_tv_l2(16, 16, 0.05, 0.1, Penalty::Isotropic).unwrap();
        let out = solve(&f, &t, &SolverConfig::new(1e-14, 3).unwrap()).unwrap();
        assert!(!out.diagnostics.converged);
        assert_eq!(out.diagnostics.iterations, 3);
    }

    proptest! {
        // Within a factor of two the subtraction F − U is exact.
        #[test]
        fn exact_split_is_additive(
            f in prop::collection::vec(-1e3f64..1e3, 1..64),
            rho in prop::collection::vec(-0.5f64..1.0, 64),
        ) {
            let n = f.len();
            let u: Vec<f64> = (0..n).map(|i| f[i] * (1.0 + rho[i])).collect();
            let ug = RealGrid::new(1, n, u.clone()).unwrap();
            let fg = RealGrid::new(1, n, f.clone()).unwrap();
            let (a, r) = exact_split(&ug, &fg);
            for i in 0..n {
                prop_assert_eq!(a.as_slice()[i] + r.as_slice()[i], f[i]);
                prop_assert!((a.as_slice()[i] - u[i]).abs() <= 1e-12 * u[i].abs().max(1.0));
            }
        }

        // Quantized images: any nearby U splits exactly.
        #[test]
        fn exact_split_on_pixel_range(f in prop::collection::vec(0u16..=255, 32), u in prop::collection::vec(-50.0f64..300.0, 32)) {
            let ug = RealGrid::new(4, 8, u).unwrap();
            let fg = RealGrid::new(4, 8, f.iter().map(|&v| f64::from(v)).collect()).unwrap();
            let (a, r) = exact_split(&ug, &fg);
            prop_assert_eq!(a.add(&r).unwrap(), fg);
            prop_assert!(a.sub(&ug).unwrap().max_abs() <= 1e-12);
        }
    }
}
