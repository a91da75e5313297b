//! Independent reference implementations used by the integration tests. None of
//! them goes through the FFT code paths of the library.
#![allow(dead_code)]

use fixdecomp_core::RealGrid;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> RealGrid {
    RealGrid::from_fn(n, m, |_, _| rng.random_range(0.0..scale))
}

/// Periodic forward differences `(U[k+1,l] − U[k,l], U[k,l+1] − U[k,l])`.
pub fn forward_diff(u: &RealGrid) -> (RealGrid, RealGrid) {
    let (n, m) = u.shape();
    let d1 = RealGrid::from_fn(n, m, |k, l| u.at((k + 1) % n, l) - u.at(k, l));
    let d2 = RealGrid::from_fn(n, m, |k, l| u.at(k, (l + 1) % m) - u.at(k, l));
    (d1, d2)
}

/// Adjoint of [`forward_diff`]: `p1[k−1,l] − p1[k,l] + p2[k,l−1] − p2[k,l]`.
pub fn forward_diff_adjoint(p1: &RealGrid, p2: &RealGrid) -> RealGrid {
    let (n, m) = p1.shape();
    RealGrid::from_fn(n, m, |k, l| p1.at((k + n - 1) % n, l) - p1.at(k, l) + p2.at(k, (l + m - 1) % m) - p2.at(k, l))
}

/// `Σ |∇U| + (μ/2)‖U − F‖²` with the isotropic or anisotropic total variation.
pub fn tv_energy(u: &RealGrid, f: &RealGrid, mu: f64, isotropic: bool) -> f64 {
    let (d1, d2) = forward_diff(u);
    let tv: f64 = d1
        .as_slice()
        .iter()
        .zip(d2.as_slice())
        .map(|(a, b)| if isotropic { a.hypot(*b) } else { a.abs() + b.abs() })
        .sum();
    let r = u.sub(f).unwrap().norm();
    tv + 0.5 * mu * r * r
}

/// Accelerated Chambolle–Pock primal-dual iteration for the TV-ℓ² problem.
pub fn chambolle_pock_tv(f: &RealGrid, mu: f64, isotropic: bool, iters: usize) -> RealGrid {
    let (n, m) = f.shape();
    let mut u = f.clone();
    let mut ubar = f.clone();
    let mut p1 = RealGrid::zeros(n, m);
    let mut p2 = RealGrid::zeros(n, m);
    let mut tau = 1.0 / 8f64.sqrt();
    let mut sigma = 1.0 / 8f64.sqrt();
    for _ in 0..iters {
        let (g1, g2) = forward_diff(&ubar);
        let q1 = p1.zip_map(&g1, |p, g| p + sigma * g).unwrap();
        let q2 = p2.zip_map(&g2, |p, g| p + sigma * g).unwrap();
        if isotropic {
            let scale: Vec<f64> = q1.as_slice().iter().zip(q2.as_slice()).map(|(a, b)| a.hypot(*b).max(1.0)).collect();
            p1 = RealGrid::new(n, m, q1.as_slice().iter().zip(&scale).map(|(a, s)| a / s).collect()).unwrap();
            p2 = RealGrid::new(n, m, q2.as_slice().iter().zip(&scale).map(|(a, s)| a / s).collect()).unwrap();
        } else {
            p1 = q1.map(|v| v.clamp(-1.0, 1.0));
            p2 = q2.map(|v| v.clamp(-1.0, 1.0));
        }
        let div = forward_diff_adjoint(&p1, &p2);
        let next = RealGrid::from_fn(n, m, |k, l| {
            (u.at(k, l) - tau * div.at(k, l) + tau * mu * f.at(k, l)) / (1.0 + tau * mu)
        });
        let theta = 1.0 / (1.0 + 2.0 * mu * tau).sqrt();
        tau *= theta;
        sigma /= theta;
        ubar = RealGrid::from_fn(n, m, |k, l| next.at(k, l) + theta * (next.at(k, l) - u.at(k, l)));
        u = next;
    }
    u
}

/// Dense matrix of the circular convolution `G ↦ Σ_{k,l} A[k−r, l−s] G[k, l]`,
/// acting on row-major vectors.
pub fn dense_convolution(kernel: &RealGrid) -> DMatrix<f64> {
    let (n, m) = kernel.shape();
    let nm = n * m;
    DMatrix::from_fn(nm, nm, |row, col| {
        let (r, s) = ((row / m) as i64, (row % m) as i64);
        let (k, l) = ((col / m) as i64, (col % m) as i64);
        kernel.get(k - r, l - s)
    })
}

pub fn to_vector(g: &RealGrid) -> DVector<f64> {
    DVector::from_column_slice(g.as_slice())
}

pub fn from_vector(v: &DVector<f64>, n: usize, m: usize) -> RealGrid {
    RealGrid::new(n, m, v.as_slice().to_vec()).unwrap()
}

/// Sorted eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(a: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// One sweep of classical split-Bregman ADMM for TV-ℓ² with explicit minimizers:
/// `W = shrink(DU − λ/β; 1/β)`, `U = (μ𝔈 + βDᵀD)⁻¹(μF + βDᵀ(W + λ/β))`,
/// `λ ← λ + β(W − DU)`; the linear solve is dense.
pub fn classical_tv_sweep(
    u: &RealGrid,
    lambda: &(RealGrid, RealGrid),
    f: &RealGrid,
    mu: f64,
    beta: f64,
) -> (RealGrid, (RealGrid, RealGrid), (RealGrid, RealGrid)) {
    let (n, m) = f.shape();
    let (d1, d2) = forward_diff(u);
    let z1 = d1.zip_map(&lambda.0, |d, l| d - l / beta).unwrap();
    let z2 = d2.zip_map(&lambda.1, |d, l| d - l / beta).unwrap();
    let t = 1.0 / beta;
    let mut w1 = RealGrid::zeros(n, m);
    let mut w2 = RealGrid::zeros(n, m);
    for k in 0..n {
        for l in 0..m {
            let (a, b) = (z1.at(k, l), z2.at(k, l));
            let r = a.hypot(b);
            if r > t {
                w1.set(k, l, a * (r - t) / r);
                w2.set(k, l, b * (r - t) / r);
            }
        }
    }
    let h1 = w1.zip_map(&lambda.0, |w, l| w + l / beta).unwrap();
    let h2 = w2.zip_map(&lambda.1, |w, l| w + l / beta).unwrap();
    let rhs = f.scale(mu).add(&forward_diff_adjoint(&h1, &h2).scale(beta)).unwrap();
    let nm = n * m;
    let mut lap = DMatrix::<f64>::identity(nm, nm) * mu;
    for col in 0..nm {
        let e = RealGrid::new(n, m, (0..nm).map(|i| f64::from(u8::from(i == col))).collect()).unwrap();
        let (a, b) = forward_diff(&e);
        let dtd = forward_diff_adjoint(&a, &b);
        for row in 0..nm {
            lap[(row, col)] += beta * dtd.as_slice()[row];
        }
    }
    let unew = from_vector(&lap.lu().solve(&to_vector(&rhs)).unwrap(), n, m);
    let (e1, e2) = forward_diff(&unew);
    let l1 = lambda.0.add(&w1.sub(&e1).unwrap().scale(beta)).unwrap();
    let l2 = lambda.1.add(&w2.sub(&e2).unwrap().scale(beta)).unwrap();
    (unew, (w1, w2), (l1, l2))
}

/// Spectral energy `Σ |ĝ|²` over the bins selected by `band`, by direct summation.
pub fn band_energy(g: &RealGrid, band: impl Fn(usize, usize) -> bool) -> f64 {
    let (n, m) = g.shape();
    let mut total = 0.0;
    for k in 0..n {
        for l in 0..m {
            if !band(k, l) {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for a in 0..n {
                for b in 0..m {
                    let ph = -2.0 * std::f64::consts::PI * ((a * k) as f64 / n as f64 + (b * l) as f64 / m as f64);
                    re += g.at(a, b) * ph.cos();
                    im += g.at(a, b) * ph.sin();
                }
            }
            total += re * re + im * im;
        }
    }
    total
}

/// Minimal reader for 8-bit binary PGM files.
pub fn read_pgm(path: &std::path::Path) -> std::io::Result<RealGrid> {
    let bytes = std::fs::read(path)?;
    let bad =
        || std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: not an 8-bit P5 file", path.display()));
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
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
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    i += 1;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let (w, h, max) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if fields[0] != "P5" || max > 255 || bytes.len() < i + w * h {
        return Err(bad());
    }
    RealGrid::new(h, w, bytes[i..i + w * h].iter().map(|&b| f64::from(b)).collect()).map_err(|_| bad())
}
