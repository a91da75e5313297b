//! Soft shrinkage, the proximal maps of the anisotropic and isotropic ℓ¹ norms.

use crate::error::{Error, Result};
use crate::grid::{GridFamily, RealGrid};

/// Which ℓ¹-type norm couples the members of a family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Penalty {
    /// `κ = 1`: entry-wise absolute values.
    Anisotropic,
    /// `κ = 2`: Euclidean norm of the member vector at each pixel.
    Isotropic,
}

impl Penalty {
    pub fn from_kappa(kappa: u8) -> Result<Self> {
        match kappa {
            1 => Ok(Self::Anisotropic),
            2 => Ok(Self::Isotropic),
            other => Err(Error::InvalidParameter { name: "kappa", reason: format!("must be 1 or 2, got {other}") }),
        }
    }

    pub fn kappa(self) -> u8 {
        match self {
            Self::Anisotropic => 1,
            Self::Isotropic => 2,
        }
    }

    /// `‖fam‖_{1,κ}`.
    pub fn norm(self, fam: &GridFamily) -> f64 {
        match self {
            Self::Anisotropic => crate::grid::l1_aniso(fam),
            Self::Isotropic => crate::grid::l1_iso(fam),
        }
    }

    pub fn shrink(self, fam: &GridFamily, t: f64) -> Result<GridFamily> {
        match self {
            Self::Anisotropic => shrink_aniso(fam, t),
            Self::Isotropic => shrink_iso(fam, t),
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveThreshold(t))
    }
}

/// Scalar soft threshold `s₁(x, t)`.
#[inline]
pub fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn shrink_aniso(fam: &GridFamily, t: f64) -> Result<GridFamily> {
    check_threshold(t)?;
    let members = fam.members().iter().map(|m| m.map(|x| soft(x, t))).collect();
    GridFamily::new(members)
}

pub fn shrink_iso(fam: &GridFamily, t: f64) -> Result<GridFamily> {
    check_threshold(t)?;
    let (rows, cols) = fam.shape();
    let count = fam.len();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; rows * cols]; count];
    for i in 0..rows * cols {
        let norm = fam.members().iter().map(|m| m.as_slice()[i].powi(2)).sum::<f64>().sqrt();
        if norm > t {
            let factor = (norm - t) / norm;
            for (dst, src) in out.iter_mut().zip(fam.members()) {
                dst[i] = src.as_slice()[i] * factor;
            }
        }
    }
    GridFamily::new(out.into_iter().map(|d| RealGrid::from_vec_unchecked(rows, cols, d)).collect())
}
