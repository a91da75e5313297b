use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },

    #[error("family size mismatch: {left} vs {right}")]
    FamilySizeMismatch { left: usize, right: usize },

    #[error("imaginary residue {residue:e} exceeds real-cast tolerance {tolerance:e}")]
    RealCast { residue: f64, tolerance: f64 },

    #[error("shrinkage threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid shape {rows}x{cols} is too small: {reason}")]
    DegenerateShape { rows: usize, cols: usize, reason: &'static str },

    #[error("exponent {exponent} at bin ({k},{l}) exceeds the overflow guard")]
    OverflowGuard { k: usize, l: usize, exponent: f64 },

    #[error("invalid spectral mask at bin ({k},{l}): {value}")]
    InvalidMask { k: usize, l: usize, value: String },

    #[error("not weakly factoring at member {p}, bin ({k},{l}): ratio {ratio_re:e}{ratio_im:+e}i")]
    NotWeaklyFactoring { p: usize, k: usize, l: usize, ratio_re: f64, ratio_im: f64 },

    #[error("not strongly factoring at bin ({k},{l}): member factors {first:e} and {other:e} differ")]
    NotStronglyFactoring { k: usize, l: usize, first: f64, other: f64 },

    #[error("contraction condition violated: max sigma {max_val} at bin ({k},{l})")]
    CpcViolation { k: usize, l: usize, max_val: f64 },

    #[error("refinement filter is singular at ({x}, {y})")]
    SingularRefinement { x: f64, y: f64 },

    #[error("correction denominator is not positive at bin ({k},{l}): {value:e}")]
    NonPositiveCorrection { k: usize, l: usize, value: f64 },

    #[error("empty search bracket or grid: {0}")]
    EmptyBracket(String),
}
