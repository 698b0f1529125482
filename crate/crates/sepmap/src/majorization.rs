//! Vector majorization predicates and the Schur-convex/concave entropy
//! family, evaluated on spectra and on Hermitian matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SepmapError};
use crate::matrix::{eig_hermitian, HermitianMatrix, PSD_TOL, RANK_CUTOFF};

/// Relative partial-sum slack for majorization verdicts:
/// `1e-10 * max(1, sum|x|)`.
pub const WEAK_MAJ_TOL: f64 = 1e-10;

/// Real vector sorted descending, zero-padded to a declared length.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSpectrum {
    values: Vec<f64>,
}

impl SortedSpectrum {
    /// Sorts descending.
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite spectrum"));
        Self { values }
    }

    /// Sorts descending and zero-pads to `len` (the joint-space dimension
    /// when comparing subsystem vs joint spectra).
    pub fn with_padding(values: Vec<f64>, len: usize) -> Result<Self> {
        if len < values.len() {
            return Err(SepmapError::InvalidParameter {
                name: "len",
                reason: format!(
                    "padding length {len} shorter than spectrum length {}",
                    values.len()
                ),
            });
        }
        let mut s = Self::new(values);
        s.values.resize(len, 0.0);
        // zero padding may land mid-vector when entries are negative
        s.values
            .sort_by(|a, b| b.partial_cmp(a).expect("finite spectrum"));
        Ok(s)
    }

    /// Eigenvalues of a Hermitian matrix (already descending).
    pub fn from_matrix(m: &HermitianMatrix) -> Self {
        Self {
            values: eig_hermitian(m).eigenvalues().to_vec(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    fn slack(&self) -> f64 {
        WEAK_MAJ_TOL * self.values.iter().map(|x| x.abs()).sum::<f64>().max(1.0)
    }
}

fn check_same_len(x: &SortedSpectrum, y: &SortedSpectrum) -> Result<()> {
    if x.len() != y.len() {
        return Err(SepmapError::DimensionMismatch {
            context: format!("spectrum lengths differ: {} vs {}", x.len(), y.len()),
        });
    }
    Ok(())
}

/// Worst partial-sum surplus `min_k (sum_{i<=k} x_i - sum_{i<=k} y_i)`;
/// nonnegative (within slack) iff `x` weakly majorizes `y`.
pub fn weak_majorization_margin(x: &SortedSpectrum, y: &SortedSpectrum) -> Result<f64> {
    check_same_len(x, y)?;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut worst = f64::INFINITY;
    for (xi, yi) in x.values.iter().zip(&y.values) {
        sx += xi;
        sy += yi;
        worst = worst.min(sx - sy);
    }
    Ok(worst)
}

/// `true` iff every partial sum of `x` dominates the matching partial sum of
/// `y` within the slack `1e-10 * max(1, sum|x|)`.
pub fn weak_majorizes(x: &SortedSpectrum, y: &SortedSpectrum) -> Result<bool> {
    Ok(weak_majorization_margin(x, y)? >= -x.slack())
}

/// Weak majorization plus total-sum equality within the slack.
pub fn majorizes(x: &SortedSpectrum, y: &SortedSpectrum) -> Result<bool> {
    Ok(weak_majorizes(x, y)? && (x.sum() - y.sum()).abs() <= x.slack())
}

/// Entropy family selector (Table of Schur-convex/concave functions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyKind {
    /// `f_alpha(x) = sum_i x_i^alpha` over the support (`0^0 := 0`).
    Moment,
    /// `S^R_alpha = ln(f_alpha) / (1 - alpha)`; von Neumann limit at alpha=1.
    Renyi,
    /// `S^T_alpha = (f_alpha - 1) / (1 - alpha)`; von Neumann limit at alpha=1.
    Tsallis,
    /// `h^A_alpha = ((f_{1/alpha})^alpha - 1) / (alpha - 1)`; van Neumann limit at alpha=1.
    Arimoto,
    /// `S = -sum_i x_i ln x_i`.
    VonNeumann,
}

impl std::fmt::Display for EntropyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EntropyKind::Moment => "moment",
            EntropyKind::Renyi => "renyi",
            EntropyKind::Tsallis => "tsallis",
            EntropyKind::Arimoto => "arimoto",
            EntropyKind::VonNeumann => "von_neumann",
        };
        write!(f, "{s}")
    }
}

/// Schur-direction / monotonicity label from the entropy table
/// (documentation metadata; no criterion consumes these).
pub fn schur_label(kind: EntropyKind, alpha: f64) -> &'static str {
    match kind {
        EntropyKind::Moment => {
            if alpha >= 1.0 {
                "Schur-convex, increasing"
            } else {
                "Schur-concave, increasing"
            }
        }
        EntropyKind::Renyi | EntropyKind::Tsallis => {
            if alpha >= 1.0 {
                "Schur-concave, decreasing"
            } else {
                "Schur-concave, increasing"
            }
        }
        EntropyKind::Arimoto => {
            if alpha >= 1.0 {
                "Schur-concave, increasing"
            } else {
                "Schur-concave, decreasing"
            }
        }
        EntropyKind::VonNeumann => "Schur-concave",
    }
}

/// Validates a spectrum for entropy evaluation and returns the support
/// values (entries above the rank cutoff), clamping sub-tolerance negatives.
fn support_values(x: &[f64]) -> Result<Vec<f64>> {
    let max_abs = x.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let neg_tol = PSD_TOL * max_abs.max(1.0);
    if let Some(&bad) = x.iter().find(|&&v| v < -neg_tol) {
        return Err(SepmapError::Domain {
            op: "entropy",
            reason: format!("negative spectrum entry {bad:.6e} beyond tolerance"),
        });
    }
    let lambda_max = x.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    let cutoff = RANK_CUTOFF * lambda_max;
    Ok(x.iter().copied().filter(|&v| v > cutoff).collect())
}

/// `ln(f_alpha)` evaluated stably by factoring out the largest entry, so that
/// very large alpha (e.g. 20000) does not underflow. Requires a nonempty
/// support. Returns `(ln_f, f)`; `f` may overflow to `inf` / underflow to 0
/// at extreme alpha while `ln_f` stays finite.
fn ln_f_alpha(support: &[f64], alpha: f64) -> (f64, f64) {
    let lambda_max = support.iter().fold(f64::MIN, |acc, &v| acc.max(v));
    let sum: f64 = support
        .iter()
        .map(|&v| (alpha * (v / lambda_max).ln()).exp())
        .sum();
    let ln_f = alpha * lambda_max.ln() + sum.ln();
    (ln_f, ln_f.exp())
}

fn von_neumann_of(support: &[f64]) -> f64 {
    -support.iter().map(|&v| v * v.ln()).sum::<f64>()
}

/// Entropy of a sorted spectrum. `alpha >= 0` required; Renyi/Tsallis at
/// alpha=1 evaluate the von Neumann limit; natural logarithm throughout.
pub fn entropy_of_spectrum(x: &SortedSpectrum, kind: EntropyKind, alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(SepmapError::InvalidParameter {
            name: "alpha",
            reason: format!("entropy order must be >= 0, got {alpha}"),
        });
    }
    let support = support_values(x.values())?;
    if support.is_empty() {
        return Err(SepmapError::Domain {
            op: "entropy",
            reason: "zero spectrum has no support".to_string(),
        });
    }
    let value = match kind {
        EntropyKind::Moment => {
            if alpha == 0.0 {
                support.len() as f64
            } else {
                ln_f_alpha(&support, alpha).1
            }
        }
        EntropyKind::Renyi => {
            if (alpha - 1.0).abs() < 1e-12 {
                von_neumann_of(&support)
            } else {
                ln_f_alpha(&support, alpha).0 / (1.0 - alpha)
            }
        }
        EntropyKind::Tsallis => {
            if (alpha - 1.0).abs() < 1e-12 {
                von_neumann_of(&support)
            } else {
                let f = if alpha == 0.0 {
                    support.len() as f64
                } else {
                    ln_f_alpha(&support, alpha).1
                };
                (f - 1.0) / (1.0 - alpha)
            }
        }
        EntropyKind::Arimoto => {
            if alpha == 0.0 {
                return Err(SepmapError::InvalidParameter {
                    name: "alpha",
                    reason: "Arimoto entropy requires alpha > 0".to_string(),
                });
            }
            if (alpha - 1.0).abs() < 1e-12 {
                von_neumann_of(&support)
            } else {
                let (ln_f, _) = ln_f_alpha(&support, 1.0 / alpha);
                ((alpha * ln_f).exp() - 1.0) / (alpha - 1.0)
            }
        }
        EntropyKind::VonNeumann => von_neumann_of(&support),
    };
    Ok(value)
}

/// Entropy of a Hermitian matrix (PSD within tolerance) via its spectrum.
pub fn entropy_of_matrix(m: &HermitianMatrix, kind: EntropyKind, alpha: f64) -> Result<f64> {
    entropy_of_spectrum(&SortedSpectrum::from_matrix(m), kind, alpha)
}
