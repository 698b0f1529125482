//! Separability criteria: every test returns a [`CriterionVerdict`] with a
//! signed margin (negative = violated, i.e. entanglement detected).
//!
//! Side conventions: for operations taking a [`DecomposedMap`], `side` names
//! the subsystem the map acts on (`Subsystem::B` matches the `[I tensor
//! Lambda]` of the inequalities; the kept marginal is the other subsystem).
//! For marginal-only operations (`check_nielsen_kempe`, `conditional_entropy`,
//! `local_filter`) `side` names the marginal directly.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SepmapError};
use crate::majorization::{
    entropy_of_matrix, weak_majorization_margin, EntropyKind, SortedSpectrum,
};
use crate::maps::{
    adjoint_decomposition, apply_extended, apply_kraus_extended, DecomposedMap,
};
use crate::matrix::{
    eig_hermitian, matrix_power, operator_norm, support_projector, tensor, HermitianMatrix,
    Subsystem, PSD_TOL, RANK_CUTOFF,
};
use crate::states::BipartiteState;

/// Default absolute tolerance on verdict margins (margins are O(1) for
/// unit-trace states); configurable per call.
pub const VERDICT_TOL: f64 = 1e-9;

/// Default threshold above which `<psi|Theta2|psi>` counts as nonzero in
/// `compute_qmax`.
pub const QMAX_OVERLAP_TOL: f64 = 1e-10;

/// Eigenvalues within this (relative) band of the minimal one belong to the
/// witness projector `P_minus`.
pub const WITNESS_DEGENERACY_TOL: f64 = 1e-9;

/// Maximal-mixedness precondition tolerance (max-entry deviation from 1/d).
pub const MAX_MIXED_TOL: f64 = 1e-8;

/// Outcome of one separability test.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionVerdict {
    pub criterion_id: String,
    pub side: Subsystem,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub margin: f64,
    pub passed: bool,
    /// The parameter regime where the inequality is not backed by the
    /// Schur-monotonicity chain (for example Renyi order < 1).
    pub weak_regime: bool,
    /// The verdict was produced by the operator inequality because the
    /// requested fractional powers were undefined (indefinite Theta).
    pub deferred_to_map: bool,
    /// The criterion could not decide (for example no eigenvector cleared
    /// the q_max overlap threshold); `passed` is true and must not be
    /// counted as a detection.
    pub inconclusive: bool,
    pub note: Option<String>,
}

impl CriterionVerdict {
    fn from_margin(
        criterion_id: impl Into<String>,
        side: Subsystem,
        margin: f64,
        tol: f64,
    ) -> Result<Self> {
        if !margin.is_finite() {
            return Err(SepmapError::Domain {
                op: "criterion margin",
                reason: format!("margin is not finite ({margin})"),
            });
        }
        Ok(Self {
            criterion_id: criterion_id.into(),
            side,
            alpha: None,
            beta: None,
            margin,
            passed: margin >= -tol,
            weak_regime: false,
            deferred_to_map: false,
            inconclusive: false,
            note: None,
        })
    }

    fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    fn with_weak_regime(mut self, weak: bool) -> Self {
        self.weak_regime = weak;
        self
    }

    /// CSV row in the fixed schema
    /// `criterion_id, side, alpha, beta, margin, passed`.
    pub fn csv_fields(&self) -> [String; 6] {
        let fmt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        [
            self.criterion_id.clone(),
            self.side.to_string(),
            fmt(self.alpha),
            fmt(self.beta),
            format!("{:.12e}", self.margin),
            self.passed.to_string(),
        ]
    }
}

/// Tailor-made witness report: `W = [I tensor Lambda^dagger](P_minus)` built
/// from the projector onto the minimal eigenspace of `[I tensor Lambda](rho)`.
#[derive(Debug, Clone)]
pub struct WitnessReport {
    pub witness: HermitianMatrix,
    /// `Tr(W rho)`; equals `multiplicity * lambda_minus` by the adjoint
    /// identity.
    pub mean_value: f64,
    pub lambda_minus: f64,
    /// Dimension of the minimal eigenspace within the degeneracy tolerance.
    pub multiplicity: usize,
    /// False when `[I tensor Lambda](rho)` has no negative eigenvalue, in
    /// which case the witness does not detect this state.
    pub detected: bool,
    /// `(beta, Tr{[I tensor Lambda](rho) . Theta2^beta})`.
    pub approximation_series: Vec<(f64, f64)>,
    /// The same series divided by `lambda_max(Theta2)^beta`, which makes the
    /// large-beta limit `multiplicity * lambda_minus` readable.
    pub normalized_series: Vec<(f64, f64)>,
    pub side: Subsystem,
}

/// Theorem 2 inequality selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem2Variant {
    /// `Tr{Theta1^alpha Theta2^beta} >= Tr Theta2^{alpha+beta}`, alpha, beta >= 0.
    I,
    /// `Tr Theta2^{beta-alpha} >= Tr{Theta1^{-alpha} Theta2^beta}`,
    /// alpha in (0, 1], beta >= 0, pseudo-powers on supports.
    Ii,
}

impl std::fmt::Display for Theorem2Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Theorem2Variant::I => write!(f, "i"),
            Theorem2Variant::Ii => write!(f, "ii"),
        }
    }
}

/// Channel-entropy inequality selector (trace-form maps only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelEntropyVariant {
    /// `S_a^R(sigma) - S_a^R(rho_keep) >= ln(eta/xi) - ln(d xi/eta)/(a-1)`.
    RenyiAlpha,
    /// `S_a^R(sigma) - S_a^R(rho_keep) >= ln(eta/xi)` (every order a >= 0).
    AlphaFree,
    /// `S(sigma) - S(rho_keep) >= ln(eta/xi)`.
    VonNeumann,
    /// `||rho_keep|| >= (eta/xi) ||sigma||`.
    Norm,
}

/// `Tr M^alpha` over the support (rank when `alpha = 0`); an eigenvalue
/// below `-PSD_TOL * max(1, |lambda|_max)` is a Domain error, signalling
/// that the operator inequality behind the trace powers is already broken.
fn trace_power(m: &HermitianMatrix, alpha: f64) -> Result<f64> {
    debug_assert!(alpha >= 0.0);
    let vals_owned = eig_hermitian(m);
    let vals = vals_owned.eigenvalues();
    let amax = vals.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    if alpha == 0.0 {
        let cutoff = RANK_CUTOFF * amax;
        return Ok(vals.iter().filter(|&&v| v > cutoff).count() as f64);
    }
    let neg_tol = PSD_TOL * amax.max(1.0);
    if let Some(&bad) = vals.iter().find(|&&v| v < -neg_tol) {
        return Err(SepmapError::Domain {
            op: "trace_power",
            reason: format!("negative eigenvalue {bad:.3e} beyond tolerance {neg_tol:.3e}"),
        });
    }
    let cutoff = RANK_CUTOFF * amax;
    Ok(vals
        .iter()
        .filter(|&&v| v > cutoff)
        .map(|&v| v.powf(alpha))
        .sum())
}

/// `Tr(A B)` for Hermitian factors (real by symmetry).
fn trace_product(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    (a.as_matrix() * b.as_matrix()).trace().re
}

fn map_margin(t1: &HermitianMatrix, t2: &HermitianMatrix) -> f64 {
    eig_hermitian(&(t1 - t2)).eigenvalue_min()
}

/// Operator inequality: `[I tensor Lambda](rho) >= 0` for separable
/// states; margin is the minimal eigenvalue of `Theta1 - Theta2`.
pub fn check_positive_map(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    tol: f64,
) -> Result<CriterionVerdict> {
    let (t1, t2) = apply_extended(dec, rho, side)?;
    CriterionVerdict::from_margin("positive_map", side, map_margin(&t1, &t2), tol)
}

/// PPT criterion: margin is the minimal eigenvalue of the partial transpose
/// (spectrum is side-independent; the B-side transpose is used).
pub fn check_ppt(rho: &BipartiteState, tol: f64) -> Result<CriterionVerdict> {
    let gamma = rho.partial_transpose(Subsystem::B);
    let margin = eig_hermitian(&gamma).eigenvalue_min();
    CriterionVerdict::from_margin("ppt", Subsystem::B, margin, tol)
}

/// Nielsen–Kempe majorization: the zero-padded marginal spectrum
/// `lambda(rho_side)` must majorize `lambda(rho)`; margin is the worst
/// partial-sum slack.
pub fn check_nielsen_kempe(
    rho: &BipartiteState,
    side: Subsystem,
    tol: f64,
) -> Result<CriterionVerdict> {
    let marginal = rho.partial_trace(side);
    let x = SortedSpectrum::with_padding(
        eig_hermitian(&marginal).eigenvalues().to_vec(),
        rho.dim(),
    )?;
    let y = SortedSpectrum::from_matrix(rho.matrix());
    let margin = weak_majorization_margin(&x, &y)?;
    CriterionVerdict::from_margin("nielsen_kempe", side, margin, tol)
}

/// Weak-majorization relation: `lambda(Theta1) w>- lambda(Theta2)`.
pub fn check_weak_majorization(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    tol: f64,
) -> Result<CriterionVerdict> {
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let x = SortedSpectrum::from_matrix(&t1);
    let y = SortedSpectrum::from_matrix(&t2);
    let margin = weak_majorization_margin(&x, &y)?;
    CriterionVerdict::from_margin("weak_majorization", side, margin, tol)
}

/// Builds the deferred verdict used when fractional powers are undefined:
/// the operator-inequality margin under the requesting criterion's id.
fn deferred_verdict(
    id: &str,
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    tol: f64,
    cause: &SepmapError,
) -> Result<CriterionVerdict> {
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let mut v = CriterionVerdict::from_margin(id, side, map_margin(&t1, &t2), tol)?;
    v.deferred_to_map = true;
    v.note = Some(format!(
        "powers undefined ({cause}); verdict taken from the operator inequality"
    ));
    Ok(v)
}

/// Moment inequality: `Tr Theta1^alpha >= Tr Theta2^alpha`, alpha >= 0.
/// Orders alpha < 1 keep the same direction but are flagged weak-regime
/// (f_alpha is Schur-concave there).
pub fn check_moment_inequality(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    alpha: f64,
    tol: f64,
) -> Result<CriterionVerdict> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(SepmapError::InvalidParameter {
            name: "alpha",
            reason: format!("moment order must be >= 0, got {alpha}"),
        });
    }
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let powers = trace_power(&t1, alpha).and_then(|a| Ok((a, trace_power(&t2, alpha)?)));
    match powers {
        Ok((a, b)) => Ok(CriterionVerdict::from_margin("moment", side, a - b, tol)?
            .with_alpha(alpha)
            .with_weak_regime(alpha < 1.0)),
        Err(e @ SepmapError::Domain { .. }) => {
            Ok(deferred_verdict("moment", rho, dec, side, tol, &e)?.with_alpha(alpha))
        }
        Err(e) => Err(e),
    }
}

/// Entropic inequality: `S_alpha(Theta1) <= S_alpha(Theta2)` for Renyi or
/// Tsallis entropies; margin = `S_alpha(Theta2) - S_alpha(Theta1)`. Valid
/// for alpha >= 1 (Schur-concave decreasing); alpha < 1 reverses direction
/// and alpha = 1 needs matching traces, both flagged weak-regime.
pub fn check_renyi_inequality(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    alpha: f64,
    kind: EntropyKind,
    tol: f64,
) -> Result<CriterionVerdict> {
    if !matches!(kind, EntropyKind::Renyi | EntropyKind::Tsallis) {
        return Err(SepmapError::InvalidParameter {
            name: "kind",
            reason: format!("entropic comparison supports renyi or tsallis, got {kind}"),
        });
    }
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let id = kind.to_string();
    let entropies =
        entropy_of_matrix(&t1, kind, alpha).and_then(|a| Ok((a, entropy_of_matrix(&t2, kind, alpha)?)));
    match entropies {
        Ok((s1, s2)) => {
            let traces_match =
                (t1.trace() - t2.trace()).abs() <= 1e-9 * t1.trace().abs().max(1.0);
            let weak = alpha < 1.0 || ((alpha - 1.0).abs() < 1e-12 && !traces_match);
            Ok(CriterionVerdict::from_margin(id, side, s2 - s1, tol)?
                .with_alpha(alpha)
                .with_weak_regime(weak))
        }
        Err(e @ SepmapError::Domain { .. }) => {
            Ok(deferred_verdict(&id, rho, dec, side, tol, &e)?.with_alpha(alpha))
        }
        Err(e) => Err(e),
    }
}

/// Norm inequality: `||Theta1|| >= ||Theta2||`.
pub fn check_norm_inequality(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    tol: f64,
) -> Result<CriterionVerdict> {
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let margin = operator_norm(&t1) - operator_norm(&t2);
    CriterionVerdict::from_margin("norm", side, margin, tol)
}

/// Theorem 2 trace inequalities. Variant (i):
/// `Tr{Theta1^alpha Theta2^beta} - Tr Theta2^{alpha+beta}` with
/// alpha, beta >= 0. Variant (ii):
/// `Tr Theta2^{beta-alpha} - Tr{P2 Theta1^{-alpha} P2 . Theta2^beta}` with
/// alpha in (0, 1], beta >= 0; negative and zero powers are pseudo-powers
/// restricted to the support (`Theta2^0 := P2`).
pub fn check_theorem2(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    alpha: f64,
    beta: f64,
    variant: Theorem2Variant,
    tol: f64,
) -> Result<CriterionVerdict> {
    match variant {
        Theorem2Variant::I => {
            if alpha.is_nan() || beta.is_nan() || alpha < 0.0 || beta < 0.0 {
                return Err(SepmapError::InvalidParameter {
                    name: "alpha/beta",
                    reason: format!(
                        "variant (i) needs alpha, beta >= 0, got ({alpha}, {beta})"
                    ),
                });
            }
        }
        Theorem2Variant::Ii => {
            if alpha.is_nan() || beta.is_nan() || alpha <= 0.0 || alpha > 1.0 || beta < 0.0 {
                return Err(SepmapError::InvalidParameter {
                    name: "alpha/beta",
                    reason: format!(
                        "variant (ii) needs alpha in (0, 1] and beta >= 0, got ({alpha}, {beta})"
                    ),
                });
            }
        }
    }
    let id = format!("theorem2_{variant}");
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let margin = (|| -> Result<f64> {
        match variant {
            Theorem2Variant::I => {
                let a = matrix_power(&t1, alpha, false)?;
                let b = matrix_power(&t2, beta, false)?;
                Ok(trace_product(&a, &b) - trace_power(&t2, alpha + beta)?)
            }
            Theorem2Variant::Ii => {
                let p2 = support_projector(&t2, RANK_CUTOFF);
                let inv = matrix_power(&t1, -alpha, true)?;
                let sandwich = HermitianMatrix::hermitize(
                    p2.as_matrix() * inv.as_matrix() * p2.as_matrix(),
                )?;
                let b = matrix_power(&t2, beta, false)?;
                let lhs = matrix_power(&t2, beta - alpha, true)?.trace();
                Ok(lhs - trace_product(&sandwich, &b))
            }
        }
    })();
    match margin {
        Ok(m) => Ok(CriterionVerdict::from_margin(id, side, m, tol)?
            .with_alpha(alpha)
            .with_beta(beta)),
        Err(e @ SepmapError::Domain { .. }) => Ok(deferred_verdict(&id, rho, dec, side, tol, &e)?
            .with_alpha(alpha)
            .with_beta(beta)),
        Err(e) => Err(e),
    }
}

/// Theorem 2(iii): `q_max` is the largest eigenvalue of `Theta1` over
/// eigenvectors with `<psi|Theta2|psi> > overlap_tol`; the verdict margin is
/// `q_max - ||Theta2||`. When no eigenvector clears the threshold the
/// verdict is flagged inconclusive; when `q_max` changes across a 10x
/// threshold sweep the verdict carries a sensitivity note.
pub fn compute_qmax(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    overlap_tol: f64,
    tol: f64,
) -> Result<(Option<f64>, CriterionVerdict)> {
    if overlap_tol.is_nan() || overlap_tol <= 0.0 {
        return Err(SepmapError::InvalidParameter {
            name: "overlap_tol",
            reason: format!("overlap threshold must be positive, got {overlap_tol}"),
        });
    }
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let spec1 = eig_hermitian(&t1);
    let overlaps: Vec<f64> = (0..spec1.len())
        .map(|k| {
            let v = spec1.eigenvectors().column(k);
            (v.adjoint() * t2.as_matrix() * v)[(0, 0)].re
        })
        .collect();
    let qmax_at = |thr: f64| -> Option<f64> {
        spec1
            .eigenvalues()
            .iter()
            .zip(&overlaps)
            .filter(|(_, &o)| o > thr)
            .map(|(&lam, _)| lam)
            .fold(None, |best: Option<f64>, lam| {
                Some(best.map_or(lam, |b| b.max(lam)))
            })
    };
    let qmax = qmax_at(overlap_tol);
    let sweep = [qmax_at(overlap_tol / 10.0), qmax_at(overlap_tol * 10.0)];
    let sensitive = sweep.iter().any(|&q| match (q, qmax) {
        (Some(a), Some(b)) => (a - b).abs() > 1e-9 * spec1.norm_scale(),
        (None, None) => false,
        _ => true,
    });
    let norm2 = operator_norm(&t2);
    let verdict = match qmax {
        Some(q) => {
            let mut v = CriterionVerdict::from_margin("qmax", side, q - norm2, tol)?;
            if sensitive {
                v.note = Some("q_max changes within a 10x overlap-threshold sweep".to_string());
            }
            v
        }
        None => {
            let mut v = CriterionVerdict::from_margin("qmax", side, 0.0, tol)?;
            v.inconclusive = true;
            v.note = Some("no eigenvector clears the overlap threshold".to_string());
            v
        }
    };
    Ok((qmax, verdict))
}

/// Channel-entropy criteria for trace-form maps `Lambda = xi Tr(.) 1 -
/// eta Phi` with `Phi = Lambda2/eta` a channel; `sigma = [I tensor Phi](rho)`
/// and the marginal is taken on the kept side. The `renyi_alpha` variant is
/// valid for alpha > 1 and flagged weak-regime below.
pub fn check_channel_entropy(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    alpha: f64,
    variant: ChannelEntropyVariant,
    tol: f64,
) -> Result<CriterionVerdict> {
    let tf = dec.trace_form().ok_or_else(|| {
        SepmapError::Precondition(
            "map carries no trace-form metadata (xi, eta); build one with canonical_decomposition"
                .to_string(),
        )
    })?;
    if tf.eta <= 0.0 || tf.xi <= 0.0 {
        return Err(SepmapError::Domain {
            op: "check_channel_entropy",
            reason: format!("trace form (xi={}, eta={}) is not a channel form", tf.xi, tf.eta),
        });
    }
    let phi = dec.lambda2().scale_map(1.0 / tf.eta)?;
    let sigma = apply_kraus_extended(&phi, rho.matrix(), rho.d_a(), rho.d_b(), side)?;
    let rho_keep = rho.partial_trace(side.other());
    let ln_ratio = (tf.eta / tf.xi).ln();
    let d = dec.dim() as f64;
    let (id, margin, weak, alpha_out) = match variant {
        ChannelEntropyVariant::RenyiAlpha => {
            if (alpha - 1.0).abs() < 1e-12 {
                return Err(SepmapError::InvalidParameter {
                    name: "alpha",
                    reason: "renyi_alpha variant needs alpha != 1 (use von_neumann)".to_string(),
                });
            }
            let lhs = entropy_of_matrix(&sigma, EntropyKind::Renyi, alpha)?
                - entropy_of_matrix(&rho_keep, EntropyKind::Renyi, alpha)?;
            let rhs = ln_ratio - (d * tf.xi / tf.eta).ln() / (alpha - 1.0);
            ("channel_renyi_alpha", lhs - rhs, alpha < 1.0, Some(alpha))
        }
        ChannelEntropyVariant::AlphaFree => {
            let lhs = entropy_of_matrix(&sigma, EntropyKind::Renyi, alpha)?
                - entropy_of_matrix(&rho_keep, EntropyKind::Renyi, alpha)?;
            ("channel_alpha_free", lhs - ln_ratio, false, Some(alpha))
        }
        ChannelEntropyVariant::VonNeumann => {
            let lhs = entropy_of_matrix(&sigma, EntropyKind::VonNeumann, 1.0)?
                - entropy_of_matrix(&rho_keep, EntropyKind::VonNeumann, 1.0)?;
            ("channel_von_neumann", lhs - ln_ratio, false, None)
        }
        ChannelEntropyVariant::Norm => {
            let margin =
                operator_norm(&rho_keep) - (tf.eta / tf.xi) * operator_norm(&sigma);
            ("channel_norm", margin, false, None)
        }
    };
    let mut v = CriterionVerdict::from_margin(id, side, margin, tol)?.with_weak_regime(weak);
    v.alpha = alpha_out;
    Ok(v)
}

/// Conditional von Neumann entropy `S(rho) - S(rho_side)` in nats; negative
/// values certify entanglement (state-merging cost interpretation).
pub fn conditional_entropy(rho: &BipartiteState, side: Subsystem) -> Result<f64> {
    let joint = entropy_of_matrix(rho.matrix(), EntropyKind::VonNeumann, 1.0)?;
    let marginal = entropy_of_matrix(&rho.partial_trace(side), EntropyKind::VonNeumann, 1.0)?;
    Ok(joint - marginal)
}

/// Local filtering `(rho_side^{-1/2} tensor 1) rho (rho_side^{-1/2} tensor 1)`
/// renormalized; the filtered subsystem becomes maximally mixed. Requires a
/// full-rank marginal and preserves separability.
pub fn local_filter(rho: &BipartiteState, side: Subsystem) -> Result<BipartiteState> {
    let marginal = rho.partial_trace(side);
    let inv_sqrt = matrix_power(&marginal, -0.5, false).map_err(|e| SepmapError::Domain {
        op: "local_filter",
        reason: format!("subsystem {side} marginal is not full rank: {e}"),
    })?;
    let filter = match side {
        Subsystem::A => tensor(&inv_sqrt, &HermitianMatrix::identity(rho.d_b())),
        Subsystem::B => tensor(&HermitianMatrix::identity(rho.d_a()), &inv_sqrt),
    };
    let raw = filter.as_matrix() * rho.matrix().as_matrix() * filter.as_matrix();
    let trace = raw.trace().re;
    if trace.is_nan() || trace <= 0.0 {
        return Err(SepmapError::Domain {
            op: "local_filter",
            reason: format!("filtered state has non-positive trace {trace}"),
        });
    }
    let filtered = HermitianMatrix::hermitize(raw / Complex64::new(trace, 0.0))?;
    let state = BipartiteState::new(filtered, rho.d_a(), rho.d_b())?;
    let d = state.dim_of(side) as f64;
    let dev = (state.partial_trace(side).as_matrix()
        - crate::matrix::CMatrix::identity(state.dim_of(side), state.dim_of(side))
            / Complex64::new(d, 0.0))
    .iter()
    .fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if dev > 1e-10 {
        return Err(SepmapError::Domain {
            op: "local_filter",
            reason: format!("filtered marginal deviates from 1/d by {dev:.3e}"),
        });
    }
    Ok(state)
}

/// The tailor-made witness
/// `W = [I tensor Lambda^dagger](P_minus)` with `P_minus` the full projector
/// onto the minimal eigenspace of `[I tensor Lambda](rho)`, plus the
/// approximation series `Tr{[I tensor Lambda](rho) . Theta2^beta}`.
pub fn tailor_made_witness(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    betas: &[f64],
    tol: f64,
) -> Result<WitnessReport> {
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let theta = &t1 - &t2;
    let spec = eig_hermitian(&theta);
    let lambda_minus = spec.eigenvalue_min();
    let band = WITNESS_DEGENERACY_TOL * spec.norm_scale();
    let multiplicity = spec
        .eigenvalues()
        .iter()
        .filter(|&&x| x <= lambda_minus + band)
        .count();
    let p_minus = spec.assemble(|x| if x <= lambda_minus + band { 1.0 } else { 0.0 });
    let adj = adjoint_decomposition(dec);
    let w1 = apply_kraus_extended(adj.lambda1(), &p_minus, rho.d_a(), rho.d_b(), side)?;
    let w2 = apply_kraus_extended(adj.lambda2(), &p_minus, rho.d_a(), rho.d_b(), side)?;
    let witness = &w1 - &w2;
    let mean_value = trace_product(&witness, rho.matrix());
    let norm2 = operator_norm(&t2);
    let mut approximation_series = Vec::with_capacity(betas.len());
    let mut normalized_series = Vec::with_capacity(betas.len());
    for &beta in betas {
        if beta.is_nan() || beta < 0.0 {
            return Err(SepmapError::InvalidParameter {
                name: "betas",
                reason: format!("series powers must be >= 0, got {beta}"),
            });
        }
        let pow = matrix_power(&t2, beta, false)?;
        let raw = trace_product(&theta, &pow);
        approximation_series.push((beta, raw));
        if norm2 > 0.0 {
            normalized_series.push((beta, raw / norm2.powf(beta)));
        }
    }
    Ok(WitnessReport {
        witness,
        mean_value,
        lambda_minus,
        multiplicity,
        detected: lambda_minus < -tol,
        approximation_series,
        normalized_series,
        side,
    })
}

fn require_trace_form(dec: &DecomposedMap) -> Result<&crate::maps::TraceForm> {
    dec.trace_form().ok_or_else(|| {
        SepmapError::Precondition(
            "map carries no trace-form metadata (xi, eta); build one with canonical_decomposition"
                .to_string(),
        )
    })
}

fn require_max_mixed(rho: &BipartiteState, keep: Subsystem) -> Result<usize> {
    let d = rho.dim_of(keep);
    let marginal = rho.partial_trace(keep);
    let dev = (marginal.as_matrix()
        - crate::matrix::CMatrix::identity(d, d) / Complex64::new(d as f64, 0.0))
    .iter()
    .fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if dev > MAX_MIXED_TOL {
        return Err(SepmapError::Precondition(format!(
            "subsystem {keep} is not maximally mixed (deviation {dev:.3e}); apply local_filter \
             first"
        )));
    }
    Ok(d)
}

/// Equivalence chain for states with a maximally mixed kept subsystem: the
/// positive-map verdict, the weak-majorization verdict against the flat
/// spectrum `(xi/d_keep, ...)`, and the norm bound `xi/d_keep >= ||Theta2||`
/// are all equivalent; the three verdicts are returned for comparison.
pub fn check_maximally_mixed_equivalence(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    tol: f64,
) -> Result<(CriterionVerdict, CriterionVerdict, CriterionVerdict)> {
    let tf = require_trace_form(dec)?;
    let d_keep = require_max_mixed(rho, side.other())?;
    let flat_value = tf.xi / d_keep as f64;
    let (t1, t2) = apply_extended(dec, rho, side)?;
    let v_map = CriterionVerdict::from_margin("mm_map", side, map_margin(&t1, &t2), tol)?;
    let flat = SortedSpectrum::new(vec![flat_value; rho.dim()]);
    let spec2 = SortedSpectrum::from_matrix(&t2);
    let v_submaj = CriterionVerdict::from_margin(
        "mm_weak_majorization",
        side,
        weak_majorization_margin(&flat, &spec2)?,
        tol,
    )?;
    let v_norm = CriterionVerdict::from_margin(
        "mm_norm",
        side,
        flat_value - operator_norm(&t2),
        tol,
    )?;
    Ok((v_map, v_submaj, v_norm))
}

/// The alpha = 1 and beta = 1 special cases for maximally mixed kept
/// subsystems:
/// `(xi/d) Tr Theta2^{beta-1} >= Tr Theta2^beta` over beta = 2..n (worst
/// margin, beta recorded), and `(xi/d)^{n-1} Tr Theta2 >= Tr Theta2^n`.
pub fn check_aeq1_beq1(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    n: u32,
    tol: f64,
) -> Result<(CriterionVerdict, CriterionVerdict)> {
    if n < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "n",
            reason: format!("power range needs n >= 2, got {n}"),
        });
    }
    let tf = require_trace_form(dec)?;
    let d_keep = require_max_mixed(rho, side.other())?;
    let ratio = tf.xi / d_keep as f64;
    let (_, t2) = apply_extended(dec, rho, side)?;
    let tp = |k: u32| trace_power(&t2, k as f64);
    let mut worst = f64::INFINITY;
    let mut worst_beta = 2;
    for beta in 2..=n {
        let margin = ratio * tp(beta - 1)? - tp(beta)?;
        if margin < worst {
            worst = margin;
            worst_beta = beta;
        }
    }
    let v_a = CriterionVerdict::from_margin("aeq1", side, worst, tol)?
        .with_alpha(1.0)
        .with_beta(worst_beta as f64);
    let v_b = CriterionVerdict::from_margin(
        "beq1",
        side,
        ratio.powi(n as i32 - 1) * tp(1)? - tp(n)?,
        tol,
    )?
    .with_alpha((n - 1) as f64)
    .with_beta(1.0);
    Ok((v_a, v_b))
}

/// §5 channel majorization `lambda(rho_keep) >- lambda([I tensor Phi](rho))`
/// with `Phi = Lambda2/eta`; requires `eta >= xi` (flagged unsupported
/// otherwise, since the Nielsen–Kempe reduction needs it).
pub fn check_channel_majorization(
    rho: &BipartiteState,
    dec: &DecomposedMap,
    side: Subsystem,
    tol: f64,
) -> Result<CriterionVerdict> {
    let tf = require_trace_form(dec)?;
    if tf.eta < tf.xi {
        let mut v = CriterionVerdict::from_margin("channel_majorization", side, 0.0, tol)?;
        v.inconclusive = true;
        v.note = Some(format!(
            "unsupported: eta ({}) < xi ({}) for this map",
            tf.eta, tf.xi
        ));
        return Ok(v);
    }
    let phi = dec.lambda2().scale_map(1.0 / tf.eta)?;
    let sigma = apply_kraus_extended(&phi, rho.matrix(), rho.d_a(), rho.d_b(), side)?;
    let rho_keep = rho.partial_trace(side.other());
    let x = SortedSpectrum::with_padding(
        eig_hermitian(&rho_keep).eigenvalues().to_vec(),
        rho.dim(),
    )?;
    let y = SortedSpectrum::from_matrix(&sigma);
    let margin = weak_majorization_margin(&x, &y)?;
    CriterionVerdict::from_margin("channel_majorization", side, margin, tol)
}
