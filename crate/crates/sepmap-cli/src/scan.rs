//! Parameter-grid scans: enumerate a state family over a deterministic grid,
//! evaluate a list of criteria at every feasible point, and reduce to
//! detection fractions (plain and relative to a reference criterion).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use sepmap::criteria::{
    self, ChannelEntropyVariant, CriterionVerdict, Theorem2Variant,
};
use sepmap::error::{Result, SepmapError};
use sepmap::majorization::EntropyKind;
use sepmap::maps::{
    antisymmetric_units, breuer_hall, canonical_decomposition, choi_matrix, epsilon_map,
    generalized_choi, minimal_transposition_decomposition, reduction, reduction_preset,
    shift_kraus, transposition, werner_holevo, DecomposedMap,
};
use sepmap::matrix::Subsystem;
use sepmap::states::{isotropic_state, rot_invariant_state, two_qubit_family, BipartiteState};

/// One point of a family grid: the swept parameter values plus the state,
/// or `None` when the point is infeasible (outside the simplex).
type GridPoint = (Vec<(&'static str, f64)>, Option<BipartiteState>);

/// State family with its sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyGrid {
    /// Isotropic `d (x) d` family, `p` swept over `[start, stop)` by `step`.
    Isotropic { d: usize, start: f64, stop: f64, step: f64 },
    /// Rotationally invariant family at fixed `p`; `(q, r)` swept over an
    /// `n x n` grid on `[0, 1]^2` with feasibility `q + r <= 1 - p`.
    RotTriangle { p: f64, n: usize },
    /// Two-qubit family on the interior `n x n` grid `a, q = i/(n+1)`.
    TwoQubit { n: usize },
    /// Sigma example `rot(p, 1-p, 0, 0)`, `p` swept over `[start, stop)`.
    SigmaLine { start: f64, stop: f64, step: f64 },
}

impl FamilyGrid {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            FamilyGrid::Isotropic { d, .. } => (*d, *d),
            FamilyGrid::RotTriangle { .. } | FamilyGrid::SigmaLine { .. } => (4, 4),
            FamilyGrid::TwoQubit { .. } => (2, 2),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FamilyGrid::Isotropic { d, start, stop, step } => {
                format!("isotropic d={d} p in [{start}, {stop}) step {step}")
            }
            FamilyGrid::RotTriangle { p, n } => {
                format!("rot-invariant p={p} (q, r) triangle {n}x{n}")
            }
            FamilyGrid::TwoQubit { n } => format!("two-qubit (a, q) interior {n}x{n}"),
            FamilyGrid::SigmaLine { start, stop, step } => {
                format!("sigma p in [{start}, {stop}) step {step}")
            }
        }
    }

    fn sweep_values(start: f64, stop: f64, step: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let v = start + k as f64 * step;
            if v >= stop - 1e-12 {
                break;
            }
            out.push(v);
            k += 1;
        }
        out
    }

    /// Deterministic enumeration of the grid; infeasible points carry no
    /// state. Construction errors at feasible points abort the scan.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        match *self {
            FamilyGrid::Isotropic { d, start, stop, step } => {
                Self::sweep_values(start, stop, step)
                    .into_iter()
                    .map(|p| Ok((vec![("p", p)], Some(isotropic_state(d, p)?))))
                    .collect()
            }
            FamilyGrid::RotTriangle { p, n } => {
                if n < 2 {
                    return Err(SepmapError::InvalidParameter {
                        name: "grid",
                        reason: format!("triangle grid needs n >= 2, got {n}"),
                    });
                }
                let value = |i: usize| i as f64 / (n - 1) as f64;
                let mut out = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let (q, r) = (value(i), value(j));
                        let s = 1.0 - p - q - r;
                        let params = vec![("q", q), ("r", r)];
                        if s < -1e-12 {
                            out.push((params, None));
                        } else {
                            out.push((params, Some(rot_invariant_state(p, q, r, s.max(0.0))?)));
                        }
                    }
                }
                Ok(out)
            }
            FamilyGrid::TwoQubit { n } => {
                let value = |i: usize| i as f64 / (n + 1) as f64;
                let mut out = Vec::with_capacity(n * n);
                for i in 1..=n {
                    for j in 1..=n {
                        let (a, q) = (value(i), value(j));
                        out.push((vec![("a", a), ("q", q)], Some(two_qubit_family(a, q)?)));
                    }
                }
                Ok(out)
            }
            FamilyGrid::SigmaLine { start, stop, step } => {
                Self::sweep_values(start, stop, step)
                    .into_iter()
                    .map(|p| {
                        Ok((vec![("p", p)], Some(rot_invariant_state(p, 1.0 - p, 0.0, 0.0)?)))
                    })
                    .collect()
            }
        }
    }
}

/// Builtin positive map selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Transposition,
    BreuerHall,
    Reduction,
    GeneralizedChoi { k: usize },
    WernerHolevo,
    Epsilon,
}

impl MapKind {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let kind = match name {
            "transposition" | "t" => MapKind::Transposition,
            "breuer-hall" | "breuer_hall" | "bh" => MapKind::BreuerHall,
            "reduction" | "red" => MapKind::Reduction,
            "choi" | "generalized-choi" | "generalized_choi" => {
                let k = arg
                    .ok_or_else(|| SepmapError::InvalidParameter {
                        name: "map",
                        reason: "generalized Choi needs a k parameter, e.g. choi:1".to_string(),
                    })?
                    .parse::<usize>()
                    .map_err(|e| SepmapError::InvalidParameter {
                        name: "map",
                        reason: format!("bad k: {e}"),
                    })?;
                return Ok(MapKind::GeneralizedChoi { k });
            }
            "werner-holevo" | "werner_holevo" | "wh" => MapKind::WernerHolevo,
            "epsilon" => MapKind::Epsilon,
            other => {
                return Err(SepmapError::InvalidParameter {
                    name: "map",
                    reason: format!("unknown map '{other}'"),
                })
            }
        };
        Ok(kind)
    }

    fn builtin(self, d: usize) -> Result<DecomposedMap> {
        match self {
            MapKind::Transposition => transposition(d, None),
            MapKind::BreuerHall => breuer_hall(d, None),
            MapKind::Reduction => reduction(d),
            MapKind::GeneralizedChoi { k } => generalized_choi(d, k),
            MapKind::WernerHolevo => werner_holevo(d),
            MapKind::Epsilon => epsilon_map(d),
        }
    }
}

/// Decomposition selector applied to a [`MapKind`] at dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecKind {
    /// The builtin pair shipped with the map.
    Builtin,
    /// Canonical pair rebuilt from the Choi matrix.
    Canonical,
    /// Minimal Kraus-length pair (transposition; reduction at d = 2).
    Minimal,
    /// Minimal transposition pair with `steps` shift operators appended.
    Shifted { steps: usize },
    /// Named reduction-map decompositions (1), (2), (3).
    ReductionPreset { preset: u8 },
}

impl DecKind {
    pub fn parse(s: &str) -> Result<Self> {
        let kind = match s {
            "builtin" => DecKind::Builtin,
            "canonical" => DecKind::Canonical,
            "minimal" => DecKind::Minimal,
            "preset1" | "dec1" | "(1)" => DecKind::ReductionPreset { preset: 1 },
            "preset2" | "dec2" | "(2)" => DecKind::ReductionPreset { preset: 2 },
            "preset3" | "dec3" | "(3)" => DecKind::ReductionPreset { preset: 3 },
            other => match other.strip_prefix("shift") {
                Some(k) => DecKind::Shifted {
                    steps: k.parse::<usize>().map_err(|e| SepmapError::InvalidParameter {
                        name: "dec",
                        reason: format!("bad shift count in '{other}': {e}"),
                    })?,
                },
                None => {
                    return Err(SepmapError::InvalidParameter {
                        name: "dec",
                        reason: format!(
                            "unknown decomposition '{other}' (builtin, canonical, minimal, \
                             shiftK, preset1..3)"
                        ),
                    })
                }
            },
        };
        Ok(kind)
    }
}

/// Builds the decomposition for `map` at dimension `d`.
pub fn build_decomposition(map: MapKind, dec: DecKind, d: usize) -> Result<DecomposedMap> {
    match dec {
        DecKind::Builtin => map.builtin(d),
        DecKind::Canonical => canonical_decomposition(&choi_matrix(&map.builtin(d)?)),
        DecKind::Minimal => match map {
            MapKind::Transposition => minimal_transposition_decomposition(d),
            MapKind::Reduction => reduction_preset(d, 1),
            _ => Err(SepmapError::InvalidParameter {
                name: "dec",
                reason: "minimal decompositions exist for transposition and reduction (d = 2)"
                    .to_string(),
            }),
        },
        DecKind::Shifted { steps } => {
            if map != MapKind::Transposition {
                return Err(SepmapError::InvalidParameter {
                    name: "dec",
                    reason: "shifted decompositions are defined for the transposition map"
                        .to_string(),
                });
            }
            let units = antisymmetric_units(d);
            if steps > units.len() {
                return Err(SepmapError::InvalidParameter {
                    name: "dec",
                    reason: format!(
                        "at most {} shift steps at d = {d}, got {steps}",
                        units.len()
                    ),
                });
            }
            let mut dec = minimal_transposition_decomposition(d)?;
            for v in units.iter().take(steps) {
                dec = shift_kraus(&dec, v)?;
            }
            Ok(dec)
        }
        DecKind::ReductionPreset { preset } => {
            if map != MapKind::Reduction {
                return Err(SepmapError::InvalidParameter {
                    name: "dec",
                    reason: "presets (1)-(3) are decompositions of the reduction map".to_string(),
                });
            }
            reduction_preset(d, preset)
        }
    }
}

/// One criterion evaluation request with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum CriterionSpec {
    PositiveMap,
    Ppt,
    NielsenKempe,
    WeakMajorization,
    Moment { alpha: f64 },
    Renyi { alpha: f64 },
    Tsallis { alpha: f64 },
    Norm,
    Theorem2I { alpha: f64, beta: f64 },
    Theorem2Ii { alpha: f64, beta: f64 },
    Qmax,
    ChannelRenyiAlpha { alpha: f64 },
    ChannelAlphaFree { alpha: f64 },
    ChannelVonNeumann,
    ChannelNorm,
    ConditionalEntropy,
    Aeq1 { n: u32 },
    Beq1 { n: u32 },
    ChannelMajorization,
    MmEquivalence,
}

impl CriterionSpec {
    /// Parses `name`, `name:x`, or `name:x,y`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let one = || -> Result<f64> {
            args.ok_or_else(|| SepmapError::InvalidParameter {
                name: "criterion",
                reason: format!("'{name}' needs one numeric parameter"),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| SepmapError::InvalidParameter {
                name: "criterion",
                reason: format!("'{name}': {e}"),
            })
        };
        let two = || -> Result<(f64, f64)> {
            let raw = args.ok_or_else(|| SepmapError::InvalidParameter {
                name: "criterion",
                reason: format!("'{name}' needs alpha,beta"),
            })?;
            let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(SepmapError::InvalidParameter {
                    name: "criterion",
                    reason: format!("'{name}' needs alpha,beta, got '{raw}'"),
                });
            }
            let parse = |p: &str| {
                p.parse::<f64>().map_err(|e| SepmapError::InvalidParameter {
                    name: "criterion",
                    reason: format!("'{name}': {e}"),
                })
            };
            Ok((parse(parts[0])?, parse(parts[1])?))
        };
        let spec = match name {
            "positive_map" | "map" => CriterionSpec::PositiveMap,
            "ppt" => CriterionSpec::Ppt,
            "nielsen_kempe" | "nk" => CriterionSpec::NielsenKempe,
            "weak_majorization" => CriterionSpec::WeakMajorization,
            "moment" => CriterionSpec::Moment { alpha: one()? },
            "renyi" => CriterionSpec::Renyi { alpha: one()? },
            "tsallis" => CriterionSpec::Tsallis { alpha: one()? },
            "norm" => CriterionSpec::Norm,
            "theorem2_i" => {
                let (alpha, beta) = two()?;
                CriterionSpec::Theorem2I { alpha, beta }
            }
            "theorem2_ii" => {
                let (alpha, beta) = two()?;
                CriterionSpec::Theorem2Ii { alpha, beta }
            }
            "qmax" => CriterionSpec::Qmax,
            "channel_renyi_alpha" | "channel_renyi" => {
                CriterionSpec::ChannelRenyiAlpha { alpha: one()? }
            }
            "channel_alpha_free" => CriterionSpec::ChannelAlphaFree { alpha: one()? },
            "channel_von_neumann" => CriterionSpec::ChannelVonNeumann,
            "channel_norm" => CriterionSpec::ChannelNorm,
            "conditional_entropy" => CriterionSpec::ConditionalEntropy,
            "aeq1" => CriterionSpec::Aeq1 { n: one()? as u32 },
            "beq1" => CriterionSpec::Beq1 { n: one()? as u32 },
            "channel_majorization" => CriterionSpec::ChannelMajorization,
            "mm_equivalence" | "mm" => CriterionSpec::MmEquivalence,
            other => {
                return Err(SepmapError::InvalidParameter {
                    name: "criterion",
                    reason: format!("unknown criterion '{other}'"),
                })
            }
        };
        Ok(spec)
    }

    /// Stable column keys, one per verdict this spec emits.
    pub fn keys(&self) -> Vec<String> {
        match self {
            CriterionSpec::PositiveMap => vec!["positive_map".into()],
            CriterionSpec::Ppt => vec!["ppt".into()],
            CriterionSpec::NielsenKempe => vec!["nielsen_kempe".into()],
            CriterionSpec::WeakMajorization => vec!["weak_majorization".into()],
            CriterionSpec::Moment { alpha } => vec![format!("moment[alpha={alpha}]")],
            CriterionSpec::Renyi { alpha } => vec![format!("renyi[alpha={alpha}]")],
            CriterionSpec::Tsallis { alpha } => vec![format!("tsallis[alpha={alpha}]")],
            CriterionSpec::Norm => vec!["norm".into()],
            CriterionSpec::Theorem2I { alpha, beta } => {
                vec![format!("theorem2_i[alpha={alpha},beta={beta}]")]
            }
            CriterionSpec::Theorem2Ii { alpha, beta } => {
                vec![format!("theorem2_ii[alpha={alpha},beta={beta}]")]
            }
            CriterionSpec::Qmax => vec!["qmax".into()],
            CriterionSpec::ChannelRenyiAlpha { alpha } => {
                vec![format!("channel_renyi_alpha[alpha={alpha}]")]
            }
            CriterionSpec::ChannelAlphaFree { alpha } => {
                vec![format!("channel_alpha_free[alpha={alpha}]")]
            }
            CriterionSpec::ChannelVonNeumann => vec!["channel_von_neumann".into()],
            CriterionSpec::ChannelNorm => vec!["channel_norm".into()],
            CriterionSpec::ConditionalEntropy => vec!["conditional_entropy".into()],
            CriterionSpec::Aeq1 { n } => vec![format!("aeq1[n={n}]")],
            CriterionSpec::Beq1 { n } => vec![format!("beq1[n={n}]")],
            CriterionSpec::ChannelMajorization => vec!["channel_majorization".into()],
            CriterionSpec::MmEquivalence => vec![
                "mm_map".into(),
                "mm_weak_majorization".into(),
                "mm_norm".into(),
            ],
        }
    }

    /// `(alpha, beta)` the criterion is parameterized by, for fraction tables.
    pub fn alpha_beta(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            CriterionSpec::Moment { alpha }
            | CriterionSpec::Renyi { alpha }
            | CriterionSpec::Tsallis { alpha }
            | CriterionSpec::ChannelRenyiAlpha { alpha }
            | CriterionSpec::ChannelAlphaFree { alpha } => (Some(alpha), None),
            CriterionSpec::Theorem2I { alpha, beta }
            | CriterionSpec::Theorem2Ii { alpha, beta } => (Some(alpha), Some(beta)),
            CriterionSpec::Aeq1 { n } | CriterionSpec::Beq1 { n } => {
                (Some(1.0), Some(n as f64))
            }
            _ => (None, None),
        }
    }

    /// Evaluates the criterion; verdict order matches [`Self::keys`].
    /// Marginal-based criteria (Nielsen-Kempe, conditional entropy) act on
    /// the kept subsystem `side.other()`.
    pub fn evaluate(
        &self,
        rho: &BipartiteState,
        dec: &DecomposedMap,
        side: Subsystem,
        tol: f64,
    ) -> Result<Vec<CriterionVerdict>> {
        let v = match *self {
            CriterionSpec::PositiveMap => criteria::check_positive_map(rho, dec, side, tol)?,
            CriterionSpec::Ppt => criteria::check_ppt(rho, tol)?,
            CriterionSpec::NielsenKempe => {
                criteria::check_nielsen_kempe(rho, side.other(), tol)?
            }
            CriterionSpec::WeakMajorization => {
                criteria::check_weak_majorization(rho, dec, side, tol)?
            }
            CriterionSpec::Moment { alpha } => {
                criteria::check_moment_inequality(rho, dec, side, alpha, tol)?
            }
            CriterionSpec::Renyi { alpha } => {
                criteria::check_renyi_inequality(rho, dec, side, alpha, EntropyKind::Renyi, tol)?
            }
            CriterionSpec::Tsallis { alpha } => {
                criteria::check_renyi_inequality(rho, dec, side, alpha, EntropyKind::Tsallis, tol)?
            }
            CriterionSpec::Norm => criteria::check_norm_inequality(rho, dec, side, tol)?,
            CriterionSpec::Theorem2I { alpha, beta } => {
                criteria::check_theorem2(rho, dec, side, alpha, beta, Theorem2Variant::I, tol)?
            }
            CriterionSpec::Theorem2Ii { alpha, beta } => {
                criteria::check_theorem2(rho, dec, side, alpha, beta, Theorem2Variant::Ii, tol)?
            }
            CriterionSpec::Qmax => {
                criteria::compute_qmax(rho, dec, side, criteria::QMAX_OVERLAP_TOL, tol)?.1
            }
            CriterionSpec::ChannelRenyiAlpha { alpha } => criteria::check_channel_entropy(
                rho,
                dec,
                side,
                alpha,
                ChannelEntropyVariant::RenyiAlpha,
                tol,
            )?,
            CriterionSpec::ChannelAlphaFree { alpha } => criteria::check_channel_entropy(
                rho,
                dec,
                side,
                alpha,
                ChannelEntropyVariant::AlphaFree,
                tol,
            )?,
            CriterionSpec::ChannelVonNeumann => criteria::check_channel_entropy(
                rho,
                dec,
                side,
                1.0,
                ChannelEntropyVariant::VonNeumann,
                tol,
            )?,
            CriterionSpec::ChannelNorm => criteria::check_channel_entropy(
                rho,
                dec,
                side,
                1.0,
                ChannelEntropyVariant::Norm,
                tol,
            )?,
            CriterionSpec::ConditionalEntropy => {
                let keep = side.other();
                let margin = criteria::conditional_entropy(rho, keep)?;
                let mut v = CriterionVerdict {
                    criterion_id: "conditional_entropy".to_string(),
                    side: keep,
                    alpha: None,
                    beta: None,
                    margin,
                    passed: margin >= -tol,
                    weak_regime: false,
                    deferred_to_map: false,
                    inconclusive: false,
                    note: None,
                };
                if !margin.is_finite() {
                    return Err(SepmapError::Domain {
                        op: "conditional_entropy",
                        reason: format!("margin is not finite ({margin})"),
                    });
                }
                v.margin = margin;
                v
            }
            CriterionSpec::Aeq1 { n } => criteria::check_aeq1_beq1(rho, dec, side, n, tol)?.0,
            CriterionSpec::Beq1 { n } => criteria::check_aeq1_beq1(rho, dec, side, n, tol)?.1,
            CriterionSpec::ChannelMajorization => {
                criteria::check_channel_majorization(rho, dec, side, tol)?
            }
            CriterionSpec::MmEquivalence => {
                let (a, b, c) = criteria::check_maximally_mixed_equivalence(rho, dec, side, tol)?;
                return Ok(vec![a, b, c]);
            }
        };
        Ok(vec![v])
    }
}

/// Scan request.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub family: FamilyGrid,
    pub map: MapKind,
    pub decomposition: DecKind,
    pub side: Subsystem,
    pub criteria: Vec<CriterionSpec>,
    /// Criterion whose detections define the reference set for
    /// `reference_fraction` (the transposition-map criterion, i.e. PPT,
    /// unless overridden).
    pub reference: CriterionSpec,
    pub tolerance: f64,
    pub seed: u64,
    /// 0 = library default thread count.
    pub workers: usize,
}

impl ScanConfig {
    pub fn new(
        family: FamilyGrid,
        map: MapKind,
        decomposition: DecKind,
        side: Subsystem,
        criteria: Vec<CriterionSpec>,
    ) -> Self {
        Self {
            family,
            map,
            decomposition,
            side,
            criteria,
            reference: CriterionSpec::Ppt,
            tolerance: criteria::VERDICT_TOL,
            seed: 0,
            workers: 0,
        }
    }
}

/// Verdicts at one feasible grid point.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRecord {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    pub verdicts: Vec<CriterionVerdict>,
    pub reference_detected: bool,
}

/// Per-criterion detection statistics.
#[derive(Debug, Clone, Serialize)]
pub struct FractionEntry {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub detected: usize,
    pub evaluated: usize,
    pub detection_fraction: f64,
    /// detected-and-reference-detected / reference-detected (0 when the
    /// reference set is empty).
    pub reference_fraction: f64,
}

/// Scan result: per-point records plus fraction reductions.
#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub config_summary: String,
    pub criterion_keys: Vec<String>,
    pub records: Vec<ScanRecord>,
    pub skipped_infeasible: usize,
    pub reference_key: String,
    pub reference_detected: usize,
    pub fractions: BTreeMap<String, FractionEntry>,
}

/// A verdict counts as a detection only when it is conclusive and within
/// the criterion's valid regime.
pub fn is_detection(v: &CriterionVerdict) -> bool {
    !v.passed && !v.inconclusive && !v.weak_regime
}

/// Runs the scan: deterministic grid enumeration, parallel point
/// evaluation (result identical for any worker count), fraction reduction.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    if cfg.criteria.is_empty() {
        return Err(SepmapError::InvalidParameter {
            name: "criteria",
            reason: "criteria list must be non-empty".to_string(),
        });
    }
    let (d_a, d_b) = cfg.family.dims();
    let map_dim = match cfg.side {
        Subsystem::A => d_a,
        Subsystem::B => d_b,
    };
    let dec = build_decomposition(cfg.map, cfg.decomposition, map_dim)?;
    let points = cfg.family.points()?;
    let skipped_infeasible = points.iter().filter(|(_, s)| s.is_none()).count();

    let evaluate_point = |(index, (params, state)): (usize, &GridPoint)| -> Result<
        Option<ScanRecord>,
    > {
        let Some(rho) = state else { return Ok(None) };
        let mut verdicts = Vec::new();
        for spec in &cfg.criteria {
            verdicts.extend(spec.evaluate(rho, &dec, cfg.side, cfg.tolerance)?);
        }
        let reference_detected = cfg
            .reference
            .evaluate(rho, &dec, cfg.side, cfg.tolerance)?
            .iter()
            .all(is_detection);
        Ok(Some(ScanRecord {
            index,
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            verdicts,
            reference_detected,
        }))
    };

    let run = || -> Result<Vec<Option<ScanRecord>>> {
        points.par_iter().enumerate().map(evaluate_point).collect()
    };
    let results = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| SepmapError::Domain {
                op: "run_scan",
                reason: format!("worker pool: {e}"),
            })?
            .install(run)
    } else {
        run()
    }?;
    let records: Vec<ScanRecord> = results.into_iter().flatten().collect();

    let keys: Vec<String> = cfg.criteria.iter().flat_map(|s| s.keys()).collect();
    let key_params: Vec<(Option<f64>, Option<f64>)> = cfg
        .criteria
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.alpha_beta(), s.keys().len()))
        .collect();
    let reference_detected = records.iter().filter(|r| r.reference_detected).count();

    let mut fractions = BTreeMap::new();
    for (col, key) in keys.iter().enumerate() {
        let mut detected = 0usize;
        let mut overlap = 0usize;
        for r in &records {
            if is_detection(&r.verdicts[col]) {
                detected += 1;
                if r.reference_detected {
                    overlap += 1;
                }
            }
        }
        let evaluated = records.len();
        fractions.insert(
            key.clone(),
            FractionEntry {
                alpha: key_params[col].0,
                beta: key_params[col].1,
                detected,
                evaluated,
                detection_fraction: if evaluated == 0 {
                    0.0
                } else {
                    detected as f64 / evaluated as f64
                },
                reference_fraction: if reference_detected == 0 {
                    0.0
                } else {
                    overlap as f64 / reference_detected as f64
                },
            },
        );
    }

    Ok(ScanReport {
        config_summary: format!(
            "{}; map {:?}; dec {:?}; side {}; tol {:.1e}; seed {}",
            cfg.family.describe(),
            cfg.map,
            cfg.decomposition,
            cfg.side,
            cfg.tolerance,
            cfg.seed
        ),
        criterion_keys: keys,
        records,
        skipped_infeasible,
        reference_key: cfg.reference.keys().join("+"),
        reference_detected,
        fractions,
    })
}

/// Output format for `emit_outputs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(SepmapError::InvalidParameter {
                name: "format",
                reason: format!("unknown format '{other}' (csv, json)"),
            }),
        }
    }
}

const CSV_SCHEMA: &str = "# sepscan records schema v1";
const FRACTIONS_SCHEMA: &str = "# sepscan fractions schema v1";
const REGIONS_SCHEMA: &str = "# sepscan regions schema v1";

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

/// Writes the per-point records CSV (one row per grid point per criterion).
pub fn write_records_csv(report: &ScanReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{CSV_SCHEMA}")?;
    let param_names: Vec<String> = report
        .records
        .first()
        .map(|r| r.params.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["index".to_string()];
    header.extend(param_names.iter().cloned());
    header.extend(
        [
            "criterion",
            "side",
            "alpha",
            "beta",
            "margin",
            "passed",
            "weak_regime",
            "deferred_to_map",
            "inconclusive",
        ]
        .map(String::from),
    );
    wtr.write_record(&header)
        .map_err(|e| csv_error("header", e))?;
    for r in &report.records {
        for (key, v) in report.criterion_keys.iter().zip(&r.verdicts) {
            let mut row = vec![r.index.to_string()];
            row.extend(r.params.iter().map(|&(_, x)| format!("{x:.6}")));
            row.push(key.clone());
            row.push(v.side.to_string());
            row.push(fmt_opt(v.alpha));
            row.push(fmt_opt(v.beta));
            row.push(format!("{:.12e}", v.margin));
            row.push(v.passed.to_string());
            row.push(v.weak_regime.to_string());
            row.push(v.deferred_to_map.to_string());
            row.push(v.inconclusive.to_string());
            wtr.write_record(&row).map_err(|e| csv_error("record", e))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn csv_error(context: &str, e: csv::Error) -> SepmapError {
    SepmapError::Domain {
        op: "write_csv",
        reason: format!("{context}: {e}"),
    }
}

/// Writes the fraction table (one row per criterion): detection fraction
/// and reference fraction against `alpha + beta`.
pub fn write_fractions_csv(report: &ScanReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{FRACTIONS_SCHEMA}")?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "criterion",
        "alpha",
        "beta",
        "alpha_plus_beta",
        "detected",
        "evaluated",
        "detection_fraction",
        "reference_fraction",
    ])
    .map_err(|e| csv_error("header", e))?;
    for key in &report.criterion_keys {
        let f = &report.fractions[key];
        let total = match (f.alpha, f.beta) {
            (Some(a), Some(b)) => Some(a + b),
            (Some(a), None) => Some(a),
            _ => None,
        };
        wtr.write_record(&[
            key.clone(),
            fmt_opt(f.alpha),
            fmt_opt(f.beta),
            fmt_opt(total),
            f.detected.to_string(),
            f.evaluated.to_string(),
            format!("{:.6}", f.detection_fraction),
            format!("{:.6}", f.reference_fraction),
        ])
        .map_err(|e| csv_error("record", e))?;
    }
    wtr.flush()?;
    Ok(())
}

/// The four-criterion quadruple whose violations define the region labels
/// at total power `t`: M = moment(t), N = theorem2(i)(t-1, 1),
/// R = theorem2(i)(1, t-1), S = the positive-map test.
pub fn region_quadruple(t: f64) -> [CriterionSpec; 4] {
    [
        CriterionSpec::Moment { alpha: t },
        CriterionSpec::Theorem2I { alpha: t - 1.0, beta: 1.0 },
        CriterionSpec::Theorem2I { alpha: 1.0, beta: t - 1.0 },
        CriterionSpec::PositiveMap,
    ]
}

/// Classifies one record by the strongest violated criterion of the
/// quadruple (column indices `m`, `n`, `r`, `s` into the verdict list).
pub fn region_label(record: &ScanRecord, cols: [usize; 4]) -> &'static str {
    let viol = |c: usize| is_detection(&record.verdicts[c]);
    if viol(cols[0]) {
        "M"
    } else if viol(cols[1]) {
        "N"
    } else if viol(cols[2]) {
        "R"
    } else if viol(cols[3]) {
        "S"
    } else {
        "none"
    }
}

/// Writes a Fig-3-style triangle classification: `q, r, label`. Requires
/// the scan to contain the full region quadruple for power `t`.
pub fn write_regions_csv(report: &ScanReport, t: f64, w: &mut impl Write) -> Result<()> {
    let quad = region_quadruple(t);
    let cols: Vec<usize> = quad
        .iter()
        .map(|spec| {
            let key = &spec.keys()[0];
            report
                .criterion_keys
                .iter()
                .position(|k| k == key)
                .ok_or_else(|| SepmapError::InvalidParameter {
                    name: "report",
                    reason: format!("region map at power {t} needs criterion '{key}' in the scan"),
                })
        })
        .collect::<Result<_>>()?;
    let cols: [usize; 4] = [cols[0], cols[1], cols[2], cols[3]];
    writeln!(w, "{REGIONS_SCHEMA}")?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = report
        .records
        .first()
        .map(|r| r.params.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_else(|| vec!["q".to_string(), "r".to_string()]);
    header.push("label".to_string());
    wtr.write_record(&header).map_err(|e| csv_error("header", e))?;
    for r in &report.records {
        let mut row: Vec<String> = r.params.iter().map(|&(_, x)| format!("{x:.6}")).collect();
        row.push(region_label(r, cols).to_string());
        wtr.write_record(&row).map_err(|e| csv_error("record", e))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a Fig-5-style table merging several labelled reports (for example
/// one per reduction-map decomposition): rows are the distinct
/// `alpha + beta` totals, columns the per-report reference fractions.
pub fn write_fraction_matrix(
    reports: &[(String, &ScanReport)],
    w: &mut impl Write,
) -> Result<()> {
    writeln!(w, "# sepscan fraction matrix schema v1")?;
    let mut totals: Vec<f64> = Vec::new();
    for (_, rep) in reports {
        for key in &rep.criterion_keys {
            let f = &rep.fractions[key];
            if let (Some(a), Some(b)) = (f.alpha, f.beta) {
                let t = a + b;
                if !totals.iter().any(|&x| (x - t).abs() < 1e-12) {
                    totals.push(t);
                }
            }
        }
    }
    totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["alpha_plus_beta".to_string()];
    header.extend(reports.iter().map(|(label, _)| format!("fraction@{label}")));
    wtr.write_record(&header).map_err(|e| csv_error("header", e))?;
    for &t in &totals {
        let mut row = vec![format!("{t}")];
        for (_, rep) in reports {
            let cell = rep
                .criterion_keys
                .iter()
                .map(|k| &rep.fractions[k])
                .find(|f| matches!((f.alpha, f.beta), (Some(a), Some(b)) if (a + b - t).abs() < 1e-12))
                .map(|f| format!("{:.6}", f.reference_fraction))
                .unwrap_or_default();
            row.push(cell);
        }
        wtr.write_record(&row).map_err(|e| csv_error("record", e))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Emits the report files under `dir` with the stem `base`: the records
/// file in the requested format, the fraction table, and one region map
/// per fully represented power. Returns the written paths.
pub fn emit_outputs(
    report: &ScanReport,
    dir: &Path,
    base: &str,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let records_path = dir.join(match format {
        OutputFormat::Csv => format!("{base}.csv"),
        OutputFormat::Json => format!("{base}.json"),
    });
    let mut f = std::io::BufWriter::new(std::fs::File::create(&records_path)?);
    match format {
        OutputFormat::Csv => write_records_csv(report, &mut f)?,
        OutputFormat::Json => serde_json::to_writer_pretty(&mut f, report).map_err(|e| {
            SepmapError::Domain {
                op: "emit_outputs",
                reason: format!("json: {e}"),
            }
        })?,
    }
    f.flush()?;
    written.push(records_path);

    let fractions_path = dir.join(format!("{base}_fractions.csv"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&fractions_path)?);
    write_fractions_csv(report, &mut f)?;
    f.flush()?;
    written.push(fractions_path);

    for t in region_powers(report) {
        let path = dir.join(format!("{base}_regions_power{t}.csv"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        write_regions_csv(report, t, &mut f)?;
        f.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Total powers whose full region quadruple is present in the report.
pub fn region_powers(report: &ScanReport) -> Vec<f64> {
    let mut out = Vec::new();
    for key in &report.criterion_keys {
        let Some(f) = report.fractions.get(key) else { continue };
        if !key.starts_with("moment[") {
            continue;
        }
        let Some(t) = f.alpha else { continue };
        if region_quadruple(t)
            .iter()
            .all(|spec| report.criterion_keys.contains(&spec.keys()[0]))
            && !out.iter().any(|&x: &f64| (x - t).abs() < 1e-12)
        {
            out.push(t);
        }
    }
    out
}

/// Parses a state literal: `iso:d:p`, `rot:p:q:r:s`, `zh:a:q`, `sigma:p`,
/// or a matrix file path.
pub fn state_from_spec(spec: &str) -> Result<BipartiteState> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|e| SepmapError::InvalidParameter {
            name: "state",
            reason: format!("bad number '{s}': {e}"),
        })
    };
    match parts.as_slice() {
        ["iso", d, p] => {
            let d = d.parse::<usize>().map_err(|e| SepmapError::InvalidParameter {
                name: "state",
                reason: format!("bad dimension '{d}': {e}"),
            })?;
            isotropic_state(d, num(p)?)
        }
        ["rot", p, q, r, s] => rot_invariant_state(num(p)?, num(q)?, num(r)?, num(s)?),
        ["zh", a, q] => two_qubit_family(num(a)?, num(q)?),
        ["sigma", p] => {
            let p = num(p)?;
            rot_invariant_state(p, 1.0 - p, 0.0, 0.0)
        }
        _ => {
            let rec = sepmap::io::read_matrix_file(spec)?;
            BipartiteState::new(rec.matrix, rec.d_a, rec.d_b)
        }
    }
}
