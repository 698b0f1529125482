//! Construction, decomposition, verification, and application of positive
//! maps as differences of completely positive Kraus maps.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SepmapError};
use crate::matrix::{
    eig_hermitian, partial_trace, CMatrix, HermitianMatrix, Subsystem, PSD_TOL, RANK_CUTOFF,
};
use crate::states::BipartiteState;

/// A completely positive map as a list of Kraus operators
/// `Lambda(X) = sum_i V_i X V_i^dagger`.
#[derive(Debug, Clone)]
pub struct KrausMap {
    dim: usize,
    ops: Vec<CMatrix>,
}

impl KrausMap {
    /// Validates that at least one operator is present and all are
    /// `dim x dim`. Complete positivity is automatic for Kraus form.
    pub fn new(dim: usize, ops: Vec<CMatrix>) -> Result<Self> {
        if dim == 0 {
            return Err(SepmapError::InvalidParameter {
                name: "dim",
                reason: "map dimension must be positive".to_string(),
            });
        }
        if ops.is_empty() {
            return Err(SepmapError::InvalidParameter {
                name: "ops",
                reason: "a Kraus map needs at least one operator".to_string(),
            });
        }
        for (k, v) in ops.iter().enumerate() {
            if v.nrows() != dim || v.ncols() != dim {
                return Err(SepmapError::DimensionMismatch {
                    context: format!(
                        "Kraus operator {k} is {}x{}, expected {dim}x{dim}",
                        v.nrows(),
                        v.ncols()
                    ),
                });
            }
        }
        Ok(Self { dim, ops })
    }

    /// The identity map `{1_d}`.
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            ops: vec![CMatrix::identity(dim, dim)],
        }
    }

    /// The zero map, represented by a single all-zeros Kraus operator (keeps
    /// the at-least-one-operator invariant; its Choi matrix is 0).
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            ops: vec![CMatrix::zeros(dim, dim)],
        }
    }

    /// `xi * Tr(X) 1_d` with Kraus operators `{sqrt(xi) |i><j|}`.
    pub fn trace_map(dim: usize, xi: f64) -> Self {
        if xi == 0.0 {
            return Self::zero(dim);
        }
        let w = Complex64::new(xi.sqrt(), 0.0);
        let mut ops = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut v = CMatrix::zeros(dim, dim);
                v[(i, j)] = w;
                ops.push(v);
            }
        }
        Self { dim, ops }
    }

    /// Kraus extraction from a PSD Choi matrix: eigenpairs with
    /// `lambda > 1e-12 * lambda_max` reshape as `V[m][i] = sqrt(lambda) v[i*d+m]`.
    pub fn from_choi(choi: &HermitianMatrix) -> Result<Self> {
        let dim2 = choi.dim();
        let d = (dim2 as f64).sqrt().round() as usize;
        if d * d != dim2 {
            return Err(SepmapError::DimensionMismatch {
                context: format!("Choi dimension {dim2} is not a perfect square"),
            });
        }
        let spec = eig_hermitian(choi);
        let scale = spec.norm_scale();
        if spec.eigenvalue_min() < -PSD_TOL * scale {
            return Err(SepmapError::NotPositiveSemidefinite {
                lambda_min: spec.eigenvalue_min(),
                tol: PSD_TOL * scale,
            });
        }
        let cutoff = RANK_CUTOFF * spec.eigenvalue_max().max(0.0);
        let mut ops = Vec::new();
        for (k, &lam) in spec.eigenvalues().iter().enumerate() {
            if lam <= cutoff {
                continue;
            }
            let w = lam.sqrt();
            let v = spec.eigenvectors().column(k);
            let mut op = CMatrix::zeros(d, d);
            for i in 0..d {
                for m in 0..d {
                    op[(m, i)] = v[i * d + m] * w;
                }
            }
            ops.push(op);
        }
        if ops.is_empty() {
            return Ok(Self::zero(d));
        }
        Ok(Self { dim: d, ops })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    /// Number of Kraus operators in this representation.
    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    /// Minimal Kraus length kappa = rank of the Choi matrix at the
    /// `1e-12 * lambda_max` cutoff.
    pub fn kappa(&self) -> usize {
        let spec = eig_hermitian(&choi_of_kraus(self));
        let cutoff = RANK_CUTOFF * spec.eigenvalue_max().max(0.0);
        spec.eigenvalues().iter().filter(|&&x| x > cutoff).count()
    }

    /// The map scaled by `c >= 0` (Kraus operators scaled by `sqrt(c)`).
    pub fn scale_map(&self, c: f64) -> Result<Self> {
        if c < 0.0 {
            return Err(SepmapError::InvalidParameter {
                name: "c",
                reason: format!("map scale must be nonnegative, got {c}"),
            });
        }
        let w = Complex64::new(c.sqrt(), 0.0);
        Ok(Self {
            dim: self.dim,
            ops: self.ops.iter().map(|v| v * w).collect(),
        })
    }

    /// True when every Kraus operator is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.ops.iter().all(|v| v.iter().all(|z| z.norm() == 0.0))
    }
}

/// Trace-form metadata: `Lambda(X) = xi Tr(X) 1_d - eta Phi(X)` with `Phi`
/// the normalized CP part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceForm {
    pub xi: f64,
    pub eta: f64,
}

/// A positive map as an ordered pair of CP maps, `Lambda = Lambda1 - Lambda2`.
#[derive(Debug, Clone)]
pub struct DecomposedMap {
    lambda1: KrausMap,
    lambda2: KrausMap,
    name: String,
    trace_form: Option<TraceForm>,
}

impl DecomposedMap {
    /// Validates equal dims; when trace-form metadata is present, verifies
    /// `Choi(Lambda1) = xi * 1` and `Tr_out Choi(Lambda2) = eta * 1` (the
    /// Choi-level equivalents of `Lambda1(X) = xi Tr(X) 1` and
    /// `Tr Lambda2(X) = eta Tr X`).
    pub fn new(
        lambda1: KrausMap,
        lambda2: KrausMap,
        name: impl Into<String>,
        trace_form: Option<TraceForm>,
    ) -> Result<Self> {
        if lambda1.dim() != lambda2.dim() {
            return Err(SepmapError::DimensionMismatch {
                context: format!(
                    "lambda1 dim {} != lambda2 dim {}",
                    lambda1.dim(),
                    lambda2.dim()
                ),
            });
        }
        let dec = Self {
            lambda1,
            lambda2,
            name: name.into(),
            trace_form,
        };
        if let Some(tf) = &dec.trace_form {
            let d = dec.dim();
            let c1 = choi_of_kraus(&dec.lambda1);
            let id = CMatrix::identity(d * d, d * d) * Complex64::new(tf.xi, 0.0);
            let dev1 = (c1.as_matrix() - id)
                .iter()
                .fold(0.0_f64, |acc, z| acc.max(z.norm()));
            if dev1 > 1e-9 * tf.xi.abs().max(1.0) {
                return Err(SepmapError::Precondition(format!(
                    "trace-form metadata invalid: Choi(lambda1) deviates from xi*1 by {dev1:.3e}"
                )));
            }
            let c2 = choi_of_kraus(&dec.lambda2);
            let marg = partial_trace(&c2, d, d, Subsystem::A)?;
            let id = CMatrix::identity(d, d) * Complex64::new(tf.eta, 0.0);
            let dev2 = (marg.as_matrix() - id)
                .iter()
                .fold(0.0_f64, |acc, z| acc.max(z.norm()));
            if dev2 > 1e-9 * tf.eta.abs().max(1.0) {
                return Err(SepmapError::Precondition(format!(
                    "trace-form metadata invalid: Tr_out Choi(lambda2) deviates from eta*1 by {dev2:.3e}"
                )));
            }
        }
        Ok(dec)
    }

    pub fn dim(&self) -> usize {
        self.lambda1.dim()
    }

    pub fn lambda1(&self) -> &KrausMap {
        &self.lambda1
    }

    pub fn lambda2(&self) -> &KrausMap {
        &self.lambda2
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn trace_form(&self) -> Option<&TraceForm> {
        self.trace_form.as_ref()
    }
}

/// `sum_i V_i X V_i^dagger`.
pub fn apply_map(map: &KrausMap, x: &HermitianMatrix) -> Result<HermitianMatrix> {
    if x.dim() != map.dim() {
        return Err(SepmapError::DimensionMismatch {
            context: format!("input dim {} != map dim {}", x.dim(), map.dim()),
        });
    }
    let mut out = CMatrix::zeros(map.dim(), map.dim());
    for v in map.ops() {
        out += v * x.as_matrix() * v.adjoint();
    }
    HermitianMatrix::hermitize(out)
}

/// `Lambda(X) = Lambda1(X) - Lambda2(X)`.
pub fn apply_positive_map(dec: &DecomposedMap, x: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(&apply_map(dec.lambda1(), x)? - &apply_map(dec.lambda2(), x)?)
}

/// Extended application of a CP map to one subsystem of an arbitrary
/// bipartite Hermitian matrix: `[I tensor Lambda]` (side B) or
/// `[Lambda tensor I]` (side A), computed blockwise.
pub fn apply_kraus_extended(
    map: &KrausMap,
    m: &HermitianMatrix,
    d_a: usize,
    d_b: usize,
    side: Subsystem,
) -> Result<HermitianMatrix> {
    if d_a * d_b != m.dim() {
        return Err(SepmapError::DimensionMismatch {
            context: format!("matrix dim {} != {}*{}", m.dim(), d_a, d_b),
        });
    }
    let acted = match side {
        Subsystem::A => d_a,
        Subsystem::B => d_b,
    };
    if map.dim() != acted {
        return Err(SepmapError::DimensionMismatch {
            context: format!(
                "map dim {} != dimension {} of subsystem {side}",
                map.dim(),
                acted
            ),
        });
    }
    let src = m.as_matrix();
    let dim = d_a * d_b;
    let mut out = CMatrix::zeros(dim, dim);
    match side {
        Subsystem::B => {
            // out block (a,b) = sum_k V (rho block (a,b)) V^dagger
            for a in 0..d_a {
                for b in 0..d_a {
                    let block = src.view((a * d_b, b * d_b), (d_b, d_b));
                    let mut acc = CMatrix::zeros(d_b, d_b);
                    for v in map.ops() {
                        acc += v * block * v.adjoint();
                    }
                    out.view_mut((a * d_b, b * d_b), (d_b, d_b)).copy_from(&acc);
                }
            }
        }
        Subsystem::A => {
            // out block (a,b) = sum_k sum_{a',b'} V[a,a'] conj(V[b,b']) rho block (a',b')
            for v in map.ops() {
                for a in 0..d_a {
                    for b in 0..d_a {
                        let mut acc = CMatrix::zeros(d_b, d_b);
                        for ap in 0..d_a {
                            let va = v[(a, ap)];
                            if va.norm() == 0.0 {
                                continue;
                            }
                            for bp in 0..d_a {
                                let w = va * v[(b, bp)].conj();
                                if w.norm() == 0.0 {
                                    continue;
                                }
                                let block = src.view((ap * d_b, bp * d_b), (d_b, d_b));
                                acc += block * w;
                            }
                        }
                        let mut dst = out.view_mut((a * d_b, b * d_b), (d_b, d_b));
                        dst += acc;
                    }
                }
            }
        }
    }
    HermitianMatrix::hermitize(out)
}

/// `(Theta1, Theta2) = ([I tensor Lambda1] rho, [I tensor Lambda2] rho)`
/// (side B) or the `Lambda_i tensor I` pair (side A).
pub fn apply_extended(
    dec: &DecomposedMap,
    rho: &BipartiteState,
    side: Subsystem,
) -> Result<(HermitianMatrix, HermitianMatrix)> {
    let theta1 = apply_kraus_extended(dec.lambda1(), rho.matrix(), rho.d_a(), rho.d_b(), side)?;
    let theta2 = apply_kraus_extended(dec.lambda2(), rho.matrix(), rho.d_a(), rho.d_b(), side)?;
    Ok((theta1, theta2))
}

/// Choi matrix `C = d [I tensor Lambda](P+) = sum_ij |i><j| tensor Lambda(E_ij)`
/// of a Kraus map; always PSD.
pub fn choi_of_kraus(map: &KrausMap) -> HermitianMatrix {
    let d = map.dim();
    let dim = d * d;
    let mut c = CMatrix::zeros(dim, dim);
    for v in map.ops() {
        // w[(i,m)] = V[m,i]; C += w w^dagger
        for i in 0..d {
            for m in 0..d {
                let wi = v[(m, i)];
                if wi.norm() == 0.0 {
                    continue;
                }
                for j in 0..d {
                    for n in 0..d {
                        c[(i * d + m, j * d + n)] += wi * v[(n, j)].conj();
                    }
                }
            }
        }
    }
    HermitianMatrix::from_hermitian_unchecked(c)
}

/// Choi matrix of the positive map `Lambda = Lambda1 - Lambda2`.
pub fn choi_matrix(dec: &DecomposedMap) -> HermitianMatrix {
    &choi_of_kraus(dec.lambda1()) - &choi_of_kraus(dec.lambda2())
}

/// Jamiolkowski criterion: CP iff `lambda_min(Choi) >= -tol` (absolute).
pub fn is_completely_positive(choi: &HermitianMatrix, tol: f64) -> bool {
    eig_hermitian(choi).eigenvalue_min() >= -tol
}

/// Builds a Choi matrix from a direct action `X -> Lambda(X)` applied to
/// matrix units.
pub fn choi_from_action(d: usize, action: impl Fn(&CMatrix) -> CMatrix) -> Result<HermitianMatrix> {
    let dim = d * d;
    let mut c = CMatrix::zeros(dim, dim);
    for i in 0..d {
        for j in 0..d {
            let mut e = CMatrix::zeros(d, d);
            e[(i, j)] = Complex64::new(1.0, 0.0);
            let img = action(&e);
            for m in 0..d {
                for n in 0..d {
                    c[(i * d + m, j * d + n)] = img[(m, n)];
                }
            }
        }
    }
    HermitianMatrix::hermitize(c)
}

/// Kraus operators replaced by their Hermitian conjugates; realizes the
/// adjoint in `Tr[A^dagger Lambda(B)] = Tr[(Lambda^dagger(A))^dagger B]`.
pub fn adjoint_map(map: &KrausMap) -> KrausMap {
    KrausMap {
        dim: map.dim,
        ops: map.ops.iter().map(|v| v.adjoint()).collect(),
    }
}

/// Adjoint of a decomposed positive map (adjoint of both CP parts).
pub fn adjoint_decomposition(dec: &DecomposedMap) -> DecomposedMap {
    DecomposedMap {
        lambda1: adjoint_map(dec.lambda1()),
        lambda2: adjoint_map(dec.lambda2()),
        name: format!("{}^adjoint", dec.name()),
        trace_form: None,
    }
}

/// Canonical decomposition from a Choi matrix:
/// `xi = lambda_max(Choi)`, `Lambda1 = xi * trace map`,
/// `Choi(Lambda2) = xi * 1 - Choi` (PSD by construction).
/// Trace-form metadata attached when `Tr_out Choi(Lambda2)` is proportional
/// to the identity, with `eta = Tr Choi(Lambda2) / d`.
pub fn canonical_decomposition(choi: &HermitianMatrix) -> Result<DecomposedMap> {
    let dim2 = choi.dim();
    let d = (dim2 as f64).sqrt().round() as usize;
    if d * d != dim2 {
        return Err(SepmapError::DimensionMismatch {
            context: format!("Choi dimension {dim2} is not a perfect square"),
        });
    }
    let spec = eig_hermitian(choi);
    let xi = spec.eigenvalue_max();
    let c2 = &HermitianMatrix::identity(dim2).scale(xi) - choi;
    // PSD holds exactly by the definition of lambda_max; the extraction
    // re-checks within tolerance as an internal consistency guard.
    let lambda2 = KrausMap::from_choi(&c2).map_err(|e| SepmapError::Domain {
        op: "canonical_decomposition",
        reason: format!("xi*1 - Choi failed the PSD extraction: {e}"),
    })?;
    let lambda1 = KrausMap::trace_map(d, xi);

    let marg = partial_trace(&c2, d, d, Subsystem::A)?;
    let eta = c2.trace() / d as f64;
    let id = CMatrix::identity(d, d) * Complex64::new(eta, 0.0);
    let uniform = (marg.as_matrix() - id)
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
        <= 1e-9 * eta.abs().max(1.0);
    let trace_form = if uniform && xi != 0.0 {
        Some(TraceForm { xi, eta })
    } else {
        None
    };
    DecomposedMap::new(lambda1, lambda2, "canonical", trace_form)
}

/// Adds `V (.) V^dagger` to both CP parts; the underlying positive map is
/// unchanged (Choi difference invariant). Trace-form metadata is dropped
/// unless `V = 0`, since `Lambda1` stops being a multiple of the trace map.
pub fn shift_kraus(dec: &DecomposedMap, v: &CMatrix) -> Result<DecomposedMap> {
    let d = dec.dim();
    if v.nrows() != d || v.ncols() != d {
        return Err(SepmapError::DimensionMismatch {
            context: format!("shift operator is {}x{}, expected {d}x{d}", v.nrows(), v.ncols()),
        });
    }
    if v.iter().all(|z| z.norm() == 0.0) {
        return Ok(dec.clone());
    }
    let mut ops1 = dec.lambda1().ops().to_vec();
    let mut ops2 = dec.lambda2().ops().to_vec();
    ops1.push(v.clone());
    ops2.push(v.clone());
    DecomposedMap::new(
        KrausMap::new(d, ops1)?,
        KrausMap::new(d, ops2)?,
        dec.name().to_string(),
        None,
    )
}

fn unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = Complex64::new(1.0, 0.0);
    m
}

/// Antisymmetric units `(|i><j| - |j><i|)/sqrt(2)` for `i < j` in
/// lexicographic order.
pub fn antisymmetric_units(d: usize) -> Vec<CMatrix> {
    let w = Complex64::new(1.0 / 2.0_f64.sqrt(), 0.0);
    let mut ops = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            ops.push((unit(d, i, j) - unit(d, j, i)) * w);
        }
    }
    ops
}

fn symmetric_units(d: usize) -> Vec<CMatrix> {
    let w = Complex64::new(1.0 / 2.0_f64.sqrt(), 0.0);
    let mut ops = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            ops.push((unit(d, i, j) + unit(d, j, i)) * w);
        }
    }
    for i in 0..d {
        ops.push(unit(d, i, i));
    }
    ops
}

/// Minimal-length transposition decomposition `T = T1 - T2`:
/// `T1(X) = (Tr(X) 1 + X^T)/2` (symmetric Kraus set, length d(d+1)/2),
/// `T2(X) = (Tr(X) 1 - X^T)/2` (antisymmetric Kraus set, length d(d-1)/2).
pub fn minimal_transposition_decomposition(d: usize) -> Result<DecomposedMap> {
    if d < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("transposition decomposition needs d >= 2, got {d}"),
        });
    }
    DecomposedMap::new(
        KrausMap::new(d, symmetric_units(d))?,
        KrausMap::new(d, antisymmetric_units(d))?,
        format!("minimal_transposition(d={d})"),
        None,
    )
}

fn check_unitary(name: &'static str, u: &CMatrix) -> Result<()> {
    let d = u.nrows();
    let gram = u.adjoint() * u;
    let dev = (&gram - CMatrix::identity(d, d))
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if dev > 1e-10 {
        return Err(SepmapError::InvalidParameter {
            name,
            reason: format!("matrix is not unitary (deviation {dev:.3e})"),
        });
    }
    Ok(())
}

/// `tau^U(X) = U X^T U^dagger`.
fn tau_u(u: &CMatrix, x: &CMatrix) -> CMatrix {
    u * x.transpose() * u.adjoint()
}

fn builtin_from_action(
    d: usize,
    xi: f64,
    eta: f64,
    name: String,
    lambda2_action: impl Fn(&CMatrix) -> CMatrix,
    trace_form: bool,
) -> Result<DecomposedMap> {
    let choi2 = choi_from_action(d, lambda2_action)?;
    let lambda2 = KrausMap::from_choi(&choi2)?;
    let lambda1 = KrausMap::trace_map(d, xi);
    let tf = trace_form.then_some(TraceForm { xi, eta });
    DecomposedMap::new(lambda1, lambda2, name, tf)
}

/// Reduction map `Lambda_R(X) = Tr(X) 1 - X`: `xi = 1`, `Lambda2 = I`,
/// `eta = 1`.
pub fn reduction(d: usize) -> Result<DecomposedMap> {
    if d < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("reduction map needs d >= 2, got {d}"),
        });
    }
    DecomposedMap::new(
        KrausMap::trace_map(d, 1.0),
        KrausMap::identity(d),
        format!("reduction(d={d})"),
        Some(TraceForm { xi: 1.0, eta: 1.0 }),
    )
}

/// Transposition-type map `Lambda(X) = Tr(X) 1 - [Tr(X) 1 - tau^U(X)]
/// = tau^U(X)`: `xi = 1`, `Lambda2(X) = Tr(X) 1 - U X^T U^dagger`,
/// `eta = d - 1`. Default `U = 1` gives the plain transpose.
pub fn transposition(d: usize, u: Option<&CMatrix>) -> Result<DecomposedMap> {
    if d < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("transposition map needs d >= 2, got {d}"),
        });
    }
    let id = CMatrix::identity(d, d);
    let u = u.unwrap_or(&id);
    if u.nrows() != d || u.ncols() != d {
        return Err(SepmapError::DimensionMismatch {
            context: format!("U is {}x{}, expected {d}x{d}", u.nrows(), u.ncols()),
        });
    }
    check_unitary("U", u)?;
    let uc = u.clone();
    builtin_from_action(
        d,
        1.0,
        (d - 1) as f64,
        format!("transposition(d={d})"),
        move |x| {
            let t = x.trace();
            CMatrix::identity(d, d) * t - tau_u(&uc, x)
        },
        true,
    )
}

/// Default Breuer–Hall conjugation: antidiagonal with alternating signs
/// `(+1, -1, ...)` reading down the antidiagonal; antisymmetric and unitary
/// for even `d`.
pub fn breuer_hall_default_u(d: usize) -> CMatrix {
    let mut u = CMatrix::zeros(d, d);
    for i in 0..d {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        u[(i, d - 1 - i)] = Complex64::new(sign, 0.0);
    }
    u
}

/// Breuer–Hall map `Lambda(X) = Tr(X) 1 - X - tau^U(X)` with `U`
/// antisymmetric (`U^T = -U`) and `U^dagger U <= 1`:
/// `xi = 2`, `Lambda2(X) = Tr(X) 1 + X + tau^U(X)`, `eta = d + 2` for
/// unitary `U`. Requires even `d >= 4`: antisymmetric unitaries need even
/// `d`, and at `d = 2` the map degenerates to the zero map. A strictly
/// contractive (non-unitary) `U` is accepted but flagged in the name and
/// carries no trace-form metadata (its `eta` is not constant).
pub fn breuer_hall(d: usize, u: Option<&CMatrix>) -> Result<DecomposedMap> {
    if !d.is_multiple_of(2) {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("Breuer-Hall needs even d (antisymmetric unitary), got {d}"),
        });
    }
    if d < 4 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: "Breuer-Hall degenerates to the zero map at d = 2".to_string(),
        });
    }
    let default_u = breuer_hall_default_u(d);
    let u = u.unwrap_or(&default_u);
    if u.nrows() != d || u.ncols() != d {
        return Err(SepmapError::DimensionMismatch {
            context: format!("U is {}x{}, expected {d}x{d}", u.nrows(), u.ncols()),
        });
    }
    let antisym_dev = (u.transpose() + u)
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if antisym_dev > 1e-10 {
        return Err(SepmapError::InvalidParameter {
            name: "U",
            reason: format!("U must be antisymmetric, U^T = -U (deviation {antisym_dev:.3e})"),
        });
    }
    let unitary = check_unitary("U", u).is_ok();
    if !unitary {
        // non-unitary shifts are allowed when contractive: U^dagger U <= 1
        let gram = HermitianMatrix::hermitize(u.adjoint() * u)?;
        let top = eig_hermitian(&gram).eigenvalue_max();
        if top > 1.0 + 1e-10 {
            return Err(SepmapError::InvalidParameter {
                name: "U",
                reason: format!("U must satisfy U^dagger U <= 1 (max eigenvalue {top:.6})"),
            });
        }
    }
    let name = if unitary {
        format!("breuer_hall(d={d})")
    } else {
        format!("breuer_hall(d={d}) (non-unitary U)")
    };
    let uc = u.clone();
    builtin_from_action(
        d,
        2.0,
        (d + 2) as f64,
        name,
        move |x| {
            let t = x.trace();
            CMatrix::identity(d, d) * t + x + tau_u(&uc, x)
        },
        unitary,
    )
}

/// Cyclic shift `S|i> = |i+1 mod d>`.
pub fn cyclic_shift(d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d, d);
    for i in 0..d {
        s[((i + 1) % d, i)] = Complex64::new(1.0, 0.0);
    }
    s
}

/// Pinching `epsilon(X) = sum_j <j|X|j> |j><j|`.
fn pinch(x: &CMatrix) -> CMatrix {
    let d = x.nrows();
    let mut out = CMatrix::zeros(d, d);
    for j in 0..d {
        out[(j, j)] = x[(j, j)];
    }
    out
}

/// Generalized Choi map
/// `tau_{d,k}(X) = (d-k) eps(X) + sum_{i=1..k} eps(S^i X S^{i dagger}) - X`
/// for `0 <= k <= d-1`: `xi = d - k`,
/// `Lambda2(X) = (d-k) Tr(X) 1 - tau_{d,k}(X)`, `eta = d(d-k) - d + 1`.
/// `k = 0` is completely positive; `k = d-1` reproduces the reduction map.
pub fn generalized_choi(d: usize, k: usize) -> Result<DecomposedMap> {
    if d < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("generalized Choi map needs d >= 2, got {d}"),
        });
    }
    if k > d - 1 {
        return Err(SepmapError::InvalidParameter {
            name: "k",
            reason: format!("generalized Choi map needs 0 <= k <= d-1, got k={k} at d={d}"),
        });
    }
    let s = cyclic_shift(d);
    let xi = (d - k) as f64;
    let eta = (d * (d - k)) as f64 - d as f64 + 1.0;
    builtin_from_action(
        d,
        xi,
        eta,
        format!("generalized_choi(d={d},k={k})"),
        move |x| {
            let mut tau = pinch(x) * Complex64::new(xi, 0.0);
            let mut si = CMatrix::identity(d, d);
            for _ in 0..k {
                si = &s * si;
                tau += pinch(&(&si * x * si.adjoint()));
            }
            tau -= x;
            let t = x.trace();
            CMatrix::identity(d, d) * (t * xi) - tau
        },
        true,
    )
}

/// Werner–Holevo channel `Lambda(X) = [Tr(X) 1 - X^T]/(d-1)`; completely
/// positive, so `Lambda2` is the zero map and no trace-form metadata applies.
pub fn werner_holevo(d: usize) -> Result<DecomposedMap> {
    if d < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("Werner-Holevo channel needs d >= 2, got {d}"),
        });
    }
    let w = Complex64::new((2.0 / (d as f64 - 1.0)).sqrt(), 0.0);
    let ops: Vec<CMatrix> = antisymmetric_units(d).into_iter().map(|a| a * w).collect();
    DecomposedMap::new(
        KrausMap::new(d, ops)?,
        KrausMap::zero(d),
        format!("werner_holevo(d={d})"),
        None,
    )
}

/// Named decompositions (1)(2)(3) of the reduction map:
/// (1) `Lambda1 = Tr(.) 1 - (.)/2`, `Lambda2 = (.)/2` (the minimal
///     decomposition; `Lambda1` is completely positive only at `d = 2`);
/// (2) `Lambda1 = Tr(.) 1`, `Lambda2 = identity` (the canonical form);
/// (3) `Lambda1 = Tr(.) 1 + (.)`, `Lambda2 = 2 (.)`.
pub fn reduction_preset(d: usize, preset: u8) -> Result<DecomposedMap> {
    if d < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("reduction map needs d >= 2, got {d}"),
        });
    }
    let dim = d * d;
    let id_choi = HermitianMatrix::identity(dim);
    let p_plus_scaled = crate::states::max_entangled_projector(d).scale(d as f64);
    match preset {
        1 => {
            if d != 2 {
                return Err(SepmapError::Domain {
                    op: "reduction_preset",
                    reason: format!(
                        "preset (1) has Lambda1 = Tr(.) 1 - (.)/2, which is completely \
                         positive only at d = 2 (got d = {d})"
                    ),
                });
            }
            let choi1 = &id_choi - &p_plus_scaled.scale(0.5);
            let half = Complex64::new(0.5_f64.sqrt(), 0.0);
            DecomposedMap::new(
                KrausMap::from_choi(&choi1)?,
                KrausMap::new(d, vec![CMatrix::identity(d, d) * half])?,
                format!("reduction_preset1(d={d})"),
                None,
            )
        }
        2 => DecomposedMap::new(
            KrausMap::trace_map(d, 1.0),
            KrausMap::identity(d),
            format!("reduction_preset2(d={d})"),
            Some(TraceForm { xi: 1.0, eta: 1.0 }),
        ),
        3 => {
            let choi1 = &id_choi + &p_plus_scaled;
            let sqrt2 = Complex64::new(2.0_f64.sqrt(), 0.0);
            DecomposedMap::new(
                KrausMap::from_choi(&choi1)?,
                KrausMap::new(d, vec![CMatrix::identity(d, d) * sqrt2])?,
                format!("reduction_preset3(d={d})"),
                None,
            )
        }
        _ => Err(SepmapError::InvalidParameter {
            name: "preset",
            reason: format!("reduction presets are 1, 2, 3; got {preset}"),
        }),
    }
}

/// Pinching map `eps(X) = sum_j <j|X|j> |j><j|` with Kraus set `{|j><j|}`;
/// completely positive.
pub fn epsilon_map(d: usize) -> Result<DecomposedMap> {
    if d == 0 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: "epsilon map needs d >= 1".to_string(),
        });
    }
    let ops: Vec<CMatrix> = (0..d).map(|j| unit(d, j, j)).collect();
    DecomposedMap::new(
        KrausMap::new(d, ops)?,
        KrausMap::zero(d),
        format!("epsilon(d={d})"),
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{partial_transpose, tensor};
    use crate::states::{haar_unitary, isotropic_state, random_separable};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_unit_vector(d: usize, rng: &mut impl Rng) -> CMatrix {
        let mut v = CMatrix::from_fn(d, 1, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v /= Complex64::new(norm, 0.0);
        v
    }

    fn random_hermitian(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let g = CMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        HermitianMatrix::hermitize(&g + g.adjoint()).unwrap()
    }

    fn random_density(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let g = CMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let p = &g * g.adjoint();
        let t = p.trace().re;
        HermitianMatrix::hermitize(p / Complex64::new(t, 0.0)).unwrap()
    }

    fn max_abs_diff(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
        (a.as_matrix() - b.as_matrix())
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// Direct (definition-level) action of each builtin's full positive map.
    fn direct_action(name: &str, d: usize, k: usize, x: &CMatrix) -> CMatrix {
        let t = x.trace();
        let id = CMatrix::identity(d, d);
        match name {
            "reduction" => &id * t - x,
            "transposition" => x.transpose(),
            "breuer_hall" => {
                let u = breuer_hall_default_u(d);
                &id * t - x - tau_u(&u, x)
            }
            "generalized_choi" => {
                let s = cyclic_shift(d);
                let mut tau = pinch(x) * Complex64::new((d - k) as f64, 0.0);
                let mut si = CMatrix::identity(d, d);
                for _ in 0..k {
                    si = &s * si;
                    tau += pinch(&(&si * x * si.adjoint()));
                }
                tau - x
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn table2_parameters_and_kappas() {
        // (constructor result, expected xi, eta, kappa1, kappa2)
        let cases: Vec<(DecomposedMap, f64, f64, usize, usize)> = vec![
            (transposition(4, None).unwrap(), 1.0, 3.0, 16, 6),
            (breuer_hall(4, None).unwrap(), 2.0, 6.0, 16, 11),
            (reduction(4).unwrap(), 1.0, 1.0, 16, 1),
            (generalized_choi(3, 1).unwrap(), 2.0, 4.0, 9, 7),
            (generalized_choi(4, 1).unwrap(), 3.0, 9.0, 16, 13),
            (generalized_choi(4, 2).unwrap(), 2.0, 5.0, 16, 13),
            (generalized_choi(6, 2).unwrap(), 4.0, 19.0, 36, 31),
            (breuer_hall(6, None).unwrap(), 2.0, 8.0, 36, 22),
        ];
        for (dec, xi, eta, k1, k2) in &cases {
            let tf = dec.trace_form().expect("builtin carries trace form");
            assert_abs_diff_eq!(tf.xi, xi, epsilon = 1e-12);
            assert_abs_diff_eq!(tf.eta, eta, epsilon = 1e-12);
            assert_eq!(dec.lambda1().kappa(), *k1, "{}", dec.name());
            assert_eq!(dec.lambda2().kappa(), *k2, "{}", dec.name());
            // decomposability inequalities for non-CP trace-form maps
            assert!(tf.eta >= tf.xi, "{}", dec.name());
            assert!(tf.xi * dec.dim() as f64 >= tf.eta, "{}", dec.name());
            // both parts CP by construction
            assert!(is_completely_positive(&choi_of_kraus(dec.lambda1()), 1e-10));
            assert!(is_completely_positive(&choi_of_kraus(dec.lambda2()), 1e-10));
        }
    }

    #[test]
    fn builtin_choi_difference_matches_direct_definition() {
        let cases: Vec<(&str, usize, usize)> = vec![
            ("reduction", 4, 0),
            ("transposition", 4, 0),
            ("breuer_hall", 4, 0),
            ("generalized_choi", 3, 1),
            ("generalized_choi", 4, 2),
        ];
        for (name, d, k) in cases {
            let dec = match name {
                "reduction" => reduction(d).unwrap(),
                "transposition" => transposition(d, None).unwrap(),
                "breuer_hall" => breuer_hall(d, None).unwrap(),
                "generalized_choi" => generalized_choi(d, k).unwrap(),
                _ => unreachable!(),
            };
            let direct = choi_from_action(d, |x| direct_action(name, d, k, x)).unwrap();
            let diff = choi_matrix(&dec);
            assert!(
                max_abs_diff(&diff, &direct) <= 1e-12,
                "{name}(d={d},k={k}): Choi difference deviates by {:.3e}",
                max_abs_diff(&diff, &direct)
            );
        }
    }

    #[test]
    fn choi_special_cases() {
        // identity map: Choi = sum_ij |ii><jj| = d * P+
        let c_id = choi_of_kraus(&KrausMap::identity(2));
        let p_plus = crate::states::max_entangled_projector(2);
        assert!(max_abs_diff(&c_id, &p_plus.scale(2.0)) <= 1e-12);
        // trace map at d = 2: Choi = 1_4
        let c_tr = choi_of_kraus(&KrausMap::trace_map(2, 1.0));
        assert!(max_abs_diff(&c_tr, &HermitianMatrix::identity(4)) <= 1e-12);
        // transposition d = 2: Choi of the full map is SWAP, eigenvalues (1,1,1,-1)
        let dec = transposition(2, None).unwrap();
        let spec = eig_hermitian(&choi_matrix(&dec));
        let expect = [1.0, 1.0, 1.0, -1.0];
        for (got, want) in spec.eigenvalues().iter().zip(expect.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
        assert!(!is_completely_positive(&choi_matrix(&dec), 1e-9));
        // reduction full map is not CP; Werner-Holevo is
        assert!(!is_completely_positive(
            &choi_matrix(&reduction(4).unwrap()),
            1e-9
        ));
        let wh = werner_holevo(4).unwrap();
        assert!(is_completely_positive(&choi_matrix(&wh), 1e-9));
        assert_eq!(wh.lambda1().kappa(), 6);
        assert!(wh.lambda2().is_zero());
        // epsilon map: CP, Choi rank d
        let eps = epsilon_map(4).unwrap();
        assert_eq!(eps.lambda1().kappa(), 4);
    }

    #[test]
    fn werner_holevo_is_trace_preserving_channel() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let wh = werner_holevo(4).unwrap();
        for _ in 0..5 {
            let rho = random_density(4, &mut rng);
            let img = apply_map(wh.lambda1(), &rho).unwrap();
            assert_abs_diff_eq!(img.trace(), 1.0, epsilon = 1e-12);
            assert!(img.is_psd(PSD_TOL));
            // matches (Tr rho 1 - rho^T)/(d-1)
            let want = (CMatrix::identity(4, 4) * rho.as_matrix().trace()
                - rho.as_matrix().transpose())
                / Complex64::new(3.0, 0.0);
            let want = HermitianMatrix::hermitize(want).unwrap();
            assert!(max_abs_diff(&img, &want) <= 1e-12);
        }
    }

    #[test]
    fn apply_map_identities() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = random_hermitian(4, &mut rng);
        let id = apply_map(&KrausMap::identity(4), &x).unwrap();
        assert!(max_abs_diff(&id, &x) <= 1e-12);
        let tr = apply_map(&KrausMap::trace_map(4, 1.5), &x).unwrap();
        let want = HermitianMatrix::identity(4).scale(1.5 * x.trace());
        assert!(max_abs_diff(&tr, &want) <= 1e-12);
        // positive-map application: transposition builtin realizes X -> X^T
        let dec = transposition(4, None).unwrap();
        let img = apply_positive_map(&dec, &x).unwrap();
        let want = HermitianMatrix::hermitize(x.as_matrix().transpose()).unwrap();
        assert!(max_abs_diff(&img, &want) <= 1e-10);
    }

    #[test]
    fn extended_application_reduction_and_transposition() {
        let rho = isotropic_state(3, 0.7).unwrap();
        let red = reduction(3).unwrap();
        // side B: Theta1 = rho_A tensor 1, Theta2 = rho
        let (t1, t2) = apply_extended(&red, &rho, Subsystem::B).unwrap();
        let want1 = tensor(&rho.partial_trace(Subsystem::A), &HermitianMatrix::identity(3));
        assert!(max_abs_diff(&t1, &want1) <= 1e-12);
        assert!(max_abs_diff(&t2, rho.matrix()) <= 1e-12);
        // side A: Theta1 = 1 tensor rho_B, Theta2 = rho
        let (t1, t2) = apply_extended(&red, &rho, Subsystem::A).unwrap();
        let want1 = tensor(&HermitianMatrix::identity(3), &rho.partial_trace(Subsystem::B));
        assert!(max_abs_diff(&t1, &want1) <= 1e-12);
        assert!(max_abs_diff(&t2, rho.matrix()) <= 1e-12);
        // transposition extended difference = partial transpose, both sides
        let tr3 = transposition(3, None).unwrap();
        for side in [Subsystem::A, Subsystem::B] {
            let (t1, t2) = apply_extended(&tr3, &rho, side).unwrap();
            let diff = &t1 - &t2;
            let want = rho.partial_transpose(side);
            assert!(max_abs_diff(&diff, &want) <= 1e-10, "side {side}");
        }
    }

    #[test]
    fn extended_application_on_product_pure_state() {
        // [I tensor T_{1,2}](P_A tensor P_B) = P_A tensor (1 +/- conj(P_B))/2
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let d = 3;
        let psi_a = random_unit_vector(d, &mut rng);
        let psi_b = random_unit_vector(d, &mut rng);
        let pa = HermitianMatrix::hermitize(&psi_a * psi_a.adjoint()).unwrap();
        let pb = &psi_b * psi_b.adjoint();
        let rho = BipartiteState::new(
            tensor(&pa, &HermitianMatrix::hermitize(pb.clone()).unwrap()),
            d,
            d,
        )
        .unwrap();
        let dec = minimal_transposition_decomposition(d).unwrap();
        let (t1, t2) = apply_extended(&dec, &rho, Subsystem::B).unwrap();
        let half = Complex64::new(0.5, 0.0);
        let plus =
            HermitianMatrix::hermitize((CMatrix::identity(d, d) + pb.conjugate()) * half).unwrap();
        let minus =
            HermitianMatrix::hermitize((CMatrix::identity(d, d) - pb.conjugate()) * half).unwrap();
        assert!(max_abs_diff(&t1, &tensor(&pa, &plus)) <= 1e-12);
        assert!(max_abs_diff(&t2, &tensor(&pa, &minus)) <= 1e-12);
        // both Theta's PSD on this (product) state, T2 image vanishes on psi_B*
        assert!(t1.is_psd(PSD_TOL) && t2.is_psd(PSD_TOL));
    }

    #[test]
    fn minimal_transposition_structure() {
        let dec = minimal_transposition_decomposition(4).unwrap();
        assert_eq!(dec.lambda1().num_ops(), 10);
        assert_eq!(dec.lambda2().num_ops(), 6);
        assert_eq!(dec.lambda1().kappa(), 10);
        assert_eq!(dec.lambda2().kappa(), 6);
        assert!(dec.trace_form().is_none());
        // T1(X) = (Tr X 1 + X^T)/2 and T2(X) = (Tr X 1 - X^T)/2
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let x = random_hermitian(4, &mut rng);
        let t = x.trace();
        let xt = HermitianMatrix::hermitize(x.as_matrix().transpose()).unwrap();
        let t1 = apply_map(dec.lambda1(), &x).unwrap();
        let t2 = apply_map(dec.lambda2(), &x).unwrap();
        let want1 = HermitianMatrix::hermitize(
            (HermitianMatrix::identity(4).scale(t).as_matrix() + xt.as_matrix())
                * Complex64::new(0.5, 0.0),
        )
        .unwrap();
        let want2 = HermitianMatrix::hermitize(
            (HermitianMatrix::identity(4).scale(t).as_matrix() - xt.as_matrix())
                * Complex64::new(0.5, 0.0),
        )
        .unwrap();
        assert!(max_abs_diff(&t1, &want1) <= 1e-12);
        assert!(max_abs_diff(&t2, &want2) <= 1e-12);
        // d = 2 counts
        let dec2 = minimal_transposition_decomposition(2).unwrap();
        assert_eq!(dec2.lambda1().kappa(), 3);
        assert_eq!(dec2.lambda2().kappa(), 1);
    }

    #[test]
    fn shift_kraus_preserves_map_and_grows_kappa() {
        let d = 4;
        let base = minimal_transposition_decomposition(d).unwrap();
        let target = choi_matrix(&base);
        // zero shift: unchanged
        let same = shift_kraus(&base, &CMatrix::zeros(d, d)).unwrap();
        assert_eq!(same.lambda1().num_ops(), 10);
        // full six-step shift by the antisymmetric units reaches the
        // canonical pair: Choi(L1) = 1, Choi(L2) = 1 - SWAP
        let mut dec = base;
        let mut expected_k1 = 10;
        for v in antisymmetric_units(d) {
            dec = shift_kraus(&dec, &v).unwrap();
            expected_k1 += 1;
            assert_eq!(dec.lambda1().kappa(), expected_k1);
            assert!(max_abs_diff(&choi_matrix(&dec), &target) <= 1e-12);
            assert!(dec.trace_form().is_none());
        }
        assert_eq!(dec.lambda1().kappa(), 16);
        assert_eq!(dec.lambda2().kappa(), 6);
        let c1 = choi_of_kraus(dec.lambda1());
        assert!(max_abs_diff(&c1, &HermitianMatrix::identity(16)) <= 1e-12);
        let canonical = transposition(d, None).unwrap();
        let c2 = choi_of_kraus(dec.lambda2());
        let c2_want = choi_of_kraus(canonical.lambda2());
        assert!(max_abs_diff(&c2, &c2_want) <= 1e-12);
    }

    #[test]
    fn canonical_decomposition_properties() {
        // canonical of the reduction map's Choi: xi = 1, Lambda2 = identity map
        let red = reduction(3).unwrap();
        let can = canonical_decomposition(&choi_matrix(&red)).unwrap();
        let tf = can.trace_form().unwrap();
        assert_abs_diff_eq!(tf.xi, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tf.eta, 1.0, epsilon = 1e-12);
        let c2 = choi_of_kraus(can.lambda2());
        let p_plus = crate::states::max_entangled_projector(3);
        assert!(max_abs_diff(&c2, &p_plus.scale(3.0)) <= 1e-10);
        // canonical of transposition at d = 3: xi = 1, eta = d - 1, kappa2 = 3
        let tr = transposition(3, None).unwrap();
        let can = canonical_decomposition(&choi_matrix(&tr)).unwrap();
        let tf = can.trace_form().unwrap();
        assert_abs_diff_eq!(tf.xi, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tf.eta, 2.0, epsilon = 1e-12);
        assert_eq!(can.lambda1().kappa(), 9);
        assert_eq!(can.lambda2().kappa(), 3);
        assert!(max_abs_diff(&choi_matrix(&can), &choi_matrix(&tr)) <= 1e-10);
        // canonical of a CP map: xi = lambda_max, Lambda2 CP, map preserved
        let wh = werner_holevo(4).unwrap();
        let c = choi_matrix(&wh);
        let can = canonical_decomposition(&c).unwrap();
        assert_abs_diff_eq!(
            can.trace_form().map(|t| t.xi).unwrap_or(f64::NAN),
            eig_hermitian(&c).eigenvalue_max(),
            epsilon = 1e-12
        );
        assert!(max_abs_diff(&choi_matrix(&can), &c) <= 1e-10);
        // a Choi with non-uniform output marginal gets no trace form
        let eps = epsilon_map(3).unwrap();
        let mut skew = choi_of_kraus(eps.lambda1()).into_matrix();
        skew[(0, 0)] += Complex64::new(0.5, 0.0);
        let can = canonical_decomposition(&HermitianMatrix::hermitize(skew).unwrap()).unwrap();
        assert!(can.trace_form().is_none());
    }

    #[test]
    fn from_choi_roundtrip_random_cp_map() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for _ in 0..3 {
            let d = 3;
            let ops: Vec<CMatrix> = (0..4)
                .map(|_| {
                    CMatrix::from_fn(d, d, |_, _| {
                        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                    })
                })
                .collect();
            let map = KrausMap::new(d, ops).unwrap();
            let choi = choi_of_kraus(&map);
            let back = KrausMap::from_choi(&choi).unwrap();
            assert!(max_abs_diff(&choi_of_kraus(&back), &choi) <= 1e-10);
            assert_eq!(back.num_ops(), back.kappa());
        }
        // from_choi refuses a non-PSD input
        let dec = transposition(3, None).unwrap();
        assert!(matches!(
            KrausMap::from_choi(&choi_matrix(&dec)),
            Err(SepmapError::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn adjoint_identities() {
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let dec = breuer_hall(4, None).unwrap();
        for map in [dec.lambda1(), dec.lambda2()] {
            let adj = adjoint_map(map);
            for _ in 0..3 {
                let a = random_hermitian(4, &mut rng);
                let b = random_hermitian(4, &mut rng);
                let lhs = (a.as_matrix().adjoint() * apply_map(map, &b).unwrap().as_matrix())
                    .trace();
                let rhs = (apply_map(&adj, &a).unwrap().as_matrix().adjoint() * b.as_matrix())
                    .trace();
                assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-10);
                assert_abs_diff_eq!(lhs.im, rhs.im, epsilon = 1e-10);
            }
            // double adjoint restores the Choi matrix
            let twice = adjoint_map(&adj);
            assert!(max_abs_diff(&choi_of_kraus(&twice), &choi_of_kraus(map)) <= 1e-12);
        }
        // trace map and identity are self-adjoint
        let tr = KrausMap::trace_map(3, 2.0);
        assert!(max_abs_diff(&choi_of_kraus(&adjoint_map(&tr)), &choi_of_kraus(&tr)) <= 1e-12);
    }

    #[test]
    fn breuer_hall_domain_and_u_validation() {
        assert!(matches!(
            breuer_hall(3, None),
            Err(SepmapError::InvalidParameter { name: "d", .. })
        ));
        assert!(matches!(
            breuer_hall(2, None),
            Err(SepmapError::InvalidParameter { name: "d", .. })
        ));
        // non-antisymmetric U rejected
        let bad = CMatrix::identity(4, 4);
        assert!(matches!(
            breuer_hall(4, Some(&bad)),
            Err(SepmapError::InvalidParameter { name: "U", .. })
        ));
        // contractive (non-unitary) antisymmetric U accepted, flagged
        let u = breuer_hall_default_u(4) * Complex64::new(0.5, 0.0);
        let dec = breuer_hall(4, Some(&u)).unwrap();
        assert!(dec.name().contains("non-unitary"));
        assert!(dec.trace_form().is_none());
        // an expansive U rejected
        let u = breuer_hall_default_u(4) * Complex64::new(1.5, 0.0);
        assert!(breuer_hall(4, Some(&u)).is_err());
        // rotated default: W U W^T stays antisymmetric unitary and accepted
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let w = haar_unitary(4, &mut rng);
        let u = &w * breuer_hall_default_u(4) * w.transpose();
        let dec = breuer_hall(4, Some(&u)).unwrap();
        assert_eq!(dec.trace_form().map(|t| t.eta as i64), Some(6));
    }

    #[test]
    fn reduction_presets() {
        let mut rng = ChaCha12Rng::seed_from_u64(97);
        // preset (1) exists only at d = 2
        assert!(matches!(
            reduction_preset(3, 1),
            Err(SepmapError::Domain { .. })
        ));
        assert!(reduction_preset(2, 4).is_err());
        // all presets realize the same positive map
        let red2 = reduction(2).unwrap();
        for preset in 1..=3u8 {
            let dec = reduction_preset(2, preset).unwrap();
            assert!(max_abs_diff(&choi_matrix(&dec), &choi_matrix(&red2)) <= 1e-12);
        }
        // preset (1) at d = 2 is minimal: kappa1 = 3, kappa2 = 1
        let p1 = reduction_preset(2, 1).unwrap();
        assert_eq!(p1.lambda1().kappa(), 3);
        assert_eq!(p1.lambda2().kappa(), 1);
        // Theta formulas on a random state (d = 2 so all presets apply)
        let rho = random_density(4, &mut rng);
        let rho = BipartiteState::new(rho, 2, 2).unwrap();
        let ra_id = tensor(&rho.partial_trace(Subsystem::A), &HermitianMatrix::identity(2));
        let cases: [(u8, f64, f64); 3] = [(1, -0.5, 0.5), (2, 0.0, 1.0), (3, 1.0, 2.0)];
        for (preset, c1, c2) in cases {
            let dec = reduction_preset(2, preset).unwrap();
            let (t1, t2) = apply_extended(&dec, &rho, Subsystem::B).unwrap();
            let want1 = HermitianMatrix::hermitize(
                ra_id.as_matrix() + rho.matrix().as_matrix() * Complex64::new(c1, 0.0),
            )
            .unwrap();
            let want2 = rho.matrix().scale(c2);
            assert!(max_abs_diff(&t1, &want1) <= 1e-10, "preset {preset}");
            assert!(max_abs_diff(&t2, &want2) <= 1e-10, "preset {preset}");
        }
        // preset (3) generalizes to d = 4
        let p3 = reduction_preset(4, 3).unwrap();
        assert!(max_abs_diff(&choi_matrix(&p3), &choi_matrix(&reduction(4).unwrap())) <= 1e-12);
    }

    #[test]
    fn generalized_choi_domain_and_reduction_limit() {
        assert!(generalized_choi(3, 3).is_err());
        assert!(generalized_choi(1, 0).is_err());
        // k = d-1 reproduces the reduction map
        for d in [3usize, 4] {
            let gen = generalized_choi(d, d - 1).unwrap();
            let red = reduction(d).unwrap();
            assert!(max_abs_diff(&choi_matrix(&gen), &choi_matrix(&red)) <= 1e-12);
        }
        // k = 0 gives a CP full map
        let gen = generalized_choi(3, 0).unwrap();
        assert!(is_completely_positive(&choi_matrix(&gen), 1e-9));
    }

    #[test]
    fn transposition_with_unitary_conjugation() {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let u = haar_unitary(3, &mut rng);
        let dec = transposition(3, Some(&u)).unwrap();
        let tf = dec.trace_form().unwrap();
        assert_abs_diff_eq!(tf.eta, 2.0, epsilon = 1e-10);
        let x = random_hermitian(3, &mut rng);
        let img = apply_positive_map(&dec, &x).unwrap();
        let want = HermitianMatrix::hermitize(tau_u(&u, x.as_matrix())).unwrap();
        assert!(max_abs_diff(&img, &want) <= 1e-10);
        // non-unitary conjugation rejected
        let bad = &u * Complex64::new(2.0, 0.0);
        assert!(transposition(3, Some(&bad)).is_err());
    }

    #[test]
    fn kraus_map_validation_and_scaling() {
        assert!(KrausMap::new(3, vec![]).is_err());
        assert!(KrausMap::new(3, vec![CMatrix::zeros(2, 2)]).is_err());
        let wh = werner_holevo(4).unwrap();
        let half = wh.lambda1().scale_map(0.5).unwrap();
        let c = choi_of_kraus(&half);
        let want = choi_of_kraus(wh.lambda1()).scale(0.5);
        let dev = (c.as_matrix() - want.as_matrix())
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()));
        assert!(dev <= 1e-12);
        assert!(wh.lambda1().scale_map(-1.0).is_err());
        assert!(KrausMap::zero(3).is_zero());
        assert!(!wh.lambda1().is_zero());
    }

    #[test]
    fn trace_form_metadata_is_validated() {
        // wrong eta rejected at construction
        let err = DecomposedMap::new(
            KrausMap::trace_map(3, 1.0),
            KrausMap::identity(3),
            "bogus",
            Some(TraceForm { xi: 1.0, eta: 2.0 }),
        );
        assert!(matches!(err, Err(SepmapError::Precondition(_))));
        // wrong xi rejected
        let err = DecomposedMap::new(
            KrausMap::identity(3),
            KrausMap::identity(3),
            "bogus",
            Some(TraceForm { xi: 1.0, eta: 1.0 }),
        );
        assert!(matches!(err, Err(SepmapError::Precondition(_))));
        // dimension mismatch rejected
        let err = DecomposedMap::new(KrausMap::identity(3), KrausMap::identity(2), "bogus", None);
        assert!(matches!(err, Err(SepmapError::DimensionMismatch { .. })));
    }

    #[test]
    fn extended_application_detects_entanglement_sign() {
        // reduction criterion on an isotropic state: entangled for p > 1/(d+1)
        let d = 3;
        let red = reduction(d).unwrap();
        for (p, expect_negative) in [(0.2, false), (0.6, true)] {
            let rho = isotropic_state(d, p).unwrap();
            let (t1, t2) = apply_extended(&red, &rho, Subsystem::B).unwrap();
            let lam_min = eig_hermitian(&(&t1 - &t2)).eigenvalue_min();
            assert_eq!(lam_min < -1e-9, expect_negative, "p = {p}");
        }
        // separable states stay positive under the extended Breuer-Hall map
        let bh = breuer_hall(4, None).unwrap();
        for seed in 0..3 {
            let rho = random_separable(4, 4, 6, seed).unwrap();
            let (t1, t2) = apply_extended(&bh, &rho, Subsystem::B).unwrap();
            let lam_min = eig_hermitian(&(&t1 - &t2)).eigenvalue_min();
            assert!(lam_min >= -1e-9, "seed {seed}: lambda_min = {lam_min:.3e}");
        }
        // partial transposes commute with sides: [T tensor I] rho vs rho^{T_A}
        let rho = isotropic_state(4, 0.9).unwrap();
        let tr4 = transposition(4, None).unwrap();
        let (t1, t2) = apply_extended(&tr4, &rho, Subsystem::A).unwrap();
        let diff = &t1 - &t2;
        let want = partial_transpose(rho.matrix(), 4, 4, Subsystem::A).unwrap();
        assert!(max_abs_diff(&diff, &want) <= 1e-10);
    }
}
