//! Dense complex Hermitian linear algebra: eigendecomposition, tensor and
//! partial operations, spectral matrix functions, norms.
//!
//! Composite index convention: on a `dA ⊗ dB` space the row/column index is
//! `i = i_A * dB + i_B` (subsystem A is the slow index).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SepmapError};

pub type CMatrix = DMatrix<Complex64>;

/// Relative Hermiticity tolerance: `1e-12 * max(1, max|entry|)`.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Relative PSD tolerance: a matrix counts as PSD when
/// `lambda_min >= -PSD_TOL * max(1, ||M||)`.
pub const PSD_TOL: f64 = 1e-9;
/// Relative rank cutoff for pseudo-powers: eigenvalues `<= RANK_CUTOFF * lambda_max`
/// are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-12;
/// Relative spectral-reconstruction tolerance.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;
/// Relative gap below which neighbouring eigenvalues count as degenerate for
/// the deterministic eigenvector ordering.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Label for the two subsystems of a bipartite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

impl Subsystem {
    pub fn other(self) -> Subsystem {
        match self {
            Subsystem::A => Subsystem::B,
            Subsystem::B => Subsystem::A,
        }
    }
}

impl std::str::FromStr for Subsystem {
    type Err = SepmapError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Subsystem::A),
            "B" => Ok(Subsystem::B),
            other => Err(SepmapError::InvalidParameter {
                name: "subsystem",
                reason: format!("expected A or B, got `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for Subsystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Subsystem::A => write!(f, "A"),
            Subsystem::B => write!(f, "B"),
        }
    }
}

/// Dense complex square matrix with a validated Hermiticity contract.
///
/// The universal carrier for states, reduced states, Choi matrices, map
/// outputs and witnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    data: CMatrix,
}

impl HermitianMatrix {
    /// Validates squareness and Hermiticity within
    /// `1e-12 * max(1, max|entry|)`.
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(SepmapError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        let scale = data
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
            .max(1.0);
        let tol = HERMITICITY_TOL * scale;
        let mut max_dev = 0.0_f64;
        for i in 0..data.nrows() {
            for j in i..data.ncols() {
                let dev = (data[(i, j)] - data[(j, i)].conj()).norm();
                max_dev = max_dev.max(dev);
            }
        }
        if max_dev > tol {
            return Err(SepmapError::NotHermitian { max_dev, tol });
        }
        Ok(Self { data })
    }

    /// Builds from data that is Hermitian by construction (permutations,
    /// index re-labellings, real-linear combinations of Hermitian inputs).
    pub(crate) fn from_hermitian_unchecked(data: CMatrix) -> Self {
        debug_assert!(
            Self::new(data.clone()).is_ok(),
            "from_hermitian_unchecked received non-Hermitian data"
        );
        Self { data }
    }

    /// Symmetrizes `(M + M†)/2` and wraps; for operation results that are
    /// Hermitian up to floating-point roundoff (conjugations, Kraus sums).
    pub fn hermitize(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(SepmapError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        let sym = (&data + data.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(Self { data: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: CMatrix::zeros(dim, dim),
        }
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = CMatrix::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(x, 0.0);
        }
        Self { data: m }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    /// Trace (real by Hermiticity).
    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    pub fn scale(&self, r: f64) -> Self {
        Self {
            data: &self.data * Complex64::new(r, 0.0),
        }
    }

    /// `max |entry|`, used for relative tolerances.
    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// Checks positive semidefiniteness: `lambda_min >= -tol_rel * max(1, ||M||)`.
    pub fn check_psd(&self, tol_rel: f64) -> Result<()> {
        let spec = eig_hermitian(self);
        let lambda_min = *spec.eigenvalues().last().expect("dim >= 1");
        let scale = spec.norm_scale();
        let tol = tol_rel * scale;
        if lambda_min < -tol {
            Err(SepmapError::NotPositiveSemidefinite { lambda_min, tol })
        } else {
            Ok(())
        }
    }

    pub fn is_psd(&self, tol_rel: f64) -> bool {
        self.check_psd(tol_rel).is_ok()
    }
}

impl std::ops::Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix::from_hermitian_unchecked(&self.data + &rhs.data)
    }
}

impl std::ops::Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix::from_hermitian_unchecked(&self.data - &rhs.data)
    }
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues sorted
/// descending with orthonormal eigenvectors in matching column order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalue_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn eigenvalue_min(&self) -> f64 {
        *self.eigenvalues.last().expect("dim >= 1")
    }

    /// `max(1, max|lambda|)` — the scale used by relative tolerances.
    pub fn norm_scale(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(0.0_f64, |acc, &x| acc.max(x.abs()))
            .max(1.0)
    }

    /// Assembles `sum_k f(lambda_k) |v_k><v_k|`.
    pub fn assemble(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.len();
        let mut out = CMatrix::zeros(n, n);
        for k in 0..n {
            let w = f(self.eigenvalues[k]);
            if w == 0.0 {
                continue;
            }
            let v = self.eigenvectors.column(k);
            for i in 0..n {
                let wi = v[i] * w;
                for j in 0..n {
                    out[(i, j)] += wi * v[j].conj();
                }
            }
        }
        HermitianMatrix::hermitize(out).expect("assemble output is square")
    }
}

fn phase_normalize_column(vecs: &mut CMatrix, col: usize) {
    let n = vecs.nrows();
    let mut pivot = None;
    for i in 0..n {
        if vecs[(i, col)].norm() > 1e-8 {
            pivot = Some(i);
            break;
        }
    }
    if let Some(i) = pivot {
        let z = vecs[(i, col)];
        let phase = z / z.norm();
        let corr = phase.conj();
        for r in 0..n {
            vecs[(r, col)] *= corr;
        }
        // Pin the pivot exactly real.
        vecs[(i, col)] = Complex64::new(vecs[(i, col)].re, 0.0);
    }
}

fn lex_less(vecs: &CMatrix, a: usize, b: usize) -> bool {
    for i in 0..vecs.nrows() {
        let (x, y) = (vecs[(i, a)], vecs[(i, b)]);
        if x.re != y.re {
            return x.re < y.re;
        }
        if x.im != y.im {
            return x.im < y.im;
        }
    }
    false
}

/// Eigendecomposition with deterministic ordering: descending eigenvalues;
/// within blocks degenerate to `1e-10 * max(1, ||M||)` each eigenvector is
/// phase-normalized (first component of magnitude > 1e-8 made real positive)
/// and the block's vectors are sorted by lexicographic comparison of their
/// component sequences (Re then Im at each index). Eigenvalues keep their
/// globally descending order; within a block the lambda<->v pairing follows
/// the lexicographic vector order (exact to the degeneracy tolerance).
///
/// Backed by faer's self-adjoint solver: nalgebra's `symmetric_eigen`
/// mispairs eigenvalues and eigenvectors on some degenerate structured
/// Hermitian matrices (for both the complex path and the equivalent
/// `[[A, -B], [B, A]]` real embedding), which faer handles exactly.
pub fn eig_hermitian(m: &HermitianMatrix) -> Spectrum {
    let n = m.dim();
    if n == 0 {
        return Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: CMatrix::zeros(0, 0),
        };
    }
    let src = m.as_matrix();
    let fm = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| {
        faer::c64::new(src[(i, j)].re, src[(i, j)].im)
    });
    let evd = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("self-adjoint eigendecomposition converges for Hermitian input");
    let u = evd.U();
    let s = evd.S();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        s[b].re
            .partial_cmp(&s[a].re)
            .expect("Hermitian eigenvalues are finite")
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&k| s[k].re).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, c)] = Complex64::new(u[(r, k)].re, u[(r, k)].im);
        }
    }
    for c in 0..n {
        phase_normalize_column(&mut eigenvectors, c);
    }

    // Deterministic ordering inside degenerate blocks.
    let scale = eigenvalues
        .iter()
        .fold(0.0_f64, |acc, &x| acc.max(x.abs()))
        .max(1.0);
    let tol = DEGENERACY_TOL * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eigenvalues[end - 1] - eigenvalues[end]).abs() <= tol {
            end += 1;
        }
        if end - start > 1 {
            let mut block: Vec<usize> = (start..end).collect();
            block.sort_by(|&a, &b| {
                if lex_less(&eigenvectors, a, b) {
                    std::cmp::Ordering::Less
                } else if lex_less(&eigenvectors, b, a) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            });
            let cols: Vec<_> = block
                .iter()
                .map(|&c| eigenvectors.column(c).into_owned())
                .collect();
            for (offset, col) in cols.iter().enumerate() {
                eigenvectors.set_column(start + offset, col);
            }
        }
        start = end;
    }

    Spectrum {
        eigenvalues,
        eigenvectors,
    }
}

/// Kronecker product with subsystem A as the slow index.
pub fn tensor(a: &HermitianMatrix, b: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix::from_hermitian_unchecked(a.as_matrix().kronecker(b.as_matrix()))
}

fn check_bipartite_dims(m: &HermitianMatrix, d_a: usize, d_b: usize) -> Result<()> {
    if d_a == 0 || d_b == 0 || d_a * d_b != m.dim() {
        return Err(SepmapError::DimensionMismatch {
            context: format!(
                "matrix dim {} does not factor as dA*dB = {}*{}",
                m.dim(),
                d_a,
                d_b
            ),
        });
    }
    Ok(())
}

/// Reduced matrix on the kept subsystem; preserves the trace.
pub fn partial_trace(
    m: &HermitianMatrix,
    d_a: usize,
    d_b: usize,
    keep: Subsystem,
) -> Result<HermitianMatrix> {
    check_bipartite_dims(m, d_a, d_b)?;
    let src = m.as_matrix();
    let out = match keep {
        Subsystem::A => {
            let mut out = CMatrix::zeros(d_a, d_a);
            for ia in 0..d_a {
                for ja in 0..d_a {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for b in 0..d_b {
                        acc += src[(ia * d_b + b, ja * d_b + b)];
                    }
                    out[(ia, ja)] = acc;
                }
            }
            out
        }
        Subsystem::B => {
            let mut out = CMatrix::zeros(d_b, d_b);
            for ib in 0..d_b {
                for jb in 0..d_b {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..d_a {
                        acc += src[(a * d_b + ib, a * d_b + jb)];
                    }
                    out[(ib, jb)] = acc;
                }
            }
            out
        }
    };
    Ok(HermitianMatrix::from_hermitian_unchecked(out))
}

/// Block transpose on the named subsystem; an involution that preserves
/// Hermiticity and the trace.
pub fn partial_transpose(
    m: &HermitianMatrix,
    d_a: usize,
    d_b: usize,
    side: Subsystem,
) -> Result<HermitianMatrix> {
    check_bipartite_dims(m, d_a, d_b)?;
    let src = m.as_matrix();
    let dim = d_a * d_b;
    let mut out = CMatrix::zeros(dim, dim);
    for a in 0..d_a {
        for b in 0..d_a {
            for i in 0..d_b {
                for j in 0..d_b {
                    let (r, c) = (a * d_b + i, b * d_b + j);
                    let (sr, sc) = match side {
                        Subsystem::B => (a * d_b + j, b * d_b + i),
                        Subsystem::A => (b * d_b + i, a * d_b + j),
                    };
                    out[(r, c)] = src[(sr, sc)];
                }
            }
        }
    }
    Ok(HermitianMatrix::from_hermitian_unchecked(out))
}

/// Spectral power `lambda -> lambda^r` on the support.
///
/// - integer `r >= 1`: plain spectral power, valid for any Hermitian input;
/// - `r = 0`: support projector (`0^0 := 0` convention);
/// - fractional or negative `r`: requires PSD input within tolerance;
///   eigenvalues `<= 1e-12 * lambda_max` map to 0 (pseudo-power).
///   Negative `r` on a singular matrix requires `use_pseudoinverse`.
pub fn matrix_power(m: &HermitianMatrix, r: f64, use_pseudoinverse: bool) -> Result<HermitianMatrix> {
    let spec = eig_hermitian(m);
    let is_nonneg_int = r >= 0.0 && r.fract() == 0.0;
    if is_nonneg_int && r >= 1.0 {
        return Ok(spec.assemble(|x| x.powi(r as i32)));
    }

    let scale = spec.norm_scale();
    let lambda_min = spec.eigenvalue_min();
    if lambda_min < -PSD_TOL * scale {
        return Err(SepmapError::Domain {
            op: "matrix_power",
            reason: format!(
                "fractional/negative power of a matrix with negative eigenvalue {lambda_min:.6e}"
            ),
        });
    }
    let lambda_max = spec.eigenvalue_max().max(0.0);
    let cutoff = RANK_CUTOFF * lambda_max;

    if r == 0.0 {
        return Ok(spec.assemble(|x| if x > cutoff { 1.0 } else { 0.0 }));
    }
    if r < 0.0 {
        let singular = spec.eigenvalues().iter().any(|&x| x <= cutoff);
        if singular && !use_pseudoinverse {
            return Err(SepmapError::Domain {
                op: "matrix_power",
                reason: "negative power of a singular matrix requires the pseudoinverse flag"
                    .to_string(),
            });
        }
    }
    Ok(spec.assemble(|x| if x <= cutoff { 0.0 } else { x.powf(r) }))
}

/// Largest absolute eigenvalue.
pub fn operator_norm(m: &HermitianMatrix) -> f64 {
    let spec = eig_hermitian(m);
    spec.eigenvalue_max()
        .abs()
        .max(spec.eigenvalue_min().abs())
}

/// Projector onto the span of eigenvectors with `lambda > cutoff * lambda_max`.
pub fn support_projector(m: &HermitianMatrix, cutoff: f64) -> HermitianMatrix {
    let spec = eig_hermitian(m);
    let lambda_max = spec.eigenvalue_max().max(0.0);
    let threshold = cutoff * lambda_max;
    spec.assemble(|x| if x > threshold { 1.0 } else { 0.0 })
}
