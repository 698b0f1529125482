//! Constructors for the bipartite state families and random separable
//! states.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Dirichlet, Distribution, StandardNormal};

use crate::error::{Result, SepmapError};
use crate::matrix::{
    partial_trace, partial_transpose, CMatrix, HermitianMatrix, Subsystem, PSD_TOL,
};

/// Density matrix on a `dA ⊗ dB` space: unit trace within 1e-12 and PSD
/// within tolerance.
#[derive(Debug, Clone)]
pub struct BipartiteState {
    matrix: HermitianMatrix,
    d_a: usize,
    d_b: usize,
}

impl BipartiteState {
    pub fn new(matrix: HermitianMatrix, d_a: usize, d_b: usize) -> Result<Self> {
        if d_a * d_b != matrix.dim() || d_a == 0 || d_b == 0 {
            return Err(SepmapError::DimensionMismatch {
                context: format!(
                    "state dim {} does not factor as {}*{}",
                    matrix.dim(),
                    d_a,
                    d_b
                ),
            });
        }
        if (matrix.trace() - 1.0).abs() > 1e-12 {
            return Err(SepmapError::Precondition(format!(
                "state trace must be 1, got {:.15}",
                matrix.trace()
            )));
        }
        matrix.check_psd(PSD_TOL)?;
        Ok(Self { matrix, d_a, d_b })
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    pub fn dim(&self) -> usize {
        self.d_a * self.d_b
    }

    /// Dimension of the named subsystem.
    pub fn dim_of(&self, side: Subsystem) -> usize {
        match side {
            Subsystem::A => self.d_a,
            Subsystem::B => self.d_b,
        }
    }

    pub fn partial_trace(&self, keep: Subsystem) -> HermitianMatrix {
        partial_trace(&self.matrix, self.d_a, self.d_b, keep)
            .expect("dimensions validated at construction")
    }

    pub fn partial_transpose(&self, side: Subsystem) -> HermitianMatrix {
        partial_transpose(&self.matrix, self.d_a, self.d_b, side)
            .expect("dimensions validated at construction")
    }
}

// ---------------------------------------------------------------------------
// Clebsch–Gordan machinery (Racah closed form, half-integers as doubled ints)
// ---------------------------------------------------------------------------

fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0, "factorial of negative argument");
    (1..=n).map(|k| k as f64).product()
}

/// Clebsch–Gordan coefficient `<j1 m1 j2 m2 | J M>` with all angular momenta
/// passed as twice their value (so half-integers stay exact).
fn clebsch_gordan(tj1: i64, tm1: i64, tj2: i64, tm2: i64, tj: i64, tm: i64) -> f64 {
    if tm1 + tm2 != tm
        || tj > tj1 + tj2
        || tj < (tj1 - tj2).abs()
        || (tj1 + tj2 + tj) % 2 != 0
        || tm1.abs() > tj1
        || tm2.abs() > tj2
        || tm.abs() > tj
    {
        return 0.0;
    }
    let h = |x: i64| -> i64 {
        debug_assert!(x % 2 == 0);
        x / 2
    };
    let pref = ((tj + 1) as f64 * factorial(h(tj1 + tj2 - tj)) * factorial(h(tj + tj1 - tj2))
        / factorial(h(tj1 + tj2 + tj) + 1)
        * factorial(h(tj - tj1 + tj2)))
    .sqrt()
        * (factorial(h(tj + tm))
            * factorial(h(tj - tm))
            * factorial(h(tj1 - tm1))
            * factorial(h(tj1 + tm1))
            * factorial(h(tj2 - tm2))
            * factorial(h(tj2 + tm2)))
        .sqrt();
    let k_min = 0
        .max(-h(tj - tj2 + tm1))
        .max(-h(tj - tj1 - tm2));
    let k_max = h(tj1 + tj2 - tj)
        .min(h(tj1 - tm1))
        .min(h(tj2 + tm2));
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign
            / (factorial(k)
                * factorial(h(tj1 + tj2 - tj) - k)
                * factorial(h(tj1 - tm1) - k)
                * factorial(h(tj2 + tm2) - k)
                * factorial(h(tj - tj2 + tm1) + k)
                * factorial(h(tj - tj1 - tm2) + k));
    }
    pref * sum
}

/// Projectors onto total-angular-momentum eigenspaces of a `j1 ⊗ j2` system.
#[derive(Debug, Clone)]
pub struct AngularMomentumProjectors {
    pub j1: f64,
    pub j2: f64,
    /// `(J, P_J)` for `J = |j1-j2| .. j1+j2` in increasing order.
    pub projectors: Vec<(f64, HermitianMatrix)>,
}

fn to_doubled(name: &'static str, j: f64) -> Result<i64> {
    let t = 2.0 * j;
    if j < 0.0 || (t - t.round()).abs() > 1e-9 {
        return Err(SepmapError::InvalidParameter {
            name,
            reason: format!("expected a nonnegative half-integer, got {j}"),
        });
    }
    Ok(t.round() as i64)
}

/// Builds `P_J` from Clebsch–Gordan coupled states
/// `|J,M> = sum CG |m1>|m2>`. The local basis index for `|m>` is
/// `(j - m)` (so `m = j` maps to 0).
pub fn angular_momentum_projectors(j1: f64, j2: f64) -> Result<AngularMomentumProjectors> {
    let tj1 = to_doubled("j1", j1)?;
    let tj2 = to_doubled("j2", j2)?;
    let d1 = (tj1 + 1) as usize;
    let d2 = (tj2 + 1) as usize;
    let dim = d1 * d2;
    let mut projectors = Vec::new();
    let mut tj = (tj1 - tj2).abs();
    while tj <= tj1 + tj2 {
        let mut p = CMatrix::zeros(dim, dim);
        let mut tm = -tj;
        while tm <= tj {
            // build |J,M> in the product basis
            let mut v = vec![Complex64::new(0.0, 0.0); dim];
            let mut tm1 = -tj1;
            while tm1 <= tj1 {
                let tm2 = tm - tm1;
                if tm2.abs() <= tj2 {
                    let cg = clebsch_gordan(tj1, tm1, tj2, tm2, tj, tm);
                    if cg != 0.0 {
                        let i1 = ((tj1 - tm1) / 2) as usize;
                        let i2 = ((tj2 - tm2) / 2) as usize;
                        v[i1 * d2 + i2] = Complex64::new(cg, 0.0);
                    }
                }
                tm1 += 2;
            }
            for (r, &vr) in v.iter().enumerate() {
                if vr.norm() == 0.0 {
                    continue;
                }
                for (c, &vc) in v.iter().enumerate() {
                    p[(r, c)] += vr * vc.conj();
                }
            }
            tm += 2;
        }
        projectors.push((tj as f64 / 2.0, HermitianMatrix::hermitize(p)?));
        tj += 2;
    }
    Ok(AngularMomentumProjectors {
        j1,
        j2,
        projectors,
    })
}

fn rot_projectors() -> &'static AngularMomentumProjectors {
    static CACHE: OnceLock<AngularMomentumProjectors> = OnceLock::new();
    CACHE.get_or_init(|| {
        angular_momentum_projectors(1.5, 1.5).expect("(3/2, 3/2) projectors always valid")
    })
}

/// Rotationally invariant `4 ⊗ 4` state
/// `rho = p P_0/1 + q P_1/3 + r P_2/5 + s P_3/7` (each projector divided by
/// its eigenspace dimension `2J+1`); both marginals are maximally mixed.
pub fn rot_invariant_state(p: f64, q: f64, r: f64, s: f64) -> Result<BipartiteState> {
    let w = [p, q, r, s];
    if w.iter().any(|&x| x < -1e-12) {
        return Err(SepmapError::InvalidParameter {
            name: "weights",
            reason: format!("weights must be nonnegative, got ({p}, {q}, {r}, {s})"),
        });
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(SepmapError::InvalidParameter {
            name: "weights",
            reason: format!("weights must sum to 1, got {sum:.15}"),
        });
    }
    let proj = rot_projectors();
    let mut m = CMatrix::zeros(16, 16);
    for ((j, pj), &wj) in proj.projectors.iter().zip(&w) {
        let dim_j = 2.0 * j + 1.0;
        m += pj.as_matrix() * Complex64::new(wj / dim_j, 0.0);
    }
    BipartiteState::new(HermitianMatrix::hermitize(m)?, 4, 4)
}

/// Maximally entangled projector `P+ = (1/d) sum_{ij} |ii><jj|`.
pub fn max_entangled_projector(d: usize) -> HermitianMatrix {
    let dim = d * d;
    let mut m = CMatrix::zeros(dim, dim);
    let w = Complex64::new(1.0 / d as f64, 0.0);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = w;
        }
    }
    HermitianMatrix::from_hermitian_unchecked(m)
}

/// Isotropic state `p P+ + (1-p) I/d^2` on `d ⊗ d`;
/// PSD exactly for `p` in `[-1/(d^2-1), 1]`.
pub fn isotropic_state(d: usize, p: f64) -> Result<BipartiteState> {
    if d < 2 {
        return Err(SepmapError::InvalidParameter {
            name: "d",
            reason: format!("isotropic state needs d >= 2, got {d}"),
        });
    }
    let lo = -1.0 / (d * d - 1) as f64;
    if !(lo..=1.0).contains(&p) {
        return Err(SepmapError::InvalidParameter {
            name: "p",
            reason: format!("p = {p} outside the PSD range [{lo:.6}, 1]"),
        });
    }
    let dim = d * d;
    let m = max_entangled_projector(d).scale(p).as_matrix()
        + CMatrix::identity(dim, dim) * Complex64::new((1.0 - p) / dim as f64, 0.0);
    BipartiteState::new(HermitianMatrix::hermitize(m)?, d, d)
}

/// Two-qubit family `q |Psi1><Psi1| + (1-q) |Psi2><Psi2|` with
/// `|Psi1> = a|00> + sqrt(1-a^2)|11>`, `|Psi2> = a|10> + sqrt(1-a^2)|01>`.
/// Boundary values of `a` or `q` give separable states.
pub fn two_qubit_family(a: f64, q: f64) -> Result<BipartiteState> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&q) {
        return Err(SepmapError::InvalidParameter {
            name: "(a, q)",
            reason: format!("need a, q in [0, 1], got ({a}, {q})"),
        });
    }
    let b = (1.0 - a * a).sqrt();
    // |00>, |01>, |10>, |11> at indices 0..3
    let psi1 = [a, 0.0, 0.0, b];
    let psi2 = [0.0, b, a, 0.0];
    let mut m = CMatrix::zeros(4, 4);
    for (w, psi) in [(q, psi1), (1.0 - q, psi2)] {
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] += Complex64::new(w * psi[r] * psi[c], 0.0);
            }
        }
    }
    BipartiteState::new(HermitianMatrix::hermitize(m)?, 2, 2)
}

/// Haar-random pure state vector (normalized complex-normal vector — exactly
/// the Haar distribution on the sphere).
fn haar_vector(d: usize, rng: &mut ChaCha12Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..d)
        .map(|_| {
            Complex64::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            )
        })
        .collect();
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    v
}

/// Haar-random unitary via QR of a complex-normal matrix with the phases of
/// the R diagonal fixed.
pub fn haar_unitary(d: usize, rng: &mut ChaCha12Rng) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random separable state `sum_i p_i |a_i><a_i| ⊗ |b_i><b_i|` with
/// Haar-random pure factors and Dirichlet(1,...,1) weights; deterministic
/// under a fixed seed (ChaCha12 stream).
pub fn random_separable(d_a: usize, d_b: usize, terms: usize, seed: u64) -> Result<BipartiteState> {
    if terms == 0 {
        return Err(SepmapError::InvalidParameter {
            name: "terms",
            reason: "need at least one product term".to_string(),
        });
    }
    if d_a == 0 || d_b == 0 {
        return Err(SepmapError::InvalidParameter {
            name: "dims",
            reason: "subsystem dimensions must be positive".to_string(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let weights: Vec<f64> = if terms == 1 {
        vec![1.0]
    } else {
        Dirichlet::new(&vec![1.0; terms])
            .expect("valid Dirichlet parameters")
            .sample(&mut rng)
    };
    let dim = d_a * d_b;
    let mut m = CMatrix::zeros(dim, dim);
    for &w in &weights {
        let va = haar_vector(d_a, &mut rng);
        let vb = haar_vector(d_b, &mut rng);
        let prod: Vec<Complex64> = (0..dim)
            .map(|i| va[i / d_b] * vb[i % d_b])
            .collect();
        for r in 0..dim {
            let wr = prod[r] * w;
            for c in 0..dim {
                m[(r, c)] += wr * prod[c].conj();
            }
        }
    }
    BipartiteState::new(HermitianMatrix::hermitize(m)?, d_a, d_b)
}
