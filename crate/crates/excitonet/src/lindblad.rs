//! Lindblad generator on the vacuum + single-excitation space and its
//! stationary state.
//!
//! The Hilbert space is spanned by the shared ground state (index 0) and
//! one state per excited site (index `j` for site `j`, `1..=N`). Pump,
//! recombination, and sink enter as projected jump operators on this
//! space; in particular the pump raising operator acts only out of the
//! ground state, which keeps the truncated generator trace preserving and
//! completely positive.
//!
//! Superoperators use row-major vectorization, `vec(rho)[i*d + j] =
//! rho_ij`, so `vec(A rho B) = (A kron B^T) vec(rho)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Error;
use crate::network::{Hamiltonian, RateSet};
use crate::Result;

/// Residual bound accepted for a stationary solve.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Required ratio between the two smallest singular values of the
/// generator; anything less flags a non-unique kernel.
pub const KERNEL_GAP_MIN_RATIO: f64 = 1e6;
/// Most negative state eigenvalue tolerated before a solve is rejected.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Allowed deviation of the state trace from one.
pub const TRACE_TOL: f64 = 1e-12;

/// Unit-trace Hermitian state on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    /// Hilbert-space dimension, `n_sites + 1`.
    pub dim: usize,
    pub matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(DensityMatrix {
            dim: matrix.nrows(),
            matrix,
        })
    }

    /// Ground-state projector `|0><0|`.
    pub fn pure_ground(dim: usize) -> Self {
        let mut matrix = DMatrix::<Complex64>::zeros(dim, dim);
        matrix[(0, 0)] = Complex64::new(1.0, 0.0);
        DensityMatrix { dim, matrix }
    }

    pub fn n_sites(&self) -> usize {
        self.dim - 1
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Population of excited site `j` (1-based site label).
    pub fn site_population(&self, j: usize) -> f64 {
        self.matrix[(j, j)].re
    }

    pub fn ground_population(&self) -> f64 {
        self.matrix[(0, 0)].re
    }

    /// Total single-excitation weight, `sum_j rho_jj` over excited sites.
    pub fn excited_weight(&self) -> f64 {
        (1..self.dim).map(|j| self.matrix[(j, j)].re).sum()
    }

    /// Largest absolute deviation from Hermitian symmetry.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let d = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                defect = defect.max(d);
            }
        }
        defect / 2.0
    }

    /// Smallest eigenvalue; the state is positive semidefinite up to
    /// numerical noise when this is above `-POSITIVITY_TOL`.
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = self.matrix.clone().symmetric_eigen();
        eig.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Which incoherent channel a jump operator implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    /// Pump raising on site 1, projected to act out of the ground state.
    Injection,
    /// Pump-induced emission, lowering on site 1.
    Emission,
    /// Recombination lowering on the given site (1-based).
    Recombination(usize),
    /// Sink lowering on site N.
    Sink,
    /// Pure dephasing on the given site (1-based).
    Dephasing(usize),
}

/// One weighted jump operator, `matrix = sqrt(rate) * op`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub kind: JumpKind,
    pub rate: f64,
    pub matrix: DMatrix<Complex64>,
}

fn lowering(dim: usize, site: usize, weight: f64) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    m[(0, site)] = Complex64::new(weight, 0.0);
    m
}

/// Builds the weighted jump operators for `n_sites` sites. Channels with
/// zero rate are omitted.
///
/// Dephasing uses the per-site parity operator, `+1` on the site's excited
/// state and `-1` on every other basis state: inter-site coherences then
/// decay at `4 * gamma_deph` and ground-excited coherences at
/// `2 * gamma_deph`, while populations are untouched.
pub fn build_jump_operators(n_sites: usize, rates: &RateSet) -> Result<Vec<JumpOperator>> {
    if n_sites < 2 {
        return Err(Error::TooFewSites {
            min: 2,
            got: n_sites,
        });
    }
    rates.validate()?;
    let dim = n_sites + 1;
    let mut ops = Vec::new();

    if rates.gamma_in > 0.0 {
        let w = rates.gamma_in.sqrt();
        let mut raise = DMatrix::<Complex64>::zeros(dim, dim);
        raise[(1, 0)] = Complex64::new(w, 0.0);
        ops.push(JumpOperator {
            kind: JumpKind::Injection,
            rate: rates.gamma_in,
            matrix: raise,
        });
        ops.push(JumpOperator {
            kind: JumpKind::Emission,
            rate: rates.gamma_in,
            matrix: lowering(dim, 1, w),
        });
    }
    if rates.gamma_rec > 0.0 {
        let w = rates.gamma_rec.sqrt();
        for site in 1..=n_sites {
            ops.push(JumpOperator {
                kind: JumpKind::Recombination(site),
                rate: rates.gamma_rec,
                matrix: lowering(dim, site, w),
            });
        }
    }
    if rates.gamma_out > 0.0 {
        ops.push(JumpOperator {
            kind: JumpKind::Sink,
            rate: rates.gamma_out,
            matrix: lowering(dim, n_sites, rates.gamma_out.sqrt()),
        });
    }
    if rates.gamma_deph > 0.0 {
        let w = rates.gamma_deph.sqrt();
        for site in 1..=n_sites {
            let mut z = DMatrix::<Complex64>::zeros(dim, dim);
            for b in 0..dim {
                let sign = if b == site { w } else { -w };
                z[(b, b)] = Complex64::new(sign, 0.0);
            }
            ops.push(JumpOperator {
                kind: JumpKind::Dephasing(site),
                rate: rates.gamma_deph,
                matrix: z,
            });
        }
    }
    Ok(ops)
}

/// Dense generator matrix acting on row-major vectorized states.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    /// Hilbert-space dimension `d`; the matrix is `d^2 x d^2`.
    pub dim: usize,
    pub matrix: DMatrix<Complex64>,
    pub jumps: Vec<JumpOperator>,
}

/// Row-major vectorization.
pub fn vectorize(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    let d = m.nrows();
    DVector::from_fn(d * d, |k, _| m[(k / d, k % d)])
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &DVector<Complex64>, dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |i, j| v[i * dim + j])
}

/// Embeds the site-basis Hamiltonian into the truncated space: zero on
/// the ground state, couplings on the excited block.
pub fn embed_hamiltonian(h: &Hamiltonian) -> DMatrix<Complex64> {
    let dim = h.n_sites + 1;
    let mut out = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..h.n_sites {
        for j in 0..h.n_sites {
            out[(i + 1, j + 1)] = Complex64::new(h.matrix[(i, j)], 0.0);
        }
    }
    out
}

/// Assembles the dense generator for an embedded Hamiltonian and a set of
/// weighted jump operators, all on the same Hilbert space.
pub fn liouvillian_from_parts(
    h_embedded: &DMatrix<Complex64>,
    jumps: Vec<JumpOperator>,
) -> Result<Liouvillian> {
    let dim = h_embedded.nrows();
    if h_embedded.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: h_embedded.ncols(),
        });
    }
    let eye = DMatrix::<Complex64>::identity(dim, dim);
    let minus_i = Complex64::new(0.0, -1.0);
    let mut matrix =
        (h_embedded.kronecker(&eye) - eye.kronecker(&h_embedded.transpose())).map(|z| minus_i * z);
    let half = Complex64::new(0.5, 0.0);
    for jump in &jumps {
        if jump.matrix.nrows() != dim || jump.matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: jump.matrix.nrows(),
            });
        }
        let a = &jump.matrix;
        let ada = a.adjoint() * a;
        matrix += a.kronecker(&a.map(|z| z.conj()));
        matrix -= (ada.kronecker(&eye) + eye.kronecker(&ada.transpose())).map(|z| half * z);
    }
    Ok(Liouvillian { dim, matrix, jumps })
}

/// Generator for a network Hamiltonian and rate set on the truncated
/// space.
pub fn build_liouvillian(h: &Hamiltonian, jumps: Vec<JumpOperator>) -> Result<Liouvillian> {
    liouvillian_from_parts(&embed_hamiltonian(h), jumps)
}

impl Liouvillian {
    /// Applies the generator to a state, returning `d rho / dt`.
    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim)
    }

    /// Frobenius norm of the generator applied to a state.
    pub fn residual_norm(&self, rho: &DMatrix<Complex64>) -> f64 {
        (&self.matrix * vectorize(rho)).norm()
    }
}

/// Knobs for [`steady_state_with`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Verify via SVD that the generator kernel is one-dimensional. Costs
    /// an SVD of the full generator; disable only where a separate
    /// argument guarantees uniqueness.
    pub check_kernel_gap: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            check_kernel_gap: true,
        }
    }
}

/// Stationary state of the generator, with full validation.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(l, SolveOptions::default())
}

/// Solves `L rho = 0, tr rho = 1` by replacing the generator row for the
/// (0,0) element with the trace constraint and LU-factoring the dense
/// system. The result is hermitized, then checked: trace within
/// `TRACE_TOL`, residual within `RESIDUAL_TOL`, eigenvalues above
/// `-POSITIVITY_TOL`, and (optionally) a kernel gap of at least
/// `KERNEL_GAP_MIN_RATIO` between the two smallest singular values.
pub fn steady_state_with(l: &Liouvillian, options: SolveOptions) -> Result<DensityMatrix> {
    let d = l.dim;
    let d2 = d * d;
    let mut system = l.matrix.clone();
    for col in 0..d2 {
        system[(0, col)] = Complex64::new(0.0, 0.0);
    }
    for i in 0..d {
        system[(0, i * d + i)] = Complex64::new(1.0, 0.0);
    }
    let mut rhs = DVector::<Complex64>::zeros(d2);
    rhs[0] = Complex64::new(1.0, 0.0);

    let solution = system.lu().solve(&rhs).ok_or(Error::SingularSystem(
        "trace-replaced generator is singular",
    ))?;
    let raw = unvectorize(&solution, d);
    let rho = (&raw + raw.adjoint()).map(|z| 0.5 * z);

    let trace_defect = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
    if trace_defect > TRACE_TOL {
        return Err(Error::TraceDefect {
            defect: trace_defect,
        });
    }
    let residual = l.residual_norm(&rho);
    if residual > RESIDUAL_TOL {
        return Err(Error::ResidualTooLarge {
            residual,
            limit: RESIDUAL_TOL,
        });
    }
    let state = DensityMatrix {
        dim: d,
        matrix: rho,
    };
    let min_eig = state.min_eigenvalue();
    if min_eig < -POSITIVITY_TOL {
        return Err(Error::NotPositive {
            eigenvalue: min_eig,
            limit: POSITIVITY_TOL,
        });
    }
    if options.check_kernel_gap {
        let ratio = kernel_gap_ratio(l);
        if !(ratio >= KERNEL_GAP_MIN_RATIO) {
            return Err(Error::DegenerateKernel {
                ratio,
                limit: KERNEL_GAP_MIN_RATIO,
            });
        }
    }
    Ok(state)
}

/// Ratio of the second-smallest to smallest singular value of the
/// generator. Large values certify a one-dimensional kernel.
pub fn kernel_gap_ratio(l: &Liouvillian) -> f64 {
    let svd = l.matrix.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smallest = sv[sv.len() - 1];
    let second = sv[sv.len() - 2];
    second / smallest
}

/// Excitation fluxes through the pump, recombination, and sink channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxTriple {
    pub j_in: f64,
    pub j_rec: f64,
    pub j_out: f64,
}

/// Channel-resolved excitation number fluxes.
///
/// On the truncated space the pump only acts out of the ground state, so
/// its net flux is `gamma_in * (rho_00 - rho_11)`; with that form the
/// stationary balance `j_in = j_rec + j_out` holds to solver precision.
pub fn fluxes(rho: &DensityMatrix, rates: &RateSet) -> FluxTriple {
    let n = rho.n_sites();
    let j_in = rates.gamma_in * (rho.ground_population() - rho.site_population(1));
    let j_rec = rates.gamma_rec * rho.excited_weight();
    let j_out = rates.gamma_out * rho.site_population(n);
    FluxTriple { j_in, j_rec, j_out }
}

/// Stationary transport efficiency: sink flux over maximum pump flux,
/// `(gamma_out / gamma_in) * rho_NN`.
pub fn stationary_efficiency(rho: &DensityMatrix, rates: &RateSet) -> Result<f64> {
    if !(rates.gamma_in > 0.0) {
        return Err(Error::NonPositive {
            name: "gamma_in",
            value: rates.gamma_in,
        });
    }
    Ok(rates.gamma_out * rho.site_population(rho.n_sites()) / rates.gamma_in)
}
