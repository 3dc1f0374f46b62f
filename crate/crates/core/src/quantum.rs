//! Finite-dimensional state vectors, Hermitian operators, and density
//! matrices. Operators validate Hermiticity at construction; eigensystems
//! come back in a canonical form (ascending eigenvalues, largest-magnitude
//! component of each vector rotated to the positive real axis, degenerate
//! groups ordered lexicographically) so downstream output is reproducible.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::C64;

/// Pure state in a d-dimensional Hilbert space. Not required to be
/// normalized: the trajectory engines track unnormalized vectors and their
/// squared norms carry statistical weight.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(CoreError::InvalidParameter(
                "state vector needs at least one amplitude".into(),
            ));
        }
        if amplitudes
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(CoreError::InvalidParameter(
                "state vector amplitudes must be finite".into(),
            ));
        }
        Ok(Self {
            amps: DVector::from_vec(amplitudes),
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    /// Basis state |k> in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(CoreError::InvalidParameter(format!(
                "basis index {k} out of range for dimension {dim}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[k] = C64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// <self|other>, antilinear in self.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm_squared();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(CoreError::ZeroNormState);
        }
        Ok(Self {
            amps: &self.amps / C64::new(n2.sqrt(), 0.0),
        })
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            amps: &self.amps * factor,
        }
    }

    /// Probability of outcome `k` in the given orthonormal basis, for the
    /// normalized version of this state.
    pub fn probability_in(&self, basis_vector: &Self) -> f64 {
        let n2 = self.norm_squared();
        if n2 == 0.0 {
            return 0.0;
        }
        basis_vector.inner(self).norm_sqr() / n2
    }

    pub(crate) fn as_dvector(&self) -> &DVector<C64> {
        &self.amps
    }

    pub(crate) fn from_dvector(amps: DVector<C64>) -> Self {
        Self { amps }
    }
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn matrix_scale(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|a| a.norm()).fold(0.0, f64::max).max(1.0)
}

/// Hermitian operator with validated symmetry. The raw matrix is kept
/// private so every instance seen downstream satisfies A = A^dagger.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    m: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(CoreError::DimensionMismatch {
                context: "operator matrix must be square and non-empty",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let dev = hermitian_deviation(&matrix);
        if dev > 1e-12 * matrix_scale(&matrix) {
            return Err(CoreError::NonHermitian { deviation: dev });
        }
        // Snap to exact Hermitian form so eigensolvers see a clean input.
        let sym = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { m: sym })
    }

    pub fn from_row_major(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(CoreError::DimensionMismatch {
                context: "row-major operator entries",
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(CoreError::InvalidParameter("empty diagonal".into()));
        }
        let d = diag.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim() != self.dim() {
            return Err(CoreError::DimensionMismatch {
                context: "operator applied to state",
                expected: self.dim(),
                got: state.dim(),
            });
        }
        Ok(StateVector::from_dvector(&self.m * state.as_dvector()))
    }

    /// <psi|A|psi> / <psi|psi>. Real by Hermiticity.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        let n2 = state.norm_squared();
        if n2 <= 0.0 {
            return Err(CoreError::ZeroNormState);
        }
        let ap = self.apply(state)?;
        Ok(state.inner(&ap).re / n2)
    }

    /// Frobenius norm of the commutator [self, other].
    pub fn commutator_norm(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimensionMismatch {
                context: "commutator",
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let c = &self.m * &other.m - &other.m * &self.m;
        Ok(c.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Eigenvalues (ascending) and orthonormal eigenvectors in canonical
    /// form. Within a degenerate group the basis is re-orthonormalized and
    /// ordered by rounded components, so repeated runs agree bit-for-bit.
    pub fn eigendecompose(&self) -> Result<(Vec<f64>, Vec<StateVector>)> {
        let eig = nalgebra::linalg::SymmetricEigen::new(self.m.clone());
        let d = self.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors: Vec<DVector<C64>> = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();

        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let group_tol = 1e-9 * scale;

        let mut start = 0;
        while start < d {
            let mut end = start + 1;
            while end < d && (values[end] - values[end - 1]).abs() <= group_tol {
                end += 1;
            }
            if end - start > 1 {
                // Modified Gram-Schmidt inside the degenerate group; the
                // solver's columns are orthonormal already, this guards
                // against roundoff drift between near-equal eigenvalues.
                for i in start..end {
                    for j in start..i {
                        let proj = vectors[j].dotc(&vectors[i]);
                        let prev = vectors[j].clone();
                        vectors[i] -= prev * proj;
                    }
                    let n = vectors[i].norm();
                    if n < 1e-12 {
                        return Err(CoreError::InvalidParameter(
                            "degenerate eigenspace lost rank during orthonormalization".into(),
                        ));
                    }
                    vectors[i] /= C64::new(n, 0.0);
                }
            }
            for v in vectors[start..end].iter_mut() {
                canonical_phase(v);
            }
            if end - start > 1 {
                vectors[start..end].sort_by_key(lex_key);
            }
            start = end;
        }

        Ok((
            values,
            vectors.into_iter().map(StateVector::from_dvector).collect(),
        ))
    }
}

/// Rotate so the largest-magnitude component is real and positive.
fn canonical_phase(v: &mut DVector<C64>) {
    let mut best = 0;
    let mut best_norm = 0.0;
    for (i, a) in v.iter().enumerate() {
        let n = a.norm();
        if n > best_norm + 1e-12 {
            best_norm = n;
            best = i;
        }
    }
    if best_norm > 0.0 {
        let phase = v[best] / C64::new(best_norm, 0.0);
        *v /= phase;
    }
}

fn lex_key(v: &DVector<C64>) -> Vec<(i64, i64)> {
    v.iter()
        .map(|a| ((a.re * 1e6).round() as i64, (a.im * 1e6).round() as i64))
        .collect()
}

/// Density matrix: Hermitian, unit trace. Positivity is not enforced at
/// construction (truncated propagation can dip epsilon-negative) but the
/// trace and symmetry are.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(CoreError::DimensionMismatch {
                context: "density matrix must be square and non-empty",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let dev = hermitian_deviation(&matrix);
        if dev > 1e-10 * matrix_scale(&matrix) {
            return Err(CoreError::NonHermitian { deviation: dev });
        }
        let tr: C64 = matrix.diagonal().iter().sum();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
            return Err(CoreError::InvalidParameter(format!(
                "density matrix trace {tr} != 1"
            )));
        }
        let sym = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { m: sym })
    }

    /// Projector onto the normalized version of `state`.
    pub fn from_pure(state: &StateVector) -> Result<Self> {
        let psi = state.normalized()?;
        let v = psi.as_dvector();
        Self::new(v * v.adjoint())
    }

    /// Statistical mixture sum_k p_k |psi_k><psi_k| with weights normalized
    /// to sum to one.
    pub fn from_mixture(states: &[(f64, StateVector)]) -> Result<Self> {
        if states.is_empty() {
            return Err(CoreError::InvalidParameter("empty mixture".into()));
        }
        let total: f64 = states.iter().map(|(p, _)| p).sum();
        if total <= 0.0 {
            return Err(CoreError::InvalidParameter(
                "mixture weights sum to zero".into(),
            ));
        }
        let d = states[0].1.dim();
        let mut m = DMatrix::zeros(d, d);
        for (p, s) in states {
            if *p < 0.0 {
                return Err(CoreError::InvalidParameter(
                    "negative mixture weight".into(),
                ));
            }
            let psi = s.normalized()?;
            let v = psi.as_dvector();
            m += (v * v.adjoint()) * C64::new(p / total, 0.0);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal().iter().map(|a| a.re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.m.diagonal().iter().map(|a| a.re).sum()
    }

    /// Frobenius distance to another density matrix.
    pub fn distance(&self, other: &Self) -> f64 {
        (&self.m - &other.m)
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest eigenvalue; positivity check up to roundoff.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = HermitianOperator::new(self.m.clone())?.eigendecompose()?;
        Ok(vals[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn norm_squared_of_decayed_branch() {
        // 0.36 + 0.64 e^{-2}
        let s = StateVector::new(vec![c(0.6, 0.0), c(0.8 * (-1.0f64).exp(), 0.0)]).unwrap();
        assert!((s.norm_squared() - 0.4466145812714321).abs() < 1e-15);
    }

    #[test]
    fn expectation_two_level() {
        let a = HermitianOperator::from_diagonal(&[1.0, -1.0]).unwrap();
        let s = StateVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert!((a.expectation(&s).unwrap() - (-0.28)).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.4, 0.0), c(2.0, 0.0)]);
        match HermitianOperator::new(m) {
            Err(CoreError::NonHermitian { deviation }) => assert!(deviation > 0.09),
            other => panic!("expected NonHermitian, got {other:?}"),
        }
    }

    #[test]
    fn eigensystem_pauli_x() {
        let a = HermitianOperator::from_row_major(
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let (vals, vecs) = a.eigendecompose().unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let r = 0.5f64.sqrt();
        // canonical phase: largest-|.| component real positive
        assert!((vecs[1].amplitudes()[0].re - r).abs() < 1e-12);
        assert!((vecs[1].amplitudes()[1].re - r).abs() < 1e-12);
        assert!(vecs[0].inner(&vecs[1]).norm() < 1e-12);
    }

    #[test]
    fn eigensystem_laplacian_64() {
        // Tridiagonal (2, -1) matrix: eigenvalues 2 - 2 cos(k pi / (n+1)).
        let n = 64;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c(2.0, 0.0);
            if i + 1 < n {
                m[(i, i + 1)] = c(-1.0, 0.0);
                m[(i + 1, i)] = c(-1.0, 0.0);
            }
        }
        let a = HermitianOperator::new(m).unwrap();
        let (vals, vecs) = a.eigendecompose().unwrap();
        for (k, v) in vals.iter().enumerate() {
            let exact =
                2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((v - exact).abs() < 1e-10, "eigenvalue {k}: {v} vs {exact}");
        }
        // spot-check orthonormality
        assert!(vecs[0].inner(&vecs[1]).norm() < 1e-10);
        assert!((vecs[10].norm_squared() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_eigenspace_is_orthonormal() {
        // diag(1, 1, 3) conjugated by a rotation leaves a 2-fold degeneracy.
        let theta: f64 = 0.7;
        let (s, co) = theta.sin_cos();
        let u = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(co, 0.0),
                c(-s, 0.0),
                c(0.0, 0.0),
                c(s, 0.0),
                c(co, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0),
            ],
        );
        let d = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(3.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0),
            ],
        );
        let m = &u * d * u.adjoint();
        let a = HermitianOperator::new(m).unwrap();
        let (vals, vecs) = a.eigendecompose().unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
        assert!(vecs[0].inner(&vecs[1]).norm() < 1e-10);
        for v in &vecs {
            assert!((v.norm_squared() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_from_pure_normalizes() {
        let s = StateVector::new(vec![c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
        let rho = DensityMatrix::from_pure(&s).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-14);
        assert!((rho.entry(0, 0).re - 0.36).abs() < 1e-14);
        assert!((rho.entry(0, 1).re - 0.48).abs() < 1e-14);
    }

    #[test]
    fn mixture_kills_coherence() {
        let up = StateVector::basis(2, 0).unwrap();
        let dn = StateVector::basis(2, 1).unwrap();
        let rho = DensityMatrix::from_mixture(&[(0.36, up), (0.64, dn)]).unwrap();
        assert!((rho.entry(0, 0).re - 0.36).abs() < 1e-14);
        assert!(rho.entry(0, 1).norm() < 1e-14);
    }

    fn arb_hermitian(max_dim: usize) -> impl Strategy<Value = HermitianOperator> {
        (1..=max_dim).prop_flat_map(|d| {
            proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), d * d).prop_map(move |raw| {
                let g = DMatrix::from_fn(d, d, |i, j| {
                    let (re, im) = raw[i * d + j];
                    c(re, im)
                });
                let h = (&g + g.adjoint()) * c(0.5, 0.0);
                HermitianOperator::new(h).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn eigendecomposition_reconstructs(a in arb_hermitian(8)) {
            let (vals, vecs) = a.eigendecompose().unwrap();
            let d = a.dim();
            let mut rebuilt = DMatrix::zeros(d, d);
            for (lam, v) in vals.iter().zip(&vecs) {
                let col = v.as_dvector();
                rebuilt += (col * col.adjoint()) * c(*lam, 0.0);
            }
            let err: f64 = (rebuilt - a.matrix()).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(err < 1e-9 * (1.0 + a.frobenius_norm()));
            // ascending order
            for w in vals.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-12);
            }
        }

        #[test]
        fn expectation_within_spectral_range(a in arb_hermitian(6), raw in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6)) {
            let d = a.dim();
            let amps: Vec<C64> = raw.iter().take(d).map(|&(re, im)| c(re, im)).collect();
            if amps.iter().map(|x| x.norm_sqr()).sum::<f64>() > 1e-6 {
                let s = StateVector::new(amps).unwrap();
                let (vals, _) = a.eigendecompose().unwrap();
                let e = a.expectation(&s).unwrap();
                prop_assert!(e >= vals[0] - 1e-9 && e <= vals[d - 1] + 1e-9);
            }
        }
    }
}
