//! Truncated Fock-space numerics in shot-noise units.
//!
//! Quadratures are `X = a + a†` and `P = i(a† − a)`, so the vacuum has unit
//! quadrature variance and a coherent state |α⟩ has means (2 Re α, 2 Im α).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum tolerated probability mass of a coherent state above the cutoff.
pub const LEAKAGE_TOL: f64 = 1e-10;

/// Elementwise tolerance when accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A state vector truncated to the first `dim` Fock states.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector(DVector<Complex64>);

/// A dense operator or density matrix on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockMatrix(DMatrix<Complex64>);

impl FockVector {
    pub fn from_vector(data: DVector<Complex64>) -> Self {
        Self(data)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `⟨ψ|op|ψ⟩`, real part.
    pub fn expectation(&self, op: &FockMatrix) -> Result<f64> {
        check_dim(self.dim(), op.dim())?;
        let v = self.0.dotc(&(&op.0 * &self.0));
        check_real(v)
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> FockMatrix {
        FockMatrix(&self.0 * self.0.adjoint())
    }
}

impl FockMatrix {
    pub fn from_matrix(data: DMatrix<Complex64>) -> Self {
        Self(data)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// `Tr(ρ²)`
    pub fn purity(&self) -> f64 {
        // Tr(ρρ) = Σ ρ_ij ρ_ji
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.0[(i, j)] * self.0[(j, i)];
            }
        }
        acc.re
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn matmul(&self, other: &FockMatrix) -> FockMatrix {
        FockMatrix(&self.0 * &other.0)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_real(v: Complex64) -> Result<f64> {
    if v.im.abs() > 1e-10 * v.re.abs().max(1.0) {
        return Err(Error::ComplexExpectation(v.im));
    }
    Ok(v.re)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Probability mass of a coherent state with `|α|² = mean_photons` on Fock
/// states `n ≥ dim`.
pub fn coherent_leakage(mean_photons: f64, dim: usize) -> f64 {
    if dim == 0 {
        return 1.0;
    }
    if mean_photons <= 0.0 {
        return 0.0;
    }
    let ln_mu = mean_photons.ln();
    if dim as f64 > mean_photons + 1.0 {
        // Poisson terms decrease monotonically past the mean.
        let mut term = (-mean_photons + dim as f64 * ln_mu - ln_factorial(dim)).exp();
        let mut sum = 0.0;
        let mut n = dim;
        while term > 0.0 && term > sum * 1e-17 {
            sum += term;
            n += 1;
            term *= mean_photons / n as f64;
        }
        sum
    } else {
        let mut term = (-mean_photons).exp();
        let mut head = 0.0;
        for n in 0..dim {
            head += term;
            term *= mean_photons / (n + 1) as f64;
        }
        (1.0 - head).max(0.0)
    }
}

/// Default cutoff for coherent states with at most `max_mean_photons`:
/// the smallest dimension meeting [`LEAKAGE_TOL`], floored at `2|β|² + 60`.
pub fn default_cutoff(max_mean_photons: f64) -> usize {
    let floor = (2.0 * max_mean_photons + 60.0).ceil() as usize;
    let mut dim = max_mean_photons.ceil() as usize + 1;
    while coherent_leakage(max_mean_photons, dim) > LEAKAGE_TOL {
        dim += 1;
    }
    dim.max(floor)
}

/// Coherent state `|α⟩` with coefficients `e^{−|α|²/2} αⁿ/√(n!)`, renormalized
/// after truncation.
pub fn coherent_vector(alpha: Complex64, dim: usize) -> Result<FockVector> {
    let mean_photons = alpha.norm_sqr();
    let leakage = coherent_leakage(mean_photons, dim);
    if leakage > LEAKAGE_TOL {
        return Err(Error::CutoffTooSmall {
            dim,
            mean_photons,
            leakage,
        });
    }
    let mut v = DVector::<Complex64>::zeros(dim);
    if mean_photons == 0.0 {
        v[0] = Complex64::new(1.0, 0.0);
        return Ok(FockVector(v));
    }
    let ln_abs = alpha.norm().ln();
    let phase = alpha.arg();
    let mut ln_fact = 0.0;
    for n in 0..dim {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        let ln_mag = -0.5 * mean_photons + n as f64 * ln_abs - 0.5 * ln_fact;
        v[n] = Complex64::from_polar(ln_mag.exp(), n as f64 * phase);
    }
    let norm = v.norm();
    v.unscale_mut(norm);
    Ok(FockVector(v))
}

/// Annihilation operator, `a|n⟩ = √n |n−1⟩`.
pub fn annihilation(dim: usize) -> FockMatrix {
    let mut a = DMatrix::<Complex64>::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    FockMatrix(a)
}

/// `(X, P)` with `X = a + a†`, `P = i(a† − a)`.
pub fn quadrature_operators(dim: usize) -> (FockMatrix, FockMatrix) {
    let mut x = DMatrix::<Complex64>::zeros(dim, dim);
    let mut p = DMatrix::<Complex64>::zeros(dim, dim);
    for n in 1..dim {
        let s = (n as f64).sqrt();
        x[(n - 1, n)] = Complex64::new(s, 0.0);
        x[(n, n - 1)] = Complex64::new(s, 0.0);
        p[(n - 1, n)] = Complex64::new(0.0, -s);
        p[(n, n - 1)] = Complex64::new(0.0, s);
    }
    (FockMatrix(x), FockMatrix(p))
}

/// `ρ = Σ pᵢ |ψᵢ⟩⟨ψᵢ|`
pub fn mixture_density(states: &[FockVector], probs: &[f64]) -> Result<FockMatrix> {
    check_dim(states.len(), probs.len())?;
    let Some(first) = states.first() else {
        return Err(Error::InvalidConstellation("empty state list".into()));
    };
    let dim = first.dim();
    for s in states {
        check_dim(dim, s.dim())?;
    }
    if let Some(&p) = probs.iter().find(|&&p| p < 0.0) {
        return Err(Error::NegativeProbability(p));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::Normalization { sum });
    }

    let mut b = DMatrix::<Complex64>::zeros(dim, states.len());
    for (k, (s, &p)) in states.iter().zip(probs).enumerate() {
        b.set_column(k, &(s.as_vector() * Complex64::new(p.sqrt(), 0.0)));
    }
    let rho = &b * b.adjoint();
    let mut rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = rho.trace().re;
    rho.unscale_mut(tr);
    Ok(FockMatrix(rho))
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues in descending order; negative values clipped to zero.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<Complex64>,
    /// Magnitude of the most negative eigenvalue before clipping.
    pub clipped: f64,
}

impl HermitianEigen {
    /// `V Λ V†`
    pub fn reconstruct(&self) -> FockMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(v);
        }
        debug_assert_eq!(scaled.ncols(), n);
        FockMatrix(&scaled * self.vectors.adjoint())
    }
}

pub fn hermitian_eigendecomposition(rho: &FockMatrix) -> Result<HermitianEigen> {
    let scale = rho.0.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let dev = rho.max_hermitian_deviation();
    if dev > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(dev));
    }
    let sym = (&rho.0 + rho.0.adjoint()) * Complex64::new(0.5, 0.0);
    let n_rows = sym.nrows();
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let n = order.len();
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::<Complex64>::zeros(n_rows, n);
    let mut clipped = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        let v = eig.eigenvalues[i];
        if v < 0.0 {
            clipped = clipped.max(-v);
        }
        values.push(v.max(0.0));
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok(HermitianEigen {
        values,
        vectors,
        clipped,
    })
}

/// `Re Tr(op·ρ)`
pub fn expectation(op: &FockMatrix, rho: &FockMatrix) -> Result<f64> {
    check_dim(op.dim(), rho.dim())?;
    let n = op.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += op.0[(i, j)] * rho.0[(j, i)];
        }
    }
    check_real(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_vector() {
        let v = coherent_vector(c(0.0, 0.0), 8).unwrap();
        assert_eq!(v.as_vector()[0], c(1.0, 0.0));
        assert!(v.as_vector().iter().skip(1).all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn coherent_photon_number() {
        let v = coherent_vector(c(1.0, 0.0), 64).unwrap();
        let a = annihilation(64);
        let n = FockMatrix(a.as_matrix().adjoint() * a.as_matrix());
        assert_abs_diff_eq!(v.expectation(&n).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coherent_quadrature_means_match_series() {
        let alpha = c(2.0, 1.0);
        let dim = 120;
        let v = coherent_vector(alpha, dim).unwrap();
        let (x, p) = quadrature_operators(dim);

        // ⟨α|a|α⟩ summed term by term from the analytic coefficients
        let coeff = |n: usize| -> Complex64 {
            let mut z = c((-0.5 * alpha.norm_sqr()).exp(), 0.0);
            for k in 1..=n {
                z *= alpha / (k as f64).sqrt();
            }
            z
        };
        let mut a_mean = c(0.0, 0.0);
        for n in 0..dim - 1 {
            a_mean += coeff(n).conj() * coeff(n + 1) * ((n + 1) as f64).sqrt();
        }
        let x_series = 2.0 * a_mean.re;
        let p_series = 2.0 * a_mean.im;
        assert_abs_diff_eq!(x_series, 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(p_series, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v.expectation(&x).unwrap(), x_series, epsilon = 1e-8);
        assert_abs_diff_eq!(v.expectation(&p).unwrap(), p_series, epsilon = 1e-8);
    }

    #[test]
    fn cutoff_too_small_is_rejected() {
        let err = coherent_vector(c(3.0, 0.0), 10).unwrap_err();
        assert!(matches!(err, Error::CutoffTooSmall { dim: 10, .. }));
    }

    #[test]
    fn leakage_tail_and_head_agree() {
        // both branches of coherent_leakage around the switch point
        let mu = 9.0;
        let tail = coherent_leakage(mu, 11);
        let mut head = 0.0;
        let mut term = (-mu).exp();
        for n in 0..11 {
            head += term;
            term *= mu / (n + 1) as f64;
        }
        assert_abs_diff_eq!(tail, 1.0 - head, epsilon = 1e-14);
        assert!(coherent_leakage(mu, default_cutoff(mu)) <= LEAKAGE_TOL);
        assert_eq!(default_cutoff(0.0), 60);
    }

    #[test]
    fn two_level_quadratures() {
        let (x, p) = quadrature_operators(2);
        assert_eq!(x.as_matrix()[(0, 1)], c(1.0, 0.0));
        assert_eq!(x.as_matrix()[(1, 0)], c(1.0, 0.0));
        assert_eq!(p.as_matrix()[(0, 1)], c(0.0, -1.0));
        assert_eq!(p.as_matrix()[(1, 0)], c(0.0, 1.0));
        assert_eq!(x.as_matrix()[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn commutator_is_2i_below_cutoff() {
        let dim = 12;
        let (x, p) = quadrature_operators(dim);
        let comm = x.as_matrix() * p.as_matrix() - p.as_matrix() * x.as_matrix();
        for i in 0..dim - 1 {
            for j in 0..dim - 1 {
                let expect = if i == j { c(0.0, 2.0) } else { c(0.0, 0.0) };
                assert_abs_diff_eq!((comm[(i, j)] - expect).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_and_coherent_variances_are_one_snu() {
        let dim = 64;
        let (x, p) = quadrature_operators(dim);
        let x2 = x.matmul(&x);
        let p2 = p.matmul(&p);
        let vac = coherent_vector(c(0.0, 0.0), dim).unwrap();
        assert_abs_diff_eq!(vac.expectation(&x2).unwrap(), 1.0, epsilon = 1e-12);

        let v = coherent_vector(c(1.5, -0.5), dim).unwrap();
        let mx = v.expectation(&x).unwrap();
        let mp = v.expectation(&p).unwrap();
        assert_abs_diff_eq!(v.expectation(&x2).unwrap() - mx * mx, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v.expectation(&p2).unwrap() - mp * mp, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn pure_mixture_is_projector() {
        let v = coherent_vector(c(0.7, 0.2), 40).unwrap();
        let rho = mixture_density(&[v], &[1.0]).unwrap();
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cat_mixture_spectrum_matches_gram_matrix() {
        let dim = 40;
        let plus = coherent_vector(c(1.0, 0.0), dim).unwrap();
        let minus = coherent_vector(c(-1.0, 0.0), dim).unwrap();
        let rho = mixture_density(&[plus, minus], &[0.5, 0.5]).unwrap();
        // Gram matrix ½[[1, s],[s, 1]] with overlap s = ⟨−α|α⟩ = e^{−2|α|²}
        let s = (-2.0f64).exp();
        let gram_eigs = [0.5 * (1.0 + s), 0.5 * (1.0 - s)];
        let eig = hermitian_eigendecomposition(&rho).unwrap();
        assert_abs_diff_eq!(eig.values[0], gram_eigs[0], epsilon = 1e-8);
        assert_abs_diff_eq!(eig.values[1], gram_eigs[1], epsilon = 1e-8);
        assert!(eig.values[2] < 1e-12);
    }

    #[test]
    fn mixture_errors() {
        let a = coherent_vector(c(0.0, 0.0), 8).unwrap();
        let b = coherent_vector(c(0.0, 0.0), 9).unwrap();
        assert!(matches!(
            mixture_density(&[a.clone(), b], &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            mixture_density(&[a.clone(), a.clone()], &[1.5, -0.5]),
            Err(Error::NegativeProbability(_))
        ));
        assert!(matches!(
            mixture_density(&[a.clone(), a], &[0.5, 0.4]),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn eigen_of_maximally_mixed_qubit() {
        let m = FockMatrix(DMatrix::from_diagonal_element(2, 2, c(0.5, 0.0)));
        let eig = hermitian_eigendecomposition(&m).unwrap();
        assert_abs_diff_eq!(eig.values[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(eig.values[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn eigen_of_coherent_projector() {
        let v = coherent_vector(c(1.2, 0.3), 50).unwrap();
        let eig = hermitian_eigendecomposition(&v.projector()).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-12);
        assert!(eig.values[1..].iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn four_state_mixture_has_rank_four() {
        let dim = 50;
        let pts = [c(1.0, 1.0), c(-1.0, 1.0), c(-1.0, -1.0), c(1.0, -1.0)];
        let states: Vec<_> = pts.iter().map(|&a| coherent_vector(a, dim).unwrap()).collect();
        let rho = mixture_density(&states, &[0.25; 4]).unwrap();
        let eig = hermitian_eigendecomposition(&rho).unwrap();
        assert_eq!(eig.values.iter().filter(|&&v| v > 1e-12).count(), 4);
        let rec = eig.reconstruct();
        let err = (rec.as_matrix() - rho.as_matrix()).camax();
        assert!(err < 1e-9, "reconstruction error {err}");
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(
            hermitian_eigendecomposition(&FockMatrix(m)),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn expectation_values() {
        let dim = 64;
        let (x, _) = quadrature_operators(dim);
        let vac = coherent_vector(c(0.0, 0.0), dim).unwrap().projector();
        assert_abs_diff_eq!(expectation(&x, &vac).unwrap(), 0.0, epsilon = 1e-15);
        let one = coherent_vector(c(1.0, 0.0), dim).unwrap().projector();
        assert_abs_diff_eq!(expectation(&x, &one).unwrap(), 2.0, epsilon = 1e-10);
        // (2 Re α)² + 1
        let x2 = x.matmul(&x);
        assert_abs_diff_eq!(expectation(&x2, &one).unwrap(), 5.0, epsilon = 1e-10);
        assert!(matches!(
            expectation(&annihilation(3), &one),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn doubling_cutoff_leaves_expectations_unchanged() {
        let alpha = c(1.7, -0.9);
        let d1 = default_cutoff(alpha.norm_sqr());
        let mut vals = Vec::new();
        for dim in [d1, 2 * d1] {
            let (x, p) = quadrature_operators(dim);
            let rho = coherent_vector(alpha, dim).unwrap().projector();
            vals.push((
                expectation(&x.matmul(&x), &rho).unwrap(),
                expectation(&p, &rho).unwrap(),
            ));
        }
        assert!((vals[0].0 - vals[1].0).abs() < 1e-8);
        assert!((vals[0].1 - vals[1].1).abs() < 1e-8);
    }
}
