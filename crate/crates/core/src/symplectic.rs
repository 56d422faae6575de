//! Gaussian covariance-matrix machinery in shot-noise units.
//!
//! Quadratures are ordered `(x₁, p₁, …, x_N, p_N)`. A matrix is a physical
//! covariance matrix iff `γ + iΩ ⪰ 0`. Entropies are in bits.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance accepted by [`CovarianceMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Default tolerance on the smallest eigenvalue of `γ + iΩ`.
pub const PHYSICAL_TOL: f64 = 1e-8;

const STANDARD_FORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    data: DMatrix<f64>,
    labels: Vec<String>,
    standardized: bool,
}

impl CovarianceMatrix {
    pub fn new(data: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let n = data.nrows();
        if n != data.ncols() || !n.is_multiple_of(2) || n == 0 {
            return Err(Error::DimensionMismatch {
                expected: data.ncols().max(2) & !1,
                found: n,
            });
        }
        if labels.len() != n / 2 {
            return Err(Error::DimensionMismatch {
                expected: n / 2,
                found: labels.len(),
            });
        }
        let scale = data.amax().max(1.0);
        let dev = (&data - data.transpose()).amax();
        if dev > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(dev));
        }
        let data = (&data + data.transpose()) * 0.5;
        Ok(Self {
            data,
            labels,
            standardized: false,
        })
    }

    /// Labels `m0, m1, …`
    pub fn unlabeled(data: DMatrix<f64>) -> Result<Self> {
        let modes = data.nrows() / 2;
        Self::new(data, (0..modes).map(|i| format!("m{i}")).collect())
    }

    pub fn identity(labels: &[&str]) -> Self {
        let n = 2 * labels.len();
        Self {
            data: DMatrix::identity(n, n),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            standardized: false,
        }
    }

    pub fn modes(&self) -> usize {
        self.data.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub(crate) fn with_standardized(mut self, flag: bool) -> Self {
        self.standardized = flag;
        self
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    /// 2×2 block between modes `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        self.data.fixed_view::<2, 2>(2 * i, 2 * j).into_owned()
    }

    /// Sets block `(i, j)` and its transpose at `(j, i)`.
    pub fn set_block(&mut self, i: usize, j: usize, m: &Matrix2<f64>) {
        self.data.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(m);
        if i != j {
            self.data
                .fixed_view_mut::<2, 2>(2 * j, 2 * i)
                .copy_from(&m.transpose());
        }
        self.standardized = false;
    }

    /// Reduced covariance matrix of the listed modes, in the given order.
    pub fn submatrix(&self, modes: &[usize]) -> Self {
        let n = 2 * modes.len();
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let data = DMatrix::from_fn(n, n, |r, c| self.data[(idx[r], idx[c])]);
        Self {
            data,
            labels: modes.iter().map(|&m| self.labels[m].clone()).collect(),
            standardized: false,
        }
    }

    /// `S γ Sᵀ`
    pub fn transformed(&self, s: &DMatrix<f64>) -> Self {
        let data = s * &self.data * s.transpose();
        let data = (&data + data.transpose()) * 0.5;
        Self {
            data,
            labels: self.labels.clone(),
            standardized: false,
        }
    }

    pub fn direct_sum(&self, other: &CovarianceMatrix) -> Self {
        let (n, m) = (self.data.nrows(), other.data.nrows());
        let mut data = DMatrix::zeros(n + m, n + m);
        data.view_mut((0, 0), (n, n)).copy_from(&self.data);
        data.view_mut((n, n), (m, m)).copy_from(&other.data);
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        Self {
            data,
            labels,
            standardized: false,
        }
    }

    pub fn relabeled(mut self, labels: &[&str]) -> Self {
        assert_eq!(labels.len(), self.modes());
        self.labels = labels.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Unknown cross-covariance block between modes A and B.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KappaBlock {
    pub k11: f64,
    pub k12: f64,
    pub k21: f64,
    pub k22: f64,
}

impl KappaBlock {
    pub fn diagonal(k11: f64, k22: f64) -> Self {
        Self {
            k11,
            k12: 0.0,
            k21: 0.0,
            k22,
        }
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self {
            k11: m[(0, 0)],
            k12: m[(0, 1)],
            k21: m[(1, 0)],
            k22: m[(1, 1)],
        }
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.k11, self.k12, self.k21, self.k22)
    }
}

/// `Ω_N = ⊕ [[0, 1], [−1, 0]]`
pub fn omega(modes: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        m[(2 * k, 2 * k + 1)] = 1.0;
        m[(2 * k + 1, 2 * k)] = -1.0;
    }
    m
}

/// `γ + iΩ` as a complex Hermitian matrix.
pub fn uncertainty_matrix(gamma: &DMatrix<f64>) -> DMatrix<Complex64> {
    let om = omega(gamma.nrows() / 2);
    DMatrix::from_fn(gamma.nrows(), gamma.ncols(), |i, j| {
        Complex64::new(gamma[(i, j)], om[(i, j)])
    })
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_hermitian_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    // [[A, −B], [B, A]] has the spectrum of A + iB, each eigenvalue doubled.
    let n = m.nrows();
    let real = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let real = (&real + real.transpose()) * 0.5;
    real.symmetric_eigenvalues().min()
}

/// Smallest eigenvalue of `γ + iΩ`.
pub fn uncertainty_margin(gamma: &CovarianceMatrix) -> f64 {
    min_hermitian_eigenvalue(&uncertainty_matrix(&gamma.data))
}

/// `γ + iΩ ⪰ −tol`
pub fn is_physical(gamma: &CovarianceMatrix, tol: f64) -> bool {
    uncertainty_margin(gamma) >= -tol
}

/// Symplectic eigenvalues in descending order.
pub fn symplectic_eigenvalues(gamma: &CovarianceMatrix) -> Result<Vec<f64>> {
    let n = gamma.modes();
    let eig = gamma.data.clone().symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Unphysical(format!(
            "covariance matrix is not positive definite (min eigenvalue {:e})",
            eig.eigenvalues.min()
        )));
    }
    let mut sqrt_g = eig.eigenvectors.clone();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        sqrt_g.column_mut(k).scale_mut(l.sqrt());
    }
    let sqrt_g = &sqrt_g * eig.eigenvectors.transpose();
    // A = √γ Ω √γ is antisymmetric; AᵀA has eigenvalues ν² in pairs.
    let a = &sqrt_g * omega(n) * &sqrt_g;
    let ata = a.transpose() * &a;
    let ata = (&ata + ata.transpose()) * 0.5;
    let mut sq: Vec<f64> = ata.symmetric_eigenvalues().iter().copied().collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let nus: Vec<f64> = sq
        .chunks(2)
        .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
        .collect();
    if let Some(&low) = nus.iter().find(|&&v| v < 1.0 - PHYSICAL_TOL) {
        return Err(Error::Unphysical(format!("symplectic eigenvalue {low} < 1")));
    }
    Ok(nus)
}

/// Entropy in bits of a thermal mode with symplectic eigenvalue `nu`.
pub fn g_entropy(nu: f64) -> Result<f64> {
    if !(nu >= 1.0 - PHYSICAL_TOL) {
        return Err(Error::OutOfRange {
            name: "symplectic eigenvalue",
            value: nu,
            range: "[1, inf)",
        });
    }
    if nu <= 1.0 {
        return Ok(0.0);
    }
    let a = 0.5 * (nu - 1.0);
    Ok(((1.0 + a) * a.ln_1p() - a * a.ln()) / std::f64::consts::LN_2)
}

/// Von Neumann entropy in bits of the Gaussian state with this covariance matrix.
pub fn von_neumann_entropy(gamma: &CovarianceMatrix) -> Result<f64> {
    symplectic_eigenvalues(gamma)?
        .into_iter()
        .map(g_entropy)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    HomodyneX,
    HomodyneP,
    Heterodyne,
}

/// Covariance matrix of the remaining modes after measuring the last one.
pub fn conditional_cm(gamma: &CovarianceMatrix, measurement: Measurement) -> Result<CovarianceMatrix> {
    let n = gamma.data.nrows();
    if n < 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: n,
        });
    }
    let r = n - 2;
    let rest = gamma.data.view((0, 0), (r, r)).into_owned();
    let sigma = gamma.data.view((0, r), (r, 2)).into_owned();
    let gb: Matrix2<f64> = gamma.block(n / 2 - 1, n / 2 - 1);
    let inner = match measurement {
        // Moore-Penrose inverse of diag(V_x, 0)
        Measurement::HomodyneX => Matrix2::new(1.0 / gb[(0, 0)], 0.0, 0.0, 0.0),
        Measurement::HomodyneP => Matrix2::new(0.0, 0.0, 0.0, 1.0 / gb[(1, 1)]),
        Measurement::Heterodyne => (gb + Matrix2::identity())
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular γ_B + I".into()))?,
    };
    let inner = DMatrix::from_column_slice(2, 2, inner.as_slice());
    let cond = rest - &sigma * inner * sigma.transpose();
    let labels = gamma.labels[..gamma.modes() - 1].to_vec();
    CovarianceMatrix::new((&cond + cond.transpose()) * 0.5, labels)
}

/// Gaussian upper bound on the Holevo information between the measured last
/// mode and a purifying adversary: `S(γ) − S(γ_cond)`.
pub fn holevo_bound(gamma: &CovarianceMatrix, measurement: Measurement) -> Result<f64> {
    let margin = uncertainty_margin(gamma);
    if margin < -PHYSICAL_TOL {
        return Err(Error::InfeasibleKappa(margin));
    }
    let joint = von_neumann_entropy(gamma)?;
    let cond = von_neumann_entropy(&conditional_cm(gamma, measurement)?)?;
    Ok(joint - cond)
}

/// `S Ω Sᵀ = Ω` within `tol`.
pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> bool {
    let om = omega(s.nrows() / 2);
    (s * &om * s.transpose() - om).amax() <= tol
}

pub fn block_diagonal(blocks: &[Matrix2<f64>]) -> DMatrix<f64> {
    let n = 2 * blocks.len();
    let mut m = DMatrix::zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        m.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(b);
    }
    m
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Rotation plus squeezing bringing a single-mode block to `a·I`.
fn normalize_single_mode(m: &Matrix2<f64>) -> Result<(Matrix2<f64>, f64)> {
    let scale = m.amax().max(1.0);
    let (r, l1, l2) = if m[(0, 1)].abs() <= 1e-15 * scale {
        (Matrix2::identity(), m[(0, 0)], m[(1, 1)])
    } else {
        let theta = 0.5 * (2.0 * m[(0, 1)]).atan2(m[(0, 0)] - m[(1, 1)]);
        let r = rotation(theta);
        let d = r.transpose() * m * r;
        (r, d[(0, 0)], d[(1, 1)])
    };
    if l1 <= 0.0 || l2 <= 0.0 {
        return Err(Error::Unphysical("single-mode block not positive".into()));
    }
    let a = (l1 * l2).sqrt();
    let squeeze = Matrix2::new((a / l1).sqrt(), 0.0, 0.0, (a / l2).sqrt());
    Ok((squeeze * r.transpose(), a))
}

/// Two-mode covariance matrix in standard form with the local symplectic maps
/// that produce it.
#[derive(Debug, Clone)]
pub struct StandardFormCb {
    pub gamma: CovarianceMatrix,
    pub s_c: Matrix2<f64>,
    pub s_b: Matrix2<f64>,
    pub a: f64,
    pub b: f64,
    pub phi_x: f64,
    pub phi_p: f64,
}

/// Reduce a two-mode covariance matrix to `[[a I, diag(φx, φp)], [·, b I]]`.
pub fn standard_form_cb(gamma_cb: &CovarianceMatrix) -> Result<StandardFormCb> {
    if gamma_cb.modes() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: gamma_cb.modes(),
        });
    }
    let (mut s_c, a) = normalize_single_mode(&gamma_cb.block(0, 0))?;
    let (mut s_b, b) = normalize_single_mode(&gamma_cb.block(1, 1))?;
    let sigma = s_c * gamma_cb.block(0, 1) * s_b.transpose();
    let scale = gamma_cb.matrix().amax().max(1.0);

    if sigma[(0, 1)].abs() > 1e-15 * scale || sigma[(1, 0)].abs() > 1e-15 * scale {
        let svd = sigma.svd(true, true);
        let mut u = svd.u.ok_or(Error::StandardForm(f64::NAN))?;
        let mut v = svd
            .v_t
            .ok_or(Error::StandardForm(f64::NAN))?
            .transpose();
        if u.determinant() < 0.0 {
            u.column_mut(1).neg_mut();
        }
        if v.determinant() < 0.0 {
            v.column_mut(1).neg_mut();
        }
        s_c = u.transpose() * s_c;
        s_b = v.transpose() * s_b;
    }

    let s = block_diagonal(&[s_c, s_b]);
    let std = gamma_cb.transformed(&s);
    let g = std.matrix();
    let residual = [
        g[(0, 0)] - a,
        g[(1, 1)] - a,
        g[(0, 1)],
        g[(2, 2)] - b,
        g[(3, 3)] - b,
        g[(2, 3)],
        g[(0, 3)],
        g[(1, 2)],
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > STANDARD_FORM_TOL * scale {
        return Err(Error::StandardForm(residual));
    }
    let phi_x = g[(0, 2)];
    let phi_p = g[(1, 3)];
    Ok(StandardFormCb {
        gamma: std.with_standardized(true),
        s_c,
        s_b,
        a,
        b,
        phi_x,
        phi_p,
    })
}

/// `S_A = σ_Z (S_Cᵀ)⁻¹ σ_Z`, so that `S_A σ_Z S_Cᵀ = σ_Z`.
pub fn extend_sa(s_c: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let z = Matrix2::new(1.0, 0.0, 0.0, -1.0);
    let inv = s_c
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular S_C".into()))?;
    Ok(z * inv * z)
}

/// Three-mode (A, C, B) covariance matrix brought to standard form by
/// `S = S_A ⊕ S_C ⊕ S_B`.
#[derive(Debug, Clone)]
pub struct StandardizedThreeMode {
    pub gamma: CovarianceMatrix,
    pub transform: DMatrix<f64>,
    pub phi_x: f64,
    pub phi_p: f64,
}

pub fn standardize_three_mode(gamma_acb: &CovarianceMatrix) -> Result<StandardizedThreeMode> {
    if gamma_acb.modes() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: gamma_acb.modes(),
        });
    }
    let cb = standard_form_cb(&gamma_acb.submatrix(&[1, 2]))?;
    let s_a = extend_sa(&cb.s_c)?;
    let transform = block_diagonal(&[s_a, cb.s_c, cb.s_b]);
    let gamma = gamma_acb.transformed(&transform).with_standardized(true);
    Ok(StandardizedThreeMode {
        gamma,
        transform,
        phi_x: cb.phi_x,
        phi_p: cb.phi_p,
    })
}
