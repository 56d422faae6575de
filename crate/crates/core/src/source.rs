//! Purified discrete-modulation sources and the three-mode beamsplitter model.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::constellation::{Constellation, Origin};
use crate::error::{Error, Result};
use crate::fock::{
    coherent_vector, default_cutoff, hermitian_eigendecomposition, mixture_density,
    quadrature_operators, FockMatrix,
};
use crate::symplectic::CovarianceMatrix;

/// Eigenvalues of `ρ_D` at or below this are discarded from the purification.
pub const DEFAULT_EIG_CLIP: f64 = 1e-12;

const STANDARD_FORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceOptions {
    /// Fock cutoff; `None` picks one from the leakage bound.
    pub cutoff: Option<usize>,
    pub eig_clip: f64,
}

impl Default for SourceOptions {
    fn default() -> Self {
        Self {
            cutoff: None,
            eig_clip: DEFAULT_EIG_CLIP,
        }
    }
}

/// Canonical purification `|Ψ⟩_AD = Σ_jk C_jk |j⟩_A |k⟩_D` of a constellation
/// mixture, with its two-mode covariance matrix.
#[derive(Debug, Clone)]
pub struct PurifiedSource {
    coeff: DMatrix<Complex64>,
    eigenvalues: Vec<f64>,
    dropped: usize,
    clipped_negative: f64,
    constellation: Constellation,
    gamma_ad: CovarianceMatrix,
    means_ad: [f64; 4],
    va: f64,
    phi_ad: f64,
    eta_a: f64,
    residual: f64,
    standard_form: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceDiagnostics {
    pub label: String,
    pub cutoff: usize,
    pub retained_eigenvalues: Vec<f64>,
    pub dropped_eigenvalues: usize,
    pub clipped_negative: f64,
    pub va: f64,
    pub phi_ad: f64,
    pub eta_a: f64,
    pub one_minus_eta_a: f64,
    pub gamma_ad: Vec<Vec<f64>>,
    pub standard_form_residual: f64,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `Tr(C† O_A C O_Dᵀ)`, the expectation of `O_A ⊗ O_D`.
fn cross_expectation(coeff: &DMatrix<Complex64>, oa_c: &DMatrix<Complex64>, od: &DMatrix<Complex64>) -> Complex64 {
    let m = oa_c * od.transpose();
    coeff.iter().zip(m.iter()).map(|(a, b)| a.conj() * b).sum()
}

fn local_expectation(rho: &DMatrix<Complex64>, op: &DMatrix<Complex64>) -> Complex64 {
    // Tr(op ρ) = Σ op_ij ρ_ji
    op.iter()
        .zip(rho.transpose().iter())
        .map(|(a, b)| a * b)
        .sum()
}

pub fn build_purification(constellation: &Constellation, opts: &SourceOptions) -> Result<PurifiedSource> {
    let dim = opts
        .cutoff
        .unwrap_or_else(|| default_cutoff(constellation.max_mean_photons()));
    let states = constellation
        .points()
        .iter()
        .map(|&b| coherent_vector(b, dim))
        .collect::<Result<Vec<_>>>()?;
    let rho_d = mixture_density(&states, constellation.probs())?;
    let eig = hermitian_eigendecomposition(&rho_d)?;

    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k] > opts.eig_clip)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    // C = conj(V) diag(√υ) Vᵀ
    let mut w = DMatrix::<Complex64>::zeros(dim, keep.len());
    let mut v = DMatrix::<Complex64>::zeros(dim, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let s = eig.values[k].sqrt();
        for row in 0..dim {
            let z = eig.vectors[(row, k)];
            w[(row, col)] = z.conj() * s;
            v[(row, col)] = z;
        }
    }
    let coeff = &w * v.transpose();
    let retained: Vec<f64> = keep.iter().map(|&k| eig.values[k]).collect();

    let (xo, po) = quadrature_operators(dim);
    let (x, p) = (xo.as_matrix(), po.as_matrix());
    let xp_sym = (x * p + p * x) * c(0.5);
    let (x2, p2) = (x * x, p * p);

    let rho_a = &coeff * coeff.adjoint();
    let rho_dd = coeff.transpose() * coeff.conjugate();
    let mode_moments = |rho: &DMatrix<Complex64>| {
        let e = |op: &DMatrix<Complex64>| local_expectation(rho, op).re;
        let (mx, mp) = (e(x), e(p));
        ([mx, mp], [e(&x2) - mx * mx, e(&p2) - mp * mp, e(&xp_sym) - mx * mp])
    };
    let (mean_a, sa) = mode_moments(&rho_a);
    let (mean_d, sd) = mode_moments(&rho_dd);

    let xc = x * &coeff;
    let pc = p * &coeff;
    let cross = |ac: &DMatrix<Complex64>, od: &DMatrix<Complex64>, ma: f64, md: f64| {
        cross_expectation(&coeff, ac, od).re - ma * md
    };
    let xx = cross(&xc, x, mean_a[0], mean_d[0]);
    let xp = cross(&xc, p, mean_a[0], mean_d[1]);
    let px = cross(&pc, x, mean_a[1], mean_d[0]);
    let pp = cross(&pc, p, mean_a[1], mean_d[1]);

    let gamma = DMatrix::from_row_slice(
        4,
        4,
        &[
            sa[0], sa[2], xx, xp, //
            sa[2], sa[1], px, pp, //
            xx, px, sd[0], sd[2], //
            xp, pp, sd[2], sd[1],
        ],
    );
    let gamma_ad = CovarianceMatrix::new(gamma, vec!["A".into(), "D".into()])?;
    let g = gamma_ad.matrix();
    let va = 0.25 * (g[(0, 0)] + g[(1, 1)] + g[(2, 2)] + g[(3, 3)]);
    let phi_ad = 0.5 * (g[(0, 2)] - g[(1, 3)]);
    let eta_a = if va - 1.0 > 1e-14 {
        phi_ad * phi_ad / (va * va - 1.0)
    } else {
        1.0
    };
    let means_ad = [mean_a[0], mean_a[1], mean_d[0], mean_d[1]];
    let residual = [
        g[(0, 1)],
        g[(2, 3)],
        g[(0, 3)],
        g[(1, 2)],
        g[(0, 0)] - g[(1, 1)],
        g[(2, 2)] - g[(3, 3)],
        g[(0, 0)] - g[(2, 2)],
        g[(0, 2)] + g[(1, 3)],
        means_ad[0],
        means_ad[1],
        means_ad[2],
        means_ad[3],
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()));
    let standard_form = residual <= STANDARD_FORM_TOL * va.max(1.0);
    if matches!(constellation.origin(), Origin::Qam(_)) && !standard_form {
        return Err(Error::NonStandardForm(residual));
    }

    Ok(PurifiedSource {
        coeff,
        eigenvalues: retained,
        dropped: dim - keep.len(),
        clipped_negative: eig.clipped,
        constellation: constellation.clone(),
        gamma_ad,
        means_ad,
        va,
        phi_ad,
        eta_a,
        residual,
        standard_form,
    })
}

impl PurifiedSource {
    pub fn cutoff(&self) -> usize {
        self.coeff.nrows()
    }

    /// Coefficient matrix `C` of the joint pure state.
    pub fn coefficients(&self) -> &DMatrix<Complex64> {
        &self.coeff
    }

    pub fn retained_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn gamma_ad(&self) -> &CovarianceMatrix {
        &self.gamma_ad
    }

    pub fn means_ad(&self) -> [f64; 4] {
        self.means_ad
    }

    pub fn va(&self) -> f64 {
        self.va
    }

    pub fn phi_ad(&self) -> f64 {
        self.phi_ad
    }

    /// `φ² / (V_A² − 1)`; equal to 1 for a Gaussian (two-mode squeezed) source.
    pub fn eta_a(&self) -> f64 {
        self.eta_a
    }

    pub fn is_standard_form(&self) -> bool {
        self.standard_form
    }

    /// `Tr_A |Ψ⟩⟨Ψ| = Cᵀ C̄`
    pub fn reduced_d(&self) -> FockMatrix {
        FockMatrix::from_matrix(self.coeff.transpose() * self.coeff.conjugate())
    }

    pub fn diagnostics(&self) -> SourceDiagnostics {
        let g = self.gamma_ad.matrix();
        SourceDiagnostics {
            label: self.constellation.label().to_string(),
            cutoff: self.cutoff(),
            retained_eigenvalues: self.eigenvalues.clone(),
            dropped_eigenvalues: self.dropped,
            clipped_negative: self.clipped_negative,
            va: self.va,
            phi_ad: self.phi_ad,
            eta_a: self.eta_a,
            one_minus_eta_a: 1.0 - self.eta_a,
            gamma_ad: (0..4).map(|i| (0..4).map(|j| g[(i, j)]).collect()).collect(),
            standard_form_residual: self.residual,
        }
    }
}

/// Conditional first moments of modes C and B₀ given one transmitted symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Symbol {
    pub prob: f64,
    pub c: [f64; 2],
    pub b0: [f64; 2],
}

/// Modes `(A, C, B₀)` after splitting D on a beamsplitter of transmittance `η`.
#[derive(Debug, Clone)]
pub struct ThreeModeSource {
    gamma: CovarianceMatrix,
    means: [f64; 6],
    eta_bs: f64,
    va: f64,
    eta_a: f64,
    standard_form: bool,
    label: String,
    symbols: Vec<Symbol>,
    separable: bool,
}

fn check_eta_bs(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::OutOfRange {
            name: "eta_BS",
            value: eta,
            range: "(0, 1)",
        });
    }
    Ok(())
}

/// `(D, v) → (C, B₀)` with `C = √(1−η) D − √η v`, `B₀ = √η D + √(1−η) v`.
fn split_gamma(gamma_ad: &CovarianceMatrix, eta: f64) -> CovarianceMatrix {
    let full = gamma_ad.direct_sum(&CovarianceMatrix::identity(&["v"]));
    let (t, s) = ((1.0 - eta).sqrt(), eta.sqrt());
    let mut bs = DMatrix::identity(6, 6);
    for q in 0..2 {
        bs[(2 + q, 2 + q)] = t;
        bs[(2 + q, 4 + q)] = -s;
        bs[(4 + q, 2 + q)] = s;
        bs[(4 + q, 4 + q)] = t;
    }
    full.transformed(&bs).relabeled(&["A", "C", "B0"])
}

pub fn split_on_beamsplitter(src: &PurifiedSource, eta_bs: f64) -> Result<ThreeModeSource> {
    check_eta_bs(eta_bs)?;
    let (t, s) = ((1.0 - eta_bs).sqrt(), eta_bs.sqrt());
    let m = src.means_ad;
    let c = src.constellation();
    let symbols = c
        .points()
        .iter()
        .zip(c.probs())
        .map(|(b, &prob)| {
            let (x, p) = (2.0 * b.re, 2.0 * b.im);
            Symbol {
                prob,
                c: [t * x, t * p],
                b0: [s * x, s * p],
            }
        })
        .collect();
    Ok(ThreeModeSource {
        gamma: split_gamma(&src.gamma_ad, eta_bs),
        means: [m[0], m[1], t * m[2], t * m[3], s * m[2], s * m[3]],
        eta_bs,
        va: src.va,
        eta_a: src.eta_a,
        standard_form: src.standard_form,
        label: c.label().to_string(),
        symbols,
        separable: c.is_separable(),
    })
}

impl ThreeModeSource {
    pub fn gamma(&self) -> &CovarianceMatrix {
        &self.gamma
    }

    pub fn means(&self) -> [f64; 6] {
        self.means
    }

    pub fn eta_bs(&self) -> f64 {
        self.eta_bs
    }

    pub fn va(&self) -> f64 {
        self.va
    }

    pub fn eta_a(&self) -> f64 {
        self.eta_a
    }

    pub fn is_standard_form(&self) -> bool {
        self.standard_form
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Whether Bob's x and p data are independent with identical marginals.
    pub fn is_separable(&self) -> bool {
        self.separable
    }

    /// Conditional `(x̄_B₀, p̄_B₀)` for symbol `i`.
    pub fn second_sequence(&self, i: usize) -> Result<(f64, f64)> {
        self.symbols
            .get(i)
            .map(|s| (s.b0[0], s.b0[1]))
            .ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.symbols.len(),
            })
    }
}
