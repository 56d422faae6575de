//! Entangling-cloner channel acting on mode B₀.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::ThreeModeSource;
use crate::symplectic::{is_physical, CovarianceMatrix, KappaBlock, PHYSICAL_TOL};

pub const DEFAULT_ATT_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    /// Eve's ancilla variance `V_E = (1 + Tε)/(1 − T)`.
    #[default]
    PaperCloner,
    /// Loss plus excess noise `Tε` referred to the channel input.
    InputReferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub transmittance: f64,
    pub excess_noise: f64,
    pub convention: NoiseConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub fn index(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }
}

pub fn distance_to_transmittance(distance_km: f64, att_db_per_km: f64) -> Result<f64> {
    if !(distance_km >= 0.0) || !distance_km.is_finite() {
        return Err(Error::OutOfRange {
            name: "distance_km",
            value: distance_km,
            range: "[0, inf)",
        });
    }
    if !(att_db_per_km > 0.0) || !att_db_per_km.is_finite() {
        return Err(Error::OutOfRange {
            name: "att_db_per_km",
            value: att_db_per_km,
            range: "(0, inf)",
        });
    }
    Ok(10f64.powf(-att_db_per_km * distance_km / 10.0))
}

impl ChannelParams {
    pub fn new(transmittance: f64, excess_noise: f64, convention: NoiseConvention) -> Result<Self> {
        if !(transmittance > 0.0 && transmittance <= 1.0) {
            return Err(Error::OutOfRange {
                name: "T_C",
                value: transmittance,
                range: "(0, 1]",
            });
        }
        if !(excess_noise >= 0.0) || !excess_noise.is_finite() {
            return Err(Error::OutOfRange {
                name: "eps_C",
                value: excess_noise,
                range: "[0, inf)",
            });
        }
        let ch = Self {
            transmittance,
            excess_noise,
            convention,
        };
        if let Some(ve) = ch.eve_variance() {
            if ve < 1.0 {
                return Err(Error::OutOfRange {
                    name: "V_E",
                    value: ve,
                    range: "[1, inf)",
                });
            }
        }
        Ok(ch)
    }

    pub fn from_distance(
        distance_km: f64,
        att_db_per_km: f64,
        excess_noise: f64,
        convention: NoiseConvention,
    ) -> Result<Self> {
        Self::new(
            distance_to_transmittance(distance_km, att_db_per_km)?,
            excess_noise,
            convention,
        )
    }

    fn bypass(&self) -> bool {
        self.transmittance >= 1.0
    }

    /// Variance of Eve's two-mode squeezed ancilla, when the cloner formula applies.
    pub fn eve_variance(&self) -> Option<f64> {
        match self.convention {
            NoiseConvention::PaperCloner if !self.bypass() => {
                let t = self.transmittance;
                Some((1.0 + t * self.excess_noise) / (1.0 - t))
            }
            _ => None,
        }
    }

    /// Output variance of B for input variance `v` on one quadrature.
    pub fn output_variance(&self, v: f64) -> f64 {
        let (t, e) = (self.transmittance, self.excess_noise);
        if self.bypass() {
            return v + t * e;
        }
        match self.convention {
            NoiseConvention::PaperCloner => t * v + (1.0 - t) * self.eve_variance().unwrap_or(1.0),
            NoiseConvention::InputReferred => t * (v - 1.0) + 1.0 + t * e,
        }
    }

    /// Output variance for a single coherent input.
    pub fn conditional_variance(&self) -> f64 {
        self.output_variance(1.0)
    }
}

/// Three-mode covariance matrix after the channel with the A–B block unknown.
#[derive(Debug, Clone)]
pub struct PartialCm {
    gamma: CovarianceMatrix,
    true_kappa: KappaBlock,
    channel: ChannelParams,
    probs: Vec<f64>,
    means_b: Vec<[f64; 2]>,
    separable: bool,
}

pub fn apply_channel(src: &ThreeModeSource, ch: &ChannelParams) -> Result<PartialCm> {
    let g = src.gamma();
    let t = ch.transmittance;
    let mut gamma = g.clone();
    let gb0 = g.block(2, 2);
    let gb = Matrix2::new(
        ch.output_variance(gb0[(0, 0)]),
        t * gb0[(0, 1)],
        t * gb0[(1, 0)],
        ch.output_variance(gb0[(1, 1)]),
    );
    gamma.set_block(2, 2, &gb);
    gamma.set_block(1, 2, &(g.block(1, 2) * t.sqrt()));
    let true_kappa = KappaBlock::from_matrix(&(g.block(0, 2) * t.sqrt()));
    gamma.set_block(0, 2, &Matrix2::zeros());
    let gamma = gamma.relabeled(&["A", "C", "B"]);

    let symbols = src.symbols();
    let st = t.sqrt();
    let pcm = PartialCm {
        gamma,
        true_kappa,
        channel: *ch,
        probs: symbols.iter().map(|s| s.prob).collect(),
        means_b: symbols.iter().map(|s| [st * s.b0[0], st * s.b0[1]]).collect(),
        separable: src.is_separable(),
    };
    if !is_physical(&pcm.with_kappa(&pcm.true_kappa), PHYSICAL_TOL) {
        return Err(Error::Unphysical("channel output fails the uncertainty relation".into()));
    }
    Ok(pcm)
}

impl PartialCm {
    /// Covariance matrix with the unknown block filled in; zero in the A–B slot.
    pub fn gamma(&self) -> &CovarianceMatrix {
        &self.gamma
    }

    pub fn with_kappa(&self, kappa: &KappaBlock) -> CovarianceMatrix {
        let mut g = self.gamma.clone();
        g.set_block(0, 2, &kappa.to_matrix());
        g
    }

    /// The A–B block produced by the modelled attack itself.
    pub fn true_kappa(&self) -> KappaBlock {
        self.true_kappa
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn gamma_b(&self) -> Matrix2<f64> {
        self.gamma.block(2, 2)
    }

    pub fn phi_cb(&self) -> Matrix2<f64> {
        self.gamma.block(1, 2)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn means_b(&self) -> &[[f64; 2]] {
        &self.means_b
    }

    pub fn is_separable(&self) -> bool {
        self.separable
    }

    pub fn conditional_variance(&self) -> f64 {
        self.channel.conditional_variance()
    }

    /// Matrix view of `γ_ACB` with the given κ, for callers that need raw entries.
    pub fn matrix_with_kappa(&self, kappa: &KappaBlock) -> DMatrix<f64> {
        self.with_kappa(kappa).matrix().clone()
    }
}

/// Mean and variance of Bob's quadrature `q` given symbol `i`.
pub fn conditional_output(pcm: &PartialCm, i: usize, q: Quadrature) -> Result<(f64, f64)> {
    let m = pcm.means_b.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        len: pcm.means_b.len(),
    })?;
    Ok((m[q.index()], pcm.conditional_variance()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{calibrate_r, qam_constellation};
    use crate::source::{build_purification, split_on_beamsplitter, SourceOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn source(side: usize, va: f64, vg: f64) -> ThreeModeSource {
        let r = calibrate_r(side, vg, va, 1e-13).unwrap();
        let c = qam_constellation(side, r, vg).unwrap();
        let p = build_purification(&c, &SourceOptions::default()).unwrap();
        split_on_beamsplitter(&p, 0.9).unwrap()
    }

    #[test]
    fn transmittance_from_distance() {
        assert_eq!(distance_to_transmittance(0.0, 0.2).unwrap(), 1.0);
        assert_abs_diff_eq!(distance_to_transmittance(50.0, 0.2).unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(distance_to_transmittance(100.0, 0.2).unwrap(), 0.01, epsilon = 1e-16);
        assert!(distance_to_transmittance(-1.0, 0.2).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(ChannelParams::new(0.0, 0.01, NoiseConvention::PaperCloner).is_err());
        assert!(ChannelParams::new(1.1, 0.01, NoiseConvention::PaperCloner).is_err());
        assert!(ChannelParams::new(0.5, -0.1, NoiseConvention::InputReferred).is_err());
        let ch = ChannelParams::new(0.5, 0.0, NoiseConvention::PaperCloner).unwrap();
        assert_abs_diff_eq!(ch.eve_variance().unwrap(), 2.0, epsilon = 1e-15);
        assert!(ChannelParams::new(1.0, 0.0, NoiseConvention::PaperCloner)
            .unwrap()
            .eve_variance()
            .is_none());
    }

    #[test]
    fn output_variance_conventions() {
        let ir = ChannelParams::new(0.1, 0.01, NoiseConvention::InputReferred).unwrap();
        assert_abs_diff_eq!(ir.output_variance(2.8), 0.1 * 1.8 + 1.0 + 0.001, epsilon = 1e-14);
        let pc = ChannelParams::new(0.1, 0.01, NoiseConvention::PaperCloner).unwrap();
        assert_abs_diff_eq!(pc.output_variance(2.8), 0.28 + 0.9 * (1.001 / 0.9), epsilon = 1e-14);
        let ir = ChannelParams::new(0.5, 0.05, NoiseConvention::InputReferred).unwrap();
        assert_abs_diff_eq!(ir.conditional_variance(), 1.025, epsilon = 1e-15);
    }

    #[test]
    fn identity_channel() {
        let src = source(4, 3.0, 3.0);
        for conv in [NoiseConvention::PaperCloner, NoiseConvention::InputReferred] {
            let ch = ChannelParams::new(1.0, 0.0, conv).unwrap();
            let pcm = apply_channel(&src, &ch).unwrap();
            assert_eq!(pcm.gamma_b(), src.gamma().block(2, 2));
            assert_eq!(pcm.phi_cb(), src.gamma().block(1, 2));
            assert_eq!(pcm.true_kappa().to_matrix(), src.gamma().block(0, 2));
            let (m, v) = conditional_output(&pcm, 0, Quadrature::X).unwrap();
            assert_abs_diff_eq!(m, src.second_sequence(0).unwrap().0, epsilon = 1e-15);
            assert_eq!(v, 1.0);
        }
        assert!(conditional_output(
            &apply_channel(&src, &ChannelParams::new(1.0, 0.0, NoiseConvention::PaperCloner).unwrap()).unwrap(),
            16,
            Quadrature::P
        )
        .is_err());
    }

    fn total_variance(pcm: &PartialCm, q: Quadrature) -> f64 {
        let n = pcm.probs().len();
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..n {
            let (m, v) = conditional_output(pcm, i, q).unwrap();
            let p = pcm.probs()[i];
            m1 += p * m;
            m2 += p * (m * m + v);
        }
        m2 - m1 * m1
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn law_of_total_variance(t in 0.01..1.0f64, eps in 0.0..0.2f64, cloner in any::<bool>()) {
            let conv = if cloner { NoiseConvention::PaperCloner } else { NoiseConvention::InputReferred };
            let src = source(4, 3.0, 3.0);
            let pcm = apply_channel(&src, &ChannelParams::new(t, eps, conv).unwrap()).unwrap();
            let gb = pcm.gamma_b();
            prop_assert!((total_variance(&pcm, Quadrature::X) - gb[(0, 0)]).abs() < 1e-8);
            prop_assert!((total_variance(&pcm, Quadrature::P) - gb[(1, 1)]).abs() < 1e-8);
        }

        #[test]
        fn phi_cb_scales_with_root_t(t in 0.01..1.0f64, eps in 0.0..0.2f64) {
            let src = source(4, 3.0, 3.0);
            let pcm = apply_channel(&src, &ChannelParams::new(t, eps, NoiseConvention::PaperCloner).unwrap()).unwrap();
            let expected = src.gamma().block(1, 2) * t.sqrt();
            prop_assert!((pcm.phi_cb() - expected).amax() < 1e-14);
            prop_assert!((pcm.gamma().block(0, 1) - src.gamma().block(0, 1)).amax() == 0.0);
        }
    }

    #[test]
    fn zero_noise_conventions() {
        let ch = ChannelParams::new(0.25, 0.0, NoiseConvention::PaperCloner).unwrap();
        assert_abs_diff_eq!(ch.eve_variance().unwrap(), 1.0 / 0.75, epsilon = 1e-15);
        assert!(ch.conditional_variance() > 1.0);
        let ch = ChannelParams::new(0.25, 0.0, NoiseConvention::InputReferred).unwrap();
        assert_eq!(ch.conditional_variance(), 1.0);
    }
}
