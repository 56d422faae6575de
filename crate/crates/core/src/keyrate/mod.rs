//! Devetak-Winter key rates with reverse reconciliation.

mod mutual_info;
mod search;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mutual_info::{
    mutual_information, mutual_information_unchecked, DEFAULT_MI_POINTS, MIN_MI_POINTS, MI_SELF_CHECK_TOL,
};
pub use search::{
    kappa_bounds, margin_at, sup_holevo, AxisBounds, KappaBounds, SearchMethod, SearchOptions, SearchProblem,
    SupResult, PHI_SYMMETRY_TOL,
};

use crate::channel::{apply_channel, ChannelParams, NoiseConvention, PartialCm};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::source::{build_purification, split_on_beamsplitter, SourceOptions, ThreeModeSource};
use crate::symplectic::{
    conditional_cm, uncertainty_margin, von_neumann_entropy, CovarianceMatrix, KappaBlock, Measurement,
    PHYSICAL_TOL,
};

/// Bob's detection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    /// Homodyne with the quadrature chosen uniformly at random per use.
    #[default]
    Homodyne,
    HomodyneX,
    HomodyneP,
    Heterodyne,
}

impl Detection {
    /// Holevo bound on the adversary's information about Bob's outcome.
    pub fn holevo(&self, gamma: &CovarianceMatrix) -> Result<f64> {
        let margin = uncertainty_margin(gamma);
        if margin < -PHYSICAL_TOL {
            return Err(Error::InfeasibleKappa(margin));
        }
        let joint = von_neumann_entropy(gamma)?;
        let cond = |m| -> Result<f64> { von_neumann_entropy(&conditional_cm(gamma, m)?) };
        Ok(match self {
            Detection::HomodyneX => joint - cond(Measurement::HomodyneX)?,
            Detection::HomodyneP => joint - cond(Measurement::HomodyneP)?,
            Detection::Heterodyne => joint - cond(Measurement::Heterodyne)?,
            Detection::Homodyne => {
                joint - 0.5 * (cond(Measurement::HomodyneX)? + cond(Measurement::HomodyneP)?)
            }
        })
    }

    /// Invariant under exchanging x and p.
    pub fn is_symmetric(&self) -> bool {
        matches!(self, Detection::Homodyne | Detection::Heterodyne)
    }

    pub fn swapped(&self) -> Self {
        match self {
            Detection::HomodyneX => Detection::HomodyneP,
            Detection::HomodyneP => Detection::HomodyneX,
            d => *d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub beta: f64,
    pub detection: Detection,
    pub eta_bs: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            beta: 0.95,
            detection: Detection::Homodyne,
            eta_bs: 0.9,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::OutOfRange {
                name: "beta",
                value: self.beta,
                range: "(0, 1]",
            });
        }
        if !(self.eta_bs > 0.0 && self.eta_bs < 1.0) {
            return Err(Error::OutOfRange {
                name: "eta_BS",
                value: self.eta_bs,
                range: "(0, 1)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub source: SourceOptions,
    pub search: SearchOptions,
    pub mi_points: usize,
    /// Bisection tolerance on the tolerable excess noise.
    pub noise_tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            source: SourceOptions::default(),
            search: SearchOptions::default(),
            mi_points: DEFAULT_MI_POINTS,
            noise_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KeyRatePoint {
    pub distance_km: Option<f64>,
    pub transmittance: f64,
    pub eps: f64,
    pub label: String,
    pub i_ab: f64,
    pub s_sup: f64,
    pub k_r: f64,
    pub kappa_star: KappaBlock,
    pub search_iterations: usize,
    pub feasible: bool,
    pub method: Option<SearchMethod>,
    /// Smallest eigenvalue of `γ + iΩ` at `kappa_star`.
    pub margin: f64,
    pub kappa_bounds: Option<KappaBounds>,
    /// Holevo bound at the A–B block the modelled attack actually produces.
    pub attack_holevo: f64,
}

impl KeyRatePoint {
    pub fn k_r_clamped(&self) -> f64 {
        self.k_r.max(0.0)
    }
}

/// Rate for a discrete-modulation source after the channel.
pub fn key_rate(src: &ThreeModeSource, ch: &ChannelParams, protocol: &Protocol, numerics: &Numerics) -> Result<KeyRatePoint> {
    protocol.validate()?;
    let pcm = apply_channel(src, ch)?;
    let problem = SearchProblem::new(&pcm, protocol.detection, src.is_standard_form())?;
    let bounds = kappa_bounds(problem.standardized())?;
    let sup = sup_holevo(&problem, &numerics.search)?;
    let i_ab = mutual_information(&pcm, protocol.detection, numerics.mi_points)?;
    let attack_holevo = protocol.detection.holevo(&pcm.with_kappa(&pcm.true_kappa()))?;
    let s_sup = sup.s_sup.max(0.0);
    Ok(KeyRatePoint {
        distance_km: None,
        transmittance: ch.transmittance,
        eps: ch.excess_noise,
        label: src.label().to_string(),
        i_ab,
        s_sup,
        k_r: protocol.beta * i_ab - s_sup,
        kappa_star: sup.kappa,
        search_iterations: sup.evaluations,
        feasible: true,
        method: Some(sup.method),
        margin: sup.margin,
        kappa_bounds: Some(bounds),
        attack_holevo,
    })
}

/// Two-mode EPR covariance matrix of variance `v` after the channel on B.
pub fn gaussian_reference_cm(v_mod: f64, ch: &ChannelParams) -> Result<CovarianceMatrix> {
    if !(v_mod > 1.0) || !v_mod.is_finite() {
        return Err(Error::OutOfRange {
            name: "V_mod",
            value: v_mod,
            range: "(1, inf)",
        });
    }
    let z = (ch.transmittance * (v_mod * v_mod - 1.0)).sqrt();
    let vb = ch.output_variance(v_mod);
    CovarianceMatrix::new(
        DMatrix::from_row_slice(
            4,
            4,
            &[
                v_mod, 0.0, z, 0.0, //
                0.0, v_mod, 0.0, -z, //
                z, 0.0, vb, 0.0, //
                0.0, -z, 0.0, vb,
            ],
        ),
        vec!["A".into(), "B".into()],
    )
}

/// Gaussian-modulation reverse-reconciliation rate at modulation variance `v_mod`.
pub fn gaussian_reference(v_mod: f64, ch: &ChannelParams, beta: f64, detection: Detection) -> Result<KeyRatePoint> {
    Protocol {
        beta,
        detection,
        eta_bs: 0.5,
    }
    .validate()?;
    let gamma = gaussian_reference_cm(v_mod, ch)?;
    let vb = gamma.get(2, 2);
    let vc = ch.conditional_variance();
    let i_ab = match detection {
        Detection::Heterodyne => ((vb + 1.0) / (vc + 1.0)).log2(),
        _ => 0.5 * (vb / vc).log2(),
    };
    let s = detection.holevo(&gamma)?.max(0.0);
    Ok(KeyRatePoint {
        distance_km: None,
        transmittance: ch.transmittance,
        eps: ch.excess_noise,
        label: "Gaussian".into(),
        i_ab,
        s_sup: s,
        k_r: beta * i_ab - s,
        kappa_star: KappaBlock::from_matrix(&gamma.block(0, 1)),
        search_iterations: 0,
        feasible: true,
        method: None,
        margin: uncertainty_margin(&gamma),
        kappa_bounds: None,
        attack_holevo: s,
    })
}

#[derive(Debug, Clone)]
pub enum SourceModel {
    Discrete(Box<ThreeModeSource>),
    Gaussian { v_mod: f64 },
}

/// Everything needed to evaluate the rate at a given channel.
#[derive(Debug, Clone)]
pub struct RateModel {
    pub source: SourceModel,
    pub protocol: Protocol,
    pub numerics: Numerics,
}

impl RateModel {
    pub fn discrete(constellation: &Constellation, protocol: Protocol, numerics: Numerics) -> Result<Self> {
        protocol.validate()?;
        let src = build_purification(constellation, &numerics.source)?;
        let three = split_on_beamsplitter(&src, protocol.eta_bs)?;
        Ok(Self {
            source: SourceModel::Discrete(Box::new(three)),
            protocol,
            numerics,
        })
    }

    pub fn gaussian(v_mod: f64, protocol: Protocol, numerics: Numerics) -> Result<Self> {
        protocol.validate()?;
        Ok(Self {
            source: SourceModel::Gaussian { v_mod },
            protocol,
            numerics,
        })
    }

    pub fn label(&self) -> &str {
        match &self.source {
            SourceModel::Discrete(s) => s.label(),
            SourceModel::Gaussian { .. } => "Gaussian",
        }
    }

    /// Channel-output covariance data for discrete sources.
    pub fn partial_cm(&self, ch: &ChannelParams) -> Option<Result<PartialCm>> {
        match &self.source {
            SourceModel::Discrete(s) => Some(apply_channel(s, ch)),
            SourceModel::Gaussian { .. } => None,
        }
    }

    pub fn evaluate(&self, ch: &ChannelParams, distance_km: Option<f64>) -> Result<KeyRatePoint> {
        let mut point = match &self.source {
            SourceModel::Discrete(s) => key_rate(s, ch, &self.protocol, &self.numerics)?,
            SourceModel::Gaussian { v_mod } => {
                gaussian_reference(*v_mod, ch, self.protocol.beta, self.protocol.detection)?
            }
        };
        point.distance_km = distance_km;
        Ok(point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseFrontier {
    pub eps_max: f64,
    pub k_r_at_eps_max: f64,
    pub evaluations: usize,
}

/// Largest excess noise with a positive key rate, by bisection to `tol`.
pub fn tolerable_excess_noise(
    model: &RateModel,
    transmittance: f64,
    convention: NoiseConvention,
    tol: f64,
) -> Result<NoiseFrontier> {
    let mut evaluations = 0;
    let mut rate = |eps: f64| -> Result<f64> {
        evaluations += 1;
        Ok(model
            .evaluate(&ChannelParams::new(transmittance, eps, convention)?, None)?
            .k_r)
    };
    let k0 = rate(0.0)?;
    if k0 <= 0.0 {
        return Err(Error::NoPositiveRate);
    }
    let (mut lo, mut k_lo, mut hi) = (0.0, k0, 0.05);
    loop {
        let k = rate(hi)?;
        if k <= 0.0 {
            break;
        }
        lo = hi;
        k_lo = k;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numerical("key rate stays positive at any excess noise".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let k = rate(mid)?;
        if k > 0.0 {
            lo = mid;
            k_lo = k;
        } else {
            hi = mid;
        }
    }
    Ok(NoiseFrontier {
        eps_max: lo,
        k_r_at_eps_max: k_lo,
        evaluations,
    })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub distance_km: Option<f64>,
    pub transmittance: f64,
    pub eps: f64,
    pub convention: NoiseConvention,
}

/// Evaluate every grid point in parallel; results keep the grid order.
pub fn sweep(model: &RateModel, grid: &[SweepPoint]) -> Vec<Result<KeyRatePoint>> {
    grid.par_iter()
        .map(|p| {
            let ch = ChannelParams::new(p.transmittance, p.eps, p.convention)?;
            model.evaluate(&ch, p.distance_km)
        })
        .collect()
}
