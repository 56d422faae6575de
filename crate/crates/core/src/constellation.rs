//! Discrete modulation alphabets.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::PROB_SUM_TOL;

/// Absolute tolerance on `V_x` used when calibrating the spacing.
pub const DEFAULT_CALIBRATION_TOL: f64 = 1e-12;

const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QamSpec {
    /// Points per side; the constellation has `side²` points.
    pub side: usize,
    pub half_spacing: f64,
    pub gaussian_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Qam(QamSpec),
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    probs: Vec<f64>,
    label: String,
    origin: Origin,
}

/// First and second moments of the quadratures `(2 Re β, 2 Im β)` plus vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>, probs: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::build(points, probs, label.into(), Origin::Custom)
    }

    fn build(points: Vec<Complex64>, probs: Vec<f64>, label: String, origin: Origin) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConstellation("no points".into()));
        }
        if points.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: probs.len(),
            });
        }
        for &p in &probs {
            if p < 0.0 || !p.is_finite() {
                return Err(Error::NegativeProbability(p));
            }
            if p == 0.0 {
                return Err(Error::InvalidConstellation("zero probability".into()));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Normalization { sum });
        }
        for (i, a) in points.iter().enumerate() {
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(Error::InvalidConstellation(format!("non-finite point {a}")));
            }
            for (j, b) in points.iter().enumerate().skip(i + 1) {
                if (a - b).norm() < DUPLICATE_TOL {
                    return Err(Error::DuplicatePoint { first: i, second: j });
                }
            }
        }
        Ok(Self {
            points,
            probs,
            label,
            origin,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_mean_photons(&self) -> f64 {
        self.points.iter().map(|b| b.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Whether the alphabet is a product of identical x and p marginals.
    pub fn is_separable(&self) -> bool {
        matches!(self.origin, Origin::Qam(_))
    }
}

/// Square QAM with points `(2μ−1−L)r + i(2ν−1−L)r` and discrete-Gaussian weights.
///
/// Weights are evaluated on the unit-spacing grid, so they do not depend on `r`.
pub fn qam_constellation(side: usize, half_spacing: f64, gaussian_variance: f64) -> Result<Constellation> {
    if side == 0 {
        return Err(Error::OutOfRange {
            name: "L",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    if !(half_spacing >= 0.0) || !half_spacing.is_finite() {
        return Err(Error::OutOfRange {
            name: "r",
            value: half_spacing,
            range: "[0, inf)",
        });
    }
    if !(gaussian_variance > 0.0) || !gaussian_variance.is_finite() {
        return Err(Error::OutOfRange {
            name: "V_G",
            value: gaussian_variance,
            range: "(0, inf)",
        });
    }
    if side > 1 && half_spacing == 0.0 {
        return Err(Error::InvalidConstellation("zero spacing with L > 1".into()));
    }
    let l = side as f64;
    let level = |k: usize| 2.0 * k as f64 + 1.0 - l;
    let mut points = Vec::with_capacity(side * side);
    let mut weights = Vec::with_capacity(side * side);
    for mu in 0..side {
        for nu in 0..side {
            let (a, b) = (level(mu), level(nu));
            points.push(Complex64::new(a * half_spacing, b * half_spacing));
            weights.push((-(a * a + b * b) / (2.0 * gaussian_variance)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    let probs = weights.into_iter().map(|w| w / total).collect();
    Constellation::build(
        points,
        probs,
        format!("{}-QAM", side * side),
        Origin::Qam(QamSpec {
            side,
            half_spacing,
            gaussian_variance,
        }),
    )
}

pub fn constellation_moments(c: &Constellation) -> Moments {
    let (mut mx, mut mp, mut sxx, mut spp, mut sxp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (b, &p) in c.points.iter().zip(&c.probs) {
        let (x, q) = (2.0 * b.re, 2.0 * b.im);
        mx += p * x;
        mp += p * q;
        sxx += p * x * x;
        spp += p * q * q;
        sxp += p * x * q;
    }
    Moments {
        mean_x: mx,
        mean_p: mp,
        var_x: 1.0 + sxx - mx * mx,
        var_p: 1.0 + spp - mp * mp,
        cov_xp: sxp - mx * mp,
    }
}

/// Half-spacing `r` such that the QAM constellation has `V_x = target_va`.
pub fn calibrate_r(side: usize, gaussian_variance: f64, target_va: f64, tol: f64) -> Result<f64> {
    if side < 2 {
        return Err(Error::Calibration(format!(
            "L = {side} has no spacing to calibrate"
        )));
    }
    if !(target_va > 1.0) || !target_va.is_finite() {
        return Err(Error::Calibration(format!("target V_A = {target_va} must exceed 1")));
    }
    let var = |r: f64| -> Result<f64> {
        Ok(constellation_moments(&qam_constellation(side, r, gaussian_variance)?).var_x)
    };
    let mut hi = 1.0;
    let mut tries = 0;
    while var(hi)? < target_va {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Calibration("could not bracket target".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = var(mid)?;
        if (v - target_va).abs() <= tol {
            return Ok(mid);
        }
        if v < target_va {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    let err = (var(r)? - target_va).abs();
    if err <= tol {
        Ok(r)
    } else {
        Err(Error::Calibration(format!(
            "bisection stalled with |V_x − target| = {err:e}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDoc {
    pub x: f64,
    pub p: f64,
    pub prob: f64,
}

/// Serialized constellation description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ConstellationDoc {
    Qam {
        #[serde(rename = "L")]
        side: usize,
        #[serde(rename = "r", default)]
        half_spacing: Option<f64>,
        #[serde(rename = "target_VA", default)]
        target_va: Option<f64>,
        #[serde(rename = "V_G")]
        gaussian_variance: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Custom {
        points: Vec<PointDoc>,
        #[serde(default)]
        auto_normalize: bool,
        #[serde(default)]
        label: Option<String>,
    },
}

pub fn load_constellation(doc: &ConstellationDoc) -> Result<Constellation> {
    match doc {
        ConstellationDoc::Qam {
            side,
            half_spacing,
            target_va,
            gaussian_variance,
            label,
        } => {
            let r = match (half_spacing, target_va) {
                (Some(r), None) => *r,
                (None, Some(v)) => calibrate_r(*side, *gaussian_variance, *v, DEFAULT_CALIBRATION_TOL)?,
                (None, None) if *side == 1 => 0.0,
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidConstellation(
                        "give either r or target_VA, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(Error::InvalidConstellation("missing r or target_VA".into()))
                }
            };
            let c = qam_constellation(*side, r, *gaussian_variance)?;
            Ok(match label {
                Some(l) => c.with_label(l.clone()),
                None => c,
            })
        }
        ConstellationDoc::Custom {
            points,
            auto_normalize,
            label,
        } => {
            let mut probs: Vec<f64> = points.iter().map(|p| p.prob).collect();
            if *auto_normalize {
                if let Some(&bad) = probs.iter().find(|&&p| p < 0.0) {
                    return Err(Error::NegativeProbability(bad));
                }
                let sum: f64 = probs.iter().sum();
                if !(sum > 0.0) {
                    return Err(Error::Normalization { sum });
                }
                probs.iter_mut().for_each(|p| *p /= sum);
            }
            Constellation::new(
                points.iter().map(|p| Complex64::new(p.x, p.p)).collect(),
                probs,
                label.clone().unwrap_or_else(|| "custom".into()),
            )
        }
    }
}
