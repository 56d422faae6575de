//! Mutual information between Alice's symbol and Bob's measurement outcome.
//!
//! The output entropy of the Gaussian mixture is integrated with composite
//! Simpson's rule over `±(max|mean| + 10σ)`.

use std::f64::consts::{LN_2, PI};

use super::Detection;
use crate::channel::{PartialCm, Quadrature};
use crate::error::{Error, Result};

pub const DEFAULT_MI_POINTS: usize = 4001;
pub const MIN_MI_POINTS: usize = 2001;

/// Largest change in `I_AB` tolerated when the grid is doubled.
pub const MI_SELF_CHECK_TOL: f64 = 1e-6;

const MERGE_TOL: f64 = 1e-12;

/// Collapse components with equal means; returns `(mean, weight)` sorted by mean.
fn merge_components(means: impl Iterator<Item = f64>, probs: &[f64]) -> Vec<(f64, f64)> {
    let mut comps: Vec<(f64, f64)> = means.zip(probs.iter().copied()).collect();
    comps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(comps.len());
    for (m, p) in comps {
        match merged.last_mut() {
            Some(last) if (m - last.0).abs() <= MERGE_TOL * m.abs().max(1.0) => last.1 += p,
            _ => merged.push((m, p)),
        }
    }
    merged
}

fn simpson_weights(n: usize, h: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w * h / 3.0
    })
}

fn odd(n: usize) -> usize {
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

/// Differential entropy in bits of `Σ w_k N(m_k, var)`.
fn mixture_entropy(comps: &[(f64, f64)], var: f64, n: usize) -> f64 {
    let n = odd(n);
    let sigma = var.sqrt();
    let reach = comps.iter().map(|c| c.0.abs()).fold(0.0, f64::max) + 10.0 * sigma;
    let h = 2.0 * reach / (n - 1) as f64;
    let norm = 1.0 / (2.0 * PI * var).sqrt();
    let mut acc = 0.0;
    for (i, w) in simpson_weights(n, h).enumerate() {
        let x = -reach + h * i as f64;
        let f: f64 = comps
            .iter()
            .map(|&(m, p)| p * (-(x - m) * (x - m) / (2.0 * var)).exp())
            .sum::<f64>()
            * norm;
        if f > 0.0 {
            acc -= w * f * f.ln();
        }
    }
    acc / LN_2
}

fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E * var).log2()
}

/// `I(i; y)` for `y = m_i + N(0, var)`.
fn scalar_information(comps: &[(f64, f64)], var: f64, n: usize) -> f64 {
    if comps.len() <= 1 {
        return 0.0;
    }
    (mixture_entropy(comps, var, n) - gaussian_entropy(var)).max(0.0)
}

/// Two-dimensional version for heterodyne data that do not factorize.
fn planar_information(means: &[[f64; 2]], probs: &[f64], var: f64, n: usize) -> f64 {
    if means.len() <= 1 {
        return 0.0;
    }
    let n = odd(n);
    let sigma = var.sqrt();
    let reach = means
        .iter()
        .flat_map(|m| [m[0].abs(), m[1].abs()])
        .fold(0.0, f64::max)
        + 10.0 * sigma;
    let h = 2.0 * reach / (n - 1) as f64;
    let weights: Vec<f64> = simpson_weights(n, h).collect();
    let norm = 1.0 / (2.0 * PI * var);
    let mut acc = 0.0;
    for (i, wi) in weights.iter().enumerate() {
        let x = -reach + h * i as f64;
        let ex: Vec<f64> = means
            .iter()
            .zip(probs)
            .map(|(m, p)| p * (-(x - m[0]) * (x - m[0]) / (2.0 * var)).exp())
            .collect();
        for (j, wj) in weights.iter().enumerate() {
            let y = -reach + h * j as f64;
            let f: f64 = means
                .iter()
                .zip(&ex)
                .map(|(m, e)| e * (-(y - m[1]) * (y - m[1]) / (2.0 * var)).exp())
                .sum::<f64>()
                * norm;
            if f > 0.0 {
                acc -= wi * wj * f * f.ln();
            }
        }
    }
    (acc / LN_2 - 2.0 * gaussian_entropy(var)).max(0.0)
}

fn homodyne(pcm: &PartialCm, q: Quadrature, n: usize) -> f64 {
    let comps = merge_components(pcm.means_b().iter().map(|m| m[q.index()]), pcm.probs());
    scalar_information(&comps, pcm.conditional_variance(), n)
}

fn heterodyne(pcm: &PartialCm, n: usize) -> f64 {
    let var = 0.5 * (pcm.conditional_variance() + 1.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if pcm.is_separable() {
        [Quadrature::X, Quadrature::P]
            .iter()
            .map(|&q| {
                let comps = merge_components(pcm.means_b().iter().map(|m| s * m[q.index()]), pcm.probs());
                scalar_information(&comps, var, n)
            })
            .sum()
    } else {
        let means: Vec<[f64; 2]> = pcm.means_b().iter().map(|m| [s * m[0], s * m[1]]).collect();
        planar_information(&means, pcm.probs(), var, (n - 1) / 10 + 1)
    }
}

fn evaluate(pcm: &PartialCm, detection: Detection, n: usize) -> f64 {
    match detection {
        Detection::HomodyneX => homodyne(pcm, Quadrature::X, n),
        Detection::HomodyneP => homodyne(pcm, Quadrature::P, n),
        Detection::Homodyne => 0.5 * (homodyne(pcm, Quadrature::X, n) + homodyne(pcm, Quadrature::P, n)),
        Detection::Heterodyne => heterodyne(pcm, n),
    }
}

/// `I_AB` in bits per use, integrated on `points` nodes and verified against
/// a grid of twice the density.
pub fn mutual_information(pcm: &PartialCm, detection: Detection, points: usize) -> Result<f64> {
    if points < MIN_MI_POINTS {
        return Err(Error::OutOfRange {
            name: "mi_points",
            value: points as f64,
            range: "[2001, inf)",
        });
    }
    let coarse = evaluate(pcm, detection, points);
    let fine = evaluate(pcm, detection, 2 * odd(points) - 1);
    let change = (coarse - fine).abs();
    if change > MI_SELF_CHECK_TOL {
        return Err(Error::IntegrationNotConverged(change));
    }
    Ok(coarse)
}

/// `I_AB` on a single grid, without the self-check.
pub fn mutual_information_unchecked(pcm: &PartialCm, detection: Detection, points: usize) -> f64 {
    evaluate(pcm, detection, points)
}
