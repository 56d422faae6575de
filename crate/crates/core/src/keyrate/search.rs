//! Feasible κ sets and the supremum of the Holevo bound over them.

use std::cell::Cell;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::Detection;
use crate::channel::PartialCm;
use crate::error::{Error, Result};
use crate::symplectic::{
    min_hermitian_eigenvalue, standardize_three_mode, uncertainty_margin, uncertainty_matrix,
    CovarianceMatrix, KappaBlock,
};

const INVPHI: f64 = 0.618_033_988_749_894_9;

/// Peak uncertainty margins above this count as a non-empty feasible set.
const EMPTY_TOL: f64 = 1e-10;

/// `φx = φp` within this counts as symmetric.
pub const PHI_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub tol: f64,
    pub grid_points: usize,
    pub force_2d: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            grid_points: 33,
            force_2d: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Reduced1d,
    Full2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisBounds {
    pub k11_center: f64,
    pub r_x: f64,
    pub k22_center: f64,
    pub r_p: f64,
}

impl AxisBounds {
    pub fn k11_range(&self) -> (f64, f64) {
        (self.k11_center - self.r_x, self.k11_center + self.r_x)
    }

    pub fn k22_range(&self) -> (f64, f64) {
        (self.k22_center - self.r_p, self.k22_center + self.r_p)
    }
}

/// Per-axis κ ranges from bisection, with the Schur-complement closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaBounds {
    pub bisection: AxisBounds,
    pub closed_form: Option<AxisBounds>,
}

impl KappaBounds {
    pub fn closed_form_agrees(&self, tol: f64) -> bool {
        self.closed_form.is_some_and(|c| {
            let b = &self.bisection;
            (c.k11_center - b.k11_center).abs() <= tol
                && (c.r_x - b.r_x).abs() <= tol
                && (c.k22_center - b.k22_center).abs() <= tol
                && (c.r_p - b.r_p).abs() <= tol
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupResult {
    pub s_sup: f64,
    /// Maximizer in the frame of the channel output.
    pub kappa: KappaBlock,
    /// Maximizer in the standardized frame.
    pub kappa_std: KappaBlock,
    pub evaluations: usize,
    pub method: SearchMethod,
    /// Smallest eigenvalue of `γ + iΩ` at the maximizer.
    pub margin: f64,
}

/// Maximum of `f` on `[lo, hi]`, assuming unimodality. Returns `(x, f(x))`.
pub(crate) fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64) {
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut iter = 0;
    while hi - lo > xtol && iter < 300 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        }
        iter += 1;
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Interval where a concave function is non-negative, inside `[lo, hi]`.
///
/// Returns `None` when its maximum is below `−EMPTY_TOL`. If the maximum is in
/// `[−EMPTY_TOL, 0)` the level set at the maximum is returned instead.
fn superlevel_interval<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let xtol = 1e-14 * (hi - lo).abs().max(1.0);
    let (peak, fpeak) = golden_max(&mut f, lo, hi, xtol);
    if fpeak < -EMPTY_TOL {
        return None;
    }
    let level = fpeak.min(0.0);
    let mut edge = |mut inside: f64, mut outside: f64| {
        if f(outside) >= level {
            return outside;
        }
        for _ in 0..200 {
            if (outside - inside).abs() <= xtol {
                break;
            }
            let mid = 0.5 * (inside + outside);
            if f(mid) >= level {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    let a = edge(peak, lo);
    let b = edge(peak, hi);
    Some((a, b))
}

fn principal(m: &DMatrix<Complex64>, idx: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Per-axis feasible ranges for `κ11` (with `κ12 = κ21 = 0`) and `κ22` on a
/// standardized covariance matrix, from the 5×5 principal submatrices of
/// `γ + iΩ` that contain only one of them.
pub fn kappa_bounds(std_gamma: &CovarianceMatrix) -> Result<KappaBounds> {
    let base = {
        let mut g = std_gamma.clone();
        g.set_block(0, 2, &KappaBlock::default().to_matrix());
        uncertainty_matrix(g.matrix())
    };
    let g = std_gamma.matrix();
    let axis = |b_index: usize, a_index: usize| -> Result<(f64, f64)> {
        let idx = [0, 1, 2, 3, b_index];
        let bound = (g[(a_index, a_index)] * g[(b_index, b_index)]).sqrt() * 1.01 + 1e-9;
        let lam = |k: f64| {
            let mut m = base.clone();
            m[(a_index, b_index)] = Complex64::new(k, 0.0);
            m[(b_index, a_index)] = Complex64::new(k, 0.0);
            min_hermitian_eigenvalue(&principal(&m, &idx))
        };
        let (lo, hi) = superlevel_interval(lam, -bound, bound).ok_or(Error::NoFeasiblePoint)?;
        Ok((0.5 * (lo + hi), 0.5 * (hi - lo)))
    };
    let (cx, rx) = axis(4, 0)?;
    let (cp, rp) = axis(5, 1)?;
    let bisection = AxisBounds {
        k11_center: cx,
        r_x: rx,
        k22_center: cp,
        r_p: rp,
    };

    // Schur complement of the A,C block: V_B − u† Γ₄⁻¹ u ≥ 0 is a quadratic in κ.
    let gamma4 = principal(&base, &[0, 1, 2, 3]);
    let closed_form = gamma4.try_inverse().and_then(|inv| {
        let quad = |a: usize, c: usize, phi: f64, vb: f64| {
            let gaa = inv[(a, a)].re;
            if gaa <= 0.0 {
                return None;
            }
            let center = -phi * inv[(a, c)].re / gaa;
            let r2 = center * center + (vb - phi * phi * inv[(c, c)].re) / gaa;
            (r2 >= 0.0).then(|| (center, r2.sqrt()))
        };
        let (cx, rx) = quad(0, 2, g[(2, 4)], g[(4, 4)])?;
        let (cp, rp) = quad(1, 3, g[(3, 5)], g[(5, 5)])?;
        Some(AxisBounds {
            k11_center: cx,
            r_x: rx,
            k22_center: cp,
            r_p: rp,
        })
    });
    Ok(KappaBounds {
        bisection,
        closed_form,
    })
}

/// The optimization problem for one channel output.
pub struct SearchProblem {
    base: CovarianceMatrix,
    base_uncertainty: DMatrix<Complex64>,
    inverse: Option<DMatrix<f64>>,
    phi_x: f64,
    phi_p: f64,
    detection: Detection,
    standard_source: bool,
    kappa_bound: f64,
    evaluations: Cell<usize>,
}

impl SearchProblem {
    pub fn new(pcm: &PartialCm, detection: Detection, standard_source: bool) -> Result<Self> {
        let std = standardize_three_mode(pcm.gamma())?;
        let inverse = if (&std.transform - DMatrix::<f64>::identity(6, 6)).amax() == 0.0 {
            None
        } else {
            Some(
                std.transform
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("singular standardizing map".into()))?,
            )
        };
        let g = std.gamma.matrix();
        let kappa_bound = (g[(0, 0)] * g[(4, 4)])
            .sqrt()
            .min((g[(1, 1)] * g[(5, 5)]).sqrt())
            * 1.01
            + 1e-9;
        Ok(Self {
            base_uncertainty: uncertainty_matrix(g),
            base: std.gamma,
            inverse,
            phi_x: std.phi_x,
            phi_p: std.phi_p,
            detection,
            standard_source,
            kappa_bound,
            evaluations: Cell::new(0),
        })
    }

    pub fn standardized(&self) -> &CovarianceMatrix {
        &self.base
    }

    pub fn phi(&self) -> (f64, f64) {
        (self.phi_x, self.phi_p)
    }

    /// Whether the search may be restricted to `κ11 + κ22 = 0`.
    pub fn reducible(&self) -> bool {
        let scale = self.phi_x.abs().max(self.phi_p.abs()).max(1.0);
        self.standard_source
            && self.detection.is_symmetric()
            && (self.phi_x - self.phi_p).abs() <= PHI_SYMMETRY_TOL * scale
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }

    fn gamma_std(&self, k11: f64, k22: f64) -> CovarianceMatrix {
        let mut g = self.base.clone();
        g.set_block(0, 2, &KappaBlock::diagonal(k11, k22).to_matrix());
        g
    }

    /// Map a standardized-frame κ back to the channel-output frame.
    pub fn to_output_frame(&self, k: &KappaBlock) -> KappaBlock {
        match &self.inverse {
            None => *k,
            Some(inv) => {
                let sa = inv.fixed_view::<2, 2>(0, 0).into_owned();
                let sb = inv.fixed_view::<2, 2>(4, 4).into_owned();
                KappaBlock::from_matrix(&(sa * k.to_matrix() * sb.transpose()))
            }
        }
    }

    /// Smallest eigenvalue of `γ + iΩ` at `(κ11, κ22)`.
    pub fn margin(&self, k11: f64, k22: f64) -> f64 {
        let mut m = self.base_uncertainty.clone();
        m[(0, 4)] = Complex64::new(k11, 0.0);
        m[(4, 0)] = Complex64::new(k11, 0.0);
        m[(1, 5)] = Complex64::new(k22, 0.0);
        m[(5, 1)] = Complex64::new(k22, 0.0);
        min_hermitian_eigenvalue(&m)
    }

    /// Holevo bound at `(κ11, κ22)` in the measurement frame.
    pub fn objective(&self, k11: f64, k22: f64) -> Result<f64> {
        self.evaluations.set(self.evaluations.get() + 1);
        let g = self.gamma_std(k11, k22);
        let g = match &self.inverse {
            None => g,
            Some(inv) => g.transformed(inv),
        };
        self.detection.holevo(&g)
    }

    fn objective_or_floor(&self, k11: f64, k22: f64) -> f64 {
        self.objective(k11, k22).unwrap_or(f64::NEG_INFINITY)
    }

    /// Feasible `k` on the line `(κ11, κ22) = (k + t, −k + t)`.
    pub fn line_interval(&self, t: f64) -> Option<(f64, f64)> {
        let b = self.kappa_bound + t.abs();
        superlevel_interval(|s| self.margin(s + t, -s + t), -b, b)
    }

    /// Largest margin reachable at offset `t` from the anti-diagonal.
    fn offset_peak(&self, t: f64) -> f64 {
        let b = self.kappa_bound + t.abs();
        golden_max(|s| self.margin(s + t, -s + t), -b, b, 1e-14 * b.max(1.0)).1
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n < 2 || hi <= lo {
            return vec![0.5 * (lo + hi)];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Max over `s` at fixed `t` of the objective; returns `(s, value)`.
    fn maximize_on_line(&self, t: f64, opts: &SearchOptions) -> Option<(f64, f64)> {
        let (lo, hi) = self.line_interval(t)?;
        let pts = Self::grid(lo, hi, opts.grid_points);
        let vals: Vec<f64> = pts
            .iter()
            .map(|&s| self.objective_or_floor(s + t, -s + t))
            .collect();
        let (j, &best) = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        if !best.is_finite() {
            return None;
        }
        if pts.len() < 3 {
            return Some((pts[j], best));
        }
        let a = pts[j.saturating_sub(1)];
        let b = pts[(j + 1).min(pts.len() - 1)];
        let xtol = opts.tol.min((hi - lo) / 1000.0).max(f64::EPSILON * hi.abs().max(1.0));
        let (s, v) = golden_max(|s| self.objective_or_floor(s + t, -s + t), a, b, xtol);
        Some(if v > best { (s, v) } else { (pts[j], best) })
    }

    fn finish(&self, k11: f64, k22: f64, s_sup: f64, method: SearchMethod) -> SupResult {
        let kappa_std = KappaBlock::diagonal(k11, k22);
        SupResult {
            s_sup,
            kappa: self.to_output_frame(&kappa_std),
            kappa_std,
            evaluations: self.evaluations(),
            method,
            margin: self.margin(k11, k22),
        }
    }

    pub fn search_1d(&self, opts: &SearchOptions) -> Result<SupResult> {
        let (s, v) = self.maximize_on_line(0.0, opts).ok_or(Error::NoFeasiblePoint)?;
        Ok(self.finish(s, -s, v, SearchMethod::Reduced1d))
    }

    pub fn search_2d(&self, opts: &SearchOptions) -> Result<SupResult> {
        let b = 2.0 * self.kappa_bound;
        let (t_lo, t_hi) =
            superlevel_interval(|t| self.offset_peak(t), -b, b).ok_or(Error::NoFeasiblePoint)?;
        let ts = Self::grid(t_lo, t_hi, opts.grid_points);
        let rows: Vec<Option<(f64, f64)>> = ts.iter().map(|&t| self.maximize_on_line(t, opts)).collect();
        let (j, (s_best, v_best)) = rows
            .iter()
            .enumerate()
            .filter_map(|(j, r)| r.map(|r| (j, r)))
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .ok_or(Error::NoFeasiblePoint)?;
        let (mut t_star, mut s_star, mut v_star) = (ts[j], s_best, v_best);
        if ts.len() >= 3 {
            let a = ts[j.saturating_sub(1)];
            let c = ts[(j + 1).min(ts.len() - 1)];
            let xtol = opts
                .tol
                .min((t_hi - t_lo) / 1000.0)
                .max(f64::EPSILON * t_hi.abs().max(1.0));
            let (t, v) = golden_max(
                |t| self.maximize_on_line(t, opts).map_or(f64::NEG_INFINITY, |r| r.1),
                a,
                c,
                xtol,
            );
            if v > v_star {
                if let Some((s, v)) = self.maximize_on_line(t, opts) {
                    t_star = t;
                    s_star = s;
                    v_star = v;
                }
            }
        }
        Ok(self.finish(s_star + t_star, -s_star + t_star, v_star, SearchMethod::Full2d))
    }
}

/// Supremum of the Holevo bound over the feasible κ set.
pub fn sup_holevo(problem: &SearchProblem, opts: &SearchOptions) -> Result<SupResult> {
    if problem.reducible() && !opts.force_2d {
        problem.search_1d(opts)
    } else {
        problem.search_2d(opts)
    }
}

/// Margin of `γ + iΩ` at a given κ in the channel-output frame.
pub fn margin_at(pcm: &PartialCm, kappa: &KappaBlock) -> f64 {
    uncertainty_margin(&pcm.with_kappa(kappa))
}
