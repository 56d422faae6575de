mod common;

use cvqkd::keyrate::{kappa_bounds, Detection, SearchOptions, SearchProblem};
use cvqkd::symplectic::{block_diagonal, uncertainty_margin, CovarianceMatrix, KappaBlock};
use cvqkd::{apply_channel, build_purification, split_on_beamsplitter, Constellation, NoiseConvention, PartialCm, SourceOptions};
use nalgebra::Matrix2;
use num_complex::Complex64;
use proptest::prelude::*;

use common::{at_distance, three_mode, FIG4_QAMS};

fn qam_output(side: usize, vg: f64, d: f64, eps: f64, convention: NoiseConvention) -> PartialCm {
    apply_channel(&three_mode(side, 5.0, vg), &at_distance(d, eps, convention)).unwrap()
}

/// Four states on a rectangle, so the x and p correlations differ.
fn rectangular_output(d: f64, eps: f64) -> (PartialCm, bool) {
    let pts = [(0.8, 0.5), (-0.8, 0.5), (0.8, -0.5), (-0.8, -0.5)]
        .iter()
        .map(|&(x, p)| Complex64::new(x, p))
        .collect();
    let c = Constellation::new(pts, vec![0.25; 4], "rect").unwrap();
    let src = build_purification(&c, &SourceOptions::default()).unwrap();
    let three = split_on_beamsplitter(&src, 0.9).unwrap();
    let std = three.is_standard_form();
    (apply_channel(&three, &at_distance(d, eps, NoiseConvention::InputReferred)).unwrap(), std)
}

#[test]
fn sources_and_outputs_are_physical() {
    for (side, vg) in FIG4_QAMS {
        let three = three_mode(side, 5.0, vg);
        assert!(uncertainty_margin(three.gamma()) >= -1e-8);
        for convention in [NoiseConvention::PaperCloner, NoiseConvention::InputReferred] {
            let pcm = qam_output(side, vg, 25.0, 0.02, convention);
            assert!(uncertainty_margin(&pcm.with_kappa(&pcm.true_kappa())) >= -1e-8);
        }
    }
}

#[test]
fn feasible_line_ends_sit_on_the_boundary() {
    for (side, vg) in FIG4_QAMS {
        for d in [0.0, 10.0, 50.0] {
            let pcm = qam_output(side, vg, d, 0.01, NoiseConvention::InputReferred);
            let problem = SearchProblem::new(&pcm, Detection::Homodyne, true).unwrap();
            let (lo, hi) = problem.line_interval(0.0).unwrap();
            for s in [lo, hi] {
                let m = problem.margin(s, -s);
                assert!((-1e-6..=1e-6).contains(&m), "{side} {d}: {m:e}");
            }
            for t in [-0.05, 0.03] {
                if let Some((lo, hi)) = problem.line_interval(t) {
                    for s in [lo, hi] {
                        let m = problem.margin(s + t, -s + t);
                        assert!((-1e-6..=1e-6).contains(&m), "{side} {d} t={t}: {m:e}");
                    }
                }
            }
        }
    }
}

#[test]
fn closed_form_bounds_agree_with_bisection() {
    for (side, vg) in FIG4_QAMS {
        for d in [0.0, 25.0, 80.0] {
            let pcm = qam_output(side, vg, d, 0.03, NoiseConvention::InputReferred);
            let problem = SearchProblem::new(&pcm, Detection::Homodyne, true).unwrap();
            let b = kappa_bounds(problem.standardized()).unwrap();
            assert!(b.closed_form_agrees(1e-6), "{side} {d}: {b:?}");
            let (lo, hi) = b.bisection.k11_range();
            let truth = pcm.true_kappa();
            if d > 0.0 {
                assert!(truth.k11 > lo && truth.k11 < hi, "{truth:?} {b:?}");
            }
        }
    }
}

fn with_block(base: &CovarianceMatrix, k: KappaBlock) -> CovarianceMatrix {
    let mut g = base.clone();
    g.set_block(0, 2, &k.to_matrix());
    g
}

/// `(x, p) → (−p, −x)` on A and `(x, p) → (p, x)` on C and B.
fn xp_map(g: &CovarianceMatrix) -> CovarianceMatrix {
    let a = Matrix2::new(0.0, -1.0, -1.0, 0.0);
    let s = Matrix2::new(0.0, 1.0, 1.0, 0.0);
    g.transformed(&block_diagonal(&[a, s, s]))
}

const DETECTIONS: [Detection; 4] = [
    Detection::Homodyne,
    Detection::HomodyneX,
    Detection::HomodyneP,
    Detection::Heterodyne,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn holevo_symmetries(d in 1.0f64..60.0, eps in 0.0f64..0.05, u in 0.0f64..1.0, w in -0.3f64..0.3) {
        let (pcm, _) = rectangular_output(d, eps);
        let problem = SearchProblem::new(&pcm, Detection::HomodyneX, false).unwrap();
        let base = problem.standardized().clone();
        let star = problem.search_2d(&SearchOptions::default()).unwrap().kappa_std;
        let t = 0.5 * (star.k11 + star.k22);
        let (lo, hi) = problem.line_interval(t).unwrap();
        let s = lo + (0.2 + 0.6 * u) * (hi - lo);
        let (k11, k22) = (s + t, -s + t);
        let k = KappaBlock { k11, k12: w * 0.01, k21: -w * 0.005, k22 };
        let g = with_block(&base, k);
        prop_assume!(uncertainty_margin(&g) >= 0.0);
        let flipped = with_block(&base, KappaBlock { k12: -k.k12, k21: -k.k21, ..k });
        let mapped = xp_map(&with_block(&base, KappaBlock::diagonal(k11, k22)));
        let g_diag = with_block(&base, KappaBlock::diagonal(k11, k22));
        prop_assert!((mapped.block(0, 2)[(0, 0)] + k22).abs() < 1e-12);
        for det in DETECTIONS {
            let h = det.holevo(&g).unwrap();
            prop_assert!((h - det.holevo(&flipped).unwrap()).abs() < 1e-6);
            let h = det.holevo(&g_diag).unwrap();
            prop_assert!((h - det.swapped().holevo(&mapped).unwrap()).abs() < 1e-6);
        }
    }
}

#[test]
fn reduced_search_matches_full_search() {
    let opts = SearchOptions::default();
    for (side, vg) in FIG4_QAMS {
        for convention in [NoiseConvention::PaperCloner, NoiseConvention::InputReferred] {
            for (d, eps) in [(0.0, 0.0), (5.0, 0.01), (30.0, 0.05), (80.0, 0.02)] {
                let pcm = qam_output(side, vg, d, eps, convention);
                for det in [Detection::Homodyne, Detection::Heterodyne] {
                    let problem = SearchProblem::new(&pcm, det, true).unwrap();
                    assert!(problem.reducible());
                    let one = problem.search_1d(&opts).unwrap().s_sup;
                    let two = problem.search_2d(&opts).unwrap().s_sup;
                    assert!((one - two).abs() < 1e-5, "{side} {convention:?} {d} {det:?}: {one} vs {two}");
                }
            }
        }
    }
}

#[test]
fn asymmetric_source_is_not_reduced() {
    let (pcm, standard) = rectangular_output(20.0, 0.01);
    assert!(!standard);
    let problem = SearchProblem::new(&pcm, Detection::Homodyne, standard).unwrap();
    let (px, pp) = problem.phi();
    assert!((px - pp).abs() > 1e-3);
    assert!(!problem.reducible());
    let sup = problem.search_2d(&SearchOptions::default()).unwrap();
    let attack = Detection::Homodyne.holevo(&pcm.with_kappa(&pcm.true_kappa())).unwrap();
    assert!(attack <= sup.s_sup + 1e-6, "{attack} > {}", sup.s_sup);
    assert!(sup.margin >= -1e-6);
}
