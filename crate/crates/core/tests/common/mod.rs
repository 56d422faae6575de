#![allow(dead_code)]

use cvqkd::keyrate::{Numerics, Protocol, RateModel};
use cvqkd::{
    build_purification, calibrate_r, qam_constellation, split_on_beamsplitter, ChannelParams, Constellation,
    NoiseConvention, PurifiedSource, SourceOptions, ThreeModeSource,
};

/// `(L, V_G)` pairs used at V_A = 5.
pub const FIG4_QAMS: [(usize, f64); 3] = [(4, 4.5), (8, 6.0), (16, 11.0)];

pub fn qam(side: usize, va: f64, vg: f64) -> Constellation {
    let r = calibrate_r(side, vg, va, 1e-13).unwrap();
    qam_constellation(side, r, vg).unwrap()
}

pub fn purified(side: usize, va: f64, vg: f64) -> PurifiedSource {
    build_purification(&qam(side, va, vg), &SourceOptions::default()).unwrap()
}

pub fn three_mode(side: usize, va: f64, vg: f64) -> ThreeModeSource {
    split_on_beamsplitter(&purified(side, va, vg), 0.9).unwrap()
}

pub fn model(side: usize, va: f64, vg: f64) -> RateModel {
    RateModel::discrete(&qam(side, va, vg), Protocol::default(), Numerics::default()).unwrap()
}

pub fn at_distance(d: f64, eps: f64, convention: NoiseConvention) -> ChannelParams {
    ChannelParams::from_distance(d, 0.2, eps, convention).unwrap()
}
