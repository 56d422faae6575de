use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use cvqkd::channel::{distance_to_transmittance, NoiseConvention};
use cvqkd::constellation::{calibrate_r, qam_constellation, DEFAULT_CALIBRATION_TOL};
use cvqkd::keyrate::{
    key_rate, sweep as run_sweep, tolerable_excess_noise, KeyRatePoint, Numerics, RateModel, SweepPoint,
};
use cvqkd::source::{build_purification, split_on_beamsplitter, SourceDiagnostics, SourceOptions};
use cvqkd::Error;

use crate::config::{Format, Loaded};
use crate::error::CliError;
use crate::output::{fmt_num, fmt_opt, json, Csv, Metadata};

pub struct Output {
    pub text: String,
    pub partial: bool,
    pub path: Option<PathBuf>,
}

impl Output {
    fn new(text: String, partial: bool) -> Self {
        Self {
            text,
            partial,
            path: None,
        }
    }
}

fn describe(e: &Error) -> String {
    format!("{}: {e}", e.class())
}

#[derive(Serialize)]
struct EtaRow {
    qam_n: usize,
    #[serde(rename = "V_G")]
    vg: f64,
    #[serde(rename = "V_A")]
    va: f64,
    r: Option<f64>,
    one_minus_eta_a: Option<f64>,
    cutoff: Option<usize>,
    error: Option<String>,
}

fn eta_row(side: usize, vg: f64, va: f64, opts: &SourceOptions) -> EtaRow {
    let computed = calibrate_r(side, vg, va, DEFAULT_CALIBRATION_TOL).and_then(|r| {
        let c = qam_constellation(side, r, vg)?;
        let s = build_purification(&c, opts)?;
        Ok((r, 1.0 - s.eta_a(), s.cutoff()))
    });
    let (r, eta, cutoff, error) = match computed {
        Ok((r, e, c)) => (Some(r), Some(e), Some(c), None),
        Err(e) => (None, None, None, Some(describe(&e))),
    };
    EtaRow {
        qam_n: side * side,
        vg,
        va,
        r,
        one_minus_eta_a: eta,
        cutoff,
        error,
    }
}

pub fn eta_scan(cfg: &mut Loaded, format: Format) -> Result<Output, CliError> {
    let series = cfg
        .config
        .eta_scan
        .series
        .clone()
        .ok_or_else(|| CliError::Config("missing eta_scan.series".into()))?;
    let vas: Vec<f64> = match (&cfg.config.eta_scan.va, cfg.config.eta_scan.va_range) {
        (Some(v), None) => v.clone(),
        (None, Some((a, b, n))) if n >= 2 => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        (None, Some((a, _, 1))) => vec![a],
        (Some(_), Some(_)) => return Err(CliError::Config("give eta_scan.V_A or eta_scan.V_A_range, not both".into())),
        _ => return Err(CliError::Config("missing eta_scan.V_A".into())),
    };
    let opts = cfg.source_options();
    let grid: Vec<(usize, f64, f64)> = series
        .iter()
        .flat_map(|s| {
            let vas = &vas;
            s.gaussian_variances
                .iter()
                .flat_map(move |&vg| vas.iter().map(move |&va| (s.side, vg, va)))
        })
        .collect();
    let rows: Vec<EtaRow> = grid
        .par_iter()
        .map(|&(side, vg, va)| eta_row(side, vg, va, &opts))
        .collect();
    let partial = rows.iter().any(|r| r.error.is_some());
    let meta = Metadata::new("eta-scan", &cfg.sha256, &cfg.defaults)
        .with("calibration_tol", fmt_num(DEFAULT_CALIBRATION_TOL));
    let text = match format {
        Format::Json => json(&meta, serde_json::json!({ "rows": rows })),
        Format::Csv => {
            let mut csv = Csv::new(&meta, &["qam_n", "V_G", "V_A", "r", "one_minus_eta_A", "cutoff", "error"]);
            for r in &rows {
                csv.row(&[
                    r.qam_n.to_string(),
                    fmt_num(r.vg),
                    fmt_num(r.va),
                    fmt_opt(r.r),
                    fmt_opt(r.one_minus_eta_a),
                    r.cutoff.map(|c| c.to_string()).unwrap_or_default(),
                    r.error.clone().unwrap_or_default(),
                ]);
            }
            csv.finish()
        }
    };
    Ok(Output::new(text, partial))
}

const SWEEP_HEADER: [&str; 9] = [
    "distance_km",
    "T_C",
    "eps_C",
    "constellation",
    "I_AB",
    "S_sup",
    "K_R",
    "K_R_clamped",
    "error",
];

fn sweep_fields(grid: &SweepPoint, label: &str, result: &Result<KeyRatePoint, Error>) -> Vec<String> {
    let mut f = vec![
        fmt_opt(grid.distance_km),
        fmt_num(grid.transmittance),
        fmt_num(grid.eps),
        label.to_string(),
    ];
    match result {
        Ok(p) => f.extend([
            fmt_num(p.i_ab),
            fmt_num(p.s_sup),
            fmt_num(p.k_r),
            fmt_num(p.k_r_clamped()),
            String::new(),
        ]),
        Err(e) => f.extend([String::new(), String::new(), String::new(), String::new(), describe(e)]),
    }
    f
}

#[derive(Serialize)]
struct KeyrateDoc {
    result: KeyRatePoint,
    source: SourceDiagnostics,
}

pub fn keyrate(cfg: &mut Loaded, format: Format) -> Result<Output, CliError> {
    let constellations = cfg.constellations()?;
    if constellations.len() != 1 {
        return Err(CliError::Config("keyrate takes exactly one constellation".into()));
    }
    let protocol = cfg.protocol()?;
    let numerics = cfg.numerics()?;
    let (ch, distance) = cfg.channel()?;
    let src = build_purification(&constellations[0], &numerics.source)?;
    let three = split_on_beamsplitter(&src, protocol.eta_bs)?;
    let mut point = key_rate(&three, &ch, &protocol, &numerics)?;
    point.distance_km = distance;
    let meta = Metadata::new("keyrate", &cfg.sha256, &cfg.defaults);
    let text = match format {
        Format::Json => json(
            &meta,
            KeyrateDoc {
                result: point,
                source: src.diagnostics(),
            },
        ),
        Format::Csv => {
            let mut csv = Csv::new(&meta, &SWEEP_HEADER);
            let grid = SweepPoint {
                distance_km: distance,
                transmittance: ch.transmittance,
                eps: ch.excess_noise,
                convention: ch.convention,
            };
            let label = point.label.clone();
            csv.row(&sweep_fields(&grid, &label, &Ok(point)));
            csv.finish()
        }
    };
    Ok(Output::new(text, false))
}

/// Models in output order: each constellation, then the Gaussian reference.
fn build_models(
    cfg: &mut Loaded,
    gaussian: bool,
    numerics: Numerics,
) -> Result<Vec<(String, Result<RateModel, Error>)>, CliError> {
    let constellations = cfg.constellations()?;
    let protocol = cfg.protocol()?;
    let mut models: Vec<(String, Result<RateModel, Error>)> = constellations
        .par_iter()
        .map(|c| (c.label().to_string(), RateModel::discrete(c, protocol, numerics)))
        .collect();
    if gaussian {
        let v = cfg.v_mod(&constellations, protocol.eta_bs);
        models.push(("Gaussian".into(), RateModel::gaussian(v, protocol, numerics)));
    }
    Ok(models)
}

fn flag(cfg: &mut Loaded, value: Option<bool>, key: &str) -> bool {
    value.unwrap_or_else(|| {
        cfg.defaults.push(format!("{key}=false"));
        false
    })
}

pub fn sweep(cfg: &mut Loaded, format: Format) -> Result<Output, CliError> {
    let convention = cfg.convention();
    let eps_list = match cfg.config.sweep.eps.clone() {
        Some(v) => v,
        None => {
            let e = cfg.config.channel.eps.unwrap_or(0.0);
            cfg.defaults.push(format!("sweep.eps_C=[{}]", fmt_num(e)));
            vec![e]
        }
    };
    let positions: Vec<(Option<f64>, f64)> = match (
        cfg.config.sweep.distances_km.clone(),
        cfg.config.sweep.transmittances.clone(),
    ) {
        (Some(_), Some(_)) => return Err(CliError::Config("give sweep.distances_km or sweep.T_C, not both".into())),
        (Some(ds), None) => {
            let att = cfg.attenuation();
            ds.iter()
                .map(|&d| Ok((Some(d), distance_to_transmittance(d, att)?)))
                .collect::<Result<_, Error>>()?
        }
        (None, Some(ts)) => ts.iter().map(|&t| (None, t)).collect(),
        (None, None) => {
            cfg.defaults.push("sweep.distances_km=[]".into());
            Vec::new()
        }
    };
    let grid: Vec<SweepPoint> = eps_list
        .iter()
        .flat_map(|&eps| {
            positions.iter().map(move |&(distance_km, transmittance)| SweepPoint {
                distance_km,
                transmittance,
                eps,
                convention,
            })
        })
        .collect();
    let gaussian = flag(cfg, cfg.config.sweep.gaussian_reference, "sweep.gaussian_reference");
    let models = if grid.is_empty() && cfg.config.constellation.is_none() {
        Vec::new()
    } else {
        let numerics = cfg.numerics()?;
        build_models(cfg, gaussian, numerics)?
    };

    let mut rows: Vec<(SweepPoint, String, Result<KeyRatePoint, Error>)> = Vec::new();
    for (label, model) in &models {
        match model {
            Ok(m) => {
                for (g, r) in grid.iter().zip(run_sweep(m, &grid)) {
                    rows.push((*g, label.clone(), r));
                }
            }
            Err(e) => {
                for g in &grid {
                    rows.push((*g, label.clone(), Err(e.clone())));
                }
            }
        }
    }
    let partial = rows.iter().any(|r| r.2.is_err());
    let meta = Metadata::new("sweep", &cfg.sha256, &cfg.defaults);
    let text = match format {
        Format::Csv => {
            let mut csv = Csv::new(&meta, &SWEEP_HEADER);
            for (g, label, r) in &rows {
                csv.row(&sweep_fields(g, label, r));
            }
            csv.finish()
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(g, label, r)| match r {
                    Ok(p) => serde_json::json!({ "constellation": label, "grid": g, "result": p }),
                    Err(e) => serde_json::json!({ "constellation": label, "grid": g, "error": describe(e) }),
                })
                .collect();
            json(&meta, serde_json::json!({ "rows": rows }))
        }
    };
    Ok(Output::new(text, partial))
}

pub fn noise_frontier(cfg: &mut Loaded, format: Format) -> Result<Output, CliError> {
    let convention: NoiseConvention = cfg.convention();
    let att = cfg.attenuation();
    let distances = match cfg.config.frontier.distances_km.clone() {
        Some(d) => d,
        None => {
            cfg.defaults.push("frontier.distances_km=[]".into());
            Vec::new()
        }
    };
    let positions: Vec<(f64, f64)> = distances
        .iter()
        .map(|&d| Ok((d, distance_to_transmittance(d, att)?)))
        .collect::<Result<_, Error>>()?;
    let gaussian = flag(cfg, cfg.config.frontier.gaussian_reference, "frontier.gaussian_reference");
    let numerics = cfg.numerics()?;
    let noise_tol = numerics.noise_tol;
    let models = build_models(cfg, gaussian, numerics)?;

    let jobs: Vec<(usize, f64, f64)> = (0..models.len())
        .flat_map(|m| positions.iter().map(move |&(d, t)| (m, d, t)))
        .collect();
    let results: Vec<Result<(f64, f64), Error>> = jobs
        .par_iter()
        .map(|&(m, _, t)| match &models[m].1 {
            Ok(model) => tolerable_excess_noise(model, t, convention, noise_tol).map(|f| (f.eps_max, f.k_r_at_eps_max)),
            Err(e) => Err(e.clone()),
        })
        .collect();
    let partial = results
        .iter()
        .any(|r| matches!(r, Err(e) if *e != Error::NoPositiveRate));
    let meta = Metadata::new("noise-frontier", &cfg.sha256, &cfg.defaults).with("noise_tol", fmt_num(noise_tol));
    let text = match format {
        Format::Csv => {
            let mut csv = Csv::new(
                &meta,
                &["distance_km", "T_C", "constellation", "eps_max", "K_R_at_eps_max", "reason"],
            );
            for (&(m, d, t), r) in jobs.iter().zip(&results) {
                let (eps, k, reason) = match r {
                    Ok((e, k)) => (fmt_num(*e), fmt_num(*k), String::new()),
                    Err(e) => (String::new(), String::new(), describe(e)),
                };
                csv.row(&[fmt_num(d), fmt_num(t), models[m].0.clone(), eps, k, reason]);
            }
            csv.finish()
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = jobs
                .iter()
                .zip(&results)
                .map(|(&(m, d, t), r)| match r {
                    Ok((e, k)) => serde_json::json!({
                        "distance_km": d, "T_C": t, "constellation": models[m].0,
                        "eps_max": e, "K_R_at_eps_max": k,
                    }),
                    Err(e) => serde_json::json!({
                        "distance_km": d, "T_C": t, "constellation": models[m].0, "reason": describe(e),
                    }),
                })
                .collect();
            json(&meta, serde_json::json!({ "rows": rows }))
        }
    };
    Ok(Output::new(text, partial))
}
