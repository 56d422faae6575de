//! Run configuration: TOML document, `KEY=VALUE` overrides and defaulting.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use cvqkd::channel::{ChannelParams, NoiseConvention, DEFAULT_ATT_DB_PER_KM};
use cvqkd::constellation::{constellation_moments, load_constellation, Constellation, ConstellationDoc};
use cvqkd::keyrate::{Detection, Numerics, Protocol, SearchOptions, DEFAULT_MI_POINTS};
use cvqkd::source::{SourceOptions, DEFAULT_EIG_CLIP};

use crate::error::CliError;
use crate::output::fmt_num;

/// How a defaulted value is echoed in output metadata.
pub trait Echo: Copy {
    fn echo(self) -> String;
}

impl Echo for f64 {
    fn echo(self) -> String {
        fmt_num(self)
    }
}

impl Echo for usize {
    fn echo(self) -> String {
        self.to_string()
    }
}

impl Echo for bool {
    fn echo(self) -> String {
        self.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(rename = "T_C")]
    pub transmittance: Option<f64>,
    pub distance_km: Option<f64>,
    #[serde(rename = "eps_C")]
    pub eps: Option<f64>,
    pub convention: Option<NoiseConvention>,
    pub att_db_per_km: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub beta: Option<f64>,
    pub detection: Option<Detection>,
    #[serde(rename = "eta_BS")]
    pub eta_bs: Option<f64>,
    /// Modulation variance of the Gaussian reference.
    #[serde(rename = "V_mod")]
    pub v_mod: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub cutoff: Option<usize>,
    pub eig_clip: Option<f64>,
    pub search_tol: Option<f64>,
    pub grid_points: Option<usize>,
    pub mi_points: Option<usize>,
    pub noise_tol: Option<f64>,
    pub force_2d: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub distances_km: Option<Vec<f64>>,
    #[serde(rename = "T_C")]
    pub transmittances: Option<Vec<f64>>,
    #[serde(rename = "eps_C")]
    pub eps: Option<Vec<f64>>,
    pub gaussian_reference: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSeries {
    #[serde(rename = "L")]
    pub side: usize,
    #[serde(rename = "V_G")]
    pub gaussian_variances: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaScanSection {
    pub series: Option<Vec<EtaSeries>>,
    #[serde(rename = "V_A")]
    pub va: Option<Vec<f64>>,
    /// `[start, stop, count]`, evenly spaced and inclusive.
    #[serde(rename = "V_A_range")]
    pub va_range: Option<(f64, f64, usize)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierSection {
    pub distances_km: Option<Vec<f64>>,
    pub gaussian_reference: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub constellation: Option<OneOrMany<ConstellationDoc>>,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub eta_scan: EtaScanSection,
    #[serde(default)]
    pub frontier: FrontierSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A parsed configuration with its hash and the defaults filled in so far.
pub struct Loaded {
    pub config: RunConfig,
    pub sha256: String,
    pub defaults: Vec<String>,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Read the config file (if any), apply overrides and deserialize.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut hashed = table.clone();
    hashed.remove("output");
    let canonical = toml::to_string(&hashed).map_err(|e| CliError::Config(e.to_string()))?;
    let sha256 = hex::encode(Sha256::digest(canonical.as_bytes()));
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    Ok(Loaded {
        config,
        sha256,
        defaults: Vec::new(),
    })
}

impl Loaded {
    fn pick<T: Echo>(&mut self, value: Option<T>, default: T, key: &str) -> T {
        value.unwrap_or_else(|| {
            self.defaults.push(format!("{key}={}", default.echo()));
            default
        })
    }

    pub fn protocol(&mut self) -> Result<Protocol, CliError> {
        let d = Protocol::default();
        let p = Protocol {
            beta: self.pick(self.config.protocol.beta, d.beta, "protocol.beta"),
            detection: match self.config.protocol.detection {
                Some(det) => det,
                None => {
                    self.defaults.push("protocol.detection=homodyne".into());
                    d.detection
                }
            },
            eta_bs: self.pick(self.config.protocol.eta_bs, d.eta_bs, "protocol.eta_BS"),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn source_options(&mut self) -> SourceOptions {
        let (cutoff, eig_clip) = (self.config.numerics.cutoff, self.config.numerics.eig_clip);
        if cutoff.is_none() {
            self.defaults.push("numerics.cutoff=auto".into());
        }
        SourceOptions {
            cutoff,
            eig_clip: self.pick(eig_clip, DEFAULT_EIG_CLIP, "numerics.eig_clip"),
        }
    }

    pub fn numerics(&mut self) -> Result<Numerics, CliError> {
        let source = self.source_options();
        let n = &self.config.numerics;
        let (tol, grid, mi, noise, force) = (n.search_tol, n.grid_points, n.mi_points, n.noise_tol, n.force_2d);
        let d = SearchOptions::default();
        let numerics = Numerics {
            source,
            search: SearchOptions {
                tol: self.pick(tol, d.tol, "numerics.search_tol"),
                grid_points: self.pick(grid, d.grid_points, "numerics.grid_points"),
                force_2d: self.pick(force, false, "numerics.force_2d"),
            },
            mi_points: self.pick(mi, DEFAULT_MI_POINTS, "numerics.mi_points"),
            noise_tol: self.pick(noise, Numerics::default().noise_tol, "numerics.noise_tol"),
        };
        if !(numerics.search.tol > 0.0) || !(numerics.noise_tol > 0.0) || numerics.search.grid_points < 3 {
            return Err(CliError::Config(
                "numerics: tolerances must be positive and grid_points >= 3".into(),
            ));
        }
        Ok(numerics)
    }

    pub fn convention(&mut self) -> NoiseConvention {
        match self.config.channel.convention {
            Some(c) => c,
            None => {
                self.defaults.push("channel.convention=paper_cloner".into());
                NoiseConvention::default()
            }
        }
    }

    pub fn attenuation(&mut self) -> f64 {
        self.pick(self.config.channel.att_db_per_km, DEFAULT_ATT_DB_PER_KM, "channel.att_db_per_km")
    }

    /// Single channel for `keyrate`; returns the distance when one was given.
    pub fn channel(&mut self) -> Result<(ChannelParams, Option<f64>), CliError> {
        let convention = self.convention();
        let eps = self.pick(self.config.channel.eps, 0.0, "channel.eps_C");
        match (self.config.channel.transmittance, self.config.channel.distance_km) {
            (Some(_), Some(_)) => Err(CliError::Config("give channel.T_C or channel.distance_km, not both".into())),
            (Some(t), None) => Ok((ChannelParams::new(t, eps, convention)?, None)),
            (None, d) => {
                let d = self.pick(d, 0.0, "channel.distance_km");
                let att = self.attenuation();
                Ok((ChannelParams::from_distance(d, att, eps, convention)?, Some(d)))
            }
        }
    }

    pub fn constellations(&self) -> Result<Vec<Constellation>, CliError> {
        let docs = match &self.config.constellation {
            None => return Err(CliError::Config("missing [constellation] section".into())),
            Some(OneOrMany::One(d)) => vec![d.clone()],
            Some(OneOrMany::Many(v)) if v.is_empty() => {
                return Err(CliError::Config("empty constellation list".into()))
            }
            Some(OneOrMany::Many(v)) => v.clone(),
        };
        docs.iter()
            .map(|d| load_constellation(d).map_err(CliError::from))
            .collect()
    }

    /// Gaussian-reference modulation variance; defaults to the variance of
    /// mode B₀ of the first constellation.
    pub fn v_mod(&mut self, constellations: &[Constellation], eta_bs: f64) -> f64 {
        match self.config.protocol.v_mod {
            Some(v) => v,
            None => {
                let va = constellations
                    .first()
                    .map_or(1.0, |c| constellation_moments(c).var_x);
                let v = eta_bs * va + 1.0 - eta_bs;
                self.defaults.push(format!("protocol.V_mod={}", fmt_num(v)));
                v
            }
        }
    }
}
