//! Flat `key = value` configuration files.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chanmodel::NetworkParams;
use crate::error::{Error, Result};
use crate::nomacore::InterferenceForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ssd,
    Dsd,
    Ofdma,
    Exhaustive,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Ssd, Scheme::Dsd, Scheme::Ofdma, Scheme::Exhaustive];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ssd => "ssd",
            Scheme::Dsd => "dsd",
            Scheme::Ofdma => "ofdma",
            Scheme::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}` (expected ssd, dsd, ofdma or exhaustive)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyMode {
    /// New node positions for every instance.
    #[default]
    RedrawPerInstance,
    /// One topology, drawn from the campaign seed, shared by all instances.
    Fixed,
}

impl fmt::Display for TopologyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyMode::RedrawPerInstance => "redraw-per-instance",
            TopologyMode::Fixed => "fixed",
        })
    }
}

impl FromStr for TopologyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "redraw-per-instance" => Ok(TopologyMode::RedrawPerInstance),
            "fixed" => Ok(TopologyMode::Fixed),
            _ => Err(Error::Config(format!(
                "unknown topology_mode `{s}` (expected redraw-per-instance or fixed)"
            ))),
        }
    }
}

/// Optional sweep axes. An absent axis keeps the value from `params`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub n_pairs: Option<Vec<usize>>,
    pub q_u: Option<Vec<usize>>,
    pub q_l: Option<Vec<usize>>,
}

impl Sweep {
    pub fn is_empty(&self) -> bool {
        self.n_pairs.is_none() && self.q_u.is_none() && self.q_l.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: NetworkParams,
    pub scheme: Scheme,
    pub n_instances: usize,
    pub n_slots: usize,
    pub seed: u64,
    pub topology_mode: TopologyMode,
    pub sweep: Sweep,
    pub interference_form: InterferenceForm,
    pub output_dir: PathBuf,
    /// Run the blocking-pair scan on every ssd/dsd slot.
    pub check_stability: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            params: NetworkParams::default(),
            scheme: Scheme::Dsd,
            n_instances: 100,
            n_slots: 10,
            seed: 1,
            topology_mode: TopologyMode::default(),
            sweep: Sweep::default(),
            interference_form: InterferenceForm::default(),
            output_dir: PathBuf::from("out"),
            check_stability: true,
        }
    }
}

/// Every key accepted by [`SimConfig::set`], in file order.
pub const CONFIG_KEYS: &[&str] = &[
    "n_pairs",
    "n_subchannels",
    "q_u",
    "q_l",
    "p_sn_dbm",
    "q_r_dbm",
    "noise_psd_dbm_hz",
    "bandwidth_hz",
    "path_loss_alpha",
    "cell_side_m",
    "t_c",
    "edge_distance_m",
    "center_frequency_hz",
    "scheme",
    "n_instances",
    "n_slots",
    "seed",
    "topology_mode",
    "sweep_n_pairs",
    "sweep_q_u",
    "sweep_q_l",
    "interference_form",
    "output_dir",
    "check_stability",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

/// `a,b,c` or the inclusive range `a..b`.
pub fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let out: Vec<usize> = if let Some((a, b)) = value.split_once("..") {
        let a: usize = parse(key, a.trim())?;
        let b: usize = parse(key, b.trim())?;
        (a..=b).collect()
    } else {
        value
            .split(',')
            .map(|x| parse(key, x.trim()))
            .collect::<Result<_>>()?
    };
    if out.is_empty() {
        return Err(Error::Config(format!("`{key}` must list at least one value")));
    }
    Ok(out)
}

fn fmt_list(v: &Option<Vec<usize>>) -> Option<String> {
    v.as_ref()
        .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_instances == 0 {
            return Err(Error::Config("n_instances must be at least 1".into()));
        }
        if self.n_slots == 0 {
            return Err(Error::Config("n_slots must be at least 1".into()));
        }
        for (name, axis) in [
            ("sweep_n_pairs", &self.sweep.n_pairs),
            ("sweep_q_u", &self.sweep.q_u),
            ("sweep_q_l", &self.sweep.q_l),
        ] {
            if let Some(v) = axis {
                if v.is_empty() {
                    return Err(Error::Config(format!("`{name}` must list at least one value")));
                }
                if v.contains(&0) {
                    return Err(Error::Config(format!("`{name}` values must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let p = &mut self.params;
        match key {
            "n_pairs" => p.n_pairs = parse(key, value)?,
            "n_subchannels" => p.n_subchannels = parse(key, value)?,
            "q_u" => p.q_u = parse(key, value)?,
            "q_l" => p.q_l = parse(key, value)?,
            "p_sn_dbm" => p.p_sn_dbm = parse(key, value)?,
            "q_r_dbm" => p.q_r_dbm = parse(key, value)?,
            "noise_psd_dbm_hz" => p.noise_psd_dbm_hz = parse(key, value)?,
            "bandwidth_hz" => p.bandwidth_hz = parse(key, value)?,
            "path_loss_alpha" => p.path_loss_alpha = parse(key, value)?,
            "cell_side_m" => p.cell_side_m = parse(key, value)?,
            "t_c" => p.t_c = parse(key, value)?,
            "edge_distance_m" => p.edge_distance_m = parse(key, value)?,
            "center_frequency_hz" => p.center_frequency_hz = parse(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "n_instances" => self.n_instances = parse(key, value)?,
            "n_slots" => self.n_slots = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "topology_mode" => self.topology_mode = value.parse()?,
            "sweep_n_pairs" => self.sweep.n_pairs = Some(parse_list(key, value)?),
            "sweep_q_u" => self.sweep.q_u = Some(parse_list(key, value)?),
            "sweep_q_l" => self.sweep.q_l = Some(parse_list(key, value)?),
            "interference_form" => self.interference_form = value.parse()?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "check_stability" => self.check_stability = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a config file on top of `self`. Returns the keys that were set.
    pub fn apply_text(&mut self, text: &str) -> Result<Vec<String>> {
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if seen.iter().any(|s| s == key) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
            seen.push(key.to_string());
        }
        Ok(seen)
    }

    /// Defaults overlaid with `text`, validated.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders every key; `from_text(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut pairs: Vec<(&str, String)> = vec![
            ("n_pairs", p.n_pairs.to_string()),
            ("n_subchannels", p.n_subchannels.to_string()),
            ("q_u", p.q_u.to_string()),
            ("q_l", p.q_l.to_string()),
            ("p_sn_dbm", p.p_sn_dbm.to_string()),
            ("q_r_dbm", p.q_r_dbm.to_string()),
            ("noise_psd_dbm_hz", p.noise_psd_dbm_hz.to_string()),
            ("bandwidth_hz", p.bandwidth_hz.to_string()),
            ("path_loss_alpha", p.path_loss_alpha.to_string()),
            ("cell_side_m", p.cell_side_m.to_string()),
            ("t_c", p.t_c.to_string()),
            ("edge_distance_m", p.edge_distance_m.to_string()),
            ("center_frequency_hz", p.center_frequency_hz.to_string()),
            ("scheme", self.scheme.to_string()),
            ("n_instances", self.n_instances.to_string()),
            ("n_slots", self.n_slots.to_string()),
            ("seed", self.seed.to_string()),
            ("topology_mode", self.topology_mode.to_string()),
        ];
        for (k, v) in [
            ("sweep_n_pairs", fmt_list(&self.sweep.n_pairs)),
            ("sweep_q_u", fmt_list(&self.sweep.q_u)),
            ("sweep_q_l", fmt_list(&self.sweep.q_l)),
        ] {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        }
        pairs.push(("interference_form", self.interference_form.to_string()));
        pairs.push(("output_dir", self.output_dir.display().to_string()));
        pairs.push(("check_stability", self.check_stability.to_string()));
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
