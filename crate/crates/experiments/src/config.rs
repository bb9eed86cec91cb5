use std::path::{Path, PathBuf};

use nmqfi_core::gaussian::SqueezingParam;
use nmqfi_core::spectral::SpectralParams;
use nmqfi_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use toml::Value;

/// Shipped defaults; user files are merged over this table.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub params: Params,
    pub time: Time,
    pub run: Run,
    pub figure1a: Figure1a,
    pub figure1b: Figure1b,
    pub figure1cd: SeriesSet,
    pub figure2a: NBarSweep,
    pub figure2b: NBarSweep,
    pub sweep: Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub eta: f64,
    pub s: f64,
    pub omega0: f64,
    pub kappa: f64,
    pub omega_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Time {
    pub t_max: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub tol: f64,
    pub max_refinements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    pub out: PathBuf,
    pub jobs: usize,
}

/// Either an explicit list or `points` evenly spaced values on `[start, stop]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(Range),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range(r) if r.points == 1 => vec![r.start],
            Grid::Range(r) => (0..r.points)
                .map(|i| r.start + (r.stop - r.start) * i as f64 / (r.points - 1) as f64)
                .collect(),
        }
    }

    fn check(&self, field: &str) -> Result<(), ConfigError> {
        if let Grid::Range(r) = self {
            if r.points == 0 {
                return Err(invalid(format!("{field}.points"), "must be at least 1"));
            }
            if !(r.start.is_finite() && r.stop.is_finite()) || r.stop < r.start {
                return Err(invalid(field, "range needs finite start <= stop"));
            }
        }
        let v = self.values();
        if v.is_empty() {
            return Err(invalid(field, "grid is empty"));
        }
        positive_all(field, &v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure1a {
    pub omega_c: Grid,
    pub n_modes: usize,
    pub omega_max_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Solver,
    Asymptotic,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure1b {
    pub omega_c: Grid,
    pub t_final: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSet {
    pub omega_c: Grid,
    pub t_max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NBarSweep {
    pub omega_c: Grid,
    pub n_bar: Grid,
    pub t_max: f64,
    pub samples: usize,
}

pub type Sweep = SeriesSet;

impl Default for Config {
    fn default() -> Self {
        from_value(default_value()).expect("shipped default config is valid")
    }
}

fn default_value() -> Value {
    DEFAULT_CONFIG.parse::<Value>().expect("shipped default config parses")
}

fn from_value(v: Value) -> Result<Config, ConfigError> {
    let cfg: Config = v
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Grids may switch between list and range form.
                    Some(slot @ Value::Table(_)) if !v.is_table() => *slot = v,
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses TOML text, merges it over the defaults and range-checks the result.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let user: Value = text.parse::<Value>().map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut base = default_value();
    // A user-supplied squeezing replaces the default brightness.
    let user_r = user.get("params").and_then(|p| p.get("r")).is_some();
    let user_n = user.get("params").and_then(|p| p.get("n_bar")).is_some();
    if user_r && !user_n {
        if let Some(Value::Table(p)) = base.get_mut("params") {
            p.remove("n_bar");
        }
    }
    merge(&mut base, user);
    from_value(base)
}

/// Reads, defaults and validates a config file.
pub fn validate_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {x}")))
    }
}

fn positive_all(field: &str, xs: &[f64]) -> Result<(), ConfigError> {
    xs.iter().try_for_each(|&x| positive(field, x))
}

fn at_least_one(field: &str, n: usize) -> Result<(), ConfigError> {
    if n >= 1 {
        Ok(())
    } else {
        Err(invalid(field, "must be at least 1"))
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        if !(p.eta >= 0.0 && p.eta.is_finite()) {
            return Err(invalid("params.eta", format!("must be non-negative, got {}", p.eta)));
        }
        positive("params.s", p.s)?;
        positive("params.omega0", p.omega0)?;
        positive("params.omega_c", p.omega_c)?;
        match (p.n_bar, p.r) {
            (Some(_), Some(_)) => return Err(invalid("params.r", "give either n_bar or r, not both")),
            (None, None) => return Err(invalid("params.n_bar", "missing probe brightness")),
            (Some(n), None) => positive("params.n_bar", n)?,
            (None, Some(r)) => positive("params.r", r)?,
        }
        self.spectral(p.omega_c)?;

        let t = &self.time;
        positive("time.t_max", t.t_max)?;
        at_least_one("time.samples", t.samples)?;
        positive("time.tol", t.tol)?;
        if let Some(h) = t.h {
            positive("time.h", h)?;
        }
        at_least_one("run.jobs", self.run.jobs)?;
        if self.run.out.as_os_str().is_empty() {
            return Err(invalid("run.out", "output directory is empty"));
        }

        self.figure1a.omega_c.check("figure1a.omega_c")?;
        at_least_one("figure1a.n_modes", self.figure1a.n_modes)?;
        positive("figure1a.omega_max_factor", self.figure1a.omega_max_factor)?;
        self.figure1b.omega_c.check("figure1b.omega_c")?;
        positive("figure1b.t_final", self.figure1b.t_final)?;
        for (name, s) in [("figure1cd", &self.figure1cd), ("sweep", &self.sweep)] {
            s.omega_c.check(&format!("{name}.omega_c"))?;
            positive(&format!("{name}.t_max"), s.t_max)?;
            at_least_one(&format!("{name}.samples"), s.samples)?;
        }
        for (name, s) in [("figure2a", &self.figure2a), ("figure2b", &self.figure2b)] {
            s.omega_c.check(&format!("{name}.omega_c"))?;
            s.n_bar.check(&format!("{name}.n_bar"))?;
            positive(&format!("{name}.t_max"), s.t_max)?;
            at_least_one(&format!("{name}.samples"), s.samples)?;
        }
        for (name, g) in [
            ("figure1a.omega_c", &self.figure1a.omega_c),
            ("figure1b.omega_c", &self.figure1b.omega_c),
            ("figure1cd.omega_c", &self.figure1cd.omega_c),
            ("figure2a.omega_c", &self.figure2a.omega_c),
            ("figure2b.omega_c", &self.figure2b.omega_c),
            ("sweep.omega_c", &self.sweep.omega_c),
        ] {
            for wc in g.values() {
                self.spectral(wc).map_err(|e| match e {
                    ConfigError::Invalid { message, .. } => invalid(name, message),
                    other => other,
                })?;
            }
        }
        Ok(())
    }

    /// Spectral parameters at cutoff `omega_c`, with core errors mapped to config fields.
    pub fn spectral(&self, omega_c: f64) -> Result<SpectralParams, ConfigError> {
        let p = &self.params;
        SpectralParams::new(p.eta, p.s, omega_c, p.omega0, p.kappa).map_err(|e| match e {
            CoreError::InvalidParameter { name, .. } => invalid(format!("params.{name}"), e.to_string()),
            other => invalid("params.omega_c", other.to_string()),
        })
    }

    pub fn squeezing(&self) -> Result<SqueezingParam, ConfigError> {
        let res = match (self.params.n_bar, self.params.r) {
            (_, Some(r)) => SqueezingParam::new(r),
            (Some(n), None) => SqueezingParam::from_mean_photons(n),
            (None, None) => return Err(invalid("params.n_bar", "missing probe brightness")),
        };
        res.map_err(|e| invalid("params.n_bar", e.to_string()))
    }
}

/// Values given on the command line; each replaces the matching file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub eta: Option<f64>,
    pub s: Option<f64>,
    pub omega_c: Option<f64>,
    pub kappa: Option<f64>,
    pub n_bar: Option<f64>,
    pub t_max: Option<f64>,
    pub h: Option<f64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Overrides {
    /// Applies the overrides. `omega_c`, `n_bar` and `t_max` also replace the
    /// corresponding grids and horizons of every scenario section.
    pub fn apply(&self, cfg: &mut Config) -> Result<(), ConfigError> {
        let p = &mut cfg.params;
        if let Some(x) = self.eta {
            p.eta = x;
        }
        if let Some(x) = self.s {
            p.s = x;
        }
        if let Some(x) = self.kappa {
            p.kappa = x;
        }
        if let Some(x) = self.n_bar {
            p.n_bar = Some(x);
            p.r = None;
            cfg.figure2a.n_bar = Grid::List(vec![x]);
            cfg.figure2b.n_bar = Grid::List(vec![x]);
        }
        if let Some(x) = self.omega_c {
            cfg.params.omega_c = x;
            let g = Grid::List(vec![x]);
            cfg.figure1a.omega_c = g.clone();
            cfg.figure1b.omega_c = g.clone();
            cfg.figure1cd.omega_c = g.clone();
            cfg.figure2a.omega_c = g.clone();
            cfg.figure2b.omega_c = g.clone();
            cfg.sweep.omega_c = g;
        }
        if let Some(x) = self.t_max {
            cfg.time.t_max = x;
            cfg.figure1b.t_final = x;
            cfg.figure1cd.t_max = x;
            cfg.figure2a.t_max = x;
            cfg.figure2b.t_max = x;
            cfg.sweep.t_max = x;
        }
        if let Some(x) = self.h {
            cfg.time.h = Some(x);
        }
        if let Some(x) = self.tol {
            cfg.time.tol = x;
        }
        if let Some(x) = &self.out {
            cfg.run.out = x.clone();
        }
        if let Some(x) = self.jobs {
            cfg.run.jobs = x;
        }
        cfg.validate()
    }
}
