//! Run configuration: line-oriented `key = value` text with `#` comments.
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use mapshape::flow::{FlowParams, InflowProfile};
use mapshape::kkt::KktParams;
use mapshape::mesh::{DomainMode, NormalAveraging};
use mapshape::optimizer::{Algorithm, ContinuationSchedule, DEFAULT_INNER_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgorithmKind {
    Direct,
    Iterative,
}

impl std::str::FromStr for AlgorithmKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(Self::Direct),
            "iterative" => Ok(Self::Iterative),
            _ => Err(format!("expected direct or iterative, got {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InflowSelector {
    PaperCosine,
    Parabolic,
    Channel,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: PathBuf,
    pub mode: DomainMode,
    pub normals: NormalAveraging,
    pub nu: f64,
    pub mu: f64,
    pub delta: f64,
    pub inflow: InflowSelector,
    /// Unset schedule entries fall back to the algorithm's default schedule.
    pub alpha_init: Option<f64>,
    pub alpha_dec: Option<f64>,
    pub alpha_target: Option<f64>,
    pub beta: f64,
    pub eta_det: f64,
    pub eta_ext: f64,
    pub epsilon: f64,
    pub inner_cap: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub output: PathBuf,
    pub algorithm: AlgorithmKind,
    pub seed: u64,
    pub grad_directions: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Line { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
}

const KEYS: &[&str] = &[
    "mesh",
    "mode",
    "normals",
    "nu",
    "mu",
    "delta",
    "inflow",
    "alpha_init",
    "alpha_dec",
    "alpha_target",
    "beta",
    "eta_det",
    "eta_ext",
    "epsilon",
    "inner_cap",
    "newton_tol",
    "newton_max_iter",
    "output",
    "algorithm",
    "seed",
    "grad_directions",
];

impl RunConfig {
    fn defaults(mesh: PathBuf, output: PathBuf) -> Self {
        let k = KktParams::default();
        Self {
            mesh,
            mode: DomainMode::FluidOnly,
            normals: NormalAveraging::Unweighted,
            nu: k.flow.nu,
            mu: k.flow.mu,
            delta: 6.0,
            inflow: InflowSelector::PaperCosine,
            alpha_init: None,
            alpha_dec: None,
            alpha_target: None,
            beta: k.beta,
            eta_det: k.eta_det,
            eta_ext: k.eta_ext,
            epsilon: 1e-2,
            inner_cap: DEFAULT_INNER_CAP,
            newton_tol: k.newton_tol,
            newton_max_iter: k.newton_max_iter,
            output,
            algorithm: AlgorithmKind::Direct,
            seed: 0,
            grad_directions: 20,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let mut cfg = Self::defaults(PathBuf::new(), base.join("output"));
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| ConfigError::Line {
                path: path.to_path_buf(),
                line,
                msg,
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
            let key = *KEYS.iter().find(|k| **k == key).ok_or_else(|| err(format!("unknown key {key:?}")))?;
            if seen.contains(&key) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            seen.push(key);
            cfg.set(key, value, &base).map_err(|m| err(format!("{key}: {m}")))?;
        }
        if !seen.contains(&"mesh") {
            return Err(ConfigError::File {
                path: path.to_path_buf(),
                msg: "missing required key \"mesh\"".into(),
            });
        }
        cfg.validate().map_err(|msg| ConfigError::File {
            path: path.to_path_buf(),
            msg,
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        match key {
            "mesh" => self.mesh = base.join(v),
            "output" => self.output = base.join(v),
            "mode" => {
                self.mode = match v {
                    "fluid-only" => DomainMode::FluidOnly,
                    "holdall" => DomainMode::Holdall,
                    _ => return Err(format!("expected fluid-only or holdall, got {v:?}")),
                }
            }
            "normals" => {
                self.normals = match v {
                    "unweighted" => NormalAveraging::Unweighted,
                    "length-weighted" => NormalAveraging::LengthWeighted,
                    _ => return Err(format!("expected unweighted or length-weighted, got {v:?}")),
                }
            }
            "inflow" => {
                self.inflow = match v {
                    "paper-cosine" => InflowSelector::PaperCosine,
                    "parabolic" => InflowSelector::Parabolic,
                    "channel" => InflowSelector::Channel,
                    "zero" => InflowSelector::Zero,
                    _ => return Err(format!("expected paper-cosine, parabolic, channel or zero, got {v:?}")),
                }
            }
            "algorithm" => self.algorithm = v.parse()?,
            "nu" => self.nu = num(v)?,
            "mu" => self.mu = num(v)?,
            "delta" => self.delta = num(v)?,
            "alpha_init" => self.alpha_init = Some(num(v)?),
            "alpha_dec" => self.alpha_dec = Some(num(v)?),
            "alpha_target" => self.alpha_target = Some(num(v)?),
            "beta" => self.beta = num(v)?,
            "eta_det" => self.eta_det = num(v)?,
            "eta_ext" => self.eta_ext = num(v)?,
            "epsilon" => self.epsilon = num(v)?,
            "inner_cap" => self.inner_cap = num(v)?,
            "newton_tol" => self.newton_tol = num(v)?,
            "newton_max_iter" => self.newton_max_iter = num(v)?,
            "seed" => self.seed = num(v)?,
            "grad_directions" => self.grad_directions = num(v)?,
            _ => unreachable!("key list and setter out of sync"),
        }
        Ok(())
    }

    /// Range checks; messages name the offending key.
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} = {x} must be positive"))
            }
        };
        let non_negative = |name: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} = {x} must be >= 0"))
            }
        };
        positive("nu", self.nu)?;
        non_negative("mu", self.mu)?;
        positive("delta", self.delta)?;
        non_negative("beta", self.beta)?;
        positive("eta_det", self.eta_det)?;
        non_negative("eta_ext", self.eta_ext)?;
        positive("epsilon", self.epsilon)?;
        positive("newton_tol", self.newton_tol)?;
        if self.inner_cap == 0 {
            return Err("inner_cap must be at least 1".into());
        }
        if self.newton_max_iter == 0 {
            return Err("newton_max_iter must be at least 1".into());
        }
        if self.grad_directions == 0 {
            return Err("grad_directions must be at least 1".into());
        }
        if let Some(a) = self.alpha_init {
            positive("alpha_init", a)?;
        }
        if let Some(a) = self.alpha_dec {
            if !(a > 0.0 && a < 1.0) {
                return Err(format!("alpha_dec = {a} must lie in (0, 1)"));
            }
        }
        let s = self.schedule();
        if !(s.alpha_target > 0.0 && s.alpha_target <= s.alpha_init) {
            return Err(format!(
                "alpha_target = {} must lie in (0, alpha_init = {}]",
                s.alpha_target, s.alpha_init
            ));
        }
        if !self.mesh.is_file() {
            return Err(format!("mesh {} does not exist", self.mesh.display()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> ContinuationSchedule {
        let d = match self.algorithm {
            AlgorithmKind::Direct => ContinuationSchedule::DIRECT,
            AlgorithmKind::Iterative => ContinuationSchedule::ITERATIVE,
        };
        ContinuationSchedule {
            alpha_init: self.alpha_init.unwrap_or(d.alpha_init),
            alpha_dec: self.alpha_dec.unwrap_or(d.alpha_dec),
            alpha_target: self.alpha_target.unwrap_or(d.alpha_target),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.algorithm {
            AlgorithmKind::Direct => Algorithm::Direct,
            AlgorithmKind::Iterative => Algorithm::Iterative {
                eps: self.epsilon,
                inner_cap: self.inner_cap,
            },
        }
    }

    pub fn flow_params(&self) -> FlowParams {
        FlowParams {
            nu: self.nu,
            mu: self.mu,
            inflow: match self.inflow {
                InflowSelector::PaperCosine => InflowProfile::Cosine { delta: self.delta },
                InflowSelector::Parabolic => InflowProfile::Parabolic,
                InflowSelector::Channel => InflowProfile::Channel,
                InflowSelector::Zero => InflowProfile::Zero,
            },
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            ..FlowParams::default()
        }
    }

    pub fn kkt_params(&self) -> KktParams {
        KktParams {
            flow: self.flow_params(),
            alpha: self.schedule().alpha_init,
            beta: self.beta,
            eta_det: self.eta_det,
            eta_ext: self.eta_ext,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            ..KktParams::default()
        }
    }
}
