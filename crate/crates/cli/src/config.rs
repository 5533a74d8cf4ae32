//! Plain-text `key = value` run configuration with strict key checking.
//! An empty file yields the full default experiment setup; unknown keys and
//! malformed values are reported with their line number.

use porochem::error::{Error, Result};
use porochem::forms::ModelParams;

/// Which batch experiment the driver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ConvergeSpace,
    ConvergeTime,
    Pattern,
    SingleRun,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ConvergeSpace => "converge-space",
            Experiment::ConvergeTime => "converge-time",
            Experiment::Pattern => "pattern",
            Experiment::SingleRun => "single-run",
        }
    }

    pub fn parse(s: &str) -> Option<Experiment> {
        match s {
            "converge-space" => Some(Experiment::ConvergeSpace),
            "converge-time" => Some(Experiment::ConvergeTime),
            "pattern" => Some(Experiment::Pattern),
            "single-run" => Some(Experiment::SingleRun),
            _ => None,
        }
    }
}

/// Fully defaulted run description. Physical parameters default to the
/// convergence-test set; mesh/time/output knobs to the values used by the
/// shipped experiments.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub params: ModelParams,
    pub nx: usize,
    pub ny: usize,
    pub refinements: usize,
    pub dt: f64,
    pub t_final: f64,
    pub dt_list: Vec<f64>,
    pub newton_tol: f64,
    pub out_dir: String,
    pub seed: u64,
    pub traction_amplitude: f64,
    pub traction_omega: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::SingleRun,
            params: ModelParams::example1(),
            nx: 8,
            ny: 8,
            refinements: 5,
            dt: 0.01,
            t_final: 0.04,
            dt_list: vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625],
            newton_tol: 1e-5,
            out_dir: "out".into(),
            seed: 20260826,
            traction_amplitude: 0.5,
            traction_omega: 2.0 * std::f64::consts::PI,
            snapshot_times: Vec::new(),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigParse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| parse_err(line, format!("key '{key}': '{v}' is not a number")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| parse_err(line, format!("key '{key}': '{v}' is not a nonnegative integer")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(line, key, s.trim()))
        .collect()
}

/// Parse a configuration in strict mode: every key must be known, every
/// value well formed, and the resulting parameters must validate.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(lineno, format!("expected 'key = value', got '{line}'")));
        };
        let key = key.trim();
        let v = value.trim();
        if v.is_empty() {
            return Err(parse_err(lineno, format!("key '{key}' has an empty value")));
        }
        match key {
            "experiment" => {
                cfg.experiment = Experiment::parse(v).ok_or_else(|| {
                    parse_err(
                        lineno,
                        format!(
                            "unknown experiment '{v}' (expected converge-space, \
                             converge-time, pattern, or single-run)"
                        ),
                    )
                })?;
            }
            "mu" => cfg.params.mu = parse_f64(lineno, key, v)?,
            "lambda" => cfg.params.lambda = parse_f64(lineno, key, v)?,
            "alpha" => cfg.params.alpha = parse_f64(lineno, key, v)?,
            "c0" => cfg.params.c0 = parse_f64(lineno, key, v)?,
            "eta" => cfg.params.eta = parse_f64(lineno, key, v)?,
            "kappa" => {
                let k = parse_f64(lineno, key, v)?;
                cfg.params.kappa = [[k, 0.0], [0.0, k]];
            }
            "rho" => cfg.params.rho = parse_f64(lineno, key, v)?,
            "tau" => cfg.params.tau = parse_f64(lineno, key, v)?,
            "gamma" => cfg.params.gamma = parse_f64(lineno, key, v)?,
            "beta1" => cfg.params.beta1 = parse_f64(lineno, key, v)?,
            "beta2" => cfg.params.beta2 = parse_f64(lineno, key, v)?,
            "beta3" => cfg.params.beta3 = parse_f64(lineno, key, v)?,
            "d1" => {
                let d = parse_f64(lineno, key, v)?;
                cfg.params.d1 = [[d, 0.0], [0.0, d]];
            }
            "d2" => {
                let d = parse_f64(lineno, key, v)?;
                cfg.params.d2 = [[d, 0.0], [0.0, d]];
            }
            "u_inf" => cfg.params.u_inf = parse_f64(lineno, key, v)?,
            "nx" => cfg.nx = parse_usize(lineno, key, v)?,
            "ny" => cfg.ny = parse_usize(lineno, key, v)?,
            "refinements" => cfg.refinements = parse_usize(lineno, key, v)?,
            "dt" => cfg.dt = parse_f64(lineno, key, v)?,
            "t_final" => cfg.t_final = parse_f64(lineno, key, v)?,
            "dt_list" => cfg.dt_list = parse_list(lineno, key, v)?,
            "newton_tol" => cfg.newton_tol = parse_f64(lineno, key, v)?,
            "out_dir" => cfg.out_dir = v.to_string(),
            "seed" => {
                cfg.seed = v.parse().map_err(|_| {
                    parse_err(lineno, format!("key 'seed': '{v}' is not an unsigned integer"))
                })?;
            }
            "traction_amplitude" => cfg.traction_amplitude = parse_f64(lineno, key, v)?,
            "traction_omega" => cfg.traction_omega = parse_f64(lineno, key, v)?,
            "snapshot_times" => cfg.snapshot_times = parse_list(lineno, key, v)?,
            _ => return Err(parse_err(lineno, format!("unknown key '{key}'"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let checks = [
            ("nx", self.nx > 0),
            ("ny", self.ny > 0),
            ("dt", self.dt > 0.0),
            ("t_final", self.t_final > 0.0),
            ("newton_tol", self.newton_tol > 0.0),
            ("refinements", self.refinements >= 1),
            ("dt_list", !self.dt_list.is_empty() && self.dt_list.iter().all(|&d| d > 0.0)),
        ];
        for (key, ok) in checks {
            if !ok {
                return Err(Error::ConfigValidation {
                    key: key.into(),
                    message: "out of range".into(),
                });
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse_config(serialize(c))` reproduces `c`.
    pub fn serialize(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let p = &self.params;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("experiment", self.experiment.name().into());
        kv("mu", p.mu.to_string());
        kv("lambda", p.lambda.to_string());
        kv("alpha", p.alpha.to_string());
        kv("c0", p.c0.to_string());
        kv("eta", p.eta.to_string());
        kv("kappa", p.kappa[0][0].to_string());
        kv("rho", p.rho.to_string());
        kv("tau", p.tau.to_string());
        kv("gamma", p.gamma.to_string());
        kv("beta1", p.beta1.to_string());
        kv("beta2", p.beta2.to_string());
        kv("beta3", p.beta3.to_string());
        kv("d1", p.d1[0][0].to_string());
        kv("d2", p.d2[0][0].to_string());
        kv("u_inf", p.u_inf.to_string());
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("refinements", self.refinements.to_string());
        kv("dt", self.dt.to_string());
        kv("t_final", self.t_final.to_string());
        kv("dt_list", list(&self.dt_list));
        kv("newton_tol", self.newton_tol.to_string());
        kv("out_dir", self.out_dir.clone());
        kv("seed", self.seed.to_string());
        kv("traction_amplitude", self.traction_amplitude.to_string());
        kv("traction_omega", self.traction_omega.to_string());
        if !self.snapshot_times.is_empty() {
            kv("snapshot_times", list(&self.snapshot_times));
        }
        s
    }
}
