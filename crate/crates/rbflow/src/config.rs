//! Plain-text experiment configuration.
//!
//! Config files are `key = value` lines; `#` starts a comment. The first
//! parameter is the viscosity for Stokes runs and the Reynolds number for
//! Navier-Stokes runs; the second is the cavity length. A degenerate second
//! range (min = max) gives a one-dimensional training grid.

use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::fom::{Pair, ProblemKind, StabKind};
use crate::rom::{ConvMode, Strategy};
use crate::Params;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub pair: Pair,
    pub scheme: StabKind,
    pub delta: f64,
    pub nx: usize,
    pub ny: usize,
    pub mu1_range: (f64, f64),
    pub mu2_range: (f64, f64),
    pub n_train: usize,
    pub online_mu: Vec<(f64, f64)>,
    pub dt: f64,
    pub dt_list: Vec<f64>,
    pub t_final: f64,
    pub n_list: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub conv_mode: ConvMode,
    pub n_max: usize,
    pub greedy_tol: f64,
    pub output_dir: PathBuf,
}

fn parse_f64(key: &str, v: &str) -> Result<f64, Error> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, Error> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected an integer, got '{v}'")))
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>, Error> {
    v.split(',').map(|s| parse_f64(key, s)).collect()
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>, Error> {
    v.split(',').map(|s| parse_usize(key, s)).collect()
}

/// Semicolon-separated list of `mu1,mu2` pairs.
fn parse_mu_list(key: &str, v: &str) -> Result<Vec<(f64, f64)>, Error> {
    let mut out = Vec::new();
    for chunk in v.split(';') {
        let parts: Vec<&str> = chunk.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!("{key}: expected 'mu1,mu2' pairs, got '{chunk}'")));
        }
        out.push((parse_f64(key, parts[0])?, parse_f64(key, parts[1])?));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self, Error> {
        let mut problem = None;
        let mut pair = None;
        let mut scheme = StabKind::None;
        let mut delta = 0.05;
        let mut nx = 16;
        let mut ny = None;
        let mut mu1_range = None;
        let mut mu2_range = (1.0, 1.0);
        let mut n_train = 25;
        let mut online_mu = None;
        let mut dt = None;
        let mut dt_list = None;
        let mut t_final = None;
        let mut n_list = vec![10, 20, 30];
        let mut strategies = Strategy::all().to_vec();
        let mut conv_mode = ConvMode::Tensor;
        let mut n_max = 30;
        let mut greedy_tol = 1e-12;
        let mut output_dir = PathBuf::from("out");

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "problem" => problem = Some(ProblemKind::parse(value)?),
                "pair" => pair = Some(Pair::parse(value)?),
                "scheme" => scheme = StabKind::parse(value)?,
                "delta" => delta = parse_f64(key, value)?,
                "nx" => nx = parse_usize(key, value)?,
                "ny" => ny = Some(parse_usize(key, value)?),
                "mu1_min" => mu1_range.get_or_insert((0.0, 0.0)).0 = parse_f64(key, value)?,
                "mu1_max" => mu1_range.get_or_insert((0.0, 0.0)).1 = parse_f64(key, value)?,
                "mu2_min" => mu2_range.0 = parse_f64(key, value)?,
                "mu2_max" => mu2_range.1 = parse_f64(key, value)?,
                "n_train" => n_train = parse_usize(key, value)?,
                "online_mu" => online_mu = Some(parse_mu_list(key, value)?),
                "dt" => dt = Some(parse_f64(key, value)?),
                "dt_list" => dt_list = Some(parse_f64_list(key, value)?),
                "t_final" => t_final = Some(parse_f64(key, value)?),
                "n_list" => n_list = parse_usize_list(key, value)?,
                "strategies" => {
                    strategies = value
                        .split(',')
                        .map(|s| Strategy::parse(s.trim()))
                        .collect::<Result<_, _>>()?;
                }
                "conv_mode" => conv_mode = ConvMode::parse(value)?,
                "n_max" => n_max = parse_usize(key, value)?,
                "greedy_tol" => greedy_tol = parse_f64(key, value)?,
                "output_dir" => output_dir = PathBuf::from(value),
                other => {
                    return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1)))
                }
            }
        }

        let problem = problem.ok_or_else(|| Error::Config("missing key 'problem'".into()))?;
        let pair = pair.ok_or_else(|| Error::Config("missing key 'pair'".into()))?;
        let mu1_range = mu1_range.ok_or_else(|| Error::Config("missing mu1_min/mu1_max".into()))?;
        let dt = dt.ok_or_else(|| Error::Config("missing key 'dt'".into()))?;
        let t_final = t_final.ok_or_else(|| Error::Config("missing key 't_final'".into()))?;
        let online_mu = online_mu.ok_or_else(|| Error::Config("missing key 'online_mu'".into()))?;
        let dt_list = dt_list.unwrap_or_else(|| vec![dt]);
        let ny = ny.unwrap_or(nx);

        let cfg = ExperimentConfig {
            problem,
            pair,
            scheme,
            delta,
            nx,
            ny,
            mu1_range,
            mu2_range,
            n_train,
            online_mu,
            dt,
            dt_list,
            t_final,
            n_list,
            strategies,
            conv_mode,
            n_max,
            greedy_tol,
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    fn validate(&self) -> Result<(), Error> {
        if self.pair == Pair::P1P0 && self.scheme != StabKind::PressureJump {
            return Err(Error::Config("pair p1p0 requires scheme = pressure-jump".into()));
        }
        if self.scheme != StabKind::None && !(self.delta > 0.0) {
            return Err(Error::Config("delta must be positive when a scheme is set".into()));
        }
        if self.scheme == StabKind::Supg && self.problem != ProblemKind::NavierStokes {
            return Err(Error::Config("scheme supg requires problem = navier-stokes".into()));
        }
        if !(self.mu1_range.0 > 0.0 && self.mu1_range.1 >= self.mu1_range.0) {
            return Err(Error::Config("mu1 range must be positive and ordered".into()));
        }
        if !(self.mu2_range.0 > 0.0 && self.mu2_range.1 >= self.mu2_range.0) {
            return Err(Error::Config("mu2 range must be positive and ordered".into()));
        }
        if self.n_train == 0 || self.n_list.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("training grid, N list and strategies must be nonempty".into()));
        }
        if self.mu2_range.0 < self.mu2_range.1 {
            let side = (self.n_train as f64).sqrt().round() as usize;
            if side * side != self.n_train {
                return Err(Error::Config(format!(
                    "n_train = {} is not a square; two varying parameters need a tensor grid",
                    self.n_train
                )));
            }
        }
        Ok(())
    }

    /// Physical parameters for a config-level `(mu1, mu2)` point.
    pub fn params_from(&self, mu1: f64, mu2: f64) -> Result<Params, Error> {
        match self.problem {
            ProblemKind::Stokes => Params::new(mu1, mu2),
            ProblemKind::NavierStokes => Params::from_reynolds(mu1, mu2),
        }
    }

    /// Uniform training grid over the parameter box, endpoints included.
    pub fn training_grid(&self) -> Result<Vec<Params>, Error> {
        let linspace = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            if n == 1 || hi == lo {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        };
        let mut out = Vec::with_capacity(self.n_train);
        if self.mu2_range.0 < self.mu2_range.1 {
            let side = (self.n_train as f64).sqrt().round() as usize;
            for &m2 in &linspace(self.mu2_range.0, self.mu2_range.1, side) {
                for &m1 in &linspace(self.mu1_range.0, self.mu1_range.1, side) {
                    out.push(self.params_from(m1, m2)?);
                }
            }
        } else {
            for &m1 in &linspace(self.mu1_range.0, self.mu1_range.1, self.n_train) {
                out.push(self.params_from(m1, self.mu2_range.0)?);
            }
        }
        Ok(out)
    }
}
