//! Flat key=value experiment configuration.

use crate::disorder::{DisorderLaw, FieldMode};
use crate::error::{Error, Result};
use crate::kernels::ModelKind;
use crate::partition::FieldWeight;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawMode {
    Omega(DisorderLaw),
    DirectEta,
}

impl LawMode {
    pub fn field_mode(self) -> FieldMode {
        match self {
            LawMode::Omega(law) => FieldMode::Omega(law),
            LawMode::DirectEta => FieldMode::DirectEta,
        }
    }

    pub fn eta_params(self, beta: f64) -> crate::disorder::EtaParams {
        match self {
            LawMode::Omega(law) => crate::disorder::EtaParams::for_law(law, beta),
            LawMode::DirectEta => crate::disorder::EtaParams::direct(beta),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LawMode::Omega(DisorderLaw::Gaussian) => "gaussian",
            LawMode::Omega(DisorderLaw::Rademacher) => "rademacher",
            LawMode::DirectEta => "direct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    Flat,
    Bump,
    Zero,
}

impl PsiKind {
    pub fn build(self, dim: usize) -> FieldWeight {
        match self {
            PsiKind::Flat => FieldWeight::flat(dim),
            PsiKind::Bump => FieldWeight::bump(dim),
            PsiKind::Zero => FieldWeight::zero(dim),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PsiKind::Flat => "flat",
            PsiKind::Bump => "bump",
            PsiKind::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub beta_hat_grid: Vec<f64>,
    pub law: LawMode,
    pub samples: usize,
    pub seed: u64,
    pub theta: f64,
    pub zeta_targets: Vec<f64>,
    pub psi: PsiKind,
    pub tail_tol: f64,
    pub out_dir: PathBuf,
    /// 0 means use all available cores.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::RenewalHalf,
            n_grid: vec![64, 128],
            m: 4,
            beta_hat_grid: vec![0.5],
            law: LawMode::Omega(DisorderLaw::Gaussian),
            samples: 2000,
            seed: 1,
            theta: 0.5,
            zeta_targets: vec![0.25, 0.5, 0.75],
            psi: PsiKind::Flat,
            tail_tol: 1e-3,
            out_dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad {what}: `{value}`"));
        match key {
            "model" => self.model = value.parse()?,
            "N_grid" | "n_grid" => {
                self.n_grid = parse_list(value, |s| s.parse::<usize>().map_err(|_| bad("N")))?
            }
            "M" | "m" => self.m = value.parse().map_err(|_| bad("M"))?,
            "beta_hat_grid" => {
                self.beta_hat_grid =
                    parse_list(value, |s| s.parse::<f64>().map_err(|_| bad("beta_hat")))?
            }
            "law" => {
                self.law = match value.to_ascii_lowercase().as_str() {
                    "direct" | "direct_eta" => LawMode::DirectEta,
                    other => LawMode::Omega(other.parse::<DisorderLaw>()?),
                }
            }
            "samples" => self.samples = value.parse().map_err(|_| bad("samples"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "theta" => self.theta = value.parse().map_err(|_| bad("theta"))?,
            "zeta_targets" => {
                self.zeta_targets =
                    parse_list(value, |s| s.parse::<f64>().map_err(|_| bad("zeta")))?
            }
            "psi" => {
                self.psi = match value.to_ascii_lowercase().as_str() {
                    "flat" | "ones" => PsiKind::Flat,
                    "bump" => PsiKind::Bump,
                    "zero" => PsiKind::Zero,
                    _ => return Err(bad("psi")),
                }
            }
            "tail_tol" => self.tail_tol = value.parse().map_err(|_| bad("tail_tol"))?,
            "out" => self.out_dir = PathBuf::from(value),
            "threads" => self.threads = value.parse().map_err(|_| bad("threads"))?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.beta_hat_grid.is_empty() || self.zeta_targets.is_empty()
        {
            return Err(Error::Config("all grids must be nonempty".into()));
        }
        if self.samples < 60 {
            return Err(Error::Config(
                "need at least 60 samples (30 batches of 2)".into(),
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config("theta must lie in (0, 1)".into()));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(Error::Config("tail_tol must lie in (0, 1)".into()));
        }
        if self.beta_hat_grid.iter().any(|&b| b < 0.0) {
            return Err(Error::Config("beta_hat must be >= 0".into()));
        }
        if self
            .zeta_targets
            .iter()
            .any(|&z| !(0.0..=1.0).contains(&z))
        {
            return Err(Error::Config("zeta targets must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Ordered echo of every knob, for the manifest.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("model".into(), self.model.to_string());
        map.insert(
            "n_grid".into(),
            self.n_grid
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("m".into(), self.m.to_string());
        map.insert(
            "beta_hat_grid".into(),
            self.beta_hat_grid
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("law".into(), self.law.name().into());
        map.insert("samples".into(), self.samples.to_string());
        map.insert("seed".into(), self.seed.to_string());
        map.insert("theta".into(), self.theta.to_string());
        map.insert(
            "zeta_targets".into(),
            self.zeta_targets
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("psi".into(), self.psi.name().into());
        map.insert("tail_tol".into(), self.tail_tol.to_string());
        map.insert("out".into(), self.out_dir.display().to_string());
        map.insert("threads".into(), self.threads.to_string());
        map
    }
}

fn parse_list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(
            "# comment\n\
             model = srw2d\n\
             N_grid = 64, 128, 256\n\
             beta_hat_grid = 0.25,0.5\n\
             law = rademacher\n\
             samples = 500\n\
             theta = 0.4\n\
             psi = bump\n\
             tail_tol = 1e-2\n",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelKind::Srw2d);
        assert_eq!(cfg.n_grid, vec![64, 128, 256]);
        assert_eq!(cfg.beta_hat_grid, vec![0.25, 0.5]);
        assert_eq!(cfg.law, LawMode::Omega(DisorderLaw::Rademacher));
        assert_eq!(cfg.psi, PsiKind::Bump);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_text("frobnicate = 3\n").is_err());
        assert!(cfg.apply_text("samples = many\n").is_err());
        assert!(cfg.apply_text("samples = 10\n").is_err());
        assert!(cfg.apply_text("theta = 1.5\n").is_err());
    }
}
