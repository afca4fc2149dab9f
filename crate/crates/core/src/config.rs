//! Experiment configuration: a UTF-8 `key = value` file.
//!
//! ```text
//! # comments run to the end of the line
//! A_preset = smooth-iso
//! W_preset = sine1
//! f_preset = sine-sine
//! epsilons = 1/4, 1/8, 1/16
//! domain_grid_n = 256
//! ```
//!
//! Numbers may be written as fractions (`1/8`). Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::coefficients::{make_preset, CoefficientModel};
use crate::domain::CELLS_PER_PERIOD;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub a_preset: String,
    pub w_preset: String,
    pub f_preset: String,
    pub cell_grid_n: usize,
    pub domain_grid_n: usize,
    pub epsilons: Vec<f64>,
    pub k_eigen: usize,
    pub cg_tol: f64,
    /// Defaults to `50·n` of the grid being solved on.
    pub cg_max_iter: Option<usize>,
    pub eig_tol: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            a_preset: "smooth-iso".into(),
            w_preset: "sine1".into(),
            f_preset: "sine-sine".into(),
            cell_grid_n: 128,
            domain_grid_n: 256,
            epsilons: vec![0.25, 0.125, 0.0625],
            k_eigen: 5,
            cg_tol: 1e-10,
            cg_max_iter: None,
            eig_tol: 1e-10,
            seed: 0,
            output_dir: PathBuf::from("out"),
            emit_svg: false,
        }
    }
}

const KEYS: &[&str] = &[
    "A_preset",
    "W_preset",
    "f_preset",
    "cell_grid_n",
    "domain_grid_n",
    "epsilons",
    "k_eigen",
    "cg_tol",
    "cg_max_iter",
    "eig_tol",
    "seed",
    "output_dir",
    "emit_svg",
];

fn parse_number(key: &str, raw: &str) -> Result<f64> {
    let bad = || Error::Config(format!("{key}: cannot parse '{raw}' as a number"));
    let v = match raw.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            num / den
        }
        None => raw.trim().parse().map_err(|_| bad())?,
    };
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

fn parse_count(key: &str, raw: &str) -> Result<usize> {
    raw.trim().parse().map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{raw}'")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{raw}'"))),
    }
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    let inner = raw.trim().trim_start_matches('[').trim_end_matches(']');
    inner.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_number(key, s)).collect()
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1)));
            };
            let (key, value) = (key.trim(), value.trim().trim_matches('"'));
            match key {
                "A_preset" => cfg.a_preset = value.to_string(),
                "W_preset" => cfg.w_preset = value.to_string(),
                "f_preset" => cfg.f_preset = value.to_string(),
                "cell_grid_n" => cfg.cell_grid_n = parse_count(key, value)?,
                "domain_grid_n" => cfg.domain_grid_n = parse_count(key, value)?,
                "epsilons" => cfg.epsilons = parse_list(key, value)?,
                "k_eigen" => cfg.k_eigen = parse_count(key, value)?,
                "cg_tol" => cfg.cg_tol = parse_number(key, value)?,
                "cg_max_iter" => cfg.cg_max_iter = Some(parse_count(key, value)?),
                "eig_tol" => cfg.eig_tol = parse_number(key, value)?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("seed: expected an unsigned integer, got '{value}'")))?
                }
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "emit_svg" => cfg.emit_svg = parse_bool(key, value)?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown key '{other}' on line {} (known keys: {})",
                        lineno + 1,
                        KEYS.join(", ")
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn model(&self) -> Result<CoefficientModel> {
        make_preset(&self.a_preset, &self.w_preset, &self.f_preset)
    }

    /// Checks value ranges and the resolution rule `1/domain_grid_n ≤ ε/16`
    /// for every swept `ε`.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        if self.cell_grid_n < 16 {
            return Err(Error::Config(format!("cell_grid_n must be at least 16, got {}", self.cell_grid_n)));
        }
        if self.domain_grid_n < 2 {
            return Err(Error::Config(format!("domain_grid_n must be at least 2, got {}", self.domain_grid_n)));
        }
        if !(1..=64).contains(&self.k_eigen) {
            return Err(Error::Config(format!("k_eigen must be in 1..=64, got {}", self.k_eigen)));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons must list at least one value".into()));
        }
        for &tol in &[self.cg_tol, self.eig_tol] {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::Config(format!("tolerances must lie in (0, 1), got {tol}")));
            }
        }
        if self.cg_max_iter == Some(0) {
            return Err(Error::Config("cg_max_iter must be positive".into()));
        }
        let h = 1.0 / self.domain_grid_n as f64;
        for &eps in &self.epsilons {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::Config(format!("epsilon must lie in (0, 1], got {eps}")));
            }
            if h > eps / CELLS_PER_PERIOD * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "resolution rule violated for epsilon = {eps}: h = 1/{} exceeds epsilon/16 (need domain_grid_n >= {})",
                    self.domain_grid_n,
                    (CELLS_PER_PERIOD / eps).ceil()
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Config {
    /// Writes the configuration back in the file format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "A_preset = {}", self.a_preset)?;
        writeln!(f, "W_preset = {}", self.w_preset)?;
        writeln!(f, "f_preset = {}", self.f_preset)?;
        writeln!(f, "cell_grid_n = {}", self.cell_grid_n)?;
        writeln!(f, "domain_grid_n = {}", self.domain_grid_n)?;
        let eps: Vec<String> = self.epsilons.iter().map(|e| e.to_string()).collect();
        writeln!(f, "epsilons = {}", eps.join(", "))?;
        writeln!(f, "k_eigen = {}", self.k_eigen)?;
        writeln!(f, "cg_tol = {:e}", self.cg_tol)?;
        if let Some(m) = self.cg_max_iter {
            writeln!(f, "cg_max_iter = {m}")?;
        }
        writeln!(f, "eig_tol = {:e}", self.eig_tol)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "output_dir = {}", self.output_dir.display())?;
        writeln!(f, "emit_svg = {}", self.emit_svg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
        assert_eq!(Config::parse("# nothing\n\n").unwrap(), Config::default());
    }

    #[test]
    fn fractions_and_lists() {
        let cfg = Config::parse("epsilons = [1/2, 0.25,1/8]\ndomain_grid_n = 128 # fine enough\ncg_tol=1e-9\n").unwrap();
        assert_eq!(cfg.epsilons, vec![0.5, 0.25, 0.125]);
        assert_eq!(cfg.domain_grid_n, 128);
        assert_eq!(cfg.cg_tol, 1e-9);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("A_preset = identity\nfoo = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'foo'") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn unknown_preset_is_named() {
        let err = Config::parse("W_preset = cosine\n").unwrap_err();
        assert!(err.to_string().contains("W_preset"), "{err}");
    }

    #[test]
    fn resolution_rule_is_enforced() {
        let err = Config::parse("domain_grid_n = 128\n").unwrap_err();
        assert!(err.to_string().contains("resolution rule"), "{err}");
        assert!(Config::parse("domain_grid_n = 128\nepsilons = 1/4, 1/8\n").is_ok());
    }

    #[test]
    fn display_round_trips() {
        let mut cfg = Config::default();
        cfg.cg_max_iter = Some(900);
        cfg.seed = 42;
        cfg.emit_svg = true;
        assert_eq!(Config::parse(&cfg.to_string()).unwrap(), cfg);
    }

    #[test]
    fn malformed_values() {
        assert!(Config::parse("k_eigen = five").is_err());
        assert!(Config::parse("k_eigen = 0").is_err());
        assert!(Config::parse("emit_svg = maybe").is_err());
        assert!(Config::parse("epsilons = 1/0").is_err());
        assert!(Config::parse("just a line").is_err());
    }
}
