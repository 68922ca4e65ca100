//! Experiment configuration: flat `key=value` files, overridden by flags.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridfn::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (csv or json)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub suite: String,
    pub d: usize,
    #[serde(rename = "J")]
    pub j: i32,
    #[serde(rename = "K")]
    pub k: i32,
    pub seed: u64,
    pub cone_refine: u32,
    pub ensemble: usize,
    /// Dimensions swept by the equivalence harnesses; members of the other
    /// suites cycle through them when set.
    pub dims: Option<Vec<usize>>,
    pub tolerances: BTreeMap<String, f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: "all".into(),
            d: 2,
            j: 1,
            k: 6,
            seed: 0,
            cone_refine: 1,
            ensemble: 100,
            dims: None,
            tolerances: BTreeMap::new(),
            out: None,
            format: Format::Csv,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Parse { line: no + 1, msg: format!("expected key=value, got `{line}`") })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(name) = key.strip_prefix("tol.") {
            if name.is_empty() {
                return Err(Error::Config("empty tolerance name".into()));
            }
            self.tolerances.insert(name.to_string(), parse(key, value)?);
            return Ok(());
        }
        match key {
            "suite" => self.suite = value.to_string(),
            "d" => self.d = parse(key, value)?,
            "J" | "j" => self.j = parse(key, value)?,
            "K" | "k" => self.k = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "cone_refine" | "cone-refine" | "coneRefinement" => self.cone_refine = parse(key, value)?,
            "ensemble" | "ensembleSize" => self.ensemble = parse(key, value)?,
            "dims" => {
                let dims = value.split(',').map(|v| parse(key, v)).collect::<Result<Vec<usize>>>()?;
                self.dims = Some(dims);
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be ≥ 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Config(format!("K must be ≥ 2, got {}", self.k)));
        }
        if self.ensemble == 0 {
            return Err(Error::Config("ensembleSize must be ≥ 1".into()));
        }
        if let Some(dims) = &self.dims {
            if dims.is_empty() || dims.contains(&0) {
                return Err(Error::Config("dims must be a nonempty list of positive integers".into()));
            }
        }
        if self.cone_refine > 6 {
            return Err(Error::Config(format!("cone refinement {} too large", self.cone_refine)));
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.j, self.k)
    }

    /// Tolerance `name`, or `default` when not configured.
    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    /// Dimension of ensemble member `i`.
    pub fn member_dim(&self, i: usize) -> usize {
        match &self.dims {
            Some(dims) => dims[i % dims.len()],
            None => self.d,
        }
    }

    /// Dimensions of the equivalence harnesses (default `1, 2, 4`).
    pub fn harness_dims(&self) -> Vec<usize> {
        self.dims.clone().unwrap_or_else(|| vec![1, 2, 4])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!((c.d, c.j, c.k, c.ensemble, c.cone_refine), (2, 1, 6, 100, 1));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn file_and_overrides() {
        let text = "# run\nsuite = green\nd=1\nK = 4\ntol.green=0.03\ndims=1,2\nformat=json\n";
        let mut c = ExperimentConfig::from_kv(text).unwrap();
        assert_eq!(c.suite, "green");
        assert_eq!((c.d, c.k), (1, 4));
        assert_eq!(c.tol("green", 0.02), 0.03);
        assert_eq!(c.tol("other", 0.5), 0.5);
        assert_eq!(c.member_dim(3), 2);
        assert_eq!(c.format, Format::Json);
        c.set("K", "7").unwrap();
        assert_eq!(c.k, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_kv("nonsense").is_err());
        assert!(ExperimentConfig::from_kv("colour=red").is_err());
        assert!(ExperimentConfig::from_kv("d=two").is_err());
        let c = ExperimentConfig::from_kv("ensemble=0").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("ensembleSize must be ≥ 1"));
        assert!(ExperimentConfig::from_kv("K=1").unwrap().validate().is_err());
    }
}
