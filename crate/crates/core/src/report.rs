//! Named scalar results with provenance, and their CSV/JSON emission.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// How a reported number was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Quadrature { tol: f64 },
    Bound,
}

impl Provenance {
    fn label(&self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::Quadrature { .. } => "quadrature",
            Provenance::Bound => "bound",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Metadata {
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub net: Option<String>,
    pub note: Option<String>,
}

/// A named value (`lower == upper`) or a certified bracket `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub provenance: Provenance,
    pub meta: Metadata,
}

impl NormReport {
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), lower: value, upper: value, provenance: Provenance::Exact, meta: Metadata::default() }
    }

    pub fn quadrature(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            lower: value,
            upper: value,
            provenance: Provenance::Quadrature { tol },
            meta: Metadata::default(),
        }
    }

    pub fn bound(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::UnorderedBound(lower, upper));
        }
        Ok(Self { name: name.into(), lower, upper, provenance: Provenance::Bound, meta: Metadata::default() })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = Some(seed);
        self
    }

    pub fn with_grid(mut self, grid: impl ToString) -> Self {
        self.meta.grid = Some(grid.to_string());
        self
    }

    pub fn with_net(mut self, net: impl Into<String>) -> Self {
        self.meta.net = Some(net.into());
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.meta.note = Some(note.into());
        self
    }

    /// The single value when the report is not a proper bracket.
    pub fn value(&self) -> Option<f64> {
        (self.lower == self.upper).then_some(self.lower)
    }

    pub fn is_bound(&self) -> bool {
        self.provenance == Provenance::Bound
    }
}

pub const CSV_HEADER: &str = "name,lower,upper,provenance,tol,seed,grid,net,note";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV line per report, header first.
pub fn write_csv<W: Write>(mut out: W, reports: &[NormReport]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        let tol = match r.provenance {
            Provenance::Quadrature { tol } => format!("{tol:e}"),
            _ => String::new(),
        };
        let opt = |o: &Option<String>| o.as_deref().map(csv_field).unwrap_or_default();
        writeln!(
            out,
            "{},{:e},{:e},{},{},{},{},{},{}",
            csv_field(&r.name),
            r.lower,
            r.upper,
            r.provenance.label(),
            tol,
            r.meta.seed.map(|s| s.to_string()).unwrap_or_default(),
            opt(&r.meta.grid),
            opt(&r.meta.net),
            opt(&r.meta.note),
        )?;
    }
    Ok(())
}

/// Suite document written by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteDocument<'a, C: Serialize> {
    pub suite: &'a str,
    pub config: &'a C,
    pub reports: &'a [NormReport],
    pub pass: bool,
}

pub fn write_json<W: Write, C: Serialize>(out: W, doc: &SuiteDocument<'_, C>) -> Result<()> {
    serde_json::to_writer_pretty(out, doc).map_err(|e| Error::Config(e.to_string()))
}
