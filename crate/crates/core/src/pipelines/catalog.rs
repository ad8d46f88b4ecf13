use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate events: parallel arrays of time (s), ranking statistic and timing
/// tolerance (s).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionCatalog {
    pub times: Vec<f64>,
    pub stats: Vec<f64>,
    pub vars: Vec<f64>,
}

impl DetectionCatalog {
    pub fn new(times: Vec<f64>, stats: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let c = DetectionCatalog { times, stats, vars };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.stats.len() || self.times.len() != self.vars.len() {
            return Err(Error::eval(format!(
                "catalog columns differ in length ({}, {}, {})",
                self.times.len(),
                self.stats.len(),
                self.vars.len()
            )));
        }
        if let Some(v) = self.vars.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::eval(format!("catalog timing tolerance must be positive, got {v}")));
        }
        if self.times.iter().chain(&self.stats).any(|v| !v.is_finite()) {
            return Err(Error::eval("catalog contains non-finite values"));
        }
        Ok(())
    }

    /// Concatenates catalogs in order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a DetectionCatalog>) -> DetectionCatalog {
        let mut out = DetectionCatalog::default();
        for p in parts {
            out.times.extend_from_slice(&p.times);
            out.stats.extend_from_slice(&p.stats);
            out.vars.extend_from_slice(&p.vars);
        }
        out
    }

    /// Applies `f` to every statistic.
    pub fn map_stats(&self, f: impl Fn(f64) -> f64) -> DetectionCatalog {
        DetectionCatalog {
            times: self.times.clone(),
            stats: self.stats.iter().map(|&s| f(s)).collect(),
            vars: self.vars.clone(),
        }
    }

    /// CSV with header `time,stat,var`; values use shortest round-trip formatting.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "time,stat,var")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{}", self.times[i], self.stats[i], self.vars[i])?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead, origin: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format { path: origin.to_string(), reason };
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "time,stat,var" {
            return Err(bad(format!("expected header `time,stat,var`, found `{}`", header.trim())));
        }
        let mut c = DetectionCatalog::default();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("line {}: expected 3 fields", i + 2)));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| bad(format!("line {}: `{s}`: {e}", i + 2)))
            };
            c.times.push(parse(fields[0])?);
            c.stats.push(parse(fields[1])?);
            c.vars.push(parse(fields[2])?);
        }
        c.validate().map_err(|e| bad(e.to_string()))?;
        Ok(c)
    }
}
