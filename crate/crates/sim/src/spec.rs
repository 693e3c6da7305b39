//! Sweep configs and their expansion into trial configurations.

use std::path::Path;

use rename_core::byz::ByzParams;
use rename_core::trial::{Overrides, Protocol, TrialConfig};
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Absolute number or a formula in `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Abs(u64),
    Formula(String),
}

impl Scalar {
    /// `N` values: `"5n^2"`, `"4n"`, or a number.
    pub fn namespace(&self, n: u32) -> Result<u64, SimError> {
        match self {
            Scalar::Abs(v) => Ok(*v),
            Scalar::Formula(s) => {
                let s = s.replace(' ', "");
                let n = n as u64;
                let (k, tail) = split_coefficient(&s);
                match tail {
                    "n^2" => Ok(k * n * n),
                    "n" => Ok(k * n),
                    _ => Err(SimError::Spec(format!("unsupported namespace formula {s:?}"))),
                }
            }
        }
    }

    /// Budgets: a number, `"n/8"`, `"n-1"`, `"n"` or `"f_bound"`. Fractions floor.
    pub fn budget(&self, n: u32, f_bound: Option<u32>) -> Result<usize, SimError> {
        match self {
            Scalar::Abs(v) => Ok(*v as usize),
            Scalar::Formula(s) => {
                let s = s.replace(' ', "");
                let n = n as usize;
                if s == "f_bound" {
                    return f_bound
                        .map(|b| b as usize)
                        .ok_or_else(|| SimError::Spec("f_bound applies to the Byzantine protocol only".into()));
                }
                if s == "n" {
                    return Ok(n);
                }
                if let Some(d) = s.strip_prefix("n/") {
                    let d: usize = d.parse().map_err(|_| SimError::Spec(format!("bad budget {s:?}")))?;
                    if d == 0 {
                        return Err(SimError::Spec(format!("bad budget {s:?}")));
                    }
                    return Ok(n / d);
                }
                if let Some(d) = s.strip_prefix("n-") {
                    let d: usize = d.parse().map_err(|_| SimError::Spec(format!("bad budget {s:?}")))?;
                    return n.checked_sub(d).ok_or_else(|| SimError::Spec(format!("{s} is negative at n = {n}")));
                }
                Err(SimError::Spec(format!("unsupported budget {s:?}")))
            }
        }
    }
}

fn split_coefficient(s: &str) -> (u64, &str) {
    let digits = s.bytes().take_while(|b| b.is_ascii_digit()).count();
    let k = if digits == 0 { 1 } else { s[..digits].parse().unwrap_or(1) };
    let tail = s[digits..].trim_start_matches('*');
    (k, tail)
}

fn default_namespace() -> Scalar {
    Scalar::Formula("5n^2".into())
}

fn default_epsilon0() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_raw")]
    pub raw: String,
    #[serde(default = "default_summary")]
    pub summary: String,
}

fn default_raw() -> String {
    "raw.csv".into()
}

fn default_summary() -> String {
    "summary.csv".into()
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths { raw: default_raw(), summary: default_summary() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub protocol: Protocol,
    pub n_values: Vec<u32>,
    #[serde(rename = "N", default = "default_namespace")]
    pub big_n: Scalar,
    pub f_values: Vec<Scalar>,
    pub adversaries: Vec<String>,
    pub trials_per_cell: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_epsilon0")]
    pub epsilon0: f64,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub output: OutputPaths,
}

/// One `(n, f, adversary)` cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub n: u32,
    pub big_n: u64,
    pub f_budget: usize,
    pub adversary: String,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let spec: SweepSpec = serde_json::from_str(text).map_err(|e| SimError::Spec(e.to_string()))?;
        spec.cells()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Cells in spec order; duplicate budgets at one `n` collapse. Every cell is validated.
    pub fn cells(&self) -> Result<Vec<Cell>, SimError> {
        if self.trials_per_cell == 0 {
            return Err(SimError::Spec("trials_per_cell must be at least 1".into()));
        }
        if self.n_values.is_empty() || self.f_values.is_empty() || self.adversaries.is_empty() {
            return Err(SimError::Spec("n_values, f_values and adversaries must be non-empty".into()));
        }
        let mut cells = Vec::new();
        for &n in &self.n_values {
            let big_n = self.big_n.namespace(n)?;
            let f_bound = match self.protocol {
                Protocol::Byzantine => Some(
                    ByzParams::new(n, big_n, self.epsilon0, self.overrides.p0)
                        .map_err(|e| SimError::Spec(e.to_string()))?
                        .f_bound,
                ),
                Protocol::Crash => None,
            };
            let mut budgets = Vec::new();
            for f in &self.f_values {
                let f = f.budget(n, f_bound)?;
                if !budgets.contains(&f) {
                    budgets.push(f);
                }
            }
            for f in budgets {
                for adv in &self.adversaries {
                    let cell = Cell { index: cells.len(), n, big_n, f_budget: f, adversary: adv.clone() };
                    self.trial(&cell, 0).validate().map_err(|e| SimError::Spec(format!("cell n={n} f={f} {adv}: {e}")))?;
                    cells.push(cell);
                }
            }
        }
        Ok(cells)
    }

    /// Trial `t` of `cell`, seeded `base_seed + t`.
    pub fn trial(&self, cell: &Cell, t: u64) -> TrialConfig {
        let mut cfg = TrialConfig::new(self.protocol, cell.n, cell.big_n, &cell.adversary, cell.f_budget, self.base_seed + t);
        cfg.epsilon0 = self.epsilon0;
        cfg.overrides = self.overrides.clone();
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas_resolve_per_n() {
        assert_eq!(Scalar::Formula("5n^2".into()).namespace(8).unwrap(), 320);
        assert_eq!(Scalar::Formula("n".into()).namespace(8).unwrap(), 8);
        assert_eq!(Scalar::Formula("n/8".into()).budget(20, None).unwrap(), 2);
        assert_eq!(Scalar::Formula("n-1".into()).budget(20, None).unwrap(), 19);
        assert_eq!(Scalar::Formula("f_bound".into()).budget(20, Some(5)).unwrap(), 5);
        assert!(Scalar::Formula("f_bound".into()).budget(20, None).is_err());
        assert!(Scalar::Formula("sqrt(n)".into()).budget(20, None).is_err());
    }

    fn spec(extra: &str) -> Result<SweepSpec, SimError> {
        SweepSpec::from_json(&format!(
            r#"{{"protocol":"crash","n_values":[4,8],"f_values":[0,1,"n/8","n-1"],"adversaries":["uniform_random"],{extra}}}"#
        ))
    }

    #[test]
    fn zero_trials_rejected_at_parse_time() {
        assert!(matches!(spec(r#""trials_per_cell":0"#), Err(SimError::Spec(_))));
        let s = spec(r#""trials_per_cell":2"#).unwrap();
        // n=4: {0,1,3}; n=8: {0,1,7}
        assert_eq!(s.cells().unwrap().len(), 6);
    }

    #[test]
    fn out_of_tolerance_budget_rejected() {
        let s = SweepSpec::from_json(
            r#"{"protocol":"crash","n_values":[8],"f_values":["n"],"adversaries":["none"],"trials_per_cell":1}"#,
        );
        assert!(s.is_err());
        let s = SweepSpec::from_json(
            r#"{"protocol":"byzantine","n_values":[32],"f_values":[12],"adversaries":["silent"],"trials_per_cell":1}"#,
        );
        assert!(s.is_err());
    }
}
