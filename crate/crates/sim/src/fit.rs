//! Least-squares fits of message counts against the complexity models.

use std::collections::BTreeMap;
use std::io::Read;

use rename_core::trial::SummaryRow;
use serde::Serialize;

use crate::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `n·log₂²n`
    NLog2N,
    /// `(f + log₂n)·n·log₂n`
    FPlusLogN,
    /// `f·log₂N·log₂³n + n·log₂n`
    Byz,
}

impl Model {
    pub fn parse(s: &str) -> Option<Model> {
        match s {
            "n_log2n" => Some(Model::NLog2N),
            "f_plus_logn" => Some(Model::FPlusLogN),
            "byz" => Some(Model::Byz),
            _ => None,
        }
    }

    pub fn eval(self, p: &Point) -> f64 {
        let l = p.n.log2();
        match self {
            Model::NLog2N => p.n * l * l,
            Model::FPlusLogN => (p.f + l) * p.n * l,
            Model::Byz => p.f * p.big_n.log2() * l * l * l + p.n * l,
        }
    }
}

/// Mean of one `(n, N, f_budget)` group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Point {
    pub n: f64,
    pub big_n: f64,
    /// Mean actual failures.
    pub f: f64,
    pub messages: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub model: Model,
    pub points: usize,
    pub coefficient: f64,
    /// `max |y − c·g| / (c·g)`
    pub max_relative_residual: f64,
    /// Largest over smallest per-point ratio `y / g`.
    pub ratio_spread: f64,
}

pub fn group_points(rows: &[SummaryRow]) -> Vec<Point> {
    let mut groups: BTreeMap<(u32, u64, usize), (f64, f64, u64)> = BTreeMap::new();
    for r in rows {
        let e = groups.entry((r.n, r.big_n, r.f_budget)).or_default();
        e.0 += r.f_actual as f64;
        e.1 += r.messages as f64;
        e.2 += 1;
    }
    groups
        .into_iter()
        .map(|((n, big_n, _), (f, m, c))| Point { n: n as f64, big_n: big_n as f64, f: f / c as f64, messages: m / c as f64 })
        .collect()
}

/// Fit through the origin over `points`; needs at least `min_points`.
pub fn fit_points(points: &[Point], model: Model, min_points: usize) -> Result<FitReport, SimError> {
    if points.len() < min_points || points.is_empty() {
        return Err(SimError::InsufficientData { have: points.len(), need: min_points.max(1) });
    }
    let g: Vec<f64> = points.iter().map(|p| model.eval(p)).collect();
    let num: f64 = points.iter().zip(&g).map(|(p, g)| p.messages * g).sum();
    let den: f64 = g.iter().map(|g| g * g).sum();
    let c = num / den;
    let max_rel = points.iter().zip(&g).map(|(p, g)| ((p.messages - c * g) / (c * g)).abs()).fold(0.0, f64::max);
    let ratios: Vec<f64> = points.iter().zip(&g).map(|(p, g)| p.messages / g).collect();
    let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
    let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
    Ok(FitReport { model, points: points.len(), coefficient: c, max_relative_residual: max_rel, ratio_spread: hi / lo })
}

/// Fits the rows of a raw CSV; needs four distinct `(n, f)` groups.
pub fn fit_scaling<R: Read>(raw: R, model: Model) -> Result<FitReport, SimError> {
    let mut rdr = csv::Reader::from_reader(raw);
    let rows: Vec<SummaryRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    fit_points(&group_points(&rows), model, 4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(n: f64, f: f64, m: f64) -> Point {
        Point { n, big_n: n * n, f, messages: m }
    }

    #[test]
    fn exact_model_fits_with_zero_residual() {
        let pts: Vec<Point> =
            [64.0, 128.0, 256.0, 512.0].iter().map(|&n: &f64| pt(n, 0.0, 3.0 * n * n.log2() * n.log2())).collect();
        let r = fit_points(&pts, Model::NLog2N, 4).unwrap();
        assert!((r.coefficient - 3.0).abs() < 1e-9);
        assert!(r.max_relative_residual < 1e-9);
        assert!((r.ratio_spread - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_data_misfits_without_panicking() {
        let pts: Vec<Point> = [64.0, 128.0, 256.0, 512.0, 1024.0].iter().map(|&n| pt(n, 0.0, 1000.0)).collect();
        let r = fit_points(&pts, Model::NLog2N, 4).unwrap();
        assert!(r.max_relative_residual > 0.5);
        assert!(r.ratio_spread > 10.0);
    }

    #[test]
    fn too_few_points() {
        let pts = vec![pt(64.0, 0.0, 1.0); 3];
        assert!(matches!(fit_points(&pts, Model::NLog2N, 4), Err(SimError::InsufficientData { .. })));
    }
}
