//! Sample-count sweeps over synthetic scenes.
//!
//! Every `(method, n, seed)` combination runs synth, calibrate, apply and
//! evaluate, and becomes one CSV row. A failing run becomes a row with
//! `status=failed` instead of aborting the sweep.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::lwlr::LwlrConfig;
use crate::metrics::evaluate;
use crate::model::Method;
use crate::normalize::NormalizationMethod;
use crate::pipeline::{apply, calibrate, CalibrateOptions, Shot};
use crate::solver::SolverConfig;
use crate::synth::{Perturbed, SynthConfig};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    pub norm: NormalizationMethod,
    pub lwlr: LwlrConfig,
    pub solver: SolverConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            ns: vec![20, 50, 100, 400, 1000],
            seeds: (0..5).collect(),
            norm: NormalizationMethod::None,
            lwlr: LwlrConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub status: &'static str,
    pub delta_105: Option<f64>,
    pub delta_110: Option<f64>,
    pub delta_125: Option<f64>,
    pub rel: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub pixel_count: Option<usize>,
    pub calib_ms: Option<f64>,
    pub apply_ms: Option<f64>,
    pub error: String,
}

impl BenchRow {
    fn failed(method: Method, n: usize, seed: u64, err: impl ToString) -> Self {
        Self {
            method,
            n,
            seed,
            status: "failed",
            delta_105: None,
            delta_110: None,
            delta_125: None,
            rel: None,
            rmse: None,
            mae: None,
            pixel_count: None,
            calib_ms: None,
            apply_ms: None,
            error: err.to_string(),
        }
    }
}

fn run_one(
    data: &Perturbed,
    method: Method,
    n: usize,
    seed: u64,
    opts: &BenchOptions,
) -> Result<BenchRow> {
    let copts = CalibrateOptions {
        method,
        norm: opts.norm,
        n,
        seed,
        lwlr: opts.lwlr,
        solver: opts.solver,
        ..Default::default()
    };
    let t0 = Instant::now();
    let cal = calibrate(
        &[Shot {
            gt: &data.gt,
            pred: &data.pred,
        }],
        &copts,
    )?;
    let calib_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let aligned = apply(&cal.model, &data.pred, None)?;
    let apply_ms = t1.elapsed().as_secs_f64() * 1e3;
    let m = evaluate(&aligned, &data.gt, None)?;
    Ok(BenchRow {
        method,
        n,
        seed,
        status: "ok",
        delta_105: Some(m.delta_105),
        delta_110: Some(m.delta_110),
        delta_125: Some(m.delta_125),
        rel: Some(m.rel),
        rmse: Some(m.rmse),
        mae: Some(m.mae),
        pixel_count: Some(m.pixel_count),
        calib_ms: Some(calib_ms),
        apply_ms: Some(apply_ms),
        error: String::new(),
    })
}

/// Runs the sweep. The scene for each seed is generated once (noise is
/// seeded by the run seed) and shared across methods and sample counts.
pub fn run_bench(cfg: &SynthConfig, opts: &BenchOptions) -> Vec<BenchRow> {
    let scenes: Vec<(u64, Result<Perturbed>)> =
        opts.seeds.iter().map(|&s| (s, cfg.generate(s))).collect();
    let mut rows = Vec::with_capacity(opts.methods.len() * opts.ns.len() * opts.seeds.len());
    for &method in &opts.methods {
        for &n in &opts.ns {
            for (seed, scene) in &scenes {
                let row = match scene {
                    Ok(data) => run_one(data, method, n, *seed, opts)
                        .unwrap_or_else(|e| BenchRow::failed(method, n, *seed, e)),
                    Err(e) => BenchRow::failed(method, n, *seed, e),
                };
                rows.push(row);
            }
        }
    }
    rows
}

pub fn write_csv<W: Write>(w: W, rows: &[BenchRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Median of the `mae` column over successful rows matching `method` and `n`.
pub fn median_mae(rows: &[BenchRow], method: Method, n: usize) -> Option<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.n == n)
        .filter_map(|r| r.mae)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}
