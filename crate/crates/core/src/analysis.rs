//! Pareto frontiers, the exhaustive oracle and run summaries.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{RESULTS_FILE, RUN_FILE};
use crate::cost::{compare_candidates, CostError, Evaluator};
use crate::design_space::{format_config, DesignSpace, SystemConfig};

pub const DEFAULT_ORACLE_CAP: usize = 1_000_000;
pub const SA_RUNS_FILE: &str = "SA_RUNS.csv";
pub const SUMMARY_HEADER: [&str; 6] = ["method", "settings", "best_cost", "runtime_s", "evaluations", "best_config"];
const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Invalid(String),
    #[error("restricted space holds more than {cap} configurations; tighten the restriction")]
    CapExceeded { cap: usize },
    #[error("the restricted space is empty")]
    EmptySpace,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("run directory {path}: {msg}")]
    RunDir { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub runtime_s: f64,
    pub cost: f64,
    pub label: String,
}

impl ParetoPoint {
    pub fn new(runtime_s: f64, cost: f64, label: impl Into<String>) -> Self {
        ParetoPoint {
            runtime_s,
            cost,
            label: label.into(),
        }
    }

    /// No worse on both axes and strictly better on at least one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.runtime_s <= other.runtime_s
            && self.cost <= other.cost
            && (self.runtime_s < other.runtime_s || self.cost < other.cost)
    }
}

/// Non-dominated points, sorted by runtime then cost. Exact duplicates of a
/// frontier point are all kept since neither dominates the other.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Result<Vec<ParetoPoint>, AnalysisError> {
    if points.is_empty() {
        return Err(AnalysisError::Invalid("pareto frontier of an empty point set".into()));
    }
    if let Some(p) = points.iter().find(|p| !(p.runtime_s > 0.0) || !p.cost.is_finite() || !p.runtime_s.is_finite()) {
        return Err(AnalysisError::Invalid(format!(
            "point `{}` needs runtime > 0 and a finite cost (got {}, {})",
            p.label, p.runtime_s, p.cost
        )));
    }
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.runtime_s
            .total_cmp(&b.runtime_s)
            .then(a.cost.total_cmp(&b.cost))
            .then_with(|| a.label.cmp(&b.label))
    });
    let mut out: Vec<ParetoPoint> = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for p in sorted {
        let keep = match last {
            None => true,
            Some((r, c)) => p.cost < c || (p.cost == c && p.runtime_s == r),
        };
        if keep {
            last = Some((p.runtime_s, p.cost));
            out.push(p.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub subspace: String,
    pub total: usize,
    pub best_config: SystemConfig,
    pub best_cost: f64,
    pub runtime_s: f64,
}

/// Evaluates every configuration of `space` and returns the exact optimum,
/// ties broken by canonical string.
pub fn brute_force(ev: &Evaluator, space: &DesignSpace, cap: usize) -> Result<OracleResult, AnalysisError> {
    let start = Instant::now();
    let total = space.enumerate().take(cap.saturating_add(1)).count();
    if total > cap {
        return Err(AnalysisError::CapExceeded { cap });
    }
    let mut best: Option<(SystemConfig, f64)> = None;
    for chunk in &space.enumerate().chunks(CHUNK) {
        let chunk: Vec<SystemConfig> = chunk.collect();
        let local = chunk
            .into_par_iter()
            .map(|cfg| ev.cost(&cfg).map(|c| (cfg, c)))
            .try_reduce_with(|a, b| Ok(if compare_candidates((&b.0, b.1), (&a.0, a.1)) == Ordering::Less { b } else { a }));
        if let Some(r) = local {
            let (cfg, c) = r?;
            let replace = match &best {
                None => true,
                Some((bc, bv)) => compare_candidates((&cfg, c), (bc, *bv)) == Ordering::Less,
            };
            if replace {
                best = Some((cfg, c));
            }
        }
    }
    let (best_config, best_cost) = best.ok_or(AnalysisError::EmptySpace)?;
    Ok(OracleResult {
        subspace: space.restriction().to_string(),
        total,
        best_config,
        best_cost,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub settings: String,
    pub best_cost: f64,
    pub runtime_s: f64,
    pub evaluations: usize,
    pub best_config: String,
}

impl SummaryRow {
    pub fn to_point(&self) -> ParetoPoint {
        ParetoPoint::new(self.runtime_s, self.best_cost, format!("{} {}", self.method, self.settings))
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory");
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.settings.clone(),
            r.best_cost.to_string(),
            r.runtime_s.to_string(),
            r.evaluations.to_string(),
            r.best_config.clone(),
        ])
        .expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf8")
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, AnalysisError> {
    let err = |msg: String| AnalysisError::RunDir {
        path: path.display().to_string(),
        msg,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(err(format!("unexpected header {:?}", header)));
    }
    rdr.deserialize().map(|r| r.map_err(|e| err(e.to_string()))).collect()
}

#[derive(Debug, Deserialize)]
struct RunMetaIn {
    backend: String,
    n_agents: usize,
    iterations: usize,
    seed: u64,
    reasoning_effort: String,
    time_to_best_s: f64,
}

fn summarize_agent_dir(dir: &Path) -> Result<SummaryRow, AnalysisError> {
    let err = |msg: String| AnalysisError::RunDir {
        path: dir.display().to_string(),
        msg,
    };
    let meta_text = std::fs::read_to_string(dir.join(RUN_FILE)).map_err(|e| err(format!("{RUN_FILE}: {e}")))?;
    let meta: RunMetaIn = serde_json::from_str(&meta_text).map_err(|e| err(format!("{RUN_FILE}: {e}")))?;
    let mut rdr = csv::Reader::from_path(dir.join(RESULTS_FILE)).map_err(|e| err(format!("{RESULTS_FILE}: {e}")))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| err(format!("{RESULTS_FILE} lacks column {name}")));
    let (ci, cc) = (col("weighted_cost")?, col("config")?);
    let mut best: Option<(f64, String)> = None;
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let c: f64 = rec[ci].parse().map_err(|_| err(format!("bad weighted_cost `{}`", &rec[ci])))?;
        n += 1;
        let better = match &best {
            None => true,
            Some((bc, bcfg)) => c < *bc || (c == *bc && rec[cc] < **bcfg),
        };
        if better {
            best = Some((c, rec[cc].to_string()));
        }
    }
    let (best_cost, best_config) = best.ok_or_else(|| err(format!("{RESULTS_FILE} has no rows")))?;
    Ok(SummaryRow {
        method: "agent".into(),
        settings: format!(
            "backend={} n_agents={} iterations={} effort={} seed={}",
            meta.backend, meta.n_agents, meta.iterations, meta.reasoning_effort, meta.seed
        ),
        best_cost,
        runtime_s: meta.time_to_best_s,
        evaluations: n,
        best_config,
    })
}

/// One summary row per run found in `dir`: an agent run directory, an SA
/// output directory, or a directory whose subdirectories hold such runs.
pub fn summarize_run(dir: &Path) -> Result<Vec<SummaryRow>, AnalysisError> {
    let mut rows = Vec::new();
    if dir.join(RUN_FILE).exists() {
        rows.push(summarize_agent_dir(dir)?);
    }
    if dir.join(SA_RUNS_FILE).exists() {
        rows.extend(read_summary_csv(&dir.join(SA_RUNS_FILE))?);
    }
    if rows.is_empty() {
        let entries = std::fs::read_dir(dir).map_err(|e| AnalysisError::RunDir {
            path: dir.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut subdirs: Vec<_> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        subdirs.sort();
        for sub in subdirs {
            if sub.join(RUN_FILE).exists() || sub.join(SA_RUNS_FILE).exists() {
                rows.extend(summarize_run(&sub)?);
            }
        }
    }
    if rows.is_empty() {
        return Err(AnalysisError::RunDir {
            path: dir.display().to_string(),
            msg: format!("no {RUN_FILE} or {SA_RUNS_FILE} found"),
        });
    }
    Ok(rows)
}

/// Scatter of (runtime, cost) with log-scale runtime; frontier points are
/// drawn filled and joined.
pub fn scatter_svg(points: &[ParetoPoint], frontier: &[ParetoPoint], title: &str) -> String {
    let (w, h, m) = (640.0, 420.0, 56.0);
    let lx: Vec<f64> = points.iter().map(|p| p.runtime_s.log10()).collect();
    let (x0, x1) = lx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (y0, y1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.cost), b.max(p.cost)));
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let px = |r: f64| m + (r.log10() - x0) / span(x0, x1) * (w - 2.0 * m);
    let py = |c: f64| h - m - (c - y0) / span(y0, y1) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, w / 2.0, xml_escape(title));
    let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">runtime (s, log scale)</text>"#, w / 2.0, h - 16.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">cost</text>"#, h / 2.0, h / 2.0);
    for p in points {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="none" stroke="steelblue"><title>{}</title></circle>"#, px(p.runtime_s), py(p.cost), xml_escape(&p.label));
    }
    if !frontier.is_empty() {
        let path: Vec<String> = frontier.iter().map(|p| format!("{:.2},{:.2}", px(p.runtime_s), py(p.cost))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="crimson"/>"#, path.join(" "));
        for p in frontier {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="crimson"/>"#, px(p.runtime_s), py(p.cost));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Convenience for reports: canonical string of an oracle optimum.
pub fn describe_oracle(o: &OracleResult) -> String {
    format!("{} configs, optimum {:.6} @ {}", o.total, o.best_cost, format_config(&o.best_config))
}
