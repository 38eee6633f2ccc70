//! The admin/field iteration loop and its on-disk context.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::backends::{
    derived_rng, BackendError, BestEntry, ExplorationPlan, HeuristicBackend, PlanRequest, ReasoningBackend,
    ReasoningEffort, MAX_CONFIGS_PER_PLAN,
};
use crate::cost::{Evaluation, Evaluator};
use crate::design_space::{format_config, parse_config, DesignSpace, DrawFixes, SystemConfig, REJECTION_BUDGET};

pub const BUNDLED_AGENTS_DOC: &str = include_str!("../assets/AGENTS.md");
pub const BUNDLED_MODEL_INFO_DOC: &str = include_str!("../assets/MODEL_INFO.md");

pub const AGENTS_FILE: &str = "AGENTS.md";
pub const MODEL_INFO_FILE: &str = "MODEL_INFO.md";
pub const BLACKLIST_FILE: &str = "BLACKLIST.json";
pub const KNOWHOW_FILE: &str = "KNOWHOW.md";
pub const BEST_FILE: &str = "BEST.csv";
pub const RESULTS_FILE: &str = "RESULTS.csv";
pub const WATERMARK_FILE: &str = "WATERMARK";
pub const RUN_FILE: &str = "RUN.json";

pub const RESULTS_HEADER: [&str; 14] = [
    "iteration",
    "plan_id",
    "config",
    "energy_j",
    "area_mm2",
    "latency_s",
    "mfg_cost_usd",
    "norm_e",
    "norm_a",
    "norm_l",
    "norm_c",
    "weighted_cost",
    "backend",
    "timestamp_iso8601",
];
pub const BEST_HEADER: [&str; 4] = ["rank", "weighted_cost", "config", "iteration_found"];
pub const BEST_DEPTH: usize = 20;
pub const DIGEST_CAP_BYTES: usize = 32 * 1024;
/// Backend re-query rounds for infeasible configurations before resampling.
pub const REQUERY_ROUNDS: usize = 3;
const KNOWHOW_PREAMBLE: &str = "# Knowhow\n";
const EPOCH: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent settings: {0}")]
    Settings(String),
    #[error("context store {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("iteration {iteration} was already merged (watermark {watermark})")]
    AlreadyMerged { iteration: usize, watermark: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("could not sample a feasible configuration: {0}")]
    Sampling(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> AgentError {
    AgentError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Heuristic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRunSettings {
    pub n_agents: usize,
    pub max_iterations: usize,
    pub configs_per_plan: usize,
    pub reasoning_effort: ReasoningEffort,
    pub seed: u64,
    pub backend: BackendKind,
    /// Replace wall-clock values and timestamps with fixed placeholders.
    pub no_timestamps: bool,
}

impl Default for AgentRunSettings {
    fn default() -> Self {
        AgentRunSettings {
            n_agents: 100,
            max_iterations: 10,
            configs_per_plan: 5,
            reasoning_effort: ReasoningEffort::Medium,
            seed: 0,
            backend: BackendKind::Heuristic,
            no_timestamps: false,
        }
    }
}

impl AgentRunSettings {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n_agents == 0 {
            return Err(AgentError::Settings("n_agents must be >= 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(AgentError::Settings("max_iterations must be >= 1".into()));
        }
        if !(1..=MAX_CONFIGS_PER_PLAN).contains(&self.configs_per_plan) {
            return Err(AgentError::Settings(format!("configs_per_plan must be in 1..={MAX_CONFIGS_PER_PLAN}")));
        }
        Ok(())
    }
}

/// Outcome of one field agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldResult {
    pub plan_id: usize,
    pub evaluations: Vec<Evaluation>,
    pub best: Option<(SystemConfig, f64)>,
    pub error: Option<String>,
    pub knowhow_entry: String,
}

/// Renders one KNOWHOW entry.
pub fn knowhow_entry(iteration: usize, plan_id: usize, k: usize, best: Option<(&SystemConfig, f64)>, delta: f64, insight: &str) -> String {
    let batch = match best {
        Some((cfg, c)) => format!("{c:.6} @ {}", format_config(cfg)),
        None => "none @ -".to_string(),
    };
    let insight = insight.replace('\n', " ");
    format!(
        "## Iter {iteration} / Plan {plan_id}\n- configs: {k}\n- batch best: {batch}\n- delta vs global best: {delta:+.6}\n- insight: {insight}\n"
    )
}

/// The run directory: read-only documents plus the evolving logs.
#[derive(Debug)]
pub struct ContextStore {
    pub dir: PathBuf,
    pub agents_doc: String,
    pub model_info_doc: String,
    pub blacklist_doc: String,
    best: Vec<BestEntry>,
    results_rows: usize,
    watermark: usize,
}

fn write_atomic(path: &Path, content: &str) -> Result<(), AgentError> {
    let tmp = tmp_path(path);
    fs::write(&tmp, content).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().expect("file path").to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// KNOWHOW entries in file order, each starting at its `## Iter` heading.
pub fn split_entries(knowhow: &str) -> Vec<&str> {
    let starts: Vec<usize> = knowhow
        .match_indices("## Iter ")
        .map(|(i, _)| i)
        .filter(|&i| i == 0 || knowhow.as_bytes()[i - 1] == b'\n')
        .collect();
    starts
        .iter()
        .enumerate()
        .map(|(n, &i)| &knowhow[i..starts.get(n + 1).copied().unwrap_or(knowhow.len())])
        .collect()
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields).expect("in-memory");
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf8")
}

impl ContextStore {
    /// Creates a fresh run directory. Existing evolving files are an error.
    pub fn create(dir: &Path, blacklist_doc: &str) -> Result<Self, AgentError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for f in [KNOWHOW_FILE, BEST_FILE, RESULTS_FILE, WATERMARK_FILE] {
            if dir.join(f).exists() {
                return Err(io_err(&dir.join(f), "run directory already holds a run; pick an empty --out-dir"));
            }
        }
        let store = ContextStore {
            dir: dir.to_path_buf(),
            agents_doc: BUNDLED_AGENTS_DOC.to_string(),
            model_info_doc: BUNDLED_MODEL_INFO_DOC.to_string(),
            blacklist_doc: blacklist_doc.to_string(),
            best: Vec::new(),
            results_rows: 0,
            watermark: 0,
        };
        write_atomic(&dir.join(AGENTS_FILE), &store.agents_doc)?;
        write_atomic(&dir.join(MODEL_INFO_FILE), &store.model_info_doc)?;
        write_atomic(&dir.join(BLACKLIST_FILE), &store.blacklist_doc)?;
        write_atomic(&dir.join(KNOWHOW_FILE), KNOWHOW_PREAMBLE)?;
        write_atomic(&dir.join(BEST_FILE), &csv_line(&BEST_HEADER.map(String::from)))?;
        write_atomic(&dir.join(RESULTS_FILE), &csv_line(&RESULTS_HEADER.map(String::from)))?;
        write_atomic(&dir.join(WATERMARK_FILE), "0\n")?;
        Ok(store)
    }

    pub fn best(&self) -> &[BestEntry] {
        &self.best
    }

    pub fn global_best(&self) -> Option<&BestEntry> {
        self.best.first()
    }

    pub fn results_rows(&self) -> usize {
        self.results_rows
    }

    pub fn watermark(&self) -> usize {
        self.watermark
    }

    pub fn read(&self, file: &str) -> Result<String, AgentError> {
        let p = self.dir.join(file);
        fs::read_to_string(&p).map_err(|e| io_err(&p, e))
    }

    pub fn persistent_docs(&self) -> Vec<(String, String)> {
        vec![
            (AGENTS_FILE.to_string(), self.agents_doc.clone()),
            (MODEL_INFO_FILE.to_string(), self.model_info_doc.clone()),
            (BLACKLIST_FILE.to_string(), self.blacklist_doc.clone()),
        ]
    }

    /// Best table plus the previous iteration's knowhow entries, capped at
    /// `DIGEST_CAP_BYTES`. Oldest knowhow entries are dropped first.
    pub fn digest(&self) -> Result<String, AgentError> {
        let mut best = String::from("## BEST.csv\n\n");
        best.push_str(&self.read(BEST_FILE)?);
        let knowhow = self.read(KNOWHOW_FILE)?;
        let marker = format!("## Iter {} / ", self.watermark);
        let mut entries: Vec<&str> = split_entries(&knowhow)
            .into_iter()
            .filter(|e| e.starts_with(&marker))
            .collect();
        loop {
            let mut out = best.clone();
            if !entries.is_empty() {
                out.push_str("\n## Latest KNOWHOW entries\n\n");
                for e in &entries {
                    out.push_str(e.trim_end());
                    out.push_str("\n\n");
                }
            }
            if out.len() <= DIGEST_CAP_BYTES {
                return Ok(out);
            }
            if entries.is_empty() {
                let mut cut = DIGEST_CAP_BYTES;
                while !out.is_char_boundary(cut) {
                    cut -= 1;
                }
                out.truncate(cut);
                return Ok(out);
            }
            entries.remove(0);
        }
    }

    /// Commits one iteration: RESULTS rows, re-ranked BEST table, KNOWHOW
    /// entries and the watermark. Files are staged first, so a failure leaves
    /// the previous context intact.
    pub fn evaluate_and_merge(
        &mut self,
        results: &[FieldResult],
        iteration: usize,
        backend_label: &str,
        timestamp: &str,
    ) -> Result<(), AgentError> {
        if iteration <= self.watermark {
            return Err(AgentError::AlreadyMerged {
                iteration,
                watermark: self.watermark,
            });
        }
        let mut rows = String::new();
        let mut n_rows = 0;
        for r in results {
            for e in &r.evaluations {
                let rep = &e.report;
                rows.push_str(&csv_line(&[
                    iteration.to_string(),
                    r.plan_id.to_string(),
                    format_config(&e.config),
                    rep.energy_j.to_string(),
                    rep.area_mm2.to_string(),
                    rep.latency_s.to_string(),
                    rep.mfg_cost_usd.to_string(),
                    e.normalized[0].to_string(),
                    e.normalized[1].to_string(),
                    e.normalized[2].to_string(),
                    e.normalized[3].to_string(),
                    e.cost.to_string(),
                    backend_label.to_string(),
                    timestamp.to_string(),
                ]));
                n_rows += 1;
            }
        }

        let mut best = self.best.clone();
        for r in results {
            for e in &r.evaluations {
                if !best.iter().any(|b| b.config == e.config) {
                    best.push(BestEntry {
                        config: e.config.clone(),
                        cost: e.cost,
                        iteration_found: iteration,
                    });
                }
            }
        }
        // stable: incumbents stay ahead of equal-cost newcomers
        best.sort_by(|a, b| a.cost.total_cmp(&b.cost));
        best.truncate(BEST_DEPTH);
        let mut best_csv = csv_line(&BEST_HEADER.map(String::from));
        for (i, b) in best.iter().enumerate() {
            best_csv.push_str(&csv_line(&[
                (i + 1).to_string(),
                b.cost.to_string(),
                format_config(&b.config),
                b.iteration_found.to_string(),
            ]));
        }

        let knowhow_add: String = results.iter().map(|r| format!("\n{}", r.knowhow_entry)).collect();

        let staged = [
            (RESULTS_FILE, self.read(RESULTS_FILE)? + &rows),
            (BEST_FILE, best_csv),
            (KNOWHOW_FILE, self.read(KNOWHOW_FILE)? + &knowhow_add),
            (WATERMARK_FILE, format!("{iteration}\n")),
        ];
        let mut written = Vec::new();
        for (name, content) in &staged {
            let tmp = tmp_path(&self.dir.join(name));
            if let Err(e) = fs::write(&tmp, content) {
                for t in &written {
                    let _ = fs::remove_file(t);
                }
                return Err(io_err(&tmp, e));
            }
            written.push(tmp);
        }
        for (name, _) in &staged {
            let p = self.dir.join(name);
            fs::rename(tmp_path(&p), &p).map_err(|e| io_err(&p, e))?;
        }
        self.best = best;
        self.results_rows += n_rows;
        self.watermark = iteration;
        Ok(())
    }

    pub fn write_run_meta(&self, meta: &RunMeta) -> Result<(), AgentError> {
        let text = serde_json::to_string_pretty(meta).expect("meta serializes") + "\n";
        write_atomic(&self.dir.join(RUN_FILE), &text)
    }
}

/// Plans for one iteration, with the label of the backend that produced them.
#[derive(Debug, Clone)]
pub struct Orchestration {
    pub plans: Vec<ExplorationPlan>,
    pub backend_label: String,
    pub insights: String,
    pub fallback_reason: Option<String>,
    pub replaced_configs: usize,
}

fn build_request(ctx: &ContextStore, ev: &Evaluator, iteration: usize, settings: &AgentRunSettings, n_plans: usize, feedback: String) -> Result<PlanRequest, AgentError> {
    let first = iteration <= 1;
    Ok(PlanRequest {
        workload: ev.workload.clone(),
        profile: ev.profile.clone(),
        iteration,
        n_plans,
        configs_per_plan: settings.configs_per_plan,
        persistent_docs: ctx.persistent_docs(),
        digest: if first { String::new() } else { ctx.digest()? },
        best: if first { Vec::new() } else { ctx.best().to_vec() },
        reasoning_effort: settings.reasoning_effort,
        feedback,
    })
}

/// Asks the backend for `n_agents` plans, falling back to the heuristic on
/// failure, then enforces feasibility: infeasible configurations are replaced
/// from up to `REQUERY_ROUNDS` backend re-queries and finally by resampling.
pub fn orchestrate(
    ctx: &ContextStore,
    ev: &Evaluator,
    space: &DesignSpace,
    backend: &dyn ReasoningBackend,
    iteration: usize,
    settings: &AgentRunSettings,
) -> Result<Orchestration, AgentError> {
    let n = settings.n_agents;
    let req = build_request(ctx, ev, iteration, settings, n, String::new())?;
    let fallback = HeuristicBackend::new(space.clone(), settings.seed);
    let (active, response, fallback_reason): (&dyn ReasoningBackend, _, _) = match backend.generate(&req) {
        Ok(r) => (backend, r, None),
        Err(e) => (&fallback, fallback.generate(&req)?, Some(e.to_string())),
    };
    let backend_label = match &fallback_reason {
        None => active.name().to_string(),
        Some(_) => format!("{}(fallback)", fallback.name()),
    };

    let mut plans = response.plans;
    plans.truncate(n);
    for p in &mut plans {
        p.configs.truncate(MAX_CONFIGS_PER_PLAN);
    }

    let mut repair_rng = derived_rng(settings.seed, iteration, u64::MAX);
    let resample = |rng: &mut rand_chacha::ChaCha8Rng| {
        space
            .draw_feasible(rng, DrawFixes::default(), REJECTION_BUDGET)
            .map(|(c, _)| c)
            .map_err(|e| AgentError::Sampling(e.to_string()))
    };

    // backfill missing plans
    while plans.len() < n {
        let configs = (0..settings.configs_per_plan)
            .map(|_| resample(&mut repair_rng))
            .collect::<Result<Vec<_>, _>>()?;
        plans.push(ExplorationPlan {
            plan_id: plans.len(),
            configs,
            rationale: "backfill: uniform feasible samples".into(),
            target_region: "uniform".into(),
        });
    }
    for (i, p) in plans.iter_mut().enumerate() {
        p.plan_id = i;
    }

    let bad_slots = |plans: &[ExplorationPlan]| -> Vec<(usize, usize)> {
        plans
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.configs.iter().enumerate().map(move |(j, c)| (i, j, c)))
            .filter(|(_, _, c)| !space.contains(c).is_feasible())
            .map(|(i, j, _)| (i, j))
            .collect()
    };
    let mut slots = bad_slots(&plans);
    let replaced_configs = slots.len();
    let mut round = 0;
    while !slots.is_empty() && round < REQUERY_ROUNDS && fallback_reason.is_none() {
        round += 1;
        let feedback: String = slots
            .iter()
            .map(|&(i, j)| {
                let c = &plans[i].configs[j];
                format!("- {}: {}\n", format_config(c), space.contains(c).violations().join(", "))
            })
            .collect();
        let req = build_request(ctx, ev, iteration, settings, slots.len().div_ceil(settings.configs_per_plan), feedback)?;
        let Ok(resp) = active.generate(&req) else { break };
        let mut pool = resp
            .plans
            .into_iter()
            .flat_map(|p| p.configs)
            .filter(|c| space.contains(c).is_feasible());
        for &(i, j) in &slots {
            match pool.next() {
                Some(c) => plans[i].configs[j] = c,
                None => break,
            }
        }
        slots = bad_slots(&plans);
    }
    for (i, j) in slots {
        plans[i].configs[j] = resample(&mut repair_rng)?;
    }
    Ok(Orchestration {
        plans,
        backend_label,
        insights: response.insights,
        fallback_reason,
        replaced_configs,
    })
}

/// Evaluates every plan independently; output is in plan order.
pub fn explore(plans: &[ExplorationPlan], ev: &Evaluator, iteration: usize, global_best: Option<f64>, note: &str) -> Vec<FieldResult> {
    plans
        .par_iter()
        .map(|plan| {
            let mut evaluations = Vec::with_capacity(plan.configs.len());
            let mut error = None;
            for c in &plan.configs {
                match ev.evaluate(c) {
                    Ok(e) => evaluations.push(e),
                    Err(e) => {
                        error = Some(format!("{}: {e}", format_config(c)));
                        break;
                    }
                }
            }
            if error.is_some() {
                evaluations.clear();
            }
            let best = evaluations
                .iter()
                .min_by(|a, b| {
                    a.cost
                        .total_cmp(&b.cost)
                        .then_with(|| format_config(&a.config).cmp(&format_config(&b.config)))
                })
                .map(|e| (e.config.clone(), e.cost));
            let delta = match (&best, global_best) {
                (Some((_, c)), Some(g)) => c - g,
                (Some(_), None) => 0.0,
                (None, _) => f64::INFINITY,
            };
            let outcome = match (&error, delta.partial_cmp(&0.0)) {
                (Some(e), _) => format!("evaluation failed: {e}"),
                (None, Some(Ordering::Less)) => "improves on the global best".to_string(),
                _ => "no improvement over the global best".to_string(),
            };
            let insight = format!("{note}{}; {outcome}", plan.rationale);
            let entry = knowhow_entry(
                iteration,
                plan.plan_id,
                plan.configs.len(),
                best.as_ref().map(|(c, v)| (c, *v)),
                delta,
                &insight,
            );
            FieldResult {
                plan_id: plan.plan_id,
                evaluations,
                best,
                error,
                knowhow_entry: entry,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub workload: String,
    pub profile: String,
    pub backend: String,
    pub n_agents: usize,
    pub iterations: usize,
    pub configs_per_plan: usize,
    pub seed: u64,
    pub reasoning_effort: ReasoningEffort,
    pub evaluations: usize,
    pub best_cost: f64,
    pub best_config: String,
    pub iteration_found: usize,
    pub fallbacks: usize,
    pub wall_clock_s: f64,
    pub time_to_best_s: f64,
}

#[derive(Debug, Clone)]
pub struct AgentOutcome {
    pub best_config: SystemConfig,
    pub best_cost: f64,
    pub dir: PathBuf,
    pub meta: RunMeta,
}

/// Runs `settings.max_iterations` rounds of orchestrate, explore and merge.
pub fn run(
    ev: &Evaluator,
    space: &DesignSpace,
    backend: &dyn ReasoningBackend,
    settings: &AgentRunSettings,
    dir: &Path,
) -> Result<AgentOutcome, AgentError> {
    settings.validate()?;
    let start = Instant::now();
    let mut ctx = ContextStore::create(dir, space.blacklist().source())?;
    let mut fallbacks = 0;
    let mut time_to_best_s = 0.0;
    let mut best_before: Option<f64> = None;
    for iteration in 1..=settings.max_iterations {
        let orch = orchestrate(&ctx, ev, space, backend, iteration, settings)?;
        let note = match &orch.fallback_reason {
            Some(reason) => {
                fallbacks += 1;
                format!("[fallback to heuristic backend: {reason}] ")
            }
            None => String::new(),
        };
        let results = explore(&orch.plans, ev, iteration, best_before, &note);
        let timestamp = if settings.no_timestamps {
            EPOCH.to_string()
        } else {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        };
        ctx.evaluate_and_merge(&results, iteration, &orch.backend_label, &timestamp)?;
        let now = ctx.global_best().map(|b| b.cost);
        if now != best_before {
            time_to_best_s = start.elapsed().as_secs_f64();
            best_before = now;
        }
    }
    let best = ctx
        .global_best()
        .cloned()
        .ok_or_else(|| AgentError::Sampling("no configuration was evaluated successfully".into()))?;
    let timing = |v: f64| if settings.no_timestamps { 0.0 } else { v };
    let meta = RunMeta {
        workload: ev.workload.name.clone(),
        profile: ev.profile.name.clone(),
        backend: backend.name().to_string(),
        n_agents: settings.n_agents,
        iterations: settings.max_iterations,
        configs_per_plan: settings.configs_per_plan,
        seed: settings.seed,
        reasoning_effort: settings.reasoning_effort,
        evaluations: ctx.results_rows(),
        best_cost: best.cost,
        best_config: format_config(&best.config),
        iteration_found: best.iteration_found,
        fallbacks,
        wall_clock_s: timing(start.elapsed().as_secs_f64()),
        time_to_best_s: timing(time_to_best_s),
    };
    ctx.write_run_meta(&meta)?;
    Ok(AgentOutcome {
        best_config: best.config,
        best_cost: best.cost,
        dir: dir.to_path_buf(),
        meta,
    })
}

/// Reads BEST.csv back into entries.
pub fn read_best_table(path: &Path) -> Result<Vec<BestEntry>, AgentError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| io_err(path, "short row"));
        out.push(BestEntry {
            cost: field(1)?.parse().map_err(|e| io_err(path, e))?,
            config: parse_config(field(2)?).map_err(|e| io_err(path, e))?,
            iteration_found: field(3)?.parse().map_err(|e| io_err(path, e))?,
        });
    }
    Ok(out)
}
