//! Plan generators: a deterministic heuristic and a chat-completion LLM client.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::Profile;
use crate::design_space::{format_config, parse_config, DesignSpace, DrawFixes, Integration, SystemConfig};
use crate::mapping::WorkloadSpec;
use crate::sa::neighbor;

pub const MAX_CONFIGS_PER_PLAN: usize = 8;
pub const PROMPT_TEMPLATE_VERSION: u32 = 1;
pub const PROMPT_SYSTEM: &str = include_str!("../assets/prompt_system.md");
pub const PROMPT_USER: &str = include_str!("../assets/prompt_user.md");
/// Parse retries after the first LLM reply.
pub const LLM_RETRIES: usize = 3;
/// Draws one stratified heuristic sample may spend before dropping its pins.
const STRATUM_BUDGET: u64 = 20_000;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("backend not configured: {0}")]
    Config(String),
    #[error("no valid plan block after {attempts} attempts: {last}")]
    Schema { attempts: usize, last: String },
    #[error("could not sample a feasible configuration: {0}")]
    Sampling(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    #[default]
    Medium,
    High,
    Xhigh,
}

impl ReasoningEffort {
    pub const ALL: [ReasoningEffort; 4] = [Self::Low, Self::Medium, Self::High, Self::Xhigh];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
            Self::Xhigh => "xhigh",
        }
    }
}

impl fmt::Display for ReasoningEffort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReasoningEffort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("reasoning effort `{s}` is not one of low, medium, high, xhigh"))
    }
}

/// One row of the best table, as handed to backends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestEntry {
    pub config: SystemConfig,
    pub cost: f64,
    pub iteration_found: usize,
}

#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub workload: WorkloadSpec,
    pub profile: Profile,
    pub iteration: usize,
    pub n_plans: usize,
    pub configs_per_plan: usize,
    /// `(file name, content)` of the read-only documents.
    pub persistent_docs: Vec<(String, String)>,
    /// Digest of the evolving context; empty on the first iteration.
    pub digest: String,
    /// Structured form of the best table, for backends that do not read text.
    pub best: Vec<BestEntry>,
    pub reasoning_effort: ReasoningEffort,
    /// Notes on rejected configurations from a previous round.
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorationPlan {
    pub plan_id: usize,
    pub configs: Vec<SystemConfig>,
    pub rationale: String,
    pub target_region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResponse {
    pub plans: Vec<ExplorationPlan>,
    pub insights: String,
}

pub trait ReasoningBackend: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, req: &PlanRequest) -> Result<PlanResponse, BackendError>;
}

/// Per-call RNG derived from `(seed, iteration, ordinal)`.
pub fn derived_rng(seed: u64, iteration: usize, ordinal: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(iteration as u64).to_le_bytes());
    key[16..24].copy_from_slice(&ordinal.to_le_bytes());
    key[24..].copy_from_slice(b"chiplets");
    ChaCha8Rng::from_seed(key)
}

/// Seeded hill-climbing stand-in for the LLM.
#[derive(Debug, Clone)]
pub struct HeuristicBackend {
    pub space: DesignSpace,
    pub seed: u64,
}

impl HeuristicBackend {
    pub fn new(space: DesignSpace, seed: u64) -> Self {
        HeuristicBackend { space, seed }
    }

    /// Legal (count, integration) pairs of the space, count-major.
    pub fn strata(&self) -> Vec<(usize, Integration)> {
        let ax = self.space.axes();
        let mut out = Vec::new();
        for &n in &ax.counts {
            let pkgs = ax.packages_for(n);
            for &i in &ax.integrations {
                if pkgs.iter().any(|p| p.integration == i) {
                    out.push((n, i));
                }
            }
        }
        out
    }

    fn sample(&self, rng: &mut ChaCha8Rng, fixes: DrawFixes) -> Result<SystemConfig, BackendError> {
        match self.space.draw_feasible(rng, fixes, STRATUM_BUDGET) {
            Ok((cfg, _)) => Ok(cfg),
            Err(_) => self
                .space
                .draw_feasible(rng, DrawFixes::default(), crate::design_space::REJECTION_BUDGET)
                .map(|(cfg, _)| cfg)
                .map_err(|e| BackendError::Sampling(e.to_string())),
        }
    }

    fn broad(&self, req: &PlanRequest) -> Result<PlanResponse, BackendError> {
        let strata = self.strata();
        let dataflows = &self.space.axes().dataflows;
        let k = req.configs_per_plan.clamp(1, MAX_CONFIGS_PER_PLAN);
        let mut plans = Vec::with_capacity(req.n_plans);
        for j in 0..req.n_plans {
            let mut rng = derived_rng(self.seed, req.iteration, j as u64);
            let mut configs = Vec::with_capacity(k);
            let mut cells = Vec::with_capacity(k);
            for c in 0..k {
                let g = j * k + c;
                let (count, integration) = strata[g % strata.len()];
                let dataflow = dataflows[(g / strata.len()) % dataflows.len()];
                cells.push(format!("{count}x{integration}/{dataflow}"));
                let fixes = DrawFixes {
                    count: Some(count),
                    integration: Some(integration),
                    dataflow: Some(dataflow),
                };
                configs.push(self.sample(&mut rng, fixes)?);
            }
            plans.push(ExplorationPlan {
                plan_id: j,
                configs,
                rationale: "broad coverage of chiplet count, integration and dataflow".into(),
                target_region: cells.join(", "),
            });
        }
        Ok(PlanResponse {
            plans,
            insights: format!("iteration {}: stratified sweep over {} count/integration pairs", req.iteration, strata.len()),
        })
    }

    fn refine(&self, req: &PlanRequest) -> Result<PlanResponse, BackendError> {
        let k = req.configs_per_plan.clamp(1, MAX_CONFIGS_PER_PLAN);
        let n_mut = (k * 4) / 5;
        let weights: Vec<f64> = (1..=req.best.len()).map(|r| 1.0 / r as f64).collect();
        let total: f64 = weights.iter().sum();
        let mut plans = Vec::with_capacity(req.n_plans);
        for j in 0..req.n_plans {
            let mut rng = derived_rng(self.seed, req.iteration, j as u64);
            let mut pick = rng.gen::<f64>() * total;
            let mut rank = 0;
            while rank + 1 < weights.len() && pick >= weights[rank] {
                pick -= weights[rank];
                rank += 1;
            }
            let parent = &req.best[rank];
            let mut configs = Vec::with_capacity(k);
            for _ in 0..n_mut {
                configs.push(neighbor(&parent.config, &self.space, &mut rng).config);
            }
            for _ in n_mut..k {
                configs.push(self.sample(&mut rng, DrawFixes::default())?);
            }
            plans.push(ExplorationPlan {
                plan_id: j,
                configs,
                rationale: format!("{n_mut} single-field mutations of best rank {} plus {} random samples", rank + 1, k - n_mut),
                target_region: format!("neighborhood of {}", format_config(&parent.config)),
            });
        }
        let best = &req.best[0];
        Ok(PlanResponse {
            plans,
            insights: format!("iteration {}: refining around best {:.6} @ {}", req.iteration, best.cost, format_config(&best.config)),
        })
    }
}

impl ReasoningBackend for HeuristicBackend {
    fn name(&self) -> &str {
        "heuristic"
    }

    /// First iteration (or an empty best table): stratified sweep. Later:
    /// `floor(0.8k)` mutations of a rank-weighted best entry plus random picks.
    fn generate(&self, req: &PlanRequest) -> Result<PlanResponse, BackendError> {
        if req.iteration <= 1 || req.best.is_empty() {
            self.broad(req)
        } else {
            self.refine(req)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// One chat-completion round trip.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], effort: ReasoningEffort) -> Result<String, BackendError>;
}

/// Chat-completions endpoint over HTTP.
pub struct HttpTransport {
    pub base_url: String,
    pub model: String,
    api_key: String,
    agent: ureq::Agent,
    /// Cleared once the endpoint rejects the effort parameter.
    send_effort: AtomicBool,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpTransport {
    pub fn new(base_url: &str, model: &str, api_key: &str, send_effort: bool) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(600)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            agent,
            send_effort: AtomicBool::new(send_effort),
        }
    }

    /// Reads `CHICO_API_KEY`, `CHICO_API_BASE` and `CHICO_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |k: &str| std::env::var(k).map_err(|_| BackendError::Config(format!("environment variable {k} is not set")));
        Ok(Self::new(&var("CHICO_API_BASE")?, &var("CHICO_MODEL")?, &var("CHICO_API_KEY")?, true))
    }

    pub fn request_body(&self, messages: &[ChatMessage], effort: ReasoningEffort, with_effort: bool) -> serde_json::Value {
        let mut body = serde_json::json!({ "model": self.model, "messages": messages });
        if with_effort {
            body["reasoning_effort"] = serde_json::Value::String(effort.as_str().into());
        }
        body
    }

    fn post(&self, body: &serde_json::Value) -> Result<(u16, String), BackendError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| BackendError::Transport(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(format!("{url}: {e}")))?;
        Ok((status, text))
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, messages: &[ChatMessage], effort: ReasoningEffort) -> Result<String, BackendError> {
        let with_effort = self.send_effort.load(Ordering::Relaxed);
        let (mut status, mut text) = self.post(&self.request_body(messages, effort, with_effort))?;
        if with_effort && status == 400 && text.contains("reasoning_effort") {
            self.send_effort.store(false, Ordering::Relaxed);
            (status, text) = self.post(&self.request_body(messages, effort, false))?;
        }
        if !(200..300).contains(&status) {
            let snippet: String = text.chars().take(300).collect();
            return Err(BackendError::Transport(format!("HTTP {status}: {snippet}")));
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Transport(format!("response is not JSON: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePlan {
    configs: Vec<String>,
    #[serde(default)]
    rationale: String,
    #[serde(default)]
    target_region: String,
}

/// Contents of the first fenced block tagged `json`.
pub fn extract_json_block(reply: &str) -> Option<&str> {
    let start = reply.find("```json")?;
    let body = &reply[start + "```json".len()..];
    let body = body.strip_prefix('\r').unwrap_or(body);
    let body = body.strip_prefix('\n')?;
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Parses a reply into plans. Configurations must parse but need not be feasible.
pub fn parse_plan_reply(reply: &str) -> Result<Vec<ExplorationPlan>, String> {
    let block = extract_json_block(reply).ok_or("the reply has no ```json fenced block")?;
    let wire: Vec<WirePlan> = serde_json::from_str(block).map_err(|e| format!("the json block does not match the plan schema: {e}"))?;
    if wire.is_empty() {
        return Err("the plan array is empty".into());
    }
    wire.into_iter()
        .enumerate()
        .map(|(i, w)| {
            if w.configs.is_empty() || w.configs.len() > MAX_CONFIGS_PER_PLAN {
                return Err(format!("plan {i} has {} configs; expected 1 to {MAX_CONFIGS_PER_PLAN}", w.configs.len()));
            }
            let configs = w
                .configs
                .iter()
                .map(|c| parse_config(c).map_err(|e| format!("plan {i}: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ExplorationPlan {
                plan_id: i,
                configs,
                rationale: w.rationale,
                target_region: w.target_region,
            })
        })
        .collect()
}

fn render_user_message(req: &PlanRequest) -> String {
    let persistent: String = req
        .persistent_docs
        .iter()
        .map(|(name, text)| format!("## {name}\n\n{}\n", text.trim_end()))
        .collect::<Vec<_>>()
        .join("\n");
    let evolving = if req.digest.is_empty() {
        String::new()
    } else {
        format!("\n# Evolving context\n\n{}\n", req.digest.trim_end())
    };
    let feedback = if req.feedback.is_empty() {
        String::new()
    } else {
        format!("\n# Rejected configurations\n\n{}\n", req.feedback.trim_end())
    };
    let w = &req.workload;
    PROMPT_USER
        .replace("{{workload}}", &format!("{} (M={}, K={}, N={})", w.name, w.m, w.k, w.n))
        .replace("{{profile}}", &req.profile.to_string())
        .replace("{{iteration}}", &req.iteration.to_string())
        .replace("{{n_plans}}", &req.n_plans.to_string())
        .replace("{{effort}}", req.reasoning_effort.as_str())
        .replace("{{persistent}}", &persistent)
        .replace("{{evolving}}", &evolving)
        .replace("{{feedback}}", &feedback)
}

/// Chat messages for the first attempt of a request.
pub fn render_messages(req: &PlanRequest) -> Vec<ChatMessage> {
    vec![
        ChatMessage::new("system", PROMPT_SYSTEM.trim_end()),
        ChatMessage::new("user", render_user_message(req)),
    ]
}

pub struct LlmBackend {
    transport: Arc<dyn ChatTransport>,
}

impl LlmBackend {
    pub fn new(transport: Arc<dyn ChatTransport>) -> Self {
        LlmBackend { transport }
    }
}

impl ReasoningBackend for LlmBackend {
    fn name(&self) -> &str {
        "llm"
    }

    fn generate(&self, req: &PlanRequest) -> Result<PlanResponse, BackendError> {
        let mut messages = render_messages(req);
        let mut last = String::new();
        for _ in 0..=LLM_RETRIES {
            let reply = self.transport.complete(&messages, req.reasoning_effort)?;
            match parse_plan_reply(&reply) {
                Ok(plans) => {
                    let insights = reply[..reply.find("```json").unwrap_or(0)].trim().to_string();
                    return Ok(PlanResponse { plans, insights });
                }
                Err(e) => {
                    messages.push(ChatMessage::new("assistant", reply));
                    messages.push(ChatMessage::new(
                        "user",
                        format!(
                            "Your reply could not be used: {e}. Reply again with exactly one ```json fenced block \
                             holding an array of {} plan objects with fields configs, rationale and target_region.",
                            req.n_plans
                        ),
                    ));
                    last = e;
                }
            }
        }
        Err(BackendError::Schema {
            attempts: LLM_RETRIES + 1,
            last,
        })
    }
}
