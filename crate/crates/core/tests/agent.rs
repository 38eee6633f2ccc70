mod common;

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use chiplet_dse::agent::{
    self, explore, knowhow_entry, orchestrate, read_best_table, split_entries, AgentError, AgentRunSettings, ContextStore,
    BEST_FILE, KNOWHOW_FILE, RESULTS_FILE, RUN_FILE, WATERMARK_FILE,
};
use chiplet_dse::backends::{
    BackendError, ChatMessage, ChatTransport, HeuristicBackend, HttpTransport, LlmBackend, ReasoningBackend,
    ReasoningEffort,
};
use chiplet_dse::design_space::{format_config, parse_config};

const EPOCH: &str = "1970-01-01T00:00:00Z";

#[test]
fn knowhow_entry_golden() {
    let cfg = parse_config("2|64-7-256;64-7-256|0-WS-0|0|3D-HB-HBM3|UC3|ring").unwrap();
    let got = knowhow_entry(3, 7, 5, Some((&cfg, 1.2345678)), -0.0123, "HBM3 wins\nagain");
    assert_eq!(
        got,
        "## Iter 3 / Plan 7\n\
         - configs: 5\n\
         - batch best: 1.234568 @ 2|64-7-256;64-7-256|0-WS-0|0|3D-HB-HBM3|UC3|ring\n\
         - delta vs global best: -0.012300\n\
         - insight: HBM3 wins again\n"
    );
    let up = knowhow_entry(1, 0, 1, Some((&cfg, 2.0)), 0.5, "x");
    assert!(up.contains("- delta vs global best: +0.500000\n"));
}

fn check_entry_shape(entry: &str) {
    let lines: Vec<&str> = entry.trim_end().lines().collect();
    assert_eq!(lines.len(), 5, "{entry}");
    let head = lines[0].strip_prefix("## Iter ").unwrap();
    let (iter, plan) = head.split_once(" / Plan ").unwrap();
    iter.parse::<usize>().unwrap();
    plan.parse::<usize>().unwrap();
    lines[1].strip_prefix("- configs: ").unwrap().parse::<usize>().unwrap();
    let batch = lines[2].strip_prefix("- batch best: ").unwrap();
    let (cost, cfg) = batch.split_once(" @ ").unwrap();
    if cost != "none" {
        cost.parse::<f64>().unwrap();
        parse_config(cfg).unwrap();
    }
    let delta = lines[3].strip_prefix("- delta vs global best: ").unwrap();
    assert!(delta.starts_with('+') || delta.starts_with('-'), "{delta}");
    assert!(lines[4].starts_with("- insight: "));
}

fn settings(seed: u64) -> AgentRunSettings {
    AgentRunSettings {
        n_agents: 12,
        max_iterations: 4,
        configs_per_plan: 3,
        seed,
        no_timestamps: true,
        ..Default::default()
    }
}

#[test]
fn run_directory_formats_and_determinism() {
    let f = common::fixture("WL-6", "Wearables", 1000);
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let s = settings(7);
    let backend = HeuristicBackend::new(f.space.clone(), 7);
    let out = agent::run(&f.ev, &f.space, &backend, &s, &a).unwrap();
    agent::run(&f.ev, &f.space, &backend, &s, &b).unwrap();
    for file in [RESULTS_FILE, BEST_FILE, KNOWHOW_FILE, RUN_FILE, WATERMARK_FILE] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }

    let results = fs::read_to_string(a.join(RESULTS_FILE)).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,plan_id,config,energy_j,area_mm2,latency_s,mfg_cost_usd,norm_e,norm_a,norm_l,norm_c,weighted_cost,backend,timestamp_iso8601"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4 * 12 * 3);
    assert_eq!(rows.len(), out.meta.evaluations);
    assert!(rows.iter().all(|r| r.ends_with(&format!(",heuristic,{EPOCH}"))));
    let min_cost = rows
        .iter()
        .map(|r| r.split(',').nth(11).unwrap().parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(min_cost, out.best_cost);

    let best_text = fs::read_to_string(a.join(BEST_FILE)).unwrap();
    assert_eq!(best_text.lines().next().unwrap(), "rank,weighted_cost,config,iteration_found");
    let best = read_best_table(&a.join(BEST_FILE)).unwrap();
    assert!(!best.is_empty() && best.len() <= 20);
    assert!(best.windows(2).all(|w| w[0].cost <= w[1].cost));
    assert_eq!(best[0].cost, out.best_cost);

    let knowhow = fs::read_to_string(a.join(KNOWHOW_FILE)).unwrap();
    let entries = split_entries(&knowhow);
    assert_eq!(entries.len(), 4 * 12);
    entries.iter().for_each(|e| check_entry_shape(e));
    assert_eq!(fs::read_to_string(a.join(WATERMARK_FILE)).unwrap().trim(), "4");

    // a second run into the same directory is refused
    assert!(matches!(agent::run(&f.ev, &f.space, &backend, &s, &a), Err(AgentError::Io { .. })));
}

#[test]
fn merges_are_append_only_and_guarded_by_the_watermark() {
    let f = common::fixture("WL-4", "Mobile", 1000);
    let tmp = tempfile::tempdir().unwrap();
    let mut ctx = ContextStore::create(tmp.path(), f.space.blacklist().source()).unwrap();
    let s = settings(3);
    let backend = HeuristicBackend::new(f.space.clone(), 3);
    let mut prev_knowhow = fs::read(tmp.path().join(KNOWHOW_FILE)).unwrap();
    let mut prev_results = fs::read(tmp.path().join(RESULTS_FILE)).unwrap();
    let mut best_before: Option<f64> = None;
    for it in 1..=3 {
        let orch = orchestrate(&ctx, &f.ev, &f.space, &backend, it, &s).unwrap();
        assert_eq!(orch.plans.len(), s.n_agents);
        assert!(orch.plans.iter().flat_map(|p| &p.configs).all(|c| f.space.contains(c).is_feasible()));
        let results = explore(&orch.plans, &f.ev, it, ctx.global_best().map(|b| b.cost), "");
        ctx.evaluate_and_merge(&results, it, &orch.backend_label, EPOCH).unwrap();

        let knowhow = fs::read(tmp.path().join(KNOWHOW_FILE)).unwrap();
        let results_csv = fs::read(tmp.path().join(RESULTS_FILE)).unwrap();
        assert!(knowhow.starts_with(&prev_knowhow));
        assert!(results_csv.starts_with(&prev_results));

        let best_now = ctx.global_best().unwrap().cost;
        if let Some(b) = best_before {
            assert!(best_now <= b);
        }
        best_before = Some(best_now);

        // replaying the same iteration changes nothing
        let err = ctx.evaluate_and_merge(&results, it, &orch.backend_label, EPOCH).unwrap_err();
        assert!(matches!(err, AgentError::AlreadyMerged { .. }));
        assert_eq!(fs::read(tmp.path().join(KNOWHOW_FILE)).unwrap(), knowhow);
        assert_eq!(fs::read(tmp.path().join(RESULTS_FILE)).unwrap(), results_csv);
        prev_knowhow = knowhow;
        prev_results = results_csv;
    }
    assert_eq!(ctx.watermark(), 3);
    assert_eq!(ctx.results_rows(), 3 * s.n_agents * s.configs_per_plan);
    assert!(ctx.digest().unwrap().len() <= 32 * 1024);
}

/// Replays canned replies and records every conversation it was sent.
struct Scripted {
    replies: Mutex<VecDeque<String>>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl Scripted {
    fn new(replies: &[&str]) -> Arc<Self> {
        Arc::new(Scripted {
            replies: Mutex::new(replies.iter().map(|s| s.to_string()).collect()),
            seen: Mutex::new(Vec::new()),
        })
    }
}

impl ChatTransport for Scripted {
    fn complete(&self, messages: &[ChatMessage], _effort: ReasoningEffort) -> Result<String, BackendError> {
        self.seen.lock().unwrap().push(messages.to_vec());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| BackendError::Transport("script exhausted".into()))
    }
}

fn plan_reply(configs: &[&str]) -> String {
    let list: Vec<String> = configs.iter().map(|c| format!("\"{c}\"")).collect();
    format!(
        "Try the small stacks.\n```json\n[{{\"configs\": [{}], \"rationale\": \"r\", \"target_region\": \"3D\"}}]\n```\n",
        list.join(", ")
    )
}

const GOOD: &str = "2|64-7-256;64-7-256|0-WS-0|0|3D-HB-HBM3|UC3|ring";
const BAD_UC3: &str = "2|64-7-256;64-7-256|0-WS-0|0|2.5D-RDL-HBM3|UC3|ring";

#[test]
fn llm_backend_retries_with_a_corrective_message() {
    let f = common::fixture("WL-6", "Balance", 500);
    let tmp = tempfile::tempdir().unwrap();
    let ctx = ContextStore::create(tmp.path(), f.space.blacklist().source()).unwrap();
    let script = Scripted::new(&["no fenced block here", &plan_reply(&[GOOD])]);
    let backend = LlmBackend::new(script.clone());
    let s = AgentRunSettings { n_agents: 3, ..settings(1) };
    let orch = orchestrate(&ctx, &f.ev, &f.space, &backend, 1, &s).unwrap();
    assert_eq!(orch.backend_label, "llm");
    assert!(orch.fallback_reason.is_none());
    assert_eq!(format_config(&orch.plans[0].configs[0]), GOOD);
    assert_eq!(orch.plans.len(), 3);
    assert_eq!(orch.insights, "Try the small stacks.");

    let seen = script.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[0].len(), 2);
    assert_eq!(seen[1].len(), 4);
    assert_eq!(seen[1][2].role, "assistant");
    assert!(seen[1][3].content.contains("```json"));
}

#[test]
fn llm_exhaustion_falls_back_to_the_heuristic() {
    let f = common::fixture("WL-6", "Balance", 500);
    let tmp = tempfile::tempdir().unwrap();
    let ctx = ContextStore::create(tmp.path(), f.space.blacklist().source()).unwrap();
    let script = Scripted::new(&["nope", "```json\n{}\n```", "still nope", "```json\n[]\n```"]);
    let backend = LlmBackend::new(script.clone());
    assert!(matches!(
        backend.generate(&dummy_request(&f)),
        Err(BackendError::Schema { attempts: 4, .. })
    ));

    let script = Scripted::new(&["a", "b", "c", "d"]);
    let backend = LlmBackend::new(script);
    let s = AgentRunSettings { n_agents: 4, ..settings(2) };
    let orch = orchestrate(&ctx, &f.ev, &f.space, &backend, 1, &s).unwrap();
    assert_eq!(orch.backend_label, "heuristic(fallback)");
    assert!(orch.fallback_reason.is_some());
    assert_eq!(orch.plans.len(), 4);
}

fn dummy_request(f: &common::Fixture) -> chiplet_dse::backends::PlanRequest {
    chiplet_dse::backends::PlanRequest {
        workload: f.ev.workload.clone(),
        profile: f.ev.profile.clone(),
        iteration: 1,
        n_plans: 2,
        configs_per_plan: 2,
        persistent_docs: Vec::new(),
        digest: String::new(),
        best: Vec::new(),
        reasoning_effort: ReasoningEffort::Low,
        feedback: String::new(),
    }
}

#[test]
fn infeasible_llm_configs_are_requeried_with_violations() {
    let f = common::fixture("WL-6", "Balance", 500);
    let tmp = tempfile::tempdir().unwrap();
    let ctx = ContextStore::create(tmp.path(), f.space.blacklist().source()).unwrap();
    let script = Scripted::new(&[&plan_reply(&[BAD_UC3, GOOD]), &plan_reply(&[GOOD])]);
    let backend = LlmBackend::new(script.clone());
    let s = AgentRunSettings { n_agents: 1, ..settings(4) };
    let orch = orchestrate(&ctx, &f.ev, &f.space, &backend, 1, &s).unwrap();
    assert_eq!(orch.replaced_configs, 1);
    assert!(orch.plans[0].configs.iter().all(|c| f.space.contains(c).is_feasible()));
    let seen = script.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let feedback = &seen[1].last().unwrap().content;
    assert!(feedback.contains(BAD_UC3), "{feedback}");
    assert!(feedback.contains("uc3-requires-3d"), "{feedback}");
}

/// Serves canned HTTP responses and returns the request bodies it received.
fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<(String, String)>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut got = Vec::new();
        let mut pending: VecDeque<_> = responses.into();
        while !pending.is_empty() {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut stream = stream;
            while let Some((status, body)) = pending.front().cloned() {
                let mut head = String::new();
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 {
                        break;
                    }
                    if line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    head.push_str(&line);
                }
                if head.is_empty() {
                    break;
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                got.push((auth, String::from_utf8(buf).unwrap()));
                pending.pop_front();
                let reason = if status == 200 { "OK" } else { "Bad Request" };
                write!(
                    stream,
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
                stream.flush().unwrap();
            }
        }
        got
    });
    (base, handle)
}

#[test]
fn http_transport_drops_effort_after_rejection() {
    let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": plan_reply(&[GOOD])}}]});
    let (base, handle) = serve(vec![
        (400, r#"{"error": {"message": "Unrecognized request argument supplied: reasoning_effort"}}"#.into()),
        (200, reply.to_string()),
        (200, reply.to_string()),
    ]);
    let transport = Arc::new(HttpTransport::new(&base, "test-model", "sk-test", true));
    let backend = LlmBackend::new(transport);
    let f = common::fixture("WL-6", "Balance", 200);
    let req = dummy_request(&f);
    let resp = backend.generate(&req).unwrap();
    assert_eq!(format_config(&resp.plans[0].configs[0]), GOOD);
    // the flag stays cleared for later calls
    backend.generate(&req).unwrap();
    let got = handle.join().unwrap();
    assert_eq!(got.len(), 3);
    let bodies: Vec<serde_json::Value> = got.iter().map(|(_, b)| serde_json::from_str(b).unwrap()).collect();
    assert_eq!(bodies[0]["reasoning_effort"], "low");
    assert!(bodies[1].get("reasoning_effort").is_none());
    assert!(bodies[2].get("reasoning_effort").is_none());
    assert_eq!(bodies[1]["model"], "test-model");
    assert_eq!(bodies[1]["messages"][0]["role"], "system");
    assert!(got.iter().all(|(auth, _)| auth.ends_with("Bearer sk-test")));
}

#[test]
fn http_errors_surface_as_transport_failures() {
    let (base, handle) = serve(vec![(400, r#"{"error": "bad model"}"#.into())]);
    let t = HttpTransport::new(&base, "m", "k", false);
    let err = t.complete(&[ChatMessage::new("user", "hi")], ReasoningEffort::Medium).unwrap_err();
    assert!(matches!(err, BackendError::Transport(ref m) if m.contains("400")), "{err}");
    handle.join().unwrap();
}
