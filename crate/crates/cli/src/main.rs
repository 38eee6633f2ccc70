use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use chiplet_dse::agent::{self, AgentError, AgentRunSettings, BackendKind};
use chiplet_dse::analysis::{self, AnalysisError, SummaryRow, DEFAULT_ORACLE_CAP, SA_RUNS_FILE};
use chiplet_dse::backends::{BackendError, HeuristicBackend, HttpTransport, LlmBackend, ReasoningBackend, ReasoningEffort};
use chiplet_dse::cost::{load_or_compute_basis, CostError, Evaluator, Profile, DEFAULT_BASIS_SAMPLES};
use chiplet_dse::design_space::{
    format_config, parse_config, Blacklist, Dataflow, DesignError, DesignSpace, Integration, Interconnect, Memory,
    Order, Protocol, Restriction, Topology,
};
use chiplet_dse::mapping::WorkloadSpec;
use chiplet_dse::ppac::ModelConstants;
use chiplet_dse::sa::{self, SaSettings};

const EXIT_INVALID: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_CAP: u8 = 4;

#[derive(Parser)]
#[command(name = "chiplet-dse", version, about = "Chiplet design-space exploration")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Workload name or an explicit `m,k,n` triple.
    #[arg(long, global = true, default_value = "WL-1")]
    workload: String,
    /// JSON workload table replacing the bundled one.
    #[arg(long, global = true)]
    workloads: Option<PathBuf>,
    /// Profile name or explicit `alpha,beta,gamma,theta` weights.
    #[arg(long, global = true, default_value = "Balance")]
    profile: String,
    /// Model-constants JSON replacing the bundled table.
    #[arg(long, global = true)]
    constants: Option<PathBuf>,
    /// Blacklist JSON replacing the bundled rules.
    #[arg(long, global = true)]
    blacklist: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Zero all timing fields so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    no_timestamps: bool,
    /// Uniform samples behind the normalization medians.
    #[arg(long, global = true, default_value_t = DEFAULT_BASIS_SAMPLES)]
    basis_samples: usize,
    #[arg(long, global = true, default_value_t = 0)]
    basis_seed: u64,
    #[command(flatten)]
    restrict: RestrictArgs,
}

#[derive(Args, Default)]
struct RestrictArgs {
    #[arg(long, global = true, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    arrays: Option<Vec<u32>>,
    #[arg(long, global = true, value_delimiter = ',')]
    nodes: Option<Vec<u32>>,
    #[arg(long, global = true, value_delimiter = ',')]
    srams: Option<Vec<u32>>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = token::<Order>)]
    orders: Option<Vec<Order>>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = token::<Dataflow>)]
    dataflows: Option<Vec<Dataflow>>,
    /// Allowed split-K flags (0/1).
    #[arg(long, global = true, value_delimiter = ',', value_parser = flag)]
    split_k: Option<Vec<bool>>,
    /// Allowed data-sharing flags (0/1).
    #[arg(long, global = true, value_delimiter = ',', value_parser = flag)]
    data_sharing: Option<Vec<bool>>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = token::<Integration>)]
    integrations: Option<Vec<Integration>>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = token::<Interconnect>)]
    interconnects: Option<Vec<Interconnect>>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = token::<Protocol>)]
    protocols: Option<Vec<Protocol>>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = token::<Memory>)]
    memories: Option<Vec<Memory>>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = token::<Topology>)]
    topologies: Option<Vec<Topology>>,
    /// Use one chiplet type at every position.
    #[arg(long, global = true)]
    homogeneous: bool,
}

fn token<T: FromStr<Err = DesignError>>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|e: DesignError| e.to_string())
}

fn flag(s: &str) -> Result<bool, String> {
    match s.trim() {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(format!("expected 0 or 1, got `{other}`")),
    }
}

impl RestrictArgs {
    fn to_restriction(&self) -> Restriction {
        Restriction {
            counts: self.counts.clone(),
            arrays: self.arrays.clone(),
            nodes: self.nodes.clone(),
            srams: self.srams.clone(),
            orders: self.orders.clone(),
            dataflows: self.dataflows.clone(),
            split_k: self.split_k.clone(),
            data_sharing: self.data_sharing.clone(),
            integrations: self.integrations.clone(),
            interconnects: self.interconnects.clone(),
            protocols: self.protocols.clone(),
            memories: self.memories.clone(),
            topologies: self.topologies.clone(),
            homogeneous: self.homogeneous,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// PPAC metrics and weighted cost of one configuration.
    Evaluate {
        /// Canonical configuration string.
        config: String,
    },
    /// Compute (or load) the normalization medians for the workload.
    Normalize,
    /// Simulated annealing: one chain, or the full (t0, rate) grid.
    Sa(SaArgs),
    /// Admin/field agent exploration loop.
    Agent(AgentArgs),
    /// Exhaustive optimum over the restricted space.
    Bruteforce {
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: usize,
    },
    /// Pareto frontier of (runtime, cost) points from a summary CSV or run directory.
    Pareto {
        input: PathBuf,
        /// Also write an SVG scatter.
        #[arg(long)]
        svg: bool,
    },
    /// One CSV row per run found in a run directory.
    Summarize {
        run_dir: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SaArgs {
    #[arg(long, default_value_t = 4000.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.99)]
    rate: f64,
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    #[arg(long, default_value_t = 50)]
    moves: usize,
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = 1e4)]
    cost_scale: f64,
    /// Sweep the default 13 x 30 (t0, rate) grid.
    #[arg(long)]
    grid: bool,
}

#[derive(Args)]
struct AgentArgs {
    #[arg(long, default_value = "heuristic", value_parser = backend_kind)]
    backend: BackendKind,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Field agents per iteration; a comma list runs a sweep.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    agents: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    configs_per_plan: usize,
    /// Reasoning effort; a comma list runs a sweep.
    #[arg(long, value_delimiter = ',', default_value = "medium")]
    effort: Vec<ReasoningEffort>,
}

fn backend_kind(s: &str) -> Result<BackendKind, String> {
    match s {
        "heuristic" => Ok(BackendKind::Heuristic),
        "llm" => Ok(BackendKind::Llm),
        other => Err(format!("unknown backend `{other}` (heuristic, llm)")),
    }
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let err = e.into();
        Failure { code: exit_code(&err), err }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(AnalysisError::CapExceeded { .. }) = cause.downcast_ref() {
            return EXIT_CAP;
        }
        if cause.downcast_ref::<BackendError>().is_some() {
            return EXIT_BACKEND;
        }
        if let Some(e) = cause.downcast_ref::<AgentError>() {
            return match e {
                AgentError::Backend(_) => EXIT_BACKEND,
                AgentError::Io { .. } => 1,
                _ => EXIT_INVALID,
            };
        }
        if let Some(CostError::Io(_)) = cause.downcast_ref() {
            return 1;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    EXIT_INVALID
}

struct Setup {
    space: DesignSpace,
    ev: Evaluator,
}

fn setup(g: &Global) -> Result<Setup, Failure> {
    let consts = match &g.constants {
        Some(p) => ModelConstants::load(p)?,
        None => ModelConstants::bundled(),
    };
    let consts = Arc::new(consts);
    let blacklist = match &g.blacklist {
        Some(p) => Blacklist::load_fail_closed(p),
        None => Blacklist::bundled(),
    };
    if let Some(d) = blacklist.diagnostic() {
        eprintln!("warning: blacklist rejected, every configuration is infeasible: {d}");
    }
    let known = match &g.workloads {
        Some(p) => WorkloadSpec::load_file(p)?,
        None => WorkloadSpec::bundled(),
    };
    let wl = WorkloadSpec::resolve(&g.workload, &known)?;
    let profile: Profile = g.profile.parse()?;
    let full = DesignSpace::new(blacklist, consts.clone());
    let space = full.restrict(&g.restrict.to_restriction())?;
    let basis = load_or_compute_basis(&g.out_dir, &wl, &full, &consts, g.basis_samples, g.basis_seed)?;
    Ok(Setup {
        space,
        ev: Evaluator::new(wl, consts, basis, profile),
    })
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.cmd {
        Cmd::Evaluate { config } => {
            let s = setup(g)?;
            let cfg = parse_config(config)?;
            let verdict = s.space.contains(&cfg);
            if !verdict.is_feasible() {
                return Err(anyhow!("infeasible configuration: {}", verdict.violations().join("; ")).into());
            }
            let e = s.ev.evaluate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&e)?);
        }
        Cmd::Normalize => {
            let s = setup(g)?;
            println!("{}", s.ev.basis.to_json());
        }
        Cmd::Sa(a) => {
            let s = setup(g)?;
            s.ev.profile.check_optimizable()?;
            let base = SaSettings {
                t0: a.t0,
                t_final: a.t_final,
                rate: a.rate,
                moves_per_temp: a.moves,
                seed: g.seed,
                eval_budget: a.budget,
                cost_scale: a.cost_scale,
            };
            let rows: Vec<SummaryRow> = if a.grid {
                let pts = sa::grid_sweep(&s.ev, &s.space, &base, &sa::default_t0_range(), &sa::default_rate_range())?;
                pts.into_iter()
                    .map(|p| SummaryRow {
                        method: "sa".into(),
                        settings: format!("t0={} rate={:.2} seed={}", p.t0, p.rate, g.seed),
                        best_cost: p.best_cost,
                        runtime_s: if g.no_timestamps { 0.0 } else { p.runtime_s },
                        evaluations: p.evaluations,
                        best_config: p.best_config,
                    })
                    .collect()
            } else {
                let mut tr = sa::anneal(&s.ev, &s.space, &base)?;
                if g.no_timestamps {
                    tr.strip_timing();
                }
                write(&g.out_dir.join("TRACE.csv"), &tr.to_csv())?;
                vec![SummaryRow {
                    method: "sa".into(),
                    settings: format!("{} seed={}", base.label(), g.seed),
                    best_cost: tr.best_cost,
                    runtime_s: tr.time_to_best_s,
                    evaluations: tr.evaluations(),
                    best_config: format_config(&tr.best_config),
                }]
            };
            write(&g.out_dir.join(SA_RUNS_FILE), &analysis::summary_csv(&rows))?;
            let best = rows
                .iter()
                .min_by(|x, y| x.best_cost.total_cmp(&y.best_cost).then_with(|| x.best_config.cmp(&y.best_config)))
                .expect("at least one run");
            println!("{} runs; best {:.6} @ {}", rows.len(), best.best_cost, best.best_config);
        }
        Cmd::Agent(a) => {
            let s = setup(g)?;
            s.ev.profile.check_optimizable()?;
            let backend: Box<dyn ReasoningBackend> = match a.backend {
                BackendKind::Heuristic => Box::new(HeuristicBackend::new(s.space.clone(), g.seed)),
                BackendKind::Llm => Box::new(LlmBackend::new(Arc::new(HttpTransport::from_env()?))),
            };
            let sweep = a.agents.len() * a.effort.len() > 1;
            for &n_agents in &a.agents {
                for &effort in &a.effort {
                    let settings = AgentRunSettings {
                        n_agents,
                        max_iterations: a.iterations,
                        configs_per_plan: a.configs_per_plan,
                        reasoning_effort: effort,
                        seed: g.seed,
                        backend: a.backend,
                        no_timestamps: g.no_timestamps,
                    };
                    let dir = if sweep {
                        g.out_dir.join(format!("n{n_agents}-{effort}"))
                    } else {
                        g.out_dir.clone()
                    };
                    let out = agent::run(&s.ev, &s.space, backend.as_ref(), &settings, &dir)?;
                    println!(
                        "{}: best {:.6} @ {} (iteration {}, {} evaluations, {} fallbacks)",
                        dir.display(),
                        out.best_cost,
                        out.meta.best_config,
                        out.meta.iteration_found,
                        out.meta.evaluations,
                        out.meta.fallbacks
                    );
                }
            }
        }
        Cmd::Bruteforce { cap } => {
            let s = setup(g)?;
            let mut o = analysis::brute_force(&s.ev, &s.space, *cap)?;
            if g.no_timestamps {
                o.runtime_s = 0.0;
            }
            let json = serde_json::json!({
                "workload": s.ev.workload.name,
                "profile": s.ev.profile.to_string(),
                "subspace": o.subspace,
                "total": o.total,
                "best_config": format_config(&o.best_config),
                "best_cost": o.best_cost,
                "runtime_s": o.runtime_s,
            });
            write(&g.out_dir.join("ORACLE.json"), &(serde_json::to_string_pretty(&json)? + "\n"))?;
            println!("{}", analysis::describe_oracle(&o));
        }
        Cmd::Pareto { input, svg } => {
            let rows = if input.is_dir() {
                analysis::summarize_run(input)?
            } else {
                analysis::read_summary_csv(input)?
            };
            let points: Vec<_> = rows.iter().map(SummaryRow::to_point).collect();
            let front = analysis::pareto_frontier(&points)?;
            let front_rows: Vec<SummaryRow> = front
                .iter()
                .filter_map(|p| rows.iter().find(|r| r.to_point() == *p).cloned())
                .collect();
            write(&g.out_dir.join("PARETO.csv"), &analysis::summary_csv(&front_rows))?;
            if *svg {
                let title = format!("{} points, {} on the frontier", points.len(), front.len());
                write(&g.out_dir.join("PARETO.svg"), &analysis::scatter_svg(&points, &front, &title))?;
            }
            println!("{} of {} points on the frontier", front.len(), points.len());
        }
        Cmd::Summarize { run_dir, output } => {
            let text = analysis::summary_csv(&analysis::summarize_run(run_dir)?);
            match output {
                Some(p) => write(p, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
