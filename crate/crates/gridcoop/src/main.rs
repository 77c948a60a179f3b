use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridcoop::dump::dump_group;
use gridcoop::log::{replay, LogWriter, ReplayError};
use gridcoop::store::{cache_stats, DirStore};
use gridcoop_core::mergecheck::{check_all, check_has_trace, explore, parse_scenario, ProtocolModel, Verdict, DEFAULT_STATE_BOUND};
use gridcoop_core::opponents::OpponentKind;
use gridcoop_core::plan_cache::{MemoryStore, PlanStore};
use gridcoop_core::sim::{run_match, MatchConfig, MatchRun};
use gridcoop_core::torus::Dims;
use gridcoop_core::world::WorldConfig;

const CONFIG_ERROR: u8 = 1;
const PROTOCOL_FAILURE: u8 = 2;
const REPLAY_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "gridcoop", version, about = "Seeded team matches on a torus grid")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play a match and print its report as JSON.
    Run(RunArgs),
    /// Recompute the report of a logged match and compare it with the recorded one.
    Replay { log: PathBuf },
    /// Explore the merge protocol model and check scenario traces.
    CheckProtocol {
        #[arg(long, default_value_t = 3)]
        agents: usize,
        #[arg(long, default_value_t = 2)]
        sightings: usize,
        /// Scenario files.
        #[arg(long, num_args = 1..)]
        trace: Vec<PathBuf>,
    },
    /// Count the plans in a cache directory.
    CacheStats { dir: PathBuf },
    /// Play a match and print the largest group's map.
    ExportMap {
        #[command(flatten)]
        run: RunArgs,
        /// Dump the group map as seen by this agent instead.
        #[arg(long)]
        agent: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "r1")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Grid size as WxH.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<(i32, i32)>,
    /// Agents per team.
    #[arg(long)]
    agents: Option<u32>,
    /// idle, random or courier.
    #[arg(long)]
    opponent: Option<OpponentKind>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Read plans from the cache but never write to it.
    #[arg(long, requires = "cache_dir")]
    cache_readonly: bool,
    #[arg(long)]
    log: Option<PathBuf>,
}

fn parse_dims(s: &str) -> Result<(i32, i32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let n = |t: &str| t.trim().parse::<i32>().map_err(|e| format!("{t:?}: {e}"));
    Ok((n(w)?, n(h)?))
}

fn config(a: &RunArgs) -> Result<MatchConfig, String> {
    let mut cfg = MatchConfig::preset(&a.preset).map_err(|e| e.to_string())?;
    if a.dims.is_some() || a.agents.is_some() {
        let dims = match a.dims {
            Some((w, h)) => Dims::new(w, h).ok_or(format!("--dims {w}x{h}: sides must be positive"))?,
            None => cfg.world.dims,
        };
        cfg.world = WorldConfig::standard(dims, a.agents.unwrap_or(cfg.world.team_sizes[0]));
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(o) = a.opponent {
        cfg.opponent = o;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn play_with<S: PlanStore>(cfg: &MatchConfig, store: &mut S, log: Option<&Path>) -> Result<MatchRun, String> {
    let mut writer = match log {
        Some(p) => {
            let f = File::create(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Some(LogWriter::new(BufWriter::new(f), cfg).map_err(|e| e.to_string())?)
        }
        None => None,
    };
    let mut failed: Option<io::Error> = None;
    let run = run_match(cfg, store, |rec, _| {
        if let (Some(w), None) = (writer.as_mut(), failed.as_ref()) {
            failed = w.step(rec).err();
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = failed {
        return Err(format!("writing log: {e}"));
    }
    if let Some(w) = writer {
        w.finish(&run.report).map_err(|e| format!("writing log: {e}"))?;
    }
    Ok(run)
}

fn play(a: &RunArgs) -> Result<MatchRun, String> {
    let cfg = config(a)?;
    let log = a.log.as_deref();
    match &a.cache_dir {
        Some(dir) => {
            let mut store = DirStore::open(dir, a.cache_readonly).map_err(|e| format!("{}: {e}", dir.display()))?;
            play_with(&cfg, &mut store, log)
        }
        None => play_with(&cfg, &mut MemoryStore::new(), log),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes")
}

fn print_verdict(v: &Verdict, source: &str) {
    println!("{} {} {source}", if v.pass { "PASS" } else { "FAIL" }, v.check);
    for trace in &v.counterexamples {
        println!("  {}", trace.join(" "));
    }
}

fn check_model(model: &ProtocolModel, trace: Option<&[String]>, source: &str) -> Result<bool, String> {
    let g = explore(model, DEFAULT_STATE_BOUND).map_err(|e| format!("{source}: {e}"))?;
    let mut verdicts = check_all(&g);
    if let Some(t) = trace {
        verdicts.push(check_has_trace(&g, model, t).map_err(|e| format!("{source}: {e}"))?);
    }
    for v in &verdicts {
        print_verdict(v, source);
    }
    Ok(verdicts.iter().all(|v| v.pass))
}

fn check_protocol(agents: usize, sightings: usize, traces: &[PathBuf]) -> Result<bool, String> {
    let model = ProtocolModel::generated(agents, sightings).map_err(|e| e.to_string())?;
    let mut ok = check_model(&model, None, &format!("model agents={agents} sightings={sightings}"))?;
    for path in traces {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let (m, events) = parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        ok &= check_model(&m, Some(&events), &path.display().to_string())?;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fail = |code: u8, msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(code)
    };
    match cli.cmd {
        Cmd::Run(a) => match play(&a) {
            Ok(run) => {
                println!("{}", json(&run.report));
                ExitCode::SUCCESS
            }
            Err(e) => fail(CONFIG_ERROR, e),
        },
        Cmd::Replay { log } => {
            let bytes = match fs::read(&log) {
                Ok(b) => b,
                Err(e) => return fail(CONFIG_ERROR, format!("{}: {e}", log.display())),
            };
            match replay(&bytes) {
                Ok(report) => {
                    println!("{}", json(&report));
                    ExitCode::SUCCESS
                }
                Err(ReplayError::Mismatch { recorded, recomputed }) => fail(
                    REPLAY_MISMATCH,
                    format!("report mismatch\nrecorded: {}\nrecomputed: {}", json(&recorded), json(&recomputed)),
                ),
                Err(e) => fail(REPLAY_MISMATCH, e.to_string()),
            }
        }
        Cmd::CheckProtocol { agents, sightings, trace } => match check_protocol(agents, sightings, &trace) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(PROTOCOL_FAILURE),
            Err(e) => fail(CONFIG_ERROR, e),
        },
        Cmd::CacheStats { dir } => match cache_stats(&dir) {
            Ok(s) => {
                println!("{}", json(&s));
                ExitCode::SUCCESS
            }
            Err(e) => fail(CONFIG_ERROR, format!("{}: {e}", dir.display())),
        },
        Cmd::ExportMap { run, agent } => match play(&run) {
            Ok(r) => match dump_group(r.team.store(), agent.as_deref()) {
                Some(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                None => fail(CONFIG_ERROR, format!("no agent named {:?}", agent.unwrap_or_default())),
            },
            Err(e) => fail(CONFIG_ERROR, e),
        },
    }
}
