//! Command-line front end for the voxmpc planning stack: load scenario
//! files, run single episodes or planner comparisons, fan batches across
//! worker threads, and emit logs, metrics tables, and plot-ready series.
//!
//! The library houses everything the binary does so integration tests can
//! drive the same code paths; `main` only parses arguments and forwards to
//! [`execute`].

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use voxmpc_core::sim::{compute_metrics, run_episode};
use voxmpc_core::{EpisodeLog, Error, Metrics, Outcome, PlannerKind, Scenario};

/// Environment variable that supplies the output directory when `--out` is
/// not given on the command line.
pub const ENV_OUT: &str = "VOXMPC_OUT";
/// Environment variable that overrides the scenario's seed field.
pub const ENV_SEED: &str = "VOXMPC_SEED";

/// Process exit codes. Zero is success (every episode reached its goal);
/// the rest distinguish failure families so scripts can branch on them.
pub mod exit_code {
    pub const REACHED: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const COLLIDED: i32 = 2;
    pub const NOT_REACHED: i32 = 3;
    pub const CONFIG: i32 = 64;
}

#[derive(Debug, Parser)]
#[command(
    name = "voxmpc",
    about = "UAV motion planning benchmarks: voxel mapping + JPS + MPC vs. an APF baseline",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode with the scenario's configured planner.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Output directory for episode.csv, metrics files, and plot series.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several planners on the same scenario and tabulate the metrics.
    Compare {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Comma-separated planner list.
        #[arg(long, value_delimiter = ',', default_values = ["mpc", "apf"])]
        planners: Vec<PlannerArg>,
        /// Output directory; per-planner files land in subdirectories.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every scenario file in a directory, in parallel.
    Batch {
        /// Directory containing scenario TOML files.
        dir: PathBuf,
        /// Worker threads; default lets the thread pool decide.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory; per-scenario files land in subdirectories.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and validate a scenario file without running it.
    Validate {
        /// Scenario TOML file.
        scenario: PathBuf,
    },
}

/// Planner selector as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlannerArg {
    Mpc,
    Apf,
}

impl From<PlannerArg> for PlannerKind {
    fn from(arg: PlannerArg) -> Self {
        match arg {
            PlannerArg::Mpc => PlannerKind::Mpc,
            PlannerArg::Apf => PlannerKind::Apf,
        }
    }
}

/// Everything recorded about one finished episode, one row of any table.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// Scenario identifier: file stem for batches, planner name otherwise.
    pub label: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub outcome: Outcome,
    pub motion_time: f64,
    pub motion_length: f64,
    pub energy: f64,
    /// Wall-clock duration of the episode, seconds.
    pub wall_time: f64,
    pub samples: usize,
}

impl RunReport {
    fn new(label: String, planner: PlannerKind, seed: u64, log: &EpisodeLog) -> Self {
        // An episode that starts inside the goal ball has no cycles to
        // measure; report zero motion rather than refusing to summarize.
        let metrics = if log.samples.is_empty() {
            Metrics {
                motion_time: 0.0,
                motion_length: 0.0,
                energy: 0.0,
            }
        } else {
            compute_metrics(log)
        };
        RunReport {
            label,
            planner,
            seed,
            outcome: log.outcome,
            motion_time: metrics.motion_time,
            motion_length: metrics.motion_length,
            energy: metrics.energy,
            wall_time: log.wall_time,
            samples: log.samples.len(),
        }
    }

    fn exit_code(&self) -> i32 {
        match self.outcome {
            Outcome::Reached => exit_code::REACHED,
            Outcome::Collided => exit_code::COLLIDED,
            Outcome::Stalled | Outcome::Timeout => exit_code::NOT_REACHED,
        }
    }
}

/// Parse-and-dispatch entry point; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run { scenario, out } => cmd_run(&scenario, out),
        Command::Compare {
            scenario,
            planners,
            out,
        } => cmd_compare(&scenario, &planners, out),
        Command::Batch { dir, jobs, out } => cmd_batch(&dir, jobs, out),
        Command::Validate { scenario } => cmd_validate(&scenario),
    };
    result.unwrap_or_else(|failure| {
        eprintln!("error: {}", failure.message);
        failure.code
    })
}

/// An error that already knows which exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(err: Error) -> Self {
        Failure {
            code: exit_code::CONFIG,
            message: err.to_string(),
        }
    }

    fn io(context: &str, err: std::io::Error) -> Self {
        Failure {
            code: exit_code::ERROR,
            message: format!("{context}: {err}"),
        }
    }

    fn internal(err: Error) -> Self {
        Failure {
            code: exit_code::ERROR,
            message: err.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn cmd_run(path: &Path, out: Option<PathBuf>) -> CmdResult {
    let scenario = load(path)?;
    let out_dir = resolve_out_dir(out);
    let report = run_one(&scenario, scenario.planner, "episode", &out_dir)?;
    print!("{}", format_table(std::slice::from_ref(&report)));
    Ok(report.exit_code())
}

fn cmd_compare(path: &Path, planners: &[PlannerArg], out: Option<PathBuf>) -> CmdResult {
    let scenario = load(path)?;
    let out_dir = resolve_out_dir(out);
    let mut reports = Vec::new();
    for &arg in planners {
        let planner = PlannerKind::from(arg);
        let sub_dir = out_dir.join(planner.to_string());
        reports.push(run_one(&scenario, planner, &planner.to_string(), &sub_dir)?);
    }
    finish_table(&reports, &out_dir, "compare_metrics")
}

fn cmd_batch(dir: &Path, jobs: Option<usize>, out: Option<PathBuf>) -> CmdResult {
    let out_dir = resolve_out_dir(out);
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::io(&format!("reading {}", dir.display()), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure {
            code: exit_code::CONFIG,
            message: format!("no scenario .toml files in {}", dir.display()),
        });
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure {
            code: exit_code::ERROR,
            message: format!("building thread pool: {e}"),
        })?;

    // Episodes fan out across the pool; each worker writes only inside its
    // own per-scenario directory, and the combined table is assembled by
    // this single thread after the join.
    let results: Vec<std::result::Result<RunReport, Failure>> = pool.install(|| {
        use rayon::prelude::*;
        files
            .par_iter()
            .map(|file| {
                let scenario = load(file)?;
                let label = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "scenario".into());
                run_one(&scenario, scenario.planner, &label, &out_dir.join(&label))
            })
            .collect()
    });

    let mut reports = Vec::with_capacity(results.len());
    for result in results {
        reports.push(result?);
    }
    finish_table(&reports, &out_dir, "batch_metrics")
}

fn cmd_validate(path: &Path) -> CmdResult {
    let scenario = load(path)?;
    println!(
        "ok: planner {} | {} cylinders, {} boxes | start ({:.2}, {:.2}, {:.2}) -> goal ({:.2}, {:.2}, {:.2})",
        scenario.planner,
        scenario.world.cylinders.len(),
        scenario.world.boxes.len(),
        scenario.start.x,
        scenario.start.y,
        scenario.start.z,
        scenario.goal.x,
        scenario.goal.y,
        scenario.goal.z,
    );
    Ok(exit_code::REACHED)
}

/// Loads a scenario and applies the seed env override.
fn load(path: &Path) -> std::result::Result<Scenario, Failure> {
    let mut scenario: Scenario =
        voxmpc_core::scenario::load_scenario(path).map_err(Failure::config)?;
    if let Ok(raw) = std::env::var(ENV_SEED) {
        let seed = raw.parse::<u64>().map_err(|_| Failure {
            code: exit_code::CONFIG,
            message: format!("{ENV_SEED} must be an unsigned integer, got {raw:?}"),
        })?;
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Runs one episode and writes the full set of per-episode files.
fn run_one(
    scenario: &Scenario,
    planner: PlannerKind,
    label: &str,
    out_dir: &Path,
) -> std::result::Result<RunReport, Failure> {
    let log = run_episode(scenario, planner).map_err(Failure::internal)?;
    let report = RunReport::new(label.to_string(), planner, scenario.seed, &log);
    write_outputs(&log, &report, out_dir)?;
    Ok(report)
}

/// Writes the combined table (text + JSON) and folds the rows into one exit
/// code: worst failure wins, collisions over stalls.
fn finish_table(reports: &[RunReport], out_dir: &Path, stem: &str) -> CmdResult {
    let table = format_table(reports);
    print!("{table}");
    create_dir(out_dir)?;
    write_file(&out_dir.join(format!("{stem}.txt")), table.as_bytes())?;
    write_json(&out_dir.join(format!("{stem}.json")), reports)?;
    Ok(reports
        .iter()
        .map(RunReport::exit_code)
        .max()
        .unwrap_or(exit_code::REACHED))
}

/// Fixed-width metrics table, one row per episode.
pub fn format_table(reports: &[RunReport]) -> String {
    let mut text = String::new();
    let label_width = reports
        .iter()
        .map(|r| r.label.len())
        .chain(["scenario".len()])
        .max()
        .unwrap_or(8);
    let _ = writeln!(
        text,
        "{:label_width$}  {:7}  {:8}  {:>13}  {:>15}  {:>12}  {:>11}",
        "scenario", "planner", "outcome", "motion time/s", "motion length/m", "energy", "wall time/s"
    );
    for r in reports {
        let _ = writeln!(
            text,
            "{:label_width$}  {:7}  {:8}  {:>13.2}  {:>15.4}  {:>12.4}  {:>11.2}",
            r.label,
            r.planner.to_string(),
            r.outcome.to_string(),
            r.motion_time,
            r.motion_length,
            r.energy,
            r.wall_time,
        );
    }
    text
}

/// Per-episode artifacts: the raw log as CSV, the metrics summary as JSON,
/// and two plot-ready series (top view with the speed profile, 3D path).
/// All four are written even when the outcome is a failure.
fn write_outputs(
    log: &EpisodeLog,
    report: &RunReport,
    out_dir: &Path,
) -> std::result::Result<(), Failure> {
    create_dir(out_dir)?;

    let mut episode = String::from("t,px,py,pz,vx,vy,vz,ax,ay,az,ux,uy,uz,min_dist\n");
    for s in &log.samples {
        let p = &s.state.p;
        let v = &s.state.v;
        let a = &s.state.a;
        let u = &s.control;
        let _ = writeln!(
            episode,
            "{:.3},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t, p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z, u.x, u.y, u.z, s.min_dist
        );
    }
    write_file(&out_dir.join("episode.csv"), episode.as_bytes())?;

    let mut top = String::from("t,x,y,speed\n");
    let mut path3d = String::from("x,y,z\n");
    for s in &log.samples {
        let speed = s.state.v.norm();
        let _ = writeln!(top, "{:.3},{},{},{}", s.t, s.state.p.x, s.state.p.y, speed);
        let _ = writeln!(path3d, "{},{},{}", s.state.p.x, s.state.p.y, s.state.p.z);
    }
    write_file(&out_dir.join("series_top.csv"), top.as_bytes())?;
    write_file(&out_dir.join("series_3d.csv"), path3d.as_bytes())?;

    write_json(&out_dir.join("metrics.json"), report)
}

fn create_dir(dir: &Path) -> std::result::Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(&format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> std::result::Result<(), Failure> {
    let mut file = fs::File::create(path)
        .map_err(|e| Failure::io(&format!("creating {}", path.display()), e))?;
    file.write_all(bytes)
        .map_err(|e| Failure::io(&format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    write_file(path, text.as_bytes())
}
