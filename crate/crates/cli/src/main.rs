use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use declos::oracle::{lemma1_scan, validate_adaptive};
use declos::suite::{run_suite, AgentSource};
use declos::{certify_trace, compute_metrics, load_scenario, run, AARect, PlanningMode, RunError, SimTrace};

mod render;

#[derive(Parser)]
#[command(name = "declos", version, about = "Line-of-sight constrained multi-agent planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    DecLos,
    Clairvoyant,
}

impl From<Mode> for PlanningMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::DecLos => PlanningMode::DecLos,
            Mode::Clairvoyant => PlanningMode::Clairvoyant,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Trace output (JSON lines).
        #[arg(long, short, default_value = "trace.jsonl")]
        out: PathBuf,
        /// Also write an SVG of the final frame next to the trace.
        #[arg(long)]
        svg: bool,
    },
    /// Sweep seeds over planning modes and print aggregate metrics.
    Suite {
        scenario: PathBuf,
        /// Comma-separated seeds, or a range like 1..10 (inclusive).
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![Mode::DecLos, Mode::Clairvoyant])]
        modes: Vec<Mode>,
        /// Draw this many agents per seed instead of using the scenario's.
        #[arg(long)]
        agents: Option<usize>,
        /// Minimum start-goal distance of drawn agents.
        #[arg(long, default_value_t = 5.0)]
        min_trip_m: f64,
        #[arg(long, default_value = "suite_out")]
        out_dir: PathBuf,
    },
    /// Numeric certification of the separation guarantees.
    Certify {
        #[command(subcommand)]
        what: Certify,
    },
    /// Print the metrics of a stored trace.
    Metrics { trace: PathBuf },
    /// Draw a stored trace as SVG.
    Render {
        trace: PathBuf,
        #[arg(long, short, default_value = "trace.svg")]
        out: PathBuf,
        /// Frame to draw; defaults to the last one.
        #[arg(long)]
        tick: Option<u64>,
    },
}

#[derive(Subcommand)]
enum Certify {
    /// Closest hidden pair around a square obstacle.
    Lemma1 {
        #[arg(long, default_value_t = 1.0)]
        side: f64,
        #[arg(long, default_value_t = 0.35)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        /// Separation the clearance must protect; defaults to 2·delta minus
        /// a hair.
        #[arg(long)]
        delta_min: Option<f64>,
    },
    /// Hidden-pair scan of a scenario's planning obstacles.
    Adaptive {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        resolution: f64,
    },
    /// Replay the safety checks of a stored trace.
    Trace { trace: PathBuf },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_trace(path: &Path) -> Result<SimTrace> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(SimTrace::read_jsonl(BufReader::new(f))?)
}

fn write_trace(trace: &SimTrace, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    trace.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, mode, out, svg } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            let (sc, params, _) = cfg.build()?;
            let trace = match run(&sc, &params) {
                Ok(t) => t,
                Err(RunError::InvariantBreach { tick, detail, trace }) => {
                    write_trace(&trace, &out)?;
                    eprintln!("invariant breach at tick {tick}: {detail}");
                    eprintln!("partial trace written to {}", out.display());
                    return Ok(ExitCode::from(1));
                }
                Err(e) => return Err(e.into()),
            };
            write_trace(&trace, &out)?;
            if svg {
                let path = out.with_extension("svg");
                fs::write(&path, render::svg(&trace, None))?;
            }
            let metrics = compute_metrics(&trace)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            let violations = certify_trace(&trace);
            if !violations.is_empty() {
                eprintln!("{} safety violations in trace", violations.len());
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Suite { scenario, seeds, modes, agents, min_trip_m, out_dir } => {
            let cfg = load_scenario(&scenario)?;
            let seeds = parse_seeds(&seeds)?;
            let modes: Vec<PlanningMode> = modes.into_iter().map(Into::into).collect();
            let source = match agents {
                Some(count) => AgentSource::Random { count, min_trip_m },
                None => AgentSource::Scenario,
            };
            let report = run_suite(&cfg, &seeds, &modes, source);
            fs::create_dir_all(&out_dir)?;
            let mut table = BufWriter::new(File::create(out_dir.join("cells.tsv"))?);
            writeln!(table, "seed\tmode\tagents\tfinished\tmean_time_s\tmean_length_m\tbrakes\tmin_distance_m\terror")?;
            let mut breach = false;
            for c in &report.cells {
                let mode = serde_json::to_string(&c.mode)?.trim_matches('"').to_string();
                match &c.outcome {
                    Ok(r) => {
                        let m = &r.metrics;
                        write_trace(&r.trace, &out_dir.join(format!("trace_{mode}_{}.jsonl", c.seed)))?;
                        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
                        writeln!(
                            table,
                            "{}\t{mode}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t",
                            c.seed,
                            c.agents,
                            m.finished.iter().filter(|f| **f).count(),
                            fmt(m.mean_time_to_goal()),
                            fmt(m.mean_path_length()),
                            m.brake_event_count,
                            m.min_interagent_distance_m
                        )?;
                        breach |= !certify_trace(&r.trace).is_empty();
                    }
                    Err(e) => {
                        breach |= e.contains("invariant breach");
                        writeln!(table, "{}\t{mode}\t{}\t-\t-\t-\t-\t-\t{e}", c.seed, c.agents)?;
                    }
                }
            }
            table.flush()?;
            let summary = serde_json::to_string_pretty(&report.aggregates)?;
            fs::write(out_dir.join("summary.json"), &summary)?;
            println!("{summary}");
            Ok(if breach { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Certify { what } => match what {
            Certify::Lemma1 { side, delta, resolution, delta_min } => {
                let obstacle = AARect::new(0.0, side, 0.0, side)?;
                let report = lemma1_scan(&obstacle, delta, resolution)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                let delta_min = delta_min.unwrap_or(2.0 * delta * (1.0 - 1e-9));
                let bound = 2.0 * delta - 2.0 * resolution;
                let ok = report.certifies(delta_min)
                    && report.min_nonlos_distance >= bound
                    && report.case0_min_distance >= 2.0 * delta + side;
                println!(
                    "min hidden-pair distance {:.6} (required {bound:.6}); opposite corners {:.6} (required {:.6}): {}",
                    report.min_nonlos_distance,
                    report.case0_min_distance,
                    2.0 * delta + side,
                    if ok { "CERTIFIED" } else { "FAILED" }
                );
                Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
            }
            Certify::Adaptive { scenario, resolution } => {
                let cfg = load_scenario(&scenario)?;
                let (_, _, world) = cfg.build()?;
                let check =
                    validate_adaptive(world.physical_obstacles(), world.planning_obstacles(), cfg.delta_min_m, resolution);
                println!("{}", serde_json::to_string_pretty(&check)?);
                Ok(if check.is_certified() { ExitCode::SUCCESS } else { ExitCode::from(1) })
            }
            Certify::Trace { trace } => {
                let trace = read_trace(&trace)?;
                let violations = certify_trace(&trace);
                for v in &violations {
                    println!("{}", serde_json::to_string(v)?);
                }
                println!("{} violations", violations.len());
                Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
            }
        },
        Command::Metrics { trace } => {
            let trace = read_trace(&trace)?;
            println!("{}", serde_json::to_string_pretty(&compute_metrics(&trace)?)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Render { trace, out, tick } => {
            let trace = read_trace(&trace)?;
            fs::write(&out, render::svg(&trace, tick))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
