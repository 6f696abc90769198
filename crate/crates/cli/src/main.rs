mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use asymflow::diagnostics::{convergence_harness, fitted_drift, Series};
use asymflow::dynamics::{run, Outcome};
use asymflow::io::{content_hash, write_manifest, write_profile_csv, write_snapshot, Manifest, SnapshotEntry};
use asymflow::presets::CATALOG;
use asymflow::verify::{self, Depth, DEFAULT_SEED};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "asymflow", version, about = "b-family solver on functions with rational tails")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the random corpora used by `verify`.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one or more configs. Several configs run in parallel, each
    /// into its own subdirectory of --out named after the file.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Time and space self-convergence ladders for a config.
    Convergence {
        config: PathBuf,
        /// Number of rungs per ladder (at least 3).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// List the built-in initial data.
    Presets,
    /// Run the acceptance checks.
    Verify {
        #[arg(value_enum, default_value_t = Level::Quick)]
        level: Level,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Quick,
    Full,
}

/// Exit code 2: the configuration is unusable. Exit code 3: the
/// computation started but did not finish cleanly.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot set up {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run { configs } => cmd_run(configs, &cli.out),
        Command::Convergence { config, levels } => cmd_convergence(config, *levels, &cli.out),
        Command::Presets => {
            for (name, about) in CATALOG {
                println!("{name:<20} {about}");
            }
            Ok(())
        }
        Command::Verify { level } => cmd_verify(*level, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn cmd_run(configs: &[PathBuf], out: &Path) -> Result<(), Failure> {
    if let [single] = configs {
        return run_one(single, out);
    }
    let results: Vec<(PathBuf, Result<(), Failure>)> = configs
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().map(|s| s.to_owned()).unwrap_or_else(|| "run".into());
            (path.clone(), run_one(path, &out.join(stem)))
        })
        .collect();
    let mut worst: Option<Failure> = None;
    for (path, r) in results {
        if let Err(f) = r {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("{}: {e:#}", path.display());
            if worst.as_ref().is_none_or(|w| f.code() > w.code()) {
                worst = Some(f);
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(f) if f.code() == 2 => Err(Failure::Config(anyhow::anyhow!("at least one config was rejected"))),
        Some(_) => Err(Failure::Runtime(anyhow::anyhow!("at least one run did not finish"))),
    }
}

fn run_one(path: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = Config::load(path).map_err(config_err)?;
    let solver = cfg.solver().map_err(config_err)?;
    let window = cfg.window().map_err(config_err)?;
    let u0 = cfg.initial_data().map_err(config_err)?;
    solver.check(&u0).map_err(config_err)?;

    let traj = run(&solver, u0).map_err(runtime_err)?;
    let snap_dir = out.join("snapshots");
    fs::create_dir_all(&snap_dir).with_context(|| format!("creating {}", snap_dir.display())).map_err(runtime_err)?;
    if cfg.output.profiles {
        fs::create_dir_all(out.join("profiles")).map_err(runtime_err)?;
    }

    let mut entries = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let name = format!("snapshot_{:06}.json", s.step);
        let checksum = write_snapshot(&snap_dir.join(&name), &s.u).map_err(runtime_err)?;
        if cfg.output.profiles {
            write_profile_csv(&out.join("profiles").join(format!("profile_{:06}.csv", s.step)), &s.u)
                .map_err(runtime_err)?;
        }
        entries.push(SnapshotEntry { t: s.t, step: s.step, file: format!("snapshots/{name}"), checksum });
    }

    let series = Series::collect(&traj, cfg.equation.b, window);
    let file = fs::File::create(out.join("diagnostics.csv")).map_err(runtime_err)?;
    series.write_csv(std::io::BufWriter::new(file)).map_err(runtime_err)?;
    write_drift(&out.join("coefficient_drift.csv"), &series, &cfg, &traj.snapshots[0].u).map_err(runtime_err)?;

    let config_json = serde_json::to_value(&cfg).map_err(runtime_err)?;
    let checksums: Vec<String> = entries.iter().map(|e| e.checksum.clone()).collect();
    let stop_reason = match &traj.outcome {
        Outcome::Completed => None,
        Outcome::Stopped { reason, .. } => Some(reason.clone()),
    };
    let manifest = Manifest {
        content_hash: content_hash(&config_json, &checksums),
        config: config_json,
        wall_seconds: traj.wall_seconds,
        steps: traj.steps,
        completed: stop_reason.is_none(),
        certified_horizon: traj.certified_horizon(),
        stop_reason: stop_reason.clone(),
        snapshots: entries,
    };
    write_manifest(&out.join("manifest.json"), &manifest).map_err(runtime_err)?;

    match stop_reason {
        None => {
            println!(
                "{}: completed {} steps to t = {} in {:.1} s; output in {}",
                path.display(),
                traj.steps,
                solver.t_end,
                traj.wall_seconds,
                out.display()
            );
            Ok(())
        }
        Some(reason) => Err(Failure::Runtime(anyhow::anyhow!(
            "run stopped at certified horizon t = {} (of {}): {reason}; partial output in {}",
            traj.certified_horizon(),
            solver.t_end,
            out.display()
        ))),
    }
}

/// One row per fitted coefficient: its largest relative change over the run
/// and whether the flow is expected to keep it fixed.
fn write_drift(path: &Path, series: &Series, cfg: &Config, u0: &asymflow::AsymFunction) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "coefficient,k,drift,conserved")?;
    let l1 = u0.tail().l1_norm();
    let scale = if l1 > 0.0 { l1 } else { 1.0 };
    match fitted_drift(&series.coefficients, scale) {
        Ok(drift) => {
            for (basis, d) in drift {
                writeln!(out, "{basis},{},{d:e},{}", basis.k, basis.k <= cfg.conserved_up_to())?;
            }
        }
        Err(e) => eprintln!("warning: no coefficient drift: {e}"),
    }
    out.flush()?;
    Ok(())
}

fn cmd_convergence(path: &Path, levels: usize, out: &Path) -> Result<(), Failure> {
    let cfg = Config::load(path).map_err(config_err)?;
    let solver = cfg.solver().map_err(config_err)?;
    let u0 = cfg.initial_data().map_err(config_err)?;
    solver.check(&u0).map_err(config_err)?;
    if levels < 3 {
        return Err(config_err(anyhow::anyhow!("need at least 3 levels, got {levels}")));
    }
    let (preset, meta) = (cfg.initial.0.clone(), cfg.space.meta().map_err(config_err)?);
    let report = convergence_harness(&solver, |grid| preset.build(grid, meta), levels).map_err(runtime_err)?;
    for (name, ladder) in [("time", &report.time), ("space", &report.space)] {
        println!("{name} ladder");
        for r in &ladder.rungs {
            let diff = r.diff_to_next.map_or("-".to_string(), |d| format!("{d:.3e}"));
            println!("  dt = {:<10} h = {:<10} diff to next = {diff}", r.dt, r.h);
        }
        let orders: Vec<String> = ladder.orders.iter().map(|o| format!("{o:.2}")).collect();
        println!("  observed orders: {}", orders.join(", "));
    }
    fs::create_dir_all(out).map_err(runtime_err)?;
    let json = serde_json::to_vec_pretty(&report).map_err(runtime_err)?;
    fs::write(out.join("convergence.json"), json).map_err(runtime_err)?;
    Ok(())
}

fn cmd_verify(level: Level, seed: u64) -> Result<(), Failure> {
    let depth = match level {
        Level::Quick => Depth::Quick,
        Level::Full => Depth::Full,
    };
    let results = verify::run_all(depth, seed, |r| println!("{}", r.line()));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(runtime_err(anyhow::anyhow!("{failed} check(s) failed")))
    }
}
