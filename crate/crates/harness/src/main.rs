use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use drlek_core::detector::{measure_error_mix, RandomWalkFrames};
use drlek_core::knowledge::RuleSet;
use drlek_harness::experiment::{compare_csv, compare_table, mean};
use drlek_harness::plot::emit_plots;
use drlek_harness::sweep::{run_sweep, sweep_csv};
use drlek_harness::{run_experiment, ExperimentConfig, MetricsLog, Variant};

#[derive(Parser)]
#[command(name = "drlek", about = "Knowledge-boosted deep RL laboratory", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train and evaluate one variant, writing one CSV log per seed.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Overrides the configured seed list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean and standard deviation of the evaluation tail of each log.
    Eval {
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = 200)]
        tail: usize,
    },
    /// Meta-learner grid over areas, layer counts and layer sizes.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reward and selection-share curves from a log.
    Plot {
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        window: usize,
    },
    Rules {
        #[command(subcommand)]
        cmd: RulesCmd,
    },
    Detector {
        #[command(subcommand)]
        cmd: DetectorCmd,
    },
}

#[derive(Subcommand)]
enum RulesCmd {
    /// Parse a rules file and print how many rules it holds.
    Check { file: PathBuf },
}

#[derive(Subcommand)]
enum DetectorCmd {
    /// Measure the detector's error mix on random-walk frames.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Train {
            config,
            variant,
            seed,
            episodes,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(v) = variant {
                cfg.variant = v;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.validate()?;
            std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
            for &s in &cfg.seeds {
                let log = run_experiment(&cfg, s)?;
                let path = cfg.out_dir.join(format!("{}_seed{s}.csv", cfg.variant));
                log.write(&path)?;
                let tail: Vec<f64> = log.tail(cfg.eval_episodes).iter().map(|r| r.reward).collect();
                println!("{} seed {s}: eval mean reward {:.3} -> {}", cfg.variant, mean(&tail), path.display());
            }
        }
        Cmd::Eval { logs, tail } => {
            let mut named = Vec::new();
            for p in &logs {
                let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                named.push((name, MetricsLog::read(p)?));
            }
            print!("{}", compare_csv(&compare_table(&named, tail)?));
        }
        Cmd::Sweep { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let csv = sweep_csv(&run_sweep(&cfg)?);
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Cmd::Plot { log, out, window } => {
            let data = MetricsLog::read(&log)?;
            let dir = out.unwrap_or_else(|| log.parent().map(Path::to_path_buf).unwrap_or_default());
            let stem = log.file_stem().map_or("log".into(), |s| s.to_string_lossy().into_owned());
            for p in emit_plots(&data, &dir, &stem, window)? {
                println!("{}", p.display());
            }
        }
        Cmd::Rules {
            cmd: RulesCmd::Check { file },
        } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let rules = RuleSet::parse(&text).with_context(|| file.display().to_string())?;
            println!("{}", rules.len());
        }
        Cmd::Detector {
            cmd: DetectorCmd::Calibrate { config, frames, seed },
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut walk = RandomWalkFrames::new(&cfg.world, seed)?;
            let mix = measure_error_mix(&cfg.detector(seed), frames, |_| walk.next_frame())?;
            println!("fp_share,fn_share,{}", (0..mix.per_kind_precision.len()).map(|k| format!("precision_{k}")).collect::<Vec<_>>().join(","));
            let prec: Vec<String> = mix
                .per_kind_precision
                .iter()
                .map(|p| p.map_or(String::new(), |x| x.to_string()))
                .collect();
            println!("{},{},{}", mix.fp_share, mix.fn_share, prec.join(","));
        }
    }
    Ok(())
}
