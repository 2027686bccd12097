use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use imbalance_rl::agents::Algorithm;
use imbalance_rl::harness::{
    compare_algorithms, compare_checkpoints, dp_oracle, evaluate, heatmap, linspace, prepare_data,
    train, Checkpoint, Comparison, HeatmapSpec, Prepared, RunConfig, DEFAULT_SOC_RESOLUTION,
};
use imbalance_rl::market::PriceSeries;
use imbalance_rl::nn::grad_check_random;

#[derive(Parser, Debug)]
#[command(
    name = "imbalance-rl",
    version,
    about = "Battery arbitrage on imbalance prices with (distributional) RL"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Small-batch, short-run preset on synthetic data.
    #[arg(long, global = true)]
    desk_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent and write checkpoints, the learning curve and logs.
    Train {
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Greedy evaluation of a checkpoint.
    Evaluate {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Greedy action over a (price, SoC) grid.
    Heatmap {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = -500.0, allow_hyphen_values = true)]
        price_min: f64,
        #[arg(long, default_value_t = 1500.0, allow_hyphen_values = true)]
        price_max: f64,
        #[arg(long, default_value_t = 100)]
        price_steps: usize,
        #[arg(long, default_value_t = 100)]
        soc_steps: usize,
        /// Minute of the day held fixed.
        #[arg(long, default_value_t = 720)]
        minute: usize,
        #[arg(long, default_value_t = 1)]
        month: u32,
        /// Daily cycle count held fixed.
        #[arg(long, default_value_t = 0.0)]
        cycles: f64,
    },
    /// Perfect-foresight optimum per day by dynamic programming.
    Oracle {
        #[arg(long, default_value_t = DEFAULT_SOC_RESOLUTION)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Side-by-side metrics for checkpoints or freshly trained algorithms.
    Compare {
        #[arg(long, num_args = 1.., conflicts_with = "algorithms")]
        checkpoints: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<Algorithm>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Backpropagation against finite differences on random networks.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        nets: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn days(prepared: &Prepared, split: Split) -> &PriceSeries {
    match split {
        Split::Train => &prepared.train,
        Split::Validation => prepared.evaluation_days(),
        Split::Test => prepared.test_days(),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit_comparison(cmp: &Comparison, out: Option<&Path>) -> Result<()> {
    let csv = cmp.to_csv();
    print!("{csv}");
    if let Some(dir) = out {
        write(dir, "comparison.csv", &csv)?;
        write(dir, "comparison.json", &serde_json::to_string_pretty(cmp)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let mut config = RunConfig::resolve(cli.config.as_deref(), cli.desk_scale)?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.run.out_dir = Some(out.clone());
    }
    let out = cli.out.as_deref();

    match cli.command {
        Command::Train {
            algorithm,
            episodes,
        } => {
            if let Some(a) = algorithm {
                config.agent.algorithm = a;
            }
            if let Some(n) = episodes {
                config.run.episodes = n;
            }
            let outcome = train(&config)?;
            println!(
                "trained {} for {} episodes ({} env steps) in {:.1}s",
                config.agent.algorithm,
                outcome.episodes.len(),
                outcome.env_steps,
                outcome.train_time.as_secs_f64()
            );
            if let Some(p) = outcome.curve.last() {
                println!(
                    "final validation profit {:.2} EUR/day, {:.3} cycles/day",
                    p.val_profit, p.val_cycles
                );
            }
            if let Some(p) = outcome.best {
                println!(
                    "best validation profit {:.2} EUR/day at episode {}",
                    p.val_profit, p.episode
                );
            }
        }
        Command::Evaluate { checkpoint, split } => {
            let ckpt: Checkpoint<f64> = Checkpoint::load(&checkpoint)?;
            let prepared = prepare_data(&config)?;
            let report = evaluate(
                &ckpt.bundle,
                days(&prepared, split),
                &ckpt.battery,
                &ckpt.norm,
            )?;
            let text = report.to_text();
            print!("{text}");
            if let Some(dir) = out {
                write(dir, "eval_report.txt", &text)?;
                write(
                    dir,
                    "eval_report.json",
                    &serde_json::to_string_pretty(&report)?,
                )?;
            }
        }
        Command::Heatmap {
            checkpoint,
            price_min,
            price_max,
            price_steps,
            soc_steps,
            minute,
            month,
            cycles,
        } => {
            let ckpt: Checkpoint<f64> = Checkpoint::load(&checkpoint)?;
            let spec = HeatmapSpec {
                prices: linspace(price_min, price_max, price_steps),
                socs: linspace(0.0, 1.0, soc_steps),
                minute,
                month,
                cycles,
            };
            let grid = heatmap(&ckpt.bundle, &spec, &ckpt.battery, &ckpt.norm)?;
            match out {
                Some(dir) => {
                    let (csv, meta) = grid.write(dir, "heatmap")?;
                    println!("wrote {} and {}", csv.display(), meta.display());
                }
                None => print!("{}", grid.to_csv()),
            }
        }
        Command::Oracle { resolution, split } => {
            let prepared = prepare_data(&config)?;
            let mut csv = String::from("date,profit,cycles\n");
            let mut total = 0.0;
            let series = days(&prepared, split);
            for day in series.days() {
                let sol = dp_oracle(day, &config.battery, resolution)?;
                csv.push_str(&format!("{},{},{}\n", day.date(), sol.profit, sol.cycles));
                total += sol.profit;
            }
            print!("{csv}");
            println!(
                "average optimal profit {:.2} EUR/day",
                total / series.len() as f64
            );
            if let Some(dir) = out {
                write(dir, "oracle.csv", &csv)?;
            }
        }
        Command::Compare {
            checkpoints,
            algorithms,
            split,
        } => {
            let cmp = if !checkpoints.is_empty() {
                let prepared = prepare_data(&config)?;
                compare_checkpoints(&checkpoints, days(&prepared, split))?
            } else if !algorithms.is_empty() {
                compare_algorithms(&config, &algorithms)?
            } else {
                bail!("pass --checkpoints or --algorithms");
            };
            emit_comparison(&cmp, out)?;
        }
        Command::GradCheck {
            nets,
            step,
            tolerance,
        } => {
            let summary = grad_check_random(nets, config.run.seed, step, tolerance)?;
            let json = serde_json::to_string_pretty(&summary)?;
            println!("{json}");
            if let Some(dir) = out {
                write(dir, "grad_check.json", &json)?;
            }
            println!("{}", if summary.pass() { "PASS" } else { "FAIL" });
            return Ok(summary.pass());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
