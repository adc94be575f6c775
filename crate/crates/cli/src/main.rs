//! Command-line front end: `train`, `gradcheck` and `compare`.
//!
//! Configuration is layered: defaults for the chosen task and engine, then the
//! `--config` file, then individual flags, then `--set key=value` pairs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eprop_core::harness::{
    compare, gradcheck, gradcheck_settings, run_cartpole, run_supervised, MetricsTable, MetricsWriter, RunConfig,
    RunGroup, Task,
};
use eprop_core::rl::DrqnLogWriter;

#[derive(Parser)]
#[command(name = "eprop", version, about = "LSTM training with e-prop and BPTT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on sMNIST, psMNIST, TCA or cart-pole and write a metrics CSV.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Metrics CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the resolved configuration in key = value form.
        #[arg(long)]
        save_config: Option<PathBuf>,
    },
    /// Check BPTT against finite differences and e-prop against BPTT.
    Gradcheck {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Summarize metrics CSVs grouped by label.
    Compare {
        /// `label=run1.csv,run2.csv`; repeat once per group. The first group is the baseline.
        #[arg(long = "group", required = true)]
        groups: Vec<String>,
        /// Column to summarize.
        #[arg(long, default_value = "running_error")]
        column: String,
    },
}

macro_rules! config_flags {
    ($($field:ident),* $(,)?) => {
        #[derive(Args, Default)]
        struct ConfigArgs {
            /// Flat `key = value` configuration file.
            #[arg(long)]
            config: Option<PathBuf>,
            /// Override any configuration key; repeatable.
            #[arg(long = "set", value_name = "KEY=VALUE")]
            set: Vec<String>,
            $(
                #[arg(long, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl ConfigArgs {
            fn flag_pairs(&self) -> Vec<(String, String)> {
                let mut pairs = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        pairs.push((stringify!($field).to_string(), v.clone()));
                    }
                )*
                pairs
            }
        }
    };
}

config_flags!(
    task,
    engine,
    seed,
    cells,
    batch,
    epochs,
    updates,
    optimizer,
    lr,
    opt_eps,
    rho,
    beta1,
    beta2,
    forget_bias_delta,
    echo_lambda,
    echo_per_length,
    mu_in,
    mu_rec,
    mu_bias,
    clip_norm,
    tca_delay,
    train_size,
    test_size,
    eval_every,
    running_window,
    stop_at,
    wallclock,
    data_dir,
    episodes,
    warmup_episodes,
    gamma,
    eps_start,
    eps_end,
    eps_decay_steps,
    target_update,
    bptt_window,
    eprop_window,
    replay_capacity,
    train_every,
    td_reduction,
    jitter,
    flicker_p,
    instances,
    seq_len,
    fd_step,
);

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

impl ConfigArgs {
    fn resolve(&self, default_task: Option<Task>) -> CliResult<RunConfig> {
        let mut pairs = Vec::new();
        if let Some(t) = default_task {
            pairs.push(("task".to_string(), t.name().to_string()));
        }
        if let Some(path) = &self.config {
            pairs.extend(RunConfig::parse_kv(&std::fs::read_to_string(path)?)?);
        }
        pairs.extend(self.flag_pairs());
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(RunConfig::from_pairs(&pairs)?)
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Returns whether every enabled check passed.
fn train(config: &ConfigArgs, out: Option<&Path>, save_config: Option<&Path>) -> CliResult<bool> {
    let cfg = config.resolve(None)?;
    if let Some(p) = save_config {
        std::fs::write(p, cfg.to_kv())?;
    }
    match cfg.task {
        Task::Gradcheck => run_gradcheck(&cfg),
        t if t.is_cartpole() => {
            let mut writer = DrqnLogWriter::new(output(out)?)?;
            let mut write_err = None;
            let summary = run_cartpole(&cfg, |r| {
                if let Err(e) = writer.push(r) {
                    write_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = write_err {
                return Err(e.into());
            }
            writer.finish()?.flush()?;
            eprintln!(
                "episodes {} updates {} best running mean {:.2}",
                summary.episodes, summary.updates, summary.best_running_mean
            );
            Ok(cfg.stop_at <= 0.0 || summary.reached_at.is_some())
        }
        _ => {
            let mut writer = MetricsWriter::new(output(out)?)?;
            let summary = run_supervised(&cfg, |row| writer.push(row))?;
            writer.finish()?.flush()?;
            eprintln!(
                "updates {} final running error {:.4} last test accuracy {}",
                summary.updates,
                summary.final_running_error,
                summary.last_test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
            );
            if cfg.stop_at > 0.0 {
                match summary.reached_at {
                    Some(at) => eprintln!("threshold {} reached at {at}", cfg.stop_at),
                    None => eprintln!("threshold {} not reached", cfg.stop_at),
                }
                return Ok(summary.reached_at.is_some());
            }
            Ok(true)
        }
    }
}

fn run_gradcheck(cfg: &RunConfig) -> CliResult<bool> {
    let report = gradcheck(&gradcheck_settings(cfg))?;
    print!("{}", report.render());
    Ok(report.passed())
}

fn compare_groups(entries: &[String], column: &str) -> CliResult<bool> {
    let mut groups = Vec::new();
    for entry in entries {
        let (label, files) = entry
            .split_once('=')
            .ok_or_else(|| format!("--group expects label=file[,file...], got '{entry}'"))?;
        let runs = files
            .split(',')
            .filter(|f| !f.is_empty())
            .map(|f| Ok(MetricsTable::read(File::open(f).map_err(|e| format!("{f}: {e}"))?)?))
            .collect::<CliResult<Vec<_>>>()?;
        groups.push(RunGroup {
            label: label.to_string(),
            runs,
        });
    }
    print!("{}", compare(&groups, column)?.render());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            config,
            out,
            save_config,
        } => train(config, out.as_deref(), save_config.as_deref()),
        Command::Gradcheck { config } => config.resolve(Some(Task::Gradcheck)).and_then(|c| run_gradcheck(&c)),
        Command::Compare { groups, column } => compare_groups(groups, column),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
