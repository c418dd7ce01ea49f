use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mptrack::channel::CovarianceModelKind;
use mptrack::harness::{
    run_significance_sweep, run_sweep, stream_id, ExperimentConfig, ExperimentContext, StreamPurpose, TrialFits,
};
use mptrack::oceansim::{add_target, pingfile};
use mptrack::tracker::PingRecord;
use mptrack::Error;

#[derive(Parser)]
#[command(name = "mptrack", version, about = "Multipath background tracking and sequential detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one ping sequence and write it as a ping file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; receives `pings.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Add the configured target at this SNR.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Fit one model (and M0) on the training pings and report its significance.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: CovarianceModelKind,
        /// Ping file to fit instead of a simulated trial.
        #[arg(long)]
        pings: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Significance sweep over scenarios and INR levels.
    Significance {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated INR values in dB; defaults to the configured grid.
        #[arg(long, value_delimiter = ',')]
        inr_grid: Option<Vec<f64>>,
    },
    /// Run the sequential test on one simulated trial.
    Detect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: CovarianceModelKind,
        #[arg(long)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Detection threshold; without it the test only reports the largest statistic.
        #[arg(long)]
        h1: Option<f64>,
        /// Run on the background alone.
        #[arg(long)]
        no_target: bool,
    },
    /// Full Monte Carlo sweep.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Usage(_) | Error::Dimension(_) => 2,
        Error::Numerical { .. } | Error::Fit { .. } => 3,
        Error::Io(_) | Error::Csv(_) => 1,
    }
}

fn simulated(ctx: &ExperimentContext, trial: u64) -> Vec<PingRecord<f64>> {
    ctx.simulate(stream_id(StreamPurpose::Simulate, 0, trial))
}

fn run(cli: Cli) -> mptrack::Result<()> {
    match cli.command {
        Command::Simulate { config, out, trial, snr } => {
            let ctx = ExperimentContext::new(ExperimentConfig::load(&config)?)?;
            let mut records = simulated(&ctx, trial);
            if let Some(snr) = snr {
                records = add_target(&records, &ctx.target_track(snr)?)?;
            }
            std::fs::create_dir_all(&out)?;
            let path = out.join("pings.csv");
            pingfile::save(&path, ctx.sim.dt_s(), &records)?;
            println!("wrote {} pings to {}", records.len(), path.display());
        }
        Command::Fit { config, model, pings, trial } => {
            let ctx = ExperimentContext::new(ExperimentConfig::load(&config)?)?;
            let records = match pings {
                Some(p) => {
                    let file = pingfile::load(&p)?;
                    if file.records.first().map(|r| r.y.len()) != Some(ctx.cfg.dims.n_samples) {
                        return Err(Error::Usage("ping file length does not match dims.n_samples".into()));
                    }
                    if file.records.len() < ctx.cfg.train_pings {
                        return Err(Error::Usage("ping file is shorter than train_pings".into()));
                    }
                    file.records
                }
                None => simulated(&ctx, trial),
            };
            let kinds: Vec<CovarianceModelKind> = if model == CovarianceModelKind::M0 {
                vec![model]
            } else {
                vec![CovarianceModelKind::M0, model]
            };
            let fits = ctx.fit_background(&records, &kinds)?;
            for f in &fits {
                let hp = f.hp_hat;
                println!(
                    "model={} loglik={} sigma_q2={} sigma_c2={} sigma_d2={} sigma_e2={} evals={} converged={}",
                    f.kind, f.loglik, hp.sigma_q2, hp.sigma_c2, hp.sigma_d2, hp.sigma_e2, f.n_evals, f.converged
                );
            }
            if fits.len() == 2 {
                let s = mptrack::learn::llr_statistic(&fits[1], &fits[0], ctx.cfg.alpha)?;
                println!(
                    "model={} statistic_2t={} dof={} p_value={} significant={}",
                    s.kind, s.statistic_2t, s.dof, s.p_value, s.significant
                );
            }
        }
        Command::Significance { config, inr_grid } => {
            let cfg = ExperimentConfig::load(&config)?;
            let grid = inr_grid.unwrap_or_else(|| cfg.significance.inr_grid_db.clone());
            if grid.is_empty() {
                return Err(Error::Usage("empty INR grid".into()));
            }
            let rows = run_significance_sweep(&cfg, &grid)?;
            for r in &rows {
                println!(
                    "scenario={:?} inr_db={} replicate={} model={} p_value={} significant={}",
                    r.scenario, r.inr_db, r.replicate, r.model, r.p_value, r.significant
                );
            }
        }
        Command::Detect { config, model, snr, trial, h1, no_target } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if !cfg.models.contains(&model) {
                cfg.models.push(model);
            }
            let ctx = ExperimentContext::new(cfg)?;
            let background = simulated(&ctx, trial);
            let fits = ctx.fit_background(&background, &[CovarianceModelKind::M0, model])?;
            let trial_fits = TrialFits { background, fits };
            let track = ctx.target_track(snr)?;
            let o = ctx.detect(&trial_fits, model, &track, h1.unwrap_or(f64::INFINITY), !no_target)?;
            let show = |v: Option<i64>| v.map_or_else(|| "none".to_string(), |d| d.to_string());
            println!(
                "model={model} snr_db={snr} detected={} alarm_ping={} delay={} max_g={} restarts={}",
                o.detected,
                show(o.alarm_ping.map(|p| p as i64)),
                show(o.delay),
                o.max_g,
                o.n_restarts
            );
        }
        Command::Mc { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let output = run_sweep(&cfg)?;
            for r in &output.summary.pd {
                println!("model={} snr_db={} pd={} h1={}", r.model, r.snr_db, r.pd, r.h1);
            }
            for f in &output.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
