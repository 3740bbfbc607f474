use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use forecast_cli::{
    generate_synthetic, ingest_csv, run_experiment, stats_only, write_series_csv, CliError,
    ExperimentConfig, SyntheticKind, TwoStepSection,
};
use forecast_core::series::adf::adf_test;
use forecast_core::stats::TwoStepResult;

/// Univariate time-series forecasting with LSTM lag selection by Bayesian
/// optimization, plus the evaluation machinery to compare forecasters.
#[derive(Parser)]
#[command(name = "forecast", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured multi-station study and write its report artifacts.
    Run {
        /// Path to the experiment JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the two-step statistical comparison on an existing metrics table.
    Stats {
        /// Long-form metrics CSV (station,model,rmse,mae,smape[,arank]).
        #[arg(long)]
        metrics: PathBuf,
        /// Reference model for the post hoc comparisons.
        #[arg(long, default_value = "PROP")]
        reference: String,
        /// Significance level of the post hoc step.
        #[arg(long, default_value_t = 0.10)]
        alpha: f64,
    },
    /// Generate a synthetic monthly series CSV.
    Synth {
        /// One of: seasonal-ar, sine, random-walk.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Augmented Dickey-Fuller stationarity test on a series CSV.
    Adf {
        #[arg(long)]
        input: PathBuf,
        /// Lagged differences to include; defaults to trunc((T-1)^(1/3)).
        #[arg(long)]
        max_lag: Option<usize>,
    },
}

fn print_two_step(results: &BTreeMap<String, TwoStepResult>) {
    for (metric, result) in results {
        let f = &result.friedman;
        println!("== {} ==", metric.to_uppercase());
        if f.degenerate {
            println!(
                "  friedman chi2 = {:.4}; Iman-Davenport F is infinite (perfect rank separation)",
                f.chi2
            );
        } else {
            println!(
                "  friedman chi2 = {:.4}, F_F = {:.3}, p = {:.4}",
                f.chi2, f.f_f, f.p_value
            );
        }
        println!(
            "  post hoc vs {} at alpha = {}:",
            result.reference, result.alpha
        );
        println!("    {:<16} {:>8} {:>8}  reject", "model", "z", "p");
        for c in &result.comparisons {
            println!(
                "    {:<16} {:>8.3} {:>8.3}  {}",
                c.model,
                c.z,
                c.p_value,
                if c.reject { "yes" } else { "no" }
            );
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = run_experiment(&config)?.report;
            let ok = report.runs.iter().filter(|r| r.ok).count();
            println!(
                "completed {ok}/{} runs; artifacts in {}",
                report.runs.len(),
                config.output_dir.display()
            );
            for r in &report.runs {
                match (&r.metrics, &r.error) {
                    (Some(m), _) => println!(
                        "  {:<12} {:<16} rmse {:>9.3}  mae {:>9.3}  smape {:>8.3}  lag {}",
                        r.station,
                        r.model,
                        m.rmse,
                        m.mae,
                        m.smape,
                        r.selected_lag
                            .map(|l| l.to_string())
                            .unwrap_or_else(|| "-".into())
                    ),
                    (None, Some(e)) => println!("  {:<12} {:<16} FAILED: {e}", r.station, r.model),
                    (None, None) => {}
                }
            }
            match &report.two_step {
                TwoStepSection::Computed { per_metric } => print_two_step(per_metric),
                TwoStepSection::Skipped { reason } => {
                    println!("two-step comparison skipped: {reason}");
                }
            }
            if ok == 0 {
                return Err(CliError::AllRunsFailed);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats {
            metrics,
            reference,
            alpha,
        } => {
            let results = stats_only(&metrics, &reference, alpha)?;
            print_two_step(&results);
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            kind,
            length,
            seed,
            out,
        } => {
            let kind = SyntheticKind::parse(&kind).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown kind '{kind}' (expected seasonal-ar, sine, or random-walk)"
                ))
            })?;
            let series = generate_synthetic(kind, length, seed)?;
            write_series_csv(&out, &series)?;
            println!(
                "wrote {} observations of {} to {}",
                series.len(),
                kind.name(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Adf { input, max_lag } => {
            let series = ingest_csv(&input)?;
            let result = adf_test(&series, max_lag)?;
            println!("observations: {}", series.len());
            println!("lags:         {}", result.lags);
            println!("statistic:    {:.4}", result.statistic);
            println!(
                "p-value:      {}{}",
                result.p_value,
                if result.clamped {
                    " (clamped at table bound)"
                } else {
                    ""
                }
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
