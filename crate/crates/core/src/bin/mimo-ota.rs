use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mimo_ota::experiment::{load_config, Runner, DATA_ENV};
use mimo_ota::ota_sim::ResultRow;
use mimo_ota::{params_io, Error};

/// Over-the-air MIMO inference experiments.
#[derive(Parser)]
#[command(version, about, after_help = format!("The dataset root can be overridden with {DATA_ENV}.\n\nExit codes: 0 ok, 1 other failure, 2 config, 3 data or input file, 4 numeric failure."))]
struct Cli {
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (or reuse cached) networks, deploy them and write results.
    Run { config: PathBuf },
    /// Check a config and the dataset location without running anything.
    Validate { config: PathBuf },
    /// Train or load every network the config needs, then stop.
    TrainOnly { config: PathBuf },
    /// Evaluate a saved network under the config's deployment settings.
    EvalOnly {
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Dataset { .. } | Error::EmptyDataset | Error::Format(_) => 3,
        Error::Numeric(_) | Error::Singular { .. } | Error::SvdNoConvergence { .. } => 4,
        _ => 1,
    }
}

fn print_rows(rows: &[ResultRow]) {
    for r in rows {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "acc={:.4} Pt_dB={} Pr_dB={} lambda={} lambda1={} r={} {}",
            r.accuracy,
            opt(r.pt_db),
            opt(r.pr_db),
            r.lambda.map_or("-".into(), |v| v.to_string()),
            r.lambda1.map_or("-".into(), |v| v.to_string()),
            r.realization.map_or("-".into(), |v| v.to_string()),
            r.notes.split(";seed=").next().unwrap_or_default(),
        );
    }
}

fn runner(config: &PathBuf, verbose: bool) -> Result<Runner, Error> {
    let mut runner = Runner::new(load_config(config)?)?;
    runner.verbose = verbose;
    Ok(runner)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let problems = cfg.validate();
            if problems.is_empty() {
                println!("{}: ok", config.display());
                return Ok(());
            }
            for p in &problems {
                eprintln!("{}: {p}", config.display());
            }
            let data_only = problems.iter().all(|p| p.starts_with("data.root"));
            Err(if data_only {
                Error::Dataset {
                    path: cfg.data_root(),
                    message: "dataset files missing".into(),
                }
            } else {
                Error::Config(format!("{} problem(s)", problems.len()))
            })
        }
        Command::Run { config } => {
            let mut r = runner(&config, cli.verbose)?;
            let rows = r.run()?;
            print_rows(&rows);
            println!("wrote {}", r.config().output_dir.join("results.csv").display());
            Ok(())
        }
        Command::TrainOnly { config } => {
            let mut r = runner(&config, cli.verbose)?;
            let nets = r.train_only()?;
            println!("{} network(s) ready in {}", nets.len(), r.config().output_dir.join("nets").display());
            Ok(())
        }
        Command::EvalOnly { config, params } => {
            let mut r = runner(&config, cli.verbose)?;
            let net = params_io::load(&params)?;
            let rows = r.eval_only(&net)?;
            print_rows(&rows);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
