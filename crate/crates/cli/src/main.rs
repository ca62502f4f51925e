use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modnev_cli::commands::{
    RunOverrides, cmd_dims, cmd_merge, cmd_replay, cmd_run, fitness_line, parse_params,
};
use modnev_cli::CliError;

#[derive(Parser)]
#[command(name = "modnev", version, about = "Modular neuroevolution engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run batch evolution from a config file
    Run {
        /// Run configuration XML
        config: PathBuf,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the generation limit
        #[arg(long)]
        generations: Option<u64>,
        /// Evaluation worker threads (results do not depend on this)
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge part genomes for incremental evolution
    Merge {
        /// Input genome files
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Merged genome output path
        #[arg(short, long)]
        output: PathBuf,
        /// Keep merged plain modules evolvable instead of freezing them
        #[arg(long)]
        keep_evolvable: bool,
    },
    /// Print search-space dimensions
    Dims {
        /// Genome file to analyze per module
        genome: Option<PathBuf>,
        /// Also print the unrestricted (flat network) dimension
        #[arg(long)]
        unrestricted: bool,
        /// Sensor count for --unrestricted
        #[arg(long)]
        ns: Option<u64>,
        /// Hidden count for --unrestricted
        #[arg(long)]
        nh: Option<u64>,
        /// Actuator count for --unrestricted
        #[arg(long)]
        na: Option<u64>,
    },
    /// Evaluate one genome and write its trace CSV
    Replay {
        /// Genome file
        genome: PathBuf,
        /// Environment name (hexapod, oscillator)
        #[arg(long)]
        env: String,
        /// Evaluation steps
        #[arg(long)]
        steps: u64,
        /// Trace CSV output path
        #[arg(short, long)]
        out: PathBuf,
        /// Evaluation seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environment parameter, key=value; repeatable
        #[arg(long = "param")]
        params: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            generations,
            jobs,
            out,
        } => {
            let outcome = cmd_run(
                &config,
                RunOverrides {
                    seed,
                    generations,
                    jobs,
                },
                out.as_deref(),
            )?;
            println!(
                "completed generation {} best {}",
                outcome.final_generation,
                outcome
                    .champion
                    .fitness
                    .map(|f| f.to_string())
                    .unwrap_or_default()
            );
            Ok(())
        }
        Command::Merge {
            inputs,
            output,
            keep_evolvable,
        } => cmd_merge(&inputs, &output, keep_evolvable),
        Command::Dims {
            genome,
            unrestricted,
            ns,
            nh,
            na,
        } => {
            let counts = if unrestricted {
                match (ns, nh, na) {
                    (Some(ns), Some(nh), Some(na)) => Some((ns, nh, na)),
                    _ => {
                        return Err(CliError::Config(
                            "--unrestricted needs --ns, --nh and --na".into(),
                        ));
                    }
                }
            } else {
                None
            };
            print!("{}", cmd_dims(genome.as_deref(), counts)?);
            Ok(())
        }
        Command::Replay {
            genome,
            env,
            steps,
            out,
            seed,
            params,
        } => {
            let params = parse_params(&params)?;
            let fitness = cmd_replay(&genome, &env, steps, &out, seed, &params)?;
            println!("{}", fitness_line(fitness));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
