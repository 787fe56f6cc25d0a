use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use profilesim::commands::{self, DiscriminationMode, RunArgs};
use profilesim::report::{simulate, to_pretty_json};
use profilesim::{Error, Scenario};

#[derive(Debug, Parser)]
#[command(name = "profilesim")]
#[command(
    about = "Simulate conclusion divergence between agents with different inference profiles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file, or `bundled:<name>` for a shipped scenario.
    #[arg(long, default_value = "bundled:ai_regulation")]
    scenario: PathBuf,

    /// RNG seed; defaults to the scenario's `run.seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Number of steps; defaults to the scenario's `run.steps`.
    #[arg(long)]
    steps: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an episode and write trace, summary and report files
    Simulate {
        #[command(flatten)]
        common: Common,

        /// Batch of seeds (`a..b` or `a..=b`), run in parallel.
        #[arg(long, conflicts_with = "seed")]
        seeds: Option<String>,
    },

    /// Synchronize profile components between two agents and report what is left
    Align {
        #[command(flatten)]
        common: Common,

        /// Components to copy from the first agent into the second.
        #[arg(long, default_value = "R,E,S,D")]
        components: String,

        /// Report every non-empty component subset.
        #[arg(long)]
        sweep: bool,

        /// The two agents to compare, `A,B`; defaults to the first two.
        #[arg(long)]
        agents: Option<String>,
    },

    /// Rank observations or interventions by how well they separate two agents' models
    Discriminate {
        #[command(flatten)]
        common: Common,

        /// `observation` or `intervention`.
        #[arg(long, default_value = "observation")]
        mode: String,

        /// Pass threshold; defaults to the scenario's `run.delta`.
        #[arg(long)]
        delta: Option<f64>,

        /// Post-intervention steps each agent forecasts over.
        #[arg(long)]
        horizon: Option<usize>,

        #[arg(long)]
        agents: Option<String>,
    },

    /// Print the run report without writing trace files
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(Scenario, RunArgs), Error> {
    let scenario = Scenario::load(&common.scenario)?;
    let args = RunArgs::resolve(&scenario, common.seed, common.steps);
    Ok((scenario, args))
}

fn out_dir(common: &Common) -> &Path {
    common.out.as_deref().unwrap_or(Path::new("out"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { common, seeds } => {
            let (scenario, args) = load(&common)?;
            let out = out_dir(&common);
            match seeds {
                Some(range) => {
                    let seeds = commands::parse_seed_range(&range)?;
                    commands::simulate_batch(&scenario, args.steps, &seeds, out)?;
                    println!("wrote {} runs to {}", seeds.len(), out.display());
                }
                None => {
                    commands::simulate_to_dir(&scenario, args.steps, args.seed, out)?;
                    println!("wrote {}", commands::report_path(out, args.seed).display());
                }
            }
        }
        Command::Align {
            common,
            components,
            sweep,
            agents,
        } => {
            let (scenario, args) = load(&common)?;
            let comps = commands::parse_components(&components)?;
            let pair = commands::select_pair(&scenario, agents.as_deref())?;
            let report = commands::align(&scenario, &args, pair, &comps, sweep)?;
            let text = commands::emit(
                &report,
                common.out.as_deref(),
                &format!("align_seed{}.json", args.seed),
            )?;
            print!("{text}");
        }
        Command::Discriminate {
            common,
            mode,
            delta,
            horizon,
            agents,
        } => {
            let (scenario, args) = load(&common)?;
            let mode: DiscriminationMode = mode.parse()?;
            let pair = commands::select_pair(&scenario, agents.as_deref())?;
            let report = commands::discriminate(&scenario, &args, pair, mode, delta, horizon)?;
            let name = format!("discriminate_{}_seed{}.json", mode_name(mode), args.seed);
            let text = commands::emit(&report, common.out.as_deref(), &name)?;
            print!("{text}");
        }
        Command::Report { common } => {
            let (scenario, args) = load(&common)?;
            if args.steps == 0 {
                return Err(Error::Validation {
                    path: "--steps".into(),
                    message: "report needs at least one step".into(),
                });
            }
            let output = simulate(&scenario, args.steps, args.seed)?;
            match common.out.as_deref() {
                Some(dir) => {
                    let text = commands::emit(
                        &output.report,
                        Some(dir),
                        &format!("report_seed{}.json", args.seed),
                    )?;
                    print!("{text}");
                }
                None => print!("{}", to_pretty_json(&output.report)),
            }
        }
    }
    Ok(())
}

fn mode_name(mode: DiscriminationMode) -> &'static str {
    match mode {
        DiscriminationMode::Observation => "observation",
        DiscriminationMode::Intervention => "intervention",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
