use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use conformable::config::ScenarioConfig;
use conformable::scenario::{resolve_out_dir, run_scenario, Pipeline, RunOptions};
use conformable::specfun::{conformable_beta, conformable_gamma, SpecfunMethod, SpecfunParams};
use conformable::Result;

#[derive(Parser)]
#[command(name = "conformable", version, about = "Conformable evolution operators and null control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the evolution operator and write the homogeneous trajectory.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        /// Also write every Ψ(t_i, t_j) to psi_table.csv.
        #[arg(long)]
        dump_table: bool,
    },
    /// Solve the semilinear system with zero control.
    Solve(RunArgs),
    /// Synthesize the closed-loop null control.
    Control(RunArgs),
    /// Check the null-controllability inequality on random directions.
    Verify(RunArgs),
    /// Evaluate the conformable gamma or beta function.
    Specfun {
        #[command(subcommand)]
        function: Function,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Reduction,
    Quadrature,
}

impl From<Method> for SpecfunMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Reduction => SpecfunMethod::Reduction,
            Method::Quadrature => SpecfunMethod::Quadrature,
        }
    }
}

#[derive(Subcommand)]
enum Function {
    /// Γ_k^α(p).
    Gamma {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, allow_hyphen_values = true)]
        p: f64,
        #[arg(long, value_enum, default_value = "reduction")]
        method: Method,
    },
    /// B_k^α(x, y).
    Beta {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long, value_enum, default_value = "reduction")]
        method: Method,
    },
}

/// `v` to 12 significant digits.
fn significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..12).contains(&exp) {
        format!("{v:.*}", (11 - exp) as usize)
    } else {
        format!("{v:.11e}")
    }
}

fn run(cli: Cli) -> Result<()> {
    let (args, pipeline) = match cli.command {
        Command::Specfun { function } => {
            let value = match function {
                Function::Gamma { alpha, k, p, method } => {
                    conformable_gamma(p, SpecfunParams::new(alpha, k)?, method.into())?
                }
                Function::Beta { alpha, k, x, y, method } => {
                    conformable_beta(x, y, SpecfunParams::new(alpha, k)?, method.into())?
                }
            };
            println!("{}", significant(value));
            return Ok(());
        }
        Command::Evolve { run, dump_table } => (run, Pipeline::Evolve { dump_table }),
        Command::Solve(run) => (run, Pipeline::Solve),
        Command::Control(run) => (run, Pipeline::Control),
        Command::Verify(run) => (run, Pipeline::Verify),
    };
    let config = ScenarioConfig::load(&args.config)?;
    let opts = RunOptions {
        out_dir: resolve_out_dir(args.out.as_deref(), &config),
        seed: args.seed.unwrap_or(config.seed),
    };
    let summary = run_scenario(&config, pipeline, &opts)?;
    print!("{}", summary.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
