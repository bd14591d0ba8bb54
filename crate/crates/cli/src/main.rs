use std::path::PathBuf;
use std::process::ExitCode;

use breather::run::{run, Comparison, RunConfig, RunOutcome};
use breather::scenarios::{scenario_unchecked, SCENARIO_NAMES};
use breather::Error;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "breather",
    version,
    about = "Simulate modulated breathers of the nonautonomous 1D Gross-Pitaevskii equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one or more scenarios and write traces and summaries.
    Run(RunArgs),
    /// List the scenario catalog.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompareArg {
    Cubic,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario name; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    scenario: Vec<String>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Grid spacing.
    #[arg(long)]
    dx: Option<f64>,
    /// Clearance on each side of the breather's path.
    #[arg(long = "box")]
    box_half_width: Option<f64>,
    /// End time of the run.
    #[arg(long)]
    horizon: Option<f64>,
    /// Relative amplitude of the uniform noise applied to the initial field.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    /// Noise seed; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    /// Solver steps between trace rows.
    #[arg(long, default_value_t = 100)]
    snapshot_stride: usize,
    /// Also write every n-th traced field to snapshots.csv.
    #[arg(long)]
    field_every: Option<usize>,
    /// Rerun with another nonlinearity and report peak delays.
    #[arg(long, value_enum)]
    compare: Option<CompareArg>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Parallel runs in a sweep.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl RunArgs {
    fn configs(&self) -> Vec<RunConfig> {
        let sweep = self.scenario.len() * self.seed.len() > 1;
        let mut configs = Vec::new();
        for name in &self.scenario {
            for &seed in &self.seed {
                let out = if sweep {
                    self.out.join(format!("{name}-seed{seed}"))
                } else {
                    self.out.clone()
                };
                configs.push(RunConfig {
                    scenario: name.clone(),
                    dt: self.dt,
                    dx: self.dx,
                    box_half_width: self.box_half_width,
                    horizon: self.horizon,
                    perturbation: self.perturb,
                    seed,
                    snapshot_stride: self.snapshot_stride,
                    field_every: self.field_every,
                    compare: self.compare.map(|CompareArg::Cubic| Comparison::Cubic),
                    out,
                });
            }
        }
        configs
    }
}

fn describe(config: &RunConfig, outcome: &RunOutcome) -> String {
    let s = &outcome.summary;
    let mut line = format!(
        "{} seed {} -> {}: residual {:.2e}, norm drift {:.2e}, stability {:?}",
        s.scenario.name,
        config.seed,
        config.out.display(),
        s.residual.gpe_residual,
        s.norm_drift,
        s.stability.verdict
    );
    if let Some(r) = &s.report {
        line += &format!(
            ", period {:.4}, frequency {:.4}, extrema [{:.3}, {:.3}]",
            r.period, r.frequency, r.amplitude_min, r.amplitude_max
        );
        if let Some(w) = r.peak_width {
            line += &format!(", peak width {w:.4}");
        }
    }
    if let Some(c) = &s.comparison {
        line += &format!(", max g|psi|^2 {:.4}, {} delays", c.max_coupled_density, c.delays.len());
    }
    line
}

fn execute(config: &RunConfig) -> i32 {
    match run(config) {
        Ok(outcome) => {
            println!("{}", describe(config, &outcome));
            match outcome.status {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("{} seed {}: analysis failed: {e}", config.scenario, config.seed);
                    e.exit_code()
                }
            }
        }
        Err(e) => {
            eprintln!("{} seed {}: {e}", config.scenario, config.seed);
            e.exit_code()
        }
    }
}

fn run_all(args: &RunArgs) -> i32 {
    let configs = args.configs();
    if args.jobs == 0 {
        eprintln!("{}", Error::InvalidInput("--jobs must be at least 1".into()));
        return 2;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("could not start worker pool: {e}");
            return 2;
        }
    };
    let codes: Vec<i32> = pool.install(|| configs.par_iter().map(execute).collect());
    codes.into_iter().max().unwrap_or(0)
}

fn list() -> i32 {
    for name in SCENARIO_NAMES {
        match scenario_unchecked(name) {
            Ok(s) => println!(
                "{name:<24} horizon {:<8.2} dt {:<8.0e} dx {:<6} {}{}",
                s.horizon,
                s.numerics.dt,
                s.numerics.dx,
                match s.model {
                    breather::propagator::ModelKind::Polynomial => "cubic",
                    breather::propagator::ModelKind::Nonpolynomial => "nonpolynomial",
                },
                if s.experimental { " (experimental)" } else { "" }
            ),
            Err(e) => {
                eprintln!("{name}: {e}");
                return e.exit_code();
            }
        }
    }
    0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => run_all(&args),
        Command::List => list(),
    };
    ExitCode::from(code as u8)
}
