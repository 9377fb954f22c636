use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsfsim::experiment::{self, parse_frequency, Case, Scenario, SceneSource};
use hsfsim::Error;

/// Programmable-wall indoor propagation experiments.
#[derive(Parser)]
#[command(name = "hsfsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the all-specular baseline.
    Plain(Common),
    /// Maximise the minimum received power.
    CaseA(Common),
    /// Minimise the maximum delay spread under a power threshold.
    CaseB(Common),
    /// Run a scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    rays: Option<usize>,
    #[arg(long)]
    bounces: Option<usize>,
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    gens: Option<usize>,
    /// Carrier, e.g. 60GHz or 2.4GHz.
    #[arg(long, default_value = "60GHz")]
    freq: String,
    /// Case B power threshold; defaults to 1 dBm at 60 GHz and 30 dBm at 2.4 GHz.
    #[arg(long, allow_hyphen_values = true)]
    threshold_dbm: Option<f64>,
    /// Scene file instead of the built-in floor plan.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn scenario(&self, case: Case) -> Result<Scenario, Error> {
        let frequency = parse_frequency(&self.freq)?;
        let mut s = Scenario::paper(case, frequency);
        s.seed = self.seed;
        s.ga.seed = self.seed;
        if let Some(r) = self.rays {
            s.radio.ray_count = r;
        }
        if let Some(b) = self.bounces {
            s.radio.max_bounces = b;
        }
        if let Some(p) = self.pop {
            s.ga.population_size = p;
        }
        if let Some(g) = self.gens {
            s.ga.generations = g;
        }
        if let Some(t) = self.threshold_dbm {
            s.threshold_dbm = Some(t);
        }
        if let Some(p) = &self.scene {
            s.scene = SceneSource::File(p.clone());
        }
        s.validate()?;
        Ok(s)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema(_) | Error::InvalidScene(_) => 2,
        Error::InvalidParameter(_) | Error::GenomeLength { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plain(c) => c.scenario(Case::Plain).map(|s| (s, c.out.clone())),
        Command::CaseA(c) => c.scenario(Case::CaseA).map(|s| (s, c.out.clone())),
        Command::CaseB(c) => c.scenario(Case::CaseB).map(|s| (s, c.out.clone())),
        Command::Run { scenario, out } => Scenario::load(scenario).map(|s| (s, out.clone())),
    }
    .and_then(|(s, out)| experiment::run(&s, &out));
    match result {
        Ok(summary) => {
            print!("{}", summary.table);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
