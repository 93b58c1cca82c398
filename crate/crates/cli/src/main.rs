use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use krsbm_cli::{run, Command, ConfigSource, RunConfig};

#[derive(Parser)]
#[command(name = "krsbm", version, about = "Dirichlet PAM solvers and killed branching random walks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample and enhance environments, one archive per (n, seed).
    GenEnv(Flags),
    /// Solve the linear problem and compute principal eigenpairs.
    Solve(Flags),
    /// Run the particle system and write event logs and measure snapshots.
    Simulate(Flags),
    /// Run the statistical and exact checks; exits nonzero on any failure.
    Verify(Flags),
    /// Survey norms of the enhanced noise.
    Survey(Flags),
}

/// Each flag overrides the config key of the same name.
#[derive(Args)]
struct Flags {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "n")]
    n: Option<String>,
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long = "L-max")]
    l_max: Option<String>,
    #[arg(long = "d")]
    d: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long = "p")]
    p: Option<String>,
    #[arg(long = "q")]
    q: Option<String>,
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    replica_seed: Option<String>,
    #[arg(long)]
    population_cap: Option<String>,
    #[arg(long)]
    times: Option<String>,
    #[arg(long = "R")]
    r: Option<String>,
    #[arg(long)]
    zero_env: bool,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    env_dir: Option<String>,
}

impl Flags {
    fn source(&self) -> Result<ConfigSource> {
        let mut src = match &self.config {
            Some(p) => ConfigSource::load(p)?,
            None => ConfigSource::default(),
        };
        let pairs = [
            ("n", &self.n),
            ("L", &self.l),
            ("L-max", &self.l_max),
            ("d", &self.d),
            ("phi", &self.phi),
            ("seeds", &self.seeds),
            ("alpha", &self.alpha),
            ("epsilon", &self.epsilon),
            ("p", &self.p),
            ("q", &self.q),
            ("T", &self.t),
            ("dt", &self.dt),
            ("replicas", &self.replicas),
            ("replica-seed", &self.replica_seed),
            ("population-cap", &self.population_cap),
            ("times", &self.times),
            ("R", &self.r),
            ("output-dir", &self.output_dir),
            ("env-dir", &self.env_dir),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                src.set(key, v.as_str())?;
            }
        }
        if self.zero_env {
            src.set("zero-env", "true")?;
        }
        Ok(src)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Cmd::GenEnv(f) => (Command::GenEnv, f),
        Cmd::Solve(f) => (Command::Solve, f),
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Verify(f) => (Command::Verify, f),
        Cmd::Survey(f) => (Command::Survey, f),
    };
    let result = flags
        .source()
        .and_then(|src| RunConfig::resolve(command, &src))
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            for w in &summary.manifest.warnings {
                eprintln!("warning: {w}");
            }
            for r in &summary.reports {
                println!(
                    "{} {}: statistic {} reference {} se {}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.statistic,
                    r.reference,
                    r.standard_error
                );
            }
            eprintln!("manifest: {}", summary.manifest_path.display());
            if summary.failed() > 0 {
                eprintln!("{} test(s) failed", summary.failed());
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
