use std::path::PathBuf;
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand};

use adafl::harness::{self, compare, presets, ExperimentConfig, Overrides};
use adafl::{Error, Result};

#[derive(Parser)]
#[command(name = "adafl", version, about = "Federated poisoning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one or more experiment configs.
    Run(RunArgs),
    /// Tabulate finished runs side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Pool runs with the same method and epsilon into mean ± std.
        #[arg(long)]
        aggregate: bool,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Inspect built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetCmd,
    },
}

#[derive(Subcommand)]
enum PresetCmd {
    List,
    /// Print a preset as a complete config file.
    Show { name: String },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repeat the run for each seed, writing `<out>/seed-<n>` directories.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Run several configs as separate processes, this many at a time.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            rounds: self.rounds,
            epsilon: self.epsilon,
        }
    }

    /// Arguments to forward to a child process for one config.
    fn child_args(&self, config: &PathBuf) -> Vec<String> {
        let mut a = vec!["run".to_string(), config.display().to_string()];
        if let Some(s) = self.seed {
            a.extend(["--seed".into(), s.to_string()]);
        }
        if !self.seeds.is_empty() {
            let s: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            a.extend(["--seeds".into(), s.join(",")]);
        }
        if let Some(r) = self.rounds {
            a.extend(["--rounds".into(), r.to_string()]);
        }
        if let Some(e) = self.epsilon {
            a.extend(["--epsilon".into(), e.to_string()]);
        }
        a
    }
}

fn run_one(path: &PathBuf, args: &RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(path, &args.overrides())?;
    if args.seeds.is_empty() {
        let s = harness::run(&cfg)?;
        println!("{}: {}", cfg.out.display(), brief(&s));
        return Ok(());
    }
    let root = cfg.out.clone();
    let mut dirs = Vec::new();
    for &seed in &args.seeds {
        cfg.seed = seed;
        cfg.out = root.join(format!("seed-{seed}"));
        let s = harness::run(&cfg)?;
        println!("{}: {}", cfg.out.display(), brief(&s));
        dirs.push(cfg.out.clone());
    }
    if dirs.len() >= 2 {
        print!("{}", compare(&dirs, true)?.to_text());
    }
    Ok(())
}

fn brief(s: &harness::RunSummary) -> String {
    let ata = s.best_ata.map_or("-".to_string(), |v| format!("{v:.3}"));
    format!(
        "{} eps={} ATA {ata} max-ATA {:.3} MTA {:.3} (rounds {}..={})",
        s.method, s.epsilon, s.best_max_ata, s.best_mta, s.horizon_start + 1, s.horizon_end
    )
}

fn run_batch(args: &RunArgs) -> Result<()> {
    if args.jobs <= 1 || args.configs.len() == 1 {
        if args.out.is_some() && args.configs.len() > 1 {
            return Err(Error::Config("--out cannot be shared by several configs".into()));
        }
        for c in &args.configs {
            run_one(c, args)?;
        }
        return Ok(());
    }
    if args.out.is_some() {
        return Err(Error::Config("--out cannot be shared by several configs".into()));
    }
    let exe = std::env::current_exe().map_err(|e| Error::io("current executable", e))?;
    let mut failed = Vec::new();
    for chunk in args.configs.chunks(args.jobs) {
        let children = chunk
            .iter()
            .map(|c| {
                Command::new(&exe)
                    .args(args.child_args(c))
                    .spawn()
                    .map(|ch| (c, ch))
                    .map_err(|e| Error::io(&exe, e))
            })
            .collect::<Result<Vec<_>>>()?;
        for (c, mut child) in children {
            let status = child.wait().map_err(|e| Error::io(&exe, e))?;
            if !status.success() {
                failed.push(c.display().to_string());
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("runs failed: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(args) => run_batch(&args),
        Cmd::Compare { dirs, aggregate, csv } => compare(&dirs, aggregate).and_then(|t| {
            print!("{}", t.to_text());
            match csv {
                Some(p) => std::fs::write(&p, t.to_csv()?).map_err(|e| Error::Io { path: p, source: e }),
                None => Ok(()),
            }
        }),
        Cmd::Presets { action: PresetCmd::List } => {
            for (name, desc) in presets::list() {
                println!("{name:<20} {desc}");
            }
            Ok(())
        }
        Cmd::Presets { action: PresetCmd::Show { name } } => {
            presets::preset(&name).and_then(|c| c.to_toml()).map(|t| print!("{t}"))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
