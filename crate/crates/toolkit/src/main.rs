use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seqmia::config::RunConfig;
use seqmia::pipeline::{Pipeline, TranslateSet};
use seqmia::report::{render_group, render_sentence};
use seqmia::{Result, ToolError};

#[derive(Parser)]
#[command(
    name = "seqmia",
    version,
    about = "Membership inference audits for translation models"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "seqmia.toml")]
    config: PathBuf,

    /// Output directory, overriding `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a config value, e.g. `--set split.k=1000`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deduplicate the corpus and build target and shadow splits.
    Split,
    /// Translate probe sets, filling the oracle caches.
    Translate {
        /// all, a_in, a_out, a_ood, spare, shadow or heldout.
        #[arg(default_value = "all")]
        set: String,
    },
    /// Write per-probe feature tables.
    Features,
    /// Train and evaluate the sentence-level attack.
    Attack,
    /// Train and evaluate the group-level attack with threshold sweeps.
    GroupAttack,
    /// Print the reports of a finished run.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(&cli.config, &cli.overrides)?;
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if matches!(cli.command, Command::Report) && !cfg.output_dir.join(seqmia::run::MANIFEST_FILE).exists() {
        let p = cfg.output_dir.join(seqmia::run::MANIFEST_FILE);
        return Err(ToolError::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no run manifest"),
        ));
    }
    let mut p = Pipeline::open(cfg)?;
    match cli.command {
        Command::Split => print!("{}", p.split()?),
        Command::Translate { set } => {
            let set = TranslateSet::parse(&set)
                .ok_or_else(|| ToolError::Config(format!("unknown translation set {set:?}")))?;
            print!("{}", p.translate(set)?.render());
        }
        Command::Features => {
            for f in p.features()? {
                println!("{}", p.run_dir().join(f).display());
            }
        }
        Command::Attack => {
            let file = p.attack()?;
            print!("{}", render_sentence(&file));
        }
        Command::GroupAttack => {
            let file = p.group_attack()?;
            print!("{}", render_group(&file));
        }
        Command::Report => print!("{}", p.report()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seqmia: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
