use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use foliation_forge::report::{execute, write};
use foliation_forge::{Command, Config};

/// Obstruction forms, leaf solves, foliation continuation and probes for
/// prescribed-curvature foliations near a point of an initial data set.
#[derive(Parser, Debug)]
#[command(name = "foliation-forge", version)]
struct Cli {
    command: Command,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for `<command>.json` and CSV dumps (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn threads() -> Result<Option<usize>, String> {
    match std::env::var("FOLIATION_FORGE_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| format!("FOLIATION_FORGE_THREADS must be a positive integer (got `{v}`)")),
    }
}

fn main() -> ExitCode {
    // usage errors exit 1 so they never read as a verdict
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match threads() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match Config::load(&cli.config, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let finished = match execute(cli.command, &cfg) {
        Ok(f) => f,
        Err(foliation_forge::ForgeError::Core(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.out {
        Some(dir) => write(dir, &finished),
        None => serde_json::to_string_pretty(&finished.report).map_err(Into::into).map(|s| {
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout().lock(), "{s}");
        }),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(finished.report.status.code() as u8)
}
