//! Command-line front end: argument handling, result documents and output files.

pub mod args;
pub mod commands;
pub mod report;

use std::io::Write;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command, OutputArgs};
use commands::{write_atomic, CliError, CliResult, Outcome, EXIT_ESTIMATION, EXIT_VALIDATION};
use rdmulti_core::datamodel::reject_unsupported;

/// Flags naming features this tool does not implement, with any `var`
/// suffix removed.
fn prescan(argv: &[String]) -> CliResult<()> {
    for a in argv.iter().skip(1) {
        if let Some(name) = a.strip_prefix("--") {
            let name = name.split('=').next().unwrap_or(name).replace('-', "_");
            reject_unsupported(&name).map_err(CliError::from)?;
        }
    }
    Ok(())
}

fn execute(cmd: &Command) -> CliResult<Outcome> {
    match cmd {
        Command::Rdmc(a) => commands::cmd_rdmc(a),
        Command::Rdmcplot(a) => commands::cmd_rdmcplot(a),
        Command::Rdms(a) => commands::cmd_rdms(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
    }
}

fn output_args(cmd: &Command) -> Option<&OutputArgs> {
    match cmd {
        Command::Rdmc(a) => Some(&a.output),
        Command::Rdmcplot(a) => Some(&a.output),
        Command::Rdms(a) => Some(&a.output),
        Command::Simulate(_) => None,
    }
}

/// Runs the command and, when asked, repeats it on a single worker thread to
/// confirm the outputs do not depend on scheduling.
pub fn run_command(cmd: &Command) -> CliResult<Outcome> {
    let (timing, seed_check) = match (cmd, output_args(cmd)) {
        (_, Some(o)) => (o.timing, o.seed_check),
        (Command::Simulate(s), None) => (false, s.seed_check),
        _ => (false, false),
    };
    let start = Instant::now();
    let mut outcome = execute(cmd)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;

    if seed_check {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| CliError {
                code: EXIT_ESTIMATION,
                message: format!("cannot start worker pool: {e}"),
            })?;
        let again = pool.install(|| execute(cmd))?;
        let (a, b) = (outcome.rendered_files(), again.rendered_files());
        if a != b {
            let names: Vec<&str> = a
                .iter()
                .zip(&b)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.0.as_str())
                .collect();
            return Err(CliError {
                code: EXIT_ESTIMATION,
                message: format!("seed check failed: outputs differ between runs ({})", names.join(", ")),
            });
        }
    }
    if timing {
        if let Some(r) = &mut outcome.report {
            r.timing_ms = Some(elapsed);
        }
    }
    Ok(outcome)
}

fn out_dir(cmd: &Command) -> &std::path::Path {
    match cmd {
        Command::Simulate(s) => &s.out_dir,
        other => &output_args(other).expect("estimation commands carry output args").out_dir,
    }
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn run<W: Write, E: Write>(argv: &[String], stdout: &mut W, stderr: &mut E) -> u8 {
    let result = prescan(argv).and_then(|_| {
        let cli = Cli::try_parse_from(argv).map_err(|e| {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_VALIDATION,
            };
            CliError {
                code,
                message: e.render().to_string(),
            }
        })?;
        let outcome = run_command(&cli.command)?;
        let dir = out_dir(&cli.command);
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::validation(format!("cannot create {}: {e}", dir.display())))?;
        for (name, bytes) in outcome.rendered_files() {
            write_atomic(dir, &name, &bytes)?;
        }
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            for w in &outcome.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            0
        }
        Err(e) if e.code == 0 => {
            let _ = stdout.write_all(e.message.as_bytes());
            0
        }
        Err(e) => {
            let msg = e.message.trim_end();
            if msg.starts_with("error:") {
                let _ = writeln!(stderr, "{msg}");
            } else {
                let _ = writeln!(stderr, "error: {msg}");
            }
            e.code
        }
    }
}
