mod args;
mod commands;
mod fail;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use fail::{Failure, Outcome};
use manifest::{check_inputs, digest, read_manifest, write_atomic, RunManifest, SCHEMA_VERSION};

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn run(cmd: Command) -> Outcome<u8> {
    if let Command::Replay(r) = cmd {
        let m = read_manifest(&r.manifest)?;
        check_inputs(&m)?;
        let mut inner: Command = serde_json::from_value(serde_json::json!({ "command": m.command, "args": m.args }))
            .map_err(|e| Failure::input(format!("{}: cannot rebuild command: {e}", r.manifest.display())))?;
        if matches!(inner, Command::Replay(_)) {
            return Err(Failure::input("manifest records a replay"));
        }
        if let Some(out) = r.out {
            inner.redirect(out);
        }
        return run(inner);
    }

    let started_at = now();
    let result = commands::execute(&cmd)?;
    let mut args = serde_json::to_value(&cmd).expect("arguments serialise");
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        args: args["args"].take(),
        config: result.config,
        seeds: result.seeds,
        inputs: result.inputs.iter().map(|p| digest(p)).collect::<Outcome<_>>()?,
        outputs: result.outputs.digests()?,
        jobs: rayon::current_num_threads(),
        started_at,
        finished_at: now(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    write_atomic(&result.manifest, text.as_bytes())?;
    println!("{}", result.summary);
    println!("manifest: {}", result.manifest.display());
    Ok(result.status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(fail::EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(fail::EXIT_CONFIG);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
