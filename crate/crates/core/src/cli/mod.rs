//! Command-line front end.
//!
//! Exit status is 0 on success, 2 for configuration errors, 3 when
//! calibration cannot meet its tolerance and 1 for anything else.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, SweepParam, SweepSpec};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "iessic", version, about = "Inter-slot SIC random access: scenario analysis, calibration and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scenarios of one (M, u) with occurrence and resolution probabilities.
    Enumerate,
    /// MAC and total throughput for M = 1..=users.
    Throughput,
    /// Fit link parameters to target resolution probabilities.
    Calibrate,
    /// Total throughput against one link parameter.
    Sweep,
    /// Analytical SSINR against the symbol-level simulation.
    ValidateBaseband,
    /// Reproduced throughput and resolution tables beside the reference values.
    ReportTables,
    /// Slot-by-slot trace of one address assignment (`--set addresses=000,011`).
    Trace,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    users: Option<String>,
    #[arg(long, global = true)]
    address_bits: Option<String>,
    #[arg(long, global = true)]
    address_model: Option<String>,
    #[arg(long, global = true)]
    param: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    from: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    to: Option<String>,
    #[arg(long, global = true)]
    steps: Option<String>,
    #[arg(long, global = true)]
    eq3_as_printed: bool,
    #[arg(long, global = true)]
    mgf_as_printed: bool,
    /// Leave idle slots out of the slot count.
    #[arg(long, global = true)]
    no_idle_slots: bool,
    #[arg(long, global = true)]
    perfect_phy: bool,
}

impl Common {
    fn build(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set {s}: expected KEY=VALUE")))?;
            pairs.push((k.trim().to_string(), v.to_string()));
        }
        let flags = [
            ("seed", &self.seed),
            ("out_dir", &self.out),
            ("users", &self.users),
            ("address_bits", &self.address_bits),
            ("address_model", &self.address_model),
            ("sweep_param", &self.param),
            ("sweep_from", &self.from),
            ("sweep_to", &self.to),
            ("sweep_steps", &self.steps),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                pairs.push((key.to_string(), v.clone()));
            }
        }
        let toggles = [
            ("eq3_as_printed", self.eq3_as_printed, "true"),
            ("mgf_as_printed", self.mgf_as_printed, "true"),
            ("count_idle_slots", self.no_idle_slots, "false"),
            ("perfect_phy", self.perfect_phy, "true"),
        ];
        for (key, on, value) in toggles {
            if on {
                pairs.push((key.to_string(), value.to_string()));
            }
        }
        for (k, v) in pairs {
            cfg.set(&k, &v).map_err(Error::Config)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Calibration { .. } => 3,
        _ => 1,
    }
}

/// Parse `args` (program name first), run the command and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match cli.common.build() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let result = match cli.command {
        Command::Enumerate => commands::enumerate(&cfg),
        Command::Throughput => commands::throughput(&cfg),
        Command::Calibrate => commands::calibrate(&cfg).map(|(_, paths)| paths),
        Command::Sweep => commands::sweep(&cfg),
        Command::ValidateBaseband => commands::validate_baseband(&cfg),
        Command::ReportTables => commands::report_tables(&cfg),
        Command::Trace => commands::trace(&cfg),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
