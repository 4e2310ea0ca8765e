//! `fuzzneg` command-line interface.
//!
//! Exit codes: 0 on success, 1 on validation, scenario or I/O errors, 2 on
//! usage errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::fam::{self, FamTable};
use crate::fuzzy::{GapKind, MembershipVector};
use crate::simulator::{self, load_scenario, summary_to_json, write_trace, DEFAULT_RULE_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "fuzzneg",
    version,
    about = "Fuzzy FAM decision engine and SoS negotiation simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a rule file holds exactly 256 valid, distinct rules.
    Validate { rules: PathBuf },
    /// Write the default 256-rule table as CSV ("-" for stdout).
    GenRules { output: PathBuf },
    /// Run one inference and print adjustments with diagnostics.
    Infer {
        /// Rule file path, or "default" for the shipped rules.
        #[arg(long, default_value = DEFAULT_RULE_FILE)]
        rules: String,
        #[arg(long, value_parser = finite_real, allow_hyphen_values = true)]
        perf_gap: f64,
        #[arg(long, value_parser = finite_real, allow_hyphen_values = true)]
        weight: f64,
        #[arg(long, value_parser = finite_real, allow_hyphen_values = true)]
        funding_gap: f64,
        #[arg(long, value_parser = finite_real, allow_hyphen_values = true)]
        deadline_gap: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a scenario and write the trace CSV and summary JSON.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        summary: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

fn finite_real(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

/// One-line failure reported on stderr with exit status 1.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let stdout = io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

pub fn execute(command: Command, out: &mut impl Write) -> Result<(), Failure> {
    match command {
        Command::Validate { rules } => {
            let text = read(&rules, "rules file")?;
            let table = fam::parse_rules(&text)
                .map_err(|e| Failure(format!("{}: {e}", rules.display())))?;
            writeln!(out, "OK: {} rules", table.len())?;
        }
        Command::GenRules { output } => {
            let text = fam::serialize_rules(&fam::generate_default_rules());
            if output.as_os_str() == "-" {
                out.write_all(text.as_bytes())?;
            } else {
                write_atomic(&output, text.as_bytes())?;
                writeln!(
                    out,
                    "wrote {} rules to {}",
                    fam::RULE_COUNT,
                    output.display()
                )?;
            }
        }
        Command::Infer {
            rules,
            perf_gap,
            weight,
            funding_gap,
            deadline_gap,
            format,
        } => {
            let table = load_table(&rules)?;
            let result = fam::infer(
                &table,
                perf_gap.max(0.0),
                weight.clamp(0.0, 1.0),
                funding_gap.max(0.0),
                deadline_gap.max(0.0),
            )?;
            match format {
                Format::Json => {
                    let value = inference_json(&result);
                    writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
                }
                Format::Text => write_inference_text(&result, out)?,
            }
        }
        Command::Run {
            scenario,
            trace,
            summary,
        } => {
            if !scenario.exists() {
                return Err(Failure(format!(
                    "scenario not found: {}",
                    scenario.display()
                )));
            }
            let text = read(&scenario, "scenario")?;
            let parsed = load_scenario(&text)
                .map_err(|e| Failure(format!("{}: {e}", scenario.display())))?;
            let base = scenario.parent().unwrap_or(Path::new("."));
            let table = parsed.load_rules(base)?;
            let outcome = simulator::run(&parsed, &table)?;

            let mut trace_bytes = Vec::new();
            write_trace(&outcome.traces, &mut trace_bytes)?;
            let summary_text = summary_to_json(&outcome.summary);
            write_atomic(&trace, &trace_bytes)?;
            write_atomic(&summary, summary_text.as_bytes())?;
            out.write_all(summary_text.as_bytes())?;
        }
    }
    Ok(())
}

fn read(path: &Path, what: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Failure(format!("{what} not found: {}", path.display())),
        _ => Failure(format!("cannot read {what} {}: {e}", path.display())),
    })
}

fn load_table(rules: &str) -> Result<FamTable, Failure> {
    if rules.eq_ignore_ascii_case(DEFAULT_RULE_FILE) {
        return Ok(FamTable::shipped_default().clone());
    }
    let path = Path::new(rules);
    let text = read(path, "rules file")?;
    fam::parse_rules(&text).map_err(|e| Failure(format!("{rules}: {e}")))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| Failure(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn membership_json(mv: &MembershipVector) -> serde_json::Value {
    mv.entries()
        .iter()
        .map(|(term, degree)| json!({ "term": term, "degree": degree }))
        .collect()
}

pub fn inference_json(result: &fam::InferenceResult) -> serde_json::Value {
    let m = &result.memberships;
    let fired: Vec<serde_json::Value> = result
        .fired
        .iter()
        .map(|f| {
            let a = f.rule.antecedent;
            let c = f.rule.consequent;
            json!({
                "perf_gap": a.perf.label(),
                "weight": a.weight.label(),
                "funding_gap": a.funding.label(),
                "deadline_gap": a.deadline.label(),
                "funding_action": c.funding.label(),
                "deadline_action": c.deadline.label(),
                "activation": f.activation,
            })
        })
        .collect();
    json!({
        "funding_adjustment": result.funding_adjustment,
        "deadline_adjustment": result.deadline_adjustment,
        "memberships": {
            "perf_gap": membership_json(&m.perf),
            "weight": membership_json(&m.weight),
            "funding_gap": membership_json(&m.funding),
            "deadline_gap": membership_json(&m.deadline),
        },
        "fired_rules": fired,
    })
}

fn write_inference_text(result: &fam::InferenceResult, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "funding_adjustment: {:.6}", result.funding_adjustment)?;
    writeln!(
        out,
        "deadline_adjustment: {:.6}",
        result.deadline_adjustment
    )?;
    writeln!(out, "memberships:")?;
    let m = &result.memberships;
    for (name, mv) in [
        (GapKind::Performance.name(), &m.perf),
        ("weight", &m.weight),
        (GapKind::Funding.name(), &m.funding),
        (GapKind::Deadline.name(), &m.deadline),
    ] {
        let terms: Vec<String> = mv
            .entries()
            .iter()
            .map(|(t, mu)| format!("{t}={mu:.4}"))
            .collect();
        writeln!(out, "  {name}: {}", terms.join(" "))?;
    }
    writeln!(out, "fired_rules: {}", result.fired.len())?;
    for f in &result.fired {
        let c = f.rule.consequent;
        writeln!(
            out,
            "  {} -> ({}, {}) @ {:.6}",
            f.rule.antecedent, c.funding, c.deadline, f.activation
        )?;
    }
    Ok(())
}
