//! Experiment runner and reporting front end.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparsevote::accounting::{render_table, standard_configs, TableRow};
use sparsevote::codec::selftest::{run_mask_fuzz, run_quant_fuzz};
use sparsevote::experiment::{run_experiment, summary_path};
use sparsevote::ExperimentConfig;

#[derive(Parser)]
#[command(name = "sparsevote", version, about = "Distributed sparse-SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a config file and write metrics.
    Run {
        /// Path to a `key = value` config file.
        config: PathBuf,
    },
    /// Print the per-scheme bit budgets and compression rates.
    Table {
        /// Emit CSV instead of aligned text.
        #[arg(long)]
        csv: bool,
    },
    /// Fuzz the position and value codecs with seeded roundtrips.
    CodecSelftest {
        #[arg(long, default_value_t = 10_000)]
        masks: usize,
        #[arg(long, default_value_t = 1_000)]
        values: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(code) => code,
        // a closed stdout (e.g. piping into `head`) is not a failure
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(e: &sparsevote::Error) -> bool {
    matches!(e, sparsevote::Error::Io(io) if io.kind() == io::ErrorKind::BrokenPipe)
}

fn run(cli: Cli, out: &mut impl Write) -> sparsevote::Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let text = fs::read_to_string(&config)?;
            let cfg = ExperimentConfig::parse(&text)?;
            let summary = run_experiment(&cfg)?;
            write!(out, "{}", summary.to_text())?;
            writeln!(out, "metrics = {}", cfg.out.display())?;
            writeln!(out, "summary = {}", summary_path(&cfg.out).display())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Table { csv } => {
            let rows = render_table(&standard_configs())?;
            if csv {
                print_table_csv(&rows, out)?;
            } else {
                print_table_text(&rows, out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CodecSelftest { masks, values, seed } => {
            let mask_report = run_mask_fuzz(seed, masks);
            let quant_report = run_quant_fuzz(seed, values);
            for failure in mask_report.failures.iter().chain(&quant_report.failures) {
                eprintln!("FAIL {failure}");
            }
            let ok = mask_report.passed() && quant_report.passed();
            writeln!(
                out,
                "mask roundtrips: {}/{} ok",
                mask_report.trials - mask_report.failures.len(),
                mask_report.trials
            )?;
            writeln!(
                out,
                "quantizer roundtrips: {}/{} ok",
                quant_report.trials - quant_report.failures.len(),
                quant_report.trials
            )?;
            writeln!(out, "codec selftest: {}", if ok { "PASS" } else { "FAIL" })?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn overhead_cell(q: u32) -> String {
    if q < 32 {
        format!("{}", (1u64 << (q - 1)) * 32)
    } else {
        "-".to_string()
    }
}

fn print_table_csv(rows: &[TableRow], out: &mut impl Write) -> io::Result<()> {
    writeln!(
        out,
        "method,h,q,up_q_loc,up_q_val,down_q_loc,down_q_val,rate_up,rate_down,\
computed_rate_up,computed_rate_down,means_overhead_bits_per_msg,note"
    )?;
    for row in rows {
        let b = &row.budget;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.config.name,
            row.config.h,
            row.config.q,
            b.q_loc_up,
            b.q_val_up,
            b.q_loc_down,
            b.q_val_down,
            row.config.reference_up,
            row.config.reference_down,
            row.computed_up,
            row.computed_down,
            overhead_cell(row.config.q),
            row.note.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

fn print_table_text(rows: &[TableRow], out: &mut impl Write) -> io::Result<()> {
    writeln!(
        out,
        "{:<17} {:>2} {:>2} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9} {:>9}",
        "method", "H", "q", "up q_loc", "up q_val", "dn q_loc", "dn q_val", "rate up", "rate dn",
        "ovh/msg"
    )?;
    let mut notes = Vec::new();
    for row in rows {
        let b = &row.budget;
        let flag = if row.note.is_some() { "*" } else { "" };
        writeln!(
            out,
            "{:<17} {:>2} {:>2} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9} {:>9}",
            format!("{}{}", row.config.name, flag),
            row.config.h,
            row.config.q,
            format_budget(b.q_loc_up),
            format_budget(b.q_val_up),
            format_budget(b.q_loc_down),
            format_budget(b.q_val_down),
            format!("x{}", row.config.reference_up),
            format!("x{}", row.config.reference_down),
            overhead_cell(row.config.q),
        )?;
        if let Some(note) = &row.note {
            notes.push(format!("  * {}: {note}", row.config.name));
        }
    }
    if !notes.is_empty() {
        writeln!(out, "notes:")?;
        for n in notes {
            writeln!(out, "{n}")?;
        }
    }
    Ok(())
}

fn format_budget(x: f64) -> String {
    format!("{x:.6}")
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}
