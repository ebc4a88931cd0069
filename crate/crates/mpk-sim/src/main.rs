use clap::Parser;
use mpk_sim::replay::{replay, sweep_hit_rate, sweep_page_count, ReplayMode, SweepKind};
use mpk_sim::trace::parse_trace;
use std::path::PathBuf;
use std::process::ExitCode;

/// Trace-driven MPK simulator: replay a trace against the virtual-key
/// manager or the raw kernel model, or emit a cost-model sweep.
#[derive(Parser, Debug)]
#[command(name = "mpk-sim", version)]
struct Args {
    /// Replay mode: managed (virtual-key manager) or raw (kernel only).
    #[arg(long, default_value = "managed")]
    mode: ReplayMode,

    /// Eviction rate in [0, 1]; overrides the rate in the trace's init op.
    #[arg(long)]
    evict_rate: Option<f64>,

    /// Seed recorded in the report.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Trace file to replay.
    #[arg(long, conflicts_with = "sweep")]
    trace: Option<PathBuf>,

    /// Sweep to run: hit_rate or page_count.
    #[arg(long)]
    sweep: Option<SweepKind>,

    /// Output file (stdout when omitted). JSON for replays, CSV for sweeps.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: &Option<PathBuf>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();

    if let Some(rate) = args.evict_rate {
        if !(0.0..=1.0).contains(&rate) {
            eprintln!("--evict-rate must be within [0, 1]");
            return ExitCode::from(2);
        }
    }

    let output = if let Some(kind) = args.sweep {
        match kind {
            SweepKind::PageCount => sweep_page_count(1000),
            SweepKind::HitRate => sweep_hit_rate(args.evict_rate.unwrap_or(1.0)),
        }
    } else if let Some(path) = &args.trace {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read {}: {e}", path.display());
                return ExitCode::from(2);
            }
        };
        let ops = match parse_trace(&text) {
            Ok(ops) => ops,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        };
        let mut json = replay(&ops, args.mode, args.evict_rate, args.seed).to_json();
        json.push('\n');
        json
    } else {
        eprintln!("nothing to do: pass --trace FILE or --sweep KIND");
        return ExitCode::from(2);
    };

    match emit(&args.out, &output) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cannot write output: {e}");
            ExitCode::from(2)
        }
    }
}
