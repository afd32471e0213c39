use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otfs_sim::channel::write_paths_csv;
use otfs_sim::par::Execution;
use otfs_sim::sim::{read_csv, write_csv, write_gnuplot, SimConfig, Simulator};
use otfs_sim::{selftest, Error, Result};

#[derive(Parser)]
#[command(name = "otfs-sim", version, about = "OTFS over OFDM link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER/FER sweep and write CSV.
    Run(RunArgs),
    /// Check the core invariants.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Convert a results CSV into whitespace-separated gnuplot blocks.
    Gnuplot {
        /// Results CSV written by `run`.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the propagation paths of one frame.
    Channel {
        #[command(flatten)]
        common: CommonArgs,
        /// Frame index.
        #[arg(long, default_value_t = 0)]
        frame: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Velocity in km/h; comma-separated for several.
    #[arg(long)]
    velocity: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// otfs-tf, otfs-dd or ofdm; comma-separated for several.
    #[arg(long)]
    mode: Option<String>,
    /// start:step:stop in dB, or a comma-separated list.
    #[arg(long)]
    ebn0: Option<String>,
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn load_config(common: &CommonArgs) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            SimConfig::from_kv_text(&text)?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = &common.velocity {
        cfg.set("velocity", v)?;
    }
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::io(path.unwrap_or(Path::new("<stdout>")), e)
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(m) = &args.mode {
        cfg.set("mode", m)?;
    }
    if let Some(e) = &args.ebn0 {
        cfg.set("ebn0", e)?;
    }
    if let Some(f) = args.frames {
        cfg.frames_per_point = f;
    }
    if let Some(i) = args.iters {
        cfg.max_iters = i;
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    let sim = Simulator::new(cfg)?;
    let records = sim.sweep(Execution::with_workers(sim.config().workers))?;
    let out = args.out.as_deref();
    let mut w = output(out)?;
    write_csv(&mut w, &records).map_err(io_err(out))?;
    w.flush().map_err(io_err(out))
}

fn channel(common: CommonArgs, frame: u64, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&common)?;
    let sim = Simulator::new(cfg)?;
    let velocity = sim.config().velocities_kmh.first().copied().unwrap_or(0.0);
    let inputs = sim.frame_inputs(velocity, frame)?;
    let out = out.as_deref();
    let mut w = output(out)?;
    write_paths_csv(&mut w, &inputs.paths).map_err(io_err(out))?;
    w.flush().map_err(io_err(out))
}

fn gnuplot(input: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let file = File::open(&input).map_err(|e| Error::io(&input, e))?;
    let records = read_csv(BufReader::new(file))?;
    let out = out.as_deref();
    let mut w = output(out)?;
    write_gnuplot(&mut w, &records).map_err(io_err(out))?;
    w.flush().map_err(io_err(out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Selftest { seed } => {
            let results = selftest::run_all(seed);
            let mut failed = false;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                failed |= !r.passed;
            }
            if failed {
                return ExitCode::from(1);
            }
            Ok(())
        }
        Command::Gnuplot { input, out } => gnuplot(input, out),
        Command::Channel { common, frame, out } => channel(common, frame, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => 3,
                Error::Config(_) | Error::InvalidArgument(_) => 2,
            })
        }
    }
}

