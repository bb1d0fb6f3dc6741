//! `neuracc` — command-line driver for the neuracore toolchain.
//!
//! Subcommands follow the compile / simulate / verify / report flow; flags
//! override individual fields of the JSON config file. Exit codes: 0 on
//! success, 1 when verification finds a divergence, 2 for input or config
//! errors, 3 for runtime failures.

use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand, ValueEnum};

use neuracore::analog::LifParams;
use neuracore::mapper::SolverKind;
use neuracore::pipeline::{self, PipelineConfig, PipelineError, SynthSpec};

#[derive(Parser)]
#[command(name = "neuracc", version, about = "Neuromorphic accelerator compile-and-simulate toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prune, quantize, solve placement, and emit controller memory images.
    Compile(RunArgs),
    /// Run the event-driven chain over compiled artifacts; write spikes,
    /// trace, and report.
    Simulate(RunArgs),
    /// Diff the chain output against the dense reference model.
    Verify(RunArgs),
    /// Rebuild report CSVs from a stored trace (energy model comes from the
    /// config, so constants can be changed without re-simulating).
    Report(RunArgs),
    /// Generate a seeded synthetic model manifest and spike stream.
    GenSynth(GenSynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the seed recorded with the artifacts.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the prune ratio.
    #[arg(long, value_name = "RATIO")]
    prune_ratio: Option<f64>,
    /// Override the placement solver.
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Override per-layer compile parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Greedy,
}

impl From<SolverArg> for SolverKind {
    fn from(value: SolverArg) -> Self {
        match value {
            SolverArg::Exact => SolverKind::Exact,
            SolverArg::Greedy => SolverKind::Greedy,
        }
    }
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output manifest path.
    #[arg(long)]
    manifest: PathBuf,
    /// Output spike stream path.
    #[arg(long)]
    stream: PathBuf,
    /// Comma-separated destination-layer widths, e.g. 200,100,40,10.
    #[arg(long, value_delimiter = ',', required = true)]
    layers: Vec<usize>,
    #[arg(long)]
    input_size: usize,
    #[arg(long)]
    timesteps: usize,
    /// Per-cell spike probability.
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Firing threshold, volts.
    #[arg(long, default_value_t = 0.25)]
    vth: f64,
    /// Reset voltage, volts.
    #[arg(long, default_value_t = 0.0)]
    vreset: f64,
    /// Per-timestep retention factor.
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_with_overrides(args: &RunArgs) -> Result<PipelineConfig, PipelineError> {
    let mut config = pipeline::load_config(&args.config)?;
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(ratio) = args.prune_ratio {
        config.prune_ratio = ratio;
    }
    if let Some(solver) = args.solver {
        config.solver = solver.into();
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    Ok(config)
}

fn run(command: Command) -> Result<i32, PipelineError> {
    match command {
        Command::Compile(args) => {
            let config = load_with_overrides(&args)?;
            let summary = pipeline::compile(&config)?;
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            for layer in &summary.layers {
                println!(
                    "compiled {}: {}x{} neurons, {} connections, {} phase(s), {} rows",
                    layer.dir,
                    layer.dests,
                    layer.sources,
                    layer.nonzeros,
                    layer.phases,
                    layer.populated_rows
                );
            }
            println!("artifacts written to {}", config.out_dir.display());
            Ok(0)
        }
        Command::Simulate(args) => {
            let config = load_with_overrides(&args)?;
            let summary = pipeline::simulate(&config)?;
            let report = &summary.report;
            println!(
                "simulated {} clocks, {} fires, {} output spikes",
                report.total_clocks, report.total_fires, summary.output_spikes
            );
            println!(
                "ops={} energy={:.3e} J tops/w={:.4}",
                report.total_ops, report.energy.total_j, report.tops_per_watt
            );
            Ok(0)
        }
        Command::Verify(args) => {
            let config = load_with_overrides(&args)?;
            let verdict = pipeline::verify(&config)?;
            match verdict.divergence {
                None => {
                    println!("PASS: chain output equals reference output exactly");
                    Ok(0)
                }
                Some(d) => {
                    println!(
                        "FAIL: first divergence at timestep {}, neuron {}: chain={} reference={}",
                        d.timestep, d.neuron, d.chain as u8, d.reference as u8
                    );
                    Ok(1)
                }
            }
        }
        Command::Report(args) => {
            let config = load_with_overrides(&args)?;
            let report = pipeline::report(&config)?;
            println!(
                "ops={} clocks={} fires={} energy={:.3e} J tops/w={:.4}",
                report.total_ops,
                report.total_clocks,
                report.total_fires,
                report.energy.total_j,
                report.tops_per_watt
            );
            Ok(0)
        }
        Command::GenSynth(args) => {
            let spec = SynthSpec {
                input_size: args.input_size,
                widths: args.layers.clone(),
                timesteps: args.timesteps,
                density: args.density,
                lif: LifParams {
                    vth: args.vth,
                    vreset: args.vreset,
                    leak_lambda: args.lambda,
                },
                seed: args.seed,
            };
            pipeline::gen_synth(&spec, &args.manifest, &args.stream)?;
            println!(
                "wrote {} and {}",
                args.manifest.display(),
                args.stream.display()
            );
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => exit(code),
        Err(error) => {
            eprintln!("error: {error}");
            exit(error.exit_code());
        }
    }
}
