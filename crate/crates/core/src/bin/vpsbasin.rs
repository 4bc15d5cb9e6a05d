use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use vpsbasin::basinmap::BasinMap;
use vpsbasin::config::{validate_config, PipelineConfig};
use vpsbasin::error::Error;
use vpsbasin::fractal::extract_boundary;
use vpsbasin::netgraph::{
    generate_modular, generate_two_population, load_network, network_info, save_network, LoadOptions, ModularSpec,
    NetworkFormat, TwoPopulationSpec,
};
use vpsbasin::pipeline::{run_stages, RunOptions, Stage};
use vpsbasin::render::{render_basin, render_boundary};

const EXIT_STAGE_FAILURE: u8 = 1;
const EXIT_CONFIG_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "vpsbasin", version, about = "Basin maps of network dynamics from lag/alignment fingerprints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or generate networks.
    #[command(subcommand)]
    Net(NetCommand),
    /// Check a config and print its normalized form.
    Validate(ConfigArgs),
    /// Run every stage, skipping those already current.
    Run(StageArgs),
    /// Integrate and fingerprint every slice point (vps.bin).
    Sweep(StageArgs),
    /// Cluster the fingerprints (clustering.json).
    Cluster(StageArgs),
    /// Write the label grid (labels.csv).
    Basin(StageArgs),
    /// Boundary dimension report (fractal.json).
    Fractal(StageArgs),
    /// Render a label grid as a binary PPM image.
    Render(RenderArgs),
}

#[derive(Subcommand)]
enum NetCommand {
    /// Print a JSON summary of a network file.
    Info {
        path: PathBuf,
        #[arg(long, default_value = "edge-list")]
        format: NetworkFormat,
        /// Average an asymmetric dense matrix with its transpose.
        #[arg(long)]
        symmetrize: bool,
    },
    /// Write a generated network.
    #[command(subcommand)]
    Generate(GenerateCommand),
}

#[derive(Subcommand)]
enum GenerateCommand {
    /// Two all-to-all populations, optionally with one edge removed.
    TwoPopulation {
        #[arg(long)]
        pop_size: usize,
        #[arg(long)]
        intra: f64,
        #[arg(long)]
        inter: f64,
        #[arg(long)]
        drop_edge_seed: Option<u64>,
        #[command(flatten)]
        out: NetOut,
    },
    /// Seeded modular random graph with unit maximal weighted degree.
    Modular {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        modules: usize,
        #[arg(long)]
        p_intra: f64,
        #[arg(long)]
        p_inter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: NetOut,
    },
}

#[derive(Args)]
struct NetOut {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value = "edge-list")]
    format: NetworkFormat,
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Override one key, e.g. `--set integration.dt=0.05`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Rerun stages even when their outputs are current.
    #[arg(long)]
    force: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Label grid CSV.
    grid: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    palette_seed: u64,
    /// Draw boundary cells in black over the basin colours.
    #[arg(long, conflicts_with = "boundary_only")]
    boundary_overlay: bool,
    /// Draw only the boundary set.
    #[arg(long)]
    boundary_only: bool,
}

fn fail(code: u8, e: &dyn std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig, ExitCode> {
    validate_config(&args.config, &args.overrides).map_err(|e| {
        let msg = match &e {
            Error::Config(text) => format!("invalid config {}:\n{text}", args.config.display()),
            other => other.to_string(),
        };
        fail(EXIT_CONFIG_INVALID, &msg)
    })
}

fn print_json(value: &impl serde::Serialize) -> ExitCode {
    match serde_json::to_string_pretty(value) {
        Ok(s) => {
            println!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_STAGE_FAILURE, &e),
    }
}

fn stages(args: &StageArgs, stages: &[Stage]) -> ExitCode {
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = cancel.clone();
        // a second interrupt while the flag is already set exits immediately
        let installed = ctrlc::set_handler(move || {
            if cancel.swap(true, Ordering::SeqCst) {
                std::process::exit(130);
            }
            eprintln!("\ninterrupt: finishing the current chunk and flushing the checkpoint");
        });
        if let Err(e) = installed {
            eprintln!("warning: no interrupt handler ({e})");
        }
    }
    let quiet = args.quiet;
    let opts = RunOptions {
        cancel: Some(cancel),
        progress: Some(Arc::new(move |done, total| {
            if !quiet {
                eprint!("\rsweep {done}/{total}");
                if done == total {
                    eprintln!();
                }
                let _ = std::io::stderr().flush();
            }
        })),
        force: args.force,
    };
    match run_stages(&cfg, stages, &opts) {
        Ok((_, outcomes)) => {
            if !quiet {
                for (stage, outcome) in &outcomes {
                    eprintln!("{:<8} {:?}", stage.name(), outcome);
                }
                eprintln!("artifacts in {}", cfg.output_dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e @ Error::Interrupted { .. }) => fail(
            EXIT_STAGE_FAILURE,
            &format!("{e}; rerun the same command to resume from {}", cfg.output_dir.join("checkpoints").display()),
        ),
        Err(e) => fail(EXIT_STAGE_FAILURE, &e),
    }
}

fn write_network(net: vpsbasin::Result<vpsbasin::netgraph::Network>, out: &NetOut) -> ExitCode {
    match net.and_then(|n| save_network(&n, &out.out, out.format).map(|_| n)) {
        Ok(n) => print_json(&network_info(&n)),
        Err(e) => fail(EXIT_STAGE_FAILURE, &e),
    }
}

fn render(args: &RenderArgs) -> ExitCode {
    let result = BasinMap::read_csv(&args.grid).and_then(|bm| {
        let bg = extract_boundary(&bm);
        let img = if args.boundary_only {
            render_boundary(&bm, &bg)
        } else {
            render_basin(&bm, args.palette_seed, args.boundary_overlay.then_some(&bg))
        };
        img.write_ppm(Path::new(&args.out))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_STAGE_FAILURE, &e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Net(NetCommand::Info {
            path,
            format,
            symmetrize,
        }) => match load_network(&path, format, LoadOptions { symmetrize }) {
            Ok(net) => print_json(&network_info(&net)),
            Err(e) => fail(EXIT_STAGE_FAILURE, &e),
        },
        Command::Net(NetCommand::Generate(GenerateCommand::TwoPopulation {
            pop_size,
            intra,
            inter,
            drop_edge_seed,
            out,
        })) => write_network(
            generate_two_population(&TwoPopulationSpec {
                pop_size,
                intra_weight: intra,
                inter_weight: inter,
                drop_edge_seed,
            }),
            &out,
        ),
        Command::Net(NetCommand::Generate(GenerateCommand::Modular {
            nodes,
            modules,
            p_intra,
            p_inter,
            seed,
            out,
        })) => write_network(
            generate_modular(&ModularSpec {
                n_nodes: nodes,
                n_modules: modules,
                p_intra,
                p_inter,
                seed,
            }),
            &out,
        ),
        Command::Validate(args) => match load_config(&args) {
            Ok(cfg) => print_json(&cfg),
            Err(code) => code,
        },
        Command::Run(args) => stages(&args, &Stage::ALL),
        Command::Sweep(args) => stages(&args, &[Stage::Sweep]),
        Command::Cluster(args) => stages(&args, &[Stage::Cluster]),
        Command::Basin(args) => stages(&args, &[Stage::Basin]),
        Command::Fractal(args) => stages(&args, &[Stage::Fractal]),
        Command::Render(args) => render(&args),
    }
}
