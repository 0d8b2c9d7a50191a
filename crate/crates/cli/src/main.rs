use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use trifield_cli::commands::{self, FitArgs, PairArgs, Scales};
use trifield_cli::inputs::DEFAULT_POINTS;
use trifield_cli::service::{self, ServiceConfig};

#[derive(Parser)]
#[command(name = "trifield", version, about = "Part feature fields on 3D shapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a feature field to a mesh from part proposals.
    Fit {
        mesh: PathBuf,
        /// Proposals manifest (JSON).
        #[arg(long)]
        proposals: PathBuf,
        /// Fit configuration (JSON); defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output field file.
        #[arg(long, short)]
        out: PathBuf,
        /// Write the fit report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Include wall-clock time in the report.
        #[arg(long)]
        timing: bool,
    },
    /// Cut the face hierarchy into parts.
    Segment {
        mesh: PathBuf,
        /// Field (PFLD) or face features (PFTS).
        features: PathBuf,
        #[arg(long, conflicts_with = "scales", required_unless_present = "scales")]
        k: Option<usize>,
        /// Emit cuts for k = 2, 3, ... (this many).
        #[arg(long)]
        scales: Option<usize>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(required_unless_present = "batch", conflicts_with = "batch")]
        gt: Option<PathBuf>,
        #[arg(required_unless_present = "batch")]
        pred: Option<PathBuf>,
        /// JSON list of {shape_id, category?, gt, pred}.
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long, conflicts_with = "batch")]
        category: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Emit the full merge tree.
    Hierarchy {
        mesh: PathBuf,
        features: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Transfer a source segmentation to a target shape.
    Coseg {
        #[command(flatten)]
        pair: PairOpts,
        #[arg(long)]
        source_seg: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Nearest-feature face correspondence from source to target.
    Correspond {
        #[command(flatten)]
        pair: PairOpts,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Proposal preprocessing.
    Proposals {
        #[command(subcommand)]
        command: ProposalsCommand,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "PARTFIELD_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Allowed CORS origin; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Args)]
struct PairOpts {
    #[arg(long)]
    source_mesh: PathBuf,
    #[arg(long)]
    source_features: PathBuf,
    #[arg(long)]
    target_mesh: PathBuf,
    #[arg(long)]
    target_features: PathBuf,
}

impl From<PairOpts> for PairArgs {
    fn from(p: PairOpts) -> PairArgs {
        PairArgs {
            source_mesh: p.source_mesh,
            source_features: p.source_features,
            target_mesh: p.target_mesh,
            target_features: p.target_features,
        }
    }
}

#[derive(Subcommand)]
enum ProposalsCommand {
    /// Lift 2D masks to per-point proposals.
    Project {
        mesh: PathBuf,
        /// Mask manifest (JSON).
        #[arg(long)]
        masks: PathBuf,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            mesh,
            proposals,
            config,
            out,
            report,
            iterations,
            seed,
            timing,
        } => commands::fit(&FitArgs {
            mesh,
            proposals,
            config,
            out,
            report,
            iterations,
            seed,
            timing,
        }),
        Command::Segment {
            mesh,
            features,
            k,
            scales,
            out,
        } => {
            let scales = match (k, scales) {
                (Some(k), None) => Scales::K(k),
                (None, Some(n)) => Scales::Sweep(n),
                _ => bail!("pass exactly one of --k and --scales"),
            };
            commands::segment(&mesh, &features, scales, out.as_deref())
        }
        Command::Eval {
            gt,
            pred,
            batch,
            category,
            out,
        } => match (batch, gt, pred) {
            (Some(list), _, _) => commands::eval_batch(&list, out.as_deref()),
            (None, Some(gt), Some(pred)) => commands::eval(&gt, &pred, category, out.as_deref()),
            _ => bail!("pass GT and PRED, or --batch"),
        },
        Command::Hierarchy { mesh, features, out } => commands::hierarchy(&mesh, &features, out.as_deref()),
        Command::Coseg { pair, source_seg, out } => commands::coseg(&pair.into(), &source_seg, out.as_deref()),
        Command::Correspond { pair, out } => commands::correspond(&pair.into(), out.as_deref()),
        Command::Proposals {
            command:
                ProposalsCommand::Project {
                    mesh,
                    masks,
                    points,
                    seed,
                    out,
                },
        } => commands::project(&mesh, &masks, points, seed, out.as_deref()),
        Command::Serve {
            host,
            port,
            data_dir,
            cors_origin,
        } => service::serve(&host, port, ServiceConfig { data_dir, cors_origin }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
