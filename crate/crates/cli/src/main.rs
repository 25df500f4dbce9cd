use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cavl_cli::*;

#[derive(Parser)]
#[command(name = "cavl", version, about = "Mirror-surface measurement inside a cube-shaped display")]
struct Cli {
    /// Run configuration (TOML); every omitted key takes its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory for all outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip pipeline stages whose outputs are up to date.
    #[arg(long, global = true)]
    resume: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the pattern stack and the ground-truth bundle of a scene.
    Simulate {
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Decode an image stack into a light map.
    Decode {
        /// Directory holding manifest.toml and the frames [default: OUT/stack]
        #[arg(long)]
        stack: Option<PathBuf>,
    },
    /// Estimate the camera pose and the specimen mask from a light map.
    Calibrate {
        #[arg(long)]
        light_map: Option<PathBuf>,
        /// Scene file supplying intrinsics and cube size.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Integrate the measured normal field into a mesh.
    Reconstruct {
        #[arg(long)]
        light_map: Option<PathBuf>,
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Anchor point on the surface, "x,y,z" in mm.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Compare a reconstruction with ground truth and compute coverage.
    Evaluate {
        #[arg(long)]
        recon: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        light_map: Option<PathBuf>,
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Run every stage in sequence.
    Pipeline,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let root = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("run"));
    let out = Layout::new(root);
    let or = |p: Option<PathBuf>, default: PathBuf| p.unwrap_or(default);
    let set_scene = |cfg: &mut RunConfig, scene: Option<PathBuf>| -> anyhow::Result<()> {
        if scene.is_some() {
            cfg.scene = scene;
            cfg.check()?;
        }
        Ok(())
    };
    match cli.command {
        Command::Simulate { scene } => {
            set_scene(&mut cfg, scene)?;
            cmd_simulate(&cfg, &out)
        }
        Command::Decode { stack } => cmd_decode(&cfg, &or(stack, out.stack()), &out),
        Command::Calibrate { light_map, scene } => {
            set_scene(&mut cfg, scene)?;
            cmd_calibrate(&cfg, &or(light_map, out.file(LIGHT_MAP)), &out)
        }
        Command::Reconstruct { light_map, pose, mask, x0, scene } => {
            set_scene(&mut cfg, scene)?;
            if let Some(x0) = x0 {
                let p = parse_point(&x0).map_err(|e| Failure::Config(format!("--x0: {e}")))?;
                cfg.x0 = Some(p.into());
            }
            let x0 = resolve_anchor(&cfg, &out)?;
            let (lm, pose, mask) = (or(light_map, out.file(LIGHT_MAP)), or(pose, out.file(POSE)), or(mask, out.file(MASK_FINAL)));
            let inputs = ReconstructInputs {
                light_map: &lm,
                pose: &pose,
                mask: &mask,
                x0,
            };
            cmd_reconstruct(&cfg, &inputs, &out)
        }
        Command::Evaluate { recon, truth, light_map, pose, mask, scene } => {
            set_scene(&mut cfg, scene)?;
            let default_mask = out.file(MASK_FINAL);
            let mask = mask.or_else(|| default_mask.is_file().then_some(default_mask));
            let (recon, truth, lm, pose) = (
                or(recon, out.file(RECON)),
                or(truth, out.truth(SPECIMEN)),
                or(light_map, out.file(LIGHT_MAP)),
                or(pose, out.file(POSE)),
            );
            let inputs = EvaluateInputs {
                recon: &recon,
                truth: &truth,
                light_map: &lm,
                pose: &pose,
                mask: mask.as_deref(),
            };
            cmd_evaluate(&cfg, &inputs, &out)
        }
        Command::Pipeline => cmd_pipeline(&cfg, &out, cli.resume),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
