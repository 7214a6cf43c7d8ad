use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use endorecon::config::{parse_mode, parse_scheme, GroundTruth, PipelineConfig};
use endorecon::core::synth::SyntheticScene;
use endorecon::pipeline::{execute, Command};
use endorecon::{synth_io, Result};

#[derive(Parser)]
#[command(name = "endorecon", version, about = "Point-cloud reconstruction from endoscopic depth maps")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every stage.
    Run(StageArgs),
    /// Select and stage frames.
    Select(StageArgs),
    /// Import, convert and mask predicted depth.
    DepthImport(StageArgs),
    /// Register frames and fuse the map.
    Reconstruct(StageArgs),
    /// Compare imported depth against ground truth.
    Evaluate(StageArgs),
    /// Write per-frame registration error heatmaps.
    Heatmap(StageArgs),
    /// Render a synthetic dataset with known poses.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides DATA_PATH.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides OUTPUT_DIR (the staging directory follows unless STAGING_DIR is set).
    #[arg(long)]
    output: Option<PathBuf>,
    /// neighbor or global.
    #[arg(long)]
    mode: Option<String>,
    /// Threshold scheme id, with default parameters.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    pixel_stride: Option<usize>,
    /// Ground-truth directory of `<stem>_depth.png` files.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    gt_unit_scale: Option<f64>,
    #[arg(long)]
    scale_align: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    #[arg(long, default_value_t = 0)]
    border: usize,
    #[arg(long)]
    out: PathBuf,
}

fn apply_overrides(args: &StageArgs, config: &mut PipelineConfig) -> Result<()> {
    if let Some(d) = &args.data {
        config.data_path = d.clone();
    }
    if let Some(o) = &args.output {
        if config.staging_dir == config.output_dir.join("staging") {
            config.staging_dir = o.join("staging");
        }
        config.output_dir = o.clone();
    }
    if let Some(m) = &args.mode {
        config.icp.mode = parse_mode(m)?;
    }
    if let Some(s) = &args.scheme {
        config.icp.scheme = parse_scheme(&toml::Value::String(s.clone()))?;
    }
    if let Some(n) = args.max_iterations {
        if n == 0 {
            return Err(endorecon::Error::Config("--max-iterations must be >= 1".into()));
        }
        config.icp.max_iterations = n;
    }
    if let Some(n) = args.pixel_stride {
        config.pixel_stride = n.max(1);
    }
    if let Some(g) = &args.gt {
        config.ground_truth = Some(GroundTruth {
            path: g.clone(),
            unit_scale: 1.0,
            scale_align: false,
        });
    }
    if let Some(gt) = config.ground_truth.as_mut() {
        if let Some(s) = args.gt_unit_scale {
            gt.unit_scale = s;
        }
        gt.scale_align |= args.scale_align;
    }
    Ok(())
}

fn stage(args: StageArgs, command: Command) -> Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    apply_overrides(&args, &mut config)?;
    let summary = execute(&config, Some(&args.config), command)?;
    eprintln!(
        "{}: {} frame(s) selected, {} file(s) written, manifest {}",
        command.name(),
        summary.selected.len(),
        summary.outputs.len(),
        summary.manifest.display()
    );
    if summary.map_points > 0 {
        eprintln!("map: {} points", summary.map_points);
    }
    if let Some(m) = &summary.metrics {
        eprintln!(
            "mean rmse {:.6} mae {:.6} delta {:.4} ssim {:.4}; spikes {:?}",
            m.means.rmse, m.means.mae, m.means.delta_accuracy, m.means.ssim, m.spikes
        );
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut scene = SyntheticScene::sliding(args.seed, args.frames, args.width, args.height);
    scene.noise_sigma = args.noise;
    scene.outlier_fraction = args.outliers;
    scene.border_px = args.border;
    let written = synth_io::write_dataset(&scene, &args.out)?;
    eprintln!("synth: wrote {} file(s) to {}", written.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => stage(a, Command::Run),
        Cmd::Select(a) => stage(a, Command::Select),
        Cmd::DepthImport(a) => stage(a, Command::DepthImport),
        Cmd::Reconstruct(a) => stage(a, Command::Reconstruct),
        Cmd::Evaluate(a) => stage(a, Command::Evaluate),
        Cmd::Heatmap(a) => stage(a, Command::Heatmap),
        Cmd::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
