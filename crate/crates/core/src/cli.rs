//! Command-line front end: `synth`, `edit`, `mask` and `metrics`.
//!
//! Exit codes: 0 success, 2 bad input or configuration, 3 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::engine::diagnostics_csv;
use crate::error::{Error, Result};
use crate::io::{fdt, pnm, write_atomic};
use crate::metrics::{FlowField, MetricReport, WarpPairing};
use crate::rng::SeedSpec;
use crate::safc::{build_mask, AttentionMap, MaskConfig, MaskVolume};
use crate::scenes::{render_scene, SceneSpec};
use crate::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "flowdirector", version, about = "Inversion-free video editing on synthetic scenes")]
pub struct Cli {
    /// Master seed (overrides the config's `master_seed` for `edit`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config's `output` for `edit`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene manifest to video, flow, masks and previews.
    Synth {
        manifest: PathBuf,
    },
    /// Run an editing job from a JSON config.
    Edit {
        config: PathBuf,
    },
    /// Build a mask from two attention tensors.
    Mask(MaskArgs),
    /// Score an edited video against its source.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long = "src")]
    pub a_src: PathBuf,
    #[arg(long = "tar")]
    pub a_tar: PathBuf,
    #[arg(long, default_value_t = MaskConfig::default().kernel)]
    pub kernel: usize,
    #[arg(long, default_value_t = MaskConfig::default().delta)]
    pub delta: f64,
    /// Keep the binary union instead of feathering its edges.
    #[arg(long)]
    pub no_soften: bool,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum PairingArg {
    #[default]
    EditedSuccessor,
    SourceWarped,
}

impl From<PairingArg> for WarpPairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::EditedSuccessor => WarpPairing::EditedSuccessor,
            PairingArg::SourceWarped => WarpPairing::SourceWarped,
        }
    }
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub edited: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub flow: PathBuf,
    /// Edit region mask (FDT1, C=1); everything outside it is background.
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PairingArg::EditedSuccessor)]
    pub pairing: PairingArg,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("FD_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("FD_THREADS must be a positive integer, got '{value}'")))?;
    // A pool may already exist when called in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    let out = cli.out.clone();
    match &cli.command {
        Command::Synth { manifest } => {
            let out = out.unwrap_or_else(|| PathBuf::from("out"));
            cmd_synth(manifest, &out, cli.seed.unwrap_or(0))?;
            progress(cli, format_args!("scene written to {}", out.display()));
        }
        Command::Edit { config } => {
            let mut cfg = RunConfig::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            cmd_edit(&cfg, &out)?;
            progress(cli, format_args!("edit written to {}", out.display()));
        }
        Command::Mask(args) => {
            let out = out.unwrap_or_else(|| PathBuf::from("out"));
            let cfg = MaskConfig {
                kernel: args.kernel,
                delta: args.delta,
                apply_softening: !args.no_soften,
            };
            cmd_mask(&args.a_src, &args.a_tar, &cfg, &out)?;
            progress(cli, format_args!("mask written to {}", out.display()));
        }
        Command::Metrics(args) => {
            let out = out.unwrap_or_else(|| PathBuf::from("out"));
            let report = cmd_metrics(
                &args.edited,
                &args.source,
                &args.flow,
                args.region.as_deref(),
                args.pairing.into(),
                &out,
            )?;
            progress(cli, format_args!("{}", report.to_csv().trim_end()));
        }
    }
    Ok(())
}

fn progress(cli: &Cli, msg: std::fmt::Arguments<'_>) {
    if !cli.quiet {
        eprintln!("{msg}");
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => Error::Io(e),
    })
}

fn write_ppm_frames(dir: &Path, video: &crate::tensor::VideoTensor) -> Result<()> {
    for t in 0..video.dims().frames {
        write_atomic(&dir.join(format!("frame_{t:03}.ppm")), &pnm::encode_ppm(video, t)?)?;
    }
    Ok(())
}

fn write_pgm_frames(dir: &Path, prefix: &str, video: &crate::tensor::VideoTensor) -> Result<()> {
    for t in 0..video.dims().frames {
        write_atomic(&dir.join(format!("{prefix}_{t:03}.pgm")), &pnm::encode_pgm(video, t, 0)?)?;
    }
    Ok(())
}

/// Writes `video.fdt`, `flow.fdt`, `masks/object_NN.fdt`, `frames/*.ppm` and
/// the normalized `manifest.json`.
pub fn cmd_synth(manifest: &Path, out: &Path, seed: u64) -> Result<()> {
    let spec = SceneSpec::from_json(&read_text(manifest)?)?;
    let scene = render_scene(&spec, SeedSpec::new(seed, 0, 0))?;
    std::fs::create_dir_all(out.join("frames"))?;
    std::fs::create_dir_all(out.join("masks"))?;
    fdt::write(&out.join("video.fdt"), &scene.video)?;
    fdt::write(&out.join("flow.fdt"), scene.flow.tensor())?;
    for (i, m) in scene.object_masks.iter().enumerate() {
        fdt::write(&out.join("masks").join(format!("object_{i:02}.fdt")), &m.to_tensor())?;
    }
    write_ppm_frames(&out.join("frames"), &scene.video)?;
    write_atomic(&out.join("manifest.json"), spec.to_json()?.as_bytes())
}

/// Writes `edited.fdt`, `frames/*.ppm`, `diagnostics.csv` and
/// `resolved-config.json`.
pub fn cmd_edit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let outcome = cfg.execute()?;
    std::fs::create_dir_all(out.join("frames"))?;
    fdt::write(&out.join("edited.fdt"), &outcome.output)?;
    write_ppm_frames(&out.join("frames"), &outcome.output)?;
    write_atomic(&out.join("diagnostics.csv"), diagnostics_csv(&outcome.diagnostics).as_bytes())?;
    write_atomic(&out.join("resolved-config.json"), cfg.resolved().to_json()?.as_bytes())
}

/// Writes `mask.fdt` and `frames/mask_*.pgm`.
pub fn cmd_mask(a_src: &Path, a_tar: &Path, cfg: &MaskConfig, out: &Path) -> Result<MaskVolume> {
    cfg.validate()?;
    let a_src = AttentionMap::from_tensor(&fdt::read(a_src)?)?;
    let a_tar = AttentionMap::from_tensor(&fdt::read(a_tar)?)?;
    let mask = build_mask(&a_src, &a_tar, cfg)?;
    let tensor = mask.to_tensor();
    std::fs::create_dir_all(out.join("frames"))?;
    fdt::write(&out.join("mask.fdt"), &tensor)?;
    write_pgm_frames(&out.join("frames"), "mask", &tensor)?;
    Ok(mask)
}

/// Writes `report.json` and `report.csv`.
pub fn cmd_metrics(
    edited: &Path,
    source: &Path,
    flow: &Path,
    region: Option<&Path>,
    pairing: WarpPairing,
    out: &Path,
) -> Result<MetricReport> {
    let edited = fdt::read(edited)?;
    let source = fdt::read(source)?;
    let flow = FlowField::new(fdt::read(flow)?)?;
    let region = region
        .map(|p| fdt::read(p).and_then(|t| MaskVolume::from_tensor(&t)))
        .transpose()?;
    let report = MetricReport::compute(&edited, &source, &flow, region.as_ref(), pairing)?;
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join("report.json"), report.to_json(pairing)?.as_bytes())?;
    write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}
