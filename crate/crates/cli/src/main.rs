use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use panostitch::config::MatcherKind;
use panostitch::debug::write_debug;
use panostitch::geometry::Rect;
use panostitch::matching::{load_match_file, save_match_file};
use panostitch::pipeline::load_rgb;
use panostitch::synth::{generate_pair, ParallaxLayer, SceneSpec};
use panostitch::{run_pipeline, Error, PipelineConfig, PipelineOutput, Stage, StageError};

#[derive(Parser)]
#[command(name = "panostitch", version, about = "Parallax-tolerant two-image stitching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stitch a source image onto a target image.
    Stitch(StitchArgs),
    /// Run the pipeline and print the overlap report without writing a panorama.
    Eval(PipelineArgs),
    /// Render a synthetic pair with ground-truth matches.
    Synth(SynthArgs),
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Match file to use instead of the built-in matcher.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// RANSAC seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StitchArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Panorama PNG; the report is written next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_name = "DIR")]
    dump_debug: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Identity,
    Translation,
    Rigid,
    Parallax,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for source.png, target.png, matches.json and scene.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "parallax")]
    preset: Preset,
    /// Scene description (JSON); overrides the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the full default configuration, or write it to a file.
    Init {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn io<T>(r: panostitch::Result<T>) -> Result<T, StageError> {
    r.map_err(|source| StageError { stage: Stage::Io, source })
}

fn config_err<T>(r: panostitch::Result<T>) -> Result<T, StageError> {
    r.map_err(|source| StageError { stage: Stage::Config, source })
}

fn write_text(path: &Path, text: &str) -> Result<(), StageError> {
    io(std::fs::write(path, text).map_err(Error::from))
}

fn run_from_args(args: &PipelineArgs) -> Result<PipelineOutput, StageError> {
    let mut cfg = match &args.config {
        Some(p) => config_err(PipelineConfig::load(p))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.ransac.rng_seed = seed;
    }
    let source = io(load_rgb(&args.source))?;
    let target = io(load_rgb(&args.target))?;
    let matches = match &args.matches {
        Some(p) => {
            cfg.matcher.kind = MatcherKind::File;
            Some(io(load_match_file(p))?)
        }
        None => None,
    };
    run_pipeline(&source, &target, matches, &cfg)
}

fn stitch(args: &StitchArgs) -> Result<(), StageError> {
    let out = run_from_args(&args.pipeline)?;
    io(out.panorama.save(&args.out).map_err(Error::from))?;
    let report = out.report.to_json();
    write_text(&args.out.with_extension("json"), &report)?;
    if let Some(dir) = &args.dump_debug {
        io(write_debug(dir, &out))?;
    }
    println!("{report}");
    Ok(())
}

fn eval(args: &PipelineArgs) -> Result<(), StageError> {
    let out = run_from_args(args)?;
    println!("{}", out.report.to_json());
    Ok(())
}

fn preset_spec(preset: Preset, seed: u64) -> SceneSpec {
    match preset {
        Preset::Identity => SceneSpec::identity(seed),
        Preset::Translation => SceneSpec::translation(120.0, 0.0, seed),
        Preset::Rigid => SceneSpec::rigid(0.03, 110.0, 6.0, seed),
        Preset::Parallax => {
            let mut s = SceneSpec::translation(120.0, 0.0, seed);
            s.parallax_layers.push(ParallaxLayer { depth_shift: 15.0, region: Rect::new(560.0, 220.0, 720.0, 520.0) });
            s
        }
    }
}

fn synth(args: &SynthArgs) -> Result<(), StageError> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = io(std::fs::read_to_string(p).map_err(Error::from))?;
            config_err(serde_json::from_str::<SceneSpec>(&text).map_err(|e| Error::InvalidSpec(e.to_string())))?
        }
        None => preset_spec(args.preset, args.seed),
    };
    if let Some(n) = args.noise {
        spec.noise_sigma = n;
    }
    let pair = config_err(generate_pair(&spec))?;
    io(std::fs::create_dir_all(&args.out).map_err(Error::from))?;
    io(pair.source.save(args.out.join("source.png")).map_err(Error::from))?;
    io(pair.target.save(args.out.join("target.png")).map_err(Error::from))?;
    io(save_match_file(&pair.ground_truth, args.out.join("matches.json")))?;
    write_text(&args.out.join("scene.json"), &serde_json::to_string_pretty(&spec).expect("spec serializes"))?;
    println!("wrote {} ground-truth matches to {}", pair.ground_truth.len(), args.out.display());
    Ok(())
}

fn config_init(out: Option<&Path>) -> Result<(), StageError> {
    let text = PipelineConfig::default().to_json();
    match out {
        Some(p) => write_text(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Stitch(a) => stitch(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Config { action: ConfigAction::Init { out } } => config_init(out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
