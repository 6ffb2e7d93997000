use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sarsd::io::{self, AnyStack, Stretch};
use sarsd::pipeline::{self, PipelineConfig};
use sarsd::synth::{self, SceneSpec};
use sarsd::{ComplexVignette, ProcessedStack, Real, SdError};

const EXIT_PARTIAL: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Sub-aperture decomposition of SLC SAR vignettes.
#[derive(Parser)]
#[command(name = "sarsd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose every vignette in a directory into a multilooked stack.
    Decompose(DecomposeArgs),
    /// Generate a synthetic vignette from a scene spec.
    Synth(SynthArgs),
    /// Write one PNG per stack channel.
    Render(RenderArgs),
    /// Time the pipeline on a synthetic speckle vignette.
    Bench(BenchArgs),
    /// Print sidecar metadata.
    Inspect(InspectArgs),
}

/// Config file plus the flags that override it.
#[derive(Args)]
struct ConfigArgs {
    /// JSON pipeline config ({"sd": {...}, "parallelism": N}).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads, 0 = one per CPU.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Number of sub-apertures (sd.n_subapertures).
    #[arg(long)]
    subapertures: Option<usize>,
    /// Prefix the multilooked original as channel "O".
    #[arg(long)]
    include_original: Option<bool>,
    /// Override any config field by dotted name, e.g. sd.hamming_coefficient=0.8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, SdError> {
        let mut overrides = Vec::new();
        for s in &self.overrides {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| SdError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            overrides.push((k.to_string(), v.to_string()));
        }
        if let Some(p) = self.parallelism {
            overrides.push(("parallelism".into(), p.to_string()));
        }
        if let Some(n) = self.subapertures {
            overrides.push(("sd.n_subapertures".into(), n.to_string()));
        }
        if let Some(b) = self.include_original {
            overrides.push(("sd.include_original_channel".into(), b.to_string()));
        }
        pipeline::load_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// Directory of vignettes (<id>.json sidecar + <id>.bin or <id>.npy).
    #[arg(long)]
    input: PathBuf,
    /// Directory for stacks and report.json.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec JSON. Without it, a speckle scene of --size is generated.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output payload path; the sidecar goes next to it as .json.
    #[arg(long)]
    output: PathBuf,
    /// Overrides rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Speckle scene size as N_AZxN_RG, used without --config.
    #[arg(long, default_value = "512x512")]
    size: String,
    /// Write c128 instead of c64.
    #[arg(long)]
    double: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Stack payload (.bin); the sidecar is found next to it.
    #[arg(long)]
    input: PathBuf,
    /// Directory for <label>.png files.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "log")]
    stretch: Stretch,
}

#[derive(Args)]
struct BenchArgs {
    /// Vignette size as N_AZxN_RG.
    #[arg(long, default_value = "4096x4096")]
    size: String,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct InspectArgs {
    /// Sidecar or payload path.
    path: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), SdError> {
    let bad = || SdError::Config(format!("size must look like 4096x4096, got {s:?}"));
    let (a, r) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
}

fn sidecar_for(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        io::sidecar_path_for(path)
    }
}

fn decompose(args: &DecomposeArgs) -> Result<u8, SdError> {
    let cfg = args.config.load()?;
    if !args.input.is_dir() {
        return Err(SdError::Config(format!("{} is not a directory", args.input.display())));
    }
    let report = pipeline::run_batch(&args.input, &args.output, &cfg)?;
    for f in &report.failures {
        eprintln!("failed {} at {}: {}", f.input_id, f.stage, f.message);
    }
    eprintln!(
        "{} processed, {} failed; report in {}",
        report.entries.len(),
        report.failures.len(),
        args.output.join(pipeline::REPORT_FILE).display()
    );
    Ok(if report.is_success() { 0 } else { EXIT_PARTIAL })
}

fn write_scene<T: Real>(spec: &SceneSpec, out: &Path) -> Result<(), SdError> {
    let v: ComplexVignette<T> = synth::generate(spec)?;
    io::write_vignette_with(&v, out, io::sidecar_path_for(out), Some(synth::RNG_ALGORITHM.into()))
}

fn synth_cmd(args: &SynthArgs) -> Result<u8, SdError> {
    let mut spec = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| SdError::Config(format!("{}: {e}", p.display())))?;
            let doc = serde_json::from_str(&text).map_err(|e| SdError::Config(format!("{}: {e}", p.display())))?;
            pipeline::from_json_value::<SceneSpec>(doc)?
        }
        None => {
            let (n_az, n_rg) = parse_size(&args.size)?;
            SceneSpec::speckle(n_az, n_rg, 0)
        }
    };
    if let Some(seed) = args.seed {
        spec.rng_seed = seed;
    }
    spec.validate()?;
    if args.double {
        write_scene::<f64>(&spec, &args.output)?;
    } else {
        write_scene::<f32>(&spec, &args.output)?;
    }
    Ok(0)
}

fn render_channels<T: Real>(stack: &ProcessedStack<T>, out: &Path, stretch: Stretch) -> Result<(), SdError> {
    for (label, ch) in stack.channel_labels().iter().zip(stack.channels()) {
        let path = out.join(format!("{label}.png"));
        io::render_png(ch, &path, stretch)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn render(args: &RenderArgs) -> Result<u8, SdError> {
    let stack = io::read_stack_any(&args.input, sidecar_for(&args.input))?;
    std::fs::create_dir_all(&args.output).map_err(|e| SdError::Io {
        path: args.output.clone(),
        source: e,
    })?;
    match &stack {
        AnyStack::F32(s) => render_channels(s, &args.output, args.stretch)?,
        AnyStack::F64(s) => render_channels(s, &args.output, args.stretch)?,
    }
    Ok(0)
}

fn bench(args: &BenchArgs) -> Result<u8, SdError> {
    let cfg = args.config.load()?;
    let (n_az, n_rg) = parse_size(&args.size)?;
    let report = pipeline::bench(n_az, n_rg, args.repeats, &cfg)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.summary());
    }
    Ok(0)
}

fn inspect(args: &InspectArgs) -> Result<u8, SdError> {
    let meta = io::read_sidecar(sidecar_for(&args.path))?;
    println!("{}", serde_json::to_string_pretty(&meta).expect("sidecar serializes"));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decompose(a) => decompose(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Render(a) => render(a),
        Command::Bench(a) => bench(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let usage = matches!(e, SdError::Config(_) | SdError::Validation(_));
            ExitCode::from(if usage { EXIT_USAGE } else { EXIT_PARTIAL })
        }
    }
}
