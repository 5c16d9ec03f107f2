use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use gtflow::eval::{evaluate, EvalOptions, DEFAULT_HELDOUT_VIEWS};
use gtflow::io::{read_pfm, write_pfm, write_ppm, KeyValues};
use gtflow::optim::{reconstruct, ReconConfig, ReconScene, ReconState, Variant};
use gtflow::render::{render, Camera, LightConfig};
use gtflow::sim::{generate_scene, PlumeScenario, Rig, SceneBundle};
use gtflow::{Background, Dims, Error, Image};

const STATE_DIR: &str = "state";
const LOSS_CSV: &str = "loss.csv";
const LIGHTS: &str = "lights.txt";
const BACKGROUND_PFM: &str = "background.pfm";

#[derive(Parser, Debug)]
#[command(name = "gtflow", version, about = "Smoke reconstruction with global transport")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "GT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a plume and render it into a scene bundle.
    Synth(SynthArgs),
    /// Reconstruct density, inflow and velocity from a scene bundle.
    Reconstruct(ReconArgs),
    /// Render a checkpoint from arbitrary cameras.
    Render(RenderArgs),
    /// Score a checkpoint against a scene bundle.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Grid resolution per axis.
    #[arg(long, default_value_t = 32)]
    res: usize,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long, default_value_t = 5)]
    views: usize,
    /// Camera arc in degrees.
    #[arg(long, default_value_t = 120.0)]
    arc: f64,
    #[arg(long, default_value_t = 10.0)]
    elevation: f64,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 32)]
    image_res: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// INI file with [weights], [schedule], [render] and [disc] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `section.key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ReconConfig, Error> {
        let mut cfg = ReconConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        for a in &self.set {
            cfg.set_assignment(a)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct ReconArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "full")]
    variant: Variant,
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory of PFM images used as the discriminator's real samples.
    #[arg(long)]
    refs: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Output directory of `reconstruct`, or its state directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Camera file; repeatable.
    #[arg(long = "camera")]
    cameras: Vec<PathBuf>,
    /// Scene bundle whose cameras are used when no camera file is given.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Frame index; all frames when omitted.
    #[arg(long)]
    frame: Option<usize>,
    /// Constant background color, e.g. "0.1 0.1 0.1".
    #[arg(long, conflicts_with = "background_image")]
    background: Option<String>,
    #[arg(long)]
    background_image: Option<PathBuf>,
    /// Light file overriding the checkpoint's lights.
    #[arg(long)]
    lights: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write an 8-bit PPM next to every PFM.
    #[arg(long)]
    ppm: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Output directory of `reconstruct`, or its state directory.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HELDOUT_VIEWS)]
    heldout: usize,
    /// Seed for the held-out cameras.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
    /// Report path; defaults to `eval.csv` in the checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(Error::Io { .. } | Error::Format { .. }) => 2,
            Failure::Core(Error::NonFinite { .. }) => 3,
            Failure::Core(Error::InvalidInput(_) | Error::ShapeMismatch(_)) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Reconstruct(a) => recon(a),
        Command::Render(a) => render_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let scenario = PlumeScenario {
        dims: Dims::cube(a.res),
        frames: a.frames,
        seed: a.seed,
        ..PlumeScenario::default()
    };
    let rig = Rig {
        views: a.views,
        arc_deg: a.arc,
        elevation_deg: a.elevation,
        resolution: a.image_res,
        ..Rig::default()
    };
    let bundle = generate_scene(&scenario, &rig, &Default::default(), &a.out)?;
    info!("wrote {} target images to {}", bundle.target_count(), a.out.display());
    Ok(())
}

fn recon(a: ReconArgs) -> CliResult<()> {
    let mut cfg = a.config.load()?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.refs.is_some() && !a.variant.uses_discriminator() {
        return Err(Failure::Usage(format!("--refs needs a variant with a discriminator, not `{}`", a.variant)));
    }
    let bundle = SceneBundle::read(&a.scene)?;
    let mut scene = ReconScene::from_bundle(&bundle)?;
    if let Some(dir) = &a.refs {
        scene = scene.with_refs(read_image_dir(dir)?)?;
    }
    info!("{} variant on {} frames, {} views", a.variant, scene.frames(), scene.views.len());
    let (state, log) = reconstruct(&scene, &cfg, a.variant)?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let mut extra = cfg.to_key_values();
    extra.set("scene", a.scene.display());
    match &bundle.background {
        Background::Constant(c) => extra.set("background", c.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")),
        Background::Image(img) => {
            write_pfm(&a.out.join(BACKGROUND_PFM), img)?;
            extra.set("background", BACKGROUND_PFM);
        }
    }
    state.write(&a.out.join(STATE_DIR), &extra)?;
    bundle.lights.to_key_values().write(&a.out.join(LIGHTS))?;
    log.write_csv(&a.out.join(LOSS_CSV))?;
    info!("checkpoint written to {}", a.out.display());
    Ok(())
}

/// Accepts the output directory of `reconstruct` or its state directory.
fn checkpoint_dirs(path: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let nested = path.join(STATE_DIR);
    let (root, state) = if nested.is_dir() {
        (path.to_path_buf(), nested)
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    if !state.join("meta").is_file() {
        return Err(Failure::Core(Error::Io {
            path: state.join("meta"),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no checkpoint"),
        }));
    }
    Ok((root, state))
}

fn render_cmd(a: RenderArgs) -> CliResult<()> {
    let cfg = a.config.load()?;
    let (root, state_dir) = checkpoint_dirs(&a.checkpoint)?;
    let state = ReconState::read(&state_dir, cfg.scheme)?;
    let frames: Vec<usize> = match a.frame {
        Some(t) if t >= state.frames() => {
            return Err(Failure::Usage(format!("frame {t} out of range, checkpoint has {}", state.frames())));
        }
        Some(t) => vec![t],
        None => (0..state.frames()).collect(),
    };
    let bundle = a.scene.as_deref().map(SceneBundle::read).transpose()?;
    let cameras = if !a.cameras.is_empty() {
        a.cameras.iter().map(|p| Camera::read(p)).collect::<Result<Vec<_>, _>>()?
    } else if let Some(b) = &bundle {
        b.cameras.clone()
    } else {
        return Err(Failure::Usage("give --camera files or --scene".into()));
    };
    let lights = match (&a.lights, &bundle) {
        (Some(p), _) => LightConfig::from_key_values(&KeyValues::read(p)?, p)?,
        (None, Some(b)) => b.lights.clone(),
        (None, None) => {
            let p = root.join(LIGHTS);
            LightConfig::from_key_values(&KeyValues::read(&p)?, &p)?
        }
    };
    let background = match (&a.background, &a.background_image) {
        (Some(s), _) => Background::Constant(parse_color(s)?),
        (None, Some(p)) => Background::Image(read_pfm(p)?),
        (None, None) => checkpoint_background(&root, &state_dir)?,
    };
    let settings = cfg.render.with_background(background);
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    for &t in &frames {
        for (k, cam) in cameras.iter().enumerate() {
            let img = render(&state.density[t], &lights, cam, &settings)?;
            let stem = a.out.join(format!("frame_{t:04}_view_{k:02}"));
            write_pfm(&stem.with_extension("pfm"), &img)?;
            if a.ppm {
                write_ppm(&stem.with_extension("ppm"), &img)?;
            }
        }
    }
    info!("rendered {} images to {}", frames.len() * cameras.len(), a.out.display());
    Ok(())
}

fn checkpoint_background(root: &Path, state_dir: &Path) -> CliResult<Background> {
    let meta = state_dir.join("meta");
    let kv = KeyValues::read(&meta)?;
    Ok(match kv.get("background") {
        Some(BACKGROUND_PFM) => Background::Image(read_pfm(&root.join(BACKGROUND_PFM))?),
        Some(s) => Background::Constant(parse_color(s)?),
        None => Background::black(),
    })
}

fn eval_cmd(a: EvalArgs) -> CliResult<()> {
    let cfg = a.config.load()?;
    let (_, state_dir) = checkpoint_dirs(&a.checkpoint)?;
    let state = ReconState::read(&state_dir, cfg.scheme)?;
    let bundle = SceneBundle::read(&a.scene)?;
    if bundle.ground_truth.is_none() {
        log::warn!("scene has no ground truth; reporting image and transport metrics only");
    }
    let opts = EvalOptions {
        heldout: a.heldout,
        seed: a.seed,
        render: cfg.render.clone(),
        scheme: cfg.scheme,
    };
    let report = evaluate(&state, &bundle, &opts)?;
    let out = a.out.unwrap_or_else(|| state_dir.join("eval.csv"));
    report.write_csv(&out)?;
    for r in report.rows.iter().filter(|r| r.frame.is_none()) {
        info!("{} = {:.6e}", r.metric, r.value);
    }
    if let Some(m) = report.mean("transport_error") {
        info!("mean transport error {m:.6e}");
    }
    info!("report written to {}", out.display());
    Ok(())
}

fn read_image_dir(dir: &Path) -> CliResult<Vec<Image>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pfm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Usage(format!("no .pfm images in {}", dir.display())));
    }
    Ok(paths.iter().map(|p| read_pfm(p)).collect::<Result<Vec<_>, _>>()?)
}

fn parse_color(s: &str) -> CliResult<Vec<f64>> {
    let c: Vec<f64> = s
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("bad color `{s}`")))?;
    if c.is_empty() {
        return Err(Failure::Usage("empty color".into()));
    }
    Ok(c)
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
