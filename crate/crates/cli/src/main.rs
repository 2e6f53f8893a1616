use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use histmap_core::pipeline::{frame_eval, global_eval, simulate, track_scene};
use histmap_core::render::render;
use histmap_core::scene::write_lifecycle_log;
use histmap_core::{RunConfig, Scene, TracksFile, TrajectoryKind};

/// Instance history-map tracking and global HD-map evaluation on scene files.
#[derive(Parser, Debug)]
#[command(name = "histmap", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration JSON (sections: scenario, perturbation, tracker, eval).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for scenario generation and perturbation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for `render`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene with ground truth and perturbed predictions.
    Simulate(SimulateArgs),
    /// Track a scene's predictions and export tracks plus a lifecycle log.
    Track(TrackArgs),
    /// Evaluate predictions per frame or globally.
    Eval(EvalArgs),
    /// Render global rasters, an SVG overview and per-track history maps.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Trajectory {
    Straight,
    Turn,
    Loop,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    trajectory: Option<Trajectory>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    score_noise: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    fp_rate: Option<f64>,
    #[arg(long)]
    id_switch: Option<f64>,
}

#[derive(Args, Debug)]
struct TrackArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Lifecycle log path (default: next to --out with a .lifecycle.jsonl suffix).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    tau_det: Option<f64>,
    #[arg(long)]
    tau_track: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    patience: Option<u32>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Frame,
    Global,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Tracks file from `track`; required in global mode.
    #[arg(long)]
    tracks: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Frame)]
    mode: Mode,
    /// Also write per-prediction match traces (global mode) next to --out.
    #[arg(long)]
    dump_matches: bool,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    tracks: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    cfg.tracker.validate()?;
    cfg.eval.validate()?;
    cfg.perturbation.validate()?;
    Ok(cfg)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_scene(path: &Path) -> Result<Scene> {
    Scene::read(path).with_context(|| format!("reading scene {}", path.display()))
}

fn read_tracks(path: &Path) -> Result<TracksFile> {
    TracksFile::read(path).with_context(|| format!("reading tracks {}", path.display()))
}

fn cmd_simulate(common: &Common, args: &SimulateArgs) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    let out = common.out.as_ref().context("simulate needs --out")?;
    if let Some(t) = args.trajectory {
        cfg.scenario.trajectory = match t {
            Trajectory::Straight => TrajectoryKind::Straight,
            Trajectory::Turn => TrajectoryKind::Turn,
            Trajectory::Loop => TrajectoryKind::Loop,
        };
    }
    if let Some(n) = args.frames {
        cfg.scenario.frames = n;
    }
    let p = &mut cfg.perturbation;
    for (slot, value) in [
        (&mut p.jitter, args.jitter),
        (&mut p.score_noise, args.score_noise),
        (&mut p.dropout, args.dropout),
        (&mut p.fp_rate, args.fp_rate),
        (&mut p.id_switch, args.id_switch),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    let scene = simulate(&cfg.scenario, &cfg.perturbation, common.seed)?;
    let mut w = create(out)?;
    scene.write(&mut w)?;
    w.flush()?;
    eprintln!("wrote {} frames to {}", scene.frames.len(), out.display());
    Ok(())
}

fn cmd_track(common: &Common, args: &TrackArgs) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    let out = common.out.as_ref().context("track needs --out")?;
    let t = &mut cfg.tracker;
    if let Some(v) = args.tau_det {
        t.tau_det = v;
    }
    if let Some(v) = args.tau_track {
        t.tau_track = v;
    }
    if let Some(v) = args.lambda {
        t.lambda = v;
    }
    if let Some(v) = args.patience {
        t.patience = v;
    }
    let scene = read_scene(&args.scene)?;
    let run = track_scene(&scene, &cfg.tracker, false)?;
    run.tracks_file()
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    let log = args.log.clone().unwrap_or_else(|| with_suffix(out, ".lifecycle.jsonl"));
    let mut w = create(&log)?;
    write_lifecycle_log(&mut w, &run.config, &run.steps)?;
    w.flush()?;
    let removed: usize = run.steps.iter().map(|s| s.removed.len()).sum();
    eprintln!(
        "{} tracks ({} removals) -> {}, log {}",
        run.tracks.len(),
        removed,
        out.display(),
        log.display()
    );
    Ok(())
}

fn cmd_eval(common: &Common, args: &EvalArgs) -> Result<()> {
    let cfg = load_config(common.config.as_deref())?;
    let scene = read_scene(&args.scene)?;
    let tracks = args.tracks.as_deref().map(read_tracks).transpose()?;
    let (report, traces) = match args.mode {
        Mode::Frame => {
            if args.dump_matches {
                bail!("--dump-matches is only available with --mode global");
            }
            (
                frame_eval(&scene, tracks.as_ref().map(|t| t.tracks.as_slice()), &cfg.eval)?,
                Vec::new(),
            )
        }
        Mode::Global => {
            let tracks = tracks.as_ref().context("--mode global needs --tracks")?;
            global_eval(&scene, &tracks.tracks, &cfg.eval)?
        }
    };
    println!("{report}");
    if let Some(out) = &common.out {
        let mut w = create(out)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
    }
    if args.dump_matches {
        let out = common.out.as_ref().context("--dump-matches needs --out")?;
        let path = with_suffix(out, ".matches.jsonl");
        let mut w = create(&path)?;
        for t in &traces {
            serde_json::to_writer(&mut w, t)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_render(common: &Common, args: &RenderArgs) -> Result<()> {
    let cfg = load_config(common.config.as_deref())?;
    let out = common.out.as_ref().context("render needs --out <dir>")?;
    let scene = read_scene(&args.scene)?;
    let tracks = args.tracks.as_deref().map(read_tracks).transpose()?;
    let has_preds = !scene.frames.is_empty() && scene.frames.iter().all(|f| f.pred.is_some());
    let histories = if has_preds {
        track_scene(&scene, &cfg.tracker, true)?.histories
    } else {
        Default::default()
    };
    let summary = render(
        &scene,
        tracks.as_ref().map(|t| t.tracks.as_slice()),
        &histories,
        out,
        &cfg.eval,
    )?;
    eprintln!(
        "rendered {} files on a {}x{} canvas into {}",
        summary.files.len(),
        summary.canvas.0,
        summary.canvas.1,
        out.display()
    );
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HISTMAP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("HISTMAP_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cli.common, a),
        Command::Track(a) => cmd_track(&cli.common, a),
        Command::Eval(a) => cmd_eval(&cli.common, a),
        Command::Render(a) => cmd_render(&cli.common, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
