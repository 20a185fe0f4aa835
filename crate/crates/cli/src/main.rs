//! `deftrack`: generate synthetic scenes, track sequences and compare runs.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use deftrack::constraints::{ObstacleSet, ProjectionStatus, TriangleMesh};
use deftrack::geometry::{DeformableTemplate, TemplateFile};
use deftrack::pipeline::{track_sequence, ConstraintToggles, SequenceRun};
use deftrack::prediction::ModelId;
use deftrack::registration::TrackerParams;
use deftrack::scenes::{read_sequence, write_sequence, SceneId};
use deftrack::TrackError;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "deftrack",
    version,
    about = "Rope and cloth tracking from masked point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene with ground truth to a sequence directory.
    Generate(GenerateArgs),
    /// Track a sequence and write the trajectory and per-frame metrics.
    Track(Box<TrackArgs>),
    /// Align several metrics files by frame and summarize each run.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// rope_drag, cloth_drape or rope_crossing
    scene: SceneId,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to the scene name.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scene's frame count.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct TrackArgs {
    #[arg(long)]
    sequence: PathBuf,
    /// Template JSON (`points`, `edges`) replacing the one in the sequence.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Obstacle meshes (.off or .obj) replacing the sequence's obstacles.
    #[arg(long, num_args = 1..)]
    obstacles: Vec<PathBuf>,
    /// none, no_motion or diminishing_rigidity
    #[arg(long, default_value = "diminishing_rigidity")]
    model: ModelId,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "s-check")]
    s_check: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long = "k-vis")]
    k_vis: Option<f64>,
    #[arg(long)]
    voxel: Option<f64>,
    /// Accepted for symmetry with `generate`; tracking is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    no_obstacle_constraints: bool,
    #[arg(long)]
    no_self_intersection: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// metrics.csv files written by `track`
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    /// Directory for `comparison.csv` and `summary.csv`; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error together with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        Failure {
            code: exit_code(&error),
            error,
        }
    }
}

fn exit_code(error: &anyhow::Error) -> u8 {
    for cause in error.chain() {
        if cause.is::<io::Error>() || cause.is::<csv::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<TrackError>() {
            return match e {
                TrackError::Io { .. }
                | TrackError::Sequence { .. }
                | TrackError::MeshParse { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => generate(args),
        Command::Track(args) => track(*args),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// the message above them.
fn describe(error: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in error.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let seq = args.scene.generate(args.seed, args.frames)?;
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(args.scene.as_str()));
    write_sequence(&seq, &out)?;
    println!(
        "wrote {} frames of {} to {}",
        seq.frames.len(),
        args.scene,
        out.display()
    );
    Ok(())
}

fn params_from(args: &TrackArgs) -> TrackerParams {
    let mut p = TrackerParams::default();
    let overrides = [
        (&mut p.zeta, args.zeta),
        (&mut p.alpha, args.alpha),
        (&mut p.gamma, args.gamma),
        (&mut p.beta, args.beta),
        (&mut p.lambda, args.lambda),
        (&mut p.s_check, args.s_check),
        (&mut p.s, args.s),
        (&mut p.k_vis, args.k_vis),
        (&mut p.voxel_size, args.voxel),
    ];
    for (slot, value) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    p
}

#[derive(Serialize, Deserialize)]
struct MetricsRow {
    frame: usize,
    mean_distance_error_m: Option<f64>,
    em_iters: usize,
    projection_status: String,
    wall_ms: f64,
}

fn track(args: TrackArgs) -> Result<(), Failure> {
    let params = params_from(&args);
    params.validate()?;
    let mut seq = read_sequence(&args.sequence)?;
    if let Some(path) = &args.template {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: TemplateFile = serde_json::from_str(&text).map_err(|e| Failure {
            code: 2,
            error: anyhow!("{}: {e}", path.display()),
        })?;
        seq.template = DeformableTemplate::from_file(&file)?;
        let nodes = seq.template.num_nodes();
        if seq
            .frames
            .iter()
            .any(|f| f.ground_truth.as_ref().is_some_and(|gt| gt.len() != nodes))
        {
            // ground truth no longer lines up node by node
            for f in &mut seq.frames {
                f.ground_truth = None;
            }
            log::warn!("template has {nodes} nodes; ground truth ignored");
        }
    }
    if !args.obstacles.is_empty() {
        let meshes = args
            .obstacles
            .iter()
            .map(|p| TriangleMesh::read(p))
            .collect::<deftrack::Result<Vec<_>>>()?;
        seq.obstacles = ObstacleSet::new(meshes);
    }
    let toggles = ConstraintToggles {
        obstacle: !args.no_obstacle_constraints,
        self_intersection: !args.no_self_intersection,
        ..ConstraintToggles::default()
    };

    let run = track_sequence(&seq, &params, args.model, toggles)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let traj_path = args.out.join("trajectory.jsonl");
    let file =
        File::create(&traj_path).with_context(|| format!("creating {}", traj_path.display()))?;
    run.write_trajectory(BufWriter::new(file))
        .with_context(|| format!("writing {}", traj_path.display()))?;
    if run.metrics.mean_distance_error.iter().any(Option::is_some) {
        write_metrics(&run, &args.out.join("metrics.csv"))?;
    }

    let frames = run.records.len();
    if let Some(Some(err)) = run.metrics.mean_distance_error.last() {
        println!("tracked {frames} frames; final mean distance error {err:.4} m");
    } else {
        println!("tracked {frames} frames");
    }
    let failed = run
        .records
        .iter()
        .filter(|r| r.diagnostics.projection_status == ProjectionStatus::Failed)
        .count();
    if frames > 0 && failed == frames {
        return Err(Failure {
            code: 3,
            error: anyhow!("projection failed on every frame"),
        });
    }
    Ok(())
}

fn write_metrics(run: &SequenceRun, path: &Path) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for (rec, err) in run.records.iter().zip(&run.metrics.mean_distance_error) {
        w.serialize(MetricsRow {
            frame: rec.frame,
            mean_distance_error_m: *err,
            em_iters: rec.diagnostics.em_iterations,
            projection_status: rec.diagnostics.projection_status.as_str().to_string(),
            wall_ms: rec.diagnostics.timings.total_ms,
        })?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

struct Series {
    label: String,
    errors: Vec<Option<f64>>,
}

fn read_metrics(path: &Path) -> anyhow::Result<Series> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<MetricsRow> = Vec::new();
    for row in r.deserialize() {
        rows.push(row.with_context(|| format!("parsing {}", path.display()))?);
    }
    rows.sort_by_key(|r| r.frame);
    for (i, row) in rows.iter().enumerate() {
        if row.frame != i {
            bail!(
                "{}: expected frame {i}, found {}",
                path.display(),
                row.frame
            );
        }
    }
    Ok(Series {
        label: run_label(path),
        errors: rows.into_iter().map(|r| r.mean_distance_error_m).collect(),
    })
}

/// Names a run after its directory when the file has the default name.
fn run_label(path: &Path) -> String {
    let parent = path.parent().and_then(|p| p.file_name());
    match (path.file_stem(), parent) {
        (Some(stem), Some(dir)) if stem == "metrics" => dir.to_string_lossy().into_owned(),
        (Some(stem), _) => stem.to_string_lossy().into_owned(),
        _ => path.display().to_string(),
    }
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let series = args
        .metrics
        .iter()
        .map(|p| read_metrics(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let frames = series[0].errors.len();
    if let Some((k, _)) = series
        .iter()
        .enumerate()
        .find(|(_, s)| s.errors.len() != frames)
    {
        return Err(Failure {
            code: 1,
            error: anyhow!(
                "frame counts differ: {} has {frames}, {} has {}",
                args.metrics[0].display(),
                args.metrics[k].display(),
                series[k].errors.len()
            ),
        });
    }

    let mut labels: Vec<String> = series.iter().map(|s| s.label.clone()).collect();
    for i in 0..labels.len() {
        if labels[..i].contains(&labels[i]) || labels[i + 1..].contains(&labels[i]) {
            labels[i] = args.metrics[i].display().to_string();
        }
    }

    let mut comparison = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut comparison);
        let mut header = vec!["frame".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header)?;
        for f in 0..frames {
            let mut row = vec![f.to_string()];
            row.extend(
                series
                    .iter()
                    .map(|s| s.errors[f].map_or(String::new(), |e| e.to_string())),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let mut summary = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut summary);
        w.write_record([
            "run",
            "frames",
            "mean_error_m",
            "max_error_m",
            "final_error_m",
        ])?;
        for (label, s) in labels.iter().zip(&series) {
            let errs: Vec<f64> = s.errors.iter().flatten().copied().collect();
            let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            let mean = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
            let max = errs.iter().copied().reduce(f64::max);
            let last = s.errors.last().copied().flatten();
            w.write_record([
                label.clone(),
                frames.to_string(),
                fmt(mean),
                fmt(max),
                fmt(last),
            ])?;
        }
        w.flush()?;
    }

    match args.out {
        Some(dir) => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for (name, bytes) in [("comparison.csv", &comparison), ("summary.csv", &summary)] {
                let path = dir.join(name);
                fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            }
            io::stdout().write_all(&summary)?;
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(&comparison)?;
            out.write_all(b"\n")?;
            out.write_all(&summary)?;
        }
    }
    Ok(())
}
