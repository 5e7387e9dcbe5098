use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use rigidseg::eval::{classification_error, prevalence_baseline, EvalReport, SequenceResult};
use rigidseg::geometry::ModelKind;
use rigidseg::hypgen::{compute_residuals, generate_hypotheses, ResidualMatrix};
use rigidseg::modelsel::{select_model, SelectionResult};
use rigidseg::ork::{build_ork_kernel, sparsify, AffinityKernel};
use rigidseg::pipeline::{cluster_kernels, default_run_dir, run_pipeline, NumMotions, PipelineConfig, RUN_DIR_ENV};
use rigidseg::spectral::{Assignment, Fusion, SpectralError};
use rigidseg::synth::{generate_scene, preset_scene, Preset, PresetOptions, SceneSpec};
use rigidseg::trajdata::{
    load_trackset, remove_outliers, save_trackset, subsample_background, OutlierParams, TrackFormat, TrackSet,
};

#[derive(Parser)]
#[command(name = "rigidseg", version, about = "Multi-model spectral clustering for rigid motion segmentation")]
struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-body scene.
    Synth(SynthArgs),
    /// Sample hypotheses and write per-model residual matrices.
    Hypothesize(HypothesizeArgs),
    /// Build sparsified ORK kernels from residual matrices.
    Kernel(KernelArgs),
    /// Segment one track set (or precomputed kernels).
    Segment(SegmentArgs),
    /// Estimate the number of motions from precomputed kernels.
    Select(SelectArgs),
    /// Score segmentation results against ground truth.
    Eval(EvalArgs),
    /// Run the full pipeline over a file or a directory of sequences.
    Pipeline(PipelineArgs),
}

/// Pipeline settings. Unset flags fall back to `--config`, then to defaults.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON config, or a run.json written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated model kinds (a,h,f) [default: a,h,f].
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// single, keradd, coreg or subset [default: subset].
    #[arg(long)]
    fusion: Option<Fusion>,
    /// Number of motions, or "auto" for model selection [default: auto].
    #[arg(long)]
    num_motions: Option<NumMotions>,
    /// Hypotheses per consecutive frame pair [default: 500].
    #[arg(long)]
    per_pair: Option<usize>,
    /// Fraction of hypotheses in each ORK inlier set [default: 0.1].
    #[arg(long)]
    h_frac: Option<f64>,
    /// Sparsification quantile of the positive affinities [default: 0.9].
    #[arg(long)]
    eps_quantile: Option<f64>,
    /// Co-regularization weight [default: 0.01].
    #[arg(long)]
    lambda: Option<f64>,
    /// Subset-constraint weight [default: 0.01].
    #[arg(long)]
    gamma: Option<f64>,
    /// Reconstruction-error weight in model selection [default: 0.1].
    #[arg(long)]
    delta: Option<f64>,
    /// Smallest candidate number of motions [default: 1].
    #[arg(long)]
    m_min: Option<usize>,
    /// Largest candidate number of motions [default: 10].
    #[arg(long)]
    m_max: Option<usize>,
    /// k-means restarts [default: 20].
    #[arg(long)]
    restarts: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Sweep limit of the alternating schemes [default: 50].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative cost change that ends the alternating schemes [default: 1e-6].
    #[arg(long)]
    tol: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let inner = value.get("config").cloned().unwrap_or(value);
                serde_json::from_value(inner).with_context(|| format!("invalid config in {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        take!(models, fusion, num_motions, per_pair, h_frac, eps_quantile, lambda, gamma, delta, m_min, m_max, restarts, seed, max_iters, tol);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scene regime: general, rotation-dominant or forward-translation.
    #[arg(long, default_value = "general", conflicts_with = "spec")]
    preset: Preset,
    /// Explicit scene description (JSON) instead of a preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    bodies: usize,
    #[arg(long, default_value_t = 300)]
    points: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    /// Gaussian pixel noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Number of injected body-switching tracks.
    #[arg(long, default_value_t = 0)]
    outliers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output track file (.json for JSON, anything else for TSV).
    #[arg(long)]
    out: PathBuf,
    /// Also write the scene description used.
    #[arg(long)]
    save_spec: Option<PathBuf>,
    /// Also write the body index of every point and the injected outliers.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct HypothesizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "a,h,f")]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 500)]
    per_pair: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for residuals_<model>.bin [default: $RIGIDSEG_RUN_DIR/<input stem>].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    /// Track file the residuals were computed on (for co-visibility).
    #[arg(long)]
    input: PathBuf,
    /// Residual matrices written by `hypothesize`.
    #[arg(long, required = true, num_args = 1..)]
    residuals: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    h_frac: f64,
    #[arg(long, default_value_t = 0.9)]
    eps_quantile: f64,
    /// Directory for kernel_<model>.bin [default: $RIGIDSEG_RUN_DIR/<input stem>].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Track file. Labels, when present, are used to report the error.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Precomputed kernels, in the order of --models.
    #[arg(long, num_args = 1..)]
    kernels: Vec<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Result JSON [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Artifact directory [default: $RIGIDSEG_RUN_DIR/<input stem>].
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, required = true, num_args = 1..)]
    kernels: Vec<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Selection report JSON [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// r_M curve as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth track files.
    #[arg(long, required = true, num_args = 1..)]
    truth: Vec<PathBuf>,
    /// Result JSON files, one per truth file.
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-sequence errors as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Track file or directory of track files.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output root, one subdirectory per sequence [default: $RIGIDSEG_RUN_DIR, else ./runs].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Flag outlying trajectories per labelled group before clustering.
    #[arg(long)]
    screen_outliers: bool,
    /// Keep only this fraction of background (label 0) points.
    #[arg(long)]
    background_fraction: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", message(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Error chain joined by ": ", skipping causes the previous message already ends with.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rigidseg::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
        if let Some(SpectralError::Eigen(_)) = cause.downcast_ref::<SpectralError>() {
            return 3;
        }
        if let Some(rigidseg::modelsel::ModelSelError::NoCandidate) = cause.downcast_ref() {
            return 3;
        }
    }
    2
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Hypothesize(a) => hypothesize(a),
        Command::Kernel(a) => kernel(a),
        Command::Segment(a) => segment(a),
        Command::Select(a) => select(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn load(path: &Path) -> Result<TrackSet> {
    let loaded = load_trackset(path, TrackFormat::from_path(path))
        .map_err(rigidseg::Error::from)
        .with_context(|| format!("loading {}", path.display()))?;
    if loaded.dropped > 0 {
        log::warn!("{}: dropped {} trajectories visible in fewer than 2 frames", path.display(), loaded.dropped);
    }
    Ok(loaded.tracks)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned())
}

fn output_dir(explicit: Option<PathBuf>, input: &Path) -> Result<PathBuf> {
    match explicit.or_else(|| default_run_dir(&stem(input))) {
        Some(dir) => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            Ok(dir)
        }
        None => bail!("no output directory: pass --out-dir or set {RUN_DIR_ENV}"),
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SceneSpec::from_json(&text).map_err(rigidseg::Error::from)?
        }
        None => {
            let opts = PresetOptions {
                num_bodies: a.bodies,
                total_points: a.points,
                num_frames: a.frames,
                noise_sigma: a.noise,
                num_injected_outliers: a.outliers,
                seed: a.seed,
            };
            preset_scene(a.preset, &opts).map_err(rigidseg::Error::from)?
        }
    };
    let scene = generate_scene(&spec).map_err(rigidseg::Error::from)?;
    save_trackset(&scene.tracks, &a.out, TrackFormat::from_path(&a.out)).map_err(rigidseg::Error::from)?;
    if let Some(path) = &a.save_spec {
        write(path, &(spec.to_json() + "\n"))?;
    }
    if let Some(path) = &a.truth {
        let truth = serde_json::json!({ "body_of": scene.body_of, "outliers": scene.outliers });
        write(path, &pretty(&truth))?;
    }
    eprintln!(
        "wrote {} trajectories over {} frames to {}",
        scene.tracks.num_points(),
        scene.tracks.num_frames(),
        a.out.display()
    );
    Ok(())
}

fn hypothesize(a: HypothesizeArgs) -> Result<()> {
    let ts = load(&a.input)?;
    let dir = output_dir(a.out_dir, &a.input)?;
    let mut summary = Vec::new();
    for kind in a.models {
        let set = generate_hypotheses(&ts, kind, a.per_pair, a.seed).map_err(rigidseg::Error::from)?;
        let rm = compute_residuals(&ts, &set.hypotheses).map_err(rigidseg::Error::from)?;
        let path = dir.join(format!("residuals_{}.bin", kind.letter()));
        let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
        rm.write_to(&mut w).map_err(rigidseg::Error::from)?;
        summary.push(serde_json::json!({
            "model": kind.to_string(),
            "hypotheses": set.hypotheses.len(),
            "file": path,
            "warnings": set.warnings,
        }));
    }
    print!("{}", pretty(&serde_json::Value::Array(summary)));
    Ok(())
}

fn kernel(a: KernelArgs) -> Result<()> {
    let ts = load(&a.input)?;
    let dir = output_dir(a.out_dir, &a.input)?;
    let mut summary = Vec::new();
    for path in &a.residuals {
        let mut r = std::io::BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
        let rm = ResidualMatrix::read_from(&mut r)
            .map_err(rigidseg::Error::from)
            .with_context(|| format!("reading {}", path.display()))?;
        let ork = build_ork_kernel(&rm, &ts, a.h_frac).map_err(rigidseg::Error::from)?;
        let kern = sparsify(&ork.kernel, a.eps_quantile).map_err(rigidseg::Error::from)?;
        let out = dir.join(format!("kernel_{}.bin", rm.kind().letter()));
        let mut w = std::io::BufWriter::new(fs::File::create(&out)?);
        kern.write_to(&mut w).map_err(rigidseg::Error::from)?;
        summary.push(serde_json::json!({ "model": rm.kind().to_string(), "points": kern.len(), "file": out }));
    }
    print!("{}", pretty(&serde_json::Value::Array(summary)));
    Ok(())
}

fn read_kernels(paths: &[PathBuf]) -> Result<Vec<AffinityKernel>> {
    paths
        .iter()
        .map(|path| {
            let mut r = std::io::BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
            AffinityKernel::read_from(&mut r)
                .map_err(rigidseg::Error::from)
                .with_context(|| format!("reading {}", path.display()))
        })
        .collect()
}

/// Orders kernels like `cfg.models` when their files carry a model kind.
fn check_kernel_models(cfg: &PipelineConfig, kernels: &[AffinityKernel]) -> Result<()> {
    if kernels.len() != cfg.models.len() {
        bail!("{} kernel files given for {} models", kernels.len(), cfg.models.len());
    }
    for (k, want) in kernels.iter().zip(&cfg.models) {
        if let Some(kind) = k.kind() {
            if kind != *want {
                bail!("kernel for {kind} given where --models expects {want}");
            }
        }
    }
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let input = a.input.as_deref();
    let summary = if a.kernels.is_empty() {
        let Some(path) = input else {
            bail!("segment needs --input or --kernels");
        };
        let ts = load(path)?;
        let run_dir = a.run_dir.or_else(|| default_run_dir(&stem(path)));
        let out = run_pipeline(&cfg, &ts, run_dir.as_deref())?;
        out.summary_json(&ts)
    } else {
        let kernels = read_kernels(&a.kernels)?;
        check_kernel_models(&cfg, &kernels)?;
        let (assignment, selection, cost_trace, converged) = cluster_kernels(&cfg, &kernels)?;
        let ts = input.map(load).transpose()?;
        if let Some(ts) = &ts {
            if ts.num_points() != assignment.len() {
                bail!("track file has {} points but the kernels have {}", ts.num_points(), assignment.len());
            }
        }
        let error = match ts.as_ref().and_then(TrackSet::labels) {
            Some(l) => Some(classification_error(&assignment, l).map_err(rigidseg::Error::from)?),
            None => None,
        };
        let ids: Vec<u64> = match &ts {
            Some(ts) => ts.ids().to_vec(),
            None => (0..assignment.len() as u64).collect(),
        };
        serde_json::json!({
            "num_points": assignment.len(),
            "num_motions": assignment.num_clusters(),
            "ids": ids,
            "labels": assignment.labels(),
            "classification_error": error,
            "converged": converged,
            "cost_trace": cost_trace,
            "selection": selection.as_ref().map(SelectionResult::to_json),
        })
    };
    emit(a.out.as_deref(), &pretty(&summary))
}

fn select(a: SelectArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let kernels = read_kernels(&a.kernels)?;
    check_kernel_models(&cfg, &kernels)?;
    let n = kernels[0].len();
    let sel = select_model(&kernels, cfg.delta, cfg.m_min, cfg.m_max.min(n), cfg.fusion, &cfg.fusion_params())
        .map_err(rigidseg::Error::from)?;
    if let Some(path) = &a.csv {
        write(path, &sel.to_csv())?;
    }
    emit(a.out.as_deref(), &pretty(&sel.to_json()))
}

/// Predicted assignment restricted to the truth points it covers, matched by id.
fn aligned(pred: &serde_json::Value, truth: &TrackSet) -> Result<(Assignment, Vec<u32>, Option<usize>)> {
    let ids: Vec<u64> = serde_json::from_value(pred.get("ids").cloned().unwrap_or_default()).context("result has no \"ids\" array")?;
    let labels: Vec<usize> =
        serde_json::from_value(pred.get("labels").cloned().unwrap_or_default()).context("result has no \"labels\" array")?;
    if ids.len() != labels.len() {
        bail!("result has {} ids but {} labels", ids.len(), labels.len());
    }
    let Some(truth_labels) = truth.labels() else {
        bail!("truth file has no labels");
    };
    let index: std::collections::HashMap<u64, usize> = truth.ids().iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut t = Vec::with_capacity(ids.len());
    for id in &ids {
        let Some(&i) = index.get(id) else {
            bail!("result refers to trajectory {id}, which the truth file lacks");
        };
        t.push(truth_labels[i]);
    }
    let estimated = pred.pointer("/selection/best_m").and_then(serde_json::Value::as_u64).map(|m| m as usize);
    Ok((Assignment::from_raw_labels(&labels), t, estimated))
}

fn eval(a: EvalArgs) -> Result<()> {
    if a.truth.len() != a.pred.len() {
        bail!("{} truth files but {} result files", a.truth.len(), a.pred.len());
    }
    let mut sequences = Vec::new();
    let mut baseline = 0.0;
    for (truth_path, pred_path) in a.truth.iter().zip(&a.pred) {
        let truth = load(truth_path)?;
        let text = fs::read_to_string(pred_path).with_context(|| format!("reading {}", pred_path.display()))?;
        let pred: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", pred_path.display()))?;
        let (assignment, labels, estimated_m) = aligned(&pred, &truth).with_context(|| pred_path.display().to_string())?;
        let error = classification_error(&assignment, &labels).map_err(rigidseg::Error::from)?;
        baseline += prevalence_baseline(&labels).map_err(rigidseg::Error::from)?;
        sequences.push(SequenceResult {
            name: stem(truth_path),
            error,
            true_m: truth.num_groups().unwrap_or(0),
            estimated_m,
        });
    }
    let count = sequences.len() as f64;
    let report = EvalReport::from_sequences(sequences);
    finish_report(&report, a.json.as_deref(), a.csv.as_deref())?;
    println!("prevalence baseline {:.3}%", 100.0 * baseline / count);
    Ok(())
}

fn finish_report(report: &EvalReport, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    if let Some(path) = json {
        write(path, &pretty(&serde_json::to_value(report)?))?;
    }
    if let Some(path) = csv {
        write(path, &report.to_csv())?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn sequence_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("no track files in {}", input.display());
        }
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let root = a
        .out_dir
        .or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let mut sequences = Vec::new();
    for path in sequence_files(&a.input)? {
        let mut ts = load(&path)?;
        if let Some(fraction) = a.background_fraction {
            ts = subsample_background(&ts, fraction, cfg.seed).map_err(rigidseg::Error::from)?;
        }
        if a.screen_outliers {
            ts = remove_outliers(&ts, &OutlierParams::default()).map_err(rigidseg::Error::from)?.tracks;
        }
        let name = stem(&path);
        let dir = root.join(&name);
        let out = run_pipeline(&cfg, &ts, Some(&dir)).with_context(|| format!("sequence {name}"))?;
        eprintln!("{name}: {} motions, artifacts in {}", out.assignment.num_clusters(), dir.display());
        if let Some(error) = out.classification_error {
            let kept = ts.select(&out.kept);
            sequences.push(SequenceResult {
                name,
                error,
                true_m: kept.num_groups().unwrap_or(0),
                estimated_m: out.selection.as_ref().map(|s| s.best_m),
            });
        }
    }
    if !sequences.is_empty() {
        let report = EvalReport::from_sequences(sequences);
        finish_report(&report, Some(&root.join("report.json")), Some(&root.join("report.csv")))?;
    }
    Ok(())
}
