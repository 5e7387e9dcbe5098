//! End-to-end segmentation: hypotheses → residuals → ORK kernels → clustering
//! (or model selection) → evaluation, with optional on-disk artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::classification_error;
use crate::geometry::ModelKind;
use crate::hypgen::{compute_residuals, generate_hypotheses};
use crate::modelsel::{select_model, SelectionResult};
use crate::ork::{build_ork_kernel, sparsify, AffinityKernel};
use crate::spectral::{cluster_with, Assignment, ClusterOptions, Fusion, FusionParams, IterOptions};
use crate::trajdata::TrackSet;
use crate::Error;

/// Environment variable naming the default root for run directories.
pub const RUN_DIR_ENV: &str = "RIGIDSEG_RUN_DIR";

/// Fixed number of motions, or model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumMotions {
    Fixed(usize),
    Auto,
}

impl std::str::FromStr for NumMotions {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(NumMotions::Auto);
        }
        match s.parse::<usize>() {
            Ok(m) if m >= 1 => Ok(NumMotions::Fixed(m)),
            _ => Err(format!("number of motions must be a positive integer or \"auto\", got {s:?}")),
        }
    }
}

impl std::fmt::Display for NumMotions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumMotions::Fixed(m) => write!(f, "{m}"),
            NumMotions::Auto => f.write_str("auto"),
        }
    }
}

impl Serialize for NumMotions {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NumMotions::Fixed(m) => s.serialize_u64(*m as u64),
            NumMotions::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for NumMotions {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_u64()
                .filter(|m| *m >= 1)
                .map(|m| NumMotions::Fixed(m as usize))
                .ok_or_else(|| serde::de::Error::custom("num_motions must be a positive integer")),
            serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("num_motions must be an integer or \"auto\"")),
        }
    }
}

/// Missing fields take their defaults when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub models: Vec<ModelKind>,
    pub fusion: Fusion,
    pub num_motions: NumMotions,
    pub per_pair: usize,
    pub h_frac: f64,
    pub eps_quantile: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub delta: f64,
    pub m_min: usize,
    pub m_max: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            models: ModelKind::ALL.to_vec(),
            fusion: Fusion::Subset,
            num_motions: NumMotions::Auto,
            per_pair: 500,
            h_frac: 0.1,
            eps_quantile: 0.9,
            lambda: 1e-2,
            gamma: 1e-2,
            delta: 0.1,
            m_min: 1,
            m_max: 10,
            restarts: 20,
            seed: 0,
            max_iters: 50,
            tol: 1e-6,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.models.is_empty() {
            return bad("at least one model kind is required".into());
        }
        let mut sorted = self.models.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.models.len() {
            return bad("model kinds must not repeat".into());
        }
        match self.fusion {
            Fusion::Single if self.models.len() != 1 => {
                return bad(format!("single-model clustering needs exactly one model, got {}", self.models.len()))
            }
            Fusion::CoReg if self.models.len() < 2 => return bad("co-regularization needs at least two models".into()),
            Fusion::Subset if self.models != ModelKind::ALL => {
                return bad("subset fusion needs exactly the models a,h,f in that order".into())
            }
            _ => {}
        }
        if self.per_pair == 0 {
            return bad("per_pair must be at least 1".into());
        }
        if !(self.h_frac > 0.0 && self.h_frac <= 1.0) {
            return bad(format!("h_frac must lie in (0, 1], got {}", self.h_frac));
        }
        if !(0.0..1.0).contains(&self.eps_quantile) {
            return bad(format!("eps_quantile must lie in [0, 1), got {}", self.eps_quantile));
        }
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.m_min == 0 || self.m_min > self.m_max {
            return bad(format!("need 1 <= m_min <= m_max, got [{}, {}]", self.m_min, self.m_max));
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.num_motions == NumMotions::Fixed(0) {
            return bad("number of motions must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams {
            lambda: self.lambda,
            gamma: self.gamma,
            iter: IterOptions {
                max_iters: self.max_iters,
                tol: self.tol,
            },
            cluster: ClusterOptions {
                restarts: self.restarts,
                seed: self.seed,
            },
        }
    }
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Indices (into the input track set) of the points that were clustered.
    pub kept: Vec<usize>,
    pub assignment: Assignment,
    pub selection: Option<SelectionResult>,
    /// Against the input labels, when present.
    pub classification_error: Option<f64>,
    /// Sparsified kernels in model order.
    pub kernels: Vec<AffinityKernel>,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    /// Summary consumed by the CLI and written as `result.json`.
    pub fn summary_json(&self, ts: &TrackSet) -> serde_json::Value {
        let ids: Vec<u64> = self.kept.iter().map(|&i| ts.ids()[i]).collect();
        serde_json::json!({
            "num_points": self.kept.len(),
            "num_motions": self.assignment.num_clusters(),
            "ids": ids,
            "labels": self.assignment.labels(),
            "classification_error": self.classification_error,
            "converged": self.converged,
            "cost_trace": self.cost_trace,
            "selection": self.selection.as_ref().map(SelectionResult::to_json),
            "warnings": self.warnings,
        })
    }
}

/// SHA-256 of the canonical text form of a track set.
pub fn input_hash(ts: &TrackSet) -> String {
    let digest = Sha256::digest(ts.to_tsv_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reproduction record written as `run.json`.
pub fn run_record(cfg: &PipelineConfig, ts: &TrackSet) -> serde_json::Value {
    serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seed": cfg.seed,
        "input_sha256": input_hash(ts),
        "num_points": ts.num_points(),
        "num_frames": ts.num_frames(),
    })
}

/// Builds the sparsified ORK kernel of every configured model.
pub fn build_kernels(
    cfg: &PipelineConfig,
    ts: &TrackSet,
    run_dir: Option<&Path>,
    warnings: &mut Vec<String>,
) -> Result<Vec<AffinityKernel>, Error> {
    let mut kernels = Vec::with_capacity(cfg.models.len());
    for &kind in &cfg.models {
        let set = generate_hypotheses(ts, kind, cfg.per_pair, cfg.seed)?;
        warnings.extend(set.warnings);
        let rm = compute_residuals(ts, &set.hypotheses)?;
        let ork = build_ork_kernel(&rm, ts, cfg.h_frac)?;
        warnings.extend(ork.warnings);
        let kern = sparsify(&ork.kernel, cfg.eps_quantile)?;
        if let Some(dir) = run_dir {
            rm.write_to(&mut BufWriter::new(fs::File::create(dir.join(format!("residuals_{}.bin", kind.letter())))?))?;
            kern.write_to(&mut BufWriter::new(fs::File::create(dir.join(format!("kernel_{}.bin", kind.letter())))?))?;
        }
        kernels.push(kern);
    }
    Ok(kernels)
}

/// Clusters prepared kernels per the config.
pub fn cluster_kernels(
    cfg: &PipelineConfig,
    kernels: &[AffinityKernel],
) -> Result<(Assignment, Option<SelectionResult>, Vec<f64>, bool), Error> {
    let params = cfg.fusion_params();
    match cfg.num_motions {
        NumMotions::Fixed(m) => {
            let out = cluster_with(cfg.fusion, kernels, m, &params)?;
            Ok((out.assignment, None, out.cost_trace, out.converged))
        }
        NumMotions::Auto => {
            let m_max = cfg.m_max.min(kernels[0].len());
            if cfg.m_min > m_max {
                return Err(Error::Config(format!(
                    "m_min {} exceeds the number of points {}",
                    cfg.m_min,
                    kernels[0].len()
                )));
            }
            let sel = select_model(kernels, cfg.delta, cfg.m_min, m_max, cfg.fusion, &params)?;
            let best = sel.best_assignment().clone();
            Ok((best, Some(sel), Vec::new(), true))
        }
    }
}

/// Runs the whole pipeline. Flagged outliers are excluded first. When
/// `run_dir` is given, intermediate artifacts, `run.json` and `result.json`
/// are written there.
pub fn run_pipeline(cfg: &PipelineConfig, input: &TrackSet, run_dir: Option<&Path>) -> Result<PipelineOutput, Error> {
    cfg.validate()?;
    let (ts, kept) = input.without_outliers();
    if let Some(dir) = run_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("run.json"), pretty(&run_record(cfg, input)))?;
    }
    let mut warnings = Vec::new();
    let kernels = build_kernels(cfg, &ts, run_dir, &mut warnings)?;
    let (assignment, selection, cost_trace, converged) = cluster_kernels(cfg, &kernels)?;
    let classification_error = ts.labels().map(|l| classification_error(&assignment, l)).transpose()?;
    let out = PipelineOutput {
        kept,
        assignment,
        selection,
        classification_error,
        kernels,
        cost_trace,
        converged,
        warnings,
    };
    if let Some(dir) = run_dir {
        fs::write(dir.join("result.json"), pretty(&out.summary_json(input)))?;
        if let Some(sel) = &out.selection {
            fs::write(dir.join("selection.csv"), sel.to_csv())?;
        }
    }
    Ok(out)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// `<root>/<name>`, with the root taken from `RIGIDSEG_RUN_DIR` when set.
pub fn default_run_dir(name: &str) -> Option<PathBuf> {
    std::env::var_os(RUN_DIR_ENV).map(|root| PathBuf::from(root).join(name))
}
