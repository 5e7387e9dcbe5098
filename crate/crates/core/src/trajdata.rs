//! Feature trajectories: the `TrackSet` container, its text formats, and the
//! preprocessing steps applied to densely tracked sequences (background
//! subsampling and semi-automatic outlier flagging).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fit_model, sampson_error, Correspondence, Hypothesis, ModelKind, Point2};
use crate::stats::quantile_type7;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid track set: {0}")]
    Invalid(String),
    #[error("operation needs ground-truth labels")]
    MissingLabels,
}

/// On-disk trajectory formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackFormat {
    Tsv,
    Json,
}

impl TrackFormat {
    /// Guesses the format from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TrackFormat::Json,
            _ => TrackFormat::Tsv,
        }
    }
}

impl std::str::FromStr for TrackFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" | "txt" => Ok(TrackFormat::Tsv),
            "json" => Ok(TrackFormat::Json),
            other => Err(format!("unknown track format '{other}'")),
        }
    }
}

/// N trajectories over F frames.
///
/// Positions and visibility are stored point-major (`i * F + f`). Invisible
/// entries hold `[0, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    num_frames: usize,
    ids: Vec<u64>,
    positions: Vec<Point2>,
    visible: Vec<bool>,
    labels: Option<Vec<u32>>,
    outlier_flags: Option<Vec<bool>>,
}

/// A loaded track set and the number of too-short trajectories discarded.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub tracks: TrackSet,
    pub dropped: usize,
}

impl TrackSet {
    /// Builds a track set, checking every invariant.
    pub fn new(
        num_frames: usize,
        ids: Vec<u64>,
        positions: Vec<Point2>,
        visible: Vec<bool>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self, TrajError> {
        let n = ids.len();
        if n == 0 {
            return Err(TrajError::Invalid("need at least one trajectory".into()));
        }
        if num_frames < 2 {
            return Err(TrajError::Invalid(format!("need at least 2 frames, got {num_frames}")));
        }
        if positions.len() != n * num_frames || visible.len() != n * num_frames {
            return Err(TrajError::Invalid("position/visibility size mismatch".into()));
        }
        if labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(TrajError::Invalid("label count mismatch".into()));
        }
        let mut positions = positions;
        for i in 0..n {
            let row = i * num_frames..(i + 1) * num_frames;
            let count = visible[row.clone()].iter().filter(|v| **v).count();
            if count < 2 {
                return Err(TrajError::Invalid(format!("trajectory {} visible in {count} frame(s)", ids[i])));
            }
            for k in row {
                if visible[k] {
                    if !(positions[k][0].is_finite() && positions[k][1].is_finite()) {
                        return Err(TrajError::Invalid(format!("trajectory {} has a non-finite position", ids[i])));
                    }
                } else {
                    positions[k] = [0.0, 0.0];
                }
            }
        }
        Ok(TrackSet {
            num_frames,
            ids,
            positions,
            visible,
            labels,
            outlier_flags: None,
        })
    }

    pub fn num_points(&self) -> usize {
        self.ids.len()
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn outlier_flags(&self) -> Option<&[bool]> {
        self.outlier_flags.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<u32>>) -> Result<(), TrajError> {
        if labels.as_ref().is_some_and(|l| l.len() != self.num_points()) {
            return Err(TrajError::Invalid("label count mismatch".into()));
        }
        self.labels = labels;
        Ok(())
    }

    pub fn position(&self, point: usize, frame: usize) -> Point2 {
        self.positions[point * self.num_frames + frame]
    }

    pub fn is_visible(&self, point: usize, frame: usize) -> bool {
        self.visible[point * self.num_frames + frame]
    }

    pub fn visibility_row(&self, point: usize) -> &[bool] {
        &self.visible[point * self.num_frames..(point + 1) * self.num_frames]
    }

    /// Number of frames in which the point is visible.
    pub fn frames_visible(&self, point: usize) -> usize {
        self.visibility_row(point).iter().filter(|v| **v).count()
    }

    /// Number of frames in which both points are visible.
    pub fn covisible_frames(&self, a: usize, b: usize) -> usize {
        self.visibility_row(a)
            .iter()
            .zip(self.visibility_row(b))
            .filter(|(x, y)| **x && **y)
            .count()
    }

    /// Points visible in both frames, ascending.
    pub fn covisible_points(&self, f1: usize, f2: usize) -> Vec<usize> {
        (0..self.num_points())
            .filter(|&i| self.is_visible(i, f1) && self.is_visible(i, f2))
            .collect()
    }

    /// Number of distinct ground-truth labels, if labels are present.
    pub fn num_groups(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut v = l.clone();
            v.sort_unstable();
            v.dedup();
            v.len()
        })
    }

    /// Keeps the listed points, in the given order.
    pub fn select(&self, keep: &[usize]) -> TrackSet {
        let f = self.num_frames;
        let mut positions = Vec::with_capacity(keep.len() * f);
        let mut visible = Vec::with_capacity(keep.len() * f);
        for &i in keep {
            positions.extend_from_slice(&self.positions[i * f..(i + 1) * f]);
            visible.extend_from_slice(&self.visible[i * f..(i + 1) * f]);
        }
        TrackSet {
            num_frames: f,
            ids: keep.iter().map(|&i| self.ids[i]).collect(),
            positions,
            visible,
            labels: self.labels.as_ref().map(|l| keep.iter().map(|&i| l[i]).collect()),
            outlier_flags: self.outlier_flags.as_ref().map(|o| keep.iter().map(|&i| o[i]).collect()),
        }
    }

    /// Drops flagged outliers; returns the kept original indices too.
    pub fn without_outliers(&self) -> (TrackSet, Vec<usize>) {
        let keep: Vec<usize> = match &self.outlier_flags {
            Some(flags) => (0..self.num_points()).filter(|&i| !flags[i]).collect(),
            None => (0..self.num_points()).collect(),
        };
        let mut out = self.select(&keep);
        out.outlier_flags = None;
        (out, keep)
    }

    /// Canonical TSV text (used for hashing and saving).
    pub fn to_tsv_string(&self) -> String {
        let n = self.num_points();
        let f = self.num_frames;
        let mut out = String::with_capacity(n * f * 24);
        let _ = writeln!(out, "{} {} {}", n, f, u8::from(self.labels.is_some()));
        for i in 0..n {
            match &self.labels {
                Some(l) => {
                    let _ = writeln!(out, "{} {}", self.ids[i], l[i]);
                }
                None => {
                    let _ = writeln!(out, "{}", self.ids[i]);
                }
            }
            for fr in 0..f {
                if self.is_visible(i, fr) {
                    let [x, y] = self.position(i, fr);
                    let _ = writeln!(out, "{} 1 {} {}", fr + 1, x, y);
                } else {
                    let _ = writeln!(out, "{} 0 0 0", fr + 1);
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Serialize, Deserialize)]
struct JsonTrackSet {
    num_points: usize,
    num_frames: usize,
    points: Vec<JsonPoint>,
}

#[derive(Serialize, Deserialize)]
struct JsonPoint {
    id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    xy: Vec<[f64; 2]>,
    visible: Vec<bool>,
}

/// Loads a track set, dropping trajectories visible in fewer than 2 frames.
pub fn load_trackset(path: &Path, format: TrackFormat) -> Result<Loaded, TrajError> {
    let file = std::fs::File::open(path)?;
    match format {
        TrackFormat::Tsv => parse_tsv(BufReader::new(file)),
        TrackFormat::Json => parse_json(BufReader::new(file)),
    }
}

pub fn save_trackset(ts: &TrackSet, path: &Path, format: TrackFormat) -> Result<(), TrajError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    match format {
        TrackFormat::Tsv => w.write_all(ts.to_tsv_string().as_bytes())?,
        TrackFormat::Json => {
            let doc = JsonTrackSet {
                num_points: ts.num_points(),
                num_frames: ts.num_frames(),
                points: (0..ts.num_points())
                    .map(|i| JsonPoint {
                        id: ts.ids[i],
                        label: ts.labels.as_ref().map(|l| l[i]),
                        xy: (0..ts.num_frames).map(|f| ts.position(i, f)).collect(),
                        visible: ts.visibility_row(i).to_vec(),
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut w, &doc)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Assembler {
    num_frames: usize,
    has_labels: bool,
    ids: Vec<u64>,
    labels: Vec<u32>,
    positions: Vec<Point2>,
    visible: Vec<bool>,
    dropped: usize,
}

impl Assembler {
    fn new(num_frames: usize, has_labels: bool, capacity: usize) -> Self {
        Assembler {
            num_frames,
            has_labels,
            ids: Vec::with_capacity(capacity),
            labels: Vec::with_capacity(capacity),
            positions: Vec::with_capacity(capacity * num_frames),
            visible: Vec::with_capacity(capacity * num_frames),
            dropped: 0,
        }
    }

    fn push(&mut self, id: u64, label: u32, xy: &[Point2], vis: &[bool]) {
        if vis.iter().filter(|v| **v).count() < 2 {
            self.dropped += 1;
            return;
        }
        self.ids.push(id);
        self.labels.push(label);
        self.positions.extend_from_slice(xy);
        self.visible.extend_from_slice(vis);
    }

    fn finish(self) -> Result<Loaded, TrajError> {
        if self.dropped > 0 {
            log::warn!("dropped {} trajectories visible in fewer than 2 frames", self.dropped);
        }
        let labels = self.has_labels.then_some(self.labels);
        let tracks = TrackSet::new(self.num_frames, self.ids, self.positions, self.visible, labels)?;
        Ok(Loaded {
            tracks,
            dropped: self.dropped,
        })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> TrajError {
    TrajError::Parse { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, TrajError> {
    tok.parse::<T>()
        .map_err(|_| parse_err(line, format!("{what}: cannot parse '{tok}'")))
}

fn parse_tsv<R: BufRead>(reader: R) -> Result<Loaded, TrajError> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));

    let mut next = |expect: &str| -> Result<(usize, String), TrajError> {
        match lines.next() {
            Some((no, Ok(s))) => Ok((no, s)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(parse_err(0, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (hno, header) = next("header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(parse_err(hno, "malformed header, expected 'N F has_labels'"));
    }
    let n: usize = parse_num(toks[0], hno, "header N")?;
    let f: usize = parse_num(toks[1], hno, "header F")?;
    let has_labels = match toks[2] {
        "0" => false,
        "1" => true,
        other => return Err(parse_err(hno, format!("has_labels must be 0 or 1, got '{other}'"))),
    };
    if f < 2 {
        return Err(parse_err(hno, "need at least 2 frames"));
    }

    let mut asm = Assembler::new(f, has_labels, n);
    let mut xy = vec![[0.0; 2]; f];
    let mut vis = vec![false; f];
    for _ in 0..n {
        let (bno, block) = next("point header")?;
        let toks: Vec<&str> = block.split_whitespace().collect();
        let expected = if has_labels { 2 } else { 1 };
        if toks.len() != expected {
            return Err(parse_err(bno, format!("point header needs {expected} field(s), got {}", toks.len())));
        }
        let id: u64 = parse_num(toks[0], bno, "point id")?;
        let label: u32 = if has_labels { parse_num(toks[1], bno, "label")? } else { 0 };

        for fr in 0..f {
            let (lno, line) = next("frame line")?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(parse_err(lno, format!("frame line needs 4 fields, got {}", toks.len())));
            }
            let idx: usize = parse_num(toks[0], lno, "frame index")?;
            if idx != fr + 1 {
                return Err(parse_err(lno, format!("expected frame {}, got {idx}", fr + 1)));
            }
            let v = match toks[1] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(lno, format!("visibility must be 0 or 1, got '{other}'"))),
            };
            let x: f64 = parse_num(toks[2], lno, "x coordinate")?;
            let y: f64 = parse_num(toks[3], lno, "y coordinate")?;
            if v && !(x.is_finite() && y.is_finite()) {
                return Err(parse_err(lno, "non-finite coordinate on a visible frame"));
            }
            if !v && (x != 0.0 || y != 0.0) {
                return Err(parse_err(lno, "invisible frame must have coordinates '0 0'"));
            }
            xy[fr] = [x, y];
            vis[fr] = v;
        }
        asm.push(id, label, &xy, &vis);
    }
    if let Some((no, Ok(extra))) = lines.next() {
        return Err(parse_err(no, format!("trailing content '{}'", extra.trim())));
    }
    asm.finish()
}

fn parse_json<R: std::io::Read>(reader: R) -> Result<Loaded, TrajError> {
    let doc: JsonTrackSet = serde_json::from_reader(reader)?;
    if doc.points.len() != doc.num_points {
        return Err(TrajError::Invalid(format!(
            "num_points is {} but {} points listed",
            doc.num_points,
            doc.points.len()
        )));
    }
    if doc.num_frames < 2 {
        return Err(TrajError::Invalid("need at least 2 frames".into()));
    }
    let has_labels = doc.points.first().is_some_and(|p| p.label.is_some());
    let mut asm = Assembler::new(doc.num_frames, has_labels, doc.num_points);
    for (k, p) in doc.points.iter().enumerate() {
        if p.xy.len() != doc.num_frames || p.visible.len() != doc.num_frames {
            return Err(TrajError::Invalid(format!("point {k} (id {}) has inconsistent length", p.id)));
        }
        if p.label.is_some() != has_labels {
            return Err(TrajError::Invalid(format!("point {k} (id {}): labels must be all present or all absent", p.id)));
        }
        for (f, (xy, v)) in p.xy.iter().zip(&p.visible).enumerate() {
            if *v && !(xy[0].is_finite() && xy[1].is_finite()) {
                return Err(TrajError::Invalid(format!("point {k} frame {}: non-finite coordinate", f + 1)));
            }
            if !*v && (xy[0] != 0.0 || xy[1] != 0.0) {
                return Err(TrajError::Invalid(format!("point {k} frame {}: invisible frame must be [0, 0]", f + 1)));
            }
        }
        asm.push(p.id, p.label.unwrap_or(0), &p.xy, &p.visible);
    }
    asm.finish()
}

/// Parses TSV text already in memory.
pub fn parse_trackset_str(text: &str, format: TrackFormat) -> Result<Loaded, TrajError> {
    match format {
        TrackFormat::Tsv => parse_tsv(text.as_bytes()),
        TrackFormat::Json => parse_json(text.as_bytes()),
    }
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Number of background points kept for a given fraction.
pub fn background_keep_count(num_background: usize, fraction: f64) -> usize {
    // Guard against 0.1 * 1000 landing just above 100.
    let raw = (fraction * num_background as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(num_background)
}

/// Keeps every foreground point and a seeded uniform subset of ⌈fraction·N_bg⌉
/// background (label 0) points. Original point order is preserved.
pub fn subsample_background(ts: &TrackSet, fraction: f64, seed: u64) -> Result<TrackSet, TrajError> {
    let labels = ts.labels().ok_or(TrajError::MissingLabels)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TrajError::Invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let background: Vec<usize> = (0..ts.num_points()).filter(|&i| labels[i] == 0).collect();
    let keep_bg = background_keep_count(background.len(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; ts.num_points()];
    for k in sample(&mut rng, background.len(), keep_bg) {
        chosen[background[k]] = true;
    }
    let keep: Vec<usize> = (0..ts.num_points())
        .filter(|&i| labels[i] != 0 || chosen[i])
        .collect();
    if keep.is_empty() {
        return Err(TrajError::Invalid("subsampling removed every point".into()));
    }
    Ok(ts.select(&keep))
}

/// Parameters of the outlier screening.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OutlierParams {
    pub ransac_iters: usize,
    /// Inlier tolerance in pixels (compared against the square root of the
    /// Sampson error).
    pub inlier_tol: f64,
    /// Multiplier on the interquartile range.
    pub iqr_factor: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        OutlierParams {
            ransac_iters: 500,
            inlier_tol: 1.0,
            iqr_factor: 7.0,
        }
    }
}

/// Interquartile ranges at or below this (px²) are treated as zero: scores of
/// noise-free data differ only by rounding.
pub const IQR_NOISE_FLOOR: f64 = 1e-12;

/// Result of [`remove_outliers`].
#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub tracks: TrackSet,
    /// Per-point mean Sampson score; `None` if its group was never fitted.
    pub scores: Vec<Option<f64>>,
    /// Per-group flagging threshold `Q3 + k·IQR` (`None` if unfitted or IQR≈0).
    pub thresholds: BTreeMap<u32, Option<f64>>,
    pub warnings: Vec<String>,
}

/// Flags trajectories whose mean Sampson error against per-group, per-frame-pair
/// RANSAC fundamental matrices exceeds `Q3 + k·IQR` of their group.
pub fn remove_outliers(ts: &TrackSet, params: &OutlierParams) -> Result<OutlierReport, TrajError> {
    use rayon::prelude::*;

    let labels = ts.labels().ok_or(TrajError::MissingLabels)?;
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    // Sampling order must not depend on the order of points in the file.
    for members in groups.values_mut() {
        members.sort_by_key(|&i| (ts.ids()[i], i));
    }

    let group_list: Vec<(u32, Vec<usize>)> = groups.into_iter().collect();
    let per_group: Vec<GroupScores> = group_list
        .par_iter()
        .map(|(label, members)| score_group(ts, *label, members, params))
        .collect();

    let mut scores = vec![None; ts.num_points()];
    let mut flags = vec![false; ts.num_points()];
    let mut thresholds = BTreeMap::new();
    let mut warnings = Vec::new();
    for ((label, members), g) in group_list.iter().zip(per_group) {
        warnings.extend(g.warnings);
        if !g.fitted {
            warnings.push(format!("group {label}: no frame pair could be fitted, left unflagged"));
            thresholds.insert(*label, None);
            continue;
        }
        let mut sorted: Vec<f64> = g.scores.clone();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_type7(&sorted, 0.25);
        let q3 = quantile_type7(&sorted, 0.75);
        let iqr = q3 - q1;
        let threshold = (iqr > IQR_NOISE_FLOOR).then(|| q3 + params.iqr_factor * iqr);
        thresholds.insert(*label, threshold);
        for (&i, &s) in members.iter().zip(&g.scores) {
            scores[i] = Some(s);
            if let Some(t) = threshold {
                flags[i] = s > t;
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut tracks = ts.clone();
    tracks.outlier_flags = Some(flags);
    Ok(OutlierReport {
        tracks,
        scores,
        thresholds,
        warnings,
    })
}

struct GroupScores {
    fitted: bool,
    scores: Vec<f64>,
    warnings: Vec<String>,
}

fn score_group(ts: &TrackSet, label: u32, members: &[usize], params: &OutlierParams) -> GroupScores {
    let mut sums = vec![0.0; members.len()];
    let mut warnings = Vec::new();
    let mut fitted = false;
    for f in 0..ts.num_frames() - 1 {
        let local: Vec<usize> = (0..members.len())
            .filter(|&k| ts.is_visible(members[k], f) && ts.is_visible(members[k], f + 1))
            .collect();
        let corr: Vec<Correspondence> = local
            .iter()
            .map(|&k| (ts.position(members[k], f), ts.position(members[k], f + 1)))
            .collect();
        if corr.len() < 8 {
            warnings.push(format!(
                "group {label}: frame pair ({}, {}) has {} points, skipped",
                f + 1,
                f + 2,
                corr.len()
            ));
            continue;
        }
        let seed = (u64::from(label) << 32) ^ f as u64;
        let Some(model) = ransac_fundamental(&corr, (f, f + 1), params, seed) else {
            warnings.push(format!("group {label}: RANSAC failed on frame pair ({}, {})", f + 1, f + 2));
            continue;
        };
        fitted = true;
        for (&k, (x1, x2)) in local.iter().zip(&corr) {
            sums[k] += model.sampson_error(*x1, *x2);
        }
    }
    let scores = members
        .iter()
        .zip(&sums)
        .map(|(&i, s)| s / ts.frames_visible(i) as f64)
        .collect();
    GroupScores {
        fitted,
        scores,
        warnings,
    }
}

/// RANSAC over random 8-point samples, scored by Sampson inlier count, with
/// the winner refitted on its inliers.
pub fn ransac_fundamental(
    corr: &[Correspondence],
    frame_pair: (usize, usize),
    params: &OutlierParams,
    seed: u64,
) -> Option<Hypothesis> {
    let kind = ModelKind::Fundamental;
    let tol2 = params.inlier_tol * params.inlier_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, f64, Hypothesis)> = None;
    let mut sample_buf = Vec::with_capacity(8);
    for _ in 0..params.ransac_iters {
        sample_buf.clear();
        sample_buf.extend(sample(&mut rng, corr.len(), 8).into_iter().map(|k| corr[k]));
        let Ok(h) = fit_model(kind, &sample_buf, frame_pair) else {
            continue;
        };
        let mut count = 0;
        let mut total = 0.0;
        for (a, b) in corr {
            let e = sampson_error(kind, &h.matrix, *a, *b);
            if e <= tol2 {
                count += 1;
                total += e;
            }
        }
        let better = match &best {
            None => true,
            Some((c, t, _)) => count > *c || (count == *c && total < *t),
        };
        if better {
            best = Some((count, total, h));
        }
    }
    let (_, _, h) = best?;
    let inliers: Vec<Correspondence> = corr
        .iter()
        .filter(|(a, b)| sampson_error(kind, &h.matrix, *a, *b) <= tol2)
        .copied()
        .collect();
    if inliers.len() >= 8 {
        fit_model(kind, &inliers, frame_pair).ok().or(Some(h))
    } else {
        Some(h)
    }
}
