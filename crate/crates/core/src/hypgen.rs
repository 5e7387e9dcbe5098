//! Random minimal-sample hypotheses over consecutive frame pairs, and the
//! point-by-hypothesis residual matrix.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::binio::{self, BinError, RESIDUAL_MAGIC};
use crate::geometry::{fit_model, Correspondence, Hypothesis, ModelKind};
use crate::trajdata::TrackSet;

/// Re-draws allowed per slot after a degenerate sample.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Error)]
pub enum HypGenError {
    #[error("per-pair hypothesis count must be at least 1")]
    ZeroPerPair,
    #[error("no frame pair has {needed} co-visible points for {kind} hypotheses")]
    NoUsablePair { kind: ModelKind, needed: usize },
    #[error("hypotheses mix model kinds ({0} and {1})")]
    MixedKinds(ModelKind, ModelKind),
    #[error("hypothesis frame pair ({0}, {1}) outside the track set")]
    FrameOutOfRange(usize, usize),
    #[error("residual file: {0}")]
    Bin(#[from] BinError),
    #[error("residual file: {0}")]
    Format(String),
}

/// Hypotheses for one model kind plus anything worth reporting.
#[derive(Debug, Clone)]
pub struct HypothesisSet {
    pub kind: ModelKind,
    pub hypotheses: Vec<Hypothesis>,
    pub warnings: Vec<String>,
}

/// Mixes the user seed, model kind and slot index into an RNG stream.
fn slot_rng(seed: u64, kind: ModelKind, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(kind.code()) << 56));
    rng.set_stream(slot);
    rng
}

/// Draws `per_pair` minimal samples on every consecutive frame pair and fits
/// one hypothesis to each. Each slot owns its RNG stream, so the output does
/// not depend on thread scheduling.
pub fn generate_hypotheses(
    ts: &TrackSet,
    kind: ModelKind,
    per_pair: usize,
    seed: u64,
) -> Result<HypothesisSet, HypGenError> {
    if per_pair == 0 {
        return Err(HypGenError::ZeroPerPair);
    }
    let p = kind.minimal_size();
    let mut warnings = Vec::new();
    let mut hypotheses = Vec::with_capacity(per_pair * (ts.num_frames() - 1));
    let mut any_pair = false;

    for f in 0..ts.num_frames() - 1 {
        let pool = ts.covisible_points(f, f + 1);
        if pool.len() < p {
            warnings.push(format!(
                "frame pair ({}, {}) has {} co-visible points (< {p}), no {kind} hypotheses",
                f + 1,
                f + 2,
                pool.len()
            ));
            continue;
        }
        any_pair = true;
        let pair_hyps: Vec<Option<Hypothesis>> = (0..per_pair)
            .into_par_iter()
            .map(|j| {
                let mut rng = slot_rng(seed, kind, (f * per_pair + j) as u64);
                let mut corr: Vec<Correspondence> = Vec::with_capacity(p);
                for _ in 0..=MAX_REDRAWS {
                    corr.clear();
                    corr.extend(sample(&mut rng, pool.len(), p).into_iter().map(|k| {
                        let i = pool[k];
                        (ts.position(i, f), ts.position(i, f + 1))
                    }));
                    if let Ok(h) = fit_model(kind, &corr, (f, f + 1)) {
                        return Some(h);
                    }
                }
                None
            })
            .collect();
        let before = hypotheses.len();
        hypotheses.extend(pair_hyps.into_iter().flatten());
        let got = hypotheses.len() - before;
        if got < per_pair {
            warnings.push(format!(
                "frame pair ({}, {}): {} of {per_pair} {kind} slots stayed degenerate",
                f + 1,
                f + 2,
                per_pair - got
            ));
        }
    }
    if !any_pair || hypotheses.is_empty() {
        return Err(HypGenError::NoUsablePair { kind, needed: p });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(HypothesisSet {
        kind,
        hypotheses,
        warnings,
    })
}

/// N×K Sampson residuals (px²); +∞ where a point is not visible in both
/// frames of the hypothesis or the residual degenerates.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    kind: ModelKind,
    num_points: usize,
    num_hypotheses: usize,
    values: Vec<f64>,
    frame_pairs: Vec<(usize, usize)>,
}

impl ResidualMatrix {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    pub fn row(&self, point: usize) -> &[f64] {
        &self.values[point * self.num_hypotheses..(point + 1) * self.num_hypotheses]
    }

    pub fn get(&self, point: usize, hyp: usize) -> f64 {
        self.values[point * self.num_hypotheses + hyp]
    }

    /// Frame pair of each hypothesis (empty when loaded from a cache file).
    pub fn frame_pairs(&self) -> &[(usize, usize)] {
        &self.frame_pairs
    }

    /// Writes the binary cache: `RSRM`, kind, N, K, row-major f64.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), HypGenError> {
        binio::write_matrix(
            w,
            RESIDUAL_MAGIC,
            Some(self.kind),
            &[self.num_points as u64, self.num_hypotheses as u64],
            &self.values,
        )?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, HypGenError> {
        let raw = binio::read_matrix(r, RESIDUAL_MAGIC, 2)?;
        let kind = raw
            .kind
            .ok_or_else(|| HypGenError::Format("residual matrix without a model kind".into()))?;
        if raw.values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(HypGenError::Format("residuals must be non-negative or +inf".into()));
        }
        Ok(ResidualMatrix {
            kind,
            num_points: raw.dims[0] as usize,
            num_hypotheses: raw.dims[1] as usize,
            values: raw.values,
            frame_pairs: Vec::new(),
        })
    }
}

/// Evaluates every hypothesis on every point.
pub fn compute_residuals(ts: &TrackSet, hyps: &[Hypothesis]) -> Result<ResidualMatrix, HypGenError> {
    let Some(first) = hyps.first() else {
        return Err(HypGenError::Format("no hypotheses".into()));
    };
    let kind = first.kind;
    for h in hyps {
        if h.kind != kind {
            return Err(HypGenError::MixedKinds(kind, h.kind));
        }
        if h.frame_pair.1 >= ts.num_frames() {
            return Err(HypGenError::FrameOutOfRange(h.frame_pair.0, h.frame_pair.1));
        }
    }
    let k = hyps.len();
    let rows: Vec<Vec<f64>> = (0..ts.num_points())
        .into_par_iter()
        .map(|i| {
            hyps.iter()
                .map(|h| {
                    let (f1, f2) = h.frame_pair;
                    if ts.is_visible(i, f1) && ts.is_visible(i, f2) {
                        h.sampson_error(ts.position(i, f1), ts.position(i, f2))
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    Ok(ResidualMatrix {
        kind,
        num_points: ts.num_points(),
        num_hypotheses: k,
        values: rows.concat(),
        frame_pairs: hyps.iter().map(|h| h.frame_pair).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_frame_set(n: usize) -> TrackSet {
        let pos: Vec<[f64; 2]> = (0..n)
            .flat_map(|i| {
                let x = (i * 37 % 101) as f64;
                let y = (i * 59 % 97) as f64;
                [[x, y], [x + 1.0 + 0.01 * y, y - 2.0]]
            })
            .collect();
        TrackSet::new(2, (0..n as u64).collect(), pos, vec![true; 2 * n], None).unwrap()
    }

    #[test]
    fn one_pair_one_hypothesis() {
        let ts = two_frame_set(20);
        let set = generate_hypotheses(&ts, ModelKind::Homography, 1, 5).unwrap();
        assert_eq!(set.hypotheses.len(), 1);
        assert_eq!(set.hypotheses[0].frame_pair, (0, 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let ts = two_frame_set(30);
        let a = generate_hypotheses(&ts, ModelKind::Homography, 25, 42).unwrap();
        let b = generate_hypotheses(&ts, ModelKind::Homography, 25, 42).unwrap();
        assert_eq!(a.hypotheses, b.hypotheses);
        let c = generate_hypotheses(&ts, ModelKind::Homography, 25, 43).unwrap();
        assert_ne!(a.hypotheses, c.hypotheses);
    }

    #[test]
    fn too_few_points_everywhere_is_an_error() {
        let ts = two_frame_set(5);
        assert!(matches!(
            generate_hypotheses(&ts, ModelKind::Fundamental, 3, 0),
            Err(HypGenError::NoUsablePair { needed: 8, .. })
        ));
        assert!(matches!(
            generate_hypotheses(&ts, ModelKind::Affine, 0, 0),
            Err(HypGenError::ZeroPerPair)
        ));
    }

    #[test]
    fn invisible_points_get_infinite_residuals() {
        let n = 6;
        let f = 3;
        let mut vis = vec![true; n * f];
        vis[f] = false; // point 1, frame 0
        let pos: Vec<[f64; 2]> = (0..n * f)
            .map(|k| if vis[k] { [(k % 7) as f64 * 10.0, (k % 5) as f64 * 13.0] } else { [0.0, 0.0] })
            .collect();
        let ts = TrackSet::new(f, (0..n as u64).collect(), pos, vis, None).unwrap();
        let set = generate_hypotheses(&ts, ModelKind::Affine, 4, 1).unwrap();
        let rm = compute_residuals(&ts, &set.hypotheses).unwrap();
        for (k, h) in set.hypotheses.iter().enumerate() {
            assert_eq!(rm.get(1, k).is_infinite(), h.frame_pair.0 == 0, "hyp {k}");
        }
    }

    #[test]
    fn cache_roundtrip() {
        let ts = two_frame_set(12);
        let set = generate_hypotheses(&ts, ModelKind::Affine, 3, 9).unwrap();
        let rm = compute_residuals(&ts, &set.hypotheses).unwrap();
        let mut buf = Vec::new();
        rm.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 16 + 8 * 12 * rm.num_hypotheses());
        let back = ResidualMatrix::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.values, rm.values);
        assert_eq!(back.kind(), ModelKind::Affine);
    }
}
