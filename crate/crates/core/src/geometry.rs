//! Two-view geometric models fitted by the direct linear transform.
//!
//! Three model kinds are supported: affine maps, homographies and fundamental
//! matrices. Every fit goes through Hartley normalization (centroid at the
//! origin, mean distance √2) and the result is returned in pixel coordinates
//! with unit Frobenius norm.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An image point in pixels.
pub type Point2 = [f64; 2];

/// A point correspondence between two frames.
pub type Correspondence = (Point2, Point2);

/// Relative singular-value floor below which a design matrix is considered to
/// have lost rank.
const DEGENERACY_RATIO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{kind} needs at least {needed} correspondences, got {got}")]
    TooFewPoints {
        kind: ModelKind,
        needed: usize,
        got: usize,
    },
    #[error("non-finite coordinate in correspondence {0}")]
    NonFinite(usize),
    #[error("degenerate {kind} sample (singular-value ratio {ratio:.3e})")]
    DegenerateSample { kind: ModelKind, ratio: f64 },
    #[error("frame pair ({0}, {1}) must satisfy f1 < f2")]
    BadFramePair(usize, usize),
}

/// The geometric model family used to generate hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Affine,
    Homography,
    Fundamental,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Affine, ModelKind::Homography, ModelKind::Fundamental];

    /// Size of a minimal sample.
    pub fn minimal_size(self) -> usize {
        match self {
            ModelKind::Affine => 3,
            ModelKind::Homography => 4,
            ModelKind::Fundamental => 8,
        }
    }

    /// Stable numeric code used by the binary file formats.
    pub fn code(self) -> u32 {
        match self {
            ModelKind::Affine => 0,
            ModelKind::Homography => 1,
            ModelKind::Fundamental => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Affine),
            1 => Some(ModelKind::Homography),
            2 => Some(ModelKind::Fundamental),
            _ => None,
        }
    }

    /// Single-letter name as used on the command line (`a`, `h`, `f`).
    pub fn letter(self) -> char {
        match self {
            ModelKind::Affine => 'a',
            ModelKind::Homography => 'h',
            ModelKind::Fundamental => 'f',
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelKind::Affine => "affine",
            ModelKind::Homography => "homography",
            ModelKind::Fundamental => "fundamental",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "affine" => Ok(ModelKind::Affine),
            "h" | "homography" => Ok(ModelKind::Homography),
            "f" | "fundamental" => Ok(ModelKind::Fundamental),
            other => Err(format!("unknown model kind '{other}'")),
        }
    }
}

/// One fitted model on a frame pair. The matrix has unit Frobenius norm and
/// its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub kind: ModelKind,
    pub frame_pair: (usize, usize),
    pub matrix: Matrix3<f64>,
}

impl Hypothesis {
    /// Wraps a raw matrix, applying the scale and sign gauge.
    pub fn new(kind: ModelKind, frame_pair: (usize, usize), matrix: Matrix3<f64>) -> Self {
        Hypothesis {
            kind,
            frame_pair,
            matrix: gauge_fix(matrix),
        }
    }

    pub fn sampson_error(&self, x1: Point2, x2: Point2) -> f64 {
        sampson_error(self.kind, &self.matrix, x1, x2)
    }
}

/// Scales to unit Frobenius norm and makes the largest-magnitude entry positive.
pub fn gauge_fix(m: Matrix3<f64>) -> Matrix3<f64> {
    let norm = m.norm();
    if norm == 0.0 || !norm.is_finite() {
        return m;
    }
    let mut out = m / norm;
    let mut best = 0;
    for (idx, v) in out.iter().enumerate() {
        if v.abs() > out[best].abs() {
            best = idx;
        }
    }
    if out[best] < 0.0 {
        out = -out;
    }
    out
}

/// Similarity transform moving the centroid to the origin with mean distance √2.
fn hartley_transform<'a>(points: impl Iterator<Item = &'a Point2> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-300 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: Point2) -> Point2 {
    [t[(0, 0)] * p[0] + t[(0, 2)], t[(1, 1)] * p[1] + t[(1, 2)]]
}

fn inverse_similarity(t: &Matrix3<f64>) -> Matrix3<f64> {
    let s = t[(0, 0)];
    Matrix3::new(1.0 / s, 0.0, -t[(0, 2)] / s, 0.0, 1.0 / s, -t[(1, 2)] / s, 0.0, 0.0, 1.0)
}

/// Fits a model of `kind` to the correspondences by normalized DLT.
pub fn fit_model(
    kind: ModelKind,
    correspondences: &[Correspondence],
    frame_pair: (usize, usize),
) -> Result<Hypothesis, GeometryError> {
    let needed = kind.minimal_size();
    if correspondences.len() < needed {
        return Err(GeometryError::TooFewPoints {
            kind,
            needed,
            got: correspondences.len(),
        });
    }
    if frame_pair.0 >= frame_pair.1 {
        return Err(GeometryError::BadFramePair(frame_pair.0, frame_pair.1));
    }
    if let Some(bad) = correspondences
        .iter()
        .position(|(a, b)| !(a[0].is_finite() && a[1].is_finite() && b[0].is_finite() && b[1].is_finite()))
    {
        return Err(GeometryError::NonFinite(bad));
    }

    let t1 = hartley_transform(correspondences.iter().map(|c| &c.0));
    let t2 = hartley_transform(correspondences.iter().map(|c| &c.1));
    let normalized: Vec<Correspondence> = correspondences
        .iter()
        .map(|(a, b)| (apply(&t1, *a), apply(&t2, *b)))
        .collect();

    let m_norm = match kind {
        ModelKind::Affine => fit_affine_normalized(&normalized)?,
        ModelKind::Homography => fit_projective_normalized(kind, &normalized, homography_rows)?,
        ModelKind::Fundamental => {
            let f = fit_projective_normalized(kind, &normalized, fundamental_rows)?;
            enforce_rank2(&f)
        }
    };

    let matrix = match kind {
        ModelKind::Fundamental => t2.transpose() * m_norm * t1,
        ModelKind::Affine | ModelKind::Homography => inverse_similarity(&t2) * m_norm * t1,
    };
    Ok(Hypothesis::new(kind, frame_pair, matrix))
}

type Row9 = [f64; 9];

fn homography_rows(c: &Correspondence, out: &mut Vec<Row9>) {
    let ([x, y], [u, v]) = *c;
    out.push([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    out.push([x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
}

fn fundamental_rows(c: &Correspondence, out: &mut Vec<Row9>) {
    let ([x, y], [u, v]) = *c;
    out.push([u * x, u * y, u, v * x, v * y, v, x, y, 1.0]);
}

/// Null vector of the stacked design matrix via SVD. The design is padded to
/// at least 9 rows so the full right singular basis is available.
fn fit_projective_normalized(
    kind: ModelKind,
    pts: &[Correspondence],
    rows_for: fn(&Correspondence, &mut Vec<Row9>),
) -> Result<Matrix3<f64>, GeometryError> {
    let mut rows = Vec::with_capacity(pts.len() * 2);
    for c in pts {
        rows_for(c, &mut rows);
    }
    // Accumulating AᵀA would square the condition number; an SVD of the
    // compressed 9×9 R factor avoids that for tall designs.
    let square = compress_rows(&rows);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let largest = sv[order[0]];
    let second_smallest = sv[order[7]];
    let ratio = if largest > 0.0 { second_smallest / largest } else { 0.0 };
    if ratio < DEGENERACY_RATIO {
        return Err(GeometryError::DegenerateSample { kind, ratio });
    }
    let null = v_t.row(order[8]);
    Ok(Matrix3::new(
        null[0], null[1], null[2], null[3], null[4], null[5], null[6], null[7], null[8],
    ))
}

/// Reduces an m×9 design to a 9×9 matrix with the same right singular
/// vectors and singular values (QR's R factor, zero-padded for m < 9).
fn compress_rows(rows: &[Row9]) -> SMatrix<f64, 9, 9> {
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    if rows.len() <= 9 {
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        return a;
    }
    let dyn_a = nalgebra::DMatrix::from_fn(rows.len(), 9, |i, j| rows[i][j]);
    let r = dyn_a.qr().r();
    for i in 0..9 {
        for j in 0..9 {
            a[(i, j)] = r[(i, j)];
        }
    }
    a
}

fn fit_affine_normalized(pts: &[Correspondence]) -> Result<Matrix3<f64>, GeometryError> {
    let n = pts.len();
    let design = nalgebra::DMatrix::from_fn(n, 3, |i, j| match j {
        0 => pts[i].0[0],
        1 => pts[i].0[1],
        _ => 1.0,
    });
    let svd = design.svd(true, true);
    let sv = &svd.singular_values;
    let largest = sv.max();
    let smallest = sv.min();
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if ratio < DEGENERACY_RATIO {
        return Err(GeometryError::DegenerateSample {
            kind: ModelKind::Affine,
            ratio,
        });
    }
    let targets = nalgebra::DMatrix::from_fn(n, 2, |i, j| pts[i].1[j]);
    let params = svd
        .solve(&targets, 0.0)
        .map_err(|_| GeometryError::DegenerateSample {
            kind: ModelKind::Affine,
            ratio,
        })?;
    Ok(Matrix3::new(
        params[(0, 0)],
        params[(1, 0)],
        params[(2, 0)],
        params[(0, 1)],
        params[(1, 1)],
        params[(2, 1)],
        0.0,
        0.0,
        1.0,
    ))
}

/// Zeroes the smallest singular value.
pub fn enforce_rank2(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    let mut s = svd.singular_values;
    let (min_idx, _) = s.argmin();
    s[min_idx] = 0.0;
    u * Matrix3::from_diagonal(&s) * v_t
}

/// Sampson error (px²) of the correspondence `x1 → x2` under `m`.
///
/// For fundamental matrices this is the classic first-order distance to the
/// epipolar variety. For homographies and affine maps it is εᵀ(JJᵀ)⁻¹ε where ε
/// is the two-row algebraic transfer residual and J its Jacobian with respect
/// to the four point coordinates. Degenerate denominators yield +∞.
pub fn sampson_error(kind: ModelKind, m: &Matrix3<f64>, x1: Point2, x2: Point2) -> f64 {
    match kind {
        ModelKind::Fundamental => sampson_fundamental(m, x1, x2),
        ModelKind::Homography | ModelKind::Affine => sampson_transfer(m, x1, x2),
    }
}

fn sampson_fundamental(f: &Matrix3<f64>, x1: Point2, x2: Point2) -> f64 {
    let p1 = Vector3::new(x1[0], x1[1], 1.0);
    let p2 = Vector3::new(x2[0], x2[1], 1.0);
    let fx1 = f * p1;
    let ftx2 = f.transpose() * p2;
    let algebraic = p2.dot(&fx1);
    let denom = fx1[0] * fx1[0] + fx1[1] * fx1[1] + ftx2[0] * ftx2[0] + ftx2[1] * ftx2[1];
    if denom < 1e-300 {
        return f64::INFINITY;
    }
    algebraic * algebraic / denom
}

fn sampson_transfer(h: &Matrix3<f64>, x1: Point2, x2: Point2) -> f64 {
    let [x, y] = x1;
    let [u, v] = x2;
    let a = h[(0, 0)] * x + h[(0, 1)] * y + h[(0, 2)];
    let b = h[(1, 0)] * x + h[(1, 1)] * y + h[(1, 2)];
    let c = h[(2, 0)] * x + h[(2, 1)] * y + h[(2, 2)];

    let e1 = -b + v * c;
    let e2 = a - u * c;

    // Jacobian rows w.r.t. (x, y, u, v).
    let j1 = [-h[(1, 0)] + v * h[(2, 0)], -h[(1, 1)] + v * h[(2, 1)], 0.0, c];
    let j2 = [h[(0, 0)] - u * h[(2, 0)], h[(0, 1)] - u * h[(2, 1)], -c, 0.0];

    let dot = |p: &[f64; 4], q: &[f64; 4]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
    let s11 = dot(&j1, &j1);
    let s12 = dot(&j1, &j2);
    let s22 = dot(&j2, &j2);
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-300 {
        return f64::INFINITY;
    }
    let value = (s22 * e1 * e1 - 2.0 * s12 * e1 * e2 + s11 * e2 * e2) / det;
    value.max(0.0)
}
