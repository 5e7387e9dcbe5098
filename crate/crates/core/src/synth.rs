//! Synthetic multi-body rigid scenes seen by a static pinhole camera.
//!
//! Every body is a point set in its own frame, placed in camera coordinates by
//! an initial pose and then moved rigidly frame by frame. Points are projected
//! with `x = f·X/Z + c` (principal point at the image center) and perturbed by
//! Gaussian pixel noise.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajdata::{TrackSet, TrajError};

/// Draws per point before giving up on full visibility.
const MAX_POINT_DRAWS: usize = 100;
const ROTATION_TOL: f64 = 1e-9;
const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("body {0} is not visible in at least two frames")]
    InvisibleBody(usize),
    #[error("scene JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tracks(#[from] TrajError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Focal length in pixels.
    pub focal: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            focal: 800.0,
            width: 640.0,
            height: 480.0,
        }
    }
}

impl Camera {
    /// Projection of a camera-frame point, or `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<[f64; 2]> {
        (p.z > MIN_DEPTH).then(|| {
            [
                self.focal * p.x / p.z + 0.5 * self.width,
                self.focal * p.y / p.z + 0.5 * self.height,
            ]
        })
    }

    pub fn in_image(&self, x: [f64; 2]) -> bool {
        (0.0..self.width).contains(&x[0]) && (0.0..self.height).contains(&x[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Square patch in the local z = 0 plane.
    Plane,
    /// Surface of a cube.
    Box,
    /// Long thin bar along the local x axis.
    Bar,
    /// Uniform points in a cube.
    Cloud,
    /// Two perpendicular square patches sharing an edge.
    Multiplane,
}

/// Rigid placement; the rotation is an axis-angle vector in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(default)]
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

/// Rigid transform with an explicit rotation matrix (rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixPose {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pivot {
    /// Rotate about the body's initial center.
    #[default]
    Centroid,
    /// Rotate about the camera center.
    Camera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Motion {
    /// One camera-frame transform per frame, applied to the frame-0 points.
    Poses { poses: Vec<MatrixPose> },
    /// Frame f applies the per-frame rotation f times about the pivot and
    /// adds f times the per-frame translation.
    Constant {
        #[serde(default)]
        rotation: [f64; 3],
        #[serde(default)]
        translation: [f64; 3],
        #[serde(default)]
        pivot: Pivot,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub shape: Shape,
    pub num_points: usize,
    /// Edge length (bar: length) in world units.
    pub size: f64,
    pub pose: Pose,
    pub motion: Motion,
    /// Ground-truth label; defaults to the body index plus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub camera: Camera,
    pub num_frames: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub num_injected_outliers: usize,
    #[serde(default)]
    pub seed: u64,
    pub bodies: Vec<Body>,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        let c = &self.camera;
        if !(c.focal > 0.0 && c.width > 0.0 && c.height > 0.0) {
            return bad("camera focal length and image size must be positive".into());
        }
        if self.num_frames < 2 {
            return bad(format!("need at least 2 frames, got {}", self.num_frames));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.bodies.is_empty() {
            return bad("scene has no bodies".into());
        }
        if self.num_injected_outliers > 0 && self.bodies.len() < 2 {
            return bad("injected outliers switch bodies, so at least 2 bodies are needed".into());
        }
        for (b, body) in self.bodies.iter().enumerate() {
            if body.num_points == 0 || !(body.size > 0.0) {
                return bad(format!("body {b}: num_points and size must be positive"));
            }
            if let Motion::Poses { poses } = &body.motion {
                if poses.len() != self.num_frames {
                    return bad(format!("body {b}: {} poses for {} frames", poses.len(), self.num_frames));
                }
                for (f, p) in poses.iter().enumerate() {
                    check_rotation(&rows_to_matrix(&p.rotation))
                        .map_err(|m| SynthError::Invalid(format!("body {b}, frame {f}: {m}")))?;
                }
            }
        }
        Ok(())
    }
}

fn rows_to_matrix(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

/// Orthonormal with determinant +1, to 1e-9.
pub fn check_rotation(r: &Matrix3<f64>) -> Result<(), String> {
    let defect = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !(defect <= ROTATION_TOL) {
        return Err(format!("rotation not orthonormal (defect {defect:.3e})"));
    }
    let det = r.determinant();
    if !((det - 1.0).abs() <= ROTATION_TOL) {
        return Err(format!("rotation determinant {det}"));
    }
    Ok(())
}

fn axis_angle(v: [f64; 3]) -> Rotation3<f64> {
    Rotation3::new(Vector3::from(v))
}

/// Per-frame camera-frame transforms (R_f, t_f) mapping frame-0 points.
fn frame_transforms(body: &Body, num_frames: usize) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
    match &body.motion {
        Motion::Constant {
            rotation,
            translation,
            pivot,
        } => {
            let step = axis_angle(*rotation);
            let c = match pivot {
                Pivot::Centroid => Vector3::from(body.pose.translation),
                Pivot::Camera => Vector3::zeros(),
            };
            let t = Vector3::from(*translation);
            let mut r = Matrix3::identity();
            (0..num_frames)
                .map(|f| {
                    let out = (r, c - r * c + f as f64 * t);
                    r = step.matrix() * r;
                    out
                })
                .collect()
        }
        Motion::Poses { poses } => poses
            .iter()
            .map(|p| (rows_to_matrix(&p.rotation), Vector3::from(p.translation)))
            .collect(),
    }
}

fn sample_local(shape: Shape, size: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let mut u = || rng.random_range(-0.5..0.5) * size;
    match shape {
        Shape::Plane => Vector3::new(u(), u(), 0.0),
        Shape::Cloud => Vector3::new(u(), u(), u()),
        Shape::Bar => {
            let x = u();
            Vector3::new(x, 0.05 * u(), 0.05 * u())
        }
        Shape::Box => {
            let (a, b) = (u(), u());
            let face = rng.random_range(0..6);
            let s = if face % 2 == 0 { 0.5 * size } else { -0.5 * size };
            match face / 2 {
                0 => Vector3::new(s, a, b),
                1 => Vector3::new(a, s, b),
                _ => Vector3::new(a, b, s),
            }
        }
        Shape::Multiplane => {
            let (a, b) = (u(), u() + 0.5 * size);
            if rng.random_bool(0.5) {
                Vector3::new(a, 0.5 * b, 0.0)
            } else {
                Vector3::new(a, 0.0, -0.5 * b)
            }
        }
    }
}

/// Generated tracks plus ground truth beyond the labels.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub tracks: TrackSet,
    /// Camera-frame 3D position of every point in every frame (point-major).
    /// Injected outliers carry the position they were generated from.
    pub points3d: Vec<[f64; 3]>,
    /// Body index of every point (for outliers, the body they start on).
    pub body_of: Vec<usize>,
    /// Indices of injected body-switching tracks.
    pub outliers: Vec<usize>,
}

struct Track {
    xyz: Vec<Vector3<f64>>,
    uv: Vec<Option<[f64; 2]>>,
}

fn render(local: &Vector3<f64>, place: &(Matrix3<f64>, Vector3<f64>), tf: &[(Matrix3<f64>, Vector3<f64>)], cam: &Camera) -> Track {
    let x0 = place.0 * local + place.1;
    let xyz: Vec<Vector3<f64>> = tf.iter().map(|(r, t)| r * x0 + t).collect();
    let uv = xyz.iter().map(|p| cam.project(p).filter(|x| cam.in_image(*x))).collect();
    Track { xyz, uv }
}

fn visible_count(t: &Track) -> usize {
    t.uv.iter().filter(|x| x.is_some()).count()
}

/// Generates tracks for `spec`. Deterministic given the spec (including its seed).
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let f_count = spec.num_frames;
    let cam = spec.camera;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let transforms: Vec<_> = spec.bodies.iter().map(|b| frame_transforms(b, f_count)).collect();
    let placements: Vec<(Matrix3<f64>, Vector3<f64>)> = spec
        .bodies
        .iter()
        .map(|b| (*axis_angle(b.pose.rotation).matrix(), Vector3::from(b.pose.translation)))
        .collect();

    let mut tracks: Vec<Track> = Vec::new();
    let mut body_of = Vec::new();
    let mut labels = Vec::new();
    for (b, body) in spec.bodies.iter().enumerate() {
        for _ in 0..body.num_points {
            let mut best: Option<Track> = None;
            for _ in 0..MAX_POINT_DRAWS {
                let local = sample_local(body.shape, body.size, &mut rng);
                let t = render(&local, &placements[b], &transforms[b], &cam);
                let full = visible_count(&t) == f_count;
                if best.as_ref().is_none_or(|bt| visible_count(&t) > visible_count(bt)) {
                    best = Some(t);
                }
                if full {
                    break;
                }
            }
            let t = best.expect("at least one draw");
            if visible_count(&t) < 2 {
                return Err(SynthError::InvisibleBody(b));
            }
            tracks.push(t);
            body_of.push(b);
            labels.push(body.label.unwrap_or(b as u32 + 1));
        }
    }

    // Switching tracks: follow body a up to the switch frame, then drift with
    // the image motion of a point on body b.
    let mut outliers = Vec::new();
    let switch = f_count / 2;
    let nb = spec.bodies.len();
    for k in 0..spec.num_injected_outliers {
        let a = k % nb;
        let b = (a + 1) % nb;
        let mut chosen: Option<Track> = None;
        for _ in 0..MAX_POINT_DRAWS {
            let ta = render(&sample_local(spec.bodies[a].shape, spec.bodies[a].size, &mut rng), &placements[a], &transforms[a], &cam);
            let tb = render(&sample_local(spec.bodies[b].shape, spec.bodies[b].size, &mut rng), &placements[b], &transforms[b], &cam);
            let (Some(anchor), Some(base)) = (ta.uv[switch - 1], tb.uv[switch - 1]) else {
                continue;
            };
            let mut uv = ta.uv.clone();
            for f in switch..f_count {
                uv[f] = tb.uv[f]
                    .map(|p| [anchor[0] + p[0] - base[0], anchor[1] + p[1] - base[1]])
                    .filter(|x| cam.in_image(*x));
            }
            let t = Track { xyz: ta.xyz, uv };
            let full = visible_count(&t) == f_count;
            if chosen.as_ref().is_none_or(|c| visible_count(&t) > visible_count(c)) {
                chosen = Some(t);
            }
            if full {
                break;
            }
        }
        match chosen {
            Some(t) if visible_count(&t) >= 2 => {
                outliers.push(tracks.len());
                tracks.push(t);
                body_of.push(a);
                labels.push(spec.bodies[a].label.unwrap_or(a as u32 + 1));
            }
            _ => return Err(SynthError::InvisibleBody(a)),
        }
    }

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let n = tracks.len();
    let mut positions = Vec::with_capacity(n * f_count);
    let mut visible = Vec::with_capacity(n * f_count);
    let mut points3d = Vec::with_capacity(n * f_count);
    for t in &tracks {
        for f in 0..f_count {
            points3d.push([t.xyz[f].x, t.xyz[f].y, t.xyz[f].z]);
            match t.uv[f] {
                Some([x, y]) if spec.noise_sigma > 0.0 => {
                    positions.push([x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
                    visible.push(true);
                }
                Some(p) => {
                    positions.push(p);
                    visible.push(true);
                }
                None => {
                    positions.push([0.0, 0.0]);
                    visible.push(false);
                }
            }
        }
    }
    let tracks = TrackSet::new(f_count, (0..n as u64).collect(), positions, visible, Some(labels))?;
    Ok(SyntheticScene {
        tracks,
        points3d,
        body_of,
        outliers,
    })
}

/// Named scene regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Compact 3D bodies with independent general rigid motions.
    General,
    /// Multi-plane bodies rotating about the camera with translation below
    /// 1% of the scene depth.
    RotationDominant,
    /// Every body approaches the camera quickly, giving strong perspective.
    ForwardTranslation,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "general" => Ok(Preset::General),
            "rotation-dominant" => Ok(Preset::RotationDominant),
            "forward-translation" | "strong-forward-translation" => Ok(Preset::ForwardTranslation),
            _ => Err(format!(
                "unknown preset {s:?} (expected general, rotation-dominant or forward-translation)"
            )),
        }
    }
}

/// Options for [`preset_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetOptions {
    pub num_bodies: usize,
    pub total_points: usize,
    pub num_frames: usize,
    pub noise_sigma: f64,
    pub num_injected_outliers: usize,
    pub seed: u64,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            num_bodies: 2,
            total_points: 300,
            num_frames: 10,
            noise_sigma: 0.0,
            num_injected_outliers: 0,
            seed: 0,
        }
    }
}

/// Lateral body centers (x, y) at unit depth, for up to six bodies.
const SLOTS: [[f64; 2]; 6] = [[-0.22, -0.13], [0.22, 0.13], [0.22, -0.13], [-0.22, 0.13], [0.0, -0.02], [0.0, 0.2]];

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Builds a scene spec for a named regime. Randomized parameters (motion
/// axes, magnitudes, depths) are drawn from `opts.seed`.
pub fn preset_scene(preset: Preset, opts: &PresetOptions) -> Result<SceneSpec, SynthError> {
    if opts.num_bodies == 0 || opts.num_bodies > SLOTS.len() {
        return Err(SynthError::Invalid(format!("presets support 1 to {} bodies", SLOTS.len())));
    }
    if opts.total_points < opts.num_bodies {
        return Err(SynthError::Invalid("fewer points than bodies".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_5ce0e);
    let base = opts.total_points / opts.num_bodies;
    let extra = opts.total_points % opts.num_bodies;
    let bodies = (0..opts.num_bodies)
        .map(|b| {
            let num_points = base + usize::from(b < extra);
            let depth = match preset {
                Preset::General => rng.random_range(5.0..6.5),
                Preset::RotationDominant => rng.random_range(7.0..9.0),
                Preset::ForwardTranslation => rng.random_range(6.0..7.5),
            };
            let orientation = (unit_vector(&mut rng) * rng.random_range(0.0..std::f64::consts::PI)).into();
            let (shape, size, rotation, translation, pivot) = match preset {
                Preset::General => (
                    Shape::Cloud,
                    rng.random_range(1.4..1.8),
                    unit_vector(&mut rng) * rng.random_range(0.02..0.05),
                    unit_vector(&mut rng) * rng.random_range(0.15..0.25),
                    Pivot::Centroid,
                ),
                Preset::RotationDominant => (
                    Shape::Multiplane,
                    rng.random_range(1.2..1.6),
                    unit_vector(&mut rng) * rng.random_range(0.005..0.012),
                    unit_vector(&mut rng) * rng.random_range(0.0..0.008) * depth / opts.num_frames as f64,
                    Pivot::Camera,
                ),
                Preset::ForwardTranslation => {
                    let lateral = unit_vector(&mut rng) * rng.random_range(0.02..0.05);
                    (
                        Shape::Cloud,
                        rng.random_range(1.0..1.4),
                        unit_vector(&mut rng) * rng.random_range(0.01..0.03),
                        lateral - Vector3::z() * rng.random_range(0.25..0.35),
                        Pivot::Centroid,
                    )
                }
            };
            // Centre the path on the slot so the body stays in view.
            let [sx, sy] = SLOTS[b];
            let half = 0.5 * (opts.num_frames - 1) as f64;
            let shift = if pivot == Pivot::Centroid { translation * half } else { Vector3::zeros() };
            let pose = Pose {
                rotation: orientation,
                translation: (Vector3::new(sx * depth, sy * depth, depth) - shift).into(),
            };
            let motion = Motion::Constant {
                rotation: rotation.into(),
                translation: translation.into(),
                pivot,
            };
            Body {
                shape,
                num_points,
                size,
                pose,
                motion,
                label: None,
            }
        })
        .collect();
    let spec = SceneSpec {
        camera: Camera::default(),
        num_frames: opts.num_frames,
        noise_sigma: opts.noise_sigma,
        num_injected_outliers: opts.num_injected_outliers,
        seed: opts.seed,
        bodies,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_fully_visible_and_labeled() {
        for preset in [Preset::General, Preset::RotationDominant, Preset::ForwardTranslation] {
            let spec = preset_scene(preset, &PresetOptions { num_bodies: 3, ..Default::default() }).unwrap();
            let scene = generate_scene(&spec).unwrap();
            let ts = &scene.tracks;
            assert_eq!(ts.num_points(), 300);
            assert_eq!(ts.num_groups(), Some(3));
            let visible: usize = (0..ts.num_points()).map(|i| ts.frames_visible(i)).sum();
            assert_eq!(visible, 300 * 10, "{preset:?}");
        }
    }

    #[test]
    fn deterministic() {
        let spec = preset_scene(Preset::General, &PresetOptions { noise_sigma: 0.5, seed: 3, ..Default::default() }).unwrap();
        assert_eq!(generate_scene(&spec).unwrap().tracks, generate_scene(&spec).unwrap().tracks);
    }

    #[test]
    fn explicit_poses_are_checked() {
        let json = r#"{"num_frames": 2, "bodies": [{"shape": "cloud", "num_points": 5, "size": 1.0,
            "pose": {"translation": [0, 0, 5]},
            "motion": {"poses": [
                {"rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,0]},
                {"rotation": [[1,0,0],[0,1,0],[0,0,1.001]], "translation": [0,0,0]}]}}]}"#;
        assert!(matches!(SceneSpec::from_json(json), Err(SynthError::Invalid(_))));
    }

    #[test]
    fn body_behind_camera_is_an_error() {
        let spec = SceneSpec {
            camera: Camera::default(),
            num_frames: 3,
            noise_sigma: 0.0,
            num_injected_outliers: 0,
            seed: 0,
            bodies: vec![Body {
                shape: Shape::Cloud,
                num_points: 4,
                size: 1.0,
                pose: Pose {
                    rotation: [0.0; 3],
                    translation: [0.0, 0.0, -5.0],
                },
                motion: Motion::Constant {
                    rotation: [0.0; 3],
                    translation: [0.0; 3],
                    pivot: Pivot::Centroid,
                },
                label: None,
            }],
        };
        assert!(matches!(generate_scene(&spec), Err(SynthError::InvisibleBody(0))));
    }

    #[test]
    fn injected_outliers_are_recorded() {
        let spec = preset_scene(
            Preset::General,
            &PresetOptions {
                num_injected_outliers: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.outliers, (300..305).collect::<Vec<_>>());
        assert_eq!(scene.tracks.num_points(), 305);
    }
}
