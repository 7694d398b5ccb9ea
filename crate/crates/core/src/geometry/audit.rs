//! Reprojection audit of a calibration against checkerboard corner observations.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{reprojection_error, Calibration, GeometryError, PixelPoint, ReprojectionStats, WorldPoint};
use crate::formats::{write_atomic, FormatError, Table};
use crate::linalg::{mul3v, rotation_from_axis_angle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub poses: usize,
    /// Board distances from the reference camera, cycled over the poses.
    pub distances_m: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub square_m: f64,
    pub corner_noise_px: f64,
    pub max_tilt_rad: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            poses: 20,
            distances_m: vec![0.30, 0.45, 0.65],
            rows: 6,
            cols: 8,
            square_m: 0.02,
            corner_noise_px: 0.25,
            max_tilt_rad: 0.4,
        }
    }
}

/// Board corners in the reference camera frame with their observed pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckerboardFixture {
    pub pose: Vec<usize>,
    pub world: Vec<WorldPoint<f64>>,
    pub observed: Vec<(PixelPoint<f64>, PixelPoint<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub overall: ReprojectionStats<f64>,
    pub per_pose: Vec<ReprojectionStats<f64>>,
}

pub const FIXTURE_HEADER: [&str; 8] = ["pose", "x", "y", "z", "u1", "v1", "u2", "v2"];

fn inside(p: &PixelPoint<f64>, calib: &Calibration) -> bool {
    p.u >= 0.0 && p.v >= 0.0 && p.u <= calib.image_width as f64 - 1.0 && p.v <= calib.image_height as f64 - 1.0
}

/// Seeded checkerboard views; every corner is visible in both cameras.
pub fn synthetic_checkerboard(
    calib: &Calibration,
    cfg: &FixtureConfig,
    seed: u64,
) -> Result<CheckerboardFixture, GeometryError> {
    if cfg.poses == 0 || cfg.distances_m.is_empty() || cfg.rows < 2 || cfg.cols < 2 {
        return Err(GeometryError::Argument("fixture needs poses, distances and at least a 2x2 grid".into()));
    }
    let rig = calib.rig()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.corner_noise_px.max(0.0))
        .map_err(|e| GeometryError::Argument(format!("corner noise: {e}")))?;
    let mut fixture = CheckerboardFixture {
        pose: Vec::new(),
        world: Vec::new(),
        observed: Vec::new(),
    };
    let (w, h) = ((cfg.cols - 1) as f64 * cfg.square_m, (cfg.rows - 1) as f64 * cfg.square_m);
    for pose in 0..cfg.poses {
        let d = cfg.distances_m[pose % cfg.distances_m.len()];
        let mut accepted = None;
        for _ in 0..1000 {
            let tilt = [
                rng.random_range(-cfg.max_tilt_rad..=cfg.max_tilt_rad),
                rng.random_range(-cfg.max_tilt_rad..=cfg.max_tilt_rad),
                rng.random_range(-0.3..=0.3),
            ];
            let r = rotation_from_axis_angle(&tilt);
            let centre = [rng.random_range(-0.2..=0.2) * d, rng.random_range(-0.15..=0.15) * d, d];
            let mut pts = Vec::with_capacity(cfg.rows * cfg.cols);
            let mut pix = Vec::with_capacity(cfg.rows * cfg.cols);
            let mut ok = true;
            'grid: for i in 0..cfg.rows {
                for j in 0..cfg.cols {
                    let local = [j as f64 * cfg.square_m - w / 2.0, i as f64 * cfg.square_m - h / 2.0, 0.0];
                    let p = mul3v(&r, &local);
                    let x = WorldPoint::camera(p[0] + centre[0], p[1] + centre[1], p[2] + centre[2]);
                    match rig.project_pair(&x) {
                        Ok((a, b)) if inside(&a, calib) && inside(&b, calib) => {
                            pts.push(x);
                            pix.push((a, b));
                        }
                        _ => {
                            ok = false;
                            break 'grid;
                        }
                    }
                }
            }
            if ok {
                accepted = Some((pts, pix));
                break;
            }
        }
        let (pts, pix) = accepted
            .ok_or_else(|| GeometryError::Argument(format!("board at {d} m never fits both images")))?;
        for (x, (a, b)) in pts.into_iter().zip(pix) {
            let mut jitter = |p: PixelPoint<f64>| PixelPoint::new(p.u + noise.sample(&mut rng), p.v + noise.sample(&mut rng));
            let obs = (jitter(a), jitter(b));
            fixture.pose.push(pose);
            fixture.world.push(x);
            fixture.observed.push(obs);
        }
    }
    Ok(fixture)
}

/// Reprojection error of the whole fixture and of each pose.
pub fn audit(calib: &Calibration, fixture: &CheckerboardFixture) -> Result<AuditReport, GeometryError> {
    let rig = calib.rig()?;
    let overall = reprojection_error(&rig, &fixture.world, &fixture.observed)?;
    let n_poses = fixture.pose.iter().max().map_or(0, |m| m + 1);
    let mut per_pose = Vec::new();
    for p in 0..n_poses {
        let idx: Vec<usize> = (0..fixture.pose.len()).filter(|&i| fixture.pose[i] == p).collect();
        if idx.is_empty() {
            continue;
        }
        let world: Vec<_> = idx.iter().map(|&i| fixture.world[i]).collect();
        let obs: Vec<_> = idx.iter().map(|&i| fixture.observed[i]).collect();
        per_pose.push(reprojection_error(&rig, &world, &obs)?);
    }
    Ok(AuditReport { overall, per_pose })
}

impl CheckerboardFixture {
    pub fn to_csv(&self) -> String {
        let mut out = FIXTURE_HEADER.join(",");
        out.push('\n');
        for ((p, x), (a, b)) in self.pose.iter().zip(&self.world).zip(&self.observed) {
            out.push_str(&format!(
                "{p},{},{},{},{},{},{},{}\n",
                x.x, x.y, x.z, a.u, a.v, b.u, b.v
            ));
        }
        out
    }

    pub fn from_csv(text: &str, name: &str) -> Result<Self, FormatError> {
        let table = Table::parse(text, name, &FIXTURE_HEADER)?;
        let mut f = Self {
            pose: Vec::new(),
            world: Vec::new(),
            observed: Vec::new(),
        };
        for row in &table.rows {
            let g = |i: usize| table.get::<f64>(row, i, FIXTURE_HEADER[i]);
            f.pose.push(table.get::<usize>(row, 0, "pose")?);
            f.world.push(WorldPoint::camera(g(1)?, g(2)?, g(3)?));
            f.observed.push((PixelPoint::new(g(4)?, g(5)?), PixelPoint::new(g(6)?, g(7)?)));
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        write_atomic(path, &self.to_csv())
    }
}
