//! Calibration file ingestion.
//!
//! The file is a flat JSON object produced by an external calibration
//! toolbox. Only validation happens here; nothing is estimated.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{build_rig, Extrinsics, GeometryError, Intrinsics, StereoRig};
use crate::linalg;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: String,
        field: &'static str,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub fx1: f64,
    pub fy1: f64,
    pub cx1: f64,
    pub cy1: f64,
    pub fx2: f64,
    pub fy2: f64,
    pub cx2: f64,
    pub cy2: f64,
    #[serde(rename = "R2")]
    pub r2: [f64; 9],
    pub t2: [f64; 3],
    pub theta_rad: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Calibration {
    /// The rig used throughout the tests and the simulator defaults:
    /// 1280x960 pixels, f = 1200 px, 6 cm baseline, 0.1 rad mounting yaw.
    pub fn reference() -> Self {
        let r = linalg::rotation_from_axis_angle(&[0.001, -0.004, 0.0005]);
        Self {
            fx1: 1200.0,
            fy1: 1200.0,
            cx1: 640.0,
            cy1: 480.0,
            fx2: 1195.0,
            fy2: 1198.0,
            cx2: 636.0,
            cy2: 482.0,
            r2: [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]],
            t2: [-0.06, 0.0, 0.0],
            theta_rad: 0.1,
            image_width: 1280,
            image_height: 960,
        }
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let r = &self.r2;
        [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]]
    }

    pub fn from_json_str(text: &str, path: &str) -> Result<Self, CalibrationError> {
        let calib: Calibration = serde_json::from_str(text).map_err(|e| CalibrationError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        calib.validate(path)?;
        Ok(calib)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| CalibrationError::Io {
            path: name.clone(),
            source,
        })?;
        Self::from_json_str(&text, &name)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serialises")
    }

    pub fn validate(&self, path: &str) -> Result<(), CalibrationError> {
        let field = |field: &'static str, message: String| CalibrationError::Field {
            path: path.to_string(),
            field,
            message,
        };
        for (name, v) in [("fx1", self.fx1), ("fy1", self.fy1), ("fx2", self.fx2), ("fy2", self.fy2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(field(name, format!("focal length must be positive, got {v}")));
            }
        }
        for (name, v, limit) in [
            ("cx1", self.cx1, self.image_width),
            ("cy1", self.cy1, self.image_height),
            ("cx2", self.cx2, self.image_width),
            ("cy2", self.cy2, self.image_height),
        ] {
            if !(v.is_finite() && v >= 0.0 && v <= limit as f64) {
                return Err(field(name, format!("principal point {v} outside image extent {limit}")));
            }
        }
        if self.image_width == 0 {
            return Err(field("image_width", "must be positive".into()));
        }
        if self.image_height == 0 {
            return Err(field("image_height", "must be positive".into()));
        }
        if !self.theta_rad.is_finite() {
            return Err(field("theta_rad", "must be finite".into()));
        }
        match Extrinsics::new(self.rotation(), self.t2) {
            Err(GeometryError::CalibrationInvalid(m)) if m.contains("translation") => return Err(field("t2", m)),
            Err(e) => return Err(field("R2", e.to_string())),
            Ok(_) => {}
        }
        if let Err(e) = self.rig() {
            return Err(field("t2", e.to_string()));
        }
        Ok(())
    }

    pub fn rig(&self) -> Result<StereoRig<f64>, GeometryError> {
        let k1 = Intrinsics::new(self.fx1, self.fy1, self.cx1, self.cy1)?;
        let k2 = Intrinsics::new(self.fx2, self.fy2, self.cx2, self.cy2)?;
        build_rig(k1, k2, Extrinsics::new(self.rotation(), self.t2)?)
    }
}
