//! JSON camera files, either explicit intrinsics and extrinsics or a
//! look-at description:
//!
//! ```json
//! {"width": 64, "height": 48, "fx": 60, "fy": 60, "cx": 32, "cy": 24,
//!  "rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,0]}
//! {"width": 64, "height": 48, "focal": 60,
//!  "eye": [0,0,-3], "target": [0,0,0], "up": [0,-1,0]}
//! ```

use std::path::Path;

use motionfield_core::splat::Camera;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum CameraSpec {
    Explicit {
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    },
    LookAt {
        width: usize,
        height: usize,
        focal: f64,
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
    },
}

impl CameraSpec {
    pub fn to_camera(&self) -> Result<Camera> {
        let camera = match *self {
            CameraSpec::Explicit { width, height, fx, fy, cx, cy, rotation, translation } => {
                Camera::new(fx, fy, cx, cy, rotation, translation, width, height)?
            }
            CameraSpec::LookAt { width, height, focal, eye, target, up } => {
                Camera::look_at(eye, target, up, focal, width, height)?
            }
        };
        Ok(camera)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("camera: {e}")))
    }
}

pub fn load_camera(path: &Path) -> Result<Camera> {
    let bytes = fsio::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{}: not UTF-8", path.display())))?;
    CameraSpec::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?.to_camera()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_forms_parse() {
        let explicit = CameraSpec::parse(
            r#"{"width": 4, "height": 3, "fx": 2, "fy": 2, "cx": 2, "cy": 1.5,
                "rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,0]}"#,
        )
        .unwrap();
        assert_eq!(explicit.to_camera().unwrap(), Camera::identity(2.0, 4, 3).unwrap());
        let look = CameraSpec::parse(
            r#"{"width": 4, "height": 3, "focal": 2, "eye": [0,0,-1], "target": [0,0,0], "up": [0,-1,0]}"#,
        )
        .unwrap();
        let cam = look.to_camera().unwrap();
        let p = cam.to_camera(&[0.0, 0.0, 0.0]);
        assert!((p[2] - 1.0).abs() < 1e-12 && p[0].abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn malformed_cameras_are_rejected() {
        assert!(CameraSpec::parse(r#"{"width": 4}"#).is_err());
        let reflected = CameraSpec::parse(
            r#"{"width": 4, "height": 3, "fx": 2, "fy": 2, "cx": 2, "cy": 1.5,
                "rotation": [[-1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,0]}"#,
        )
        .unwrap();
        assert!(reflected.to_camera().is_err());
    }
}
