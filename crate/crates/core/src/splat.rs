//! Forward-only CPU Gaussian splatting.
//!
//! Gaussians are projected with a pinhole camera, their covariances are
//! pushed through the projection Jacobian and dilated, and the splats are
//! composited front to back after one global depth sort. Pixel `(x, y)` is
//! sampled at integer coordinates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{mat3_mul, mat3_transpose, mat3_vec, Mat3};
use crate::scene::{norm4, sigmoid, PosedCloud};

pub const NEAR_PLANE: f64 = 0.01;
/// Added to both diagonal entries of every projected covariance.
pub const DILATION: f64 = 0.3;
/// A pixel stops accumulating once its transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

/// Pinhole camera with world-to-camera extrinsics. Camera space looks down
/// `+z` with `x` right and `y` down.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: [f64; 3],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let camera = Self { fx, fy, cx, cy, rotation, translation, width, height };
        camera.validate()?;
        Ok(camera)
    }

    /// Identity extrinsics with the principal point at the image center.
    pub fn identity(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
            width,
            height,
        )
    }

    /// Camera at `eye` looking at `target`, with `up` pointing up in the
    /// image and the principal point at the image center.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = normalize3(sub3(target, eye)).ok_or_else(|| Error::invalid("eye and target coincide"))?;
        let right = normalize3(cross3(forward, up)).ok_or_else(|| Error::invalid("up is parallel to the view"))?;
        let down = cross3(forward, right);
        let rotation = [right, down, forward];
        let t = mat3_vec(&rotation, &eye);
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, rotation, [-t[0], -t[1], -t[2]], width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::invalid("focal lengths must be positive and finite"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && self.translation.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("camera principal point or translation".into()));
        }
        let rrt = mat3_mul(&self.rotation, &mat3_transpose(&self.rotation));
        for (r, row) in rrt.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let want = if r == c { 1.0 } else { 0.0 };
                if !(libm::fabs(v - want) <= 1e-9) {
                    return Err(Error::invalid("camera rotation is not orthonormal"));
                }
            }
        }
        let det = det3(&self.rotation);
        if !(libm::fabs(det - 1.0) <= 1e-9) {
            return Err(Error::invalid("camera rotation is a reflection"));
        }
        Ok(())
    }

    /// Camera-space position of a world point.
    pub fn to_camera(&self, p: &[f64; 3]) -> [f64; 3] {
        let r = mat3_vec(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize3(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    (n > 1e-12).then(|| v.map(|x| x / n))
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        Self { width, height, pixels: vec![color; width * height] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    /// 8-bit channels, `round(255 v)` after clamping to `[0, 1]`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.map(|v| libm::round(v.clamp(0.0, 1.0) * 255.0) as u8)).collect()
    }

    /// Binary PPM (`P6`, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_rgb8());
        out
    }
}

/// A Gaussian projected to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub mean: [f64; 2],
    /// Dilated, symmetric.
    pub cov: [[f64; 2]; 2],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn rotation_matrix(q: &[f64; 4]) -> Mat3 {
    let [w, x, y, z] = *q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `R S S^T R^T` for unit `q` and positive activated scales `s`.
pub fn covariance_from(q: &[f64; 4], s: &[f64; 3]) -> Result<Mat3> {
    let norm = norm4(q);
    if !(libm::fabs(norm - 1.0) <= 1e-6) {
        return Err(Error::invalid(format!("covariance needs a unit quaternion, norm is {norm}")));
    }
    if !s.iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(Error::invalid("covariance needs positive finite scales"));
    }
    let r = rotation_matrix(q);
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let v = (0..3).map(|k| r[a][k] * s[k] * s[k] * r[b][k]).sum();
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    Ok(out)
}

/// Pixel position and camera depth of `mu`, or `None` when it lies on or
/// behind the near plane.
pub fn project_mean(camera: &Camera, mu: &[f64; 3]) -> Option<([f64; 2], f64)> {
    let p = camera.to_camera(mu);
    if !(p[2] > NEAR_PLANE) {
        return None;
    }
    Some(([camera.fx * p[0] / p[2] + camera.cx, camera.fy * p[1] / p[2] + camera.cy], p[2]))
}

/// `J W Sigma W^T J^T + 0.3 I`, with `J` the projection Jacobian at `mu`
/// and `W` the camera rotation. `None` for culled means.
pub fn project_cov(camera: &Camera, mu: &[f64; 3], sigma: &Mat3) -> Option<[[f64; 2]; 2]> {
    let p = camera.to_camera(mu);
    if !(p[2] > NEAR_PLANE) {
        return None;
    }
    let (x, y, z) = (p[0], p[1], p[2]);
    let j = [[camera.fx / z, 0.0, -camera.fx * x / (z * z)], [0.0, camera.fy / z, -camera.fy * y / (z * z)]];
    let w = &camera.rotation;
    let cam_sigma = mat3_mul(&mat3_mul(w, sigma), &mat3_transpose(w));
    let jw: [[f64; 3]; 2] =
        core::array::from_fn(|r| core::array::from_fn(|c| (0..3).map(|k| j[r][k] * cam_sigma[k][c]).sum()));
    let entry = |r: usize, c: usize| (0..3).map(|k| jw[r][k] * j[c][k]).sum::<f64>();
    let off = entry(0, 1);
    Some([[entry(0, 0) + DILATION, off], [off, entry(1, 1) + DILATION]])
}

/// Projects every Gaussian of `posed`, dropping culled or degenerate ones,
/// sorted front to back (ties by index).
pub fn splats(posed: &PosedCloud, camera: &Camera) -> Vec<Splat2D> {
    let mut out: Vec<(usize, Splat2D)> = Vec::with_capacity(posed.len());
    for i in 0..posed.len() {
        let mu = &posed.means[i];
        let scales = posed.log_scales[i].map(libm::exp);
        let Ok(sigma) = covariance_from(&posed.rotations[i], &scales) else { continue };
        let (Some((mean, depth)), Some(cov)) = (project_mean(camera, mu), project_cov(camera, mu, &sigma)) else {
            continue;
        };
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(det > 0.0 && mean.iter().all(|v| v.is_finite())) {
            continue;
        }
        out.push((i, Splat2D { mean, cov, depth, opacity: sigmoid(posed.opacity_logits[i]), color: posed.colors[i] }));
    }
    out.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(_, s)| s).collect()
}

/// Front-to-back alpha compositing of the depth-sorted splats over
/// `background`.
pub fn render(posed: &PosedCloud, camera: &Camera, background: [f64; 3]) -> Image {
    let (w, h) = (camera.width, camera.height);
    let mut color = vec![[0.0; 3]; w * h];
    let mut transmittance = vec![1.0; w * h];
    for s in splats(posed, camera) {
        let det = s.cov[0][0] * s.cov[1][1] - s.cov[0][1] * s.cov[1][0];
        let inv = [[s.cov[1][1] / det, -s.cov[0][1] / det], [-s.cov[1][0] / det, s.cov[0][0] / det]];
        let rx = 3.0 * libm::sqrt(s.cov[0][0]);
        let ry = 3.0 * libm::sqrt(s.cov[1][1]);
        let Some((x0, x1)) = pixel_range(s.mean[0] - rx, s.mean[0] + rx, w) else { continue };
        let Some((y0, y1)) = pixel_range(s.mean[1] - ry, s.mean[1] + ry, h) else { continue };
        for y in y0..=y1 {
            let dy = y as f64 - s.mean[1];
            for x in x0..=x1 {
                let p = y * w + x;
                if transmittance[p] < MIN_TRANSMITTANCE {
                    continue;
                }
                let dx = x as f64 - s.mean[0];
                let power = -0.5 * (inv[0][0] * dx * dx + 2.0 * inv[0][1] * dx * dy + inv[1][1] * dy * dy);
                let alpha = s.opacity * libm::exp(power);
                let t = transmittance[p];
                for c in 0..3 {
                    color[p][c] += s.color[c] * alpha * t;
                }
                transmittance[p] = t * (1.0 - alpha);
            }
        }
    }
    let pixels =
        color.iter().zip(&transmittance).map(|(c, t)| core::array::from_fn(|k| c[k] + t * background[k])).collect();
    Image { width: w, height: h, pixels }
}

/// Integer pixels inside `[lo, hi]`, clipped to `0..len`.
fn pixel_range(lo: f64, hi: f64, len: usize) -> Option<(usize, usize)> {
    if len == 0 || !(hi >= 0.0) || !(lo <= (len - 1) as f64) {
        return None;
    }
    let a = libm::ceil(lo.max(0.0)) as usize;
    let b = (libm::floor(hi) as usize).min(len - 1);
    (a <= b).then_some((a, b))
}

/// `10 log10(1 / MSE)` over all channels; `+inf` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            context: "psnr image size",
            expected: a.width * a.height,
            actual: b.width * b.height,
        });
    }
    if a.pixels.is_empty() {
        return Err(Error::invalid("psnr of empty images"));
    }
    let mut sum = 0.0;
    for (p, q) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..3 {
            sum += (p[c] - q[c]) * (p[c] - q[c]);
        }
    }
    let mse = sum / (3 * a.pixels.len()) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * libm::log10(1.0 / mse) })
}
