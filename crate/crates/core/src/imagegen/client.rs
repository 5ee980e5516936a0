//! Text-to-image service clients.

use std::time::Duration;

use base64::Engine;
use image::{ImageEncoder, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::GenParams;
use crate::service::{JsonEndpoint, ServiceError};

/// Wire body of an image-generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGenRequest {
    pub prompt: String,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance: f64,
    pub seed: u64,
}

impl ImageGenRequest {
    pub fn new(prompt: &str, params: &GenParams) -> Self {
        Self {
            prompt: prompt.to_string(),
            width: params.width,
            height: params.height,
            steps: params.steps,
            guidance: params.guidance,
            seed: params.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageGenReply {
    pub image_b64: String,
}

pub trait ImageGenClient: Send + Sync {
    /// Returns the raw bytes the backend produced; callers validate them.
    fn generate(&self, request: &ImageGenRequest) -> Result<Vec<u8>, ServiceError>;

    /// Identifier recorded in every generation record.
    fn backend_id(&self) -> &str;
}

#[derive(Debug, Clone)]
pub struct HttpImageGen {
    endpoint: JsonEndpoint,
    backend_id: String,
}

impl HttpImageGen {
    pub fn new(url: &str, auth_header: &str, backend_id: Option<&str>) -> Result<Self, ServiceError> {
        Ok(Self {
            endpoint: JsonEndpoint::new(url, auth_header, Duration::from_secs(600))?,
            backend_id: backend_id.unwrap_or(url).to_string(),
        })
    }
}

impl ImageGenClient for HttpImageGen {
    fn generate(&self, request: &ImageGenRequest) -> Result<Vec<u8>, ServiceError> {
        let reply: ImageGenReply = self.endpoint.post(request)?;
        base64::engine::general_purpose::STANDARD
            .decode(reply.image_b64.trim())
            .map_err(|e| ServiceError::MalformedReply(format!("image_b64: {e}")))
    }

    fn backend_id(&self) -> &str {
        &self.backend_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MockImageMode {
    #[default]
    Procedural,
    /// Replies with bytes that are not an image.
    Garbage,
}

/// Offline deterministic renderer: a two-color palette derived from the prompt
/// hash, blended by seeded value noise with fine-grained per-pixel grain.
/// Identical requests give byte-identical PNGs.
#[derive(Debug, Clone, Default)]
pub struct MockImageGen {
    pub mode: MockImageMode,
}

pub const MOCK_BACKEND_ID: &str = "mock-procedural-v1";

impl MockImageGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn garbage() -> Self {
        Self {
            mode: MockImageMode::Garbage,
        }
    }

    pub fn render(request: &ImageGenRequest) -> RgbImage {
        let digest = Sha256::digest(request.prompt.as_bytes());
        let d: &[u8] = digest.as_ref();
        let c0 = [d[0], d[1], d[2]].map(f64::from);
        let c1 = [d[3], d[4], d[5]].map(f64::from);
        let mut seed_bytes = [0u8; 8];
        seed_bytes.copy_from_slice(&d[8..16]);
        let seed = u64::from_le_bytes(seed_bytes)
            ^ request.seed
            ^ (u64::from(request.steps) << 40)
            ^ request.guidance.to_bits().rotate_left(17);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let cell = 16u32;
        let gw = request.width / cell + 2;
        let gh = request.height / cell + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        let at = |x: u32, y: u32| lattice[(y * gw + x) as usize];

        RgbImage::from_fn(request.width, request.height, |x, y| {
            let (fx, fy) = (x as f64 / cell as f64, y as f64 / cell as f64);
            let (ix, iy) = (fx.floor() as u32, fy.floor() as u32);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
            let top = at(ix, iy) * (1.0 - sx) + at(ix + 1, iy) * sx;
            let bottom = at(ix, iy + 1) * (1.0 - sx) + at(ix + 1, iy + 1) * sx;
            let t = top * (1.0 - sy) + bottom * sy;
            let shade = 0.75 + 0.25 * (y as f64 / request.height as f64);
            let grain = rng.random_range(-6.0..6.0);
            let px = |k: usize| ((c0[k] * (1.0 - t) + c1[k] * t) * shade + grain).clamp(0.0, 255.0) as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .expect("encoding an in-memory RGB image cannot fail");
    out
}

impl ImageGenClient for MockImageGen {
    fn generate(&self, request: &ImageGenRequest) -> Result<Vec<u8>, ServiceError> {
        match self.mode {
            MockImageMode::Procedural => Ok(encode_png(&Self::render(request))),
            MockImageMode::Garbage => Ok(b"this is not a png".to_vec()),
        }
    }

    fn backend_id(&self) -> &str {
        MOCK_BACKEND_ID
    }
}
