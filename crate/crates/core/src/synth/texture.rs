use serde::{Deserialize, Serialize};

pub type Rgb = [f64; 3];

/// Surface appearance in plane coordinates (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Flat { color: Rgb },
    /// Parallel bands of two colors with the given period and orientation.
    Stripes { a: Rgb, b: Rgb, period: f64, angle: f64 },
    Checker { a: Rgb, b: Rgb, period: f64 },
    /// Two flat colors separated by a line through `anchor` at `angle`.
    SplitColor { a: Rgb, b: Rgb, anchor: [f64; 2], angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    Flat,
    Stripes,
    Checker,
    SplitColor,
}

impl TextureKind {
    /// Color discontinuities that do not follow the geometry.
    pub fn is_deceptive(self) -> bool {
        matches!(self, TextureKind::Stripes | TextureKind::SplitColor)
    }
}

impl Texture {
    pub fn kind(&self) -> TextureKind {
        match self {
            Texture::Flat { .. } => TextureKind::Flat,
            Texture::Stripes { .. } => TextureKind::Stripes,
            Texture::Checker { .. } => TextureKind::Checker,
            Texture::SplitColor { .. } => TextureKind::SplitColor,
        }
    }

    pub fn sample(&self, p: [f64; 2]) -> Rgb {
        match *self {
            Texture::Flat { color } => color,
            Texture::Stripes { a, b, period, angle } => {
                let s = p[0] * angle.cos() + p[1] * angle.sin();
                if (s / period).floor().rem_euclid(2.0) < 1.0 {
                    a
                } else {
                    b
                }
            }
            Texture::Checker { a, b, period } => {
                let i = (p[0] / period).floor() + (p[1] / period).floor();
                if i.rem_euclid(2.0) < 1.0 {
                    a
                } else {
                    b
                }
            }
            Texture::SplitColor { a, b, anchor, angle } => {
                let s = (p[0] - anchor[0]) * angle.cos() + (p[1] - anchor[1]) * angle.sin();
                if s < 0.0 {
                    a
                } else {
                    b
                }
            }
        }
    }
}
