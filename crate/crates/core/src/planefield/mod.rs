//! Tri-plane feature field and the per-attribute MLP decoders.

mod cloud;
mod mlp;
mod plane;
pub mod ply;

pub use cloud::{
    decode_attributes, map_outputs, map_outputs_backward, predict_cloud, Attributes,
    GaussianCloud,
};
pub(crate) use cloud::{check_decoders, stencils};
pub use mlp::{Linear, MlpDecoder, MlpGrad, MlpTrace, HIDDEN_WIDTH};
pub use plane::{
    sample_features, Bilinear, FeaturePlane, PlaneAxis, PointStencil, TriPlaneField,
    TriPlaneGroup,
};

/// Attribute predicted by one tri-plane group and its decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Color,
    Scale,
    Rotation,
    Opacity,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Color,
        Attribute::Scale,
        Attribute::Rotation,
        Attribute::Opacity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Decoder output width for the given SH degree.
    pub fn width(self, sh_degree: usize) -> usize {
        match self {
            Attribute::Color => 3 * (sh_degree + 1) * (sh_degree + 1),
            Attribute::Scale => 3,
            Attribute::Rotation => 4,
            Attribute::Opacity => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Color => "color",
            Attribute::Scale => "scale",
            Attribute::Rotation => "rotation",
            Attribute::Opacity => "opacity",
        }
    }
}

/// One decoder per attribute, indexed by [`Attribute::index`].
pub type Decoders = [MlpDecoder; 4];
