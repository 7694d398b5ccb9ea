pub mod formats;
pub mod geometry;
pub mod ident;
pub mod linalg;
pub mod marker;
pub mod pipeline;
pub mod scalar;
pub mod simulator;
pub mod spatial_stats;
pub mod sync;
pub mod temporal;

pub type PixelPointF64 = geometry::PixelPoint<f64>;
pub type PixelPointF32 = geometry::PixelPoint<f32>;
pub type WorldPointF64 = geometry::WorldPoint<f64>;
pub type WorldPointF32 = geometry::WorldPoint<f32>;
pub type IntrinsicsF64 = geometry::Intrinsics<f64>;
pub type IntrinsicsF32 = geometry::Intrinsics<f32>;
pub type ExtrinsicsF64 = geometry::Extrinsics<f64>;
pub type ExtrinsicsF32 = geometry::Extrinsics<f32>;
pub type StereoRigF64 = geometry::StereoRig<f64>;
pub type StereoRigF32 = geometry::StereoRig<f32>;
pub type TriangulationF64 = geometry::Triangulation<f64>;
pub type TriangulationF32 = geometry::Triangulation<f32>;
pub type GaitVectorF64 = spatial_stats::GaitVector<f64>;
pub type GaitVectorF32 = spatial_stats::GaitVector<f32>;
pub type IdentModelF64 = ident::IdentModel<f64>;
pub type IdentModelF32 = ident::IdentModel<f32>;
pub type WindowF64 = ident::Window<f64>;
pub type WindowF32 = ident::Window<f32>;
