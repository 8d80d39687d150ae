//! Authoring engine for augmented table-tennis videos.
//!
//! Tracking data is organized into a data pyramid (image, object, event and
//! tactic levels), visual mappings are recommended from corpus statistics,
//! and narrative-ordered scripts compile to double-track render schedules
//! that the renderer turns into SVG overlays.
//!
//! Geometry and kinematics are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type to `f64` as used by the rest of the
//! pipeline.

pub mod analysis;
pub mod config;
pub mod design_space;
pub mod error;
pub mod events;
pub mod expr;
pub mod geom;
pub mod hash;
pub mod scalar;
pub mod scheduler;
pub mod script;
pub mod pyramid;
pub mod recommender;
pub mod render;
pub mod synth;
pub mod tactics;
pub mod tracking;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

pub type Point = geom::Point2<f64>;
pub type BBox = geom::BBox<f64>;
pub type Quad = geom::Quad<f64>;
pub type Dataset = tracking::TrackingDataset<f64>;
pub type Track = tracking::BallTrack<f64>;
pub type Table = tracking::TableGeometry<f64>;
