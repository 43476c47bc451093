//! Deterministic 2D closed-loop driving simulator and control library.

pub mod bench;
pub mod controllers;
pub mod datagen;
pub mod dynamics;
pub mod episode;
pub mod expert;
pub mod fixtures;
pub mod geometry;
pub mod localization;
pub mod metrics;
pub mod policies;
pub mod scalar;
pub mod world;

pub use scalar::Real;

pub type Point = geometry::Vec2<f64>;
pub type Pose = geometry::Pose2D<f64>;
pub type Box2 = geometry::Obb<f64>;
pub type State = dynamics::VehicleState<f64>;
pub type Command = dynamics::ControlCommand<f64>;
pub type Params = dynamics::BicycleParams<f64>;
