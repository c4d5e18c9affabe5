//! Perception-to-action building blocks for harvesting fruit under occlusion.
//!
//! The crate is organised bottom-up:
//!
//! * [`ndtensor`] - a small dense `C×H×W` array with the differentiable kernels
//!   (convolution, pooling, channel MLP, sigmoid, broadcast combine) and a
//!   central-difference gradient checker.
//! * [`nn`] - global attention, SPPF, the widened prototype head and the
//!   asymmetric / hybrid losses, each with analytic backward passes.
//! * [`maskops`] - polygon rasterisation, mask IoU, an exact Euclidean
//!   distance transform and the maximal-clearance picking point.
//! * [`geometry`] - pinhole back-projection, rigid transform chains, grasp
//!   waypoints and quintic timing.
//! * [`evaluation`] - detection matching, PR/AP/mAP, occlusion bands,
//!   harvest success and the coefficient of determination.
//! * [`dataset`] - annotation ingestion, cropping, augmentation and a
//!   synthetic occluded-scene generator.
//! * [`pgm`] - binary PGM codec used for masks, scenes and depth maps.

pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod maskops;
pub mod ndtensor;
pub mod nn;
pub mod pgm;
