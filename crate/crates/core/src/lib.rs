//! Toy-scale NMS-free detector core and object-detection evaluation harness.
//!
//! - [`tensor`]: dense arrays, convolutions, softmax, singular values
//! - [`blocks`]: compact inverted block, partial self-attention, decoupled
//!   downsampling, decoupled head, parameter/FLOP accounting
//! - [`assignment`]: one-to-many and one-to-one label assignment
//! - [`postprocess`]: NMS-free decoding and the greedy NMS baseline
//! - [`metrics`]: IoU matching, AP, mAP@50 and mAP@50-95, F1 sweeps
//! - [`dataset`]: YOLO label files, splits, class statistics, hyperparameters
//! - [`rank`]: intrinsic-rank redundancy analysis of convolution filters

pub mod assignment;
pub mod bbox;
pub mod dataset;
pub mod blocks;
pub mod detection;
pub mod error;
pub mod metrics;
pub mod postprocess;
pub mod rank;
pub mod tensor;

pub use bbox::{iou, BoundingBox};
pub use detection::{Detection, GTInstance};
pub use error::{Error, Result};
pub use tensor::{Matrix, Tensor};
