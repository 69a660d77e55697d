//! Temporal-inconsistency video forgery detection from dense optical flow.
//!
//! The pipeline samples frames, crops the face region, computes
//! Horn–Schunck flow between consecutive frames, colorises it, and feeds the
//! flow-image sequence to a small CNN+LSTM classifier trained from scratch.

pub mod face_roi;
pub mod media_io;
pub mod optical_flow;
pub mod tensor_nn;
pub mod synth;
pub mod metrics;
pub mod model;
pub mod experiment;
