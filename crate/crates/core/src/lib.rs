//! Predictive-reachability embodiment selection for a planar mobile
//! manipulator: a latent world model, a three-level policy (selector,
//! manager, worker), a kinematic simulator with an inverse-kinematics
//! oracle, scripted demonstrations and the training loop tying them together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod demos;
pub mod kinematics;
pub mod numerics;
pub mod policy;
pub mod reachability;
pub mod rng;
pub mod sim2d;
pub mod trainer;
pub mod worldmodel;
