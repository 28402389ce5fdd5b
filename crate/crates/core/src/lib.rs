//! Lateral-access mechanical search on shelves with stacked objects.
//!
//! The crate is organised bottom-up:
//!
//! * [`scene`]: shelf, upright objects and the stack tree.
//! * [`observer`]: ray-cast depth renderer with segmentation masks.
//! * [`occupancy`]: per-column target occupancy distributions.
//! * [`actions`]: discrete push, rearrange, stack and destack actions.
//! * [`simulator`]: quasi-static action execution and the episode loop.
//! * [`policies`]: DARSS, MCTSSS, the mask-overlap baseline and the oracle.

pub mod actions;
pub mod geometry;
pub mod observer;
pub mod occupancy;
pub mod policies;
pub mod scene;
pub mod simulator;

#[doc(hidden)]
pub mod testing;

pub use observer::{CameraSpec, Observation, Renderer};
pub use scene::{ObjectId, ObjectInstance, ObjectShape, Pose, SceneState, ShelfSpec, Supporter};
