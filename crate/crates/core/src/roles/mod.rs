//! Protocol participants: the administrator that owns the chains, the
//! ground station that relays frames, and the satellite verifier.

mod admin;
mod cubesat;
mod ground;

pub use admin::{issue_from_chain, AdminError, Administrator};
pub use cubesat::{
    CubeSat, CubeSatState, FileStore, InstalledUpdate, MemoryStore, StateError, StateStore,
    UpdateReport, UpdateStatus, VolatileStore, STATE_FILE_MAGIC, STATE_FILE_VERSION,
};
pub use ground::{Disposition, ForwardRecord, GroundStation};

/// Report text sent to the ground station after an accepted update.
pub const MSG_SUCCESS: &str = "Update successful";
/// Report text sent to the ground station after a rejected update.
pub const MSG_FAILURE: &str = "Error: Update Failed";
