use serde::{Deserialize, Serialize};

/// Index of an actor in the dataset's actor registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActorId(pub u32);

impl ActorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Index of an activity type in the run's type catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeIdx(pub u32);

impl TypeIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}
