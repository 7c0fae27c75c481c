//! Storage of mobility knowledge: per-order Markov count tables, their
//! merge algebra, snapshot persistence and a snapshot-consistent store.

mod model;
mod snapshot;

pub use model::{Distribution, MarkovModel, State, Successors};
pub use snapshot::{decode_snapshot, encode_snapshot, persist, restore, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use std::sync::{Arc, RwLock};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("order {order} outside 1..={max_order}")]
    OrderOutOfRange { order: usize, max_order: usize },
    #[error("state has {got} elements, order requires {expected}")]
    StateArityMismatch { expected: usize, got: usize },
    #[error("cannot merge models of order {left} and {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u8),
}

/// Single-writer, many-reader holder of the current model. Readers get an
/// immutable `Arc` snapshot; a write is visible only once fully applied.
#[derive(Debug)]
pub struct KnowStore {
    current: RwLock<Arc<MarkovModel>>,
}

impl KnowStore {
    pub fn new(model: MarkovModel) -> Self {
        KnowStore {
            current: RwLock::new(Arc::new(model)),
        }
    }

    pub fn snapshot(&self) -> Arc<MarkovModel> {
        self.current.read().expect("store lock poisoned").clone()
    }

    /// Applies `f` to the model. `f` must leave the model untouched when it
    /// fails. Copies the model first only if a reader still holds the
    /// current snapshot.
    pub fn update<E>(&self, f: impl FnOnce(&mut MarkovModel) -> Result<(), E>) -> Result<(), E> {
        let mut guard = self.current.write().expect("store lock poisoned");
        f(Arc::make_mut(&mut guard))
    }

    pub fn replace(&self, model: MarkovModel) {
        *self.current.write().expect("store lock poisoned") = Arc::new(model);
    }
}
