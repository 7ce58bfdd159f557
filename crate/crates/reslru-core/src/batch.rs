//! Batch evaluation hook.
//!
//! Sweeps in this crate hand independent work items to an [`Executor`].
//! The default [`Sequential`] executor runs them in order; the std companion
//! crate provides a thread-pool executor. Results always come back in input
//! order, so the choice of executor never changes the output.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Applies `f` to every item and returns the results in input order.
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}
