use egomosaic_core::compositor::ParallelMap;
use rayon::prelude::*;

/// Runs the per-frame pipeline stages on the rayon pool. Output order
/// matches input order, so results are identical to a sequential run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl ParallelMap for Rayon {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        items.into_par_iter().map(f).collect()
    }
}
