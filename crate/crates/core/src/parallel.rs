//! Sized worker pools. Callers collect parallel results in index order and
//! reduce them sequentially, so output never depends on the thread count.

use rayon::ThreadPoolBuilder;

use crate::error::{Error, Result};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`.
pub fn install<R, F>(threads: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument(
            "thread count must be at least 1".into(),
        )),
        Some(n) => {
            let pool = ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
