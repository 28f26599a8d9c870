use crate::error::{Error, Result};

/// Runs `op` on a dedicated pool with `workers` threads, or on rayon's global
/// pool when `workers == 0`.
pub fn install<OP, R>(workers: usize, op: OP) -> Result<R>
where
    OP: FnOnce() -> R + Send,
    R: Send,
{
    if workers == 0 {
        return Ok(op());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::io("<thread pool>", e))?;
    Ok(pool.install(op))
}
