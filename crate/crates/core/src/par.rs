//! Thin switch between rayon and plain iterators.
//!
//! Every helper here preserves input order in its output, so results never
//! depend on how work was scheduled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice, collecting results in slice order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Reduces `f(i)` over `0..n` to the single best item, where `better(a, b)`
/// returns true when `a` should replace `b`. `better` must be a strict total
/// preference (ties resolved inside it) for the result to be deterministic.
pub fn best_of<T, F, B>(n: usize, f: F, better: B) -> Option<T>
where
    T: Send,
    F: Fn(usize) -> Option<T> + Sync + Send,
    B: Fn(&T, &T) -> bool + Sync + Send,
{
    let pick = |a: Option<T>, b: Option<T>| match (a, b) {
        (Some(a), Some(b)) => {
            if better(&b, &a) {
                Some(b)
            } else {
                Some(a)
            }
        }
        (a, None) => a,
        (None, b) => b,
    };
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).reduce(|| None, pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(None, pick)
    }
}

/// True when the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
