//! Order-preserving map helpers.
//!
//! `maybe_par_map` fans work out across threads when the `parallel` feature
//! is enabled and falls back to a plain sequential map otherwise. Both
//! variants return results in input order, so callers that reduce the output
//! left-to-right get bit-identical floats on either path. `seq_map` is the
//! always-sequential baseline used by the benchmarks.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order matches input order.
pub fn maybe_par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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

/// Sequential map with the same signature as [`maybe_par_map`].
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(0x9E3779B97F4A7C15);
        assert_eq!(maybe_par_map(&xs, f), seq_map(&xs, f));
    }
}
