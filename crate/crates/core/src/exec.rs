//! Sequential / rayon execution of independent work items.
//!
//! Every helper returns results in input order, so a parallel run is
//! bit-identical to a sequential one as long as the closure is pure.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to run a batch of independent jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon's global pool. Falls back to sequential when the crate is
    /// built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// True when this mode will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_mut<T, R, F>(self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(&mut T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter_mut().map(f).collect();
        }
        items.iter_mut().map(f).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// Cap the global worker count. No-op without the `parallel` feature or when
/// the pool was already initialised.
pub fn set_worker_limit(jobs: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        let a = Execution::Sequential.map(&items, f);
        let b = Execution::Parallel.map(&items, f);
        assert_eq!(a, b);
        let c = Execution::Parallel.map_range(1000, |i| f(&(i as u64)));
        assert_eq!(a, c);
    }

    #[test]
    fn map_mut_touches_every_item() {
        let mut items = vec![1u32; 257];
        let out = Execution::Parallel.map_mut(&mut items, |x| {
            *x += 1;
            *x
        });
        assert!(items.iter().all(|&x| x == 2));
        assert_eq!(out.len(), 257);
    }
}
