//! Execution strategy for independent units of work.
//!
//! Every data-parallel loop in the crate (per-article mining, per-document
//! attribution, per-seed training, Monte Carlo blocks) goes through [`Exec`].
//! Results are always returned in input order, so the choice of strategy
//! never changes an output.

/// How to run a batch of independent jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Plain in-order iteration on the calling thread.
    #[default]
    Sequential,
    /// Rayon work stealing. `threads == 0` uses the global pool; any other
    /// value runs inside a dedicated pool of that size. Falls back to
    /// sequential execution when the `parallel` feature is disabled.
    Parallel { threads: usize },
}

impl Exec {
    /// Strategy for a `--parallel N` style flag: `1` is sequential, `0` means
    /// "all cores".
    pub fn from_threads(threads: usize) -> Self {
        if threads == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel { threads }
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Exec::Parallel { .. })
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match *self {
            Exec::Sequential => items.iter().map(f).collect(),
            Exec::Parallel { threads } => par_map(items, f, threads),
        }
    }

    /// Map over the index range `0..n`, preserving order.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let idx: Vec<usize> = (0..n).collect();
        self.map(&idx, |&i| f(i))
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F, threads: usize) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if threads == 0 {
        return items.par_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            items.par_iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F, _threads: usize) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = Exec::Sequential.map(&items, |x| x * x + 1);
        let par = Exec::Parallel { threads: 0 }.map(&items, |x| x * x + 1);
        let pool = Exec::Parallel { threads: 3 }.map(&items, |x| x * x + 1);
        assert_eq!(seq, par);
        assert_eq!(seq, pool);
    }

    #[test]
    fn thread_flag_mapping() {
        assert_eq!(Exec::from_threads(1), Exec::Sequential);
        assert_eq!(Exec::from_threads(4), Exec::Parallel { threads: 4 });
    }
}
