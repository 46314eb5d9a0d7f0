//! Data-parallel execution with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_indexed`], which
//! returns results in index order regardless of scheduling. With the
//! `parallel` feature disabled, or with [`Exec::Sequential`], the same
//! closure runs on the calling thread.

/// Execution strategy for index-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `Parallel` when the crate was built with rayon, `Sequential` otherwise.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Evaluates `f(i)` for `i in 0..len` and collects the results in order.
pub fn map_indexed<T, F>(exec: Exec, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..len).into_par_iter().map(f).collect()
        }
        _ => (0..len).map(f).collect(),
    }
}

/// Fills consecutive chunks of `out` with `f(chunk_index, chunk)`.
pub fn fill_chunks<T, F>(exec: Exec, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
        }
        _ => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_strategies_agree() {
        let seq = map_indexed(Exec::Sequential, 1000, |i| (i * i) % 97);
        let par = map_indexed(Exec::Parallel, 1000, |i| (i * i) % 97);
        assert_eq!(seq, par);

        let mut a = vec![0usize; 100];
        let mut b = vec![0usize; 100];
        fill_chunks(Exec::Sequential, &mut a, 7, |k, c| {
            c.iter_mut().for_each(|v| *v = k)
        });
        fill_chunks(Exec::Parallel, &mut b, 7, |k, c| {
            c.iter_mut().for_each(|v| *v = k)
        });
        assert_eq!(a, b);
    }
}
