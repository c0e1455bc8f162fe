//! Row-parallel helpers with a sequential fallback.
//!
//! Every data-parallel loop in the crate goes through these functions. With
//! the `parallel` feature disabled, [`Exec::Parallel`] silently runs
//! sequentially. Reductions are collected per row and summed in row order so
//! both modes produce bit-identical results.

/// Execution policy for pixel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Calls `f(row_index, row)` on every `row_len`-sized chunk of `data`.
pub fn rows_mut<T, F>(exec: Exec, data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(y, row)| f(y, row));
        return;
    }
    let _ = exec;
    data.chunks_mut(row_len)
        .enumerate()
        .for_each(|(y, row)| f(y, row));
}

/// Like [`rows_mut`] but over two equally shaped buffers at once.
pub fn rows2_mut<A, B, F>(exec: Exec, a: &mut [A], b: &mut [B], row_len: usize, f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) + Sync + Send,
{
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        a.par_chunks_mut(row_len)
            .zip(b.par_chunks_mut(row_len))
            .enumerate()
            .for_each(|(y, (ra, rb))| f(y, ra, rb));
        return;
    }
    let _ = exec;
    a.chunks_mut(row_len)
        .zip(b.chunks_mut(row_len))
        .enumerate()
        .for_each(|(y, (ra, rb))| f(y, ra, rb));
}

/// Maps `f` over `0..n` and collects results in index order.
pub fn map_collect<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Deterministic sum of per-row partial sums.
pub fn sum_rows<F>(exec: Exec, rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_collect(exec, rows, f).into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let run = |exec| {
            let mut v: Vec<f32> = (0..1000).map(|i| i as f32 * 0.37).collect();
            rows_mut(exec, &mut v, 10, |y, row| {
                for x in row.iter_mut() {
                    *x = (*x * y as f32).sin();
                }
            });
            let s = sum_rows(exec, 100, |y| v[y * 10..y * 10 + 10].iter().map(|&x| x as f64).sum());
            (v, s)
        };
        let (a, sa) = run(Exec::Sequential);
        let (b, sb) = run(Exec::Parallel);
        assert_eq!(a, b);
        assert_eq!(sa.to_bits(), sb.to_bits());
    }
}
