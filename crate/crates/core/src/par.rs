//! Data-parallel execution helpers.
//!
//! Every heavy loop in the crate (outcome enumeration, Monte Carlo trials,
//! instance sweeps) goes through [`fold_chunks`] or [`map_indexed`]. Work is
//! cut into fixed-size chunks that are folded sequentially and merged in chunk
//! order, so results are bit-identical between [`Exec::Sequential`] and
//! [`Exec::Parallel`] and independent of the thread count.
//!
//! Without the `parallel` feature, `Exec::Parallel` runs sequentially.

use crate::error::Result;

/// Fixed chunk length; changing it changes floating-point summation order.
pub const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
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

fn chunk_bounds(n: usize, c: usize) -> std::ops::Range<usize> {
    let lo = c * CHUNK;
    lo..(lo + CHUNK).min(n)
}

/// Folds `step` over `0..n` chunk by chunk, then merges chunk accumulators
/// left to right.
pub fn fold_chunks<A, I, S, M>(exec: Exec, n: usize, init: I, step: S, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, usize) -> Result<()> + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let run = |c: usize| -> Result<A> {
        let mut acc = init();
        for i in chunk_bounds(n, c) {
            step(&mut acc, i)?;
        }
        Ok(acc)
    };
    let parts: Vec<Result<A>> = if exec.is_parallel() {
        par_collect(chunks, &run)
    } else {
        (0..chunks).map(run).collect()
    };
    let mut total = init();
    for p in parts {
        merge(&mut total, p?);
    }
    Ok(total)
}

/// `(0..n).map(f)` with results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if exec.is_parallel() {
        par_collect(n, &f)
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(feature = "parallel")]
fn par_collect<T, F>(n: usize, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_collect<T, F>(n: usize, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Decodes a flat index into mixed-radix digits (first coordinate fastest).
pub fn mixed_radix(mut index: usize, radices: &[usize], digits: &mut [usize]) {
    for (d, &r) in digits.iter_mut().zip(radices) {
        *d = index % r;
        index /= r;
    }
}

/// Product of the radices, or `None` on overflow.
pub fn radix_product(radices: &[usize]) -> Option<usize> {
    radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_sums_are_bit_identical() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let sum = |exec| {
            fold_chunks(
                exec,
                10_007,
                || 0.0f64,
                |a, i| {
                    *a += f(i);
                    Ok(())
                },
                |a, b| *a += b,
            )
            .unwrap()
        };
        assert_eq!(sum(Exec::Sequential).to_bits(), sum(Exec::Parallel).to_bits());
    }

    #[test]
    fn map_keeps_order() {
        let v = map_indexed(Exec::Parallel, 2000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn radix_decode() {
        let mut d = [0; 3];
        mixed_radix(23, &[2, 3, 4], &mut d);
        assert_eq!(d, [1, 2, 3]);
        assert_eq!(radix_product(&[2, 3, 4]), Some(24));
        assert_eq!(radix_product(&[usize::MAX, 2]), None);
    }
}
