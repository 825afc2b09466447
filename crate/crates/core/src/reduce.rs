use std::ops::Range;

/// Splits 0..n into fixed chunks, maps each chunk and combines results along a fixed binary tree.
///
/// The tree shape depends only on `n` and `chunk`, so the result is bitwise identical for any
/// thread count or schedule.
pub(crate) fn tree_map_reduce<T, M, R>(n: usize, chunk: usize, map: M, reduce: R) -> Option<T>
where
    T: Send,
    M: Fn(Range<usize>) -> T + Sync,
    R: Fn(T, T) -> T + Sync,
{
    if n == 0 {
        return None;
    }
    let chunk = chunk.max(1);
    let leaves = n.div_ceil(chunk);
    Some(rec(0, leaves, n, chunk, &map, &reduce))
}

fn rec<T, M, R>(lo: usize, hi: usize, n: usize, chunk: usize, map: &M, reduce: &R) -> T
where
    T: Send,
    M: Fn(Range<usize>) -> T + Sync,
    R: Fn(T, T) -> T + Sync,
{
    if hi - lo == 1 {
        return map(lo * chunk..((lo + 1) * chunk).min(n));
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = rayon::join(|| rec(lo, mid, n, chunk, map, reduce), || rec(mid, hi, n, chunk, map, reduce));
    reduce(a, b)
}
