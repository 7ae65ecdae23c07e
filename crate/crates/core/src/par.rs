//! Ordered parallel maps, sequential without the `parallel` feature.

#[cfg(feature = "parallel")]
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn map_mut<S, T, F>(items: &mut [S], f: F) -> Vec<T>
where
    S: Send,
    T: Send,
    F: Fn(usize, &mut S) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_mut<S, T, F>(items: &mut [S], f: F) -> Vec<T>
where
    F: Fn(usize, &mut S) -> T,
{
    items.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
}
