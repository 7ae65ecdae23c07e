use nalgebra::DMatrix;

pub const JITTER: f64 = 1e-12;

/// Lower Cholesky factor, retrying once with a small diagonal jitter.
///
/// Positive semidefinite matrices with exact zeros on the diagonal (frozen
/// components) are handled by factoring the nonzero block only.
pub fn cholesky_jitter(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let active: Vec<usize> = (0..n).filter(|&i| m[(i, i)] != 0.0).collect();
    if active.len() < n {
        for i in 0..n {
            if m[(i, i)] == 0.0 && (0..n).any(|j| m[(i, j)] != 0.0 || m[(j, i)] != 0.0) {
                return None;
            }
        }
        let sub = DMatrix::from_fn(active.len(), active.len(), |r, c| m[(active[r], active[c])]);
        let l = cholesky_jitter(&sub)?;
        let mut out = DMatrix::zeros(n, n);
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                out[(i, j)] = l[(r, c)];
            }
        }
        return Some(out);
    }
    if let Some(c) = m.clone().cholesky() {
        return Some(c.l());
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1.0, f64::max);
    let jittered = m + DMatrix::identity(n, n) * (JITTER * scale);
    jittered.cholesky().map(|c| c.l())
}

/// Replaces `m` by `(m + m') / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}
