use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Scalar;

/// Power-iteration state for one weight matrix. Persists across calls so a
/// single iteration per training step keeps tracking the top singular pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNormState {
    /// Left singular vector estimate, length = rows.
    pub u: Vec<f64>,
    /// Right singular vector estimate, length = cols.
    pub v: Vec<f64>,
}

impl SpectralNormState {
    pub fn new(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.standard_normal()).collect();
        normalize(&mut u);
        SpectralNormState { u, v: vec![0.0; cols] }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Runs `n_iters` power iterations on the row-major `rows x cols` matrix and
/// returns `(W / sigma, sigma)` with `sigma = u^T W v`.
///
/// An all-zero matrix comes back unchanged with `sigma = 1`.
pub fn spectral_normalize<T: Scalar>(
    w: &[T],
    rows: usize,
    cols: usize,
    state: &mut SpectralNormState,
    n_iters: usize,
) -> Result<(Vec<T>, f64)> {
    if n_iters == 0 {
        return Err(Error::Param("spectral normalization needs at least one iteration".into()));
    }
    if w.len() != rows * cols || state.u.len() != rows || state.v.len() != cols {
        return Err(Error::Size(format!(
            "spectral norm: matrix {rows}x{cols} ({} values), state u={} v={}",
            w.len(),
            state.u.len(),
            state.v.len()
        )));
    }
    if w.iter().all(|x| *x == T::zero()) {
        return Ok((w.to_vec(), 1.0));
    }
    let wf: Vec<f64> = w.iter().map(|x| x.f64()).collect();
    if normalize(&mut state.u) == 0.0 {
        // a degenerate estimate restarts from the first basis vector
        state.u[0] = 1.0;
    }
    for _ in 0..n_iters {
        // v = W^T u / |W^T u|
        state.v.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..rows {
            let ur = state.u[r];
            for (vc, &wv) in state.v.iter_mut().zip(&wf[r * cols..(r + 1) * cols]) {
                *vc += wv * ur;
            }
        }
        if normalize(&mut state.v) == 0.0 {
            return Err(Error::Numeric("power iteration collapsed: u is orthogonal to the row space".into()));
        }
        // u = W v / |W v|
        for r in 0..rows {
            state.u[r] = wf[r * cols..(r + 1) * cols].iter().zip(&state.v).map(|(a, b)| a * b).sum();
        }
        normalize(&mut state.u);
    }
    let sigma: f64 = (0..rows)
        .map(|r| state.u[r] * wf[r * cols..(r + 1) * cols].iter().zip(&state.v).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Numeric(format!("spectral norm estimate {sigma} is not positive")));
    }
    let inv = 1.0 / sigma;
    Ok((wf.iter().map(|&x| T::of(x * inv)).collect(), sigma))
}

/// Gradient with respect to the raw weight given the gradient `g` with
/// respect to `W / sigma`, treating `u` and `v` as constants:
/// `(G - <G, W_sn> u v^T) / sigma`.
pub fn spectral_norm_backward<T: Scalar>(
    g: &[T],
    w_sn: &[T],
    state: &SpectralNormState,
    sigma: f64,
) -> Vec<T> {
    let (rows, cols) = (state.u.len(), state.v.len());
    let inner: f64 = g.iter().zip(w_sn).map(|(a, b)| a.f64() * b.f64()).sum();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let gv = g[r * cols + c].f64();
            out.push(T::of((gv - inner * state.u[r] * state.v[c]) / sigma));
        }
    }
    out
}
