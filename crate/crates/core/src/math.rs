//! Small dense-vector helpers shared across modules.

use alloc::vec::Vec;

use crate::{Error, Result};

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Dot product accumulated left to right.
#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    // Four interleaved partial sums, combined in a fixed order.
    let n = u.len().min(v.len());
    let (uc, vc) = (u[..n].chunks_exact(4), v[..n].chunks_exact(4));
    let (ur, vr) = (uc.remainder(), vc.remainder());
    let mut acc = [0.0f64; 4];
    for (a, b) in uc.zip(vc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    let tail: f64 = ur.iter().zip(vr).fold(0.0, |s, (a, b)| s + a * b);
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

#[inline]
pub fn norm_sq(u: &[f64]) -> f64 {
    dot(u, u)
}

pub fn l2_norm(u: &[f64]) -> f64 {
    sqrt(norm_sq(u))
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`.
///
/// Evaluated as `dot / sqrt(‖u‖² ‖v‖²)`, which is exactly symmetric in its
/// arguments and returns exactly `1.0` for `cosine(u, u)`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(alloc::format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = norm_sq(u);
    let nv = norm_sq(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    let c = dot(u, v) / sqrt(nu * nv);
    Ok(c.clamp(-1.0, 1.0))
}

/// Scales `u` to unit L2 norm in place. Zero vectors are left untouched.
pub fn normalize(u: &mut [f64]) {
    let n = l2_norm(u);
    if n > 0.0 {
        for x in u.iter_mut() {
            *x /= n;
        }
    }
}

/// Elementwise mean of equally sized vectors; `None` when `rows` is empty.
pub fn mean<'a, I>(rows: I, dim: usize) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = alloc::vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let inv = n as f64;
    for a in acc.iter_mut() {
        *a /= inv;
    }
    Some(acc)
}

pub fn is_zero(u: &[f64]) -> bool {
    u.iter().all(|&x| x == 0.0)
}
