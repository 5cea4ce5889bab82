use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::scalar::Real;

fn max_svd_iterations(m: &DMatrix<impl Real>) -> usize {
    10_000 + 200 * m.nrows().min(m.ncols())
}

fn svd<T: Real>(m: &DMatrix<T>, vectors: bool) -> Result<SVD<T, nalgebra::Dyn, nalgebra::Dyn>> {
    m.clone()
        .try_svd(vectors, vectors, T::epsilon(), max_svd_iterations(m))
        .ok_or(Error::SvdNonConvergence)
}

/// Relative slack used when testing ball membership, so that points produced
/// by a projection (which land on the boundary up to rounding) count as inside.
pub(crate) fn ball_tolerance<T: Real>() -> T {
    let eps_based = T::epsilon() * T::lit(64.0);
    let floor = T::lit(1e-9);
    if eps_based > floor {
        eps_based
    } else {
        floor
    }
}

#[inline]
pub(crate) fn inside_ball<T: Real>(norm: T, tau: T) -> bool {
    norm <= tau * (T::one() + ball_tolerance::<T>())
}

pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Result<DVector<T>> {
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    Ok(svd(m, false)?.singular_values)
}

/// Sum of singular values.
pub fn nuclear_norm<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(singular_values(m)?.iter().fold(T::zero(), |acc, &s| acc + s))
}

/// Euclidean projection of a non-negative vector onto the L1 ball of the given
/// radius. Returns the projected vector and the soft threshold applied (zero
/// when the input was already inside).
pub fn project_l1_ball<T: Real>(values: &[T], radius: T) -> (Vec<T>, T) {
    let total = values.iter().fold(T::zero(), |acc, &v| acc + v.abs());
    if total <= radius {
        return (values.to_vec(), T::zero());
    }
    let mut sorted: Vec<T> = values.iter().map(|v| v.abs()).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));

    // Largest k with s_k > (Σ_{i<=k} s_i − radius) / k.
    let mut cumsum = T::zero();
    let mut threshold = T::zero();
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let candidate = (cumsum - radius) / T::from_count(k + 1);
        if s > candidate {
            threshold = candidate;
        } else {
            break;
        }
    }
    let projected = values
        .iter()
        .map(|&v| {
            let shrunk = v.abs() - threshold;
            if shrunk > T::zero() {
                if v < T::zero() {
                    -shrunk
                } else {
                    shrunk
                }
            } else {
                T::zero()
            }
        })
        .collect();
    (projected, threshold)
}

/// Frobenius-nearest matrix with nuclear norm at most `tau`.
///
/// The singular values are soft-thresholded onto the L1 ball of radius `tau`
/// and the matrix is reassembled from the surviving singular triplets. A
/// matrix already inside the ball is returned unchanged.
pub fn project_nuclear_ball<T: Real>(m: &DMatrix<T>, tau: T) -> Result<DMatrix<T>> {
    let mut out = m.clone();
    project_nuclear_ball_mut(&mut out, tau)?;
    Ok(out)
}

/// In-place variant of [`project_nuclear_ball`]. Returns whether the matrix
/// was moved.
pub(crate) fn project_nuclear_ball_mut<T: Real>(m: &mut DMatrix<T>, tau: T) -> Result<bool> {
    if tau <= T::zero() {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    if m.is_empty() {
        return Ok(false);
    }
    let decomposition = svd(m, true)?;
    let sv = decomposition.singular_values.as_slice();
    let total = sv.iter().fold(T::zero(), |acc, &s| acc + s);
    if total <= tau {
        return Ok(false);
    }
    let (shrunk, _) = project_l1_ball(sv, tau);
    let u = decomposition.u.as_ref().expect("left singular vectors requested");
    let v_t = decomposition.v_t.as_ref().expect("right singular vectors requested");

    let keep: Vec<usize> = (0..shrunk.len()).filter(|&i| shrunk[i] > T::zero()).collect();
    let scaled_u = DMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])] * shrunk[keep[c]]);
    let kept_v_t = v_t.select_rows(keep.iter());
    scaled_u.mul_to(&kept_v_t, m);
    Ok(true)
}
