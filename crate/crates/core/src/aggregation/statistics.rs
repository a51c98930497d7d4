use crate::error::{Error, Result};
use crate::layered::{check_uniform, LayeredVector};
use crate::scalar::Scalar;

/// Coordinate-wise arithmetic mean.
pub fn aggregate_mean<T: Scalar>(grads: &[LayeredVector<T>]) -> Result<LayeredVector<T>> {
    if grads.is_empty() {
        return Err(Error::Usage("cannot aggregate an empty gradient list".into()));
    }
    check_uniform(grads)?;
    LayeredVector::mean(grads)
}

/// Independent median per coordinate; even counts average the two middle
/// values.
pub fn aggregate_coordinate_median<T: Scalar>(
    grads: &[LayeredVector<T>],
) -> Result<LayeredVector<T>> {
    let Some(first) = grads.first() else {
        return Err(Error::Usage("cannot aggregate an empty gradient list".into()));
    };
    check_uniform(grads)?;
    let n = grads.len();
    let two = T::one() + T::one();
    let mut out = first.zeros_like();
    let mut column = Vec::with_capacity(n);
    for l in 0..first.num_groups() {
        let len = first.group(l).len();
        let dst = out.groups_mut()[l].values_mut();
        for (i, slot) in dst.iter_mut().enumerate().take(len) {
            column.clear();
            column.extend(grads.iter().map(|g| g.group(l).values()[i]));
            column.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            *slot = if n % 2 == 1 {
                column[n / 2]
            } else {
                (column[n / 2 - 1] + column[n / 2]) / two
            };
        }
    }
    Ok(out)
}
