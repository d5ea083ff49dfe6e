use crate::scalar::Scalar;

/// Saturates to `[-1, 1]`.
#[inline]
pub fn clamp<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x > one {
        one
    } else if x < -one {
        -one
    } else {
        x
    }
}

/// Slope of [`clamp`]: 1 on the closed interval `[-1, 1]`, 0 outside.
#[inline]
pub fn clamp_slope<T: Scalar>(x: T) -> T {
    if x.abs() <= T::one() {
        T::one()
    } else {
        T::zero()
    }
}

/// `-ReLU(-2d) + 1`: 1 where the bit agrees with (or ties against) the
/// neighborhood, `1 + 2d` where it disagrees. Zero maps to 1.
#[inline]
pub fn refine<T: Scalar>(d: T) -> T {
    let two = T::one() + T::one();
    let relu = (-(two * d)).max(T::zero());
    T::one() - relu
}

/// Slope of [`refine`]: 2 for `d < 0`, 0 otherwise (ReLU slope 0 at 0).
#[inline]
pub fn refine_slope<T: Scalar>(d: T) -> T {
    if d < T::zero() {
        T::one() + T::one()
    } else {
        T::zero()
    }
}

pub fn clamp_all<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| clamp(v)).collect()
}

pub fn refine_all<T: Scalar>(d: &[T]) -> Vec<T> {
    d.iter().map(|&v| refine(v)).collect()
}
