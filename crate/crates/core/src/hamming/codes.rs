use std::ops::Deref;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Real-valued relaxed codes, one row per node (users first, then items),
/// every entry in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix<T>(Matrix<T>);

impl<T: Scalar> CodeMatrix<T> {
    pub fn new(values: Matrix<T>) -> Result<Self> {
        if values
            .as_slice()
            .iter()
            .any(|v| !(v.abs() <= T::one()))
        {
            return Err(Error::InvalidArgument(
                "code entries must lie in [-1, 1]".into(),
            ));
        }
        Ok(Self(values))
    }

    /// Caller guarantees the range invariant.
    pub(crate) fn from_matrix_unchecked(values: Matrix<T>) -> Self {
        debug_assert!(values.as_slice().iter().all(|v| v.abs() <= T::one()));
        Self(values)
    }

    /// Codes from a row-major slice of `±1` signs.
    pub fn from_signs(rows: usize, width: usize, signs: &[i8]) -> Result<Self> {
        let data = signs.iter().map(|&s| T::from_f64_round(s as f64)).collect();
        Self::new(Matrix::from_vec(rows, width, data)?)
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }
}

impl<T> Deref for CodeMatrix<T> {
    type Target = Matrix<T>;

    fn deref(&self) -> &Matrix<T> {
        &self.0
    }
}

#[inline]
pub fn words_for(width: usize) -> usize {
    width.div_ceil(64)
}

/// Sign-binarized codes packed 64 to a word.
///
/// Bit `b` of a row lives in word `b / 64` at position `b % 64`; a set bit is
/// `+1`, a clear bit `-1`. Bits past `width` in the last word are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    rows: usize,
    width: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

/// Borrowed run of consecutive packed rows.
#[derive(Debug, Clone, Copy)]
pub struct PackedView<'a> {
    rows: usize,
    width: usize,
    words_per_row: usize,
    bits: &'a [u64],
}

impl PackedCodes {
    pub fn from_words(rows: usize, width: usize, bits: Vec<u64>) -> Result<Self> {
        let words_per_row = words_for(width);
        if bits.len() != rows * words_per_row {
            return Err(Error::ShapeMismatch(format!(
                "{} words for {rows} rows of width {width}",
                bits.len()
            )));
        }
        let pad = pad_mask(width);
        if words_per_row > 0 {
            for r in 0..rows {
                if bits[(r + 1) * words_per_row - 1] & !pad != 0 {
                    return Err(Error::Format(format!("row {r} has non-zero pad bits")));
                }
            }
        }
        Ok(Self {
            rows,
            width,
            words_per_row,
            bits,
        })
    }

    /// Packs row-major signs; values `>= 0` become set bits.
    pub fn from_signs(rows: usize, width: usize, signs: &[i8]) -> Result<Self> {
        if signs.len() != rows * width {
            return Err(Error::ShapeMismatch(format!(
                "{} signs for {rows} rows of width {width}",
                signs.len()
            )));
        }
        let wpr = words_for(width);
        let mut bits = vec![0u64; rows * wpr];
        for r in 0..rows {
            pack_row(
                signs[r * width..(r + 1) * width].iter().map(|&s| s >= 0),
                &mut bits[r * wpr..(r + 1) * wpr],
            );
        }
        Ok(Self {
            rows,
            width,
            words_per_row: wpr,
            bits,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.bits[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// `±1` values of a row.
    pub fn unpack_row(&self, r: usize) -> Vec<i8> {
        let row = self.row(r);
        (0..self.width)
            .map(|b| if row[b / 64] >> (b % 64) & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    pub fn view(&self) -> PackedView<'_> {
        self.slice(0..self.rows)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> PackedView<'_> {
        assert!(range.end <= self.rows);
        PackedView {
            rows: range.len(),
            width: self.width,
            words_per_row: self.words_per_row,
            bits: &self.bits[range.start * self.words_per_row..range.end * self.words_per_row],
        }
    }

    /// Dense `±1` matrix with the same codes.
    pub fn to_dense<T: Scalar>(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.rows, self.width);
        for r in 0..self.rows {
            for (c, s) in self.unpack_row(r).into_iter().enumerate() {
                m.set(r, c, T::from_f64_round(s as f64));
            }
        }
        m
    }
}

impl<'a> PackedView<'a> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn row(&self, r: usize) -> &'a [u64] {
        &self.bits[r * self.words_per_row..(r + 1) * self.words_per_row]
    }
}

#[inline]
fn pad_mask(width: usize) -> u64 {
    match width % 64 {
        0 => u64::MAX,
        rem => (1u64 << rem) - 1,
    }
}

fn pack_row(bits_iter: impl Iterator<Item = bool>, out: &mut [u64]) {
    for (b, set) in bits_iter.enumerate() {
        if set {
            out[b / 64] |= 1u64 << (b % 64);
        }
    }
}

/// Hard sign of every entry, packed. Zero counts as `+1`.
pub fn binarize<T: Scalar>(codes: &Matrix<T>) -> PackedCodes {
    let (rows, width) = (codes.rows(), codes.cols());
    let wpr = words_for(width);
    let mut bits = vec![0u64; rows * wpr];
    for r in 0..rows {
        pack_row(
            codes.row(r).iter().map(|&v| v >= T::zero()),
            &mut bits[r * wpr..(r + 1) * wpr],
        );
    }
    PackedCodes {
        rows,
        width,
        words_per_row: wpr,
        bits,
    }
}

/// Inner product of two packed `±1` codes, `K - 2 * hamming_distance`.
pub fn hamming_similarity(a: &[u64], b: &[u64], width: usize) -> Result<i32> {
    let words = words_for(width);
    for len in [a.len(), b.len()] {
        if len != words {
            return Err(Error::WidthMismatch {
                expected: words,
                actual: len,
            });
        }
    }
    Ok(similarity_unchecked(a, b, width))
}

/// [`hamming_similarity`] without the length checks, for scan loops.
#[inline]
pub fn similarity_unchecked(a: &[u64], b: &[u64], width: usize) -> i32 {
    let diff: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
    width as i32 - 2 * diff as i32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sign_rule() {
        let m = Matrix::from_vec(1, 4, vec![0.3f64, -0.7, 0.0, -0.1]).unwrap();
        let p = binarize(&m);
        assert_eq!(p.row(0), &[0b0101]);
        assert_eq!(p.unpack_row(0), vec![1, -1, 1, -1]);
    }

    #[test]
    fn all_positive_full_word() {
        let m = Matrix::filled(1, 64, 0.5f32);
        assert_eq!(binarize(&m).row(0), &[u64::MAX]);
    }

    #[test]
    fn width_65_padding() {
        let m = Matrix::filled(2, 65, 1.0f64);
        let p = binarize(&m);
        assert_eq!(p.words_per_row(), 2);
        assert_eq!(p.row(1), &[u64::MAX, 1]);
        let neg = binarize(&Matrix::filled(1, 65, -1.0f64));
        assert_eq!(neg.row(0), &[0, 0]);
    }

    #[test]
    fn pad_bits_rejected_on_load() {
        assert!(PackedCodes::from_words(1, 65, vec![0, 0b10]).is_err());
        assert!(PackedCodes::from_words(1, 65, vec![0, 0b1]).is_ok());
        assert!(PackedCodes::from_words(1, 65, vec![0]).is_err());
    }

    #[test]
    fn similarity_examples() {
        let a = [0x0123_4567_89ab_cdefu64];
        assert_eq!(hamming_similarity(&a, &a, 64).unwrap(), 64);
        let b = [a[0] ^ (1 << 17)];
        assert_eq!(hamming_similarity(&a, &b, 64).unwrap(), 62);
        let c = [!a[0]];
        assert_eq!(hamming_similarity(&a, &c, 64).unwrap(), -64);
        assert!(matches!(
            hamming_similarity(&a, &[0, 0], 64),
            Err(Error::WidthMismatch { .. })
        ));
    }

    #[test]
    fn code_matrix_range_checked() {
        assert!(CodeMatrix::new(Matrix::from_vec(1, 2, vec![0.5f64, 1.5]).unwrap()).is_err());
        assert!(CodeMatrix::new(Matrix::from_vec(1, 2, vec![f64::NAN, 0.0]).unwrap()).is_err());
        let c = CodeMatrix::<f64>::from_signs(1, 2, &[1, -1]).unwrap();
        assert_eq!(c.row(0), &[1.0, -1.0]);
    }

    fn signs(width: usize) -> impl Strategy<Value = Vec<i8>> {
        proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], width)
    }

    proptest! {
        #[test]
        fn packed_score_is_inner_product(
            (width, a, b) in (1usize..=256).prop_flat_map(|w| (Just(w), signs(w), signs(w)))
        ) {
            let pa = PackedCodes::from_signs(1, width, &a).unwrap();
            let pb = PackedCodes::from_signs(1, width, &b).unwrap();
            let dot: i32 = a.iter().zip(&b).map(|(&x, &y)| x as i32 * y as i32).sum();
            prop_assert_eq!(hamming_similarity(pa.row(0), pb.row(0), width).unwrap(), dot);
            prop_assert_eq!(pa.unpack_row(0), a);
            let last = pa.row(0)[pa.words_per_row() - 1];
            prop_assert_eq!(last & !pad_mask(width), 0);
        }

        #[test]
        fn unpack_of_binarize_is_sign(
            (width, vals) in (1usize..=130).prop_flat_map(|w| (Just(w), proptest::collection::vec(-1.0f64..=1.0, w)))
        ) {
            let m = Matrix::from_vec(1, width, vals.clone()).unwrap();
            let expect: Vec<i8> = vals.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
            prop_assert_eq!(binarize(&m).unpack_row(0), expect);
        }
    }
}
