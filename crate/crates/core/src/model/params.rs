use rand::Rng;

use crate::error::{Error, Result};
use crate::hamming::CodeMatrix;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Trainable state: one real-valued row per node whose scaled `tanh` is the
/// initial relaxed code, plus the propagation depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    embeddings: Matrix<T>,
    num_users: usize,
    beta: T,
    layers: usize,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(embeddings: Matrix<T>, num_users: usize, beta: T, layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument("layer count must be at least 1".into()));
        }
        Self::with_any_depth(embeddings, num_users, beta, layers)
    }

    /// Like [`ModelParams::new`] but allows zero layers (initial codes only).
    pub fn with_any_depth(
        embeddings: Matrix<T>,
        num_users: usize,
        beta: T,
        layers: usize,
    ) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if embeddings.cols() == 0 {
            return Err(Error::InvalidArgument("code width must be at least 1".into()));
        }
        if num_users > embeddings.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{num_users} users but {} rows",
                embeddings.rows()
            )));
        }
        if !embeddings.is_finite() {
            return Err(Error::NonFinite("embeddings"));
        }
        Ok(Self {
            embeddings,
            num_users,
            beta,
            layers,
        })
    }

    /// Xavier-uniform initialization treating the table as a
    /// `(N + M) x K` layer: entries in `±sqrt(6 / (N + M + K))`.
    pub fn xavier<R: Rng + ?Sized>(
        num_users: usize,
        num_items: usize,
        width: usize,
        layers: usize,
        beta: T,
        rng: &mut R,
    ) -> Result<Self> {
        let rows = num_users + num_items;
        let bound = xavier_bound(rows, width);
        Self::new(Matrix::uniform(rows, width, bound, rng), num_users, beta, layers)
    }

    pub fn embeddings(&self) -> &Matrix<T> {
        &self.embeddings
    }

    pub(crate) fn embeddings_mut(&mut self) -> &mut Matrix<T> {
        &mut self.embeddings
    }

    pub fn into_embeddings(self) -> Matrix<T> {
        self.embeddings
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.embeddings.rows() - self.num_users
    }

    pub fn num_nodes(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn width(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn set_beta(&mut self, beta: T) -> Result<()> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        self.beta = beta;
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.embeddings.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("embeddings"))
        }
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `tanh(beta * E)`, the relaxed codes entering the first propagation layer.
pub fn initial_codes<T: Scalar>(params: &ModelParams<T>) -> Result<CodeMatrix<T>> {
    params.check_finite()?;
    let beta = params.beta();
    Ok(CodeMatrix::from_matrix_unchecked(
        params.embeddings().map(|e| (beta * e).tanh()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tanh_examples() {
        let e = Matrix::from_vec(1, 3, vec![0.0f64, 10.0, -0.3]).unwrap();
        let p = ModelParams::new(e.clone(), 1, 10.0, 1).unwrap();
        let h = initial_codes(&p).unwrap();
        assert_eq!(h.get(0, 0), 0.0);
        assert!((h.get(0, 1) - 1.0).abs() < 1e-12);
        let p2 = ModelParams::new(e, 1, 20.0, 1).unwrap();
        let h2 = initial_codes(&p2).unwrap();
        for c in 0..3 {
            assert!(h2.get(0, c).abs() >= h.get(0, c).abs());
        }
    }

    #[test]
    fn rejects_bad_params() {
        let e = Matrix::<f64>::zeros(2, 2);
        assert!(ModelParams::new(e.clone(), 1, 0.0, 1).is_err());
        assert!(ModelParams::new(e.clone(), 1, 1.0, 0).is_err());
        assert!(ModelParams::with_any_depth(e.clone(), 1, 1.0, 0).is_ok());
        assert!(ModelParams::new(e, 3, 1.0, 1).is_err());
        let nan = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(ModelParams::new(nan, 1, 1.0, 1).is_err());
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::<f64>::xavier(30, 20, 8, 2, 1.0, &mut rng).unwrap();
        let bound = (6.0f64 / 58.0).sqrt();
        assert!(p.embeddings().as_slice().iter().all(|v| v.abs() <= bound));
        assert!(p.embeddings().as_slice().iter().any(|v| v.abs() > bound * 0.9));
        assert_eq!((p.num_users(), p.num_items(), p.width()), (30, 20, 8));
    }
}
