//! Linear 32-dim semantic feature codec backed by a centered truncated SVD.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AppearanceError;

/// Distilled latent dimension.
pub const LATENT_DIM: usize = 32;

/// Linear encoder/decoder pair over the top-k principal directions of the
/// centered training data. Round trips are exact on the fitted subspace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureCodec {
    /// k x D projection.
    pub encode_matrix: DMatrix<f64>,
    /// D x k reconstruction.
    pub decode_matrix: DMatrix<f64>,
    /// Training mean, length D.
    pub mean: DVector<f64>,
}

impl FeatureCodec {
    /// Fits the codec to an N x D matrix of raw features (one row per sample).
    pub fn fit(training: &DMatrix<f64>, k: usize) -> Result<Self, AppearanceError> {
        let (n, d) = training.shape();
        if n < k || d < k {
            return Err(AppearanceError::InsufficientData { needed: k, got: n.min(d) });
        }
        let mean = training.row_mean().transpose();
        let mut centered = training.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let svd = centered.svd(true, true);
        let v_t = svd.v_t.expect("svd requested v_t");
        // rows of v_t are right singular vectors ordered by singular value
        let basis = v_t.rows(0, k).into_owned();
        Ok(Self {
            decode_matrix: basis.transpose(),
            encode_matrix: basis,
            mean,
        })
    }

    pub fn raw_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.encode_matrix.nrows()
    }

    pub fn encode(&self, feature: &[f64]) -> Result<Vec<f64>, AppearanceError> {
        if feature.len() != self.raw_dim() {
            return Err(AppearanceError::DimensionMismatch {
                expected: self.raw_dim(),
                got: feature.len(),
            });
        }
        let x = DVector::from_column_slice(feature) - &self.mean;
        Ok((&self.encode_matrix * x).as_slice().to_vec())
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>, AppearanceError> {
        if latent.len() != self.latent_dim() {
            return Err(AppearanceError::DimensionMismatch {
                expected: self.latent_dim(),
                got: latent.len(),
            });
        }
        let z = DVector::from_column_slice(latent);
        Ok((&self.decode_matrix * z + &self.mean).as_slice().to_vec())
    }

    /// Total squared reconstruction error over the training rows.
    pub fn reconstruction_error(&self, data: &DMatrix<f64>) -> f64 {
        let mut err = 0.0;
        for row in data.row_iter() {
            let x: Vec<f64> = row.iter().copied().collect();
            let rec = self
                .decode(&self.encode(&x).expect("dim"))
                .expect("dim");
            err += x
                .iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        err
    }
}
