//! Rating-predicting subspaces learned by ridge regression, projection
//! products, pole classification metrics and differential group bias.
//!
//! Targets are human ratings shifted by the scale midpoint, and feature
//! columns are centered on their training means, so a positive projection
//! means "towards the positive pole".

use std::path::Path;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_embeddings, write_embeddings, EmbeddingMatrix, EmbeddingMeta, Modality};
use crate::error::{Error, Result};
use crate::stats::{self, DMode};

/// Singular values below this fraction of the largest are treated as zero.
const SV_TOL: f64 = 1e-12;

/// Default ridge grid for generalized cross-validation: 10^-4 ..= 10^4 in
/// half-decade steps.
pub fn default_lambda_grid() -> Vec<f64> {
    (-8..=8).map(|e| 10f64.powf(e as f64 / 2.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSubspace {
    pub attribute: String,
    pub weights: Vec<f64>,
    /// Mean of the midpoint-shifted training ratings.
    pub intercept: f64,
    pub ridge_lambda: f64,
    pub train_r2: f64,
    pub rating_midpoint: f64,
    /// Training-set column means subtracted before projecting.
    pub feature_means: Vec<f64>,
}

impl AttributeSubspace {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Predicted rating on the original scale.
    pub fn predict(&self, vec: &[f64]) -> Result<f64> {
        let centered_dot = project(vec, self)? * self.weight_norm();
        Ok(self.rating_midpoint + self.intercept + centered_dot)
    }

    /// One-row EMB1 matrix holding the weights; the remaining fields go in
    /// the metadata block.
    pub fn to_embedding_matrix(&self) -> Result<EmbeddingMatrix> {
        let mut meta = EmbeddingMeta::new("subspace", Modality::Image, self.attribute.clone());
        meta.extra.insert("intercept".into(), self.intercept.into());
        meta.extra.insert("ridge_lambda".into(), self.ridge_lambda.into());
        meta.extra.insert("train_r2".into(), self.train_r2.into());
        meta.extra.insert("rating_midpoint".into(), self.rating_midpoint.into());
        meta.extra.insert(
            "feature_means".into(),
            serde_json::to_value(&self.feature_means).expect("finite floats serialize"),
        );
        EmbeddingMatrix::new(
            vec![self.attribute.clone()],
            self.dim(),
            self.weights.iter().map(|&w| w as f32).collect(),
            Some(meta),
        )
    }

    pub fn from_embedding_matrix(m: &EmbeddingMatrix) -> Result<Self> {
        let meta = m
            .meta()
            .ok_or_else(|| Error::Format("subspace file has no metadata block".into()))?;
        let num = |key: &str| -> Result<f64> {
            meta.extra
                .get(key)
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| Error::Format(format!("subspace metadata lacks `{key}`")))
        };
        let feature_means: Vec<f64> = meta
            .extra
            .get("feature_means")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::Format(format!("subspace feature_means: {e}")))?
            .ok_or_else(|| Error::Format("subspace metadata lacks `feature_means`".into()))?;
        if m.len() != 1 || feature_means.len() != m.dim() {
            return Err(Error::Format(
                "subspace file must hold one weight row matching feature_means".into(),
            ));
        }
        Ok(AttributeSubspace {
            attribute: m.ids()[0].clone(),
            weights: m.row_f64(0),
            intercept: num("intercept")?,
            ridge_lambda: num("ridge_lambda")?,
            train_r2: num("train_r2")?,
            rating_midpoint: num("rating_midpoint")?,
            feature_means,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_embeddings(&self.to_embedding_matrix()?, path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_embedding_matrix(&read_embeddings(path)?)
    }
}

/// Embedding rows as an n × dim `f64` matrix.
pub fn feature_matrix(m: &EmbeddingMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.len(), m.dim(), |i, j| f64::from(m.row(i)[j]))
}

/// Ridge solver for one feature matrix, reusable across attributes.
///
/// Holds the SVD of the column-centered features, so each fit (and each
/// λ on a path) costs only a few matrix-vector products.
pub struct RidgeProbe {
    n: usize,
    dim: usize,
    means: Vec<f64>,
    u: DMatrix<f64>,
    singular: DVector<f64>,
    v_t: DMatrix<f64>,
    rank: usize,
    cutoff: f64,
}

impl RidgeProbe {
    pub fn new(features: &DMatrix<f64>) -> Result<Self> {
        let (n, dim) = features.shape();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "subspace fitting needs at least 2 images, got {n}"
            )));
        }
        if dim == 0 {
            return Err(Error::Validation("features have zero columns".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("features contain non-finite values".into()));
        }
        let means: Vec<f64> = features.column_iter().map(|c| c.mean()).collect();
        let mut centered = features.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        let svd = SVD::new(centered, true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let singular = svd.singular_values;
        let s_max = singular.iter().copied().fold(0.0, f64::max);
        let cutoff = SV_TOL * s_max;
        let rank = singular.iter().filter(|&&s| s > cutoff).count();
        Ok(RidgeProbe {
            n,
            dim,
            means,
            u,
            singular,
            v_t,
            rank,
            cutoff,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn centered_target(&self, ratings: &[f64], midpoint: f64) -> Result<(DVector<f64>, f64)> {
        if ratings.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                actual: ratings.len(),
            });
        }
        if ratings.iter().any(|v| !v.is_finite()) || !midpoint.is_finite() {
            return Err(Error::Validation("ratings or midpoint not finite".into()));
        }
        let y: Vec<f64> = ratings.iter().map(|r| r - midpoint).collect();
        let mean = stats::mean(&y);
        if y.iter().all(|&v| v == y[0]) {
            return Err(Error::DegenerateTarget("ratings have zero variance".into()));
        }
        Ok((DVector::from_iterator(self.n, y.iter().map(|v| v - mean)), mean))
    }

    /// Shrinkage factors s/(s² + λ) applied to Uᵀy, one per singular value.
    fn filter(&self, lambda: f64) -> Result<Vec<f64>> {
        if lambda.is_nan() || lambda < 0.0 || lambda.is_infinite() {
            return Err(Error::Domain(format!("ridge λ must be ≥ 0, got {lambda}")));
        }
        if lambda == 0.0 && (self.n <= self.dim || self.rank < self.dim) {
            return Err(Error::SingularDesign(format!(
                "unregularized fit needs full column rank ({} images, dim {}, rank {}); use λ > 0",
                self.n, self.dim, self.rank
            )));
        }
        Ok(self
            .singular
            .iter()
            .map(|&s| if s > self.cutoff { s / (s * s + lambda) } else { 0.0 })
            .collect())
    }

    /// Fits weights minimizing ‖X_c w − (h − midpoint)‖² + λ‖w‖².
    pub fn fit(
        &self,
        attribute: &str,
        ratings: &[f64],
        lambda: f64,
        midpoint: f64,
    ) -> Result<AttributeSubspace> {
        let (yc, y_mean) = self.centered_target(ratings, midpoint)?;
        let factors = self.filter(lambda)?;
        let uty = self.u.tr_mul(&yc);
        let coef = DVector::from_iterator(
            factors.len(),
            factors.iter().zip(uty.iter()).map(|(f, c)| f * c),
        );
        let w = self.v_t.tr_mul(&coef);
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateTarget(format!(
                "ratings for `{attribute}` are orthogonal to every feature direction"
            )));
        }
        // Fitted centered values: U diag(s·f) Uᵀy
        let fitted_coef = DVector::from_iterator(
            factors.len(),
            factors
                .iter()
                .zip(self.singular.iter())
                .zip(uty.iter())
                .map(|((f, s), c)| f * s * c),
        );
        let fitted = &self.u * fitted_coef;
        let sse = (&yc - fitted).norm_squared();
        let sst = yc.norm_squared();
        Ok(AttributeSubspace {
            attribute: attribute.to_owned(),
            weights: w.iter().copied().collect(),
            intercept: y_mean,
            ridge_lambda: lambda,
            train_r2: 1.0 - sse / sst,
            rating_midpoint: midpoint,
            feature_means: self.means.clone(),
        })
    }

    /// Generalized cross-validation score n·RSS/(n − df)² for one λ, with
    /// df counting the intercept.
    pub fn gcv_score(&self, ratings: &[f64], lambda: f64, midpoint: f64) -> Result<f64> {
        let (yc, _) = self.centered_target(ratings, midpoint)?;
        let factors = self.filter(lambda)?;
        let uty = self.u.tr_mul(&yc);
        let mut df = 1.0;
        let mut fitted_coef = DVector::zeros(factors.len());
        for (i, (&f, &s)) in factors.iter().zip(self.singular.iter()).enumerate() {
            df += f * s;
            fitted_coef[i] = f * s * uty[i];
        }
        let rss = (&yc - &self.u * fitted_coef).norm_squared();
        let n = self.n as f64;
        if n - df <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(n * rss / ((n - df) * (n - df)))
    }

    /// λ on `grid` with the lowest GCV score; ties keep the smaller λ.
    pub fn select_lambda(&self, ratings: &[f64], midpoint: f64, grid: &[f64]) -> Result<f64> {
        let mut best: Option<(f64, f64)> = None;
        for &lambda in grid {
            let score = match self.gcv_score(ratings, lambda, midpoint) {
                Ok(s) => s,
                Err(Error::SingularDesign(_)) => continue,
                Err(e) => return Err(e),
            };
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((lambda, score));
            }
        }
        best.map(|(l, _)| l)
            .ok_or_else(|| Error::SingularDesign("no usable λ on the grid".into()))
    }
}

/// One-shot fit; see [`RidgeProbe`] for fitting many attributes.
pub fn fit_subspace(
    attribute: &str,
    features: &DMatrix<f64>,
    ratings: &[f64],
    lambda: f64,
    midpoint: f64,
) -> Result<AttributeSubspace> {
    RidgeProbe::new(features)?.fit(attribute, ratings, lambda, midpoint)
}

/// Projection product of a centered vector onto the unit weight direction.
pub fn project(vec: &[f64], subspace: &AttributeSubspace) -> Result<f64> {
    if vec.len() != subspace.dim() {
        return Err(Error::Dimension {
            expected: subspace.dim(),
            actual: vec.len(),
        });
    }
    let norm = subspace.weight_norm();
    if norm.is_nan() || norm <= 0.0 {
        return Err(Error::DegenerateVector("subspace weights are zero".into()));
    }
    let dot: f64 = vec
        .iter()
        .zip(&subspace.feature_means)
        .zip(&subspace.weights)
        .map(|((v, m), w)| (v - m) * w)
        .sum();
    Ok(dot / norm)
}

pub fn project_rows(features: &DMatrix<f64>, subspace: &AttributeSubspace) -> Result<Vec<f64>> {
    features
        .row_iter()
        .map(|r| project(&r.iter().copied().collect::<Vec<_>>(), subspace))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub attribute: String,
    /// Positive-pole images first, then negative-pole images.
    pub projections: Vec<f64>,
    /// Ground truth: 1 for positive-pole images, 0 for negative-pole.
    pub labels: Vec<u8>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of the positive class.
pub fn binary_metrics(truth: &[u8], predicted: &[u8]) -> (f64, f64, f64) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Scores the subspace as a classifier that predicts the positive pole iff
/// the projection is positive.
pub fn classify_projections(
    pos_images: &DMatrix<f64>,
    neg_images: &DMatrix<f64>,
    subspace: &AttributeSubspace,
) -> Result<ProjectionResult> {
    if pos_images.nrows() == 0 || neg_images.nrows() == 0 {
        return Err(Error::InsufficientData(
            "classification needs images from both poles".into(),
        ));
    }
    let mut projections = project_rows(pos_images, subspace)?;
    projections.extend(project_rows(neg_images, subspace)?);
    let labels: Vec<u8> = std::iter::repeat_n(1, pos_images.nrows())
        .chain(std::iter::repeat_n(0, neg_images.nrows()))
        .collect();
    let predicted: Vec<u8> = projections.iter().map(|&p| u8::from(p > 0.0)).collect();
    let (precision, recall, f1) = binary_metrics(&labels, &predicted);
    Ok(ProjectionResult {
        attribute: subspace.attribute.clone(),
        projections,
        labels,
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialBias {
    pub attribute: String,
    pub d: f64,
    pub t: f64,
    pub p: f64,
    pub group_a: String,
    pub group_b: String,
    pub mode: DMode,
}

/// Effect size and significance of the projection gap between two groups.
/// Paired mode matches images by position.
pub fn differential_bias(
    attribute: &str,
    group_a: (&str, &[f64]),
    group_b: (&str, &[f64]),
    mode: DMode,
) -> Result<DifferentialBias> {
    if group_a.1.is_empty() || group_b.1.is_empty() {
        return Err(Error::InsufficientData("differential bias needs non-empty groups".into()));
    }
    let test = match mode {
        DMode::Paired => stats::paired_t(group_a.1, group_b.1)?,
        DMode::Pooled => stats::unpaired_t(group_a.1, group_b.1)?,
    };
    Ok(DifferentialBias {
        attribute: attribute.to_owned(),
        d: stats::cohens_d(group_a.1, group_b.1, mode)?,
        t: test.statistic,
        p: test.p_value,
        group_a: group_a.0.to_owned(),
        group_b: group_b.0.to_owned(),
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(weights: Vec<f64>) -> AttributeSubspace {
        AttributeSubspace {
            attribute: "a".into(),
            feature_means: vec![0.0; weights.len()],
            weights,
            intercept: 0.0,
            ridge_lambda: 0.0,
            train_r2: 1.0,
            rating_midpoint: 50.0,
        }
    }

    #[test]
    fn projection_hand_value() {
        assert!((project(&[1.0, 0.0], &sub(vec![3.0, 4.0])).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(project(&[4.0, -3.0], &sub(vec![3.0, 4.0])).unwrap(), 0.0);
        assert!(matches!(
            project(&[1.0], &sub(vec![3.0, 4.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn projection_uses_feature_means() {
        let mut s = sub(vec![0.0, 2.0]);
        s.feature_means = vec![5.0, 1.0];
        assert_eq!(project(&[5.0, 4.0], &s).unwrap(), 3.0);
    }

    #[test]
    fn metrics_edges() {
        assert_eq!(binary_metrics(&[1, 1, 0], &[1, 1, 0]), (1.0, 1.0, 1.0));
        assert_eq!(binary_metrics(&[1, 1, 0], &[0, 0, 1]), (0.0, 0.0, 0.0));
        let (p, r, f) = binary_metrics(&[1, 1, 0, 0], &[1, 0, 1, 0]);
        assert_eq!((p, r, f), (0.5, 0.5, 0.5));
    }

    #[test]
    fn lambda_zero_needs_more_rows_than_dims() {
        let x = DMatrix::from_fn(3, 3, |i, j| ((i + 1) * (j + 2)) as f64 + (i * j) as f64);
        let r = fit_subspace("a", &x, &[10.0, 60.0, 30.0], 0.0, 50.0);
        assert!(matches!(r, Err(Error::SingularDesign(_))));
        assert!(fit_subspace("a", &x, &[10.0, 60.0, 30.0], 1.0, 50.0).is_ok());
    }

    #[test]
    fn constant_ratings_are_degenerate() {
        let x = DMatrix::from_fn(5, 2, |i, j| (i as f64).powi(j as i32 + 1));
        let r = fit_subspace("a", &x, &[40.0; 5], 1.0, 50.0);
        assert!(matches!(r, Err(Error::DegenerateTarget(_))));
    }

    #[test]
    fn classification_requires_both_poles() {
        let empty = DMatrix::<f64>::zeros(0, 2);
        let one = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let s = sub(vec![1.0, 0.0]);
        assert!(matches!(
            classify_projections(&one, &empty, &s),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn perfect_and_inverted_separation() {
        let pos = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 2.0, -1.0]);
        let neg = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -0.5, 4.0]);
        let s = sub(vec![1.0, 0.0]);
        assert_eq!(classify_projections(&pos, &neg, &s).unwrap().f1, 1.0);
        assert_eq!(classify_projections(&neg, &pos, &s).unwrap().f1, 0.0);
    }

    #[test]
    fn identical_groups_have_no_bias() {
        let g = [0.1, -0.4, 0.9, 0.3];
        for mode in [DMode::Paired, DMode::Pooled] {
            let b = differential_bias("a", ("white", &g), ("black", &g), mode).unwrap();
            assert_eq!((b.d, b.p), (0.0, 1.0));
        }
    }

    #[test]
    fn serialization_round_trip() {
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let s = fit_subspace("happy", &x, &[10.0, 80.0, 45.0, 60.0, 30.0, 70.0], 0.5, 50.0)
            .unwrap();
        let m = s.to_embedding_matrix().unwrap();
        let back = AttributeSubspace::from_embedding_matrix(
            &EmbeddingMatrix::from_bytes(&m.to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back.feature_means, s.feature_means);
        assert_eq!(back.intercept, s.intercept);
        for (a, b) in back.weights.iter().zip(&s.weights) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}
