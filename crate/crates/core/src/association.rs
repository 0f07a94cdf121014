//! Pole-differential associations between image and prompt embeddings, and
//! their rank agreement with human ratings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedCorpus, AttributeSpec, EmbeddingMatrix, IrrTable};
use crate::error::{Error, Result};
use crate::stats::{self, Correlation, CorrelationMethod};

/// Per-image association scores of one model with one attribute, in the
/// corpus' canonical id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationVector {
    pub model_id: String,
    pub attribute: String,
    pub scores: Vec<f64>,
}

/// Spearman agreement between a model's associations and human ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub model_id: String,
    pub attribute: String,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn checked_norm(v: &[f64], what: &str) -> Result<f64> {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::DegenerateVector(format!("{what} has zero or non-finite norm")))
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let na = checked_norm(a, "first vector")?;
    let nb = checked_norm(b, "second vector")?;
    Ok(dot(a, b) / (na * nb))
}

/// cos(image, positive) − cos(image, negative).
pub fn pole_association(image: &[f64], positive: &[f64], negative: &[f64]) -> Result<f64> {
    check_dim(image.len(), positive.len())?;
    check_dim(image.len(), negative.len())?;
    let ni = checked_norm(image, "image vector")?;
    let np = checked_norm(positive, "positive pole vector")?;
    let nn = checked_norm(negative, "negative pole vector")?;
    Ok(dot(image, positive) / (ni * np) - dot(image, negative) / (ni * nn))
}

fn prompt_row(text: &EmbeddingMatrix, key: &str) -> Result<Vec<f64>> {
    let i = text
        .position(key)
        .ok_or_else(|| Error::MissingPrompt(key.to_owned()))?;
    Ok(text.row_f64(i))
}

fn model_id_of(corpus: &AlignedCorpus, text: &EmbeddingMatrix) -> String {
    corpus
        .embeddings
        .model_id()
        .or_else(|| text.model_id())
        .unwrap_or("unknown")
        .to_owned()
}

/// Associations of every corpus image with one attribute's poles. Text rows
/// are looked up as `<attribute>/pos` and `<attribute>/neg`.
pub fn association_vector(
    corpus: &AlignedCorpus,
    attribute: &AttributeSpec,
    text_embeddings: &EmbeddingMatrix,
) -> Result<AssociationVector> {
    let positive = prompt_row(text_embeddings, &attribute.positive_key())?;
    let negative = prompt_row(text_embeddings, &attribute.negative_key())?;
    check_dim(corpus.embeddings.dim(), positive.len())?;
    let scores = (0..corpus.len())
        .map(|j| pole_association(&corpus.embeddings.row_f64(j), &positive, &negative))
        .collect::<Result<Vec<_>>>()?;
    Ok(AssociationVector {
        model_id: model_id_of(corpus, text_embeddings),
        attribute: attribute.name.clone(),
        scores,
    })
}

pub fn model_human_similarity(m: &AssociationVector, human: &[f64]) -> Result<SimilarityRecord> {
    let c = stats::spearman(&m.scores, human).map_err(|e| match e {
        Error::UndefinedCorrelation(msg) => Error::UndefinedCorrelation(format!(
            "{} / {}: {msg}",
            m.model_id, m.attribute
        )),
        other => other,
    })?;
    Ok(SimilarityRecord {
        model_id: m.model_id.clone(),
        attribute: m.attribute.clone(),
        rho: c.coefficient,
        p_value: c.p_value,
        n: c.n,
    })
}

/// Correlation between per-attribute mean model-human similarity and human
/// inter-rater reliability, over the attributes both maps share.
pub fn irr_correlation(
    mean_similarity: &BTreeMap<String, f64>,
    irr: &IrrTable,
    method: CorrelationMethod,
) -> Result<Correlation> {
    let (sims, irrs): (Vec<f64>, Vec<f64>) = mean_similarity
        .iter()
        .filter_map(|(a, &s)| irr.get(a).map(|r| (s, r)))
        .unzip();
    if sims.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "IRR correlation needs at least 3 shared attributes, got {}",
            sims.len()
        )));
    }
    stats::correlate(&sims, &irrs, method)
}
