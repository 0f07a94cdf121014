//! Single-step subcommands: one model's CAT matrix, clustering a saved
//! matrix, comparing two matrices, and inspecting EMB1 files.

use std::path::Path;

use impression_core::association::association_vector;
use impression_core::corpus::{
    align, default_attributes, read_attribute_config, read_embeddings, read_ratings,
    EmbeddingMeta, RatingScale,
};
use impression_core::structure::{
    correlation_matrix, frobenius_similarity, hcluster, to_newick, CorrelationMatrix, Linkage,
};
use serde::Serialize;

use crate::config::require_file;
use crate::error::{CliResult, Context};
use crate::output::Staging;

/// Correlated-attribute matrix of one model over the images it shares with
/// the ratings table. Writes `cat_matrix.csv` into `out` when given.
pub fn cmd_cat(
    images: &Path,
    text: &Path,
    ratings: &Path,
    attributes: Option<&Path>,
    scale: RatingScale,
    out: Option<&Path>,
) -> CliResult<CorrelationMatrix> {
    require_file(images, "image embeddings")?;
    require_file(text, "text embeddings")?;
    require_file(ratings, "ratings file")?;
    let attrs = match attributes {
        Some(p) => read_attribute_config(p)?,
        None => default_attributes(),
    };
    let emb = read_embeddings(images).context("image embeddings")?;
    let txt = read_embeddings(text).context("text embeddings")?;
    let corpus = align(&emb, &read_ratings(ratings, scale)?)?;
    let columns = attrs
        .iter()
        .map(|a| Ok((a.name.clone(), association_vector(&corpus, a, &txt)?.scores)))
        .collect::<CliResult<Vec<_>>>()?;
    let c = correlation_matrix(&columns)?;
    if let Some(out) = out {
        let mut s = Staging::new(out)?;
        s.write("cat_matrix.csv", c.to_csv())?;
        s.commit()?;
    }
    Ok(c)
}

/// Newick dendrogram of a saved correlation matrix; also written to
/// `dendrogram.nwk` in `out` when given.
pub fn cmd_cluster(matrix: &Path, linkage: Linkage, out: Option<&Path>) -> CliResult<String> {
    require_file(matrix, "correlation matrix")?;
    let c = CorrelationMatrix::read_csv(matrix)?;
    let tree = to_newick(&hcluster(&c, linkage)?);
    if let Some(out) = out {
        let mut s = Staging::new(out)?;
        s.write("dendrogram.nwk", format!("{tree}\n"))?;
        s.commit()?;
    }
    Ok(tree)
}

pub fn cmd_frobenius(a: &Path, b: &Path) -> CliResult<f64> {
    require_file(a, "correlation matrix")?;
    require_file(b, "correlation matrix")?;
    let ca = CorrelationMatrix::read_csv(a)?;
    let cb = CorrelationMatrix::read_csv(b)?;
    Ok(frobenius_similarity(&ca, &cb)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbSummary {
    pub path: String,
    pub dim: usize,
    pub count: usize,
    pub meta: Option<EmbeddingMeta>,
    pub first_ids: Vec<String>,
    pub row_norms: NormSummary,
}

pub fn emb_inspect(path: &Path) -> CliResult<EmbSummary> {
    require_file(path, "embedding file")?;
    let m = read_embeddings(path)?;
    let norms: Vec<f64> = (0..m.len())
        .map(|i| m.row_f64(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Ok(EmbSummary {
        path: path.display().to_string(),
        dim: m.dim(),
        count: m.len(),
        meta: m.meta().cloned(),
        first_ids: m.ids().iter().take(5).cloned().collect(),
        row_norms: NormSummary {
            min: norms.iter().copied().fold(f64::INFINITY, f64::min),
            mean: norms.iter().sum::<f64>() / norms.len() as f64,
            max: norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        },
    })
}
