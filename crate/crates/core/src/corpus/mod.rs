//! Data model and file formats: embeddings, ratings, IRR, prompts, models.

mod emb;
mod tables;

pub use emb::{
    read_embeddings, write_embeddings, EmbeddingMatrix, EmbeddingMeta, Modality, MAGIC, VERSION,
};
pub use tables::{
    default_attributes, parse_attribute_config, parse_ratings, read_attribute_config, read_irr,
    read_model_meta, read_ratings, AttributeSpec, IrrTable, ModelFamily, ModelMeta, RatingScale,
    RatingsTable,
};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Image embeddings and ratings restricted to their shared ids, both in
/// lexicographic id order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCorpus {
    pub embeddings: EmbeddingMatrix,
    pub ratings: RatingsTable,
    /// Ids present only in the embeddings.
    pub dropped_embedding_ids: Vec<String>,
    /// Ids present only in the ratings.
    pub dropped_rating_ids: Vec<String>,
}

impl AlignedCorpus {
    pub fn ids(&self) -> &[String] {
        self.embeddings.ids()
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

/// Inner-joins embeddings and ratings on id.
pub fn align(embeddings: &EmbeddingMatrix, ratings: &RatingsTable) -> Result<AlignedCorpus> {
    let rating_pos: HashMap<&str, usize> = ratings
        .image_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let emb_pos: HashMap<&str, usize> = embeddings
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut shared: Vec<&str> = embeddings
        .ids()
        .iter()
        .map(String::as_str)
        .filter(|id| rating_pos.contains_key(id))
        .collect();
    if shared.is_empty() {
        return Err(Error::Alignment(
            "embeddings and ratings share no image ids".into(),
        ));
    }
    shared.sort_unstable();

    let emb_idx: Vec<usize> = shared.iter().map(|id| emb_pos[id]).collect();
    let rat_idx: Vec<usize> = shared.iter().map(|id| rating_pos[id]).collect();

    let mut dropped_embedding_ids: Vec<String> = embeddings
        .ids()
        .iter()
        .filter(|id| !rating_pos.contains_key(id.as_str()))
        .cloned()
        .collect();
    dropped_embedding_ids.sort_unstable();
    let mut dropped_rating_ids: Vec<String> = ratings
        .image_ids()
        .iter()
        .filter(|id| !emb_pos.contains_key(id.as_str()))
        .cloned()
        .collect();
    dropped_rating_ids.sort_unstable();

    Ok(AlignedCorpus {
        embeddings: embeddings.select(&emb_idx)?,
        ratings: ratings.select(&rat_idx)?,
        dropped_embedding_ids,
        dropped_rating_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(ids: &[&str]) -> EmbeddingMatrix {
        let data = (0..ids.len()).map(|i| i as f32 + 1.0).collect();
        EmbeddingMatrix::new(ids.iter().map(|s| s.to_string()).collect(), 1, data, None).unwrap()
    }

    fn ratings(ids: &[&str]) -> RatingsTable {
        let values = (0..ids.len()).map(|i| 10.0 * i as f64).collect();
        RatingsTable::new(
            ids.iter().map(|s| s.to_string()).collect(),
            vec!["happy".into()],
            values,
            RatingScale::default(),
        )
        .unwrap()
    }

    #[test]
    fn identical_ids_sorted_no_drops() {
        let c = align(&emb(&["c", "a", "b"]), &ratings(&["b", "c", "a"])).unwrap();
        assert_eq!(c.ids(), ["a", "b", "c"]);
        assert_eq!(c.ratings.image_ids(), ["a", "b", "c"]);
        assert!(c.dropped_embedding_ids.is_empty() && c.dropped_rating_ids.is_empty());
        // "a" was embedding row 1 (value 2.0) and rating row 2 (value 20.0).
        assert_eq!(c.embeddings.row(0), [2.0]);
        assert_eq!(c.ratings.value(0, 0), 20.0);
    }

    #[test]
    fn partial_overlap_reports_drops() {
        let c = align(&emb(&["a", "b", "c"]), &ratings(&["b", "c", "d"])).unwrap();
        assert_eq!(c.ids(), ["b", "c"]);
        assert_eq!(c.dropped_embedding_ids, ["a"]);
        assert_eq!(c.dropped_rating_ids, ["d"]);
    }

    #[test]
    fn disjoint_is_alignment_error() {
        let r = align(&emb(&["a"]), &ratings(&["b"]));
        assert!(matches!(r, Err(Error::Alignment(_))));
    }

    #[test]
    fn idempotent() {
        let once = align(&emb(&["d", "a", "c"]), &ratings(&["c", "a", "x"])).unwrap();
        let twice = align(&once.embeddings, &once.ratings).unwrap();
        assert_eq!(twice.embeddings, once.embeddings);
        assert_eq!(twice.ratings, once.ratings);
        assert!(twice.dropped_embedding_ids.is_empty());
    }
}
