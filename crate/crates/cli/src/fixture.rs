//! Writes seeded synthetic inputs together with ready-to-run configs.

use std::path::{Path, PathBuf};

use impression_core::corpus::{write_embeddings, EmbeddingMatrix};
use impression_core::fixtures::{
    planted_regression, probe_fixture, CorpusSpec, SyntheticCorpus,
};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::csv_string;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FixtureKind {
    /// Image and prompt embeddings, ratings and IRR for `audit`.
    Corpus,
    /// Training features, ratings, generated pole images and groups for `probe`.
    Probe,
    /// A long similarity table with planted effects for `regress`.
    Regression,
}

fn write(dir: &Path, name: &str, text: impl AsRef<[u8]>) -> CliResult<PathBuf> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
    Ok(p)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .expect("fixture paths end in a file name")
        .to_string_lossy()
        .into_owned()
}

/// Writes the synthetic audit corpus and `audit_config.json` into `dir`.
/// Returns the config path.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> CliResult<PathBuf> {
    let corpus = SyntheticCorpus::generate(spec)?;
    let paths = corpus.write(dir)?;
    let images: Vec<_> = paths
        .models
        .iter()
        .map(|(id, img, _)| json!({"model_id": id, "path": file_name(img)}))
        .collect();
    let texts: Vec<_> = paths
        .models
        .iter()
        .map(|(id, _, txt)| json!({"model_id": id, "path": file_name(txt)}))
        .collect();
    let config = json!({
        "attribute_config_path": file_name(&paths.attributes),
        "ratings_path": file_name(&paths.ratings),
        "irr_path": file_name(&paths.irr),
        "image_embeddings": images,
        "text_embeddings": texts,
        "output_dir": "report",
    });
    write(dir, "audit_config.json", serde_json::to_string_pretty(&config)? + "\n")
}

fn rename_rows(m: &EmbeddingMatrix, prefix: &str) -> CliResult<EmbeddingMatrix> {
    let ids = (0..m.len()).map(|i| format!("{prefix}{i:03}")).collect();
    Ok(EmbeddingMatrix::new(ids, m.dim(), m.data().to_vec(), m.meta().cloned())?)
}

/// Writes the probe fixture and `probe_config.json` into `dir`. The two
/// comparison groups are the same images under different ids, so every
/// differential-bias row has d = 0.
pub fn write_probe(dir: &Path, seed: u64) -> CliResult<PathBuf> {
    let fx = probe_fixture(seed, 400, 16)?;
    write_embeddings(&fx.features, dir.join("features.emb"))?;
    let mut ratings = String::from("image_id,attribute,mean_rating\n");
    let col = fx.ratings.column(&fx.attribute).expect("fixture attribute");
    for (id, v) in fx.ratings.image_ids().iter().zip(&col) {
        ratings.push_str(&format!("{id},{},{v}\n", fx.attribute));
    }
    write(dir, "ratings.csv", ratings)?;
    let pos = format!("{}_pos.emb", fx.attribute);
    let neg = format!("{}_neg.emb", fx.attribute);
    write_embeddings(&fx.top_quartile, dir.join(&pos))?;
    write_embeddings(&fx.bottom_quartile, dir.join(&neg))?;
    write_embeddings(&rename_rows(&fx.top_quartile, "a_")?, dir.join("group_a.emb"))?;
    write_embeddings(&rename_rows(&fx.top_quartile, "b_")?, dir.join("group_b.emb"))?;
    let config = json!({
        "features": "features.emb",
        "ratings_path": "ratings.csv",
        "generated": [{"attribute": fx.attribute, "pos": pos, "neg": neg}],
        "groups": {
            "a": {"name": "group_a", "path": "group_a.emb"},
            "b": {"name": "group_b", "path": "group_b.emb"},
        },
        "select_lambda": true,
        "output_dir": "probe_report",
        "options": {"d_mode": "paired"},
    });
    write(dir, "probe_config.json", serde_json::to_string_pretty(&config)? + "\n")
}

/// Writes `similarities.csv`, `irr.csv` and `model_meta.csv` with
/// similarity = IRR + 0.1·(dataset size / max) + N(0, 0.02²).
pub fn write_regression(dir: &Path, seed: u64) -> CliResult<Vec<PathBuf>> {
    let fx = planted_regression(seed, 34, 1.0, 0.1, 0.02)?;
    let sims = csv_string(
        &["model_id", "attribute", "rho", "p_value", "n"],
        fx.records.iter().map(|r| {
            vec![
                r.model_id.clone(),
                r.attribute.clone(),
                r.rho.to_string(),
                r.p_value.to_string(),
                r.n.to_string(),
            ]
        }),
    )?;
    let irr = csv_string(
        &["attribute", "irr"],
        fx.irr.iter().map(|(a, v)| vec![a.to_owned(), v.to_string()]),
    )?;
    let meta = csv_string(
        &[
            "model_id",
            "family",
            "dataset_size",
            "total_training_samples",
            "image_params",
            "text_params",
        ],
        fx.meta.iter().map(|m| {
            vec![
                m.model_id.clone(),
                m.family.to_string(),
                m.dataset_size.to_string(),
                m.total_training_samples.to_string(),
                m.image_params.to_string(),
                m.text_params.to_string(),
            ]
        }),
    )?;
    Ok(vec![
        write(dir, "similarities.csv", sims)?,
        write(dir, "irr.csv", irr)?,
        write(dir, "model_meta.csv", meta)?,
    ])
}

pub fn cmd_fixture(kind: FixtureKind, seed: u64, models: usize, dir: &Path) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    match kind {
        FixtureKind::Corpus => {
            if models == 0 {
                return Err(CliError::Input("--models must be at least 1".into()));
            }
            let spec = CorpusSpec {
                seed,
                models: (0..models)
                    .map(|i| {
                        let id = if models == 1 {
                            "synthetic-clip".to_owned()
                        } else {
                            format!("synthetic-clip-{i}")
                        };
                        (id, 1.0 / (1.0 + i as f64))
                    })
                    .collect(),
                ..CorpusSpec::default()
            };
            Ok(vec![write_corpus(dir, &spec)?])
        }
        FixtureKind::Probe => Ok(vec![write_probe(dir, seed)?]),
        FixtureKind::Regression => write_regression(dir, seed),
    }
}
