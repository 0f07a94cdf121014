//! Seeded synthetic inputs for tests, demos and the acceptance suite.
//!
//! Every generator takes an explicit seed and uses ChaCha8, so fixtures are
//! identical across platforms and runs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::association::SimilarityRecord;
use crate::corpus::{
    default_attributes, write_embeddings, AttributeSpec, EmbeddingMatrix, EmbeddingMeta, IrrTable,
    Modality, ModelFamily, ModelMeta, RatingScale, RatingsTable,
};
use crate::error::{Error, Result};

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// One model's image and prompt embeddings.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    pub model_id: String,
    pub images: EmbeddingMatrix,
    pub text: EmbeddingMatrix,
}

/// Image embeddings for several models sharing one set of human ratings.
///
/// Each image carries a latent score per attribute. Human ratings are a
/// noisy affine function of the latents; each model's image vector moves
/// along (positive pole − negative pole) in proportion to the latent, scaled
/// by that model's signal strength.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub attributes: Vec<AttributeSpec>,
    pub models: Vec<SyntheticModel>,
    pub ratings: RatingsTable,
    pub irr: IrrTable,
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_images: usize,
    pub n_attributes: usize,
    pub dim: usize,
    /// (model id, signal strength) per model.
    pub models: Vec<(String, f64)>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_images: 8,
            n_attributes: 3,
            dim: 16,
            models: vec![("synthetic-clip".into(), 1.0)],
            seed: 7,
        }
    }
}

/// Paths written by [`SyntheticCorpus::write`].
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub attributes: PathBuf,
    pub ratings: PathBuf,
    pub irr: PathBuf,
    /// (model id, image path, text path)
    pub models: Vec<(String, PathBuf, PathBuf)>,
}

impl SyntheticCorpus {
    pub fn generate(spec: &CorpusSpec) -> Result<Self> {
        let defaults = default_attributes();
        if spec.n_attributes == 0 || spec.n_attributes > defaults.len() {
            return Err(Error::Validation(format!(
                "fixture attribute count must be in 1..={}",
                defaults.len()
            )));
        }
        if spec.n_images < 3 || spec.dim == 0 || spec.models.is_empty() {
            return Err(Error::Validation(
                "fixture needs ≥ 3 images, dim ≥ 1 and at least one model".into(),
            ));
        }
        let attributes: Vec<AttributeSpec> = defaults[..spec.n_attributes].to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let k = attributes.len();
        let n = spec.n_images;

        // Ids are generated in reverse so loading exercises reordering.
        let ids: Vec<String> = (0..n).rev().map(|i| format!("img{i:05}")).collect();
        let latents: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, k)).collect();

        let scale = RatingScale::default();
        let rating_noise = Normal::new(0.0, 4.0).expect("valid sd");
        let mut values = Vec::with_capacity(n * k);
        for z in &latents {
            for &zj in z {
                let r: f64 = scale.midpoint + 12.0 * zj + rating_noise.sample(&mut rng);
                values.push(r.clamp(scale.min, scale.max));
            }
        }
        let ratings = RatingsTable::new(
            ids.clone(),
            attributes.iter().map(|a| a.name.clone()).collect(),
            values,
            scale,
        )?;
        let irr = IrrTable::new(
            attributes
                .iter()
                .map(|a| (a.name.clone(), rng.random_range(0.2..0.9))),
        )?;

        let mut models = Vec::with_capacity(spec.models.len());
        for (model_id, signal) in &spec.models {
            let poles: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
                .map(|_| {
                    (
                        unit(gaussian_vec(&mut rng, spec.dim)),
                        unit(gaussian_vec(&mut rng, spec.dim)),
                    )
                })
                .collect();
            let shared = gaussian_vec(&mut rng, spec.dim);
            let mut rows = Vec::with_capacity(n);
            for z in &latents {
                let mut v: Vec<f64> = shared
                    .iter()
                    .map(|s| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        s + 0.5 * e
                    })
                    .collect();
                for (a, (p, q)) in poles.iter().enumerate() {
                    for d in 0..spec.dim {
                        v[d] += signal * z[a] * (p[d] - q[d]);
                    }
                }
                rows.push(to_f32(&v));
            }
            let images = EmbeddingMatrix::from_rows(
                ids.clone(),
                &rows,
                Some(EmbeddingMeta::new(model_id.clone(), Modality::Image, "synthetic")),
            )?;
            let mut text_ids = Vec::with_capacity(2 * k);
            let mut text_rows = Vec::with_capacity(2 * k);
            for (a, (p, q)) in attributes.iter().zip(&poles) {
                text_ids.push(a.positive_key());
                text_rows.push(to_f32(p));
                text_ids.push(a.negative_key());
                text_rows.push(to_f32(q));
            }
            let text = EmbeddingMatrix::from_rows(
                text_ids,
                &text_rows,
                Some(EmbeddingMeta::new(model_id.clone(), Modality::Text, "synthetic")),
            )?;
            models.push(SyntheticModel {
                model_id: model_id.clone(),
                images,
                text,
            });
        }

        Ok(SyntheticCorpus {
            attributes,
            models,
            ratings,
            irr,
        })
    }

    /// Writes every input file into `dir`.
    pub fn write(&self, dir: &Path) -> Result<CorpusPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| -> Result<PathBuf> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        };
        let attributes = write(
            "attributes.json",
            serde_json::to_string_pretty(&self.attributes).expect("serializable"),
        )?;
        let mut ratings_csv = String::from("image_id,attribute,mean_rating\n");
        for (i, id) in self.ratings.image_ids().iter().enumerate() {
            for (j, a) in self.ratings.attributes().iter().enumerate() {
                ratings_csv.push_str(&format!("{id},{a},{}\n", self.ratings.value(i, j)));
            }
        }
        let ratings = write("ratings.csv", ratings_csv)?;
        let mut irr_csv = String::from("attribute,irr\n");
        for (a, v) in self.irr.iter() {
            irr_csv.push_str(&format!("{a},{v}\n"));
        }
        let irr = write("irr.csv", irr_csv)?;
        let mut models = Vec::new();
        for m in &self.models {
            let img = dir.join(format!("{}.images.emb", m.model_id));
            let txt = dir.join(format!("{}.text.emb", m.model_id));
            write_embeddings(&m.images, &img)?;
            write_embeddings(&m.text, &txt)?;
            models.push((m.model_id.clone(), img, txt));
        }
        Ok(CorpusPaths {
            attributes,
            ratings,
            irr,
            models,
        })
    }
}

const ARCHITECTURES: [(&str, u64, u64); 3] = [
    ("ViT-B-32", 87_849_216, 63_428_096),
    ("ViT-B-16", 86_192_640, 63_428_096),
    ("ViT-L-14", 303_966_208, 123_650_304),
];
const DATASET_SIZES: [(&str, u64); 3] = [
    ("80m", 80_000_000),
    ("400m", 400_000_000),
    ("2b", 2_000_000_000),
];
const TOTAL_SAMPLES: [(&str, u64); 3] = [
    ("3b", 3_000_000_000),
    ("13b", 13_000_000_000),
    ("34b", 34_000_000_000),
];

/// Metadata for a 3 architectures × 3 dataset sizes × 3 sample counts grid.
pub fn scaling_grid_meta() -> Vec<ModelMeta> {
    let mut out = Vec::with_capacity(27);
    for (arch, image_params, text_params) in ARCHITECTURES {
        for (ds, dataset_size) in DATASET_SIZES {
            for (ts, total_training_samples) in TOTAL_SAMPLES {
                out.push(ModelMeta {
                    model_id: format!("{arch}-{ds}-{ts}"),
                    family: ModelFamily::Scaling,
                    dataset_size,
                    total_training_samples,
                    image_params,
                    text_params,
                });
            }
        }
    }
    out
}

/// Long similarity table with a planted linear signal.
#[derive(Debug, Clone)]
pub struct PlantedRegression {
    pub records: Vec<SimilarityRecord>,
    pub irr: IrrTable,
    pub meta: Vec<ModelMeta>,
}

/// similarity = irr_weight·IRR + ds_weight·(dataset size / max) + N(0, noise_sd)
/// for every (grid model, attribute) pair, with IRR drawn uniformly in
/// (0.2, 0.9) per attribute.
pub fn planted_regression(
    seed: u64,
    n_attributes: usize,
    irr_weight: f64,
    ds_weight: f64,
    noise_sd: f64,
) -> Result<PlantedRegression> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::Validation(format!("noise sd: {e}")))?;
    let meta = scaling_grid_meta();
    let max_ds = meta.iter().map(|m| m.dataset_size).max().unwrap_or(1) as f64;
    let attrs: Vec<String> = (0..n_attributes).map(|i| format!("attr{i:02}")).collect();
    let irr = IrrTable::new(attrs.iter().map(|a| (a.clone(), rng.random_range(0.2..0.9))))?;
    let mut records = Vec::with_capacity(meta.len() * attrs.len());
    for m in &meta {
        for a in &attrs {
            let rho = irr_weight * irr.get(a).unwrap()
                + ds_weight * m.dataset_size as f64 / max_ds
                + noise.sample(&mut rng);
            records.push(SimilarityRecord {
                model_id: m.model_id.clone(),
                attribute: a.clone(),
                rho,
                p_value: 0.0,
                n: 1004,
            });
        }
    }
    Ok(PlantedRegression { records, irr, meta })
}

/// Features and ratings for probing: one attribute whose rating is a
/// noisy linear function of the features.
#[derive(Debug, Clone)]
pub struct ProbeFixture {
    pub features: EmbeddingMatrix,
    pub ratings: RatingsTable,
    pub attribute: String,
    /// Training images in the top rating quartile.
    pub top_quartile: EmbeddingMatrix,
    /// Training images in the bottom rating quartile.
    pub bottom_quartile: EmbeddingMatrix,
}

pub fn probe_fixture(seed: u64, n: usize, dim: usize) -> Result<ProbeFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = unit(gaussian_vec(&mut rng, dim));
    let offset = gaussian_vec(&mut rng, dim);
    let noise = Normal::new(0.0, 2.0).expect("valid sd");
    let ids: Vec<String> = (0..n).map(|i| format!("omi{i:05}")).collect();
    let mut rows = Vec::with_capacity(n);
    let mut ratings = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = gaussian_vec(&mut rng, dim)
            .into_iter()
            .zip(&offset)
            .map(|(g, o)| g + o)
            .collect();
        let proj: f64 = x.iter().zip(&offset).zip(&direction).map(|((v, o), d)| (v - o) * d).sum();
        ratings.push((50.0 + 12.0 * proj + noise.sample(&mut rng)).clamp(0.0, 100.0));
        rows.push(to_f32(&x));
    }
    let attribute = "happy".to_owned();
    let features = EmbeddingMatrix::from_rows(
        ids.clone(),
        &rows,
        Some(EmbeddingMeta::new("synthetic-vit", Modality::Image, "probe fixture")),
    )?;
    let table = RatingsTable::new(ids, vec![attribute.clone()], ratings.clone(), RatingScale::default())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ratings[a].total_cmp(&ratings[b]));
    let q = n / 4;
    let bottom: Vec<usize> = order[..q].to_vec();
    let top: Vec<usize> = order[n - q..].to_vec();
    let rename = |m: EmbeddingMatrix, prefix: &str| -> Result<EmbeddingMatrix> {
        let ids = (0..m.len()).map(|i| format!("{prefix}{i:03}")).collect();
        EmbeddingMatrix::new(ids, m.dim(), m.data().to_vec(), m.meta().cloned())
    };
    Ok(ProbeFixture {
        top_quartile: rename(features.select(&top)?, "gen_pos_")?,
        bottom_quartile: rename(features.select(&bottom)?, "gen_neg_")?,
        features,
        ratings: table,
        attribute,
    })
}
