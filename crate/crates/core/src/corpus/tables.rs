//! CSV and JSON tables: ratings, inter-rater reliability, prompts, models.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric range of the human rating scale.
///
/// The midpoint separates the two poles of an attribute; the subspace probe
/// centers its targets on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    pub midpoint: f64,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale {
            min: 0.0,
            max: 100.0,
            midpoint: 50.0,
        }
    }
}

impl RatingScale {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min.is_finite()
            && self.max.is_finite()
            && self.midpoint.is_finite()
            && self.min < self.midpoint
            && self.midpoint < self.max;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "rating scale requires min < midpoint < max, got {{min: {}, max: {}, midpoint: {}}}",
                self.min, self.max, self.midpoint
            )))
        }
    }

    pub fn is_default(&self) -> bool {
        *self == RatingScale::default()
    }
}

/// Dense image × attribute table of mean human ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    image_ids: Vec<String>,
    attributes: Vec<String>,
    /// Row-major, one row per image.
    values: Vec<f64>,
    scale: RatingScale,
}

impl RatingsTable {
    pub fn new(
        image_ids: Vec<String>,
        attributes: Vec<String>,
        values: Vec<f64>,
        scale: RatingScale,
    ) -> Result<Self> {
        scale.validate()?;
        if image_ids.is_empty() || attributes.is_empty() {
            return Err(Error::Validation("ratings table is empty".into()));
        }
        if values.len() != image_ids.len() * attributes.len() {
            return Err(Error::Validation(format!(
                "{} values for {} images × {} attributes",
                values.len(),
                image_ids.len(),
                attributes.len()
            )));
        }
        ensure_unique(&image_ids, "image id")?;
        ensure_unique(&attributes, "attribute")?;
        let k = attributes.len();
        for (pos, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < scale.min || v > scale.max {
                return Err(Error::Validation(format!(
                    "rating {v} for ({}, {}) is outside [{}, {}]",
                    image_ids[pos / k],
                    attributes[pos % k],
                    scale.min,
                    scale.max
                )));
            }
        }
        Ok(RatingsTable {
            image_ids,
            attributes,
            values,
            scale,
        })
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn value(&self, image: usize, attribute: usize) -> f64 {
        self.values[image * self.attributes.len() + attribute]
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    /// All ratings for one attribute, in image order.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.attribute_index(name)?;
        Some((0..self.len()).map(|i| self.value(i, j)).collect())
    }

    /// New table holding the given image rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let k = self.attributes.len();
        let ids = indices.iter().map(|&i| self.image_ids[i].clone()).collect();
        let mut values = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            values.extend_from_slice(&self.values[i * k..(i + 1) * k]);
        }
        Self::new(ids, self.attributes.clone(), values, self.scale)
    }
}

fn ensure_unique(items: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(items.len());
    for s in items {
        if !seen.insert(s.as_str()) {
            return Err(Error::Validation(format!("duplicate {what} `{s}`")));
        }
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("CSV header: {e}")))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Format(format!(
            "CSV header is `{}`, expected `{}`",
            got.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

fn parse_real(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: {what} `{field}` is not a number")))
}

fn parse_count(field: &str, what: &str, line: u64) -> Result<u64> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    // Accept integral values written in exponent form, e.g. 2e9.
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 => {
            Ok(v as u64)
        }
        _ => Err(Error::Format(format!(
            "line {line}: {what} `{field}` is not a non-negative count"
        ))),
    }
}

/// Reads a long-format ratings CSV (`image_id,attribute,mean_rating`) into a
/// dense table. Images and attributes keep their order of first appearance.
pub fn read_ratings(path: impl AsRef<Path>, scale: RatingScale) -> Result<RatingsTable> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    parse_ratings(&mut rdr, scale)
}

pub fn parse_ratings<R: Read>(rdr: &mut csv::Reader<R>, scale: RatingScale) -> Result<RatingsTable> {
    scale.validate()?;
    check_header(rdr, &["image_id", "attribute", "mean_rating"])?;
    let mut image_ids: Vec<String> = Vec::new();
    let mut image_pos: HashMap<String, usize> = HashMap::new();
    let mut attributes: Vec<String> = Vec::new();
    let mut attr_pos: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(format!("ratings CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(Error::Format(format!("line {line}: expected 3 fields")));
        }
        let (id, attr) = (&rec[0], &rec[1]);
        let value = parse_real(&rec[2], "mean_rating", line)?;
        let i = *image_pos.entry(id.to_owned()).or_insert_with(|| {
            image_ids.push(id.to_owned());
            image_ids.len() - 1
        });
        let j = *attr_pos.entry(attr.to_owned()).or_insert_with(|| {
            attributes.push(attr.to_owned());
            attributes.len() - 1
        });
        if cells.insert((i, j), value).is_some() {
            return Err(Error::Validation(format!(
                "line {line}: duplicate rating for ({id}, {attr})"
            )));
        }
    }
    if cells.is_empty() {
        return Err(Error::Validation("ratings CSV has no rows".into()));
    }
    let k = attributes.len();
    let mut missing = Vec::new();
    let mut values = Vec::with_capacity(image_ids.len() * k);
    for (i, id) in image_ids.iter().enumerate() {
        for (j, attr) in attributes.iter().enumerate() {
            match cells.get(&(i, j)) {
                Some(&v) => values.push(v),
                None => {
                    missing.push(format!("({id}, {attr})"));
                    values.push(f64::NAN);
                }
            }
        }
    }
    if !missing.is_empty() {
        let shown: Vec<_> = missing.iter().take(20).cloned().collect();
        let more = if missing.len() > shown.len() {
            format!(" and {} more", missing.len() - shown.len())
        } else {
            String::new()
        };
        return Err(Error::Validation(format!(
            "{} missing rating cell(s): {}{more}",
            missing.len(),
            shown.join(", ")
        )));
    }
    RatingsTable::new(image_ids, attributes, values, scale)
}

/// Per-attribute inter-rater reliability.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IrrTable(BTreeMap<String, f64>);

impl IrrTable {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, v) in entries {
            if !v.is_finite() {
                return Err(Error::Validation(format!("IRR for `{name}` is not finite")));
            }
            if map.insert(name.clone(), v).is_some() {
                return Err(Error::Validation(format!("duplicate IRR attribute `{name}`")));
            }
        }
        Ok(IrrTable(map))
    }

    pub fn get(&self, attribute: &str) -> Option<f64> {
        self.0.get(attribute).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fails unless every listed attribute has an IRR value.
    pub fn require(&self, attributes: &[String]) -> Result<()> {
        let missing: Vec<_> = attributes
            .iter()
            .filter(|a| !self.0.contains_key(a.as_str()))
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "IRR missing for attribute(s): {}",
                missing.join(", ")
            )))
        }
    }
}

pub fn read_irr(path: impl AsRef<Path>) -> Result<IrrTable> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, &["attribute", "irr"])?;
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(format!("IRR CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Format(format!("line {line}: expected 2 fields")));
        }
        entries.push((rec[0].to_owned(), parse_real(&rec[1], "irr", line)?));
    }
    IrrTable::new(entries)
}

/// An attribute and the two prompts defining its poles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub positive_prompt: String,
    pub negative_prompt: String,
}

impl AttributeSpec {
    pub fn positive_key(&self) -> String {
        format!("{}/pos", self.name)
    }

    pub fn negative_key(&self) -> String {
        format!("{}/neg", self.name)
    }
}

const DEFAULT_ATTRIBUTES: &str = include_str!("../../data/attributes.json");

/// The 34 shipped attributes with their positive and negative pole prompts.
pub fn default_attributes() -> Vec<AttributeSpec> {
    parse_attribute_config(DEFAULT_ATTRIBUTES).expect("shipped attribute config is valid")
}

pub fn parse_attribute_config(json: &str) -> Result<Vec<AttributeSpec>> {
    let specs: Vec<AttributeSpec> =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("attribute config: {e}")))?;
    if specs.is_empty() {
        return Err(Error::Validation("attribute config is empty".into()));
    }
    let mut seen = HashSet::new();
    for s in &specs {
        if s.name.trim().is_empty() {
            return Err(Error::Validation("attribute with empty name".into()));
        }
        if s.positive_prompt.trim().is_empty() || s.negative_prompt.trim().is_empty() {
            return Err(Error::Validation(format!(
                "attribute `{}` has an empty prompt",
                s.name
            )));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(Error::Validation(format!("duplicate attribute `{}`", s.name)));
        }
    }
    Ok(specs)
}

pub fn read_attribute_config(path: impl AsRef<Path>) -> Result<Vec<AttributeSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_attribute_config(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Openai,
    Faceclip,
    Scaling,
    Other,
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "openai" => Ok(ModelFamily::Openai),
            "faceclip" => Ok(ModelFamily::Faceclip),
            "scaling" => Ok(ModelFamily::Scaling),
            "other" => Ok(ModelFamily::Other),
            _ => Err(Error::Format(format!("unknown model family `{s}`"))),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Openai => "openai",
            ModelFamily::Faceclip => "faceclip",
            ModelFamily::Scaling => "scaling",
            ModelFamily::Other => "other",
        })
    }
}

/// Pretraining and size metadata for one model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_id: String,
    pub family: ModelFamily,
    pub dataset_size: u64,
    pub total_training_samples: u64,
    pub image_params: u64,
    pub text_params: u64,
}

pub fn read_model_meta(path: impl AsRef<Path>) -> Result<Vec<ModelMeta>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(
        &mut rdr,
        &[
            "model_id",
            "family",
            "dataset_size",
            "total_training_samples",
            "image_params",
            "text_params",
        ],
    )?;
    let mut out: Vec<ModelMeta> = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(format!("model metadata CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 6 {
            return Err(Error::Format(format!("line {line}: expected 6 fields")));
        }
        let meta = ModelMeta {
            model_id: rec[0].to_owned(),
            family: rec[1].parse()?,
            dataset_size: parse_count(&rec[2], "dataset_size", line)?,
            total_training_samples: parse_count(&rec[3], "total_training_samples", line)?,
            image_params: parse_count(&rec[4], "image_params", line)?,
            text_params: parse_count(&rec[5], "text_params", line)?,
        };
        if !seen.insert(meta.model_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate model_id `{}`",
                meta.model_id
            )));
        }
        out.push(meta);
    }
    Ok(out)
}
