//! Audit and probe configuration files.
//!
//! Relative paths inside a config file resolve against the file's own
//! directory, so a config and its inputs can move together.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use impression_core::corpus::RatingScale;
use impression_core::stats::{CorrelationMethod, DMode};
use impression_core::structure::Linkage;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Analysis options echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub linkage: Linkage,
    pub d_mode: DMode,
    pub irr_method: CorrelationMethod,
    pub ridge_lambda: f64,
    pub scale: RatingScale,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            linkage: Linkage::default(),
            d_mode: DMode::default(),
            irr_method: CorrelationMethod::default(),
            ridge_lambda: 1.0,
            scale: RatingScale::default(),
        }
    }
}

/// Command-line overrides of [`AnalysisOptions`].
#[derive(Debug, Clone, Default)]
pub struct OptionOverrides {
    pub linkage: Option<Linkage>,
    pub d_mode: Option<DMode>,
    pub irr_method: Option<CorrelationMethod>,
    pub ridge_lambda: Option<f64>,
}

impl AnalysisOptions {
    pub fn apply(&mut self, o: &OptionOverrides) {
        if let Some(l) = o.linkage {
            self.linkage = l;
        }
        if let Some(d) = o.d_mode {
            self.d_mode = d;
        }
        if let Some(m) = o.irr_method {
            self.irr_method = m;
        }
        if let Some(l) = o.ridge_lambda {
            self.ridge_lambda = l;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.scale.validate()?;
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(CliError::Input(format!(
                "ridge_lambda must be finite and non-negative, got {}",
                self.ridge_lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPath {
    pub model_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Attribute prompt config; the built-in 34-attribute set when absent.
    #[serde(default)]
    pub attribute_config_path: Option<PathBuf>,
    pub ratings_path: PathBuf,
    pub irr_path: PathBuf,
    pub image_embeddings: Vec<ModelPath>,
    pub text_embeddings: Vec<ModelPath>,
    #[serde(default)]
    pub model_meta_path: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: AnalysisOptions,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{what} {}: {e}", path.display())))
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

pub(crate) fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} not found: {}", path.display())))
    }
}

/// Model ids name output directories, so they are restricted to a safe
/// file-name alphabet.
pub(crate) fn check_model_id(id: &str) -> CliResult<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id != "human"
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '@' | '+'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "model id `{id}` must be non-empty, use only [A-Za-z0-9._-@+], not start with `.`, and not be `human`"
        )))
    }
}

impl AuditConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut c: AuditConfig = read_json(path, "audit config")?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &mut self.attribute_config_path {
            resolve(base, p);
        }
        resolve(base, &mut self.ratings_path);
        resolve(base, &mut self.irr_path);
        for m in self.image_embeddings.iter_mut().chain(&mut self.text_embeddings) {
            resolve(base, &mut m.path);
        }
        if let Some(p) = &mut self.model_meta_path {
            resolve(base, p);
        }
        if let Some(p) = &mut self.output_dir {
            resolve(base, p);
        }
    }

    /// Checks that referenced files exist and that the image and text lists
    /// name the same models.
    pub fn validate(&self) -> CliResult<()> {
        if let Some(p) = &self.attribute_config_path {
            require_file(p, "attribute config")?;
        }
        require_file(&self.ratings_path, "ratings file")?;
        require_file(&self.irr_path, "IRR file")?;
        if let Some(p) = &self.model_meta_path {
            require_file(p, "model metadata file")?;
        }
        if self.image_embeddings.is_empty() {
            return Err(CliError::Input("config lists no image embeddings".into()));
        }
        let ids = |list: &[ModelPath], what: &str| -> CliResult<BTreeSet<String>> {
            let mut seen = BTreeSet::new();
            for m in list {
                check_model_id(&m.model_id)?;
                require_file(&m.path, &format!("{what} embeddings for `{}`", m.model_id))?;
                if !seen.insert(m.model_id.clone()) {
                    return Err(CliError::Input(format!(
                        "model `{}` is listed twice in {what}_embeddings",
                        m.model_id
                    )));
                }
            }
            Ok(seen)
        };
        let images = ids(&self.image_embeddings, "image")?;
        let texts = ids(&self.text_embeddings, "text")?;
        if images != texts {
            let only_img: Vec<_> = images.difference(&texts).collect();
            let only_txt: Vec<_> = texts.difference(&images).collect();
            return Err(CliError::Input(format!(
                "image and text embedding lists name different models (image only: {only_img:?}; text only: {only_txt:?})"
            )));
        }
        self.options.validate()
    }

    pub fn text_path(&self, model_id: &str) -> &Path {
        &self
            .text_embeddings
            .iter()
            .find(|m| m.model_id == model_id)
            .expect("validated config pairs every model")
            .path
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedPoles {
    pub attribute: String,
    #[serde(default)]
    pub pos: Option<PathBuf>,
    #[serde(default)]
    pub neg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Groups {
    pub a: Group,
    pub b: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Training-image features.
    pub features: PathBuf,
    pub ratings_path: PathBuf,
    /// Attributes to fit; every ratings column when absent.
    #[serde(default)]
    pub attributes: Option<Vec<String>>,
    #[serde(default)]
    pub generated: Vec<GeneratedPoles>,
    #[serde(default)]
    pub groups: Option<Groups>,
    /// Choose λ per attribute by generalized cross-validation.
    #[serde(default)]
    pub select_lambda: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: AnalysisOptions,
}

impl ProbeConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut c: ProbeConfig = read_json(path, "probe config")?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut c.features);
        resolve(base, &mut c.ratings_path);
        for g in &mut c.generated {
            for p in [&mut g.pos, &mut g.neg].into_iter().flatten() {
                resolve(base, p);
            }
        }
        if let Some(g) = &mut c.groups {
            resolve(base, &mut g.a.path);
            resolve(base, &mut g.b.path);
        }
        if let Some(p) = &mut c.output_dir {
            resolve(base, p);
        }
        Ok(c)
    }

    pub fn validate(&self) -> CliResult<()> {
        require_file(&self.features, "feature embeddings")?;
        require_file(&self.ratings_path, "ratings file")?;
        let mut seen = BTreeSet::new();
        for g in &self.generated {
            if !seen.insert(&g.attribute) {
                return Err(CliError::Input(format!(
                    "generated images for `{}` are listed twice",
                    g.attribute
                )));
            }
            match (&g.pos, &g.neg) {
                (Some(p), Some(n)) => {
                    require_file(p, &format!("positive-pole images for `{}`", g.attribute))?;
                    require_file(n, &format!("negative-pole images for `{}`", g.attribute))?;
                }
                (Some(_), None) | (None, Some(_)) => {
                    let have = if g.pos.is_some() { "positive" } else { "negative" };
                    return Err(CliError::Input(format!(
                        "generated images for `{}` supply only the {have} pole; both poles are needed to score classification",
                        g.attribute
                    )));
                }
                (None, None) => {
                    return Err(CliError::Input(format!(
                        "generated images for `{}` name no files",
                        g.attribute
                    )))
                }
            }
        }
        if let Some(g) = &self.groups {
            require_file(&g.a.path, &format!("group `{}` images", g.a.name))?;
            require_file(&g.b.path, &format!("group `{}` images", g.b.name))?;
        }
        self.options.validate()
    }
}
