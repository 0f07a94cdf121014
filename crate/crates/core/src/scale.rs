//! Comparisons between models grouped by pretraining dataset size.
//!
//! Models from a scaling grid differ in dataset size while sharing the
//! other design factors, so two size groups are paired by
//! (image params, text params, total samples) when every model has a
//! partner; otherwise the comparison falls back to unpaired statistics.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::ModelMeta;
use crate::error::{Error, Result};
use crate::stats::{self, DMode, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub dataset_size: u64,
    pub models: Vec<String>,
    pub mean: f64,
    pub std: Option<f64>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub larger: u64,
    pub smaller: u64,
    pub paired: bool,
    pub d_mode: DMode,
    pub d: Option<f64>,
    pub test: Option<TestResult>,
    pub p_bonferroni: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleComparison {
    pub groups: Vec<GroupSummary>,
    pub anova: Option<TestResult>,
    pub anova_note: Option<String>,
    pub comparisons: Vec<PairComparison>,
}

type PairKey = (u64, u64, u64);

fn pair_key(m: &ModelMeta) -> PairKey {
    (m.image_params, m.text_params, m.total_training_samples)
}

/// Values of the two groups in matched order, if every model has exactly
/// one partner with the same non-size design factors.
fn match_pairs(
    a: &[(&ModelMeta, f64)],
    b: &[(&ModelMeta, f64)],
) -> Option<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return None;
    }
    let mut by_key: HashMap<PairKey, f64> = HashMap::new();
    for (m, v) in b {
        if by_key.insert(pair_key(m), *v).is_some() {
            return None;
        }
    }
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (m, v) in a {
        xs.push(*v);
        ys.push(by_key.remove(&pair_key(m))?);
    }
    Some((xs, ys))
}

/// Groups `values` (keyed by model id) by dataset size, largest first, and
/// runs the omnibus ANOVA plus every pairwise post-hoc comparison with a
/// Bonferroni multiplier equal to the number of pairs.
pub fn compare_by_dataset_size(
    values: &BTreeMap<String, f64>,
    meta: &[ModelMeta],
    d_mode: DMode,
) -> Result<ScaleComparison> {
    let meta_by_id: HashMap<&str, &ModelMeta> =
        meta.iter().map(|m| (m.model_id.as_str(), m)).collect();
    let mut grouped: BTreeMap<u64, Vec<(&ModelMeta, f64)>> = BTreeMap::new();
    for (id, &v) in values {
        let m = meta_by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Validation(format!("no metadata for model `{id}`")))?;
        grouped.entry(m.dataset_size).or_default().push((m, v));
    }
    if grouped.len() < 2 {
        return Err(Error::InsufficientData(
            "scale comparison needs at least two dataset sizes".into(),
        ));
    }
    let sizes: Vec<u64> = grouped.keys().rev().copied().collect();

    let groups = sizes
        .iter()
        .map(|s| {
            let g = &grouped[s];
            let vals: Vec<f64> = g.iter().map(|(_, v)| *v).collect();
            GroupSummary {
                dataset_size: *s,
                models: g.iter().map(|(m, _)| m.model_id.clone()).collect(),
                mean: stats::mean(&vals),
                std: (vals.len() > 1).then(|| stats::std_dev(&vals)),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();

    let group_values: Vec<Vec<f64>> = sizes
        .iter()
        .map(|s| grouped[s].iter().map(|(_, v)| *v).collect())
        .collect();
    let (anova, anova_note) = match stats::one_way_anova(&group_values) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let n_pairs = sizes.len() * (sizes.len() - 1) / 2;
    let mut comparisons = Vec::with_capacity(n_pairs);
    for i in 0..sizes.len() {
        for j in i + 1..sizes.len() {
            let a = &grouped[&sizes[i]];
            let b = &grouped[&sizes[j]];
            let matched = match_pairs(a, b);
            let paired = matched.is_some();
            let (xs, ys) = matched.unwrap_or_else(|| {
                (
                    a.iter().map(|(_, v)| *v).collect(),
                    b.iter().map(|(_, v)| *v).collect(),
                )
            });
            let mode = if paired { d_mode } else { DMode::Pooled };
            let mut notes = Vec::new();
            if !paired && d_mode == DMode::Paired {
                notes.push("groups not pairable; pooled d used".to_owned());
            }
            let d = stats::cohens_d(&xs, &ys, mode)
                .map_err(|e| notes.push(format!("d: {e}")))
                .ok();
            let test = if paired {
                stats::paired_t(&xs, &ys)
            } else {
                stats::unpaired_t(&xs, &ys)
            }
            .map_err(|e| notes.push(format!("test: {e}")))
            .ok();
            comparisons.push(PairComparison {
                larger: sizes[i],
                smaller: sizes[j],
                paired,
                d_mode: mode,
                d,
                p_bonferroni: test.map(|t| stats::bonferroni(t.p_value, n_pairs)),
                test,
                note: (!notes.is_empty()).then(|| notes.join("; ")),
            });
        }
    }

    Ok(ScaleComparison {
        groups,
        anova,
        anova_note,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ModelFamily;

    fn meta(id: &str, size: u64, arch: u64) -> ModelMeta {
        ModelMeta {
            model_id: id.into(),
            family: ModelFamily::Scaling,
            dataset_size: size,
            total_training_samples: 3_000_000_000,
            image_params: arch,
            text_params: 63_000_000,
        }
    }

    #[test]
    fn paired_groups_largest_first() {
        let metas = vec![
            meta("b32-80m", 80, 1),
            meta("b16-80m", 80, 2),
            meta("l14-80m", 80, 3),
            meta("b32-2b", 2000, 1),
            meta("b16-2b", 2000, 2),
            meta("l14-2b", 2000, 3),
        ];
        let values: BTreeMap<String, f64> = [
            ("b32-80m", 0.50),
            ("b16-80m", 0.55),
            ("l14-80m", 0.61),
            ("b32-2b", 0.60),
            ("b16-2b", 0.64),
            ("l14-2b", 0.72),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let c = compare_by_dataset_size(&values, &metas, DMode::Paired).unwrap();
        assert_eq!(c.groups[0].dataset_size, 2000);
        assert_eq!(c.comparisons.len(), 1);
        let cmp = &c.comparisons[0];
        assert!(cmp.paired);
        // Differences 0.10, 0.09, 0.11 line up by architecture.
        let diffs = [0.60 - 0.50, 0.64 - 0.55, 0.72 - 0.61];
        let want = stats::paired_t(&diffs, &[0.0; 3]).unwrap();
        assert!((cmp.test.unwrap().statistic - want.statistic).abs() < 1e-9);
        assert_eq!(cmp.p_bonferroni, Some(want.p_value.min(1.0)));
    }

    #[test]
    fn unpairable_groups_fall_back() {
        let metas = vec![
            meta("a", 80, 1),
            meta("b", 80, 2),
            meta("c", 400, 1),
            meta("d", 400, 1),
        ];
        let values: BTreeMap<String, f64> = [("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let c = compare_by_dataset_size(&values, &metas, DMode::Paired).unwrap();
        let cmp = &c.comparisons[0];
        assert!(!cmp.paired);
        assert_eq!(cmp.d_mode, DMode::Pooled);
        assert!(cmp.note.as_deref().unwrap().contains("pooled"));
    }

    #[test]
    fn single_size_is_insufficient() {
        let metas = vec![meta("a", 80, 1)];
        let values = BTreeMap::from([("a".to_string(), 0.3)]);
        assert!(matches!(
            compare_by_dataset_size(&values, &metas, DMode::Pooled),
            Err(Error::InsufficientData(_))
        ));
    }
}
