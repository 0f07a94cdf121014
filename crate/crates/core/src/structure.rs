//! Cross-attribute structure: correlation matrices, agglomerative clustering
//! on 1 − ρ, Newick export and normalized Frobenius similarity.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::AssociationVector;
use crate::error::{Error, Result};
use crate::stats;

/// Symmetric attribute × attribute correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    labels: Vec<String>,
    /// Row-major k × k.
    values: Vec<f64>,
}

impl CorrelationMatrix {
    /// Builds a matrix after checking shape, symmetry, unit diagonal and range.
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let k = labels.len();
        if k == 0 {
            return Err(Error::Validation("correlation matrix has no labels".into()));
        }
        if values.len() != k * k {
            return Err(Error::Validation(format!(
                "{} values for a {k}×{k} matrix",
                values.len()
            )));
        }
        let m = CorrelationMatrix { labels, values };
        for i in 0..k {
            if (m.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "diagonal entry for `{}` is {}, expected 1",
                    m.labels[i],
                    m.get(i, i)
                )));
            }
            for j in 0..k {
                let v = m.get(i, j);
                if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                    return Err(Error::Validation(format!("entry ({i}, {j}) = {v} outside [-1, 1]")));
                }
                if (v - m.get(j, i)).abs() > 1e-12 {
                    return Err(Error::Validation(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(m)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.labels.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest eigenvalue; a valid correlation matrix has none below zero
    /// beyond rounding.
    pub fn min_eigenvalue(&self) -> f64 {
        let k = self.k();
        let m = DMatrix::from_row_slice(k, k, &self.values);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copy with rows and columns permuted into `order`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let labels = order.iter().map(|&i| self.labels[i].clone()).collect();
        let values = order
            .iter()
            .flat_map(|&i| order.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self::new(labels, values)
    }

    /// Square CSV with a labeled header row and a label in each row's first cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute");
        for l in &self.labels {
            out.push(',');
            out.push_str(&csv_field(l));
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&csv_field(l));
            for j in 0..self.k() {
                let _ = write!(out, ",{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Format("correlation matrix CSV is empty".into()))?
            .map_err(|e| Error::Format(format!("matrix CSV: {e}")))?;
        let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut values = Vec::with_capacity(labels.len() * labels.len());
        let mut row_labels = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| Error::Format(format!("matrix CSV: {e}")))?;
            if rec.len() != labels.len() + 1 {
                return Err(Error::Format(format!(
                    "matrix row `{}` has {} values, expected {}",
                    &rec[0],
                    rec.len().saturating_sub(1),
                    labels.len()
                )));
            }
            row_labels.push(rec[0].to_owned());
            for f in rec.iter().skip(1) {
                values.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::Format(format!("matrix entry `{f}` is not a number")))?,
                );
            }
        }
        if row_labels != labels {
            return Err(Error::Format(
                "matrix row labels do not match the header".into(),
            ));
        }
        Self::new(labels, values)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Correlated attribute test: Spearman's ρ between two association vectors
/// of the same model.
pub fn cat(a: &AssociationVector, b: &AssociationVector) -> Result<f64> {
    if a.model_id != b.model_id {
        return Err(Error::Alignment(format!(
            "CAT compares one model, got `{}` and `{}`",
            a.model_id, b.model_id
        )));
    }
    Ok(stats::spearman(&a.scores, &b.scores)?.coefficient)
}

/// Pairwise Spearman matrix over named columns, in the order given.
pub fn correlation_matrix(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    let k = columns.len();
    if k == 0 {
        return Err(Error::InsufficientData("no columns to correlate".into()));
    }
    let n = columns[0].1.len();
    for (name, col) in columns {
        if col.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: col.len(),
            });
        }
        if n < 3 {
            return Err(Error::InsufficientData(format!(
                "column `{name}` has {n} values, need at least 3"
            )));
        }
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::UndefinedCorrelation(format!("column `{name}` is constant")));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let rhos = pairs
        .par_iter()
        .map(|&(i, j)| {
            stats::spearman(&columns[i].1, &columns[j].1).map(|c| c.coefficient)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
    }
    for (&(i, j), &r) in pairs.iter().zip(&rhos) {
        values[i * k + j] = r;
        values[j * k + i] = r;
    }
    CorrelationMatrix::new(columns.iter().map(|(n, _)| n.clone()).collect(), values)
}

/// ⟨A, B⟩_F / (‖A‖_F ‖B‖_F) over full matrices, diagonal included.
pub fn frobenius_similarity(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<f64> {
    if a.labels != b.labels {
        return Err(Error::Alignment(
            "correlation matrices have different labels or label order".into(),
        ));
    }
    frobenius_cosine(&a.values, &b.values)
}

/// Cosine of two equally sized matrices flattened in the same order.
pub fn frobenius_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector("zero matrix has no direction".into()));
    }
    let inner: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((inner / (na * nb)).clamp(-1.0, 1.0))
}

/// A model's structural similarity to the human correlation structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralSimilarity {
    pub model_id: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            _ => Err(Error::Validation(format!("unknown linkage `{s}`"))),
        }
    }
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        })
    }
}

/// One agglomeration step. Node ids `0..k` are leaves; the i-th merge
/// creates node `k + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
}

impl Dendrogram {
    fn node_height(&self, node: usize) -> f64 {
        if node < self.leaves.len() {
            0.0
        } else {
            self.merges[node - self.leaves.len()].height
        }
    }

    fn root(&self) -> usize {
        self.leaves.len() + self.merges.len() - 1
    }

    /// Leaf indices in left-to-right drawing order.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.leaves.len());
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            if node < self.leaves.len() {
                order.push(node);
            } else {
                let m = &self.merges[node - self.leaves.len()];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        order
    }

    /// Checks the merge count and that heights never decrease.
    pub fn validate(&self) -> Result<()> {
        if self.leaves.is_empty() {
            return Err(Error::Validation("dendrogram has no leaves".into()));
        }
        if self.merges.len() != self.leaves.len() - 1 {
            return Err(Error::Validation(format!(
                "{} merges for {} leaves",
                self.merges.len(),
                self.leaves.len()
            )));
        }
        for w in self.merges.windows(2) {
            if w[1].height < w[0].height - 1e-12 {
                return Err(Error::Validation(format!(
                    "merge heights decrease from {} to {}",
                    w[0].height, w[1].height
                )));
            }
        }
        Ok(())
    }
}

/// Agglomerative clustering on the distance 1 − ρ.
///
/// Ties in distance go to the pair whose smallest leaf indices compare
/// lowest, so the result depends only on the input matrix.
pub fn hcluster(c: &CorrelationMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let k = c.k();
    let leaf_dist = |a: usize, b: usize| 1.0 - c.get(a, b);

    struct Cluster {
        node: usize,
        members: Vec<usize>,
    }
    let mut active: Vec<Cluster> = (0..k)
        .map(|i| Cluster {
            node: i,
            members: vec![i],
        })
        .collect();
    // dist[a][b] between active clusters, indexed by position in `active`.
    let mut dist: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| leaf_dist(i, j)).collect())
        .collect();
    let mut merges = Vec::with_capacity(k.saturating_sub(1));

    while active.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let d = dist[a][b];
                let ka = active[a].members[0];
                let kb = active[b].members[0];
                let key = (ka.min(kb), ka.max(kb));
                let better = match best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < bd || (d == bd && key < bkey),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (height, _, a, b) = best.expect("at least two active clusters");
        // Left child is the one holding the smaller leaf index.
        let (l, r) = if active[a].members[0] < active[b].members[0] {
            (a, b)
        } else {
            (b, a)
        };
        let na = active[a].members.len() as f64;
        let nb = active[b].members.len() as f64;
        let new_row: Vec<f64> = (0..active.len())
            .map(|x| match linkage {
                Linkage::Average => (na * dist[a][x] + nb * dist[b][x]) / (na + nb),
                Linkage::Complete => dist[a][x].max(dist[b][x]),
                Linkage::Single => dist[a][x].min(dist[b][x]),
            })
            .collect();
        let mut members = active[a].members.clone();
        members.extend_from_slice(&active[b].members);
        members.sort_unstable();
        merges.push(Merge {
            left: active[l].node,
            right: active[r].node,
            height,
            size: members.len(),
        });
        let new_node = k + merges.len() - 1;

        // Replace cluster `a` with the merged one and drop `b` (b > a).
        for x in 0..active.len() {
            dist[a][x] = new_row[x];
            dist[x][a] = new_row[x];
        }
        dist[a][a] = 0.0;
        active[a] = Cluster {
            node: new_node,
            members,
        };
        active.remove(b);
        dist.remove(b);
        for row in &mut dist {
            row.remove(b);
        }
    }

    let d = Dendrogram {
        leaves: c.labels().to_vec(),
        merges,
        linkage,
    };
    d.validate()?;
    Ok(d)
}

fn newick_label(s: &str) -> String {
    let plain = !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || "()[]':;,_".contains(c));
    if plain {
        s.to_owned()
    } else {
        format!("'{}'", s.replace('\'', "''"))
    }
}

fn newick_length(x: f64) -> String {
    let s = format!("{:.10}", x.max(0.0));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

/// Newick string with each node placed at half its merge height, so a pair
/// merged at h gets branch lengths h/2.
pub fn to_newick(d: &Dendrogram) -> String {
    fn walk(d: &Dendrogram, node: usize, out: &mut String) {
        if node < d.leaves.len() {
            out.push_str(&newick_label(&d.leaves[node]));
            return;
        }
        let m = &d.merges[node - d.leaves.len()];
        out.push('(');
        for (i, child) in [m.left, m.right].into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            walk(d, child, out);
            out.push(':');
            out.push_str(&newick_length((m.height - d.node_height(child)) / 2.0));
        }
        out.push(')');
    }
    let mut out = String::new();
    walk(d, d.root(), &mut out);
    out.push(';');
    out
}
