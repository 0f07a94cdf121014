//! Independent reference implementations. Nothing here calls into the
//! library under test.
#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

/// Spearman's ρ for tie-free data via 1 − 6Σd²/(n(n²−1)).
pub fn spearman_rank_formula(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0usize; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos + 1;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx
        .iter()
        .zip(&ry)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Every permutation of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// (XᵀX + λI) β = Xᵀy with X given as rows.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let p = rows[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, &yi) in rows.iter().zip(y) {
        for i in 0..p {
            xty[i] += r[i] * yi;
            for j in 0..p {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += lambda;
    }
    gauss_solve(xtx, xty)
}

/// ln Γ(x) for x > 0 by upward recurrence then the Stirling series.
pub fn ln_gamma_stirling(x: f64) -> f64 {
    let mut z = x;
    let mut shift = 0.0;
    while z < 15.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2)
        - 1.0 / (1680.0 * z * z2 * z2 * z2);
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma_stirling(a) + ln_gamma_stirling(b) - ln_gamma_stirling(a + b)
}

fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of f over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 40)
}

pub fn t_pdf(x: f64, df: f64) -> f64 {
    (-(0.5 * df.ln()) - ln_beta(0.5, 0.5 * df) - 0.5 * (df + 1.0) * (1.0 + x * x / df).ln()).exp()
}

pub fn t_cdf_quad(x: f64, df: f64) -> f64 {
    let half = integrate(|u| t_pdf(u, df), 0.0, x.abs(), 1e-14);
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// F CDF by integrating the density after substituting x = u², which
/// removes the endpoint singularity when d1 = 1.
pub fn f_cdf_quad(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let c = 0.5 * d1 * (d1 / d2).ln() - ln_beta(0.5 * d1, 0.5 * d2);
    let g = |u: f64| {
        2.0 * u.powf(d1 - 1.0)
            * (c - 0.5 * (d1 + d2) * (1.0 + d1 * u * u / d2).ln()).exp()
    };
    integrate(g, 0.0, x.sqrt(), 1e-14)
}

/// Minimal Newick reader: returns (label, branch length, children).
#[derive(Debug, Clone, PartialEq)]
pub struct NewickNode {
    pub label: Option<String>,
    pub length: Option<f64>,
    pub children: Vec<NewickNode>,
}

impl NewickNode {
    pub fn leaves(&self) -> Vec<String> {
        if self.children.is_empty() {
            return self.label.clone().into_iter().collect();
        }
        self.children.iter().flat_map(NewickNode::leaves).collect()
    }
}

pub fn parse_newick(s: &str) -> Result<NewickNode, String> {
    let chars: Vec<char> = s.trim().chars().collect();
    let mut pos = 0;
    let node = parse_node(&chars, &mut pos)?;
    if chars.get(pos) != Some(&';') {
        return Err(format!("expected `;` at {pos}"));
    }
    if pos + 1 != chars.len() {
        return Err("trailing characters".into());
    }
    Ok(node)
}

fn parse_node(c: &[char], pos: &mut usize) -> Result<NewickNode, String> {
    let mut children = Vec::new();
    if c.get(*pos) == Some(&'(') {
        *pos += 1;
        loop {
            children.push(parse_node(c, pos)?);
            match c.get(*pos) {
                Some(',') => *pos += 1,
                Some(')') => {
                    *pos += 1;
                    break;
                }
                other => return Err(format!("unexpected {other:?} at {pos}")),
            }
        }
    }
    let label = parse_label(c, pos)?;
    let length = if c.get(*pos) == Some(&':') {
        *pos += 1;
        let start = *pos;
        while *pos < c.len() && !matches!(c[*pos], ',' | ')' | ';') {
            *pos += 1;
        }
        let text: String = c[start..*pos].iter().collect();
        Some(text.parse::<f64>().map_err(|e| format!("bad length `{text}`: {e}"))?)
    } else {
        None
    };
    Ok(NewickNode {
        label,
        length,
        children,
    })
}

fn parse_label(c: &[char], pos: &mut usize) -> Result<Option<String>, String> {
    if c.get(*pos) == Some(&'\'') {
        *pos += 1;
        let mut out = String::new();
        loop {
            match c.get(*pos) {
                Some('\'') if c.get(*pos + 1) == Some(&'\'') => {
                    out.push('\'');
                    *pos += 2;
                }
                Some('\'') => {
                    *pos += 1;
                    return Ok(Some(out));
                }
                Some(&ch) => {
                    out.push(ch);
                    *pos += 1;
                }
                None => return Err("unterminated quoted label".into()),
            }
        }
    }
    let start = *pos;
    while *pos < c.len() && !matches!(c[*pos], ':' | ',' | ')' | ';' | '(') {
        *pos += 1;
    }
    Ok((*pos > start).then(|| c[start..*pos].iter().collect()))
}
