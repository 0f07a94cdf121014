#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impression_audit::regress::regress;
use impression_core::corpus::read_embeddings;
use impression_core::fixtures::planted_regression;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_impression-audit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(kind: &str, dir: &Path) {
    let o = run(&["fixture", "--kind", kind, "--out", p(dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn distinct(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[0] != w[1])
}

/// Every value the audit reports for the single-model fixture, recomputed
/// from the raw files with independent formulas.
struct Expected {
    similarity: BTreeMap<String, f64>,
    model_cat: Vec<Vec<f64>>,
    human_cat: Vec<Vec<f64>>,
    frobenius: f64,
    attributes: Vec<String>,
}

fn expected(dir: &Path) -> Expected {
    let attrs: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("attributes.json")).unwrap()).unwrap();
    let attributes: Vec<String> = attrs.iter().map(|a| a["name"].as_str().unwrap().to_owned()).collect();
    let mut ratings: BTreeMap<(String, String), f64> = BTreeMap::new();
    for row in read_csv(&dir.join("ratings.csv")) {
        ratings.insert(
            (row["image_id"].clone(), row["attribute"].clone()),
            row["mean_rating"].parse().unwrap(),
        );
    }
    let images = read_embeddings(dir.join("synthetic-clip.images.emb")).unwrap();
    let text = read_embeddings(dir.join("synthetic-clip.text.emb")).unwrap();
    let mut ids: Vec<String> = images.ids().to_vec();
    ids.sort();

    let mut assoc = Vec::new();
    let mut human = Vec::new();
    let mut similarity = BTreeMap::new();
    for a in &attributes {
        let pos = text.row_f64(text.position(&format!("{a}/pos")).unwrap());
        let neg = text.row_f64(text.position(&format!("{a}/neg")).unwrap());
        let scores: Vec<f64> = ids
            .iter()
            .map(|id| {
                let v = images.row_f64(images.position(id).unwrap());
                cos(&v, &pos) - cos(&v, &neg)
            })
            .collect();
        let h: Vec<f64> = ids.iter().map(|id| ratings[&(id.clone(), a.clone())]).collect();
        assert!(distinct(&scores) && distinct(&h), "oracle needs untied data");
        similarity.insert(a.clone(), oracles::spearman_rank_formula(&scores, &h));
        assoc.push(scores);
        human.push(h);
    }
    let cat = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
        cols.iter()
            .map(|x| cols.iter().map(|y| oracles::spearman_rank_formula(x, y)).collect())
            .collect()
    };
    let model_cat = cat(&assoc);
    let human_cat = cat(&human);
    let flat = |m: &Vec<Vec<f64>>| m.concat();
    let frobenius = cos(&flat(&model_cat), &flat(&human_cat));
    Expected {
        similarity,
        model_cat,
        human_cat,
        frobenius,
        attributes,
    }
}

fn read_matrix(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).unwrap();
    let labels: Vec<String> = rdr.headers().unwrap().iter().skip(1).map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    (labels, rows)
}

fn assert_matrix(path: &Path, labels: &[String], want: &[Vec<f64>]) {
    let (got_labels, got) = read_matrix(path);
    assert_eq!(got_labels, labels);
    for (gr, wr) in got.iter().zip(want) {
        for (g, w) in gr.iter().zip(wr) {
            assert!((g - w).abs() < 1e-12, "{}: {g} vs {w}", path.display());
        }
    }
}

fn without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp").expect("timestamp present");
    v
}

#[test]
fn audit_fixture_matches_composed_oracles() {
    let dir = tempfile::tempdir().unwrap();
    fixture("corpus", dir.path());
    let config = dir.path().join("audit_config.json");
    let o = run(&["audit", "--config", p(&config)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let report = dir.path().join("report");
    for f in [
        "audit.json",
        "similarity.csv",
        "irr_correlation.json",
        "frobenius.csv",
        "human/cat_matrix.csv",
        "human/dendrogram.nwk",
        "synthetic-clip/cat_matrix.csv",
        "synthetic-clip/dendrogram.nwk",
    ] {
        assert!(report.join(f).is_file(), "missing {f}");
    }

    let want = expected(dir.path());
    let sims = read_csv(&report.join("similarity.csv"));
    assert_eq!(sims.len(), want.attributes.len());
    for row in &sims {
        assert_eq!(row["model_id"], "synthetic-clip");
        assert_eq!(row["n"], "8");
        let rho: f64 = row["rho"].parse().unwrap();
        assert!((rho - want.similarity[&row["attribute"]]).abs() < 1e-12);
    }
    assert_matrix(&report.join("synthetic-clip/cat_matrix.csv"), &want.attributes, &want.model_cat);
    assert_matrix(&report.join("human/cat_matrix.csv"), &want.attributes, &want.human_cat);
    let frob: f64 = read_csv(&report.join("frobenius.csv"))[0]["value"].parse().unwrap();
    assert!((frob - want.frobenius).abs() < 1e-12);

    for tree in ["human/dendrogram.nwk", "synthetic-clip/dendrogram.nwk"] {
        let text = std::fs::read_to_string(report.join(tree)).unwrap();
        let parsed = oracles::parse_newick(text.trim()).unwrap();
        let mut leaves = parsed.leaves();
        leaves.sort();
        let mut attrs = want.attributes.clone();
        attrs.sort();
        assert_eq!(leaves, attrs);
    }

    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["options"]["linkage"], "average");
    assert_eq!(audit["scale_is_default"], true);
    assert!(audit["config"]["output_dir"].is_null());
    let mean: f64 = want.similarity.values().sum::<f64>() / want.similarity.len() as f64;
    let got = audit["models"][0]["mean_similarity"].as_f64().unwrap();
    assert!((got - mean).abs() < 1e-12);
}

#[test]
fn audit_rerun_differs_only_in_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    fixture("corpus", dir.path());
    let config = dir.path().join("audit_config.json");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, threads) in [(&out_a, "1"), (&out_b, "3")] {
        let o = run(&["audit", "--config", p(&config), "--out", p(out), "--threads", threads]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(
        without_timestamp(&out_a.join("audit.json")),
        without_timestamp(&out_b.join("audit.json"))
    );
    for f in ["similarity.csv", "frobenius.csv", "synthetic-clip/cat_matrix.csv", "human/dendrogram.nwk"] {
        assert_eq!(std::fs::read(out_a.join(f)).unwrap(), std::fs::read(out_b.join(f)).unwrap());
    }
}

#[test]
fn audit_options_come_from_flags_and_are_embedded() {
    let dir = tempfile::tempdir().unwrap();
    fixture("corpus", dir.path());
    let config = dir.path().join("audit_config.json");
    let o = run(&[
        "audit", "--config", p(&config), "--linkage", "complete", "--irr-method", "pearson",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let audit = without_timestamp(&dir.path().join("report/audit.json"));
    assert_eq!(audit["options"]["linkage"], "complete");
    assert_eq!(audit["options"]["irr_method"], "pearson");
    assert_eq!(audit["irr_correlation"]["method"], "pearson");
}

fn edit_config(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn missing_ratings_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    fixture("corpus", dir.path());
    let config = dir.path().join("audit_config.json");
    edit_config(&config, |v| v["ratings_path"] = "no_such_ratings.csv".into());
    let o = run(&["audit", "--config", p(&config)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no_such_ratings.csv"), "{}", stderr(&o));
    assert!(!dir.path().join("report").exists());
}

#[test]
fn failing_model_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fixture", "--kind", "corpus", "--models", "3", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Drop one prompt row from the last model's text file.
    let text_path = dir.path().join("synthetic-clip-2.text.emb");
    let text = read_embeddings(&text_path).unwrap();
    let keep: Vec<usize> = (1..text.len()).collect();
    let pruned = text.select(&keep).unwrap();
    impression_core::corpus::write_embeddings(&pruned, &text_path).unwrap();

    let o = run(&["audit", "--config", p(&dir.path().join("audit_config.json"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains(&text.ids()[0]), "{}", stderr(&o));
    assert!(!dir.path().join("report").exists());
    let leftovers: Vec<PathBuf> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn mismatched_embedding_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fixture("corpus", dir.path());
    let config = dir.path().join("audit_config.json");
    edit_config(&config, |v| v["text_embeddings"][0]["model_id"] = "other".into());
    let o = run(&["audit", "--config", p(&config)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn exact_irr_regression_recovers_unit_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    fixture("regression", dir.path());
    // Replace every similarity with the attribute's IRR.
    let irr: BTreeMap<String, String> = read_csv(&dir.path().join("irr.csv"))
        .into_iter()
        .map(|r| (r["attribute"].clone(), r["irr"].clone()))
        .collect();
    let mut out = String::from("model_id,attribute,rho\n");
    for row in read_csv(&dir.path().join("similarities.csv")) {
        out.push_str(&format!("{},{},{}\n", row["model_id"], row["attribute"], irr[&row["attribute"]]));
    }
    std::fs::write(dir.path().join("similarities.csv"), out).unwrap();

    let out_dir = dir.path().join("reg");
    let o = run(&[
        "regress",
        "--similarities", p(&dir.path().join("similarities.csv")),
        "--irr", p(&dir.path().join("irr.csv")),
        "--meta", p(&dir.path().join("model_meta.csv")),
        "--out", p(&out_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("regression.json")).unwrap()).unwrap();
    assert_eq!(rep["n"], 918);
    assert!((rep["adj_r2"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    for c in rep["coefficients"].as_array().unwrap() {
        let coef = c["coef"].as_f64().unwrap();
        let want = if c["name"] == "Human IRR" { 1.0 } else { 0.0 };
        assert!((coef - want).abs() < 1e-9, "{c}");
    }
}

#[test]
fn planted_regression_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    fixture("regression", dir.path());
    let out_dir = dir.path().join("reg");
    let o = run(&[
        "regress",
        "--similarities", p(&dir.path().join("similarities.csv")),
        "--irr", p(&dir.path().join("irr.csv")),
        "--meta", p(&dir.path().join("model_meta.csv")),
        "--out", p(&out_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("regression.json")).unwrap()).unwrap();
    let coef = |name: &str| {
        rep["coefficients"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["name"] == name)
            .unwrap()["coef"]
            .as_f64()
            .unwrap()
    };
    assert!((coef("Human IRR") - 1.0).abs() < 0.05);
    assert!((coef("Dataset Size") - 0.1).abs() < 0.05);
}

#[test]
fn collinear_design_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut sims = String::from("model_id,attribute,rho\n");
    let mut meta = String::from(
        "model_id,family,dataset_size,total_training_samples,image_params,text_params\n",
    );
    for i in 0..5u64 {
        let id = format!("m{i}");
        // image_params == text_params duplicates a column.
        meta.push_str(&format!("{id},scaling,{},{},{},{}\n", (i + 1) * 100, (i % 3 + 1) * 7 + i * i, 50 + i * 13, 50 + i * 13));
        for a in ["x", "y"] {
            sims.push_str(&format!("{id},{a},{}\n", 0.1 * i as f64 + if a == "x" { 0.3 } else { 0.05 }));
        }
    }
    std::fs::write(dir.path().join("s.csv"), sims).unwrap();
    std::fs::write(dir.path().join("m.csv"), meta).unwrap();
    std::fs::write(dir.path().join("i.csv"), "attribute,irr\nx,0.8\ny,0.3\n").unwrap();
    let o = run(&[
        "regress",
        "--similarities", p(&dir.path().join("s.csv")),
        "--irr", p(&dir.path().join("i.csv")),
        "--meta", p(&dir.path().join("m.csv")),
        "--out", p(&dir.path().join("out")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn null_predictor_p_values_are_calibrated() {
    // With iid noise, each null predictor's p-value is uniform, so about
    // 95% of trials sit above .05.
    let trials = 1000;
    let mut above = [0usize; 3];
    let nulls = ["Total Samples", "Image Params", "Text Params"];
    for seed in 0..trials {
        let fx = planted_regression(seed, 34, 1.0, 0.1, 0.02).unwrap();
        let rows: Vec<_> = fx.records.iter().map(|r| (r.model_id.clone(), r.attribute.clone(), r.rho)).collect();
        let rep = regress(&rows, &fx.irr, &fx.meta).unwrap();
        for (k, n) in nulls.iter().enumerate() {
            above[k] += usize::from(rep.coefficient(n).unwrap().p > 0.05);
        }
    }
    for (k, n) in nulls.iter().enumerate() {
        let rate = above[k] as f64 / trials as f64;
        // ± 3.5 binomial standard errors around 0.95
        assert!((rate - 0.95).abs() < 0.025, "{n}: {rate}");
    }
}

#[test]
fn probe_fixture_separates_and_identical_groups_have_zero_d() {
    let dir = tempfile::tempdir().unwrap();
    fixture("probe", dir.path());
    let o = run(&["probe", "--config", p(&dir.path().join("probe_config.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("probe_report");
    let metrics = read_csv(&out.join("probe_metrics.csv"));
    assert!(metrics[0]["f1"].parse::<f64>().unwrap() >= 0.9);
    for row in read_csv(&out.join("differential_bias.csv")) {
        assert_eq!(row["d"].parse::<f64>().unwrap(), 0.0);
    }
    assert!(out.join("subspaces/happy.emb").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("probe.json")).unwrap()).unwrap();
    assert_eq!(report["options"]["d_mode"], "paired");
}

#[test]
fn probe_with_single_pole_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fixture("probe", dir.path());
    let config = dir.path().join("probe_config.json");
    edit_config(&config, |v| {
        v["generated"][0].as_object_mut().unwrap().remove("neg");
    });
    let o = run(&["probe", "--config", p(&config)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("both poles"), "{}", stderr(&o));
    assert!(!dir.path().join("probe_report").exists());
}

#[test]
fn tools_agree_with_audit_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fixture("corpus", dir.path());
    let o = run(&["audit", "--config", p(&dir.path().join("audit_config.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = dir.path().join("report");
    let model_cat = report.join("synthetic-clip/cat_matrix.csv");
    let human_cat = report.join("human/cat_matrix.csv");

    let cat_out = dir.path().join("cat");
    let o = run(&[
        "cat",
        "--images", p(&dir.path().join("synthetic-clip.images.emb")),
        "--text", p(&dir.path().join("synthetic-clip.text.emb")),
        "--ratings", p(&dir.path().join("ratings.csv")),
        "--attributes", p(&dir.path().join("attributes.json")),
        "--out", p(&cat_out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(cat_out.join("cat_matrix.csv")).unwrap(), std::fs::read(&model_cat).unwrap());

    let o = run(&["cluster", "--matrix", p(&model_cat)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tree = std::fs::read_to_string(report.join("synthetic-clip/dendrogram.nwk")).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), tree.trim());

    let o = run(&["frobenius", p(&model_cat), p(&human_cat)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let f: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    let want: f64 = read_csv(&report.join("frobenius.csv"))[0]["value"].parse().unwrap();
    assert!((f - want).abs() < 1e-12);

    let o = run(&["emb", "inspect", p(&dir.path().join("synthetic-clip.images.emb"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["count"], 8);
    assert_eq!(summary["dim"], 16);
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.emb");
    std::fs::write(&bad, b"EMB1\x01\x00").unwrap();
    assert_eq!(code(&run(&["emb", "inspect", p(&bad)])), 2);
    assert_eq!(code(&run(&["audit"])), 2);
    assert_eq!(code(&run(&["cluster", "--matrix", p(&dir.path().join("none.csv"))])), 2);
    fixture("corpus", dir.path());
    let config = p(&dir.path().join("audit_config.json")).to_owned();
    assert_eq!(code(&run(&["audit", "--config", &config, "--threads", "0"])), 2);
    assert_eq!(code(&run(&["audit", "--config", &config, "--linkage", "median"])), 2);
}
