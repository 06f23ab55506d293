use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use freda_core::agreement::{kappa, ContingencyTable};
use serde_json::{json, Value};

use crate::{ensure, Outcome};

const SENTENCES: usize = 200;

/// Four kinds of sentence, by `i % 4`: spouse by keyword, birth date by
/// keyword, spouse by KB pair, and a distractor matching nothing.
fn corpus() -> String {
    let mut out = String::new();
    for i in 0..SENTENCES {
        let markup = match i % 4 {
            0 => format!("[[a{i}|PER|Anna N{i}]] married [[b{i}|PER|Ben N{i}]] in 1990 ."),
            1 => format!("[[a{i}|PER|Cora N{i}]] was born on May 3 , 1950 in [[l{i}|LOC|Town N{i}]] ."),
            2 => format!("[[a{i}|PER|Kb Left {i}]] met [[b{i}|PER|Kb Right {i}]] ."),
            _ => format!("[[a{i}|PER|Dan N{i}]] opened [[o{i}|ORG|Org N{i}]] in 2001 ."),
        };
        out.push_str(&format!("s{i:03}\tArticle {i}\t{markup}\n"));
    }
    out
}

fn kb_pairs() -> String {
    (0..SENTENCES).filter(|i| i % 4 == 2).map(|i| format!("Kb Left {i}\tKb Right {i}\n")).collect()
}

const SCHEMAS: &str = r#"[
  {"name": "spouse", "subject_type": "PER", "object_type": "PER", "symmetric": true,
   "keywords": ["married", "wife", "husband"], "kb_pairs_path": "spouse.tsv"},
  {"name": "date_of_birth", "subject_type": "PER", "object_type": "DATE", "keywords": ["born"]}
]"#;

fn freda(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_freda"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if !out.status.success() {
        return Err(format!("freda {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(stdout)
}

fn jsonl(path: &Path) -> Result<Vec<Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn row(table: &str, name: &str) -> Option<String> {
    table.lines().find(|l| l.starts_with(name)).map(|l| l[name.len()..].trim().to_string())
}

/// The scripted ground truth: whether the sentence expresses the relation.
fn truth(relation: &str, i: usize) -> bool {
    match relation {
        "spouse" => i.is_multiple_of(4) || i % 8 == 2,
        _ => !i.is_multiple_of(5),
    }
}

fn response(annotator: &str, round: u8, c: &Value, sentence: &Value, yes: bool, seconds: f64) -> Value {
    let entities = &sentence["entities"];
    let find = |ty: &str, skip: usize| {
        entities
            .as_array()
            .into_iter()
            .flatten()
            .filter(|e| e["entity_type"] == ty)
            .nth(skip)
            .map(|e| e["entity_ref"].clone())
    };
    let object = if c["relation_name"] == "spouse" { find("PER", 1) } else { find("DATE", 0) };
    let pairs = if yes { vec![json!({"subject": find("PER", 0), "object": object})] } else { vec![] };
    json!({
        "annotator_id": annotator,
        "relation_name": c["relation_name"],
        "sentence_id": c["sentence_id"],
        "round": round,
        "decision": if yes { "expresses" } else { "not_expresses" },
        "asserted_pairs": pairs,
        "entity_edits": entities,
        "elapsed_seconds": seconds,
    })
}

pub fn smoke() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let write = |name: &str, text: &str| std::fs::write(dir.join(name), text).map_err(|e| e.to_string());
    write("corpus.wexea", &corpus())?;
    write("schemas.json", SCHEMAS)?;
    write("spouse.tsv", &kb_pairs())?;

    let out = freda(dir, &["ingest", "--corpus", "corpus.wexea", "--out", "ingested.jsonl"])?;
    ensure!(out.contains("ingested 200 sentences, 150 date clusters added"), "ingest: {out}");
    let ingested: BTreeMap<String, Value> = jsonl(&dir.join("ingested.jsonl"))?
        .into_iter()
        .map(|s| (s["sentence_id"].as_str().unwrap_or_default().to_string(), s))
        .collect();

    let out = freda(dir, &[
        "filter", "--corpus", "ingested.jsonl", "--schema", "schemas.json", "--out", "candidates.jsonl",
        "--log", "events.jsonl",
    ])?;
    ensure!(out.contains("queued 150 new candidates"), "filter: {out}");
    let candidates = jsonl(&dir.join("candidates.jsonl"))?;
    let provenance = |rel: &str, p: &str| candidates.iter().filter(|c| c["relation_name"] == rel && c["provenance"] == p).count();
    ensure!(provenance("spouse", "keyword") == 50 && provenance("spouse", "distant") == 50, "spouse candidates: {out}");
    ensure!(provenance("date_of_birth", "keyword") == 50, "date_of_birth candidates: {out}");
    // rerunning queues nothing new
    let again = freda(dir, &[
        "filter", "--corpus", "ingested.jsonl", "--schema", "schemas.json", "--out", "candidates.jsonl",
        "--log", "events.jsonl",
    ])?;
    ensure!(again.contains("queued 0 new candidates"), "second filter: {again}");

    // two annotators per unit; the first KB sentence gets a disagreement and a tie-break
    let mut lines = Vec::new();
    let (mut both_yes, mut both_no, mut positive_verdicts, mut positive_pairs) = (0u64, 0u64, 0usize, 0usize);
    for c in &candidates {
        let sid = c["sentence_id"].as_str().unwrap_or_default();
        let rel = c["relation_name"].as_str().unwrap_or_default();
        let i: usize = sid[1..].parse().map_err(|_| format!("bad id {sid}"))?;
        let yes = truth(rel, i);
        let sentence = &ingested[sid];
        let seconds = 5.0 + (i % 7) as f64;
        if rel == "spouse" && i == 2 {
            lines.push(response("ann_a", 1, c, sentence, true, seconds));
            lines.push(response("ann_b", 2, c, sentence, false, seconds + 1.0));
            lines.push(response("ann_c", 3, c, sentence, yes, seconds + 2.0));
        } else {
            lines.push(response("ann_a", 1, c, sentence, yes, seconds));
            lines.push(response("ann_b", 2, c, sentence, yes, seconds + 1.0));
            if yes {
                both_yes += 1;
            } else {
                both_no += 1;
            }
        }
        positive_verdicts += usize::from(yes);
        // a symmetric relation yields the pair in both directions
        positive_pairs += usize::from(yes) * if rel == "spouse" { 2 } else { 1 };
    }
    let script: String = lines.iter().map(|l| format!("{l}\n")).collect();
    write("responses.jsonl", &script)?;
    let out = freda(dir, &["respond", "--schema", "schemas.json", "--log", "events.jsonl", "--in", "responses.jsonl"])?;
    ensure!(out.lines().count() == lines.len(), "respond printed {} lines for {} responses", out.lines().count(), lines.len());
    let adjudicated = out.lines().filter(|l| l.ends_with(": adjudicated")).count();
    ensure!(adjudicated == 150, "{adjudicated} units adjudicated");

    let table = freda(dir, &[
        "facts", "--schema", "schemas.json", "--log", "events.jsonl", "--out", "facts.jsonl", "--verdicts-out",
        "verdicts.jsonl",
    ])?;
    let facts = jsonl(&dir.join("facts.jsonl"))?;
    let positive_facts = facts.iter().filter(|f| f["label"] == "positive").count();
    let expected_rows = [
        ("Relations", "2".to_string()),
        ("Sentences", "150".to_string()),
        ("Positive responses", positive_verdicts.to_string()),
        ("Negative responses", (150 - positive_verdicts).to_string()),
        ("Positive facts", positive_facts.to_string()),
        ("Negative facts", (facts.len() - positive_facts).to_string()),
    ];
    for (name, value) in &expected_rows {
        ensure!(row(&table, name).as_deref() == Some(value.as_str()), "facts row {name}: expected {value} in\n{table}");
    }
    ensure!(positive_facts == positive_pairs, "{positive_pairs} positive facts expected, got {positive_facts}");
    ensure!(jsonl(&dir.join("verdicts.jsonl"))?.len() == 150, "verdicts file size");

    // pooled table: one first-yes/second-no unit, the rest agree
    let expected_kappa = kappa(&ContingencyTable { a: both_yes, b: 1, c: 0, d: both_no }).map_err(|e| e.to_string())?;
    ensure!(row(&table, "Inter-annotator kappa") == Some(format!("{expected_kappa:.2}")), "kappa row in\n{table}");
    let report: Value = serde_json::from_str(&freda(dir, &["kappa", "--schema", "schemas.json", "--log", "events.jsonl", "--json"])?)
        .map_err(|e| e.to_string())?;
    let got = report["overall"]["kappa"].as_f64().unwrap_or(f64::NAN);
    ensure!((got - expected_kappa).abs() <= 1e-12, "overall kappa {got}, expected {expected_kappa}");
    freda(dir, &["kappa", "--schema", "schemas.json", "--log", "events.jsonl"])?;

    let out = freda(dir, &["export", "--schema", "schemas.json", "--log", "events.jsonl", "--out-dir", "export"])?;
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("export/manifest.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    for (rel, n) in [("spouse", 100), ("date_of_birth", 50)] {
        let counts = &manifest["relations"][rel];
        ensure!(counts["test_sentences"] == n / 10 && counts["train_sentences"] == n - n / 10, "{rel} split in {out}");
        for side in ["train", "test"] {
            ensure!(dir.join(format!("export/{rel}.{side}.jsonl")).is_file(), "missing {rel}.{side}.jsonl");
        }
    }

    // a predictor that flips every third gold label
    let gold = jsonl(&dir.join("export/test_facts.jsonl"))?;
    let mut counts: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    let mut preds = String::new();
    for (k, f) in gold.iter().enumerate() {
        let positive = f["label"] == "positive";
        let predicted = if k % 3 == 0 { !positive } else { positive };
        let c = counts.entry(f["relation_name"].as_str().unwrap_or_default().to_string()).or_default();
        match (predicted, positive) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            _ => {}
        }
        let p = json!({
            "sentence_id": f["sentence_id"], "relation": f["relation_name"], "subject_ref": f["subject_ref"],
            "object_ref": f["object_ref"], "label": if predicted { "positive" } else { "negative" },
        });
        preds.push_str(&format!("{p}\n"));
    }
    write("pred.jsonl", &preds)?;
    let out = freda(dir, &[
        "eval", "--gold", "export/test_facts.jsonl", "--pred", "pred.jsonl", "--interim", "date_of_birth", "--json",
        "eval.json",
    ])?;
    ensure!(out.contains("Interim (micro)") && out.contains("Total (micro)"), "eval table:\n{out}");
    let eval: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("eval.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    for (rel, (tp, fp, fn_)) in &counts {
        let r = &eval["per_relation"][rel];
        ensure!(r["tp"] == *tp && r["fp"] == *fp && r["fn"] == *fn_, "{rel}: eval counts {r} vs ({tp}, {fp}, {fn_})");
    }

    let speed: Value = serde_json::from_str(&freda(dir, &["speed", "--schema", "schemas.json", "--log", "events.jsonl", "--json"])?)
        .map_err(|e| e.to_string())?;
    let per: BTreeMap<String, u64> = speed
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| (r["annotator_id"].as_str().unwrap_or_default().to_string(), r["sentences"].as_u64().unwrap_or(0)))
        .collect();
    ensure!(per.get("ann_a") == Some(&150) && per.get("ann_b") == Some(&150) && per.get("ann_c") == Some(&1), "speed rows {per:?}");
    freda(dir, &["speed", "--schema", "schemas.json", "--log", "events.jsonl"])?;

    Ok(format!(
        "ingest, filter, respond ({} responses), facts, kappa, export, eval and speed all exit 0 on a {SENTENCES}-sentence corpus",
        lines.len()
    ))
}
