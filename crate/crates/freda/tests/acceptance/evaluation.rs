use std::path::Path;

use freda_core::evaluation::{aggregate, evaluate, Averaging, Counts, Prediction};
use freda_core::facts::{Fact, Label};
use rand::Rng;

use crate::{ensure, gen, Outcome};

const TOL: f64 = 1e-12;

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

/// Hand-counted (tp, fp, fn) per relation, and expected micro totals.
struct Fixture {
    dir: &'static str,
    counts: &'static [(&'static str, u64, u64, u64)],
    micro: (f64, f64, f64),
}

const FIXTURES: &[Fixture] = &[
    Fixture { dir: "single", counts: &[("spouse", 2, 1, 2)], micro: (2.0 / 3.0, 0.5, 4.0 / 7.0) },
    Fixture {
        dir: "two_relations",
        counts: &[("date_of_birth", 2, 2, 1), ("spouse", 2, 0, 1)],
        micro: (4.0 / 6.0, 4.0 / 6.0, 2.0 / 3.0),
    },
    Fixture {
        dir: "no_positives",
        counts: &[("award_received", 0, 1, 0), ("headquarters", 2, 0, 0)],
        micro: (2.0 / 3.0, 1.0, 0.8),
    },
];

pub fn fixtures() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval");
    for fx in FIXTURES {
        let gold: Vec<Fact> = read(&root.join(fx.dir).join("gold.jsonl"))?;
        let preds: Vec<Prediction> = read(&root.join(fx.dir).join("pred.jsonl"))?;
        let report = evaluate(&preds, &gold).map_err(|e| e.to_string())?;
        ensure!(report.per_relation.len() == fx.counts.len(), "{}: relations {:?}", fx.dir, report.relations());
        for (rel, tp, fp, fn_) in fx.counts {
            let got = report.per_relation[*rel].counts;
            ensure!(got == Counts { tp: *tp, fp: *fp, fn_: *fn_ }, "{} {rel}: counts {got:?}", fx.dir);
        }
        let total = aggregate(&report, &report.relations(), "Total", Averaging::Micro).map_err(|e| e.to_string())?;
        let (p, r, f) = fx.micro;
        ensure!(close(total.precision, p) && close(total.recall, r) && close(total.f1, f), "{}: micro {total:?}", fx.dir);
    }

    // macro averages on the two-relation fixture, by hand: P=(1/2+1)/2,
    // R=(2/3+2/3)/2, F1=(4/7+4/5)/2
    let dir = root.join("two_relations");
    let report = evaluate(&read(&dir.join("pred.jsonl"))?, &read(&dir.join("gold.jsonl"))?).map_err(|e| e.to_string())?;
    let m = aggregate(&report, &report.relations(), "Total", Averaging::Macro).map_err(|e| e.to_string())?;
    ensure!(close(m.precision, 0.75) && close(m.recall, 2.0 / 3.0) && close(m.f1, 24.0 / 35.0), "macro {m:?}");
    let interim = aggregate(&report, &["date_of_birth".to_string()], "Interim", Averaging::Micro).map_err(|e| e.to_string())?;
    ensure!(close(interim.precision, 0.5) && close(interim.recall, 2.0 / 3.0), "interim {interim:?}");

    let mut rng = gen::rng(0x5eed_0006);
    for case in 0..500 {
        let relations = rng.random_range(1..6);
        let mut gold = Vec::new();
        let mut preds = Vec::new();
        for i in 0..rng.random_range(1..80) {
            let rel = format!("r{}", rng.random_range(0..relations));
            let label = |b: bool| if b { Label::Positive } else { Label::Negative };
            let f = Fact {
                sentence_id: format!("s{i}"),
                relation_name: rel.clone(),
                subject_ref: "a".into(),
                object_ref: "b".into(),
                label: label(rng.random_bool(0.3)),
            };
            if rng.random_bool(0.8) {
                preds.push(Prediction {
                    sentence_id: f.sentence_id.clone(),
                    relation_name: rel,
                    subject_ref: "a".into(),
                    object_ref: "b".into(),
                    predicted_label: label(rng.random_bool(0.4)),
                });
            }
            gold.push(f);
        }
        let report = evaluate(&preds, &gold).map_err(|e| e.to_string())?;
        let pooled = aggregate(&report, &report.relations(), "Total", Averaging::Micro).map_err(|e| e.to_string())?;

        // the same facts scored as one concatenated relation
        let one = |rel: &str, sid: &str| (String::from("all"), format!("{rel}/{sid}"));
        let gold_cat: Vec<Fact> = gold
            .iter()
            .map(|f| {
                let (relation_name, sentence_id) = one(&f.relation_name, &f.sentence_id);
                Fact { relation_name, sentence_id, ..f.clone() }
            })
            .collect();
        let preds_cat: Vec<Prediction> = preds
            .iter()
            .map(|p| {
                let (relation_name, sentence_id) = one(&p.relation_name, &p.sentence_id);
                Prediction { relation_name, sentence_id, ..p.clone() }
            })
            .collect();
        let cat = evaluate(&preds_cat, &gold_cat).map_err(|e| e.to_string())?.per_relation["all"];
        let summed = report.per_relation.values().fold(Counts::default(), |acc, r| Counts {
            tp: acc.tp + r.counts.tp,
            fp: acc.fp + r.counts.fp,
            fn_: acc.fn_ + r.counts.fn_,
        });
        ensure!(summed == cat.counts, "case {case}: pooled counts {summed:?} != concatenated {:?}", cat.counts);
        ensure!(
            close(pooled.precision, cat.precision) && close(pooled.recall, cat.recall) && close(pooled.f1, cat.f1),
            "case {case}: micro {pooled:?} != concatenated {cat:?}"
        );
    }
    Ok("3 fixtures match hand counts; micro pooled == concatenated on 500 random inputs".into())
}
