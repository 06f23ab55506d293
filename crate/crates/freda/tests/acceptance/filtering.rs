use std::collections::BTreeMap;

use freda_core::corpus::{parse_corpus_line, EntityType};
use freda_core::filtering::{select_candidates, KbPair, Provenance, RelationSchema};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::{ensure, gen, Outcome};

const SIZE: usize = 10_000;

/// Sentences that must not be selected, each a near miss of one rule.
fn distractor(kind: usize, i: usize) -> String {
    match kind {
        // inflected forms are not keyword matches
        0 => format!("[[a{i}|PER|Anna Q{i}]] announced the marriage of [[b{i}|PER|Berta Q{i}]] ."),
        1 => format!("[[a{i}|PER|Carl Q{i}]] remarried after [[b{i}|PER|Dora Q{i}]] left ."),
        // keyword present but only one person
        2 => format!("[[a{i}|PER|Emil Q{i}]] married in [[l{i}|LOC|Town Q{i}]] ."),
        // only the subject label of a KB pair
        3 => format!("[[a{i}|PER|Kb Subject {}]] met [[b{i}|PER|Felix Q{i}]] .", i % 50),
        // both KB labels, but one person only
        4 => format!("[[a{i}|PER|Kb Subject {}]] visited [[b{i}|LOC|Kb Object {}]] .", i % 50, i % 50),
        // both KB labels inside one cluster's surface
        5 => format!("[[a{i}|PER|Kb Subject {}]] and [[b{i}|PER|Gina Q{i}]] saw Kb Object {} .", i % 50, i % 50),
        _ => format!("[[o{i}|ORG|Acme Q{i}]] opened in [[l{i}|LOC|City Q{i}]] on [[p{i}|PER|Hugo Q{i}]] 's watch ."),
    }
}

pub fn planted() -> Outcome {
    let mut rng = gen::rng(0x5eed_0005);
    let schema = RelationSchema::new("spouse", EntityType::Per, EntityType::Per)
        .symmetric()
        .with_keywords(["married", "wife", "husband", "spouse of"]);
    let kb: Vec<KbPair> = (0..100).map(|k| KbPair::new(&format!("kb subject {k}"), &format!("KB OBJECT {k}"))).collect();

    let mut slots: Vec<usize> = (0..SIZE).collect();
    slots.shuffle(&mut rng);
    let mut expected: BTreeMap<String, Provenance> = BTreeMap::new();
    let mut lines = vec![String::new(); SIZE];
    for (n, &slot) in slots.iter().enumerate() {
        let id = format!("s{slot:05}");
        let markup = if n < 50 {
            expected.insert(id.clone(), Provenance::Keyword);
            let kw = ["married", "wife", "husband", "spouse of"][n % 4];
            format!("[[a{n}|PER|Ines P{n}]] , the {kw} [[b{n}|PER|Jon P{n}]] , arrived .")
        } else if n < 100 {
            let k = n - 50;
            expected.insert(id.clone(), Provenance::Distant);
            // reversed order in the sentence still matches
            if k % 2 == 0 {
                format!("[[a{n}|PER|Kb Subject {k}]] met [[b{n}|PER|Kb Object {k}]] in [[l{n}|LOC|Rome]] .")
            } else {
                format!("[[b{n}|PER|kb object {k}]] and [[a{n}|PER|KB SUBJECT {k}]] danced .")
            }
        } else {
            distractor(rng.random_range(0..7), n)
        };
        lines[slot] = format!("{id}\tart\t{markup}");
    }
    let corpus = lines
        .iter()
        .map(|l| parse_corpus_line(l).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;

    let picked = select_candidates(&corpus, &schema, &kb, SIZE);
    let got: BTreeMap<String, Provenance> = picked.iter().map(|c| (c.sentence_id.clone(), c.provenance)).collect();
    let false_pos: Vec<_> = got.keys().filter(|k| !expected.contains_key(*k)).collect();
    let false_neg: Vec<_> = expected.keys().filter(|k| !got.contains_key(*k)).collect();
    ensure!(false_pos.is_empty(), "{} false positives, e.g. {:?}", false_pos.len(), false_pos.first());
    ensure!(false_neg.is_empty(), "{} false negatives, e.g. {:?}", false_neg.len(), false_neg.first());
    for (id, p) in &expected {
        ensure!(got[id] == *p, "{id}: provenance {:?}, expected {p:?}", got[id]);
    }
    ensure!(picked.len() == 100, "{} candidates", picked.len());
    let ordered = picked.windows(2).all(|w| w[0].sentence_id < w[1].sentence_id);
    ensure!(ordered, "candidates are not in corpus order");
    Ok("10000 sentences: exactly the 100 planted (50 keyword, 50 distant), zero false positives or negatives".into())
}
