use std::collections::{BTreeMap, BTreeSet};

use freda_core::corpus::{parse_corpus_line, EntityType};
use freda_core::engine::{Decision, EntityPair, SentenceVerdict};
use freda_core::facts::{verdict_facts, Label};
use freda_core::filtering::RelationSchema;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::{ensure, gen, Outcome};

pub fn princess() -> Outcome {
    let s = parse_corpus_line(
        "s1\tPrincess Alberta\t[[PA|PER|Princess Alberta]] was the fourth daughter of \
         [[QV|PER|Queen Victoria]] and [[PrA|PER|Prince Albert]] .",
    )
    .map_err(|e| e.to_string())?;
    let v = SentenceVerdict {
        sentence_id: "s1".into(),
        relation_name: "child_of".into(),
        final_decision: Decision::Expresses,
        final_pairs: BTreeSet::from([EntityPair::new("PA", "QV"), EntityPair::new("PA", "PrA")]),
        final_entities: s.entities.clone(),
    };
    let schema = RelationSchema::new("child_of", EntityType::Per, EntityType::Per);
    let facts = verdict_facts(&v, &schema).map_err(|e| e.to_string())?;
    let label_of = |l: Label| -> BTreeSet<(String, String)> {
        facts
            .iter()
            .filter(|f| f.label == l)
            .map(|f| {
                let name = |r: &str| s.entity(r).map(|e| e.display_label.clone()).unwrap_or_default();
                (name(&f.subject_ref), name(&f.object_ref))
            })
            .collect()
    };
    let pair = |a: &str, b: &str| (a.to_string(), b.to_string());
    let positives = BTreeSet::from([
        pair("Princess Alberta", "Queen Victoria"),
        pair("Princess Alberta", "Prince Albert"),
    ]);
    let negatives = BTreeSet::from([
        pair("Queen Victoria", "Princess Alberta"),
        pair("Prince Albert", "Princess Alberta"),
        pair("Prince Albert", "Queen Victoria"),
        pair("Queen Victoria", "Prince Albert"),
    ]);
    ensure!(facts.len() == 6, "expected 6 facts, got {}", facts.len());
    ensure!(label_of(Label::Positive) == positives, "positives {:?}", label_of(Label::Positive));
    ensure!(label_of(Label::Negative) == negatives, "negatives {:?}", label_of(Label::Negative));
    Ok("2 positive and 4 negative facts, identical to the worked example".into())
}

fn schemas() -> Vec<RelationSchema> {
    use EntityType::*;
    vec![
        RelationSchema::new("child_of", Per, Per),
        RelationSchema::new("spouse", Per, Per).symmetric(),
        RelationSchema::new("date_of_birth", Per, Date),
        RelationSchema::new("headquarters", Org, Loc),
        RelationSchema::new("award_received", Per, Award),
        RelationSchema::new("shares_border", Loc, Loc).symmetric(),
    ]
}

pub fn count_law() -> Outcome {
    let mut rng = gen::rng(0x5eed_0001);
    let schemas = schemas();
    let mut totals = BTreeMap::new();
    for i in 0..1000 {
        let clusters = rng.random_range(0..8);
        let s = gen::sentence(&mut rng, &format!("s{i}"), &EntityType::ALL, clusters);
        let schema = schemas.choose(&mut rng).expect("schemas");

        // brute-force ordered typed pairs of distinct clusters
        let mut brute = Vec::new();
        for (a, x) in s.entities.iter().enumerate() {
            for (b, y) in s.entities.iter().enumerate() {
                if a != b && x.entity_type == schema.subject_type && y.entity_type == schema.object_type {
                    brute.push(EntityPair::new(&x.entity_ref, &y.entity_ref));
                }
            }
        }
        let asserted: BTreeSet<EntityPair> = brute.iter().filter(|_| rng.random_bool(0.3)).cloned().collect();
        let expresses = !asserted.is_empty() && rng.random_bool(0.7);
        let v = SentenceVerdict {
            sentence_id: s.sentence_id.clone(),
            relation_name: schema.name.clone(),
            final_decision: if expresses { Decision::Expresses } else { Decision::NotExpresses },
            final_pairs: if expresses { asserted.clone() } else { BTreeSet::new() },
            final_entities: s.entities.clone(),
        };
        let facts = verdict_facts(&v, schema).map_err(|e| format!("sentence {i}: {e}"))?;
        let pos = facts.iter().filter(|f| f.label == Label::Positive).count();
        let neg = facts.len() - pos;
        ensure!(pos + neg == brute.len(), "sentence {i} ({}): {pos}+{neg} facts, brute force {}", schema.name, brute.len());
        let keys: BTreeSet<EntityPair> = facts.iter().map(|f| f.pair()).collect();
        ensure!(keys == brute.iter().cloned().collect(), "sentence {i}: fact pairs differ from the enumerated pairs");
        if expresses {
            let mut expected: BTreeSet<EntityPair> = asserted.clone();
            if schema.symmetric {
                expected.extend(asserted.iter().map(EntityPair::reversed));
            }
            ensure!(pos == expected.len(), "sentence {i}: {pos} positives, expected {}", expected.len());
        } else {
            ensure!(pos == 0, "sentence {i}: not_expresses verdict produced positives");
        }
        *totals.entry(schema.name.clone()).or_insert(0usize) += facts.len();
    }
    let total: usize = totals.values().sum();
    Ok(format!("1000 sentences, {total} facts over {} relations, all counts exact", totals.len()))
}
