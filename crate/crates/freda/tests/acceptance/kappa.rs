use freda_core::agreement::{kappa, ContingencyTable};
use rand::Rng;

use crate::{ensure, gen, Outcome};

const TOL: f64 = 1e-12;

/// Textbook formula in floating point, used as the reference.
fn reference(t: &ContingencyTable) -> f64 {
    let n = t.total() as f64;
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let po = (a + d) / n;
    let pe = ((a + b) / n) * ((a + c) / n) + ((c + d) / n) * ((b + d) / n);
    if pe == 1.0 {
        return if po == 1.0 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

pub fn suite() -> Outcome {
    let k = |a, b, c, d| kappa(&ContingencyTable { a, b, c, d }).map_err(|e| e.to_string());
    let perfect = k(50, 0, 0, 50)?;
    ensure!((perfect - 1.0).abs() <= TOL, "perfect agreement gave {perfect}");
    let mid = k(40, 10, 10, 40)?;
    ensure!((mid - 0.6).abs() <= TOL, "(40,10,10,40) gave {mid}");

    let mut rng = gen::rng(0x5eed_0002);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        // mix small tables (degenerate margins are likely) with large ones
        let hi = if i % 2 == 0 { 4 } else { 5000 };
        let t = ContingencyTable {
            a: rng.random_range(0..hi),
            b: rng.random_range(0..hi),
            c: rng.random_range(0..hi),
            d: rng.random_range(0..hi),
        };
        if t.total() == 0 {
            continue;
        }
        let v = kappa(&t).map_err(|e| e.to_string())?;
        ensure!((-1.0 - TOL..=1.0 + TOL).contains(&v), "kappa {v} out of range for {t:?}");
        let swapped = kappa(&ContingencyTable { a: t.a, b: t.c, c: t.b, d: t.d }).map_err(|e| e.to_string())?;
        ensure!((v - swapped).abs() <= TOL, "swap changed kappa for {t:?}: {v} vs {swapped}");
        let r = reference(&t);
        ensure!((v - r).abs() <= TOL, "kappa {v} differs from reference {r} for {t:?}");
        worst = worst.max((v - r).abs()).max((v - swapped).abs());
    }
    Ok(format!("1.0 and 0.6 fixtures exact; 10000 random tables in range and swap-invariant, max deviation {worst:.1e}"))
}
