//! Inputs shared by the benchmarks.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use goalcov::fixtures;
use goalcov::minimize::Trace;
use goalcov::{assign_uids, CoverageGoal, GoalKey, GoalUid, HitCountDb};

/// Class bytes, its goals and their UIDs.
pub type Prepared = (Vec<u8>, Vec<CoverageGoal>, BTreeMap<GoalKey, GoalUid>);

/// Every corpus class with a goal on each of its instructions.
pub fn corpus_with_goals() -> Vec<Prepared> {
    let mut db = HitCountDb::default();
    fixtures::corpus()
        .into_iter()
        .map(|f| {
            let goals = fixtures::site_goals(&f.bytes).expect("fixtures parse");
            let uids = assign_uids(&goals, &mut db);
            (f.bytes, goals, uids)
        })
        .collect()
}

/// `n` random traces over `goals` goal names, each hitting about a quarter.
pub fn random_traces(seed: u64, n: usize, goals: u32) -> Vec<Trace> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| Trace::new(&format!("t{i}"), (0..goals).filter(|_| rng.gen_bool(0.25)).map(|g| format!("g{g}"))))
        .collect()
}
