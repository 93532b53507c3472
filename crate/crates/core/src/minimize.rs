//! Greedy test selection over coverage traces.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// A candidate test and the goals it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub goals: BTreeSet<String>,
}

impl Trace {
    pub fn new<I, S>(id: &str, goals: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Trace { id: id.to_owned(), goals: goals.into_iter().map(Into::into).collect() }
    }
}

pub fn parse_traces(text: &str) -> serde_json::Result<Vec<Trace>> {
    serde_json::from_str(text)
}

pub fn traces_to_json(traces: &[Trace]) -> String {
    serde_json::to_string_pretty(traces).expect("traces serialize")
}

/// Sorts by goal count (largest first, ties in input order) and keeps each
/// trace that adds a goal not yet covered.
pub fn greedy_minimize(traces: &[Trace]) -> Vec<Trace> {
    let mut order: Vec<&Trace> = traces.iter().collect();
    order.sort_by_key(|t| std::cmp::Reverse(t.goals.len()));
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    let mut kept = Vec::new();
    for t in order {
        let mut new = false;
        for g in &t.goals {
            new |= covered.insert(g.as_str());
        }
        if new {
            kept.push(t.clone());
        }
    }
    kept
}

/// [`greedy_minimize`] after removing goals that are already covered.
pub fn minimize_against_existing(traces: &[Trace], already_covered: &BTreeSet<String>) -> Vec<Trace> {
    let reduced: Vec<Trace> = traces
        .iter()
        .map(|t| Trace { id: t.id.clone(), goals: t.goals.difference(already_covered).cloned().collect() })
        .filter(|t| !t.goals.is_empty())
        .collect();
    greedy_minimize(&reduced)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(ts: &[Trace]) -> Vec<&str> {
        ts.iter().map(|t| t.id.as_str()).collect()
    }

    #[test]
    fn drops_subsumed_traces() {
        let ts = vec![
            Trace::new("T1", ["g1", "g2", "g3"]),
            Trace::new("T2", ["g1"]),
            Trace::new("T3", ["g4"]),
        ];
        assert_eq!(ids(&greedy_minimize(&ts)), ["T1", "T3"]);
        assert!(greedy_minimize(&[]).is_empty());
    }

    #[test]
    fn ties_keep_input_order() {
        let ts = vec![Trace::new("a", ["x"]), Trace::new("b", ["y"]), Trace::new("c", ["x"])];
        assert_eq!(ids(&greedy_minimize(&ts)), ["a", "b"]);
    }

    #[test]
    fn existing_coverage_is_subtracted() {
        let covered: BTreeSet<String> = (1..=8).map(|i| format!("g{i}")).collect();
        let ts = vec![Trace::new("old", ["g1", "g2"]), Trace::new("nan", ["g1", "g9"])];
        let kept = minimize_against_existing(&ts, &covered);
        assert_eq!(ids(&kept), ["nan"]);
        assert_eq!(kept[0].goals, BTreeSet::from(["g9".to_owned()]));
        assert!(minimize_against_existing(&ts[..1], &covered).is_empty());
    }

    /// The sort-once greedy keeps every "near-duplicate" trace here because
    /// each adds exactly one goal, while two traces suffice.
    #[test]
    fn static_order_can_exceed_logarithmic_factor() {
        let mut ts = vec![Trace::new("D1", (1..=9).map(|g| g.to_string()))];
        for i in 2..=8 {
            ts.push(Trace::new(&format!("D{i}"), (1..=8).chain([i + 8]).map(|g| g.to_string())));
        }
        ts.push(Trace::new("A", (1..=8).map(|g| g.to_string())));
        ts.push(Trace::new("B", (9..=16).map(|g| g.to_string())));
        let kept = greedy_minimize(&ts);
        assert_eq!(kept.len(), 8);
        assert!(kept.len() as f64 > 2.0 * (1.0 + 16f64.ln()));
    }
}
