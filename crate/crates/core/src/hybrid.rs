//! Integration of four per-test adjacency structures:
//! `hybrid = (w1 ∩ w2 ∩ w3) ∪ w4`, evaluated per `(source, target, lag)`,
//! followed by removal of bidirectional pairs with `w4` taking priority.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{directed_cycle_edges, LaggedAdjacency, LinkEntry, Mark, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// The direction present in `w4` was kept.
    W4,
    /// `w4` has neither direction; the stronger one was kept.
    Strength,
    /// `w4` has both directions; both were kept and marked conflict.
    W4Both,
    /// Directed lag-0 edges on a cycle were marked conflict.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConflict {
    /// Unordered pair of positions, smaller first.
    pub pair: (usize, usize),
    pub lag: usize,
    /// Kept direction `(source, target)`, `None` when both were kept.
    pub kept: Option<(usize, usize)>,
    pub rule: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridResult {
    pub matrix: LaggedAdjacency,
    pub provenance: BTreeMap<(usize, usize, usize), Provenance>,
    pub resolved_conflicts: Vec<ResolvedConflict>,
}

fn consensus_mark(entries: [&LinkEntry; 3]) -> Option<Mark> {
    let marks: Vec<Mark> = entries.iter().filter_map(|e| e.mark).collect();
    if marks.is_empty() {
        None
    } else if marks.contains(&Mark::Conflict) {
        Some(Mark::Conflict)
    } else if marks.iter().all(|&m| m == Mark::Directed) {
        Some(Mark::Directed)
    } else {
        Some(Mark::Unoriented)
    }
}

/// Sorted before summing so permuting `w1..w3` is bit-exact.
fn order_free_mean(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    (v[0] + v[1] + v[2]) / 3.0
}

/// Set union of `w4` with the three-way intersection of `w1..w3`.
/// A link in `w4` takes `w4`'s strength, p-value and mark; a consensus-only
/// link takes the mean strength and p-value of the three.
pub fn integrate(
    w1: &LaggedAdjacency,
    w2: &LaggedAdjacency,
    w3: &LaggedAdjacency,
    w4: &LaggedAdjacency,
) -> Result<HybridResult> {
    w1.same_universe(w2)?;
    w1.same_universe(w3)?;
    w1.same_universe(w4)?;
    let mut matrix = LaggedAdjacency::new(w4.variables.clone(), w4.tau_max);
    let mut provenance = BTreeMap::new();
    let keys: BTreeSet<(usize, usize, usize)> = w1
        .entries
        .keys()
        .chain(w4.entries.keys())
        .copied()
        .collect();
    for k in keys {
        let consensus = match (w1.entries.get(&k), w2.entries.get(&k), w3.entries.get(&k)) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        let (entry, prov) = match (w4.entries.get(&k), consensus) {
            (Some(e), Some(_)) => (*e, Provenance::Both),
            (Some(e), None) => (*e, Provenance::W4),
            (None, Some(es)) => (
                LinkEntry {
                    strength: order_free_mean(es.map(|e| e.strength)),
                    p_value: order_free_mean(es.map(|e| e.p_value)),
                    mark: consensus_mark(es),
                },
                Provenance::Consensus,
            ),
            (None, None) => continue,
        };
        matrix.insert(k.0, k.1, k.2, entry);
        provenance.insert(k, prov);
    }
    Ok(HybridResult {
        matrix,
        provenance,
        resolved_conflicts: Vec::new(),
    })
}

/// For every pair linked in both directions at the same lag: keep the
/// direction found in `w4`; if `w4` has neither, keep the larger |strength|
/// (ties go to the smaller source); if `w4` has both, keep both as conflict.
/// Directed lag-0 edges left on a cycle are then marked conflict.
pub fn resolve_bidirectional(h: &HybridResult, w4: &LaggedAdjacency) -> HybridResult {
    let mut out = h.clone();
    let mut resolved = Vec::new();
    let pairs: Vec<(usize, usize, usize)> = h
        .matrix
        .entries
        .keys()
        .filter(|&&(s, t, l)| s < t && h.matrix.contains(t, s, l))
        .copied()
        .collect();
    for (i, j, lag) in pairs {
        let forward = (i, j);
        let backward = (j, i);
        let (in_f, in_b) = (w4.contains(i, j, lag), w4.contains(j, i, lag));
        let (kept, rule) = match (in_f, in_b) {
            (true, true) => (None, Resolution::W4Both),
            (true, false) => (Some(forward), Resolution::W4),
            (false, true) => (Some(backward), Resolution::W4),
            (false, false) => {
                let sf = h.matrix.get(i, j, lag).unwrap().strength.abs();
                let sb = h.matrix.get(j, i, lag).unwrap().strength.abs();
                (Some(if sb > sf { backward } else { forward }), Resolution::Strength)
            }
        };
        match kept {
            None => {
                if lag == 0 {
                    for (s, t) in [forward, backward] {
                        out.matrix.entries.get_mut(&(s, t, 0)).unwrap().mark = Some(Mark::Conflict);
                    }
                }
            }
            Some((s, t)) => {
                out.matrix.remove(t, s, lag);
                out.provenance.remove(&(t, s, lag));
                if lag == 0 {
                    out.matrix.entries.get_mut(&(s, t, 0)).unwrap().mark = Some(Mark::Directed);
                }
            }
        }
        resolved.push(ResolvedConflict {
            pair: (i, j),
            lag,
            kept,
            rule,
        });
    }
    let directed = out.matrix.directed_lag0();
    for (s, t) in directed_cycle_edges(out.matrix.n_vars(), &directed) {
        out.matrix.entries.get_mut(&(s, t, 0)).unwrap().mark = Some(Mark::Conflict);
        resolved.push(ResolvedConflict {
            pair: (s.min(t), s.max(t)),
            lag: 0,
            kept: Some((s, t)),
            rule: Resolution::Cycle,
        });
    }
    out.resolved_conflicts = h.resolved_conflicts.clone();
    for r in resolved {
        if !out.resolved_conflicts.contains(&r) {
            out.resolved_conflicts.push(r);
        }
    }
    out
}

/// `resolve_bidirectional(integrate(..), w4)`.
pub fn hybrid(
    w1: &LaggedAdjacency,
    w2: &LaggedAdjacency,
    w3: &LaggedAdjacency,
    w4: &LaggedAdjacency,
) -> Result<HybridResult> {
    Ok(resolve_bidirectional(&integrate(w1, w2, w3, w4)?, w4))
}
