//! Dependency graph utilities shared by the resolver and the repository
//! builder. Graphs map each node to the set of nodes it depends on; edges to
//! names outside the graph are ignored.

use std::collections::{BTreeMap, BTreeSet};

pub type DepGraph = BTreeMap<String, BTreeSet<String>>;

/// Dependencies-first order, ties broken by name. On a cycle, returns the
/// nodes of one cycle with the first node repeated at the end.
pub fn topo_order(graph: &DepGraph) -> Result<Vec<String>, Vec<String>> {
    let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (node, deps) in graph {
        let inside: Vec<&str> = deps
            .iter()
            .map(String::as_str)
            .filter(|d| graph.contains_key(*d) && *d != node.as_str())
            .collect();
        pending.insert(node, inside.len());
        for d in inside {
            dependents.entry(d).or_default().push(node);
        }
        if deps.contains(node) {
            return Err(vec![node.clone(), node.clone()]);
        }
    }

    let mut ready: BTreeSet<&str> = pending
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut order = Vec::with_capacity(graph.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.to_string());
        pending.remove(next);
        for dep in dependents.get(next).into_iter().flatten() {
            let n = pending.get_mut(dep).expect("dependent is pending");
            *n -= 1;
            if *n == 0 {
                ready.insert(dep);
            }
        }
    }
    if pending.is_empty() {
        Ok(order)
    } else {
        Err(find_cycle(graph, &pending.keys().copied().collect()))
    }
}

/// Every node left after Kahn's algorithm has a dependency that is also
/// left, so following the smallest such dependency must revisit a node.
fn find_cycle(graph: &DepGraph, stuck: &BTreeSet<&str>) -> Vec<String> {
    let mut path: Vec<&str> = Vec::new();
    let mut at = *stuck.first().expect("non-empty");
    loop {
        if let Some(pos) = path.iter().position(|n| *n == at) {
            let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
            cycle.push(at.to_string());
            return cycle;
        }
        path.push(at);
        at = graph[at]
            .iter()
            .map(String::as_str)
            .find(|d| stuck.contains(d))
            .expect("stuck node has a stuck dependency");
    }
}

/// `seeds` plus everything that transitively depends on one of them.
pub fn reverse_closure(graph: &DepGraph, seeds: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = seeds.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for (node, deps) in graph {
            if !out.contains(node) && deps.iter().any(|d| out.contains(d)) {
                out.insert(node.clone());
                changed = true;
            }
        }
    }
    out
}
