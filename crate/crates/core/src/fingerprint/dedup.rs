use std::collections::{HashSet, VecDeque};

use super::{normalize_key, Criterion};
use crate::gateway::cosine;
use crate::parallel::map_cpu;

/// Connected components of an undirected graph given as adjacency lists.
/// Members are ascending; components are ordered by their first member.
pub fn connected_components(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Single-linkage clustering: items are linked when their cosine similarity
/// is at least `threshold`.
pub fn cluster_by_similarity(vectors: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
    let rows: Vec<usize> = (0..vectors.len()).collect();
    let upper = map_cpu(&rows, |&i| {
        (i + 1..vectors.len())
            .filter(|&j| cosine(&vectors[i], &vectors[j]) >= threshold)
            .collect::<Vec<usize>>()
    });
    let mut adjacency = vec![Vec::new(); vectors.len()];
    for (i, js) in upper.into_iter().enumerate() {
        for j in js {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    connected_components(&adjacency)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupCluster {
    pub members: Vec<usize>,
    /// first occurrence of each normalized (fact, scope) pair
    pub survivors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub clusters: Vec<DedupCluster>,
}

impl DedupOutcome {
    pub fn survivor_count(&self) -> usize {
        self.clusters.iter().map(|c| c.survivors.len()).sum()
    }
}

/// Cluster criteria by embedding similarity, then drop exact normalized
/// (fact, scope) repeats inside each cluster keeping the earliest.
pub fn dedup(criteria: &[Criterion], embeddings: &[Vec<f64>], threshold: f64) -> DedupOutcome {
    assert_eq!(
        criteria.len(),
        embeddings.len(),
        "one embedding per criterion"
    );
    let clusters = cluster_by_similarity(embeddings, threshold)
        .into_iter()
        .map(|members| {
            let mut seen = HashSet::new();
            let survivors = members
                .iter()
                .copied()
                .filter(|&i| {
                    let c = &criteria[i];
                    seen.insert((
                        normalize_key(&c.fact),
                        c.scope.as_deref().map(normalize_key).unwrap_or_default(),
                    ))
                })
                .collect();
            DedupCluster { members, survivors }
        })
        .collect();
    DedupOutcome { clusters }
}
