use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::DedupRelation;
use crate::schema::DatasetId;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Connected components of the relation graph with at least two members,
/// ordered by smallest member id.
pub fn build_components(relations: &[DedupRelation]) -> Vec<BTreeSet<DatasetId>> {
    let mut index: HashMap<&DatasetId, usize> = HashMap::new();
    let mut ids: Vec<&DatasetId> = Vec::new();
    for r in relations {
        for id in [&r.id_a, &r.id_b] {
            index.entry(id).or_insert_with(|| {
                ids.push(id);
                ids.len() - 1
            });
        }
    }
    let mut uf = UnionFind::new(ids.len());
    for r in relations {
        uf.union(index[&r.id_a], index[&r.id_b]);
    }
    let mut groups: BTreeMap<usize, BTreeSet<DatasetId>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let root = uf.find(i);
        groups.entry(root).or_default().insert((*id).clone());
    }
    let mut out: Vec<BTreeSet<DatasetId>> = groups.into_values().filter(|g| g.len() > 1).collect();
    out.sort();
    out
}
