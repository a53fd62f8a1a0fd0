use super::PartiteGraph;

/// Compressed adjacency over the global node index space.
#[derive(Debug, Clone)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    /// Builds from `(from, to)` pairs over `n` nodes. Neighbour lists are
    /// sorted; duplicates are kept unless `dedup` is set.
    pub fn from_pairs(n: usize, pairs: impl Iterator<Item = (u32, u32)> + Clone, dedup: bool) -> Self {
        let mut counts = vec![0usize; n + 1];
        for (a, _) in pairs.clone() {
            counts[a as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut targets = vec![0u32; counts[n]];
        for (a, b) in pairs {
            targets[fill[a as usize]] = b;
            fill[a as usize] += 1;
        }
        let mut csr = Csr { offsets: counts, targets };
        csr.sort_rows(dedup);
        csr
    }

    fn sort_rows(&mut self, dedup: bool) {
        let n = self.len();
        let mut out_offsets = Vec::with_capacity(n + 1);
        out_offsets.push(0);
        let mut write = 0usize;
        for v in 0..n {
            let (lo, hi) = (self.offsets[v], self.offsets[v + 1]);
            self.targets[lo..hi].sort_unstable();
            let mut last = None;
            for i in lo..hi {
                let t = self.targets[i];
                if dedup && last == Some(t) {
                    continue;
                }
                last = Some(t);
                self.targets[write] = t;
                write += 1;
            }
            out_offsets.push(write);
        }
        self.targets.truncate(write);
        self.offsets = out_offsets;
    }

    /// Simple undirected projection: both directions of every edge, self
    /// loops dropped, parallel edges merged.
    pub fn undirected(g: &PartiteGraph) -> Self {
        let offsets = g.offsets();
        let n = g.total_nodes() as usize;
        let pairs = g.edge_types().iter().flat_map(move |et| {
            let (os, od) = (offsets[et.src], offsets[et.dst]);
            et.edges.iter().flat_map(move |&(s, d)| {
                let (a, b) = ((os + s) as u32, (od + d) as u32);
                [(a, b), (b, a)]
            })
        });
        let pairs = pairs.filter(|(a, b)| a != b);
        Self::from_pairs(n, pairs, true)
    }

    /// Directed adjacency over all edge types, keeping parallel edges.
    pub fn directed(g: &PartiteGraph, reverse: bool) -> Self {
        let offsets = g.offsets();
        let n = g.total_nodes() as usize;
        let pairs = g.edge_types().iter().flat_map(move |et| {
            let (os, od) = (offsets[et.src], offsets[et.dst]);
            et.edges.iter().map(move |&(s, d)| {
                let (a, b) = ((os + s) as u32, (od + d) as u32);
                if reverse { (b, a) } else { (a, b) }
            })
        });
        Self::from_pairs(n, pairs, false)
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }
}
