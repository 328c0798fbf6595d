//! Min-cost flow by successive shortest paths with node potentials.
//!
//! Costs are integers. Augmentation continues while the cheapest
//! source-to-sink path has negative cost, which yields a minimum-cost flow
//! over all flow values. Dijkstra pops ties by node index so the result is a
//! deterministic function of the arc insertion order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

const INF: i64 = i64::MAX / 4;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: i64,
    cost: i64,
}

#[derive(Debug, Clone)]
pub(crate) struct MinCostFlow {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        MinCostFlow { arcs: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    /// Adds an arc and returns its id (the reverse arc is `id ^ 1`).
    pub fn add_arc(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.arcs.push(Arc { to: from, cap: 0, cost: -cost });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow_on(&self, arc: usize) -> i64 {
        self.arcs[arc ^ 1].cap
    }

    fn initial_potentials(&self, source: usize) -> Vec<i64> {
        // SPFA; the network has no negative cycles
        let n = self.adj.len();
        let mut dist = vec![INF; n];
        let mut queued = vec![false; n];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        queued[source] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for &a in &self.adj[u] {
                let arc = &self.arcs[a];
                if arc.cap > 0 && dist[u] + arc.cost < dist[arc.to] {
                    dist[arc.to] = dist[u] + arc.cost;
                    if !queued[arc.to] {
                        queued[arc.to] = true;
                        queue.push_back(arc.to);
                    }
                }
            }
        }
        dist.iter().map(|&d| if d >= INF { 0 } else { d }).collect()
    }

    /// Augments along shortest paths while they have negative cost. Returns the total cost.
    pub fn run_negative_paths(&mut self, source: usize, sink: usize) -> i64 {
        let n = self.adj.len();
        let mut potential = self.initial_potentials(source);
        let mut total = 0i64;
        loop {
            let mut dist = vec![INF; n];
            let mut prev_arc = vec![usize::MAX; n];
            let mut heap = BinaryHeap::new();
            dist[source] = 0;
            heap.push(Reverse((0i64, source)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &a in &self.adj[u] {
                    let arc = &self.arcs[a];
                    if arc.cap <= 0 {
                        continue;
                    }
                    let nd = d + arc.cost + potential[u] - potential[arc.to];
                    if nd < dist[arc.to] {
                        dist[arc.to] = nd;
                        prev_arc[arc.to] = a;
                        heap.push(Reverse((nd, arc.to)));
                    }
                }
            }
            if dist[sink] >= INF {
                break;
            }
            for v in 0..n {
                if dist[v] < INF {
                    potential[v] += dist[v];
                }
            }
            let path_cost = potential[sink] - potential[source];
            if path_cost >= 0 {
                break;
            }
            let mut bottleneck = INF;
            let mut v = sink;
            while v != source {
                let a = prev_arc[v];
                bottleneck = bottleneck.min(self.arcs[a].cap);
                v = self.arcs[a ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let a = prev_arc[v];
                self.arcs[a].cap -= bottleneck;
                self.arcs[a ^ 1].cap += bottleneck;
                v = self.arcs[a ^ 1].to;
            }
            total += bottleneck * path_cost;
        }
        total
    }
}
