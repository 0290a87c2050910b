//! Dependency graph over module ids.

use std::collections::{BTreeMap, BTreeSet};

/// Adjacency map; every edge endpoint is also a key.
pub type Adjacency = BTreeMap<String, BTreeSet<String>>;

/// Strongly connected components that contain a cycle (size > 1, or a
/// self loop). Node lists are sorted; components are ordered by first node.
pub fn cycles(graph: &Adjacency) -> Vec<Vec<String>> {
    let ids: Vec<&String> = graph.keys().collect();
    let index_of: BTreeMap<&String, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let succ: Vec<Vec<usize>> =
        ids.iter().map(|id| graph[*id].iter().filter_map(|t| index_of.get(t).copied()).collect()).collect();

    let mut tarjan = Tarjan::new(ids.len());
    for v in 0..ids.len() {
        if tarjan.index[v].is_none() {
            tarjan.visit(v, &succ);
        }
    }

    let mut out: Vec<Vec<String>> = tarjan
        .components
        .into_iter()
        .filter(|comp| comp.len() > 1 || succ[comp[0]].contains(&comp[0]))
        .map(|comp| {
            let mut names: Vec<String> = comp.into_iter().map(|i| ids[i].clone()).collect();
            names.sort();
            names
        })
        .collect();
    out.sort();
    out
}

/// Kahn's algorithm with lexicographic tie-breaking. Edges point from a
/// dependent to its dependency (`A --> B`: A uses B); the order lists A first.
pub fn topological_order(graph: &Adjacency) -> Option<Vec<String>> {
    let mut indegree: BTreeMap<&String, usize> = graph.keys().map(|k| (k, 0)).collect();
    for targets in graph.values() {
        for t in targets {
            *indegree.get_mut(t)? += 1;
        }
    }
    let mut ready: BTreeSet<&String> = indegree.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::with_capacity(graph.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.clone());
        for t in &graph[next] {
            let d = indegree.get_mut(t)?;
            *d -= 1;
            if *d == 0 {
                ready.insert(t);
            }
        }
    }
    (order.len() == graph.len()).then_some(order)
}

struct Tarjan {
    counter: usize,
    index: Vec<Option<usize>>,
    low: Vec<usize>,
    on_stack: Vec<bool>,
    stack: Vec<usize>,
    components: Vec<Vec<usize>>,
}

impl Tarjan {
    fn new(n: usize) -> Self {
        Self {
            counter: 0,
            index: vec![None; n],
            low: vec![0; n],
            on_stack: vec![false; n],
            stack: Vec::new(),
            components: Vec::new(),
        }
    }

    // Iterative to stay safe on deep graphs.
    fn visit(&mut self, root: usize, succ: &[Vec<usize>]) {
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        self.open(root);
        while let Some(&mut (v, ref mut next)) = work.last_mut() {
            if *next < succ[v].len() {
                let w = succ[v][*next];
                *next += 1;
                match self.index[w] {
                    None => {
                        self.open(w);
                        work.push((w, 0));
                    }
                    Some(wi) if self.on_stack[w] => self.low[v] = self.low[v].min(wi),
                    _ => {}
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    self.low[parent] = self.low[parent].min(self.low[v]);
                }
                if Some(self.low[v]) == self.index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = self.stack.pop().expect("tarjan stack");
                        self.on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    self.components.push(comp);
                }
            }
        }
    }

    fn open(&mut self, v: usize) {
        self.index[v] = Some(self.counter);
        self.low[v] = self.counter;
        self.counter += 1;
        self.stack.push(v);
        self.on_stack[v] = true;
    }
}
