//! Ordered ternary trees with chronicles, sign tables and index functions.
//!
//! A tree of `J` generations is grown from a single root by replacing, at each
//! generation, one terminal node with three children (left, middle, right).
//! The growth order (the chronicle) is part of the identity of the tree.
//! Node ids are assigned in creation order: the root is `0` and generation
//! `k` creates nodes `3k-2, 3k-1, 3k`.
//!
//! Debug dump format: one tree per line, the chronicle written as the
//! parenthesized ids of the expanded nodes, e.g. `(0)(1)(4)`.

use std::fmt;

use rand::Rng;

use crate::resonance::{c_set_member, integer_phase, BoxRange, Threshold};
use crate::{Error, Result};

/// Default cap on enumerated generations.
pub const J_MAX_ENUMERATION: usize = 6;
/// Default cap on the number of index functions materialized in one call.
pub const MAX_ASSIGNMENTS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Left,
    Middle,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub parent: Option<usize>,
    pub position: Option<Position>,
    pub children: Option<[usize; 3]>,
    pub generation_born: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderedTree {
    nodes: Vec<Node>,
    chronicle: Vec<usize>,
}

impl OrderedTree {
    pub fn root() -> OrderedTree {
        OrderedTree {
            nodes: vec![Node { parent: None, position: None, children: None, generation_born: 0 }],
            chronicle: Vec::new(),
        }
    }

    /// Rebuilds a tree by replaying its chronicle.
    pub fn from_chronicle(chronicle: &[usize]) -> Result<OrderedTree> {
        let mut t = OrderedTree::root();
        for &id in chronicle {
            t = t.expand(id)?;
        }
        Ok(t)
    }

    pub fn generations(&self) -> usize {
        self.chronicle.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn chronicle(&self) -> &[usize] {
        &self.chronicle
    }

    pub fn children(&self, id: usize) -> Option<[usize; 3]> {
        self.nodes[id].children
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.nodes[id].children.is_none()
    }

    /// Gives terminal node `id` three children.
    pub fn expand(&self, id: usize) -> Result<OrderedTree> {
        if id >= self.nodes.len() || !self.is_terminal(id) {
            return Err(Error::Precondition(format!("node {id} is not a terminal node")));
        }
        let mut t = self.clone();
        let generation = t.chronicle.len() + 1;
        let base = t.nodes.len();
        for pos in [Position::Left, Position::Middle, Position::Right] {
            t.nodes.push(Node { parent: Some(id), position: Some(pos), children: None, generation_born: generation });
        }
        t.nodes[id].children = Some([base, base + 1, base + 2]);
        t.chronicle.push(id);
        Ok(t)
    }

    /// Nodes in depth-first order with children visited left, middle, right.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some([l, m, r]) = self.nodes[id].children {
                stack.push(r);
                stack.push(m);
                stack.push(l);
            }
        }
        out
    }

    /// Terminal nodes in depth-first order; this is the leaf order of band tuples.
    pub fn leaves(&self) -> Vec<usize> {
        self.preorder().into_iter().filter(|&id| self.is_terminal(id)).collect()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_some()).count()
    }

    /// Descendants of `id`, including `id`.
    pub fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(a) = stack.pop() {
            out.push(a);
            if let Some(ch) = self.nodes[a].children {
                stack.extend(ch);
            }
        }
        out
    }

    /// Ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    pub fn dump(&self) -> String {
        self.chronicle.iter().map(|id| format!("({id})")).collect()
    }

    pub fn parse_dump(line: &str) -> Result<OrderedTree> {
        let mut ids = Vec::new();
        let mut rest = line.trim();
        while !rest.is_empty() {
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.split_once(')'))
                .ok_or_else(|| Error::Config(format!("malformed tree dump '{line}'")))?;
            ids.push(inner.0.trim().parse::<usize>().map_err(|e| Error::Config(format!("bad node id: {e}")))?);
            rest = inner.1.trim_start();
        }
        OrderedTree::from_chronicle(&ids)
    }
}

impl fmt::Display for OrderedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

/// All chronicles with `j` generations, in depth-first expansion order.
pub fn enumerate_trees(j: usize) -> Result<Vec<OrderedTree>> {
    enumerate_trees_capped(j, J_MAX_ENUMERATION)
}

pub fn enumerate_trees_capped(j: usize, j_max: usize) -> Result<Vec<OrderedTree>> {
    if j == 0 {
        return Err(Error::Domain("trees need at least one generation".into()));
    }
    if j > j_max {
        return Err(Error::ResourceGuard(format!("J={j} exceeds the enumeration cap {j_max}")));
    }
    let mut out = Vec::with_capacity(double_factorial(2 * j - 1) as usize);
    fn grow(t: OrderedTree, j: usize, out: &mut Vec<OrderedTree>) {
        if t.generations() == j {
            out.push(t);
            return;
        }
        for leaf in t.leaves() {
            grow(t.expand(leaf).expect("leaf is terminal"), j, out);
        }
    }
    grow(OrderedTree::root(), j, &mut out);
    Ok(out)
}

pub fn double_factorial(k: usize) -> u64 {
    (1..=k as u64).rev().step_by(2).product()
}

/// `psgn` and `fsgn` for every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignTable {
    pub psgn: Vec<i8>,
    pub fsgn: Vec<i8>,
}

pub fn compute_signs(t: &OrderedTree) -> SignTable {
    let n = t.node_count();
    let mut psgn = vec![1i8; n];
    let mut fsgn = vec![1i8; n];
    for id in t.preorder() {
        let node = &t.nodes[id];
        if node.position == Some(Position::Middle) {
            psgn[id] = -1;
        }
        // A node's children inherit its final sign, with the middle child flipped.
        if let Some(p) = node.parent {
            fsgn[id] = fsgn[p] * psgn[id];
        }
    }
    SignTable { psgn, fsgn }
}

/// Extra constraints on the phases of generations after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainFilter {
    /// Generation `j + 1` must lie outside `C_j`.
    ComplementChain,
    /// Every prefix sum must satisfy `|μ̃_k| >= margin`.
    Margin(i64),
    None,
}

/// Integer phases per generation. `mu[k]` belongs to generation `k + 1` and
/// carries the final sign of the node expanded there.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    pub mu: Vec<i64>,
    pub mu_tilde: Vec<i64>,
    pub mu_hat: Vec<f64>,
}

impl PhaseRecord {
    pub fn from_mu(mu: Vec<i64>) -> PhaseRecord {
        let mut mu_tilde = Vec::with_capacity(mu.len());
        let mut mu_hat = Vec::with_capacity(mu.len());
        let (mut acc, mut prod) = (0i64, 1.0f64);
        for &m in &mu {
            acc += m;
            prod *= acc as f64;
            mu_tilde.push(acc);
            mu_hat.push(prod);
        }
        PhaseRecord { mu, mu_tilde, mu_hat }
    }

    pub fn last_hat(&self) -> f64 {
        *self.mu_hat.last().unwrap_or(&1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexAssignment {
    /// Box index of every node, by node id.
    pub freq: Vec<i64>,
    pub phases: PhaseRecord,
}

impl IndexAssignment {
    pub fn root_value(&self) -> i64 {
        self.freq[0]
    }

    /// Recomputes the phase record from the frequency map.
    pub fn recompute_phases(t: &OrderedTree, freq: &[i64], thr: &Threshold) -> PhaseRecord {
        let signs = compute_signs(t);
        let mu = t
            .chronicle()
            .iter()
            .map(|&a| {
                let [c1, c2, c3] = t.children(a).expect("expanded node");
                signs.fsgn[a] as i64 * integer_phase(thr.form, freq[a], freq[c1], freq[c2], freq[c3])
            })
            .collect();
        PhaseRecord::from_mu(mu)
    }

    /// Checks the defining constraints; returns the first violation.
    pub fn validate(&self, t: &OrderedTree, thr: &Threshold) -> Result<()> {
        for &a in t.chronicle() {
            let [c1, c2, c3] = t.children(a).expect("expanded node");
            let f = &self.freq;
            if (f[a] - (f[c1] - f[c2] + f[c3])).abs() > 1 {
                return Err(Error::Precondition(format!("node {a}: convolution constraint fails")));
            }
            if (f[c1] - f[a]).abs() <= 1 || (f[c3] - f[a]).abs() <= 1 {
                return Err(Error::Precondition(format!("node {a}: resonant expansion")));
            }
        }
        if let Some(&m1) = self.phases.mu.first() {
            if (m1.abs() as f64) <= thr.n {
                return Err(Error::Precondition("root phase below threshold".into()));
            }
        }
        if IndexAssignment::recompute_phases(t, &self.freq, thr) != self.phases {
            return Err(Error::Precondition("phase record out of date".into()));
        }
        Ok(())
    }
}

/// Allowed boxes per node: a bitmask over the search range.
pub type BoxMask = Vec<bool>;

/// Search over index functions of one tree.
pub struct IndexSearch<'a> {
    tree: &'a OrderedTree,
    fsgn: Vec<i8>,
    range: BoxRange,
    thr: Threshold,
    filter: ChainFilter,
    reach: Vec<BoxMask>,
    lists: Vec<Vec<i64>>,
    max_phase: i64,
}

impl<'a> IndexSearch<'a> {
    /// `leaf_support[id]`, when given for a terminal node, restricts that leaf's box.
    pub fn new(
        tree: &'a OrderedTree,
        range: BoxRange,
        thr: Threshold,
        filter: ChainFilter,
        leaf_support: &dyn Fn(usize) -> Option<BoxMask>,
    ) -> IndexSearch<'a> {
        let fsgn = compute_signs(tree).fsgn;
        let w = range.len();
        let mut reach: Vec<BoxMask> = vec![Vec::new(); tree.node_count()];
        // Children are created after their parents, so reverse id order is bottom-up.
        for id in (0..tree.node_count()).rev() {
            reach[id] = match tree.children(id) {
                None => leaf_support(id).unwrap_or_else(|| vec![true; w]),
                Some([c1, c2, c3]) => reachable(&reach[c1], &reach[c2], &reach[c3], range),
            };
        }
        let edge = range.lo.abs().max(range.hi.abs());
        // Bounds both phase forms for boxes inside the range.
        let max_phase = 2 * edge * edge + 8 * edge + 8;
        let lists = reach
            .iter()
            .map(|m| m.iter().enumerate().filter(|(_, &on)| on).map(|(i, _)| range.lo + i as i64).collect())
            .collect();
        IndexSearch { tree, fsgn, range, thr, filter, reach, lists, max_phase }
    }

    pub fn reach(&self, id: usize) -> &BoxMask {
        &self.reach[id]
    }

    fn allowed(&self, id: usize, n: i64) -> bool {
        self.range.contains(n) && self.reach[id][(n - self.range.lo) as usize]
    }

    /// Visits every index function with root value `n_root`.
    pub fn for_each(&self, n_root: i64, mut f: impl FnMut(&[i64], &[i64])) {
        if !self.allowed(0, n_root) {
            return;
        }
        let mut freq = vec![0i64; self.tree.node_count()];
        freq[0] = n_root;
        let mut mu = Vec::with_capacity(self.tree.generations());
        self.descend(0, &mut freq, &mut mu, 0, &mut f);
    }

    fn descend(&self, k: usize, freq: &mut [i64], mu: &mut Vec<i64>, acc: i64, f: &mut impl FnMut(&[i64], &[i64])) {
        let chron = self.tree.chronicle();
        if k == chron.len() {
            f(freq, mu);
            return;
        }
        let a = chron[k];
        let [c1, c2, c3] = self.tree.children(a).expect("expanded node");
        let na = freq[a];
        for &n1 in &self.lists[c1] {
            if (n1 - na).abs() <= 1 {
                continue;
            }
            for &n3 in &self.lists[c3] {
                if (n3 - na).abs() <= 1 {
                    continue;
                }
                for delta in [1, 0, -1] {
                    let n2 = n1 + n3 - na - delta;
                    if !self.allowed(c2, n2) {
                        continue;
                    }
                    let m = self.fsgn[a] as i64 * integer_phase(self.thr.form, na, n1, n2, n3);
                    let acc2 = acc + m;
                    if !self.generation_ok(k, m, acc, acc2, mu.first().copied()) {
                        continue;
                    }
                    freq[c1] = n1;
                    freq[c2] = n2;
                    freq[c3] = n3;
                    mu.push(m);
                    self.descend(k + 1, freq, mu, acc2, f);
                    mu.pop();
                }
            }
        }
    }

    /// Generation `k + 1` with phase `m`, prefix sums `acc` (before) and `acc2` (after).
    fn generation_ok(&self, k: usize, m: i64, acc: i64, acc2: i64, mu1: Option<i64>) -> bool {
        let mu1 = mu1.unwrap_or(m);
        let here = if k == 0 {
            (m.abs() as f64) > self.thr.n
        } else {
            match self.filter {
                ChainFilter::None => true,
                ChainFilter::Margin(w) => acc2.abs() >= w,
                ChainFilter::ComplementChain => !c_set_member(k, acc as f64, acc2 as f64, mu1 as f64),
            }
        };
        let margin_ok = match self.filter {
            ChainFilter::Margin(w) => acc2.abs() >= w,
            _ => true,
        };
        let lookahead = self.filter != ChainFilter::ComplementChain
            || k + 1 >= self.tree.generations()
            || self.next_feasible(k + 1, acc2, mu1);
        here && margin_ok && lookahead
    }

    /// Whether some later phase can still leave `C_{k}`; one step of lookahead.
    fn next_feasible(&self, k: usize, acc: i64, mu1: i64) -> bool {
        let need = ((2 * k + 3) as f64).powi(3) * (acc.abs().max(mu1.abs()) as f64).powf(0.99);
        (acc.abs() + self.max_phase) as f64 > need
    }
    pub fn collect(&self, n_root: i64, cap: usize) -> Result<Vec<IndexAssignment>> {
        let mut out = Vec::new();
        let mut overflow = false;
        self.for_each(n_root, |freq, mu| {
            if out.len() >= cap {
                overflow = true;
                return;
            }
            out.push(IndexAssignment { freq: freq.to_vec(), phases: PhaseRecord::from_mu(mu.to_vec()) });
        });
        if overflow {
            return Err(Error::ResourceGuard(format!("more than {cap} index functions")));
        }
        Ok(out)
    }

    /// Random index functions by rejection sampling, generation by generation.
    /// Child offsets from the parent box are drawn log-uniformly so that every
    /// phase scale is hit; the draw is not uniform over index functions.
    pub fn sample(&self, n_root: i64, count: usize, rng: &mut impl Rng, max_attempts: usize) -> Vec<IndexAssignment> {
        let mut out = Vec::with_capacity(count);
        if !self.allowed(0, n_root) {
            return out;
        }
        let chron = self.tree.chronicle();
        let r = self.range;
        let mut attempts = 0;
        'outer: while out.len() < count && attempts < max_attempts {
            let mut freq = vec![0i64; self.tree.node_count()];
            freq[0] = n_root;
            let mut mu: Vec<i64> = Vec::new();
            let mut acc = 0i64;
            for (k, &a) in chron.iter().enumerate() {
                let [c1, c2, c3] = self.tree.children(a).expect("expanded node");
                let mut placed = false;
                let na = freq[a];
                for _ in 0..(1 << 16) {
                    attempts += 1;
                    let n1 = na + log_uniform_offset(rng, r.len() as f64);
                    let n3 = na + log_uniform_offset(rng, r.len() as f64);
                    let delta = rng.random_range(-1i64..=1);
                    let n2 = n1 + n3 - na - delta;
                    if (n1 - na).abs() <= 1 || (n3 - na).abs() <= 1 {
                        continue;
                    }
                    if !self.allowed(c1, n1) || !self.allowed(c2, n2) || !self.allowed(c3, n3) {
                        continue;
                    }
                    let m = self.fsgn[a] as i64 * integer_phase(self.thr.form, na, n1, n2, n3);
                    if !self.generation_ok(k, m, acc, acc + m, mu.first().copied()) {
                        continue;
                    }
                    freq[c1] = n1;
                    freq[c2] = n2;
                    freq[c3] = n3;
                    acc += m;
                    mu.push(m);
                    placed = true;
                    break;
                }
                if !placed {
                    continue 'outer;
                }
            }
            out.push(IndexAssignment { freq, phases: PhaseRecord::from_mu(mu) });
        }
        out
    }
}

/// Signed offset with `2 <= |d| < span`, log-uniform in `|d|`.
fn log_uniform_offset(rng: &mut impl Rng, span: f64) -> i64 {
    let mag = rng.random_range(2f64.ln()..span.max(3.0).ln()).exp().floor() as i64;
    if rng.random_bool(0.5) { mag } else { -mag }
}

/// Boxes `x` with `x ≈ y1 - y2 + y3` for some `y_i` allowed by the masks.
fn reachable(m1: &BoxMask, m2: &BoxMask, m3: &BoxMask, range: BoxRange) -> BoxMask {
    let w = range.len() as i64;
    let idx = |m: &BoxMask| -> Vec<i64> { (0..w).filter(|&i| m[i as usize]).collect() };
    let (i1, i2, i3) = (idx(m1), idx(m2), idx(m3));
    // Offsets relative to range.lo: x - lo = (y1-lo) - (y2-lo) + (y3-lo) + delta.
    let mut sum13 = vec![false; (2 * w).max(1) as usize];
    for &a in &i1 {
        for &c in &i3 {
            sum13[(a + c) as usize] = true;
        }
    }
    let mut out = vec![false; w as usize];
    for (s, &on) in sum13.iter().enumerate() {
        if !on {
            continue;
        }
        for &b in &i2 {
            for delta in -1..=1 {
                let x = s as i64 - b + delta;
                if x >= 0 && x < w {
                    out[x as usize] = true;
                }
            }
        }
    }
    out
}

/// Exhaustive index functions with every box in `[-window, window]`.
pub fn enumerate_index_functions(
    t: &OrderedTree,
    n_root: i64,
    window: i64,
    thr: &Threshold,
    filter: ChainFilter,
) -> Result<Vec<IndexAssignment>> {
    let range = BoxRange::symmetric(window);
    if !range.contains(n_root) {
        return Err(Error::Range(format!("root box {n_root} outside window {window}")));
    }
    IndexSearch::new(t, range, *thr, filter, &|_| None).collect(n_root, MAX_ASSIGNMENTS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonance::{enumerate_triples, PhaseForm, TripleMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn counts_and_sizes() {
        let expected = [1, 3, 15, 105, 945, 10395];
        for j in 1..=6 {
            let trees = enumerate_trees(j).unwrap();
            assert_eq!(trees.len(), expected[j - 1]);
            assert_eq!(double_factorial(2 * j - 1), expected[j - 1] as u64);
            let distinct: HashSet<_> = trees.iter().map(|t| t.chronicle().to_vec()).collect();
            assert_eq!(distinct.len(), trees.len());
            for t in &trees {
                assert_eq!(t.node_count(), 3 * j + 1);
                assert_eq!(t.internal_count(), j);
                assert_eq!(t.leaves().len(), 2 * j + 1);
            }
        }
        assert!(matches!(enumerate_trees(7), Err(Error::ResourceGuard(_))));
    }

    #[test]
    fn chronicle_round_trip_and_dump() {
        for t in enumerate_trees(4).unwrap() {
            let again = OrderedTree::from_chronicle(t.chronicle()).unwrap();
            assert_eq!(again, t);
            assert_eq!(OrderedTree::parse_dump(&t.dump()).unwrap(), t);
        }
        let golden: Vec<String> = enumerate_trees(3).unwrap().iter().map(|t| t.dump()).collect();
        assert_eq!(
            golden,
            [
                "(0)(1)(4)", "(0)(1)(5)", "(0)(1)(6)", "(0)(1)(2)", "(0)(1)(3)",
                "(0)(2)(1)", "(0)(2)(4)", "(0)(2)(5)", "(0)(2)(6)", "(0)(2)(3)",
                "(0)(3)(1)", "(0)(3)(2)", "(0)(3)(4)", "(0)(3)(5)", "(0)(3)(6)",
            ]
        );
        assert!(OrderedTree::parse_dump("(0)(0)").is_err());
        assert!(OrderedTree::parse_dump("(0)x").is_err());
    }

    #[test]
    fn partial_order_axioms() {
        for t in enumerate_trees(4).unwrap() {
            let roots = t.nodes().iter().filter(|n| n.parent.is_none()).count();
            assert_eq!(roots, 1);
            for id in 0..t.node_count() {
                let anc = t.ancestors(id);
                // Ancestors form a chain ending at the root.
                assert_eq!(anc.last().copied().unwrap_or(0), 0);
                for w in anc.windows(2) {
                    assert_eq!(t.nodes()[w[0]].parent, Some(w[1]));
                }
            }
            // Each chronicle step expands a node that was terminal at the time and
            // was born earlier.
            for (k, &a) in t.chronicle().iter().enumerate() {
                assert!(t.nodes()[a].generation_born <= k);
            }
        }
    }

    #[test]
    fn sign_examples() {
        let t = &enumerate_trees(1).unwrap()[0];
        let s = compute_signs(t);
        assert_eq!(s.psgn, vec![1, 1, -1, 1]);
        assert_eq!(s.fsgn, s.psgn);
        // Middle child of the middle child.
        let t = OrderedTree::from_chronicle(&[0, 2]).unwrap();
        let s = compute_signs(&t);
        let mm = t.children(2).unwrap()[1];
        assert_eq!((s.psgn[mm], s.fsgn[mm]), (-1, 1));
        for j in 1..=3 {
            for t in enumerate_trees(j).unwrap() {
                let s = compute_signs(&t);
                for id in 0..t.node_count() {
                    let middles = t
                        .ancestors(id)
                        .into_iter()
                        .filter(|&p| t.nodes()[p].position == Some(Position::Middle))
                        .count();
                    let parity = if middles % 2 == 0 { 1 } else { -1 };
                    assert_eq!(s.fsgn[id] * s.psgn[id], parity);
                }
            }
        }
    }

    #[test]
    fn one_generation_matches_far_triples() {
        let t = &enumerate_trees(1).unwrap()[0];
        for form in [PhaseForm::Exact, PhaseForm::Factored] {
            let thr = Threshold::new(2.0).unwrap().with_form(form);
            let got = enumerate_index_functions(t, 0, 3, &thr, ChainFilter::ComplementChain).unwrap();
            let triples = enumerate_triples(0, 3, &thr, TripleMode::FarPhase).unwrap();
            let a: HashSet<_> = got.iter().map(|x| (x.freq[1], x.freq[2], x.freq[3])).collect();
            let b: HashSet<_> = triples.iter().map(|x| (x.n1, x.n2, x.n3)).collect();
            assert_eq!(a, b);
            assert_eq!(got.len(), triples.len());
        }
    }

    #[test]
    fn root_threshold_beyond_window_gives_nothing() {
        let t = &enumerate_trees(1).unwrap()[0];
        let w = 3;
        let thr = Threshold::new(2.0 * (2.0 * w as f64).powi(2) + 1.0).unwrap().with_form(PhaseForm::Factored);
        assert!(enumerate_index_functions(t, 0, w, &thr, ChainFilter::None).unwrap().is_empty());
    }

    #[test]
    fn assignments_satisfy_invariants() {
        let thr = Threshold::new(3.0).unwrap();
        for t in enumerate_trees(2).unwrap() {
            for n in [-1, 0, 2] {
                let all = enumerate_index_functions(&t, n, 4, &thr, ChainFilter::None).unwrap();
                let chain = enumerate_index_functions(&t, n, 4, &thr, ChainFilter::ComplementChain).unwrap();
                assert!(chain.len() <= all.len());
                for a in all.iter().chain(&chain) {
                    a.validate(&t, &thr).unwrap();
                    assert_eq!(a.phases.mu_tilde[1], a.phases.mu[0] + a.phases.mu[1]);
                }
                for a in &chain {
                    assert!(a.phases.last_hat() != 0.0);
                }
            }
        }
    }

    #[test]
    fn generation_constraint_hits_a_terminal_of_the_previous_tree() {
        let thr = Threshold::new(1.0).unwrap();
        for t in enumerate_trees(3).unwrap() {
            let mut prefix = OrderedTree::root();
            for &a in t.chronicle() {
                assert!(prefix.leaves().contains(&a));
                prefix = prefix.expand(a).unwrap();
            }
            let list = enumerate_index_functions(&t, 0, 3, &thr, ChainFilter::None).unwrap();
            for a in list.iter().take(50) {
                assert_eq!(a.phases.mu.len(), 3);
            }
        }
    }

    #[test]
    fn prefix_sums_versus_non_descendant_sums() {
        // μ̃ of a node taken as the sum over internal nodes outside its proper
        // subtree, compared with chronicle prefix sums.
        let thr = Threshold::new(1.0).unwrap();
        let non_descendant_hat = |t: &OrderedTree, a: &IndexAssignment| -> f64 {
            let mu_of: std::collections::HashMap<usize, i64> =
                t.chronicle().iter().copied().zip(a.phases.mu.iter().copied()).collect();
            t.chronicle()
                .iter()
                .map(|&node| {
                    let below: HashSet<usize> = t.subtree(node).into_iter().filter(|&x| x != node).collect();
                    t.chronicle().iter().filter(|x| !below.contains(x)).map(|x| mu_of[x]).sum::<i64>() as f64
                })
                .product()
        };
        for j in 1..=2 {
            for t in enumerate_trees(j).unwrap() {
                for a in enumerate_index_functions(&t, 0, 3, &thr, ChainFilter::None).unwrap() {
                    assert_eq!(non_descendant_hat(&t, &a), a.phases.last_hat());
                }
            }
        }
        // Chains agree at J = 3; the branching tree (0)(1)(3) does not in general.
        let chain = OrderedTree::parse_dump("(0)(1)(4)").unwrap();
        for a in enumerate_index_functions(&chain, 0, 3, &thr, ChainFilter::None).unwrap().iter().take(2000) {
            assert_eq!(non_descendant_hat(&chain, a), a.phases.last_hat());
        }
        let branching = OrderedTree::parse_dump("(0)(1)(3)").unwrap();
        let list = enumerate_index_functions(&branching, 0, 3, &thr, ChainFilter::None).unwrap();
        assert!(list.iter().any(|a| non_descendant_hat(&branching, a) != a.phases.last_hat()));
    }

    #[test]
    fn leaf_support_prunes_to_reachable_boxes() {
        let t = enumerate_trees(2).unwrap().remove(0);
        let range = BoxRange::symmetric(8);
        let mut mask = vec![false; range.len()];
        mask[(0 - range.lo) as usize] = true;
        mask[(1 - range.lo) as usize] = true;
        let thr = Threshold::new(1.0).unwrap();
        let search = IndexSearch::new(&t, range, thr, ChainFilter::None, &|id| t.is_terminal(id).then(|| mask.clone()));
        let full = IndexSearch::new(&t, range, thr, ChainFilter::None, &|_| None);
        for n in range.iter() {
            let pruned = search.collect(n, MAX_ASSIGNMENTS).unwrap();
            let expected: Vec<_> = full
                .collect(n, MAX_ASSIGNMENTS)
                .unwrap()
                .into_iter()
                .filter(|a| t.leaves().iter().all(|&l| a.freq[l] == 0 || a.freq[l] == 1))
                .collect();
            assert_eq!(pruned, expected);
        }
    }

    #[test]
    fn sampling_respects_constraints() {
        let thr = Threshold::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in enumerate_trees(2).unwrap().iter() {
            let search = IndexSearch::new(t, BoxRange::symmetric(60), thr, ChainFilter::ComplementChain, &|_| None);
            let got = search.sample(0, 5, &mut rng, 50_000_000);
            assert_eq!(got.len(), 5, "tree {t}");
            for a in &got {
                a.validate(t, &thr).unwrap();
                let p = &a.phases;
                assert!(!c_set_member(1, p.mu_tilde[0] as f64, p.mu_tilde[1] as f64, p.mu[0] as f64));
            }
        }
        for t in enumerate_trees(3).unwrap().iter() {
            let search = IndexSearch::new(t, BoxRange::symmetric(12), thr, ChainFilter::Margin(40), &|_| None);
            let got = search.sample(1, 5, &mut rng, 5_000_000);
            assert_eq!(got.len(), 5, "tree {t}");
            for a in &got {
                a.validate(t, &thr).unwrap();
                assert!(a.phases.mu_tilde.iter().all(|m| m.abs() >= 40));
            }
        }
    }

    #[test]
    fn sampled_assignments_are_enumerated() {
        let thr = Threshold::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = OrderedTree::parse_dump("(0)(2)").unwrap();
        let all = enumerate_index_functions(&t, 0, 6, &thr, ChainFilter::Margin(10)).unwrap();
        let search = IndexSearch::new(&t, BoxRange::symmetric(6), thr, ChainFilter::Margin(10), &|_| None);
        for a in search.sample(0, 20, &mut rng, 1_000_000) {
            assert!(all.contains(&a));
        }
    }
}
