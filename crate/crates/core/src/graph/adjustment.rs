//! d-separation and the adjustment criterion.
//!
//! Blocking is decided by a reachability search over (node, direction) states,
//! so the cost is linear in the size of the graph. The adjustment criterion is
//! checked through the proper back-door graph: drop the first edge of every
//! proper causal path from the exposure set, then require d-separation of the
//! exposures from the outcome together with `Z ∩ forb = ∅`.

use std::collections::VecDeque;

use super::{Dag, GraphError, NodeSet};

pub(crate) const MAX_ENUMERATION_CANDIDATES: usize = 20;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Entered the node from one of its children.
    Up,
    /// Entered the node from one of its parents.
    Down,
}

fn check_disjoint(sets: &[&NodeSet]) -> Result<(), GraphError> {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if let Some(v) = a.iter().find(|v| b.contains(v)) {
                return Err(GraphError::NotDisjoint(v.to_string()));
            }
        }
    }
    Ok(())
}

impl Dag {
    /// Active-trail search from `a` to `b` given `z`, ignoring edges for
    /// which `skip(from, to)` holds.
    fn d_connected_masks(
        &self,
        a: &[bool],
        b: &[bool],
        z: &[bool],
        skip: impl Fn(usize, usize) -> bool,
    ) -> bool {
        let n = self.len();
        // Ancestors of Z in the edge-filtered graph open colliders.
        let mut anc = z.to_vec();
        let mut stack: Vec<usize> = (0..n).filter(|&v| z[v]).collect();
        while let Some(v) = stack.pop() {
            for &p in self.parents_idx(v) {
                if !skip(p, v) && !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }

        let mut seen_up = vec![false; n];
        let mut seen_down = vec![false; n];
        let mut queue: VecDeque<(usize, Dir)> =
            (0..n).filter(|&v| a[v]).map(|v| (v, Dir::Up)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            let seen = match dir {
                Dir::Up => &mut seen_up[v],
                Dir::Down => &mut seen_down[v],
            };
            if *seen {
                continue;
            }
            *seen = true;
            if b[v] && !z[v] {
                return true;
            }
            match dir {
                Dir::Up if !z[v] => {
                    for &p in self.parents_idx(v) {
                        if !skip(p, v) {
                            queue.push_back((p, Dir::Up));
                        }
                    }
                    for &c in self.children_idx(v) {
                        if !skip(v, c) {
                            queue.push_back((c, Dir::Down));
                        }
                    }
                }
                Dir::Up => {}
                Dir::Down => {
                    if !z[v] {
                        for &c in self.children_idx(v) {
                            if !skip(v, c) {
                                queue.push_back((c, Dir::Down));
                            }
                        }
                    }
                    if anc[v] {
                        for &p in self.parents_idx(v) {
                            if !skip(p, v) {
                                queue.push_back((p, Dir::Up));
                            }
                        }
                    }
                }
            }
        }
        false
    }

    /// Whether `z` d-separates `a` from `b`.
    pub fn d_separated(&self, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> Result<bool, GraphError> {
        check_disjoint(&[a, b, z])?;
        let (am, bm, zm) = (self.mask_of(a)?, self.mask_of(b)?, self.mask_of(z)?);
        Ok(!self.d_connected_masks(&am, &bm, &zm, |_, _| false))
    }

    fn causal_nodes_mask(&self, a: &[bool], b: &[bool]) -> Vec<bool> {
        let n = self.len();
        // Reachable from A along directed paths that leave A immediately and never return.
        let mut from_a = vec![false; n];
        let mut stack = Vec::new();
        for v in (0..n).filter(|&v| a[v]) {
            for &c in self.children_idx(v) {
                if !a[c] && !from_a[c] {
                    from_a[c] = true;
                    stack.push(c);
                }
            }
        }
        while let Some(v) = stack.pop() {
            for &c in self.children_idx(v) {
                if !a[c] && !from_a[c] {
                    from_a[c] = true;
                    stack.push(c);
                }
            }
        }
        // Reaching B along directed paths avoiding A.
        let mut to_b: Vec<bool> = (0..n).map(|v| b[v] && !a[v]).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&v| to_b[v]).collect();
        while let Some(v) = stack.pop() {
            for &p in self.parents_idx(v) {
                if !a[p] && !to_b[p] {
                    to_b[p] = true;
                    stack.push(p);
                }
            }
        }
        (0..n).map(|v| from_a[v] && to_b[v]).collect()
    }

    fn forbidden_mask(&self, a: &[bool], b: &[bool]) -> Vec<bool> {
        let cn = self.causal_nodes_mask(a, b);
        let mut forb = self.closure(&cn, |v| self.children_idx(v));
        for (f, &x) in forb.iter_mut().zip(a) {
            *f |= x;
        }
        forb
    }

    /// Nodes on proper causal paths from `a` to `b`, excluding `a`.
    pub fn causal_nodes(&self, a: &NodeSet, b: &NodeSet) -> Result<NodeSet, GraphError> {
        check_disjoint(&[a, b])?;
        let (am, bm) = (self.mask_of(a)?, self.mask_of(b)?);
        Ok(self.set_of(&self.causal_nodes_mask(&am, &bm)))
    }

    /// Descendants of the causal nodes, together with `a`.
    pub fn forbidden_nodes(&self, a: &NodeSet, b: &NodeSet) -> Result<NodeSet, GraphError> {
        check_disjoint(&[a, b])?;
        let (am, bm) = (self.mask_of(a)?, self.mask_of(b)?);
        Ok(self.set_of(&self.forbidden_mask(&am, &bm)))
    }

    fn is_valid_adjustment_masks(
        &self,
        a: &[bool],
        b: &[bool],
        cn: &[bool],
        forb: &[bool],
        z: &[bool],
    ) -> bool {
        if z.iter().zip(forb).any(|(&z, &f)| z && f) {
            return false;
        }
        !self.d_connected_masks(a, b, z, |from, to| a[from] && cn[to])
    }

    /// Adjustment criterion: `z` contains no forbidden node and blocks every
    /// proper non-causal path from `a` to `b`.
    pub fn is_valid_adjustment(
        &self,
        a: &NodeSet,
        b: &str,
        z: &NodeSet,
    ) -> Result<bool, GraphError> {
        let bset: NodeSet = [b].into_iter().collect();
        check_disjoint(&[a, &bset, z])?;
        let (am, bm, zm) = (self.mask_of(a)?, self.mask_of(&bset)?, self.mask_of(z)?);
        let cn = self.causal_nodes_mask(&am, &bm);
        let forb = self.forbidden_mask(&am, &bm);
        Ok(self.is_valid_adjustment_masks(&am, &bm, &cn, &forb, &zm))
    }

    /// Every subset of `candidates` that is a valid adjustment set relative to
    /// `(a, b)`, ordered by size and then lexicographically by sorted labels.
    pub fn enumerate_valid_adjustment_sets(
        &self,
        a: &NodeSet,
        b: &str,
        candidates: &NodeSet,
    ) -> Result<Vec<NodeSet>, GraphError> {
        let bset: NodeSet = [b].into_iter().collect();
        check_disjoint(&[a, &bset, candidates])?;
        if candidates.len() > MAX_ENUMERATION_CANDIDATES {
            return Err(GraphError::TooManyCandidates(candidates.len()));
        }
        let (am, bm) = (self.mask_of(a)?, self.mask_of(&bset)?);
        let cand: Vec<usize> = candidates
            .iter()
            .map(|c| self.require(c))
            .collect::<Result<_, _>>()?;
        let cn = self.causal_nodes_mask(&am, &bm);
        let forb = self.forbidden_mask(&am, &bm);

        let mut found: Vec<Vec<&str>> = Vec::new();
        let mut zm = vec![false; self.len()];
        for bits in 0u32..(1u32 << cand.len()) {
            for (k, &v) in cand.iter().enumerate() {
                zm[v] = bits & (1 << k) != 0;
            }
            if self.is_valid_adjustment_masks(&am, &bm, &cn, &forb, &zm) {
                let mut ids: Vec<&str> = cand
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| bits & (1 << k) != 0)
                    .map(|(_, &v)| self.id(v))
                    .collect();
                ids.sort_unstable();
                found.push(ids);
            }
        }
        found.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
        Ok(found
            .into_iter()
            .map(|ids| ids.into_iter().collect())
            .collect())
    }
}
