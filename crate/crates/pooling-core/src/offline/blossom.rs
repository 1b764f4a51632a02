//! Maximum weight matching in general graphs.
//!
//! Primal-dual blossom method (Edmonds), following Galil's survey and the
//! Python reference implementation by Joris van Rantwijk
//! (http://jorisvr.nl/article/maximum-matching); most comments are carried
//! over from there. Adapted to floating point weights: zero-slack tests use
//! a small weight-relative tolerance, dual steps are clamped at zero, and a
//! stage that stops making progress aborts with a numeric error instead of
//! spinning. Cardinality is never forced, so an edge only enters the
//! matching when it raises the total weight.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error};
use crate::Result;

/// Marker for "no vertex", "no edge", or "unmatched".
pub(crate) const UNSET: usize = usize::MAX;

/// Compute a maximum weight matching on vertices `0..nvertex`.
///
/// `edges` lists undirected edges `(i, j, w)` with `i != j` and at most one
/// edge per unordered pair. Returns `mate` with `mate[v]` the partner of
/// `v`, or [`UNSET`] if `v` stays single.
pub(crate) fn max_weight_matching(
    nvertex: usize,
    edges: &[(usize, usize, f64)],
) -> Result<Vec<usize>> {
    for &(i, j, w) in edges {
        if i == j || i >= nvertex || j >= nvertex {
            return Err(invalid("matching edge endpoints out of range"));
        }
        if !w.is_finite() {
            return Err(invalid("matching edge weights must be finite"));
        }
    }
    if edges.is_empty() {
        return Ok(vec![UNSET; nvertex]);
    }
    Solver::new(nvertex, edges).solve()
}

// Vertices are numbered 0..nvertex. Non-trivial blossoms are numbered
// nvertex..2*nvertex. Edge endpoints are numbered 0..2*nedge such that
// endpoints 2k and 2k+1 belong to edge k. Terms like sub-blossom and
// T-vertex come from Galil's paper.
struct Solver<'a> {
    nvertex: usize,
    nedge: usize,
    edges: &'a [(usize, usize, f64)],
    /// Slack values at or below this count as zero.
    tol: f64,
    /// endpoint[p] is the vertex to which endpoint p is attached.
    endpoint: Vec<usize>,
    /// neighbend[v] lists the remote endpoints of the edges attached to v.
    neighbend: Vec<Vec<usize>>,
    /// mate[v] is the remote endpoint of v's matched edge (vertex form only
    /// after the final transform in `solve`), or UNSET if v is single.
    mate: Vec<usize>,
    /// label[b] for a top-level blossom b: 0 free, 1 S, 2 T. The label of a
    /// vertex is the label of its top-level blossom. label[v] == 2 for a
    /// vertex inside a T-blossom that is reachable from outside it.
    label: Vec<usize>,
    /// labelend[b] is the remote endpoint of the edge through which b got
    /// its label, or UNSET if b's base vertex is single.
    labelend: Vec<usize>,
    /// inblossom[v] is the top-level blossom containing v.
    inblossom: Vec<usize>,
    /// blossomparent[b] is the immediate parent blossom, UNSET at top level.
    blossomparent: Vec<usize>,
    /// blossomchilds[b] lists the sub-blossoms of b, starting at the base
    /// and going round the cycle.
    blossomchilds: Vec<Vec<usize>>,
    /// blossombase[b] is b's base vertex.
    blossombase: Vec<usize>,
    /// blossomendps[b][i] is the local endpoint of blossomchilds[b][i] on
    /// the edge towards blossomchilds[b][i+1] (wrapping).
    blossomendps: Vec<Vec<usize>>,
    /// Least-slack edge bookkeeping for the delta2/delta3 computations.
    bestedge: Vec<usize>,
    blossombestedges: Vec<Vec<usize>>,
    unusedblossoms: Vec<usize>,
    /// dualvar[v] = 2u(v) for a vertex; for a blossom b, z(b) enters edge
    /// slacks doubled, matching the convention of the reference code.
    dualvar: Vec<f64>,
    /// allowedge[k] means edge k is known to have zero slack.
    allowedge: Vec<bool>,
    /// Queue of newly discovered S-vertices.
    queue: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(nvertex: usize, edges: &'a [(usize, usize, f64)]) -> Solver<'a> {
        let nedge = edges.len();
        let maxweight = edges.iter().fold(0.0f64, |m, e| m.max(e.2));
        let endpoint = (0..2 * nedge)
            .map(|p| {
                if p % 2 == 0 {
                    edges[p / 2].0
                } else {
                    edges[p / 2].1
                }
            })
            .collect();
        let mut neighbend = vec![vec![]; nvertex];
        for (k, &(i, j, _)) in edges.iter().enumerate() {
            neighbend[i].push(2 * k + 1);
            neighbend[j].push(2 * k);
        }
        let mut dualvar = vec![maxweight; nvertex];
        dualvar.extend(vec![0.0; nvertex]);
        let mut blossombase: Vec<usize> = (0..nvertex).collect();
        blossombase.extend(vec![UNSET; nvertex]);
        Solver {
            nvertex,
            nedge,
            edges,
            tol: 1e-10 * maxweight.max(1.0),
            endpoint,
            neighbend,
            mate: vec![UNSET; nvertex],
            label: vec![0; 2 * nvertex],
            labelend: vec![UNSET; 2 * nvertex],
            inblossom: (0..nvertex).collect(),
            blossomparent: vec![UNSET; 2 * nvertex],
            blossomchilds: vec![vec![]; 2 * nvertex],
            blossombase,
            blossomendps: vec![vec![]; 2 * nvertex],
            bestedge: vec![UNSET; 2 * nvertex],
            blossombestedges: vec![vec![]; 2 * nvertex],
            unusedblossoms: (nvertex..2 * nvertex).collect(),
            dualvar,
            allowedge: vec![false; nedge],
            queue: vec![],
        }
    }

    /// 2 * slack of edge k, ignoring blossom duals (meaningless inside one).
    #[inline]
    fn slack(&self, k: usize) -> f64 {
        let (i, j, w) = self.edges[k];
        self.dualvar[i] + self.dualvar[j] - 2.0 * w
    }

    /// Leaf vertices of (possibly trivial) blossom b.
    fn blossom_leaves(&self, b: usize) -> Vec<usize> {
        let mut leaves = vec![];
        if b < self.nvertex {
            leaves.push(b);
        } else {
            for &t in &self.blossomchilds[b] {
                if t < self.nvertex {
                    leaves.push(t);
                } else {
                    leaves.extend(self.blossom_leaves(t));
                }
            }
        }
        leaves
    }

    /// Assign label t to the top-level blossom containing vertex w, reached
    /// through the edge with remote endpoint p.
    fn assign_label(&mut self, w: usize, t: usize, p: usize) {
        let b = self.inblossom[w];
        assert!(self.label[w] == 0 && self.label[b] == 0);
        self.label[w] = t;
        self.label[b] = t;
        self.labelend[w] = p;
        self.labelend[b] = p;
        self.bestedge[w] = UNSET;
        self.bestedge[b] = UNSET;
        if t == 1 {
            // b became an S-blossom; add its vertices to the queue.
            let leaves = self.blossom_leaves(b);
            self.queue.extend(leaves);
        } else if t == 2 {
            // b became a T-blossom; assign label S to its mate. (If b is
            // non-trivial, only its base has an external mate.)
            let base = self.blossombase[b];
            assert!(self.mate[base] != UNSET);
            let mbase = self.mate[base];
            let endpoint = self.endpoint[mbase];
            self.assign_label(endpoint, 1, mbase ^ 1);
        }
    }

    /// Trace back from vertices v and w to discover either a new blossom or
    /// an augmenting path. Returns the base of the new blossom, or UNSET.
    fn scan_blossom(&mut self, v: usize, w: usize) -> usize {
        let mut path = vec![];
        let mut base = UNSET;
        let mut v = v;
        let mut w = w;
        while v != UNSET || w != UNSET {
            // Look for a breadcrumb in v's blossom or put a new breadcrumb.
            let mut b = self.inblossom[v];
            if self.label[b] & 4 != 0 {
                base = self.blossombase[b];
                break;
            }
            assert_eq!(self.label[b], 1);
            path.push(b);
            self.label[b] = 5;
            // Trace one step back.
            assert_eq!(self.labelend[b], self.mate[self.blossombase[b]]);
            if self.labelend[b] == UNSET {
                // The base of blossom b is single; stop tracing this path.
                v = UNSET;
            } else {
                v = self.endpoint[self.labelend[b]];
                b = self.inblossom[v];
                assert_eq!(self.label[b], 2);
                // b is a T-blossom; trace one more step back.
                assert!(self.labelend[b] != UNSET);
                v = self.endpoint[self.labelend[b]];
            }
            // Alternate between both paths.
            if w != UNSET {
                core::mem::swap(&mut v, &mut w);
            }
        }
        // Remove breadcrumbs.
        for b in path {
            self.label[b] = 1;
        }
        base
    }

    /// Construct a new blossom with the given base, containing edge k which
    /// connects a pair of S vertices. Label it S, set its dual to zero, and
    /// relabel its T-vertices to S.
    fn add_blossom(&mut self, base: usize, k: usize) {
        let (mut v, mut w, _) = self.edges[k];
        let bb = self.inblossom[base];
        let mut bv = self.inblossom[v];
        let mut bw = self.inblossom[w];

        let b = self.unusedblossoms.pop().unwrap();
        self.blossombase[b] = base;
        self.blossomparent[b] = UNSET;
        self.blossomparent[bb] = b;

        self.blossomchilds[b] = vec![];
        self.blossomendps[b] = vec![];

        // Trace back from v to base.
        while bv != bb {
            self.blossomparent[bv] = b;
            self.blossomchilds[b].push(bv);
            self.blossomendps[b].push(self.labelend[bv]);
            assert!(
                self.label[bv] == 2
                    || (self.label[bv] == 1
                        && self.labelend[bv] == self.mate[self.blossombase[bv]])
            );
            assert!(self.labelend[bv] != UNSET);
            v = self.endpoint[self.labelend[bv]];
            bv = self.inblossom[v];
        }

        // Reverse the lists and add the endpoint that connects the S pair.
        self.blossomchilds[b].push(bb);
        self.blossomchilds[b].reverse();
        self.blossomendps[b].reverse();
        self.blossomendps[b].push(2 * k);

        // Trace back from w to base.
        while bw != bb {
            self.blossomparent[bw] = b;
            self.blossomchilds[b].push(bw);
            self.blossomendps[b].push(self.labelend[bw] ^ 1);
            assert!(
                self.label[bw] == 2
                    || (self.label[bw] == 1
                        && self.labelend[bw] == self.mate[self.blossombase[bw]])
            );
            assert!(self.labelend[bw] != UNSET);
            w = self.endpoint[self.labelend[bw]];
            bw = self.inblossom[w];
        }

        assert_eq!(self.label[bb], 1);
        self.label[b] = 1;
        self.labelend[b] = self.labelend[bb];
        self.dualvar[b] = 0.0;

        // Relabel vertices.
        for v in self.blossom_leaves(b) {
            if self.label[self.inblossom[v]] == 2 {
                // This T-vertex turns into an S-vertex by joining an
                // S-blossom; add it to the queue.
                self.queue.push(v);
            }
            self.inblossom[v] = b;
        }

        // Compute blossombestedges[b].
        let mut bestedgeto = vec![UNSET; 2 * self.nvertex];
        let childs = self.blossomchilds[b].clone();
        for bv in childs {
            let mut nblists: Vec<Vec<usize>> = vec![];
            if self.blossombestedges[bv].is_empty() {
                // No least-slack list for this sub-blossom; walk its leaves.
                for v in self.blossom_leaves(bv) {
                    nblists.push(self.neighbend[v].iter().map(|p| p / 2).collect());
                }
            } else {
                nblists.push(self.blossombestedges[bv].clone());
            }
            for nblist in nblists {
                for k in nblist {
                    let (mut i, mut j, _) = self.edges[k];
                    if self.inblossom[j] == b {
                        core::mem::swap(&mut i, &mut j);
                    }
                    let _ = i;
                    let bj = self.inblossom[j];
                    if bj != b && self.label[bj] == 1 {
                        let bestto = bestedgeto[bj];
                        if bestto == UNSET || self.slack(k) < self.slack(bestto) {
                            bestedgeto[bj] = k;
                        }
                    }
                }
            }
            // Forget the sub-blossom's own least-slack edges.
            self.blossombestedges[bv] = vec![];
            self.bestedge[bv] = UNSET;
        }
        self.blossombestedges[b] = bestedgeto.into_iter().filter(|&k| k != UNSET).collect();

        // Select bestedge[b].
        self.bestedge[b] = UNSET;
        for idx in 0..self.blossombestedges[b].len() {
            let k = self.blossombestedges[b][idx];
            let be = self.bestedge[b];
            if be == UNSET || self.slack(k) < self.slack(be) {
                self.bestedge[b] = k;
            }
        }
    }

    /// Expand the given top-level blossom.
    fn expand_blossom(&mut self, b: usize, endstage: bool) {
        // Convert sub-blossoms into top-level blossoms.
        for s in self.blossomchilds[b].clone() {
            self.blossomparent[s] = UNSET;
            if s < self.nvertex {
                self.inblossom[s] = s;
            } else if endstage && self.dualvar[s] <= self.tol {
                // Recursively expand this sub-blossom.
                self.expand_blossom(s, endstage);
            } else {
                for v in self.blossom_leaves(s) {
                    self.inblossom[v] = s;
                }
            }
        }

        // If we expand a T-blossom during a stage, its sub-blossoms must be
        // relabeled.
        if !endstage && self.label[b] == 2 {
            // Start at the sub-blossom through which the expanding blossom
            // obtained its label and relabel until we reach the base.
            assert!(self.labelend[b] != UNSET);
            let entrychild = self.inblossom[self.endpoint[self.labelend[b] ^ 1]];

            // Decide in which direction to go round the blossom.
            let mut j = self.blossomchilds[b]
                .iter()
                .position(|&r| r == entrychild)
                .unwrap() as i32;
            let jstep: i32;
            let endptrick: usize;
            if j & 1 != 0 {
                // Odd start index: go forward and wrap.
                j -= self.blossomchilds[b].len() as i32;
                jstep = 1;
                endptrick = 0;
            } else {
                // Even start index: go backward.
                jstep = -1;
                endptrick = 1;
            }

            // Move along the blossom until we get to the base.
            let mut p = self.labelend[b];
            while j != 0 {
                // Relabel the T-sub-blossom.
                self.label[self.endpoint[p ^ 1]] = 0;
                let q = pos_neg_index(&self.blossomendps[b], j - endptrick as i32);
                self.label[self.endpoint[q ^ endptrick ^ 1]] = 0;
                let ep = self.endpoint[p ^ 1];
                self.assign_label(ep, 2, p);

                // Step to the next S-sub-blossom and note its forward endpoint.
                self.allowedge[q / 2] = true;
                j += jstep;
                p = pos_neg_index(&self.blossomendps[b], j - endptrick as i32) ^ endptrick;

                // Step to the next T-sub-blossom.
                self.allowedge[p / 2] = true;
                j += jstep;
            }

            // Relabel the base T-sub-blossom without stepping through to its
            // mate (so don't call assign_label).
            let bv = pos_neg_index(&self.blossomchilds[b], j);
            self.label[self.endpoint[p ^ 1]] = 2;
            self.label[bv] = 2;
            self.labelend[self.endpoint[p ^ 1]] = p;
            self.labelend[bv] = p;
            self.bestedge[bv] = UNSET;

            // Continue along the blossom until we get back to entrychild.
            j += jstep;
            while pos_neg_index(&self.blossomchilds[b], j) != entrychild {
                // Examine the vertices of the sub-blossom to see whether it
                // is reachable from a neighbouring S-vertex outside the
                // expanding blossom.
                let bv = pos_neg_index(&self.blossomchilds[b], j);
                if self.label[bv] == 1 {
                    // This sub-blossom just got label S through one of its
                    // neighbours; leave it.
                    j += jstep;
                    continue;
                }
                let mut v = UNSET;
                for t in self.blossom_leaves(bv) {
                    v = t;
                    if self.label[v] != 0 {
                        break;
                    }
                }
                // If the sub-blossom contains a reachable vertex, assign
                // label T to the sub-blossom.
                if self.label[v] != 0 {
                    assert_eq!(self.label[v], 2);
                    assert_eq!(self.inblossom[v], bv);
                    self.label[v] = 0;
                    self.label[self.endpoint[self.mate[self.blossombase[bv]]]] = 0;
                    let lblend = self.labelend[v];
                    self.assign_label(v, 2, lblend);
                }
                j += jstep;
            }
        }

        // Recycle the blossom number.
        self.label[b] = UNSET;
        self.labelend[b] = UNSET;
        self.blossombase[b] = UNSET;
        self.bestedge[b] = UNSET;
        self.blossomchilds[b] = vec![];
        self.blossomendps[b] = vec![];
        self.blossombestedges[b] = vec![];
        self.unusedblossoms.push(b);
    }

    /// Swap matched/unmatched edges over an alternating path through blossom
    /// b between vertex v and the base vertex.
    fn augment_blossom(&mut self, b: usize, v: usize) {
        // Bubble up through the blossom tree from vertex v to an immediate
        // sub-blossom of b.
        let mut t = v;
        while self.blossomparent[t] != b {
            t = self.blossomparent[t];
        }

        // Recursively deal with the first sub-blossom.
        if t >= self.nvertex {
            self.augment_blossom(t, v);
        }

        // Decide in which direction to go round the blossom.
        let i = self.blossomchilds[b].iter().position(|&r| r == t).unwrap();
        let mut j = i as i32;
        let jstep: i32;
        let endptrick: usize;
        if i & 1 != 0 {
            // Odd start index: go forward and wrap.
            j -= self.blossomchilds[b].len() as i32;
            jstep = 1;
            endptrick = 0;
        } else {
            // Even start index: go backward.
            jstep = -1;
            endptrick = 1;
        }

        // Move along the blossom until we get to the base.
        while j != 0 {
            // Step to the next sub-blossom and augment it recursively.
            j += jstep;
            let mut t = pos_neg_index(&self.blossomchilds[b], j);
            let p = pos_neg_index(&self.blossomendps[b], j - endptrick as i32) ^ endptrick;
            if t >= self.nvertex {
                let endp = self.endpoint[p];
                self.augment_blossom(t, endp);
            }

            // Step to the next sub-blossom and augment it recursively.
            j += jstep;
            t = pos_neg_index(&self.blossomchilds[b], j);
            if t >= self.nvertex {
                let endp = self.endpoint[p ^ 1];
                self.augment_blossom(t, endp);
            }

            // Match the edge connecting those sub-blossoms.
            self.mate[self.endpoint[p]] = p ^ 1;
            self.mate[self.endpoint[p ^ 1]] = p;
        }

        // Rotate the sub-blossom list to put the new base at the front.
        rotate(&mut self.blossomchilds[b], i);
        rotate(&mut self.blossomendps[b], i);
        self.blossombase[b] = self.blossombase[self.blossomchilds[b][0]];
        assert_eq!(self.blossombase[b], v);
    }

    /// Swap matched/unmatched edges over an alternating path between two
    /// single vertices. The augmenting path runs through edge k, which
    /// connects a pair of S vertices.
    fn augment_matching(&mut self, k: usize) {
        let (v, w, _) = self.edges[k];
        for &(sv, pv) in &[(v, 2 * k + 1), (w, 2 * k)] {
            // Match vertex sv to remote endpoint pv, then trace back until
            // reaching a single vertex, swapping matched and unmatched edges.
            let mut s = sv;
            let mut p = pv;
            loop {
                let bs = self.inblossom[s];
                assert_eq!(self.label[bs], 1);
                assert_eq!(self.labelend[bs], self.mate[self.blossombase[bs]]);

                // Augment through the S-blossom from s to base.
                if bs >= self.nvertex {
                    self.augment_blossom(bs, s);
                }
                self.mate[s] = p;

                // Trace one step back.
                if self.labelend[bs] == UNSET {
                    // Reached a single vertex; stop.
                    break;
                }
                let t = self.endpoint[self.labelend[bs]];
                let bt = self.inblossom[t];
                assert_eq!(self.label[bt], 2);
                assert!(self.labelend[bt] != UNSET);
                s = self.endpoint[self.labelend[bt]];
                let j = self.endpoint[self.labelend[bt] ^ 1];

                // Augment through the T-blossom from j to base.
                assert_eq!(self.blossombase[bt], t);
                if bt >= self.nvertex {
                    self.augment_blossom(bt, j);
                }
                self.mate[j] = self.labelend[bt];

                // Keep the opposite endpoint; it will be assigned to mate[s]
                // in the next step.
                p = self.labelend[bt] ^ 1;
            }
        }
    }

    /// Matched weight of the current (endpoint-form) mate array.
    fn primal_value(&self) -> f64 {
        let mut total = 0.0;
        for v in 0..self.nvertex {
            if self.mate[v] != UNSET && v < self.endpoint[self.mate[v]] {
                total += self.edges[self.mate[v] / 2].2;
            }
        }
        total
    }

    /// Dual objective: sum of vertex duals plus blossom duals weighted by
    /// their pair capacity.
    fn dual_value(&self) -> f64 {
        let mut total = 0.0;
        for v in 0..self.nvertex {
            total += self.dualvar[v] / 2.0;
        }
        for b in self.nvertex..2 * self.nvertex {
            if self.blossombase[b] != UNSET && self.blossomparent[b] == UNSET {
                total += self.dualvar[b] * ((self.blossom_leaves(b).len() / 2) as f64);
            }
        }
        total
    }

    fn numeric_failure(&self, message: impl Into<String>) -> Error {
        Error::NumericFailure {
            message: message.into(),
            primal: self.primal_value(),
            dual: self.dual_value(),
        }
    }

    /// Check the complementary slackness conditions within tolerance.
    fn verify_optimum(&self) -> Result<()> {
        let vtol = self.tol * 100.0;
        for k in 0..self.nedge {
            let (i, j, w) = self.edges[k];
            let mut s = self.dualvar[i] + self.dualvar[j] - 2.0 * w;
            let mut iblossoms = vec![i];
            while self.blossomparent[*iblossoms.last().unwrap()] != UNSET {
                let top = *iblossoms.last().unwrap();
                iblossoms.push(self.blossomparent[top]);
            }
            let mut jblossoms = vec![j];
            while self.blossomparent[*jblossoms.last().unwrap()] != UNSET {
                let top = *jblossoms.last().unwrap();
                jblossoms.push(self.blossomparent[top]);
            }
            iblossoms.reverse();
            jblossoms.reverse();
            for (&bi, &bj) in iblossoms.iter().zip(jblossoms.iter()) {
                if bi != bj {
                    break;
                }
                s += 2.0 * self.dualvar[bi];
            }
            if s < -vtol {
                return Err(self.numeric_failure("matching edge has negative slack"));
            }
            let matched = self.mate[i] / 2 == k || self.mate[j] / 2 == k;
            if matched {
                if self.mate[i] / 2 != k || self.mate[j] / 2 != k {
                    return Err(self.numeric_failure("inconsistent mate pointers"));
                }
                if s.abs() > vtol {
                    return Err(self.numeric_failure("matched edge has nonzero slack"));
                }
            }
        }
        for v in 0..self.nvertex {
            if self.mate[v] == UNSET && self.dualvar[v].abs() > vtol {
                return Err(self.numeric_failure("single vertex has nonzero dual"));
            }
        }
        for b in self.nvertex..2 * self.nvertex {
            if self.blossombase[b] != UNSET
                && self.blossomparent[b] == UNSET
                && self.dualvar[b] > vtol
            {
                // A blossom with positive dual must be full.
                if self.blossomendps[b].len() % 2 != 1 {
                    return Err(self.numeric_failure("blossom with even endpoint count"));
                }
                for (ix, &p) in self.blossomendps[b].iter().enumerate() {
                    if ix % 2 == 1
                        && (self.mate[self.endpoint[p]] != p ^ 1
                            || self.mate[self.endpoint[p ^ 1]] != p)
                    {
                        return Err(self.numeric_failure("positive-dual blossom not full"));
                    }
                }
            }
        }
        Ok(())
    }

    fn solve(mut self) -> Result<Vec<usize>> {
        // Each stage finds an augmenting path and uses it to improve the
        // matching; at most nvertex augmentations are possible.
        for _stage in 0..self.nvertex {
            self.label = vec![0; 2 * self.nvertex];
            self.bestedge = vec![UNSET; 2 * self.nvertex];
            for b in self.nvertex..2 * self.nvertex {
                self.blossombestedges[b] = vec![];
            }
            // Labels were lost, so allowability must be recomputed.
            self.allowedge = vec![false; self.nedge];
            self.queue = vec![];

            // Label single blossoms/vertices with S and put them in the queue.
            for v in 0..self.nvertex {
                if self.mate[v] == UNSET && self.label[self.inblossom[v]] == 0 {
                    self.assign_label(v, 1, UNSET);
                }
            }

            let mut augmented = false;
            // Every substage either augments, allows an edge for the rest of
            // the stage, or expands a blossom, so this many substages means
            // the duals stopped moving.
            let substage_cap = self.nedge + 2 * self.nvertex + 16;
            let mut substages = 0usize;
            loop {
                // A substage looks for an augmenting path; if none exists it
                // pumps slack out of the dual variables and retries.
                substages += 1;
                if substages > substage_cap {
                    return Err(self.numeric_failure("matching dual updates stalled"));
                }

                // Continue labeling until all vertices reachable through an
                // alternating path have a label.
                while !self.queue.is_empty() && !augmented {
                    let v = self.queue.pop().unwrap();
                    assert_eq!(self.label[self.inblossom[v]], 1);
                    for idx in 0..self.neighbend[v].len() {
                        let p = self.neighbend[v][idx];
                        let k = p / 2;
                        let w = self.endpoint[p];
                        if self.inblossom[v] == self.inblossom[w] {
                            // Edge internal to a blossom; ignore.
                            continue;
                        }
                        let mut kslack = 0.0;
                        if !self.allowedge[k] {
                            kslack = self.slack(k);
                            if kslack <= self.tol {
                                self.allowedge[k] = true;
                            }
                        }
                        if self.allowedge[k] {
                            if self.label[self.inblossom[w]] == 0 {
                                // (C1) w is free; label w with T and its mate
                                // with S.
                                self.assign_label(w, 2, p ^ 1);
                            } else if self.label[self.inblossom[w]] == 1 {
                                // (C2) w is an S-vertex in another blossom;
                                // follow back-links to discover either an
                                // augmenting path or a new blossom.
                                let base = self.scan_blossom(v, w);
                                if base != UNSET {
                                    self.add_blossom(base, k);
                                } else {
                                    self.augment_matching(k);
                                    augmented = true;
                                    break;
                                }
                            } else if self.label[w] == 0 {
                                // w is inside a T-blossom but not yet reached
                                // from outside; mark it (needed to relabel
                                // during T-blossom expansion).
                                assert_eq!(self.label[self.inblossom[w]], 2);
                                self.label[w] = 2;
                                self.labelend[w] = p ^ 1;
                            }
                        } else if self.label[self.inblossom[w]] == 1 {
                            // Track the least-slack non-allowable edge to a
                            // different S-blossom.
                            let b = self.inblossom[v];
                            if self.bestedge[b] == UNSET || kslack < self.slack(self.bestedge[b]) {
                                self.bestedge[b] = k;
                            }
                        } else if self.label[w] == 0 {
                            // w is free (or unreached inside a T-blossom);
                            // track the least-slack edge reaching it.
                            if self.bestedge[w] == UNSET || kslack < self.slack(self.bestedge[w]) {
                                self.bestedge[w] = k;
                            }
                        }
                    }
                }
                if augmented {
                    break;
                }

                // No augmenting path under these constraints; compute delta
                // and reduce slack in the optimization problem. (Vertex duals,
                // edge slacks, and deltas are all pre-multiplied by two.)
                //
                // delta1: minimum vertex dual; reaching it proves optimality.
                let mut deltatype = 1;
                let mut delta = f64::INFINITY;
                let mut deltaedge = UNSET;
                let mut deltablossom = UNSET;
                for v in 0..self.nvertex {
                    delta = delta.min(self.dualvar[v]);
                }

                // delta2: minimum slack on any edge between an S-vertex and a
                // free vertex.
                for v in 0..self.nvertex {
                    if self.label[self.inblossom[v]] == 0 && self.bestedge[v] != UNSET {
                        let d = self.slack(self.bestedge[v]);
                        if d < delta {
                            delta = d;
                            deltatype = 2;
                            deltaedge = self.bestedge[v];
                        }
                    }
                }

                // delta3: half the minimum slack between a pair of S-blossoms.
                for b in 0..2 * self.nvertex {
                    if self.blossomparent[b] == UNSET
                        && self.label[b] == 1
                        && self.bestedge[b] != UNSET
                    {
                        let d = self.slack(self.bestedge[b]) / 2.0;
                        if d < delta {
                            delta = d;
                            deltatype = 3;
                            deltaedge = self.bestedge[b];
                        }
                    }
                }

                // delta4: minimum dual of any T-blossom.
                for b in self.nvertex..2 * self.nvertex {
                    if self.blossombase[b] != UNSET
                        && self.blossomparent[b] == UNSET
                        && self.label[b] == 2
                        && self.dualvar[b] < delta
                    {
                        delta = self.dualvar[b];
                        deltatype = 4;
                        deltablossom = b;
                    }
                }

                // Rounding can push the winner a hair below zero; a negative
                // step would move the duals the wrong way.
                let delta = delta.max(0.0);

                // Update dual variables according to delta.
                for v in 0..self.nvertex {
                    match self.label[self.inblossom[v]] {
                        0 => {}
                        1 => self.dualvar[v] -= delta,
                        2 => self.dualvar[v] += delta,
                        _ => unreachable!("unexpected vertex label"),
                    }
                }
                for b in self.nvertex..2 * self.nvertex {
                    if self.blossombase[b] != UNSET && self.blossomparent[b] == UNSET {
                        match self.label[b] {
                            0 | UNSET => {}
                            1 => self.dualvar[b] += delta,
                            2 => self.dualvar[b] -= delta,
                            _ => unreachable!("unexpected blossom label"),
                        }
                    }
                }

                // Take action at the point where the minimum delta occurred.
                match deltatype {
                    1 => break, // optimum reached
                    2 => {
                        // Use the least-slack edge to continue the search.
                        self.allowedge[deltaedge] = true;
                        let (mut i, j, _) = self.edges[deltaedge];
                        if self.label[self.inblossom[i]] == 0 {
                            i = j;
                        }
                        assert_eq!(self.label[self.inblossom[i]], 1);
                        self.queue.push(i);
                    }
                    3 => {
                        // Use the least-slack edge to continue the search.
                        self.allowedge[deltaedge] = true;
                        let (i, _, _) = self.edges[deltaedge];
                        assert_eq!(self.label[self.inblossom[i]], 1);
                        self.queue.push(i);
                    }
                    4 => self.expand_blossom(deltablossom, false),
                    _ => unreachable!("unexpected delta type"),
                }
            }

            // Stop when no more augmenting paths can be found.
            if !augmented {
                break;
            }

            // End of a stage; expand all S-blossoms with zero dual.
            for b in self.nvertex..2 * self.nvertex {
                if self.blossomparent[b] == UNSET
                    && self.blossombase[b] != UNSET
                    && self.label[b] == 1
                    && self.dualvar[b] <= self.tol
                {
                    self.expand_blossom(b, true);
                }
            }
        }

        self.verify_optimum()?;

        // Transform mate[] from endpoint form to vertex form.
        for v in 0..self.nvertex {
            if self.mate[v] != UNSET {
                self.mate[v] = self.endpoint[self.mate[v]];
            }
        }
        for v in 0..self.nvertex {
            assert!(self.mate[v] == UNSET || self.mate[self.mate[v]] == v);
        }
        Ok(self.mate)
    }
}

/// Shift the back of the vector at `split` to the front (Python's
/// `v[split:] + v[:split]`).
fn rotate(v: &mut [usize], split: usize) {
    v.rotate_left(split);
}

/// Index with Python semantics: negative values count from the end.
fn pos_neg_index(v: &[usize], index: i32) -> usize {
    let idx = if index >= 0 {
        index as usize
    } else {
        v.len() - (-index) as usize
    };
    v[idx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mw(nvertex: usize, edges: &[(usize, usize, f64)]) -> Vec<usize> {
        max_weight_matching(nvertex, edges).unwrap()
    }

    fn value_of(mate: &[usize], edges: &[(usize, usize, f64)]) -> f64 {
        edges
            .iter()
            .filter(|&&(i, j, _)| mate[i] == j)
            .map(|&(_, _, w)| w)
            .sum()
    }

    /// Exhaustive maximum over all matchings.
    fn brute_value(nvertex: usize, edges: &[(usize, usize, f64)]) -> f64 {
        fn go(edges: &[(usize, usize, f64)], used: &mut [bool], from: usize) -> f64 {
            let mut best = 0.0f64;
            for (idx, &(i, j, w)) in edges.iter().enumerate().skip(from) {
                if !used[i] && !used[j] {
                    used[i] = true;
                    used[j] = true;
                    best = best.max(w + go(edges, used, idx + 1));
                    used[i] = false;
                    used[j] = false;
                }
            }
            best
        }
        let mut used = vec![false; nvertex];
        go(edges, &mut used, 0)
    }

    #[test]
    fn no_edges() {
        assert_eq!(mw(0, &[]), Vec::<usize>::new());
        assert_eq!(mw(3, &[]), vec![UNSET; 3]);
    }

    #[test]
    fn single_edge() {
        assert_eq!(mw(2, &[(0, 1, 1.0)]), vec![1, 0]);
    }

    #[test]
    fn multiple_edges() {
        assert_eq!(
            mw(4, &[(1, 2, 10.0), (2, 3, 11.0)]),
            vec![UNSET, UNSET, 3, 2]
        );
    }

    #[test]
    fn prefers_weight_over_cardinality() {
        assert_eq!(
            mw(5, &[(1, 2, 5.0), (2, 3, 11.0), (3, 4, 5.0)]),
            vec![UNSET, UNSET, 3, 2, UNSET]
        );
    }

    #[test]
    fn negative_weights_stay_single() {
        assert_eq!(
            mw(
                5,
                &[
                    (1, 2, 2.0),
                    (1, 3, -2.0),
                    (2, 3, 1.0),
                    (2, 4, -1.0),
                    (3, 4, -6.0)
                ]
            ),
            vec![UNSET, 2, 1, UNSET, UNSET]
        );
    }

    #[test]
    fn s_blossom_augmentation() {
        assert_eq!(
            mw(5, &[(1, 2, 8.0), (1, 3, 9.0), (2, 3, 10.0), (3, 4, 7.0)]),
            vec![UNSET, 2, 1, 4, 3]
        );
        assert_eq!(
            mw(
                7,
                &[
                    (1, 2, 8.0),
                    (1, 3, 9.0),
                    (2, 3, 10.0),
                    (3, 4, 7.0),
                    (1, 6, 5.0),
                    (4, 5, 6.0)
                ]
            ),
            vec![UNSET, 6, 3, 2, 5, 4, 1]
        );
    }

    #[test]
    fn s_to_t_relabel_augmentation() {
        assert_eq!(
            mw(
                7,
                &[
                    (1, 2, 9.0),
                    (1, 3, 8.0),
                    (2, 3, 10.0),
                    (1, 4, 5.0),
                    (4, 5, 4.0),
                    (1, 6, 3.0)
                ]
            ),
            vec![UNSET, 6, 3, 2, 5, 4, 1]
        );
        assert_eq!(
            mw(
                7,
                &[
                    (1, 2, 9.0),
                    (1, 3, 8.0),
                    (2, 3, 10.0),
                    (1, 4, 5.0),
                    (4, 5, 3.0),
                    (1, 6, 4.0)
                ]
            ),
            vec![UNSET, 6, 3, 2, 5, 4, 1]
        );
        assert_eq!(
            mw(
                7,
                &[
                    (1, 2, 9.0),
                    (1, 3, 8.0),
                    (2, 3, 10.0),
                    (1, 4, 5.0),
                    (4, 5, 3.0),
                    (3, 6, 4.0)
                ]
            ),
            vec![UNSET, 2, 1, 6, 5, 4, 3]
        );
    }

    #[test]
    fn nested_s_blossom_augmentation() {
        assert_eq!(
            mw(
                7,
                &[
                    (1, 2, 9.0),
                    (1, 3, 9.0),
                    (2, 3, 10.0),
                    (2, 4, 8.0),
                    (3, 5, 8.0),
                    (4, 5, 10.0),
                    (5, 6, 6.0)
                ]
            ),
            vec![UNSET, 3, 4, 1, 2, 6, 5]
        );
    }

    #[test]
    fn s_relabel_nested() {
        assert_eq!(
            mw(
                9,
                &[
                    (1, 2, 10.0),
                    (1, 7, 10.0),
                    (2, 3, 12.0),
                    (3, 4, 20.0),
                    (3, 5, 20.0),
                    (4, 5, 25.0),
                    (5, 6, 10.0),
                    (6, 7, 10.0),
                    (7, 8, 8.0)
                ]
            ),
            vec![UNSET, 2, 1, 4, 3, 6, 5, 8, 7]
        );
    }

    #[test]
    fn nested_s_blossom_expand_recursively() {
        assert_eq!(
            mw(
                9,
                &[
                    (1, 2, 8.0),
                    (1, 3, 8.0),
                    (2, 3, 10.0),
                    (2, 4, 12.0),
                    (3, 5, 12.0),
                    (4, 5, 14.0),
                    (4, 6, 12.0),
                    (5, 7, 12.0),
                    (6, 7, 14.0),
                    (7, 8, 12.0)
                ]
            ),
            vec![UNSET, 2, 1, 5, 6, 3, 4, 8, 7]
        );
    }

    #[test]
    fn s_blossom_relabel_t_expand() {
        assert_eq!(
            mw(
                9,
                &[
                    (1, 2, 23.0),
                    (1, 5, 22.0),
                    (1, 6, 15.0),
                    (2, 3, 25.0),
                    (3, 4, 22.0),
                    (4, 5, 25.0),
                    (4, 8, 14.0),
                    (5, 7, 13.0)
                ]
            ),
            vec![UNSET, 6, 3, 2, 8, 7, 1, 5, 4]
        );
    }

    #[test]
    fn nested_s_blossom_relabel_t_expand() {
        assert_eq!(
            mw(
                9,
                &[
                    (1, 2, 19.0),
                    (1, 3, 20.0),
                    (1, 8, 8.0),
                    (2, 3, 25.0),
                    (2, 4, 18.0),
                    (3, 5, 18.0),
                    (4, 5, 13.0),
                    (4, 7, 7.0),
                    (5, 6, 7.0)
                ]
            ),
            vec![UNSET, 8, 3, 2, 7, 6, 5, 4, 1]
        );
    }

    #[test]
    fn tnasty_expand() {
        assert_eq!(
            mw(
                11,
                &[
                    (1, 2, 45.0),
                    (1, 5, 45.0),
                    (2, 3, 50.0),
                    (3, 4, 45.0),
                    (4, 5, 50.0),
                    (1, 6, 30.0),
                    (3, 9, 35.0),
                    (4, 8, 35.0),
                    (5, 7, 26.0),
                    (9, 10, 5.0)
                ]
            ),
            vec![UNSET, 6, 3, 2, 8, 7, 1, 5, 4, 10, 9]
        );
    }

    #[test]
    fn tnasty2_expand() {
        assert_eq!(
            mw(
                11,
                &[
                    (1, 2, 45.0),
                    (1, 5, 45.0),
                    (2, 3, 50.0),
                    (3, 4, 45.0),
                    (4, 5, 50.0),
                    (1, 6, 30.0),
                    (3, 9, 35.0),
                    (4, 8, 26.0),
                    (5, 7, 40.0),
                    (9, 10, 5.0)
                ]
            ),
            vec![UNSET, 6, 3, 2, 8, 7, 1, 5, 4, 10, 9]
        );
    }

    #[test]
    fn t_expand_least_slack() {
        assert_eq!(
            mw(
                11,
                &[
                    (1, 2, 45.0),
                    (1, 5, 45.0),
                    (2, 3, 50.0),
                    (3, 4, 45.0),
                    (4, 5, 50.0),
                    (1, 6, 30.0),
                    (3, 9, 35.0),
                    (4, 8, 28.0),
                    (5, 7, 26.0),
                    (9, 10, 5.0)
                ]
            ),
            vec![UNSET, 6, 3, 2, 8, 7, 1, 5, 4, 10, 9]
        );
    }

    #[test]
    fn nested_tnasty_expand() {
        assert_eq!(
            mw(
                13,
                &[
                    (1, 2, 45.0),
                    (1, 7, 45.0),
                    (2, 3, 50.0),
                    (3, 4, 45.0),
                    (4, 5, 95.0),
                    (4, 6, 94.0),
                    (5, 6, 94.0),
                    (6, 7, 50.0),
                    (1, 8, 30.0),
                    (3, 11, 35.0),
                    (5, 9, 36.0),
                    (7, 10, 26.0),
                    (11, 12, 5.0)
                ]
            ),
            vec![UNSET, 8, 3, 2, 6, 9, 4, 10, 1, 5, 7, 12, 11]
        );
    }

    #[test]
    fn nested_relabel_expand() {
        assert_eq!(
            mw(
                11,
                &[
                    (1, 2, 40.0),
                    (1, 3, 40.0),
                    (2, 3, 60.0),
                    (2, 4, 55.0),
                    (3, 5, 55.0),
                    (4, 5, 50.0),
                    (1, 8, 15.0),
                    (5, 7, 30.0),
                    (7, 6, 10.0),
                    (8, 10, 10.0),
                    (4, 9, 30.0)
                ]
            ),
            vec![UNSET, 2, 1, 5, 9, 3, 7, 6, 10, 4, 8]
        );
    }

    #[test]
    fn fractional_weights() {
        // Triangle plus pendant, weights far from integers.
        let edges = [(0, 1, 0.9), (0, 2, 0.9), (1, 2, 1.0), (2, 3, 0.75)];
        let mate = mw(4, &edges);
        assert_eq!(mate, vec![1, 0, 3, 2]);
        assert!((value_of(&mate, &edges) - 1.65).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..600 {
            let n = 2 + (case % 8);
            let mut edges = vec![];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.7 {
                        // Mix of signs; eighth-steps produce exact ties.
                        let w = (rng.random::<f64>() * 24.0 - 8.0).round() / 8.0;
                        edges.push((i, j, w));
                    }
                }
            }
            let mate = mw(n, &edges);
            // Symmetry and disjointness.
            for v in 0..n {
                if mate[v] != UNSET {
                    assert_eq!(mate[mate[v]], v);
                }
            }
            let got = value_of(&mate, &edges);
            let want = brute_value(n, &edges);
            assert!(
                (got - want).abs() < 1e-9,
                "case {case}: blossom {got} vs brute {want} on {edges:?}"
            );
        }
    }
}
