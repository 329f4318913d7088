//! First-order junction trees: construction over the PRV interaction graph,
//! evidence, two-pass message passing and query answering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::error::InferenceError;
use crate::lve::{self, absorb_evidence, eliminate, marginal, Class, Ctx};
use crate::model::{Observation, Parfactor, Pm, PrvRef, Slice, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    In,
    Out,
    InOut,
}

impl Label {
    pub fn is_in(self) -> bool {
        matches!(self, Label::In | Label::InOut)
    }

    pub fn is_out(self) -> bool {
        matches!(self, Label::Out | Label::InOut)
    }

    fn merge(a: Option<Label>, b: Option<Label>) -> Option<Label> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) if x == y => Some(x),
            _ => Some(Label::InOut),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parcluster {
    pub prvs: BTreeSet<PrvRef>,
    /// Indices into [`FoJTree::parfactors`].
    pub local: Vec<usize>,
    pub label: Option<Label>,
}

/// A cycle-free graph of parclusters. The structure is a template: running
/// inference works on an [`Instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct FoJTree {
    pub parfactors: Vec<Parfactor>,
    /// Parfactors that only shape the structure (all-ones potentials); they
    /// are skipped when the tree is instantiated.
    pub structural: Vec<bool>,
    pub nodes: Vec<Parcluster>,
    pub edges: Vec<(usize, usize)>,
}

impl FoJTree {
    /// Builds a tree by simulating min-fill elimination on the PRV
    /// interaction graph, keeping maximal cliques and connecting them by a
    /// maximum spanning tree on separator size.
    pub fn build(vocab: &Vocab, parfactors: Vec<Parfactor>, structural: Vec<bool>) -> FoJTree {
        let mut adj: BTreeMap<PrvRef, BTreeSet<PrvRef>> = BTreeMap::new();
        for pf in &parfactors {
            for &a in &pf.args {
                let e = adj.entry(a).or_default();
                e.extend(pf.args.iter().copied().filter(|&b| b != a));
            }
        }
        let labels: BTreeMap<PrvRef, String> = adj.keys().map(|&p| (p, vocab.prv_label(p))).collect();
        let mut cliques: Vec<BTreeSet<PrvRef>> = Vec::new();
        let mut graph = adj.clone();
        while !graph.is_empty() {
            let pick = *graph
                .iter()
                .map(|(&v, nb)| {
                    let nbv: Vec<&PrvRef> = nb.iter().collect();
                    let mut fill = 0;
                    for i in 0..nbv.len() {
                        for j in i + 1..nbv.len() {
                            if !graph[nbv[i]].contains(nbv[j]) {
                                fill += 1;
                            }
                        }
                    }
                    (fill, nb.len(), &labels[&v], v)
                })
                .min()
                .map(|(_, _, _, v)| v)
                .as_ref()
                .unwrap();
            let nb = graph.remove(&pick).unwrap();
            for &a in &nb {
                for &b in &nb {
                    if a != b {
                        graph.get_mut(&a).unwrap().insert(b);
                    }
                }
                graph.get_mut(&a).unwrap().remove(&pick);
            }
            let mut c = nb;
            c.insert(pick);
            if !cliques.iter().any(|k| k.is_superset(&c)) {
                cliques.retain(|k| !k.is_subset(&c));
                cliques.push(c);
            }
        }

        let mut local: Vec<Vec<usize>> = vec![Vec::new(); cliques.len()];
        for (i, pf) in parfactors.iter().enumerate() {
            let c = cliques
                .iter()
                .position(|k| pf.args.iter().all(|a| k.contains(a)))
                .expect("elimination cliques cover every parfactor");
            local[c].push(i);
        }
        let mut order: Vec<usize> = (0..cliques.len()).collect();
        order.sort_by_key(|&c| (local[c].first().copied().unwrap_or(usize::MAX), c));
        let nodes: Vec<Parcluster> = order
            .iter()
            .map(|&c| Parcluster { prvs: cliques[c].clone(), local: local[c].clone(), label: None })
            .collect();

        // Kruskal on separator size; ties go to the lowest index pair
        let n = nodes.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let s = nodes[i].prvs.intersection(&nodes[j].prvs).count();
                pairs.push((std::cmp::Reverse(s), i, j));
            }
        }
        pairs.sort();
        let mut comp: Vec<usize> = (0..n).collect();
        let mut edges = Vec::new();
        for (_, i, j) in pairs {
            let (ci, cj) = (comp[i], comp[j]);
            if ci != cj {
                for c in comp.iter_mut() {
                    if *c == cj {
                        *c = ci;
                    }
                }
                edges.push((i, j));
            }
        }
        FoJTree { parfactors, structural, nodes, edges }
    }

    /// Tree for a static model; every parfactor carries potentials.
    pub fn for_model(vocab: &Vocab, pm: &Pm) -> FoJTree {
        let n = pm.parfactors.len();
        FoJTree::build(vocab, pm.parfactors.clone(), vec![false; n])
    }

    pub fn separator(&self, i: usize, j: usize) -> BTreeSet<PrvRef> {
        self.nodes[i].prvs.intersection(&self.nodes[j].prvs).copied().collect()
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Node with the most neighbours, lowest index on ties.
    pub fn root(&self) -> usize {
        (0..self.nodes.len()).max_by_key(|&i| (self.neighbours(i).len(), std::cmp::Reverse(i))).unwrap_or(0)
    }

    pub fn find_label(&self, pred: impl Fn(Label) -> bool) -> Option<usize> {
        self.nodes.iter().position(|n| n.label.is_some_and(&pred))
    }

    /// Merges node `j` into node `i`.
    pub fn fuse(&mut self, i: usize, j: usize) {
        assert_ne!(i, j);
        let nj = self.nodes[j].clone();
        let ni = &mut self.nodes[i];
        ni.prvs.extend(nj.prvs);
        ni.local.extend(nj.local);
        ni.local.sort_unstable();
        ni.label = Label::merge(ni.label, nj.label);
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(a, b) in &self.edges {
            let a = if a == j { i } else { a };
            let b = if b == j { i } else { b };
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.nodes.remove(j);
        let shift = |x: usize| if x > j { x - 1 } else { x };
        self.edges = edges.into_iter().map(|(a, b)| (shift(a), shift(b))).collect();
    }

    /// Checks the defining properties: every parfactor assigned to exactly
    /// one covering parcluster, a connected acyclic graph, and running
    /// intersection. Returns all violations.
    pub fn validate(&self, vocab: &Vocab) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let mut seen = vec![0; self.parfactors.len()];
        for (c, n) in self.nodes.iter().enumerate() {
            for &p in &n.local {
                seen[p] += 1;
                if !self.parfactors[p].args.iter().all(|a| n.prvs.contains(a)) {
                    errs.push(format!("parfactor `{}` not covered by C{}", self.parfactors[p].name, c + 1));
                }
            }
        }
        for (p, &k) in seen.iter().enumerate() {
            if k != 1 {
                errs.push(format!("parfactor `{}` assigned {k} times", self.parfactors[p].name));
            }
        }
        let n = self.nodes.len();
        if n > 0 && self.edges.len() != n - 1 {
            errs.push(format!("{} edges for {n} parclusters", self.edges.len()));
        }
        if n > 0 && self.component(0, |_| true).len() != n {
            errs.push("graph is not connected".into());
        }
        let all: BTreeSet<PrvRef> = self.nodes.iter().flat_map(|n| n.prvs.iter().copied()).collect();
        for p in all {
            let holders: BTreeSet<usize> = (0..n).filter(|&i| self.nodes[i].prvs.contains(&p)).collect();
            let first = *holders.iter().next().unwrap();
            if self.component(first, |i| holders.contains(&i)) != holders {
                errs.push(format!("running intersection violated for {}", vocab.prv_label(p)));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    fn component(&self, start: usize, allowed: impl Fn(usize) -> bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            for y in self.neighbours(x) {
                if allowed(y) && seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        seen
    }

    /// Stable textual rendering for golden tests.
    pub fn dump(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        let list = |s: &BTreeSet<PrvRef>| s.iter().map(|&p| vocab.prv_label(p)).collect::<Vec<_>>().join(", ");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match n.label {
                Some(Label::In) => " [in]",
                Some(Label::Out) => " [out]",
                Some(Label::InOut) => " [in,out]",
                None => "",
            };
            let local: Vec<&str> = n.local.iter().map(|&p| self.parfactors[p].name.as_str()).collect();
            writeln!(out, "C{}{}: {{{}}} local {{{}}}", i + 1, label, list(&n.prvs), local.join(", ")).unwrap();
        }
        for &(a, b) in &self.edges {
            writeln!(out, "C{} - C{}: {{{}}}", a + 1, b + 1, list(&self.separator(a, b))).unwrap();
        }
        out
    }

    /// Local models as lifted parfactors, structural parfactors left out.
    pub fn instantiate(&self, vocab: &Vocab) -> Result<Instance, InferenceError> {
        let mut locals = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let mut l = Vec::new();
            for &p in &n.local {
                if !self.structural[p] {
                    l.push(lve::Parfactor::from_model(vocab, &self.parfactors[p])?);
                }
            }
            locals.push(l);
        }
        Ok(Instance { locals, messages: BTreeMap::new(), observed: BTreeMap::new() })
    }
}

/// Mutable state of one tree during inference: local models (after
/// evidence and incoming state) and computed messages.
#[derive(Clone, Debug)]
pub struct Instance {
    pub locals: Vec<Vec<lve::Parfactor>>,
    pub messages: BTreeMap<(usize, usize), Vec<lve::Parfactor>>,
    /// Observed value and range size by PRV occurrence and constants.
    pub observed: BTreeMap<(PrvRef, Vec<u32>), (u32, usize)>,
}

impl Instance {
    /// Absorbs the observations of one step into every local parfactor.
    /// Observed atoms refer to PRV occurrences at `slice`.
    pub fn enter_evidence(
        &mut self,
        vocab: &Vocab,
        step: u32,
        obs: &[Observation],
        slice: Slice,
        ctx: &mut Ctx,
    ) -> Result<(), InferenceError> {
        let mut groups: BTreeMap<(usize, u32), Vec<Vec<u32>>> = BTreeMap::new();
        for o in obs {
            vocab.check_atom(&o.atom)?;
            if o.value as usize >= vocab.card(o.atom.prv) {
                return Err(
                    crate::error::ModelError::OutOfRange { prv: vocab.prvs[o.atom.prv].name.clone(), step }.into()
                );
            }
            groups.entry((o.atom.prv, o.value)).or_default().push(o.atom.args.clone());
            self.observed
                .insert((PrvRef::new(o.atom.prv, slice), o.atom.args.clone()), (o.value, vocab.card(o.atom.prv)));
        }
        for ((prv, value), instances) in groups {
            let r = PrvRef::new(prv, slice);
            for local in self.locals.iter_mut() {
                let mut next = Vec::with_capacity(local.len());
                for pf in local.iter() {
                    next.extend(absorb_evidence(pf, r, &instances, value, ctx)?);
                }
                *local = next.into_iter().filter(|p| !p.args.is_empty()).collect();
            }
        }
        self.messages.clear();
        Ok(())
    }

    /// Inbound pass towards the root, then outbound pass back to the leaves.
    pub fn pass_messages(&mut self, tree: &FoJTree, ctx: &mut Ctx) -> Result<(), InferenceError> {
        let root = tree.root();
        let mut order = Vec::new();
        let mut stack = vec![(root, usize::MAX)];
        while let Some((x, parent)) = stack.pop() {
            order.push((x, parent));
            for y in tree.neighbours(x).into_iter().rev() {
                if y != parent {
                    stack.push((y, x));
                }
            }
        }
        for &(x, parent) in order.iter().rev() {
            if parent != usize::MAX {
                self.send(tree, x, parent, ctx)?;
            }
        }
        for &(x, parent) in &order {
            if parent != usize::MAX {
                self.send(tree, parent, x, ctx)?;
            }
        }
        Ok(())
    }

    /// Parfactors available at node `i`, excluding the message from `except`.
    pub fn gather(&self, tree: &FoJTree, i: usize, except: Option<usize>) -> Vec<lve::Parfactor> {
        let mut out = self.locals[i].clone();
        for k in tree.neighbours(i) {
            if Some(k) != except {
                if let Some(m) = self.messages.get(&(k, i)) {
                    out.extend(m.iter().cloned());
                }
            }
        }
        out
    }

    fn send(&mut self, tree: &FoJTree, i: usize, j: usize, ctx: &mut Ctx) -> Result<(), InferenceError> {
        let sep = tree.separator(i, j);
        let keep = |c: &Class| sep.contains(&c.prv);
        let m = eliminate(self.gather(tree, i, Some(j)), &keep, ctx)?;
        self.messages.insert((i, j), m);
        Ok(())
    }

    /// Marginal of `prv(consts)`, answered at the smallest parcluster holding
    /// the PRV.
    pub fn answer(
        &self,
        tree: &FoJTree,
        vocab: &Vocab,
        prv: PrvRef,
        consts: &[u32],
        ctx: &mut Ctx,
    ) -> Result<Vec<f64>, InferenceError> {
        let node = (0..tree.nodes.len())
            .filter(|&i| tree.nodes[i].prvs.contains(&prv))
            .min_by_key(|&i| (tree.nodes[i].prvs.len(), i))
            .ok_or_else(|| InferenceError::UnknownQuery(vocab.prv_label(prv)))?;
        self.answer_at(tree, node, prv, consts, ctx)
    }

    pub fn answer_at(
        &self,
        tree: &FoJTree,
        node: usize,
        prv: PrvRef,
        consts: &[u32],
        ctx: &mut Ctx,
    ) -> Result<Vec<f64>, InferenceError> {
        if let Some(&(v, card)) = self.observed.get(&(prv, consts.to_vec())) {
            let mut out = vec![0.0; card];
            out[v as usize] = 1.0;
            return Ok(out);
        }
        marginal(self.gather(tree, node, None), prv, consts, ctx)
    }
}
