//! Offline grounding prevention.
//!
//! Checks run symbolically on PRVs and their logvars. A message `i -> j`
//! eliminates every PRV `E` of parcluster `i` outside the separator; the
//! product `g^E` of all inputs mentioning `E` decides whether that is
//! lifted:
//!
//! * sum-out: every separator PRV `S` of `g^E` satisfies `lv(S) ⊆ lv(E)`;
//! * count-convert: otherwise `lv(S) \ lv(E) = {L}` and `L` occurs in one
//!   PRV of `g^E` only;
//! * crv-propagate: every parcluster receiving the counted `S` forwards it
//!   or can count-convert `L` itself.
//!
//! Failing intra-tree messages fuse their parclusters; a failing α message
//! expands the inter-tree separator by the offending PRV.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::fojt::FoJTree;
use crate::ldjt::{Options, TemporalStructures};
use crate::model::{LogvarId, PrvRef, Slice, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TreeId {
    Static,
    J0,
    Jt,
}

impl std::fmt::Display for TreeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TreeId::Static => "J",
            TreeId::J0 => "J0",
            TreeId::Jt => "Jt",
        })
    }
}

/// The check that ruled out a lifted elimination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    CountConvert,
    CrvPropagate,
    /// The counted PRV reaches the out-cluster, where a kept interface PRV
    /// shares its logvar.
    CrvInterface,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Check::CountConvert => "count-convert",
            Check::CrvPropagate => "crv-propagate",
            Check::CrvInterface => "crv-propagate at the interface",
        })
    }
}

/// Eliminating `e` in a message fails for separator PRV `s`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Failure {
    pub e: PrvRef,
    pub s: PrvRef,
    pub check: Check,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntraFailure {
    pub tree: TreeId,
    pub from: usize,
    pub to: usize,
    pub failure: Failure,
}

/// The α message leaving `from` fails.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterFailure {
    pub from: TreeId,
    pub failure: Failure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Fuse { tree: TreeId, a: usize, b: usize },
    Expand(PrvRef),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnosis {
    /// Expanding `E` forces the in- and out-cluster together and `E` still
    /// cannot be eliminated.
    FusionCascade,
    /// The counted PRV meets itself across slices in an inter-slice
    /// parfactor, where its logvar cannot be count-converted.
    InterSliceCount { parfactor: String, logvar: LogvarId },
    /// The counted PRV cannot be count-converted in the out-cluster because
    /// the α message keeps an interface PRV with the same logvar.
    InterfaceCount { logvar: LogvarId },
    /// A probe run of the engine still grounds `logvar` in `parfactor`.
    Residual { parfactor: String, logvar: LogvarId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Irreducible {
    pub prv: PrvRef,
    pub diagnosis: Diagnosis,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundingReport {
    pub intra_failures: Vec<IntraFailure>,
    pub inter_failures: Vec<InterFailure>,
    pub actions: Vec<Action>,
    pub irreducible: Vec<Irreducible>,
}

impl GroundingReport {
    pub fn expanded(&self) -> Vec<PrvRef> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                Action::Expand(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    /// One line per failure, action and irreducible PRV.
    pub fn render(&self, vocab: &Vocab) -> String {
        let l = |p: PrvRef| vocab.prv_label(p);
        let mut out = String::new();
        for f in &self.intra_failures {
            let x = &f.failure;
            writeln!(
                out,
                "FAIL {} C{}->C{} eliminating {} for {}: {}",
                f.tree,
                f.from + 1,
                f.to + 1,
                l(x.e),
                l(x.s),
                x.check
            )
            .unwrap();
        }
        for f in &self.inter_failures {
            let x = &f.failure;
            writeln!(out, "FAIL alpha from {} eliminating {} for {}: {}", f.from, l(x.e), l(x.s), x.check).unwrap();
        }
        if self.actions.is_empty() {
            out.push_str("no actions\n");
        }
        for a in &self.actions {
            match a {
                Action::Fuse { tree, a, b } => writeln!(out, "FUSE {tree} C{} C{}", a + 1, b + 1).unwrap(),
                Action::Expand(p) => writeln!(out, "EXPAND {}", l(*p)).unwrap(),
            }
        }
        for i in &self.irreducible {
            match &i.diagnosis {
                Diagnosis::FusionCascade => writeln!(
                    out,
                    "IRREDUCIBLE {}: in- and out-cluster would fuse and it still could not be eliminated",
                    l(i.prv)
                )
                .unwrap(),
                Diagnosis::InterSliceCount { parfactor, logvar } => writeln!(
                    out,
                    "IRREDUCIBLE {}: cannot count-convert {} in the inter-slice parfactor {}",
                    l(i.prv),
                    vocab.logvars[*logvar].name,
                    parfactor
                )
                .unwrap(),
                Diagnosis::Residual { parfactor, logvar } => writeln!(
                    out,
                    "IRREDUCIBLE {}: a probe run grounds {} in {}",
                    l(i.prv),
                    vocab.logvars[*logvar].name,
                    parfactor
                )
                .unwrap(),
                Diagnosis::InterfaceCount { logvar } => writeln!(
                    out,
                    "IRREDUCIBLE {}: cannot count-convert {} next to the interface in the out-cluster",
                    l(i.prv),
                    vocab.logvars[*logvar].name
                )
                .unwrap(),
            }
        }
        out
    }
}

fn lv(vocab: &Vocab, p: PrvRef) -> BTreeSet<LogvarId> {
    vocab.lv_prv(p.prv)
}

/// Sum-out check for every separator PRV occurring in `g_e`.
pub fn check_sum_out(vocab: &Vocab, sep: &BTreeSet<PrvRef>, e: PrvRef, g_e: &BTreeSet<PrvRef>) -> Vec<(PrvRef, bool)> {
    let le = lv(vocab, e);
    sep.iter().filter(|s| g_e.contains(s)).map(|&s| (s, lv(vocab, s).is_subset(&le))).collect()
}

/// The logvar to count-convert so that `s` survives eliminating `e`.
pub fn check_count_convert(vocab: &Vocab, s: PrvRef, e: PrvRef, g_e: &BTreeSet<PrvRef>) -> Option<LogvarId> {
    let excess: Vec<LogvarId> = lv(vocab, s).difference(&lv(vocab, e)).copied().collect();
    match excess[..] {
        [l] if convertible(vocab, l, g_e) => Some(l),
        _ => None,
    }
}

fn convertible(vocab: &Vocab, l: LogvarId, g: &BTreeSet<PrvRef>) -> bool {
    g.iter().filter(|&&p| lv(vocab, p).contains(&l)).count() == 1
}

/// Symbolically sums out every PRV outside `keep` whose logvars cover the
/// product of the inputs holding it, until none is left.
fn pre_eliminate(vocab: &Vocab, mut inputs: Vec<BTreeSet<PrvRef>>, keep: &BTreeSet<PrvRef>) -> Vec<BTreeSet<PrvRef>> {
    loop {
        let all: BTreeSet<PrvRef> = inputs.iter().flatten().copied().collect();
        let next = all.into_iter().filter(|e| !keep.contains(e)).find(|&e| {
            let le = lv(vocab, e);
            inputs.iter().filter(|a| a.contains(&e)).flatten().all(|&p| lv(vocab, p).is_subset(&le))
        });
        let Some(e) = next else { return inputs };
        let (with, mut rest): (Vec<_>, Vec<_>) = inputs.into_iter().partition(|a| a.contains(&e));
        let mut merged: BTreeSet<PrvRef> = with.into_iter().flatten().collect();
        merged.remove(&e);
        if !merged.is_empty() {
            rest.push(merged);
        }
        inputs = rest;
    }
}

/// Symbolic view of a tree: argument sets of the local models, plus an
/// optional extra input (the α message) at one parcluster and the
/// out-cluster with the PRVs its α message keeps.
pub struct View<'a> {
    pub vocab: &'a Vocab,
    pub tree: &'a FoJTree,
    pub extra: Option<(usize, BTreeSet<PrvRef>)>,
    pub out: Option<(usize, BTreeSet<PrvRef>)>,
    /// The tree of the next step, whose in-cluster receives what the α
    /// message keeps.
    pub next: Option<&'a View<'a>>,
}

/// Where a counted PRV gets stuck.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Blocked {
    Edge,
    Interface,
}

impl View<'_> {
    /// Argument sets available at `i` when sending to `except`.
    fn inputs(&self, i: usize, except: Option<usize>) -> Vec<BTreeSet<PrvRef>> {
        let t = self.tree;
        let mut out: Vec<BTreeSet<PrvRef>> = t.nodes[i]
            .local
            .iter()
            .filter(|&&p| !t.structural[p])
            .map(|&p| t.parfactors[p].args.iter().copied().collect())
            .collect();
        for k in t.neighbours(i) {
            if Some(k) != except {
                out.push(t.separator(k, i));
            }
        }
        if let Some((node, args)) = &self.extra {
            if *node == i {
                out.push(args.clone());
            }
        }
        out
    }

    fn product_with(&self, inputs: &[BTreeSet<PrvRef>], x: PrvRef) -> BTreeSet<PrvRef> {
        inputs.iter().filter(|a| a.contains(&x)).flatten().copied().collect()
    }

    /// crv-propagate: `s`, counted over `l`, travels from `from` into `k`.
    /// Every onward neighbour must receive it again or `k` must be able to
    /// count-convert `l` in the product of its inputs holding `s`.
    pub fn check_crv_propagate(&self, s: PrvRef, l: LogvarId, from: Option<usize>, k: usize) -> Result<(), Blocked> {
        let mut stack = vec![(from, k)];
        let mut seen = BTreeSet::new();
        while let Some((from, k)) = stack.pop() {
            if !seen.insert((from, k)) {
                continue;
            }
            if let Some((_, kept)) = self.out.as_ref().filter(|(o, _)| *o == k) {
                if !kept.contains(&s) {
                    let mut keep = kept.clone();
                    keep.insert(s);
                    let inputs = pre_eliminate(self.vocab, self.inputs(k, None), &keep);
                    if !convertible(self.vocab, l, &self.product_with(&inputs, s)) {
                        return Err(Blocked::Interface);
                    }
                } else if let Some(next) = self.next {
                    let into = next.extra.as_ref().map(|(i, _)| *i);
                    if let Some(i) = into {
                        next.check_crv_propagate(s.with_slice(Slice::Prev), l, None, i).map_err(|_| Blocked::Edge)?;
                    }
                }
            }
            for n in self.tree.neighbours(k) {
                if Some(n) == from {
                    continue;
                }
                if self.tree.separator(k, n).contains(&s) {
                    stack.push((Some(k), n));
                } else {
                    let mut keep = self.tree.separator(k, n);
                    keep.insert(s);
                    let inputs = pre_eliminate(self.vocab, self.inputs(k, Some(n)), &keep);
                    let g_s = self.product_with(&inputs, s);
                    if !convertible(self.vocab, l, &g_s) {
                        return Err(Blocked::Edge);
                    }
                }
            }
        }
        Ok(())
    }

    /// Failing eliminations of a message from `i` keeping `sep`, at most one
    /// per eliminated PRV; `to` is the receiving parcluster of this tree, if
    /// any.
    fn failures(
        &self,
        i: usize,
        to: Option<usize>,
        sep: &BTreeSet<PrvRef>,
        onward: impl Fn(PrvRef, LogvarId) -> Result<(), Blocked>,
    ) -> Vec<Failure> {
        let inputs = pre_eliminate(self.vocab, self.inputs(i, to), sep);
        let left: BTreeSet<PrvRef> = inputs.iter().flatten().copied().collect();
        let mut out = Vec::new();
        for e in left.difference(sep).copied() {
            let g_e = self.product_with(&inputs, e);
            for (s, ok) in check_sum_out(self.vocab, sep, e, &g_e) {
                if ok {
                    continue;
                }
                let check = match check_count_convert(self.vocab, s, e, &g_e).map(|l| onward(s, l)) {
                    None => Check::CountConvert,
                    Some(Err(Blocked::Edge)) => Check::CrvPropagate,
                    Some(Err(Blocked::Interface)) => Check::CrvInterface,
                    Some(Ok(())) => continue,
                };
                out.push(Failure { e, s, check });
                break;
            }
        }
        out
    }

    /// Checks the message `i -> j`.
    pub fn check_message(&self, i: usize, j: usize) -> Option<Failure> {
        let sep = self.tree.separator(i, j);
        self.failures(i, Some(j), &sep, |s, l| self.check_crv_propagate(s, l, Some(i), j)).into_iter().next()
    }
}

fn alpha_args(st: &TemporalStructures) -> Option<(usize, BTreeSet<PrvRef>)> {
    Some((st.jt_in(), st.interface.at(Slice::Prev)))
}

type Hook = Option<(usize, BTreeSet<PrvRef>)>;

/// Fuses parclusters until every message of the tree passes the checks.
/// A counted PRV stuck at the interface is recorded as irreducible since
/// fusion cannot remove the α message.
fn fuse_until_lifted(
    vocab: &Vocab,
    tree: &mut FoJTree,
    which: TreeId,
    hooks: impl Fn(&FoJTree) -> (Hook, Hook),
    next: Option<(&FoJTree, Hook)>,
    report: &mut GroundingReport,
) {
    'outer: loop {
        let (extra, out) = hooks(tree);
        // without a separate next tree, the next step runs on this one
        let (next_tree, next_extra) = match &next {
            Some((t, h)) => (*t, h.clone()),
            None => (&*tree, hooks(tree).0),
        };
        let receiver = View { vocab, tree: next_tree, extra: next_extra, out: None, next: None };
        let view = View { vocab, tree, extra, out, next: Some(&receiver) };
        let mut directed: Vec<(usize, usize)> = tree.edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        directed.sort_unstable();
        for (i, j) in directed {
            if let Some(failure) = view.check_message(i, j) {
                let record = IntraFailure { tree: which, from: i, to: j, failure: failure.clone() };
                if failure.check == Check::CrvInterface {
                    if !report.intra_failures.contains(&record) {
                        report.intra_failures.push(record);
                        let logvar = *lv(vocab, failure.s).difference(&lv(vocab, failure.e)).next().unwrap();
                        let stuck = Irreducible { prv: failure.s, diagnosis: Diagnosis::InterfaceCount { logvar } };
                        if !report.irreducible.contains(&stuck) {
                            report.irreducible.push(stuck);
                        }
                    }
                    continue;
                }
                report.intra_failures.push(record);
                let (a, b) = (i.min(j), i.max(j));
                report.actions.push(Action::Fuse { tree: which, a, b });
                tree.fuse(a, b);
                debug_assert!(tree.validate(vocab).is_ok());
                continue 'outer;
            }
        }
        return;
    }
}

/// Fusion for a static tree. Returns what was done.
pub fn fuse_static(vocab: &Vocab, tree: &mut FoJTree) -> GroundingReport {
    let mut report = GroundingReport::default();
    fuse_until_lifted(vocab, tree, TreeId::Static, |_| (None, None), None, &mut report);
    report
}

/// Detection for the α message leaving `J0` (`from = J0`) or `Jt`.
pub fn detect_inter(vocab: &Vocab, st: &TemporalStructures, from: TreeId) -> Vec<(Failure, Option<Diagnosis>)> {
    let (tree, node, slice, extra) = match from {
        TreeId::J0 => (&st.j0, st.j0_out(), Slice::Static, None),
        _ => (&st.jt, st.jt_out(), Slice::Curr, alpha_args(st)),
    };
    let sep = st.interface.at(slice);
    let view = View { vocab, tree, extra, out: None, next: None };
    let receiver = View {
        vocab,
        tree: &st.jt,
        extra: alpha_args(st),
        out: Some((st.jt_out(), st.interface.at(Slice::Curr))),
        next: None,
    };
    view.failures(node, None, &sep, |s, l| receiver.check_crv_propagate(s.with_slice(Slice::Prev), l, None, st.jt_in()))
        .into_iter()
        .map(|f| {
            let diag = (f.check == Check::CrvPropagate).then(|| inter_slice_diagnosis(vocab, st, f.s)).flatten();
            (f, diag)
        })
        .collect()
}

/// Finds an inter-slice parfactor of `Jt` holding `s` in both slices with a
/// shared logvar.
fn inter_slice_diagnosis(vocab: &Vocab, st: &TemporalStructures, s: PrvRef) -> Option<Diagnosis> {
    let prev = s.with_slice(Slice::Prev);
    let curr = s.with_slice(Slice::Curr);
    st.jt.parfactors.iter().find(|p| p.args.contains(&prev) && p.args.contains(&curr)).and_then(|p| {
        lv(vocab, s).into_iter().next().map(|logvar| Diagnosis::InterSliceCount { parfactor: p.name.clone(), logvar })
    })
}

/// Adds `e` (tagged with the previous slice) to the in-cluster of `Jt` and
/// to the interface.
pub fn expand(st: &mut TemporalStructures, e: PrvRef) -> Result<(), crate::InferenceError> {
    let prev = e.with_slice(Slice::Prev);
    if st.jt.nodes.iter().any(|n| n.prvs.contains(&prev)) {
        return Err(crate::InferenceError::Internal(format!("PRV #{} already occurs in Jt", e.prv)));
    }
    st.interface.expanded.insert(e.prv);
    let i = st.jt_in();
    st.jt.nodes[i].prvs.insert(prev);
    Ok(())
}

/// Intra-tree checks with fusion on both trees, then the α checks with
/// expanding, repeated until nothing changes.
pub fn prevent_all(vocab: &Vocab, st: &mut TemporalStructures, opts: Options) -> GroundingReport {
    let mut report = GroundingReport::default();
    let mut given_up: BTreeSet<usize> = BTreeSet::new();
    loop {
        if opts.fusion {
            let (alpha, kept) = (st.interface.at(Slice::Prev), st.interface.at(Slice::Curr));
            let kept0 = st.interface.at(Slice::Static);
            let into = in_cluster(&st.jt, &alpha);
            fuse_until_lifted(
                vocab,
                &mut st.j0,
                TreeId::J0,
                |t| (None, out_cluster(t, &kept0)),
                Some((&st.jt, into)),
                &mut report,
            );
            fuse_until_lifted(
                vocab,
                &mut st.jt,
                TreeId::Jt,
                |t| (in_cluster(t, &alpha), out_cluster(t, &kept)),
                None,
                &mut report,
            );
        }
        let mut acted = false;
        'scan: for from in [TreeId::J0, TreeId::Jt] {
            for (failure, diag) in detect_inter(vocab, st, from) {
                let record = InterFailure { from, failure: failure.clone() };
                if !report.inter_failures.contains(&record) {
                    report.inter_failures.push(record);
                }
                let e = failure.e;
                if given_up.contains(&e.prv) {
                    continue;
                }
                if let Some(diagnosis) = diag {
                    given_up.insert(failure.s.prv);
                    given_up.insert(e.prv);
                    report.irreducible.push(Irreducible { prv: failure.s.with_slice(Slice::Prev), diagnosis });
                    continue;
                }
                if !opts.expanding {
                    continue;
                }
                // the in- and out-cluster are one parcluster already
                if e.slice == Slice::Prev {
                    given_up.insert(e.prv);
                    report.irreducible.push(Irreducible { prv: e, diagnosis: Diagnosis::FusionCascade });
                    continue;
                }
                let mut trial = st.clone();
                let mut trial_report = report.clone();
                if expand(&mut trial, e).is_err() {
                    continue;
                }
                trial_report.actions.push(Action::Expand(e.with_slice(Slice::Prev)));
                if opts.fusion {
                    let separate = trial.jt_in() != trial.jt_out();
                    let (alpha, kept) = (trial.interface.at(Slice::Prev), trial.interface.at(Slice::Curr));
                    fuse_until_lifted(
                        vocab,
                        &mut trial.jt,
                        TreeId::Jt,
                        |t| (in_cluster(t, &alpha), out_cluster(t, &kept)),
                        None,
                        &mut trial_report,
                    );
                    if separate && trial.jt_in() == trial.jt_out() {
                        given_up.insert(e.prv);
                        report
                            .irreducible
                            .push(Irreducible { prv: e.with_slice(Slice::Prev), diagnosis: Diagnosis::FusionCascade });
                        continue;
                    }
                }
                *st = trial;
                report = trial_report;
                acted = true;
                break 'scan;
            }
        }
        if !acted {
            for i in probe(vocab, st) {
                if !report.irreducible.iter().any(|x| x.prv.prv == i.prv.prv) {
                    report.irreducible.push(i);
                }
            }
            return report;
        }
    }
}

/// Steps that [`probe`] runs: the initial tree, the template fed by it, and
/// the template fed by itself until its message shapes repeat.
const PROBE_STEPS: u32 = 4;

/// Runs the engine on the transformed structures with every domain cut to
/// two constants, fixed potentials and no evidence, and returns the
/// groundings it still performs as irreducible entries.
pub fn probe(vocab: &Vocab, st: &TemporalStructures) -> Vec<Irreducible> {
    let mut small = vocab.clone();
    for l in &mut small.logvars {
        l.domain.truncate(2);
    }
    let mut st = st.clone();
    for pf in st.j0.parfactors.iter_mut().chain(st.jt.parfactors.iter_mut()) {
        for (k, v) in pf.potential.iter_mut().enumerate() {
            *v = 1.0 + 0.1 * (k % 7) as f64;
        }
    }
    let engine = crate::ldjt::Ldjt { vocab: small, structures: st, report: GroundingReport::default() };
    let mut ctx = crate::lve::Ctx::default();
    let mut alpha = None;
    for t in 0..PROBE_STEPS {
        match engine.step(t, alpha.as_ref(), &[], &[], &mut ctx) {
            Ok((_, next)) => alpha = Some(next),
            Err(_) => break,
        }
    }
    let st = &engine.structures;
    let mut out: Vec<Irreducible> = Vec::new();
    for (name, logvar) in ctx.counter.details {
        let prv = st
            .jt
            .parfactors
            .iter()
            .chain(&st.j0.parfactors)
            .filter(|p| name.contains(p.name.as_str()))
            .flat_map(|p| p.args.iter().copied())
            .chain(st.jt.nodes.iter().flat_map(|n| n.prvs.iter().copied()))
            .find(|&a| lv(vocab, a).contains(&logvar));
        if let Some(prv) = prv {
            let i = Irreducible { prv, diagnosis: Diagnosis::Residual { parfactor: name, logvar } };
            if !out.iter().any(|x| x.prv == i.prv) {
                out.push(i);
            }
        }
    }
    out
}

fn in_cluster(t: &FoJTree, alpha: &BTreeSet<PrvRef>) -> Hook {
    t.find_label(crate::fojt::Label::is_in).map(|i| (i, alpha.clone()))
}

fn out_cluster(t: &FoJTree, kept: &BTreeSet<PrvRef>) -> Hook {
    t.find_label(crate::fojt::Label::is_out).map(|i| (i, kept.clone()))
}
