//! Temporal inference: the forward interface, the two template trees, α
//! messages between consecutive steps, and the filtering/prediction loop.
//! The unrolled baseline runs the static tree algorithm on the model
//! unrolled up to each step.

use std::collections::BTreeSet;
use std::time::Instant;

use crate::error::InferenceError;
use crate::fojt::{FoJTree, Instance, Label};
use crate::guard::{self, GroundingReport};
use crate::lve::{self, eliminate, Ctx};
use crate::model::{Constraint, GroundAtom, Observation, Parfactor, Pdm, Pm, PrvId, PrvRef, Slice, Vocab};

/// Forward interface: PRVs whose previous-slice occurrence has a successor
/// in the current slice, plus PRVs later added by expanding.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Interface {
    pub prvs: BTreeSet<PrvId>,
    pub expanded: BTreeSet<PrvId>,
}

impl Interface {
    pub fn all(&self) -> BTreeSet<PrvId> {
        self.prvs.union(&self.expanded).copied().collect()
    }

    pub fn at(&self, slice: Slice) -> BTreeSet<PrvRef> {
        self.all().into_iter().map(|p| PrvRef::new(p, slice)).collect()
    }
}

/// Prev-slice PRVs that share an inter-slice parfactor with a current-slice
/// PRV.
pub fn compute_interface(pdm: &Pdm) -> Result<Interface, InferenceError> {
    let prvs: BTreeSet<PrvId> = pdm
        .inter()
        .into_iter()
        .flat_map(|pf| pf.args.iter().filter(|a| a.slice == Slice::Prev).map(|a| a.prv))
        .collect();
    if prvs.is_empty() {
        return Err(InferenceError::EmptyInterface);
    }
    Ok(Interface { prvs, expanded: BTreeSet::new() })
}

/// The initial tree `J0` and the template `Jt`, both labelled with their
/// in- and out-clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalStructures {
    pub interface: Interface,
    pub j0: FoJTree,
    pub jt: FoJTree,
}

fn interface_parfactor(vocab: &Vocab, name: &str, interface: &Interface, slice: Slice) -> Parfactor {
    let args: Vec<PrvRef> = interface.prvs.iter().map(|&p| PrvRef::new(p, slice)).collect();
    let size = args.iter().map(|a| vocab.card(a.prv)).product();
    Parfactor { name: name.into(), args, potential: vec![1.0; size], constraint: Constraint::Top }
}

fn label_holder(tree: &mut FoJTree, pf: usize, label: Label) {
    let node = tree.nodes.iter().position(|n| n.local.contains(&pf)).expect("every parfactor is assigned");
    let n = &mut tree.nodes[node];
    n.label = Some(match (n.label, label) {
        (None, l) => l,
        (Some(a), b) if a == b => a,
        _ => Label::InOut,
    });
}

impl TemporalStructures {
    /// Builds both trees with the interface parfactors that force the
    /// interface PRVs into one parcluster per slice.
    pub fn build(pdm: &Pdm) -> Result<TemporalStructures, InferenceError> {
        let interface = compute_interface(pdm)?;
        let vocab = &pdm.vocab;

        let mut p0 = pdm.intra().to_vec();
        p0.push(interface_parfactor(vocab, "gI_0", &interface, Slice::Static));
        let mut structural = vec![false; p0.len()];
        structural[p0.len() - 1] = true;
        let mut j0 = FoJTree::build(vocab, p0, structural);
        let gi0 = j0.parfactors.len() - 1;
        label_holder(&mut j0, gi0, Label::InOut);

        // inter, gI_{t-1}, intra@t, gI_t; non-interface t-1 PRVs never enter
        let mut pt: Vec<Parfactor> = pdm.inter().into_iter().cloned().collect();
        let n_inter = pt.len();
        pt.push(interface_parfactor(vocab, "gI_t-1", &interface, Slice::Prev));
        pt.extend(pdm.intra().iter().map(|p| p.with_slice(Slice::Curr)));
        pt.push(interface_parfactor(vocab, "gI_t", &interface, Slice::Curr));
        let mut structural = vec![false; pt.len()];
        structural[n_inter] = true;
        structural[pt.len() - 1] = true;
        let last = pt.len() - 1;
        let mut jt = FoJTree::build(vocab, pt, structural);
        label_holder(&mut jt, n_inter, Label::In);
        label_holder(&mut jt, last, Label::Out);
        Ok(TemporalStructures { interface, j0, jt })
    }

    /// The parcluster of `J0` that talks to the next tree.
    pub fn j0_out(&self) -> usize {
        self.j0.find_label(Label::is_out).expect("J0 has an interface parcluster")
    }

    pub fn jt_in(&self) -> usize {
        self.jt.find_label(Label::is_in).expect("Jt has an in-cluster")
    }

    pub fn jt_out(&self) -> usize {
        self.jt.find_label(Label::is_out).expect("Jt has an out-cluster")
    }

    /// PRVs shared by the out-cluster of one tree and the in-cluster of the
    /// next, tagged with the previous slice.
    pub fn inter_separator(&self) -> BTreeSet<PrvRef> {
        self.interface.at(Slice::Prev)
    }
}

/// Forward message: parfactors over interface PRVs tagged `Prev`, computed
/// at step `step` for step `step + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Alpha {
    pub step: u32,
    pub parfactors: Vec<lve::Parfactor>,
    /// Observations of the step on interface PRVs. They were absorbed
    /// before the message was computed, so the next step enters them again
    /// for its inter-slice parfactors.
    pub evidence: Vec<Observation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Options {
    pub fusion: bool,
    pub expanding: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { fusion: true, expanding: true }
    }
}

/// Answers of one step, in query order.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub t: u32,
    pub answers: Vec<Vec<f64>>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub steps: Vec<StepResult>,
    pub grounding_events: usize,
}

/// A dynamic model prepared for forward inference.
#[derive(Clone, Debug)]
pub struct Ldjt {
    pub vocab: Vocab,
    pub structures: TemporalStructures,
    pub report: GroundingReport,
}

impl Ldjt {
    pub fn new(pdm: &Pdm, opts: Options) -> Result<Ldjt, InferenceError> {
        let mut structures = TemporalStructures::build(pdm)?;
        let report = guard::prevent_all(&pdm.vocab, &mut structures, opts);
        Ok(Ldjt { vocab: pdm.vocab.clone(), structures, report })
    }

    fn tree(&self, t: u32) -> &FoJTree {
        if t == 0 {
            &self.structures.j0
        } else {
            &self.structures.jt
        }
    }

    /// One forward step: takes the state of step `t - 1`, enters the
    /// observations of step `t`, answers `queries` at step `t` and returns
    /// the state for step `t + 1`.
    pub fn step(
        &self,
        t: u32,
        alpha: Option<&Alpha>,
        obs: &[Observation],
        queries: &[GroundAtom],
        ctx: &mut Ctx,
    ) -> Result<(Vec<Vec<f64>>, Alpha), InferenceError> {
        let tree = self.tree(t);
        let (slice, out) =
            if t == 0 { (Slice::Static, self.structures.j0_out()) } else { (Slice::Curr, self.structures.jt_out()) };
        let mut inst: Instance = tree.instantiate(&self.vocab)?;
        if t > 0 {
            let a = alpha.ok_or_else(|| InferenceError::Precondition(format!("step {t} needs the previous state")))?;
            if a.step + 1 != t {
                return Err(InferenceError::Precondition(format!("state of step {} used at step {t}", a.step)));
            }
            inst.locals[self.structures.jt_in()].extend(a.parfactors.iter().cloned());
            inst.enter_evidence(&self.vocab, a.step, &a.evidence, Slice::Prev, ctx)?;
        }
        inst.enter_evidence(&self.vocab, t, obs, slice, ctx)?;
        inst.pass_messages(tree, ctx)?;
        let mut answers = Vec::with_capacity(queries.len());
        for q in queries {
            self.vocab.check_atom(q)?;
            answers.push(inst.answer(tree, &self.vocab, PrvRef::new(q.prv, slice), &q.args, ctx)?);
        }
        let keep_prvs = self.structures.interface.all();
        let keep = |c: &lve::Class| c.prv.slice == slice && keep_prvs.contains(&c.prv.prv);
        let mut parfactors = eliminate(inst.gather(tree, out, None), &keep, ctx)?;
        for p in &mut parfactors {
            p.retag(slice, Slice::Prev);
        }
        let evidence = obs.iter().filter(|o| keep_prvs.contains(&o.atom.prv)).cloned().collect();
        Ok((answers, Alpha { step: t, parfactors, evidence }))
    }

    /// Filtering for steps `0..=t_max` with the model's evidence.
    pub fn run(&self, pdm: &Pdm, queries: &[GroundAtom], t_max: u32, ctx: &mut Ctx) -> Result<Run, InferenceError> {
        let start = ctx.counter.events;
        let mut steps = Vec::new();
        let mut alpha: Option<Alpha> = None;
        for t in 0..=t_max {
            ctx.check_time()?;
            let clock = Instant::now();
            let (answers, next) = self.step(t, alpha.as_ref(), pdm.evidence.at(t), queries, ctx)?;
            steps.push(StepResult { t, answers, seconds: clock.elapsed().as_secs_f64() });
            alpha = Some(next);
        }
        Ok(Run { steps, grounding_events: ctx.counter.events - start })
    }

    /// `P(q at step pi | evidence up to step t)` for `pi > t`, by stepping
    /// forward from the state of step `t` without evidence.
    pub fn predict(
        &self,
        from: &Alpha,
        pi: u32,
        queries: &[GroundAtom],
        ctx: &mut Ctx,
    ) -> Result<Vec<Vec<f64>>, InferenceError> {
        if pi <= from.step {
            return Err(InferenceError::Precondition(format!(
                "prediction target {pi} is not after step {}",
                from.step
            )));
        }
        let mut alpha = from.clone();
        for k in from.step + 1..pi {
            alpha = self.step(k, Some(&alpha), &[], &[], ctx)?.1;
        }
        Ok(self.step(pi, Some(&alpha), &[], queries, ctx)?.0)
    }
}

/// The model unrolled up to step `t` as one static model over `Step(k)`
/// slices.
pub fn unrolled_model(pdm: &Pdm, t: u32) -> Pm {
    let mut parfactors: Vec<Parfactor> = pdm
        .intra()
        .iter()
        .map(|p| Parfactor { name: format!("{}@0", p.name), ..p.with_slice(Slice::Step(0)) })
        .collect();
    let inter = pdm.inter();
    for k in 1..=t {
        parfactors.extend(
            pdm.intra().iter().map(|p| Parfactor { name: format!("{}@{k}", p.name), ..p.with_slice(Slice::Step(k)) }),
        );
        parfactors.extend(inter.iter().map(|p| Parfactor { name: format!("{}@{k}", p.name), ..p.at_steps(k - 1, k) }));
    }
    Pm { parfactors }
}

/// Filtering with the static algorithm: for every step the model is
/// unrolled up to that step, a tree is built and fused, evidence entered and
/// the queries answered.
pub fn ljt_unrolled(
    pdm: &Pdm,
    queries: &[GroundAtom],
    t_max: u32,
    fusion: bool,
    ctx: &mut Ctx,
) -> Result<Run, InferenceError> {
    let start = ctx.counter.events;
    let mut steps = Vec::new();
    for t in 0..=t_max {
        ctx.check_time()?;
        let clock = Instant::now();
        let pm = unrolled_model(pdm, t);
        let mut tree = FoJTree::for_model(&pdm.vocab, &pm);
        if fusion {
            guard::fuse_static(&pdm.vocab, &mut tree);
        }
        let mut inst = tree.instantiate(&pdm.vocab)?;
        for k in 0..=t {
            inst.enter_evidence(&pdm.vocab, k, pdm.evidence.at(k), Slice::Step(k), ctx)?;
        }
        inst.pass_messages(&tree, ctx)?;
        let mut answers = Vec::with_capacity(queries.len());
        for q in queries {
            pdm.vocab.check_atom(q)?;
            answers.push(inst.answer(&tree, &pdm.vocab, PrvRef::new(q.prv, Slice::Step(t)), &q.args, ctx)?);
        }
        steps.push(StepResult { t, answers, seconds: clock.elapsed().as_secs_f64() });
    }
    Ok(Run { steps, grounding_events: ctx.counter.events - start })
}

#[cfg(test)]
mod tests;
