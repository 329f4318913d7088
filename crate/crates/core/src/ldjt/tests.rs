use super::*;
use crate::fojt::Label;
use crate::model::parse_model;
use crate::oracle;

const GEX: &str = include_str!("../../models/gex.model");

fn gex() -> Pdm {
    parse_model(GEX).unwrap()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| if *y == 0.0 { x.abs() } else { ((x - y) / y).abs() }).fold(0.0, f64::max)
}

fn names(vocab: &Vocab, s: &BTreeSet<PrvId>) -> Vec<String> {
    s.iter().map(|&p| vocab.prvs[p].name.clone()).collect()
}

#[test]
fn gex_interface_is_hot_and_pub() {
    let pdm = gex();
    let i = compute_interface(&pdm).unwrap();
    assert_eq!(names(&pdm.vocab, &i.prvs), vec!["Hot", "Pub"]);
    assert!(i.expanded.is_empty());
}

#[test]
fn model_without_inter_slice_parfactor_has_empty_interface() {
    let text: String =
        GEX.lines().filter(|l| !l.starts_with("slice") && !l.contains("0.8, fft: 0.3")).collect::<Vec<_>>().join("\n");
    let pdm = parse_model(&text).unwrap();
    assert_eq!(compute_interface(&pdm).unwrap_err(), InferenceError::EmptyInterface);
}

#[test]
fn every_prv_with_a_successor_is_interface() {
    let text = "prv A\nprv B\nparfactor g [ A, B ] table { ff: 1, ft: 2, tf: 3, tt: 4 }\n\
                slice parfactor h [ A@0, B@0, A@1, B@1 ] table { \
                ffff: 1, ffft: 1, fftf: 1, fftt: 1, ftff: 1, ftft: 1, fttf: 1, fttt: 1, \
                tfff: 1, tfft: 1, tftf: 1, tftt: 1, ttff: 1, ttft: 1, tttf: 1, tttt: 2 }\n";
    let pdm = parse_model(text).unwrap();
    assert_eq!(names(&pdm.vocab, &compute_interface(&pdm).unwrap().prvs), vec!["A", "B"]);
}

#[test]
fn gex_template_tree_has_three_parclusters() {
    let pdm = gex();
    let st = TemporalStructures::build(&pdm).unwrap();
    st.j0.validate(&pdm.vocab).unwrap();
    st.jt.validate(&pdm.vocab).unwrap();
    assert_eq!(
        st.jt.dump(&pdm.vocab),
        "C1 [in]: {Hot@t-1, Hot@t, Pub@t-1(X,P)} local {gH, gI_t-1}\n\
         C2 [out]: {Hot@t, AttC@t(A), Pub@t(X,P)} local {g0, gI_t}\n\
         C3: {Hot@t, AttC@t(A), DoR@t(X)} local {g1}\n\
         C2 - C3: {Hot@t, AttC@t(A)}\n\
         C1 - C2: {Hot@t}\n"
    );
    assert_eq!(st.j0.nodes[st.j0_out()].label, Some(Label::InOut));
}

#[test]
fn inter_separator_before_expanding() {
    let pdm = gex();
    let st = TemporalStructures::build(&pdm).unwrap();
    let out: BTreeSet<PrvRef> = st.jt.nodes[st.jt_out()]
        .prvs
        .iter()
        .filter(|p| p.slice == Slice::Curr)
        .map(|p| p.with_slice(Slice::Prev))
        .collect();
    let inn: BTreeSet<PrvRef> =
        st.jt.nodes[st.jt_in()].prvs.iter().filter(|p| p.slice == Slice::Prev).copied().collect();
    let sep: BTreeSet<PrvRef> = out.intersection(&inn).copied().collect();
    assert_eq!(sep, st.inter_separator());
    let labels: Vec<String> = sep.iter().map(|&p| pdm.vocab.prv_label(p)).collect();
    assert_eq!(labels, vec!["Hot@t-1", "Pub@t-1(X,P)"]);
}

#[test]
fn interface_parfactor_is_neutral() {
    let pdm = gex();
    let st = TemporalStructures::build(&pdm).unwrap();
    let mut with = st.j0.clone();
    with.structural = vec![false; with.parfactors.len()];
    let mut ctx = Ctx::default();
    let mut a = st.j0.instantiate(&pdm.vocab).unwrap();
    let mut b = with.instantiate(&pdm.vocab).unwrap();
    assert_eq!(b.locals.iter().map(Vec::len).sum::<usize>(), 3);
    a.pass_messages(&st.j0, &mut ctx).unwrap();
    b.pass_messages(&with, &mut ctx).unwrap();
    for q in &pdm.queries {
        let r = PrvRef::new(q.prv, Slice::Static);
        let pa = a.answer(&st.j0, &pdm.vocab, r, &q.args, &mut ctx).unwrap();
        let pb = b.answer(&with, &pdm.vocab, r, &q.args, &mut ctx).unwrap();
        assert!(rel(&pa, &pb) < 1e-12);
    }
}

#[test]
fn first_step_matches_oracle() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let (answers, _) = l.step(0, None, &[], &pdm.queries, &mut Ctx::default()).unwrap();
    for (q, p) in pdm.queries.iter().zip(&answers) {
        assert!(rel(p, &oracle::query(&pdm, q, 0, 0).unwrap()) < 1e-9);
    }
}

#[test]
fn alpha_is_retagged_to_the_previous_slice() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let mut ctx = Ctx::default();
    let (_, a0) = l.step(0, None, &[], &[], &mut ctx).unwrap();
    let (_, a1) = l.step(1, Some(&a0), &[], &[], &mut ctx).unwrap();
    let allowed = l.structures.interface.at(Slice::Prev);
    for a in [&a0, &a1] {
        assert!(!a.parfactors.is_empty());
        assert!(a.parfactors.iter().all(|p| p.args.iter().all(|x| allowed.contains(&x.prv))));
    }
    assert_eq!((a0.step, a1.step), (0, 1));
}

#[test]
fn stale_state_is_rejected() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let mut ctx = Ctx::default();
    let (_, a0) = l.step(0, None, &[], &[], &mut ctx).unwrap();
    assert!(matches!(l.step(2, Some(&a0), &[], &[], &mut ctx), Err(InferenceError::Precondition(_))));
    assert!(matches!(l.step(1, None, &[], &[], &mut ctx), Err(InferenceError::Precondition(_))));
}

#[test]
fn five_steps_match_oracle() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let mut ctx = Ctx::default();
    let run = l.run(&pdm, &pdm.queries, 5, &mut ctx).unwrap();
    assert_eq!(run.steps.len(), 6);
    for s in &run.steps {
        for (q, p) in pdm.queries.iter().zip(&s.answers) {
            let o = oracle::query(&pdm, q, s.t, s.t).unwrap();
            assert!(rel(p, &o) < 1e-9, "t={} {p:?} vs {o:?}", s.t);
        }
    }
    assert_eq!(run.grounding_events, 0);
}

#[test]
fn zero_steps_use_the_initial_tree_only() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let run = l.run(&pdm, &pdm.queries, 0, &mut Ctx::default()).unwrap();
    assert_eq!(run.steps.len(), 1);
    assert_eq!(run.steps[0].answers.len(), 3);
}

#[test]
fn runs_are_deterministic() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let a = l.run(&pdm, &pdm.queries, 4, &mut Ctx::default()).unwrap();
    let b = l.run(&pdm, &pdm.queries, 4, &mut Ctx::default()).unwrap();
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!(x.answers, y.answers);
    }
}

#[test]
fn prediction_matches_oracle() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let mut ctx = Ctx::default();
    let mut alpha = None;
    for t in 0..=3 {
        alpha = Some(l.step(t, alpha.as_ref(), pdm.evidence.at(t), &[], &mut ctx).unwrap().1);
    }
    let alpha = alpha.unwrap();
    for pi in [4, 6] {
        let p = l.predict(&alpha, pi, &pdm.queries, &mut ctx).unwrap();
        for (q, p) in pdm.queries.iter().zip(&p) {
            assert!(rel(p, &oracle::query(&pdm, q, pi, 3).unwrap()) < 1e-9);
        }
    }
    assert!(l.predict(&alpha, 3, &pdm.queries, &mut ctx).is_err());
}

#[test]
fn unrolled_baseline_matches_stepwise_run() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let a = l.run(&pdm, &pdm.queries, 3, &mut Ctx::default()).unwrap();
    let b = ljt_unrolled(&pdm, &pdm.queries, 3, true, &mut Ctx::default()).unwrap();
    for (x, y) in a.steps.iter().zip(&b.steps) {
        for (p, q) in x.answers.iter().zip(&y.answers) {
            assert!(rel(p, q) < 1e-9);
        }
    }
}

#[test]
fn unrolled_model_sizes() {
    let pdm = gex();
    assert_eq!(unrolled_model(&pdm, 0).parfactors.len(), 2);
    assert_eq!(unrolled_model(&pdm, 3).parfactors.len(), 2 + 3 * 3);
}

#[test]
fn expanded_in_cluster_converts_once() {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let mut ctx = Ctx::default();
    let (_, a0) = l.step(0, None, &[], &[], &mut ctx).unwrap();
    let st = &l.structures;
    let mut inst = st.jt.instantiate(&pdm.vocab).unwrap();
    let i = st.jt_in();
    inst.locals[i].extend(a0.parfactors);
    let j = st.jt.neighbours(i)[0];
    let sep = st.jt.separator(i, j);
    let mut fresh = Ctx::default();
    let m = eliminate(inst.gather(&st.jt, i, Some(j)), &|c: &lve::Class| sep.contains(&c.prv), &mut fresh).unwrap();
    assert!(m.iter().all(|p| p.args.iter().all(|a| sep.contains(&a.prv))));
    assert_eq!(fresh.counter.events, 0);
    assert_eq!(fresh.conversions, 1);
}
