//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero only when a correctness criterion fails. The two
//! timing criteria depend on the machine and are reported without failing
//! the build.

mod common;

use std::time::{Duration, Instant};

use common::pdm::random_pdm;
use common::soundness::{check_seed, Report};
use common::{rel_err, rng};
use ldjt::cli::{bench_row, Algorithm};
use ldjt::fojt::FoJTree;
use ldjt::guard;
use ldjt::ldjt::{ljt_unrolled, Ldjt, Options, TemporalStructures};
use ldjt::lve::{self, eliminate, Budget, Ctx};
use ldjt::model::{parse_model, Pdm, PrvRef, Slice};
use ldjt::oracle;

const GEX: &str = include_str!("../models/gex.model");

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn gex() -> Pdm {
    parse_model(GEX).unwrap()
}

fn evaluation_model() -> Pdm {
    let mut pdm = gex();
    pdm.override_domain("X", 10).unwrap();
    pdm.override_domain("P", 3).unwrap();
    pdm.override_domain("A", 20).unwrap();
    pdm.evidence = Default::default();
    pdm
}

fn models() -> Vec<(String, Pdm)> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/models");
    let mut out: Vec<(String, Pdm)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "model"))
        .map(|p| (p.display().to_string(), parse_model(&std::fs::read_to_string(&p).unwrap()).unwrap()))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn oracle_equivalence() -> Outcome {
    let base = gex();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..200u64 {
        let mut pdm = base.clone();
        pdm.randomize_potentials(seed);
        let l = Ldjt::new(&pdm, Options::default()).unwrap();
        for t_max in [0u32, 1, 2, 3, 5] {
            let mut ctx = Ctx::default();
            let mut alpha = None;
            for t in 0..=t_max {
                let (answers, next) = l.step(t, alpha.as_ref(), pdm.evidence.at(t), &pdm.queries, &mut ctx).unwrap();
                if t == t_max {
                    for (q, p) in pdm.queries.iter().zip(&answers) {
                        worst = worst.max(rel_err(p, &oracle::query(&pdm, q, t, t).unwrap()));
                        checked += 1;
                    }
                }
                alpha = Some(next);
            }
            let from = alpha.unwrap();
            for pi in [t_max + 1, t_max + 2] {
                let answers = l.predict(&from, pi, &pdm.queries, &mut ctx).unwrap();
                for (q, p) in pdm.queries.iter().zip(&answers) {
                    worst = worst.max(rel_err(p, &oracle::query(&pdm, q, pi, t_max).unwrap()));
                    checked += 1;
                }
            }
        }
    }
    Outcome::new(worst <= 1e-9, format!("{checked} marginals, max relative error {worst:.2e}"))
}

fn worked_example() -> Outcome {
    let pdm = gex();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    let render = l.report.render(&pdm.vocab);
    let expands: Vec<&str> = render.lines().filter(|x| x.starts_with("EXPAND")).collect();
    let attc = pdm.vocab.prv_id("AttC").unwrap();
    let one_expand = expands == ["EXPAND AttC@t-1(A)"]
        && l.report.expanded() == [PrvRef::new(attc, Slice::Prev)]
        && l.report.irreducible.is_empty();

    // the in-cluster's message towards the rest of the tree
    let mut ctx = Ctx::default();
    let (_, a0) = l.step(0, None, &[], &[], &mut ctx).unwrap();
    let st = &l.structures;
    let mut inst = st.jt.instantiate(&pdm.vocab).unwrap();
    let i = st.jt_in();
    inst.locals[i].extend(a0.parfactors);
    let mut conversions = 0;
    let mut in_events = 0;
    for j in st.jt.neighbours(i) {
        let sep = st.jt.separator(i, j);
        let mut fresh = Ctx::default();
        eliminate(inst.gather(&st.jt, i, Some(j)), &|c: &lve::Class| sep.contains(&c.prv), &mut fresh).unwrap();
        conversions += fresh.conversions;
        in_events += fresh.counter.events;
    }

    let run = l.run(&pdm, &pdm.queries, 100, &mut Ctx::default()).unwrap();
    Outcome::new(
        one_expand && conversions == 1 && in_events == 0 && run.grounding_events == 0,
        format!(
            "expansions {expands:?}, irreducible {}, in-cluster conversions {conversions}, 100-step grounding events {}",
            l.report.irreducible.len(),
            run.grounding_events
        ),
    )
}

/// Per-step seconds of a full run, the best of `reps` runs.
fn per_step(pdm: &Pdm, algorithm: Algorithm, max_t: u32, reps: u32) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut events = 0;
    for rep in 0..reps {
        let row = bench_row(pdm, algorithm, max_t, rep, 0, Duration::from_secs(300)).unwrap();
        best = best.min(row.seconds.unwrap_or(f64::INFINITY));
        events = row.grounding_events;
    }
    (best / (max_t + 1) as f64, events)
}

fn baseline_contrast() -> Outcome {
    let pdm = evaluation_model();
    let (ext, ext_events) = per_step(&pdm, Algorithm::LdjtExtended, 100, 3);
    let (orig, orig_events) = per_step(&pdm, Algorithm::LdjtOriginal, 100, 3);
    let ratio = orig / ext;
    Outcome::new(
        orig_events > 0 && ratio >= 10.0,
        format!(
            "original {orig_events} grounding events, extended {ext_events}; per step {:.3} ms vs {:.3} ms, ratio {ratio:.2} (needs >= 10)",
            orig * 1e3,
            ext * 1e3
        ),
    )
}

fn scaling_shapes() -> Outcome {
    let pdm = evaluation_model();
    let l = Ldjt::new(&pdm, Options::default()).unwrap();
    // each step's time is the minimum over several runs to damp scheduler noise
    let mut best = vec![f64::INFINITY; 101];
    for _ in 0..5 {
        let run = l.run(&pdm, &pdm.queries, 100, &mut Ctx::default()).unwrap();
        for s in &run.steps {
            best[s.t as usize] = best[s.t as usize].min(s.seconds);
        }
    }
    let window = &best[10..=100];
    let max = window.iter().copied().fold(0.0, f64::max);
    let min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let linear = max / min <= 3.0;

    let unrolled = |t_max: u32| -> Option<f64> {
        let budget = Budget { deadline: Some(Instant::now() + Duration::from_secs(300)), ..Budget::default() };
        let clock = Instant::now();
        ljt_unrolled(&pdm, &pdm.queries, t_max, true, &mut Ctx::new(budget)).ok()?;
        Some(clock.elapsed().as_secs_f64())
    };
    let t16 = unrolled(16).expect("unrolled run at 16 steps");
    let (superlinear, t32) = match unrolled(32) {
        Some(t32) => (t32 > 8.0 * t16, format!("{t32:.3} s")),
        None => (true, "timeout".to_string()),
    };
    Outcome::new(
        linear && superlinear,
        format!(
            "extended per-step max/min over t in [10,100] = {:.2} (needs <= 3); unrolled 16 -> {t16:.3} s, 32 -> {t32} (needs > 8x)",
            max / min
        ),
    )
}

fn structural_invariants() -> Outcome {
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut note = |name: &str, what: &str, r: Result<(), Vec<String>>| {
        checked += 1;
        if let Err(v) = r {
            violations.push(format!("{name} {what}: {v:?}"));
        }
    };
    for (name, pdm) in models() {
        let tree = FoJTree::for_model(&pdm.vocab, &pdm.g0);
        note(&name, "build", tree.validate(&pdm.vocab));
        for k in 0..tree.edges.len() {
            let mut t = tree.clone();
            let (a, b) = t.edges[k];
            t.fuse(a, b);
            note(&name, "fuse", t.validate(&pdm.vocab));
        }
        let st = TemporalStructures::build(&pdm).unwrap();
        note(&name, "J0", st.j0.validate(&pdm.vocab));
        note(&name, "Jt", st.jt.validate(&pdm.vocab));
        for p in 0..pdm.vocab.prvs.len() {
            let mut s = st.clone();
            if guard::expand(&mut s, PrvRef::new(p, Slice::Prev)).is_ok() {
                note(&name, "expand J0", s.j0.validate(&pdm.vocab));
                note(&name, "expand Jt", s.jt.validate(&pdm.vocab));
            }
        }
        let mut s = st.clone();
        guard::prevent_all(&pdm.vocab, &mut s, Options::default());
        note(&name, "prevent J0", s.j0.validate(&pdm.vocab));
        note(&name, "prevent Jt", s.jt.validate(&pdm.vocab));
    }
    let detail = format!("{checked} trees checked, {} violations {violations:?}", violations.len());
    Outcome::new(violations.is_empty(), detail)
}

fn m_separation() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..50u64 {
        let mut r = rng(seed);
        let t_max = (seed % 5) as u32;
        let pdm = random_pdm(&mut r, t_max);
        let l = Ldjt::new(&pdm, Options::default()).unwrap();
        let a = l.run(&pdm, &pdm.queries, t_max, &mut Ctx::default()).unwrap();
        let b = ljt_unrolled(&pdm, &pdm.queries, t_max, true, &mut Ctx::default()).unwrap();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            for (p, q) in x.answers.iter().zip(&y.answers) {
                let e = rel_err(p, q);
                worst = worst.max(e);
                if e > 1e-9 {
                    failures.push(seed);
                }
            }
        }
    }
    failures.dedup();
    Outcome::new(failures.is_empty(), format!("50 models, max relative error {worst:.2e}, failing seeds {failures:?}"))
}

fn operator_soundness() -> Outcome {
    let mut report = Report::default();
    for seed in 0..400 {
        check_seed(seed, &mut report);
    }
    let checks: usize = report.checks.values().sum();
    Outcome::new(
        report.max_dev <= 1e-12,
        format!("{checks} operator applications, max log deviation {:.2e}", report.max_dev),
    )
}

/// Number, name, whether a failure breaks the build, and the check.
type Criterion = (u32, &'static str, bool, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "oracle equivalence", true, oracle_equivalence),
        (2, "worked example", true, worked_example),
        (3, "baseline contrast", false, baseline_contrast),
        (4, "scaling shapes", false, scaling_shapes),
        (5, "structural invariants", true, structural_invariants),
        (6, "m-separation equivalence", true, m_separation),
        (7, "operator soundness", true, operator_soundness),
    ];
    let mut broken = false;
    for (n, name, required, run) in criteria {
        let clock = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {verdict} [{:.1} s] {}", clock.elapsed().as_secs_f64(), o.detail);
        broken |= required && !o.pass;
    }
    if broken {
        std::process::exit(1);
    }
}
