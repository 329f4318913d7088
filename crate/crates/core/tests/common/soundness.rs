//! Operator soundness: every lifted operator applied to random parfactors is
//! compared table by table with the brute-force ground product.

use std::collections::BTreeMap;

use ldjt::lve::{
    absorb_evidence, count_convert, expand_counted, ground_logvar, lift_sum_out, lifted_multiply, marginal, split, Ctx,
    Parfactor,
};
use rand::Rng;

use super::{cartesian, log_sum_exp, log_table, max_dev, random_parfactor, rng, small_vocab, Universe};

/// Per-operator number of checks and the largest deviation seen.
#[derive(Debug, Default)]
pub struct Report {
    pub checks: BTreeMap<&'static str, usize>,
    pub max_dev: f64,
    pub worst: Option<(&'static str, u64)>,
}

impl Report {
    fn record(&mut self, op: &'static str, seed: u64, dev: f64) {
        *self.checks.entry(op).or_default() += 1;
        let dev = if dev.is_nan() { f64::INFINITY } else { dev };
        if dev > self.max_dev {
            self.max_dev = dev;
            self.worst = Some((op, seed));
        }
    }
}

fn all(u: &Universe) -> Vec<usize> {
    (0..u.vars.len()).collect()
}

fn same_product(a: &[Parfactor], b: &[Parfactor]) -> f64 {
    let u = Universe::of(&[a, b]);
    max_dev(&log_table(a, &u, &all(&u), |_| true), &log_table(b, &u, &all(&u), |_| true))
}

fn marginalised(input: &[Parfactor], output: &[Parfactor]) -> f64 {
    let u = Universe::of(&[input]);
    let out = Universe::of(&[output]);
    let keep: Vec<usize> = out.vars.iter().map(|v| u.index(v).expect("output variable not in input")).collect();
    // evaluate the output on the input universe so both tables share an index
    max_dev(&log_table(input, &u, &keep, |_| true), &project(output, &u, &keep))
}

/// Log table of `pfs` over `keep` when every variable of `pfs` is in `keep`.
fn project(pfs: &[Parfactor], u: &Universe, keep: &[usize]) -> Vec<f64> {
    let sub = Universe::of(&[pfs]);
    let order: Vec<usize> = keep.iter().map(|&k| sub.index(&u.vars[k]).unwrap()).collect();

    log_table(pfs, &sub, &order, |_| true)
}

/// Runs every operator on parfactors generated from `seed`.
pub fn check_seed(seed: u64, report: &mut Report) {
    let mut r = rng(seed);
    let (slots, prvs) = small_vocab(&mut r);
    let g1 = random_parfactor(&mut r, "a", &slots, &prvs);
    let g2 = random_parfactor(&mut r, "b", &slots, &prvs);
    let ctx = Ctx::default();

    if let Ok(p) = lifted_multiply(&g1, &g2, &ctx) {
        report.record("multiply", seed, same_product(&[g1.clone(), g2.clone()], &[p]));
    }

    let mut variants = vec![g1.clone()];
    for s in 0..g1.slots.len() {
        if let Ok(c) = count_convert(&g1, s) {
            report.record("count_convert", seed, same_product(std::slice::from_ref(&g1), std::slice::from_ref(&c)));
            let mut ctx = Ctx::default();
            let ai = c.args.iter().position(|a| a.counted.is_some()).unwrap();
            let e = expand_counted(&c, ai, &mut ctx).unwrap();
            report.record("expand_counted", seed, same_product(std::slice::from_ref(&c), &[e]));
            variants.push(c);
        }
    }
    for v in &variants {
        for ai in 0..v.args.len() {
            if let Ok(out) = lift_sum_out(v, ai) {
                report.record("sum_out", seed, marginalised(std::slice::from_ref(v), &[out]));
            }
        }
    }
    for s in 0..g1.slots.len() {
        let mut ctx = Ctx::default();
        let parts = ground_logvar(&g1, s, &mut ctx).unwrap();
        report.record("ground_logvar", seed, same_product(std::slice::from_ref(&g1), &parts));
        let vals = &g1.slots[s].values;
        let subset: Vec<u32> = vals.iter().copied().filter(|_| r.gen_bool(0.5)).collect();
        let (x, y) = split(&g1, s, &subset).unwrap();
        let pieces: Vec<Parfactor> = x.into_iter().chain(y).collect();
        report.record("split", seed, same_product(std::slice::from_ref(&g1), &pieces));
    }

    // evidence on some instances of a random argument
    let ai = r.gen_range(0..g1.args.len());
    let arg = g1.args[ai].clone();
    let class = g1.class_of(&arg);
    let instances: Vec<Vec<u32>> = cartesian(&class.sets).into_iter().filter(|_| r.gen_bool(0.6)).collect();
    let value = r.gen_range(0..arg.card as u32);
    let mut ctx = Ctx::default();
    if let Ok(out) = absorb_evidence(&g1, arg.prv, &instances, value, &mut ctx) {
        let u = Universe::of(&[std::slice::from_ref(&g1)]);
        let observed: Vec<usize> = instances.iter().map(|t| u.index(&(arg.prv, t.clone())).unwrap()).collect();
        let sub = Universe::of(&[&out]);
        let keep: Vec<usize> = sub.vars.iter().map(|v| u.index(v).unwrap()).collect();
        let expect =
            log_table(std::slice::from_ref(&g1), &u, &keep, |a| observed.iter().all(|&o| a[o] == value as usize));
        report.record("absorb_evidence", seed, max_dev(&expect, &project(&out, &u, &keep)));
    }

    // full elimination: marginal of a random ground variable
    let pfs = vec![g1.clone(), g2.clone()];
    let u = Universe::of(&[&pfs]);
    let q = r.gen_range(0..u.vars.len());
    let mut ctx = Ctx::default();
    if let Ok(m) = marginal(pfs.clone(), u.vars[q].0, &u.vars[q].1, &mut ctx) {
        let logs = log_table(&pfs, &u, &[q], |_| true);
        let z = log_sum_exp(&logs);
        let dev = logs.iter().zip(&m).map(|(l, p)| (l - z - p.ln()).abs()).fold(0.0, f64::max);
        report.record("eliminate", seed, dev);
    }
}
