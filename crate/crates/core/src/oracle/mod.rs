//! Ground reference inference.
//!
//! Unrolls a dynamic model into a propositional factor graph and answers
//! marginals by variable elimination with a min-degree order. Nothing here
//! touches the lifted kernel: tables, products and sums are implemented
//! locally so that agreement with the lifted engine is meaningful.

use std::collections::{BTreeSet, HashMap};

use crate::error::{InferenceError, ModelError};
use crate::model::{GroundAtom, Parfactor, Pdm, PrvId, Slice, Vocab};

/// Largest intermediate table the oracle builds.
pub const MAX_ENTRIES: u128 = 100_000_000;

/// A ground randvar: PRV instance at a concrete step.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundVar {
    pub prv: PrvId,
    pub step: u32,
    pub args: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    /// Variable indices, sorted and distinct.
    pub vars: Vec<usize>,
    /// Non-negative potentials, row-major over `vars`.
    pub table: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct GroundFactorGraph {
    pub vars: Vec<GroundVar>,
    pub cards: Vec<usize>,
    pub factors: Vec<Factor>,
    index: HashMap<GroundVar, usize>,
}

impl GroundFactorGraph {
    pub fn var_index(&self, v: &GroundVar) -> Option<usize> {
        self.index.get(v).copied()
    }

    fn intern(&mut self, v: GroundVar, card: usize) -> usize {
        if let Some(&i) = self.index.get(&v) {
            return i;
        }
        self.vars.push(v.clone());
        self.cards.push(card);
        self.index.insert(v, self.vars.len() - 1);
        self.vars.len() - 1
    }

    /// Adds every grounding of `pf`, mapping slices to steps with `step_of`.
    pub fn add_parfactor(
        &mut self,
        vocab: &Vocab,
        pf: &Parfactor,
        step_of: impl Fn(Slice) -> u32,
    ) -> Result<(), ModelError> {
        for subst in vocab.gr_parfactor(pf)? {
            let mut vars = Vec::with_capacity(pf.args.len());
            for a in &pf.args {
                let args =
                    vocab.prvs[a.prv].params.iter().map(|lv| subst.iter().find(|(l, _)| l == lv).unwrap().1).collect();
                let gv = GroundVar { prv: a.prv, step: step_of(a.slice), args };
                vars.push(self.intern(gv, vocab.card(a.prv)));
            }
            self.factors.push(reorder(&vars, &pf.potential, &self.cards));
        }
        Ok(())
    }
}

/// Builds a factor with sorted variables from one in argument order.
fn reorder(vars: &[usize], table: &[f64], cards: &[usize]) -> Factor {
    let mut sorted: Vec<usize> = vars.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let dims: Vec<usize> = sorted.iter().map(|&v| cards[v]).collect();
    let arg_dims: Vec<usize> = vars.iter().map(|&v| cards[v]).collect();
    let mut out = vec![0.0; dims.iter().product()];
    let mut idx = vec![0usize; sorted.len()];
    for slot in out.iter_mut() {
        let mut o = 0;
        for (k, &v) in vars.iter().enumerate() {
            let p = sorted.binary_search(&v).unwrap();
            o = o * arg_dims[k] + idx[p];
        }
        *slot = table[o];
        advance(&mut idx, &dims);
    }
    Factor { vars: sorted, table: out }
}

fn advance(idx: &mut [usize], dims: &[usize]) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < dims[d] {
            return;
        }
        idx[d] = 0;
    }
}

/// Grounds `G0` at step 0 and, for every `t` in `1..=t_max`, the slice-t
/// part and the inter-slice parfactors of the template.
pub fn unroll(pdm: &Pdm, t_max: u32) -> Result<GroundFactorGraph, ModelError> {
    let mut g = GroundFactorGraph::default();
    for pf in pdm.intra() {
        g.add_parfactor(&pdm.vocab, pf, |_| 0)?;
    }
    for t in 1..=t_max {
        for pf in &pdm.g_arrow.parfactors {
            if pf.args.iter().all(|a| a.slice == Slice::Prev) {
                continue;
            }
            g.add_parfactor(&pdm.vocab, pf, |s| if s == Slice::Prev { t - 1 } else { t })?;
        }
    }
    Ok(g)
}

/// Grounds a static parfactor list at step 0.
pub fn ground_static(vocab: &Vocab, pfs: &[Parfactor]) -> Result<GroundFactorGraph, ModelError> {
    let mut g = GroundFactorGraph::default();
    for pf in pfs {
        g.add_parfactor(vocab, pf, |_| 0)?;
    }
    Ok(g)
}

fn product(a: &Factor, b: &Factor, cards: &[usize]) -> Result<Factor, InferenceError> {
    let vars: Vec<usize> = a.vars.iter().chain(&b.vars).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let size: u128 = vars.iter().map(|&v| cards[v] as u128).product();
    if size > MAX_ENTRIES {
        return Err(InferenceError::Intractable { entries: size, limit: MAX_ENTRIES });
    }
    let dims: Vec<usize> = vars.iter().map(|&v| cards[v]).collect();
    let pa: Vec<usize> = a.vars.iter().map(|v| vars.binary_search(v).unwrap()).collect();
    let pb: Vec<usize> = b.vars.iter().map(|v| vars.binary_search(v).unwrap()).collect();
    let offset =
        |f: &Factor, pos: &[usize], idx: &[usize]| pos.iter().zip(&f.vars).fold(0, |o, (&p, &v)| o * cards[v] + idx[p]);
    let mut table = vec![0.0; size as usize];
    let mut idx = vec![0usize; vars.len()];
    for slot in table.iter_mut() {
        *slot = a.table[offset(a, &pa, &idx)] * b.table[offset(b, &pb, &idx)];
        advance(&mut idx, &dims);
    }
    Ok(Factor { vars, table })
}

fn sum_out(f: &Factor, var: usize, cards: &[usize]) -> Factor {
    let p = f.vars.binary_search(&var).unwrap();
    let vars: Vec<usize> = f.vars.iter().copied().filter(|&v| v != var).collect();
    let inner: usize = f.vars[p + 1..].iter().map(|&v| cards[v]).product();
    let k = cards[var];
    let outer = f.table.len() / (inner * k);
    let mut table = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            table[o * inner + i] = (0..k).map(|x| f.table[(o * k + x) * inner + i]).sum();
        }
    }
    Factor { vars, table }
}

fn condition(f: &Factor, var: usize, value: usize, cards: &[usize]) -> Factor {
    let p = f.vars.binary_search(&var).unwrap();
    let vars: Vec<usize> = f.vars.iter().copied().filter(|&v| v != var).collect();
    let inner: usize = f.vars[p + 1..].iter().map(|&v| cards[v]).product();
    let k = cards[var];
    let outer = f.table.len() / (inner * k);
    let mut table = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            table[o * inner + i] = f.table[(o * k + value) * inner + i];
        }
    }
    Factor { vars, table }
}

fn rescale(f: &mut Factor) {
    let m = f.table.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        f.table.iter_mut().for_each(|x| *x /= m);
    }
}

/// Exact marginal of variable `q` given `evidence` (variable, value).
pub fn ground_ve(g: &GroundFactorGraph, q: usize, evidence: &[(usize, usize)]) -> Result<Vec<f64>, InferenceError> {
    if q >= g.vars.len() {
        return Err(InferenceError::UnknownQuery(format!("#{q}")));
    }
    if let Some(&(_, v)) = evidence.iter().find(|(e, _)| *e == q) {
        let mut out = vec![0.0; g.cards[q]];
        out[v] = 1.0;
        return Ok(out);
    }
    let mut factors: Vec<Factor> = g.factors.clone();
    for &(var, value) in evidence {
        for f in factors.iter_mut() {
            if f.vars.binary_search(&var).is_ok() {
                *f = condition(f, var, value, &g.cards);
            }
        }
    }
    let mut remaining: BTreeSet<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
    remaining.remove(&q);
    while !remaining.is_empty() {
        // min-degree variable, lowest index on ties
        let var = *remaining
            .iter()
            .min_by_key(|&&v| {
                let nb: BTreeSet<usize> =
                    factors.iter().filter(|f| f.vars.binary_search(&v).is_ok()).flat_map(|f| f.vars.clone()).collect();
                (nb.len(), v)
            })
            .unwrap();
        remaining.remove(&var);
        let (with, without): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.binary_search(&var).is_ok());
        factors = without;
        let mut acc = Factor { vars: vec![], table: vec![1.0] };
        for f in &with {
            acc = product(&acc, f, &g.cards)?;
        }
        let mut s = sum_out(&acc, var, &g.cards);
        rescale(&mut s);
        if !s.vars.is_empty() {
            factors.push(s);
        }
    }
    let mut acc = Factor { vars: vec![q], table: vec![1.0; g.cards[q]] };
    for f in &factors {
        if !f.vars.is_empty() {
            acc = product(&acc, f, &g.cards)?;
            rescale(&mut acc);
        }
    }
    let z: f64 = acc.table.iter().sum();
    Ok(acc.table.iter().map(|x| x / z).collect())
}

/// Marginal by summing the full joint; for graphs with few variables.
pub fn enumerate(g: &GroundFactorGraph, q: usize, evidence: &[(usize, usize)]) -> Vec<f64> {
    let dims = &g.cards;
    let total: usize = dims.iter().product();
    assert!(total <= 1 << 20, "joint too large to enumerate");
    let mut out = vec![0.0; dims[q]];
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        if evidence.iter().all(|&(v, x)| idx[v] == x) {
            let mut w = 1.0;
            for f in &g.factors {
                let o = f.vars.iter().fold(0, |o, &v| o * dims[v] + idx[v]);
                w *= f.table[o];
            }
            out[idx[q]] += w;
        }
        advance(&mut idx, dims);
    }
    let z: f64 = out.iter().sum();
    out.iter().map(|x| x / z).collect()
}

/// `P(term at step target | evidence up to horizon)` on the unrolled model.
pub fn query(pdm: &Pdm, term: &GroundAtom, target: u32, horizon: u32) -> Result<Vec<f64>, InferenceError> {
    let g = unroll(pdm, target)?;
    let q = g
        .var_index(&GroundVar { prv: term.prv, step: target, args: term.args.clone() })
        .ok_or_else(|| InferenceError::UnknownQuery(pdm.vocab.atom_label(term)))?;
    let mut ev = Vec::new();
    for (&t, obs) in pdm.evidence.steps.range(..=horizon.min(target)) {
        for o in obs {
            let gv = GroundVar { prv: o.atom.prv, step: t, args: o.atom.args.clone() };
            if let Some(i) = g.var_index(&gv) {
                ev.push((i, o.value as usize));
            }
        }
    }
    ground_ve(&g, q, &ev)
}
