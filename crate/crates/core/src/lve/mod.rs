//! Lifted operator kernel.
//!
//! Inference works on [`Parfactor`]s whose logvars are local *slots*: each
//! slot carries a logvar type and its admissible constants, so constraints
//! are products of per-slot sets. An argument is either a plain PRV over
//! some slots or a counting randvar that binds one of its slots. Potentials
//! are stored as natural logarithms.

mod engine;
pub mod histogram;
mod ops;
mod shatter;

pub use engine::{eliminate, marginal, Keep};
pub use ops::{
    absorb_evidence, canonicalize, count_convert, expand_counted, ground_logvar, lift_sum_out, lifted_multiply, split,
};
pub use shatter::shatter;

use std::time::Instant;

use crate::error::{InferenceError, ModelError};
use crate::model::{self, LogvarId, PrvRef, Slice, Vocab};
use histogram::HistogramSpace;

/// A local logvar of a parfactor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub logvar: LogvarId,
    /// Admissible constants, sorted.
    pub values: Vec<u32>,
}

impl Slot {
    pub fn size(&self) -> usize {
        self.values.len()
    }
}

/// An argument: PRV `prv` over `params` (slot indices). With `counted =
/// Some(i)` the argument is the CRV `#_{params[i]}[prv(...)]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Arg {
    pub prv: PrvRef,
    pub params: Vec<usize>,
    pub card: usize,
    pub counted: Option<usize>,
}

impl Arg {
    pub fn counted_slot(&self) -> Option<usize> {
        self.counted.map(|i| self.params[i])
    }

    pub fn is_counted(&self) -> bool {
        self.counted.is_some()
    }
}

/// The set of ground randvars an argument covers: the PRV plus one constant
/// set per parameter position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Class {
    pub prv: PrvRef,
    pub sets: Vec<Vec<u32>>,
}

impl Class {
    pub fn contains(&self, consts: &[u32]) -> bool {
        self.sets.iter().zip(consts).all(|(s, c)| s.binary_search(c).is_ok())
    }

    pub fn size(&self) -> usize {
        self.sets.iter().map(Vec::len).product()
    }

    pub fn overlaps(&self, other: &Class) -> bool {
        self.prv == other.prv
            && self.sets.iter().zip(&other.sets).all(|(a, b)| a.iter().any(|x| b.binary_search(x).is_ok()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parfactor {
    pub name: String,
    pub slots: Vec<Slot>,
    pub args: Vec<Arg>,
    /// Log potentials, row-major over the argument dimensions.
    pub table: Vec<f64>,
}

impl Parfactor {
    /// Converts a model parfactor; potentials move to log space.
    pub fn from_model(vocab: &Vocab, pf: &model::Parfactor) -> Result<Parfactor, ModelError> {
        let lvs = pf.logvars(vocab);
        let mut slots = Vec::with_capacity(lvs.len());
        for &lv in &lvs {
            let values = pf
                .constraint
                .admissible(vocab, lv)
                .ok_or_else(|| ModelError::ConstraintMissingLogvar { logvar: vocab.logvars[lv].name.clone() })?;
            slots.push(Slot { logvar: lv, values });
        }
        let args = pf
            .args
            .iter()
            .map(|a| Arg {
                prv: *a,
                params: vocab.prvs[a.prv].params.iter().map(|lv| lvs.iter().position(|x| x == lv).unwrap()).collect(),
                card: vocab.card(a.prv),
                counted: None,
            })
            .collect();
        Ok(Parfactor { name: pf.name.clone(), slots, args, table: pf.potential.iter().map(|v| v.ln()).collect() })
    }

    pub fn dim(&self, arg: &Arg) -> usize {
        match arg.counted_slot() {
            None => arg.card,
            Some(s) => HistogramSpace::get(self.slots[s].size(), arg.card).len(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.args.iter().map(|a| self.dim(a)).collect()
    }

    pub fn class_of(&self, arg: &Arg) -> Class {
        Class { prv: arg.prv, sets: arg.params.iter().map(|&s| self.slots[s].values.clone()).collect() }
    }

    pub fn classes(&self) -> Vec<Class> {
        self.args.iter().map(|a| self.class_of(a)).collect()
    }

    pub fn position_of(&self, class: &Class) -> Option<usize> {
        self.args.iter().position(|a| a.prv == class.prv && self.class_of(a) == *class)
    }

    pub fn is_counted_slot(&self, s: usize) -> bool {
        self.args.iter().any(|a| a.counted_slot() == Some(s))
    }

    /// Slots not bound by a counting argument.
    pub fn free_slots(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&s| !self.is_counted_slot(s)).collect()
    }

    /// Free slots with more than one admissible constant: the logvars that
    /// still stand for several groundings.
    pub fn lifted_slots(&self) -> Vec<usize> {
        self.free_slots().into_iter().filter(|&s| self.slots[s].size() > 1).collect()
    }

    /// Number of groundings, `prod` of free slot sizes.
    pub fn groundings(&self) -> f64 {
        self.free_slots().iter().map(|&s| self.slots[s].size() as f64).product()
    }

    /// Arguments that mention slot `s`.
    pub fn args_with_slot(&self, s: usize) -> Vec<usize> {
        (0..self.args.len()).filter(|&i| self.args[i].params.contains(&s)).collect()
    }

    /// Multiplies every potential by a constant factor in log space so that
    /// the largest entry becomes 1. Semantically a rescaling.
    pub fn normalize(&mut self) {
        let m = self.table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m.is_finite() {
            for v in &mut self.table {
                *v -= m;
            }
        }
    }

    pub fn retag(&mut self, from: Slice, to: Slice) {
        for a in &mut self.args {
            if a.prv.slice == from {
                a.prv.slice = to;
            }
        }
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    /// Stable one-line rendering, e.g. `g0[Pub@t(X,P), #A[AttC@t(A)], Hot@t]`.
    /// Slots restricted below their full domain are listed after `|`.
    pub fn label(&self, vocab: &Vocab) -> String {
        let slot_name = |s: usize| {
            let lv = &vocab.logvars[self.slots[s].logvar];
            match self.slots[s].values.as_slice() {
                [c] => lv.domain[*c as usize].clone(),
                _ if self.slots.iter().filter(|t| t.logvar == self.slots[s].logvar && t.size() > 1).count() > 1 => {
                    format!("{}{}", lv.name, s)
                }
                _ => lv.name.clone(),
            }
        };
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                let d = &vocab.prvs[a.prv.prv];
                let mut s = d.name.clone();
                if a.prv.slice != Slice::Static {
                    s = format!("{}@{}", s, a.prv.slice);
                }
                if !a.params.is_empty() {
                    let ps: Vec<String> = a.params.iter().map(|&p| slot_name(p)).collect();
                    s = format!("{}({})", s, ps.join(","));
                }
                match a.counted_slot() {
                    Some(c) => format!("#{}[{}]", slot_name(c), s),
                    None => s,
                }
            })
            .collect();
        let mut out = format!("{}[{}]", self.name, args.join(", "));
        let restricted: Vec<String> = (0..self.slots.len())
            .filter(|&s| {
                let n = self.slots[s].size();
                n > 1 && n < vocab.domain_size(self.slots[s].logvar)
            })
            .map(|s| {
                let lv = &vocab.logvars[self.slots[s].logvar];
                let cs: Vec<&str> = self.slots[s].values.iter().map(|&c| lv.domain[c as usize].as_str()).collect();
                format!("{} in {{{}}}", slot_name(s), cs.join(","))
            })
            .collect();
        if !restricted.is_empty() {
            out.push_str(" | ");
            out.push_str(&restricted.join(", "));
        }
        out
    }
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Visits every multi-index of `dims` in row-major order.
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = dims.iter().product();
    if total == 0 {
        return;
    }
    let mut idx = vec![0; dims.len()];
    for flat in 0..total {
        f(flat, &idx);
        for d in (0..dims.len()).rev() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Records every grounding-fallback invocation of one inference run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundingCounter {
    pub events: usize,
    /// `(parfactor name, grounded logvar)`.
    pub details: Vec<(String, LogvarId)>,
}

impl GroundingCounter {
    pub fn record(&mut self, parfactor: &str, logvar: LogvarId) {
        self.events += 1;
        self.details.push((parfactor.to_string(), logvar));
    }
}

/// Resource limits of one run.
#[derive(Clone, Debug)]
pub struct Budget {
    pub deadline: Option<Instant>,
    /// Largest table any operator may create.
    pub max_table: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { deadline: None, max_table: 1 << 24 }
    }
}

/// Mutable state of one inference run.
#[derive(Clone, Debug, Default)]
pub struct Ctx {
    pub counter: GroundingCounter,
    pub budget: Budget,
    /// Classes count-converted by the elimination driver.
    pub conversions: usize,
}

impl Ctx {
    pub fn new(budget: Budget) -> Self {
        Ctx { counter: GroundingCounter::default(), budget, conversions: 0 }
    }

    pub fn check_time(&self) -> Result<(), InferenceError> {
        match self.budget.deadline {
            Some(d) if Instant::now() > d => Err(InferenceError::Timeout),
            _ => Ok(()),
        }
    }

    pub fn check_size(&self, entries: u128) -> Result<(), InferenceError> {
        if entries > self.budget.max_table as u128 {
            Err(InferenceError::Intractable { entries, limit: self.budget.max_table as u128 })
        } else {
            Ok(())
        }
    }
}
