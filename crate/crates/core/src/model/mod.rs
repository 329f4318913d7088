//! Parameterised models: logvars, PRVs, constraints, parfactors, static models
//! and two-slice dynamic models, together with their grounding semantics.

mod parse;
mod print;

pub use parse::parse_model;
pub use print::print_model;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::ModelError;

pub type LogvarId = usize;
pub type PrvId = usize;

/// A logical variable with an ordered finite domain of constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Logvar {
    pub name: String,
    pub domain: Vec<String>,
}

/// Declaration of a parameterised randvar `P(X1, ..., Xn)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrvDecl {
    pub name: String,
    pub params: Vec<LogvarId>,
    pub range: Vec<String>,
}

impl PrvDecl {
    pub fn card(&self) -> usize {
        self.range.len()
    }
}

/// Temporal position of a PRV occurrence.
///
/// `Static` is used for the initial slice and for plain static models,
/// `Prev`/`Curr` for the two slices of the temporal template, `Step(k)` for
/// concrete steps of an unrolled model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slice {
    Static,
    Prev,
    Curr,
    Step(u32),
}

impl Slice {
    fn suffix(self) -> String {
        match self {
            Slice::Static => String::new(),
            Slice::Prev => "@t-1".into(),
            Slice::Curr => "@t".into(),
            Slice::Step(k) => format!("@{k}"),
        }
    }
}

/// An occurrence of a declared PRV at a slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrvRef {
    pub prv: PrvId,
    pub slice: Slice,
}

impl PrvRef {
    pub fn new(prv: PrvId, slice: Slice) -> Self {
        PrvRef { prv, slice }
    }

    pub fn with_slice(self, slice: Slice) -> Self {
        PrvRef { prv: self.prv, slice }
    }
}

/// Restriction of logvars to admissible constants.
///
/// Constraints are kept in product form: every logvar carries its own set of
/// admissible constants and the admissible tuples are the Cartesian product
/// of those sets. `Top` admits every tuple.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Constraint {
    #[default]
    Top,
    Product {
        logvars: Vec<LogvarId>,
        values: Vec<Vec<u32>>,
    },
}

impl Constraint {
    pub fn is_top(&self) -> bool {
        matches!(self, Constraint::Top)
    }

    /// Admissible constants of `lv`; `None` when a non-TOP constraint does
    /// not mention the logvar.
    pub fn admissible(&self, vocab: &Vocab, lv: LogvarId) -> Option<Vec<u32>> {
        match self {
            Constraint::Top => Some((0..vocab.logvars[lv].domain.len() as u32).collect()),
            Constraint::Product { logvars, values } => logvars.iter().position(|&l| l == lv).map(|i| values[i].clone()),
        }
    }

    /// Admissible tuples over `logvars`, in lexicographic order.
    pub fn tuples(&self, vocab: &Vocab, logvars: &[LogvarId]) -> Result<Vec<Vec<u32>>, ModelError> {
        let mut sets = Vec::with_capacity(logvars.len());
        for &lv in logvars {
            let set = self
                .admissible(vocab, lv)
                .ok_or_else(|| ModelError::ConstraintMissingLogvar { logvar: vocab.logvars[lv].name.clone() })?;
            sets.push(set);
        }
        Ok(cartesian(&sets))
    }
}

pub(crate) fn cartesian(sets: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::with_capacity(sets.len())];
    for set in sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for &v in set {
                let mut t = prefix.clone();
                t.push(v);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

/// A parfactor `phi(args) | C`. The potential is stored row-major over the
/// argument ranges, last argument varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Parfactor {
    pub name: String,
    pub args: Vec<PrvRef>,
    pub potential: Vec<f64>,
    pub constraint: Constraint,
}

impl Parfactor {
    /// Logvars in order of first occurrence.
    pub fn logvars(&self, vocab: &Vocab) -> Vec<LogvarId> {
        let mut out = Vec::new();
        for a in &self.args {
            for &lv in &vocab.prvs[a.prv].params {
                if !out.contains(&lv) {
                    out.push(lv);
                }
            }
        }
        out
    }

    pub fn is_inter_slice(&self) -> bool {
        self.args.iter().any(|a| a.slice == Slice::Prev) && self.args.iter().any(|a| a.slice == Slice::Curr)
    }

    pub fn with_slice(&self, slice: Slice) -> Parfactor {
        Parfactor { args: self.args.iter().map(|a| a.with_slice(slice)).collect(), ..self.clone() }
    }

    /// Retags `Prev`/`Curr` occurrences to concrete steps.
    pub fn at_steps(&self, prev: u32, curr: u32) -> Parfactor {
        let args = self
            .args
            .iter()
            .map(|a| match a.slice {
                Slice::Prev => a.with_slice(Slice::Step(prev)),
                Slice::Curr | Slice::Static => a.with_slice(Slice::Step(curr)),
                Slice::Step(_) => *a,
            })
            .collect();
        Parfactor { args, ..self.clone() }
    }
}

/// Logvar and PRV declarations shared by every part of a model.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Vocab {
    pub logvars: Vec<Logvar>,
    pub prvs: Vec<PrvDecl>,
}

impl Vocab {
    pub fn logvar_id(&self, name: &str) -> Option<LogvarId> {
        self.logvars.iter().position(|l| l.name == name)
    }

    pub fn prv_id(&self, name: &str) -> Option<PrvId> {
        self.prvs.iter().position(|p| p.name == name)
    }

    pub fn card(&self, prv: PrvId) -> usize {
        self.prvs[prv].card()
    }

    pub fn domain_size(&self, lv: LogvarId) -> usize {
        self.logvars[lv].domain.len()
    }

    /// Logvars of a PRV.
    pub fn lv_prv(&self, prv: PrvId) -> BTreeSet<LogvarId> {
        self.prvs[prv].params.iter().copied().collect()
    }

    /// Logvars of a parfactor.
    pub fn lv_parfactor(&self, pf: &Parfactor) -> BTreeSet<LogvarId> {
        pf.logvars(self).into_iter().collect()
    }

    /// Ground instances of a PRV under a constraint.
    pub fn gr_prv(&self, prv: PrvId, constraint: &Constraint) -> Result<Vec<GroundAtom>, ModelError> {
        let params = &self.prvs[prv].params;
        Ok(constraint.tuples(self, params)?.into_iter().map(|args| GroundAtom { prv, args }).collect())
    }

    /// Ground instances of a parfactor: one substitution per admissible
    /// tuple over its logvars.
    pub fn gr_parfactor(&self, pf: &Parfactor) -> Result<Vec<Vec<(LogvarId, u32)>>, ModelError> {
        let lvs = pf.logvars(self);
        Ok(pf.constraint.tuples(self, &lvs)?.into_iter().map(|t| lvs.iter().copied().zip(t).collect()).collect())
    }

    pub fn prv_label(&self, r: PrvRef) -> String {
        let d = &self.prvs[r.prv];
        let mut s = format!("{}{}", d.name, r.slice.suffix());
        if !d.params.is_empty() {
            let ps: Vec<&str> = d.params.iter().map(|&l| self.logvars[l].name.as_str()).collect();
            s.push('(');
            s.push_str(&ps.join(","));
            s.push(')');
        }
        s
    }

    pub fn atom_label(&self, a: &GroundAtom) -> String {
        let d = &self.prvs[a.prv];
        if d.params.is_empty() {
            return d.name.clone();
        }
        let cs: Vec<&str> =
            d.params.iter().zip(&a.args).map(|(&l, &c)| self.logvars[l].domain[c as usize].as_str()).collect();
        format!("{}({})", d.name, cs.join(","))
    }

    pub fn check_atom(&self, a: &GroundAtom) -> Result<(), ModelError> {
        let d = self.prvs.get(a.prv).ok_or_else(|| ModelError::UnknownPrv(format!("#{}", a.prv)))?;
        if d.params.len() != a.args.len() {
            return Err(ModelError::ArityMismatch {
                prv: d.name.clone(),
                expected: d.params.len(),
                found: a.args.len(),
            });
        }
        for (&lv, &c) in d.params.iter().zip(&a.args) {
            if c as usize >= self.logvars[lv].domain.len() {
                return Err(ModelError::UnknownConstant {
                    logvar: self.logvars[lv].name.clone(),
                    constant: c.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// A ground instance of a PRV, constants given as domain indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub prv: PrvId,
    pub args: Vec<u32>,
}

/// An observed value for a ground instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    pub atom: GroundAtom,
    pub value: u32,
}

/// Observations per time step.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Evidence {
    pub steps: BTreeMap<u32, Vec<Observation>>,
}

impl Evidence {
    pub fn at(&self, t: u32) -> &[Observation] {
        self.steps.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.steps.values().all(Vec::is_empty)
    }

    /// Adds an observation, rejecting a conflicting value for the same
    /// instance at the same step.
    pub fn observe(&mut self, t: u32, obs: Observation) -> Result<(), ModelError> {
        let step = self.steps.entry(t).or_default();
        if let Some(prev) = step.iter().find(|o| o.atom == obs.atom) {
            if prev.value != obs.value {
                return Err(ModelError::ConflictingEvidence { step: t });
            }
            return Ok(());
        }
        step.push(obs);
        Ok(())
    }
}

/// `P(term_pi | E_0:t)`: filtering when `target_time == evidence_horizon`,
/// prediction when it is larger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub term: GroundAtom,
    pub target_time: u32,
    pub evidence_horizon: u32,
}

impl Query {
    pub fn filtering(term: GroundAtom, t: u32) -> Self {
        Query { term, target_time: t, evidence_horizon: t }
    }

    pub fn is_prediction(&self) -> bool {
        self.target_time > self.evidence_horizon
    }
}

/// A static parameterised model.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Pm {
    pub parfactors: Vec<Parfactor>,
}

impl Pm {
    pub fn prvs(&self) -> BTreeSet<PrvRef> {
        self.parfactors.iter().flat_map(|p| p.args.iter().copied()).collect()
    }
}

/// A parameterised dynamic model: an initial model plus a two-slice
/// template. The template is the intra-slice model copied to both slices
/// plus the inter-slice parfactors.
#[derive(Clone, Debug, PartialEq)]
pub struct Pdm {
    pub vocab: Vocab,
    pub g0: Pm,
    pub g_arrow: Pm,
    /// Query terms issued at every step.
    pub queries: Vec<GroundAtom>,
    pub evidence: Evidence,
}

impl Pdm {
    /// Builds a dynamic model from intra-slice parfactors (tagged `Static`)
    /// and inter-slice parfactors (tagged `Prev`/`Curr`).
    pub fn new(vocab: Vocab, intra: Vec<Parfactor>, inter: Vec<Parfactor>) -> Result<Self, ModelError> {
        let mut g_arrow = Vec::with_capacity(2 * intra.len() + inter.len());
        g_arrow.extend(intra.iter().map(|p| p.with_slice(Slice::Prev)));
        g_arrow.extend(intra.iter().map(|p| p.with_slice(Slice::Curr)));
        g_arrow.extend(inter);
        let pdm = Pdm {
            vocab,
            g0: Pm { parfactors: intra },
            g_arrow: Pm { parfactors: g_arrow },
            queries: Vec::new(),
            evidence: Evidence::default(),
        };
        pdm.validate()?;
        Ok(pdm)
    }

    /// The intra-slice parfactors (the initial model).
    pub fn intra(&self) -> &[Parfactor] {
        &self.g0.parfactors
    }

    /// Parfactors of the template that mention both slices.
    pub fn inter(&self) -> Vec<&Parfactor> {
        self.g_arrow.parfactors.iter().filter(|p| p.is_inter_slice()).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.g0.parfactors.is_empty() {
            return Err(ModelError::NoParfactors);
        }
        for l in &self.vocab.logvars {
            if l.domain.is_empty() {
                return Err(ModelError::EmptyDomain(l.name.clone()));
            }
            let uniq: BTreeSet<&String> = l.domain.iter().collect();
            if uniq.len() != l.domain.len() {
                return Err(ModelError::DuplicateConstant(l.name.clone()));
            }
        }
        for p in &self.vocab.prvs {
            if p.range.len() < 2 {
                return Err(ModelError::SmallRange(p.name.clone()));
            }
            let uniq: BTreeSet<&LogvarId> = p.params.iter().collect();
            if uniq.len() != p.params.len() {
                return Err(ModelError::RepeatedLogvar(p.name.clone()));
            }
        }
        for pf in self.g0.parfactors.iter().chain(&self.g_arrow.parfactors) {
            validate_parfactor(&self.vocab, pf)?;
        }
        for (&t, obs) in &self.evidence.steps {
            for o in obs {
                self.vocab.check_atom(&o.atom)?;
                if o.value as usize >= self.vocab.card(o.atom.prv) {
                    return Err(ModelError::OutOfRange { prv: self.vocab.prvs[o.atom.prv].name.clone(), step: t });
                }
            }
        }
        for q in &self.queries {
            self.vocab.check_atom(q)?;
        }
        Ok(())
    }

    /// Replaces a logvar's domain by `n` generated constants
    /// (`x1..xn` for logvar `X`).
    pub fn override_domain(&mut self, logvar: &str, n: usize) -> Result<(), ModelError> {
        let lv = self.vocab.logvar_id(logvar).ok_or_else(|| ModelError::UnknownLogvar(logvar.to_string()))?;
        if n == 0 {
            return Err(ModelError::EmptyDomain(logvar.to_string()));
        }
        let old = self.vocab.logvars[lv].domain.clone();
        let prefix = logvar.to_lowercase();
        let new: Vec<String> = (1..=n).map(|i| format!("{prefix}{i}")).collect();
        // remap constants used by queries and evidence by name
        let remap = |c: u32| -> Result<u32, ModelError> {
            let name = &old[c as usize];
            new.iter()
                .position(|s| s == name)
                .map(|i| i as u32)
                .ok_or_else(|| ModelError::UnknownConstant { logvar: logvar.to_string(), constant: name.clone() })
        };
        let fix_atom = |a: &mut GroundAtom, vocab: &Vocab| -> Result<(), ModelError> {
            for (i, &p) in vocab.prvs[a.prv].params.iter().enumerate() {
                if p == lv {
                    a.args[i] = remap(a.args[i])?;
                }
            }
            Ok(())
        };
        for q in &mut self.queries {
            fix_atom(q, &self.vocab)?;
        }
        for obs in self.evidence.steps.values_mut() {
            for o in obs {
                fix_atom(&mut o.atom, &self.vocab)?;
            }
        }
        for pf in self.g0.parfactors.iter_mut().chain(self.g_arrow.parfactors.iter_mut()) {
            if let Constraint::Product { logvars, values } = &mut pf.constraint {
                if let Some(i) = logvars.iter().position(|&l| l == lv) {
                    let mut vs = Vec::new();
                    for &c in &values[i] {
                        vs.push(remap(c)?);
                    }
                    values[i] = vs;
                }
            }
        }
        self.vocab.logvars[lv].domain = new;
        Ok(())
    }

    /// Reassigns every potential from a seeded generator over (0, 1].
    pub fn randomize_potentials(&mut self, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |pf: &mut Parfactor| {
            for v in &mut pf.potential {
                *v = 1.0 - rng.gen::<f64>();
            }
        };
        for pf in &mut self.g0.parfactors {
            draw(pf);
        }
        let n = self.g0.parfactors.len();
        // the template copies of the intra-slice model must stay identical
        for (i, pf) in self.g_arrow.parfactors.iter_mut().enumerate() {
            if i < 2 * n {
                pf.potential = self.g0.parfactors[i % n].potential.clone();
            } else {
                draw(pf);
            }
        }
    }
}

pub(crate) fn validate_parfactor(vocab: &Vocab, pf: &Parfactor) -> Result<(), ModelError> {
    if pf.args.is_empty() {
        return Err(ModelError::EmptyParfactor(pf.name.clone()));
    }
    let uniq: BTreeSet<&PrvRef> = pf.args.iter().collect();
    if uniq.len() != pf.args.len() {
        return Err(ModelError::DuplicateArgument(pf.name.clone()));
    }
    let expected: usize = pf.args.iter().map(|a| vocab.card(a.prv)).product();
    if pf.potential.len() != expected {
        return Err(ModelError::IncompleteSpecification {
            parfactor: pf.name.clone(),
            expected,
            found: pf.potential.len(),
        });
    }
    if let Some(v) = pf.potential.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(ModelError::InvalidPotential { parfactor: pf.name.clone(), value: *v });
    }
    if let Constraint::Product { logvars, values } = &pf.constraint {
        if logvars.len() != values.len() {
            return Err(ModelError::ConstraintArity(pf.name.clone()));
        }
        for lv in pf.logvars(vocab) {
            if !logvars.contains(&lv) {
                return Err(ModelError::ConstraintMissingLogvar { logvar: vocab.logvars[lv].name.clone() });
            }
        }
        for (&lv, vals) in logvars.iter().zip(values) {
            if vals.is_empty() {
                return Err(ModelError::EmptyDomain(vocab.logvars[lv].name.clone()));
            }
            if vals.iter().any(|&c| c as usize >= vocab.domain_size(lv)) {
                return Err(ModelError::UnknownConstant {
                    logvar: vocab.logvars[lv].name.clone(),
                    constant: "?".into(),
                });
            }
        }
    }
    Ok(())
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slice::Static => write!(f, "static"),
            Slice::Prev => write!(f, "t-1"),
            Slice::Curr => write!(f, "t"),
            Slice::Step(k) => write!(f, "{k}"),
        }
    }
}
