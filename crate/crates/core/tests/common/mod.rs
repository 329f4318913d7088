//! Helpers shared by the integration tests: a brute-force interpretation of
//! lifted parfactors and generators for random parfactors and models.
#![allow(dead_code)]

pub mod pdm;
pub mod soundness;

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use ldjt::lve::histogram::HistogramSpace;
use ldjt::lve::{Arg, Parfactor, Slot};
use ldjt::model::{PrvRef, Slice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GEX: &str = include_str!("../../models/gex.model");

/// A ground randvar of a lifted parfactor.
pub type Var = (PrvRef, Vec<u32>);

pub fn cartesian(sets: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for s in sets {
        out = out
            .into_iter()
            .flat_map(|p| {
                s.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Ground variables an argument stands for, one list per grounding of the
/// parfactor's free slots.
fn ground_args(pf: &Parfactor) -> Vec<Vec<Vec<Var>>> {
    let counted: BTreeSet<usize> = pf.args.iter().filter_map(|a| a.counted.map(|i| a.params[i])).collect();
    let free: Vec<usize> = (0..pf.slots.len()).filter(|s| !counted.contains(s)).collect();
    let sets: Vec<Vec<u32>> = free.iter().map(|&s| pf.slots[s].values.clone()).collect();
    cartesian(&sets)
        .into_iter()
        .map(|subst| {
            let value_of = |s: usize| subst[free.iter().position(|&f| f == s).unwrap()];
            pf.args
                .iter()
                .map(|a| match a.counted {
                    None => vec![(a.prv, a.params.iter().map(|&s| value_of(s)).collect())],
                    Some(ci) => pf.slots[a.params[ci]]
                        .values
                        .iter()
                        .map(|&c| {
                            let consts = a
                                .params
                                .iter()
                                .enumerate()
                                .map(|(k, &s)| if k == ci { c } else { value_of(s) })
                                .collect();
                            (a.prv, consts)
                        })
                        .collect(),
                })
                .collect()
        })
        .collect()
}

/// The ground variables of some parfactor sets, indexed.
#[derive(Debug, Default, Clone)]
pub struct Universe {
    pub vars: Vec<Var>,
    pub cards: Vec<usize>,
    index: BTreeMap<Var, usize>,
}

impl Universe {
    pub fn of(sets: &[&[Parfactor]]) -> Self {
        let mut u = Universe::default();
        for pfs in sets {
            for pf in pfs.iter() {
                for g in ground_args(pf) {
                    for (a, vs) in pf.args.iter().zip(g) {
                        for v in vs {
                            if !u.index.contains_key(&v) {
                                u.index.insert(v.clone(), u.vars.len());
                                u.vars.push(v);
                                u.cards.push(a.card);
                            }
                        }
                    }
                }
            }
        }
        u
    }

    pub fn index(&self, v: &Var) -> Option<usize> {
        self.index.get(v).copied()
    }

    /// Calls `f` on every joint assignment.
    pub fn for_each(&self, mut f: impl FnMut(&[usize])) {
        let total: usize = self.cards.iter().product();
        assert!(total <= 1 << 22, "universe too large to enumerate");
        let mut a = vec![0usize; self.cards.len()];
        for _ in 0..total {
            f(&a);
            for d in (0..a.len()).rev() {
                a[d] += 1;
                if a[d] < self.cards[d] {
                    break;
                }
                a[d] = 0;
            }
        }
    }
}

enum GArg {
    Plain(usize),
    Counted(Vec<usize>, Rc<HistogramSpace>),
}

/// Ground factors of a parfactor set with variables resolved in a universe.
pub struct Compiled {
    factors: Vec<(usize, Vec<GArg>)>,
    tables: Vec<(Vec<usize>, Vec<f64>)>,
}

impl Compiled {
    pub fn new(pfs: &[Parfactor], u: &Universe) -> Self {
        let mut factors = Vec::new();
        let mut tables = Vec::new();
        for pf in pfs {
            tables.push((pf.dims(), pf.table.clone()));
            for g in ground_args(pf) {
                let args = pf
                    .args
                    .iter()
                    .zip(g)
                    .map(|(a, vs)| match a.counted {
                        None => GArg::Plain(u.index(&vs[0]).unwrap()),
                        Some(_) => {
                            let space = HistogramSpace::get(vs.len(), a.card);
                            GArg::Counted(vs.iter().map(|v| u.index(v).unwrap()).collect(), space)
                        }
                    })
                    .collect();
                factors.push((tables.len() - 1, args));
            }
        }
        Compiled { factors, tables }
    }

    /// Log of the unnormalised ground product at a full assignment.
    pub fn log_weight(&self, a: &[usize]) -> f64 {
        let mut total = 0.0;
        for (t, args) in &self.factors {
            let (dims, table) = &self.tables[*t];
            let mut o = 0;
            for (arg, &d) in args.iter().zip(dims) {
                let idx = match arg {
                    GArg::Plain(v) => a[*v],
                    GArg::Counted(vs, space) => {
                        let mut h = vec![0u32; space.k];
                        for &v in vs {
                            h[a[v]] += 1;
                        }
                        space.index_of(&h).unwrap()
                    }
                };
                o = o * d + idx;
            }
            total += table[o];
        }
        total
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the ground product of `pfs`, summed over every variable of `u`
/// outside `keep`, restricted to assignments accepted by `filter`. Indexed by
/// the mixed-radix value of the kept variables.
pub fn log_table(pfs: &[Parfactor], u: &Universe, keep: &[usize], filter: impl Fn(&[usize]) -> bool) -> Vec<f64> {
    let c = Compiled::new(pfs, u);
    let size: usize = keep.iter().map(|&v| u.cards[v]).product();
    let mut buckets = vec![Vec::new(); size];
    u.for_each(|a| {
        if filter(a) {
            let k = keep.iter().fold(0, |o, &v| o * u.cards[v] + a[v]);
            buckets[k].push(c.log_weight(a));
        }
    });
    buckets.iter().map(|b| log_sum_exp(b)).collect()
}

/// Largest absolute difference of two log tables.
pub fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| if x.is_infinite() && y.is_infinite() { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

/// Relative error of two distributions.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| if *y == 0.0 { x.abs() } else { ((x - y) / y).abs() }).fold(0.0, f64::max)
}

/// Random lifted parfactor over one to three PRVs of `prvs`; the shared
/// `slots` keep classes aligned across generated parfactors.
pub fn random_parfactor(rng: &mut ChaCha8Rng, name: &str, slots: &[Slot], prvs: &[PrvShape]) -> Parfactor {
    let n_args = rng.gen_range(1..=3.min(prvs.len()));
    let mut chosen: Vec<usize> = (0..prvs.len()).collect();
    for i in 0..chosen.len() {
        let j = rng.gen_range(i..chosen.len());
        chosen.swap(i, j);
    }
    chosen.truncate(n_args);
    chosen.sort_unstable();
    let mut used: Vec<usize> = Vec::new();
    for &c in &chosen {
        for &s in &prvs[c].1 {
            if !used.contains(&s) {
                used.push(s);
            }
        }
    }
    used.sort_unstable();
    let local: Vec<Slot> = used.iter().map(|&s| slots[s].clone()).collect();
    let args: Vec<Arg> = chosen
        .iter()
        .map(|&c| Arg {
            prv: PrvRef::new(prvs[c].0, Slice::Static),
            params: prvs[c].1.iter().map(|s| used.iter().position(|u| u == s).unwrap()).collect(),
            card: prvs[c].2,
            counted: None,
        })
        .collect();
    let size: usize = args.iter().map(|a| a.card).product();
    let table = (0..size).map(|_| (rng.gen::<f64>() * 0.99 + 0.01).ln()).collect();
    Parfactor { name: name.into(), slots: local, args, table }
}

/// `(id, slot indices, card)` of a PRV.
pub type PrvShape = (usize, Vec<usize>, usize);

/// A small vocabulary: slots for logvars 0 and 1 with domains of size
/// `d0`, `d1`, and PRVs `(id, slot indices, card)`.
pub fn small_vocab(rng: &mut ChaCha8Rng) -> (Vec<Slot>, Vec<PrvShape>) {
    let d0 = rng.gen_range(1..=3u32);
    let d1 = rng.gen_range(1..=3u32);
    let slots = vec![Slot { logvar: 0, values: (0..d0).collect() }, Slot { logvar: 1, values: (0..d1).collect() }];
    let prvs = vec![(0, vec![], 2), (1, vec![0], rng.gen_range(2..=3)), (2, vec![1], 2), (3, vec![0, 1], 2)];
    (slots, prvs)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
