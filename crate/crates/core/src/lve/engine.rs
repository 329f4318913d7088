//! Elimination driver: repeatedly picks a class whose lifted sum-out is
//! legal, enables one by count conversion, or falls back to grounding.

use std::collections::{BTreeMap, BTreeSet};

use super::histogram::{self, HistogramSpace};
use super::{
    canonicalize, count_convert, expand_counted, ground_logvar, lift_sum_out, lifted_multiply, shatter, split, Class,
    Ctx, Parfactor,
};
use crate::error::InferenceError;
use crate::model::PrvRef;

/// Decides which argument classes survive an elimination.
pub type Keep<'a> = &'a dyn Fn(&Class) -> bool;

enum Plan {
    Direct {
        size: u128,
    },
    /// Count-convert `(class, position)` everywhere it occurs.
    Convert(Vec<(Class, usize)>),
    /// Ground one of these slot groups; each entry lists `(parfactor, slot)`.
    Blocked(Vec<Vec<(usize, usize)>>),
}

/// Eliminates every argument class rejected by `keep`. The returned
/// parfactors mention kept classes only; constant factors are dropped.
pub fn eliminate(pfs: Vec<Parfactor>, keep: Keep<'_>, ctx: &mut Ctx) -> Result<Vec<Parfactor>, InferenceError> {
    let mut pfs: Vec<Parfactor> = pfs.iter().map(canonicalize).filter(|p| !p.args.is_empty()).collect();
    loop {
        ctx.check_time()?;
        shatter(&mut pfs, ctx)?;
        if pfs.iter().flat_map(|p| p.classes()).all(|c| keep(&c)) {
            return Ok(pfs);
        }
        // lifted sum-outs that need no kind change come first: they can make
        // a later conversion legal
        let cands: BTreeSet<Class> = pfs.iter().flat_map(|p| p.classes()).filter(|c| !keep(c)).collect();
        let plans: Vec<(Class, Plan)> = cands
            .into_iter()
            .map(|c| {
                let p = plan(&pfs, &c);
                (c, p)
            })
            .collect();
        let direct = plans
            .iter()
            .filter_map(|(c, p)| match p {
                Plan::Direct { size } if kinds_agree(&pfs, c) => Some((*size, c)),
                _ => None,
            })
            .min_by_key(|(s, _)| *s);
        if let Some((_, c)) = direct {
            let c = c.clone();
            sum_out_class(&mut pfs, &c, ctx)?;
            continue;
        }
        if normalize_kinds(&mut pfs, ctx)? {
            continue;
        }
        if let Some(conv) = plans.iter().find_map(|(_, p)| match p {
            Plan::Convert(v) => Some(v.clone()),
            _ => None,
        }) {
            for (class, pos) in conv {
                convert_class(&mut pfs, &class, pos, ctx)?;
            }
            continue;
        }
        let group = plans
            .iter()
            .filter_map(|(_, p)| match p {
                Plan::Blocked(gs) => gs.iter().min_by_key(|g| (g.len(), pfs[g[0].0].slots[g[0].1].size())),
                _ => None,
            })
            .min_by_key(|g| (g.len(), pfs[g[0].0].slots[g[0].1].size()))
            .cloned()
            .ok_or_else(|| InferenceError::Internal("no elimination step applies".into()))?;
        ground_group(&mut pfs, &group, ctx)?;
    }
}

/// Marginal of the ground instance `prv(consts)` given the parfactors.
///
/// The whole class holding the instance is kept first; a counted result
/// yields the marginal by exchangeability, `P(v) = E[h(v)] / n`. When that
/// needs grounding, the instance is split off into its own class instead and
/// the variant with fewer groundings wins.
pub fn marginal(pfs: Vec<Parfactor>, prv: PrvRef, consts: &[u32], ctx: &mut Ctx) -> Result<Vec<f64>, InferenceError> {
    let start = ctx.counter.events;
    let mut whole = ctx.clone();
    let first = marginal_of_class(pfs.clone(), prv, consts, &mut whole);
    match &first {
        Ok(_) if whole.counter.events == start => {
            *ctx = whole;
            return first;
        }
        Err(InferenceError::Timeout) => return first,
        _ => {}
    }
    let mut single = ctx.clone();
    let second = isolate(pfs, prv, consts, &mut single).and_then(|p| marginal_of_class(p, prv, consts, &mut single));
    let better = match (&first, &second) {
        (_, Err(InferenceError::Timeout)) => return second,
        (Err(_), Ok(_)) => true,
        (Ok(_), Ok(_)) => single.counter.events < whole.counter.events,
        _ => false,
    };
    if better {
        *ctx = single;
        second
    } else {
        *ctx = whole;
        first
    }
}

/// Splits every class of `prv` holding `consts` until the instance is a class
/// of its own.
fn isolate(
    mut pfs: Vec<Parfactor>,
    prv: PrvRef,
    consts: &[u32],
    ctx: &mut Ctx,
) -> Result<Vec<Parfactor>, InferenceError> {
    let mut i = 0;
    while i < pfs.len() {
        let hit = pfs[i].args.iter().enumerate().find_map(|(ai, a)| {
            if a.prv != prv || !pfs[i].class_of(a).contains(consts) {
                return None;
            }
            a.params.iter().position(|&s| pfs[i].slots[s].size() > 1).map(|k| (ai, k))
        });
        let Some((ai, k)) = hit else {
            i += 1;
            continue;
        };
        let g = pfs.swap_remove(i);
        let slot = g.args[ai].params[k];
        if g.is_counted_slot(slot) {
            pfs.push(expand_counted(&g, ai, ctx)?);
        } else {
            let (x, y) = split(&g, slot, &[consts[k]])?;
            pfs.extend(x);
            pfs.extend(y);
        }
    }
    Ok(pfs)
}

fn marginal_of_class(
    pfs: Vec<Parfactor>,
    prv: PrvRef,
    consts: &[u32],
    ctx: &mut Ctx,
) -> Result<Vec<f64>, InferenceError> {
    let keep = |c: &Class| c.prv == prv && c.contains(consts);
    let mut rest = eliminate(pfs, &keep, ctx)?;
    while normalize_kinds(&mut rest, ctx)? {}
    let mut it = rest.into_iter();
    let mut acc =
        it.next().ok_or_else(|| InferenceError::Internal("query class vanished during elimination".into()))?;
    for p in it {
        acc = lifted_multiply(&acc, &p, ctx)?;
    }
    let acc = canonicalize(&acc);
    if acc.args.len() != 1 {
        return Err(InferenceError::Internal(format!("query result has {} arguments", acc.args.len())));
    }
    let arg = &acc.args[0];
    match arg.counted_slot() {
        None => Ok(normalize_exp(&acc.table)),
        Some(s) => {
            let n = acc.slots[s].size();
            let space = HistogramSpace::get(n, arg.card);
            let logp: Vec<f64> = acc.table.iter().zip(&space.log_multinomial).map(|(a, b)| a + b).collect();
            let p = normalize_exp(&logp);
            let mut out = vec![0.0; arg.card];
            for (h, ph) in space.hists.iter().zip(&p) {
                for (v, &c) in h.iter().enumerate() {
                    out[v] += ph * c as f64 / n as f64;
                }
            }
            Ok(out)
        }
    }
}

fn normalize_exp(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Whether the parfactors holding `c` use every shared class with one kind.
fn kinds_agree(pfs: &[Parfactor], c: &Class) -> bool {
    let mut kinds: BTreeMap<Class, Option<usize>> = BTreeMap::new();
    for p in pfs.iter().filter(|p| p.position_of(c).is_some()) {
        for a in &p.args {
            if *kinds.entry(p.class_of(a)).or_insert(a.counted) != a.counted {
                return false;
            }
        }
    }
    true
}

/// Makes every class occur with one kind: plain occurrences are converted
/// when possible, otherwise counting occurrences are expanded.
fn normalize_kinds(pfs: &mut [Parfactor], ctx: &mut Ctx) -> Result<bool, InferenceError> {
    let mut kinds: BTreeMap<Class, BTreeSet<Option<usize>>> = BTreeMap::new();
    for p in pfs.iter() {
        for a in &p.args {
            kinds.entry(p.class_of(a)).or_default().insert(a.counted);
        }
    }
    for (class, ks) in kinds {
        if ks.len() < 2 {
            continue;
        }
        let counted: Vec<usize> = ks.iter().flatten().copied().collect();
        if counted.len() == 1 && convertible_everywhere(pfs, &class, counted[0]) {
            convert_class(pfs, &class, counted[0], ctx)?;
            return Ok(true);
        }
        for p in pfs.iter_mut() {
            while let Some(ai) = p.args.iter().position(|a| a.is_counted() && p.class_of(a) == class) {
                *p = expand_counted(p, ai, ctx)?;
            }
        }
        return Ok(true);
    }
    Ok(false)
}

fn convertible_everywhere(pfs: &[Parfactor], class: &Class, pos: usize) -> bool {
    pfs.iter().all(|p| {
        p.args.iter().all(|a| {
            if a.is_counted() || p.class_of(a) != *class {
                return true;
            }
            let s = a.params[pos];
            p.args_with_slot(s).len() == 1
        })
    })
}

fn convert_class(pfs: &mut [Parfactor], class: &Class, pos: usize, ctx: &mut Ctx) -> Result<(), InferenceError> {
    ctx.conversions += 1;
    for p in pfs.iter_mut() {
        if let Some(a) = p.args.iter().find(|a| !a.is_counted() && p.class_of(a) == *class) {
            let s = a.params[pos];
            *p = count_convert(p, s)?;
        }
    }
    Ok(())
}

fn plan(pfs: &[Parfactor], c: &Class) -> Plan {
    let g: Vec<usize> = (0..pfs.len()).filter(|&i| pfs[i].position_of(c).is_some()).collect();
    // union-find over (parfactor, slot), linked through shared classes
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &i in &g {
        for s in 0..pfs[i].slots.len() {
            let n = ids.len();
            ids.insert((i, s), n);
        }
    }
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let nx = parent[y];
            parent[y] = r;
            y = nx;
        }
        r
    }
    let mut first: BTreeMap<Class, (usize, usize)> = BTreeMap::new();
    let mut size: u128 = 1;
    for &i in &g {
        for (ai, a) in pfs[i].args.iter().enumerate() {
            let cl = pfs[i].class_of(a);
            match first.get(&cl) {
                None => {
                    size = size.saturating_mul(pfs[i].dim(a) as u128);
                    first.insert(cl, (i, ai));
                }
                Some(&(j, aj)) => {
                    for (&s1, &s2) in a.params.iter().zip(&pfs[j].args[aj].params) {
                        let x = find(&mut parent, ids[&(i, s1)]);
                        let y = find(&mut parent, ids[&(j, s2)]);
                        parent[x] = y;
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (&k, &id) in &ids {
        let r = find(&mut parent, id);
        groups.entry(r).or_default().push(k);
    }
    // two slots of one parfactor in one group cannot be aligned
    let mut conflicts = Vec::new();
    for members in groups.values() {
        let wide: Vec<(usize, usize)> = members.iter().copied().filter(|&(i, s)| pfs[i].slots[s].size() > 1).collect();
        let mut seen = BTreeSet::new();
        if members.iter().any(|&(i, _)| !seen.insert(i)) {
            if let Some(&w) = wide.iter().find(|&&(i, s)| !pfs[i].is_counted_slot(s)) {
                conflicts.push(vec![w]);
            }
        }
    }
    if !conflicts.is_empty() {
        return Plan::Blocked(conflicts);
    }

    let mut target = BTreeSet::new();
    for &i in &g {
        let a = &pfs[i].args[pfs[i].position_of(c).unwrap()];
        for &s in &a.params {
            target.insert(find(&mut parent, ids[&(i, s)]));
        }
    }
    let obstructions: Vec<Vec<(usize, usize)>> = groups
        .iter()
        .filter(|(r, m)| {
            let (i, s) = m[0];
            !target.contains(r) && !pfs[i].is_counted_slot(s) && pfs[i].slots[s].size() > 1
        })
        .map(|(_, m)| m.clone())
        .collect();
    if obstructions.is_empty() {
        return Plan::Direct { size };
    }

    let mut conversions: Vec<(Class, usize)> = Vec::new();
    for members in &obstructions {
        let mut target_arg: Option<(Class, usize)> = None;
        let mut ok = true;
        for &(i, s) in members {
            let holders = pfs[i].args_with_slot(s);
            if holders.len() != 1 || pfs[i].args[holders[0]].is_counted() {
                ok = false;
                break;
            }
            let a = &pfs[i].args[holders[0]];
            let key = (pfs[i].class_of(a), a.params.iter().position(|&x| x == s).unwrap());
            match &target_arg {
                None => target_arg = Some(key),
                Some(k) if *k == key => {}
                Some(_) => {
                    ok = false;
                    break;
                }
            }
        }
        let Some((class, pos)) = target_arg.filter(|_| ok) else {
            return Plan::Blocked(obstructions);
        };
        let n = class.sets[pos].len();
        let k = pfs[members[0].0].args[pfs[members[0].0].position_of(&class).unwrap()].card;
        if conversions.iter().any(|(c2, _)| *c2 == class)
            || !convertible_everywhere(pfs, &class, pos)
            || histogram::count(n, k) > (1 << 20)
        {
            return Plan::Blocked(obstructions);
        }
        conversions.push((class, pos));
    }
    Plan::Convert(conversions)
}

fn sum_out_class(pfs: &mut Vec<Parfactor>, c: &Class, ctx: &mut Ctx) -> Result<(), InferenceError> {
    let (with, without): (Vec<Parfactor>, Vec<Parfactor>) =
        std::mem::take(pfs).into_iter().partition(|p| p.position_of(c).is_some());
    *pfs = without;
    let mut it = with.into_iter();
    let mut acc = it.next().expect("class occurs in some parfactor");
    for p in it {
        acc = lifted_multiply(&acc, &p, ctx)?;
    }
    let acc = canonicalize(&acc);
    let ai = acc.position_of(c).unwrap();
    let mut r = lift_sum_out(&acc, ai)?;
    if !r.args.is_empty() {
        r.normalize();
        pfs.push(r);
    }
    Ok(())
}

fn ground_group(pfs: &mut Vec<Parfactor>, group: &[(usize, usize)], ctx: &mut Ctx) -> Result<(), InferenceError> {
    let mut idx: Vec<usize> = group.iter().map(|&(i, _)| i).collect();
    idx.sort_unstable();
    idx.dedup();
    let mut new = Vec::new();
    for &(i, s) in group {
        new.extend(ground_logvar(&pfs[i], s, ctx)?);
    }
    for &i in idx.iter().rev() {
        pfs.remove(i);
    }
    pfs.extend(new);
    Ok(())
}
