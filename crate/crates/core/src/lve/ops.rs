use std::collections::HashMap;

use super::histogram::HistogramSpace;
use super::{for_each_index, log_sum_exp, strides, Arg, Ctx, Parfactor, Slot};
use crate::error::InferenceError;
use crate::model::PrvRef;

fn precondition(msg: impl Into<String>) -> InferenceError {
    InferenceError::Precondition(msg.into())
}

/// Lifted product of two parfactors.
///
/// Arguments covering identical classes are shared; their slots are
/// identified position by position. A slot of one side that has no partner
/// multiplies the number of groundings of the other side, so the other
/// side's potentials are raised to the reciprocal of that size.
pub fn lifted_multiply(g1: &Parfactor, g2: &Parfactor, ctx: &Ctx) -> Result<Parfactor, InferenceError> {
    let c1 = g1.classes();
    let c2 = g2.classes();
    let mut shared = Vec::new();
    for (i, a) in c1.iter().enumerate() {
        for (j, b) in c2.iter().enumerate() {
            if a == b {
                if g1.args[i].counted != g2.args[j].counted {
                    return Err(precondition(format!(
                        "`{}` and `{}` count the same PRV differently",
                        g1.name, g2.name
                    )));
                }
                shared.push((i, j));
            } else if a.overlaps(b) {
                return Err(precondition(format!("`{}` and `{}` are not shattered", g1.name, g2.name)));
            }
        }
    }
    let mut m12: HashMap<usize, usize> = HashMap::new();
    let mut m21: HashMap<usize, usize> = HashMap::new();
    for &(i, j) in &shared {
        for (&s1, &s2) in g1.args[i].params.iter().zip(&g2.args[j].params) {
            // singleton slots in equal classes hold the same constant
            let single = g1.slots[s1].size() == 1;
            let ok1 = *m12.entry(s1).or_insert(s2) == s2;
            let ok2 = *m21.entry(s2).or_insert(s1) == s1;
            if !single && (!ok1 || !ok2) {
                return Err(precondition(format!("inconsistent logvar alignment of `{}` and `{}`", g1.name, g2.name)));
            }
        }
    }

    let mut slots = g1.slots.clone();
    let mut slot2 = vec![0; g2.slots.len()];
    for (s, slot) in g2.slots.iter().enumerate() {
        slot2[s] = match m21.get(&s) {
            Some(&t) => t,
            None => {
                slots.push(slot.clone());
                slots.len() - 1
            }
        };
    }
    let unmapped_size = |g: &Parfactor, mapped: &HashMap<usize, usize>| -> f64 {
        g.free_slots().into_iter().filter(|s| !mapped.contains_key(s)).map(|s| g.slots[s].size() as f64).product()
    };
    let e1 = 1.0 / unmapped_size(g2, &m21);
    let e2 = 1.0 / unmapped_size(g1, &m12);

    let mut args = g1.args.clone();
    let mut pos2 = vec![usize::MAX; g2.args.len()];
    for &(i, j) in &shared {
        pos2[j] = i;
    }
    for (j, a) in g2.args.iter().enumerate() {
        if pos2[j] == usize::MAX {
            args.push(Arg { params: a.params.iter().map(|&s| slot2[s]).collect(), ..a.clone() });
            pos2[j] = args.len() - 1;
        }
    }
    let out = Parfactor { name: g1.name.clone(), slots, args, table: Vec::new() };
    let dims = out.dims();
    let total: u128 = dims.iter().map(|&d| d as u128).product();
    ctx.check_size(total)?;

    let st1 = strides(&g1.dims());
    let st2 = strides(&g2.dims());
    let mut step1 = vec![0; dims.len()];
    let mut step2 = vec![0; dims.len()];
    step1[..g1.args.len()].copy_from_slice(&st1);
    for (j, &p) in pos2.iter().enumerate() {
        step2[p] = st2[j];
    }
    let mut table = vec![0.0; total as usize];
    for_each_index(&dims, |flat, idx| {
        let (mut o1, mut o2) = (0, 0);
        for d in 0..idx.len() {
            o1 += idx[d] * step1[d];
            o2 += idx[d] * step2[d];
        }
        table[flat] = mul_log(g1.table[o1], e1) + mul_log(g2.table[o2], e2);
    });
    Ok(Parfactor { table, ..out })
}

/// `e * x` in log space, keeping `ln 0` at negative infinity.
fn mul_log(x: f64, e: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        x
    } else {
        x * e
    }
}

/// Sums out argument `target`.
///
/// Requires every free slot with more than one constant to be a parameter
/// of the target. The result is raised to the number of groundings of the
/// free slots that disappear with the target.
pub fn lift_sum_out(g: &Parfactor, target: usize) -> Result<Parfactor, InferenceError> {
    let arg = &g.args[target];
    if let Some(s) = g.lifted_slots().into_iter().find(|s| !arg.params.contains(s)) {
        return Err(precondition(format!(
            "cannot sum out argument {target} of `{}`: slot {s} is not among its logvars",
            g.name
        )));
    }
    let mut used = vec![false; g.slots.len()];
    for (i, a) in g.args.iter().enumerate() {
        if i != target {
            for &s in &a.params {
                used[s] = true;
            }
        }
    }
    let r: f64 = g.free_slots().into_iter().filter(|&s| !used[s]).map(|s| g.slots[s].size() as f64).product();
    let weights: Vec<f64> = match arg.counted_slot() {
        None => vec![0.0; arg.card],
        Some(s) => HistogramSpace::get(g.slots[s].size(), arg.card).log_multinomial.clone(),
    };

    let dims = g.dims();
    let st = strides(&dims);
    let rest_dims: Vec<usize> = (0..dims.len()).filter(|&d| d != target).map(|d| dims[d]).collect();
    let rest_st: Vec<usize> = (0..dims.len()).filter(|&d| d != target).map(|d| st[d]).collect();
    let mut table = vec![0.0; rest_dims.iter().product()];
    for_each_index(&rest_dims, |flat, idx| {
        let base: usize = idx.iter().zip(&rest_st).map(|(i, s)| i * s).sum();
        let s = log_sum_exp((0..dims[target]).map(|v| g.table[base + v * st[target]] + weights[v]));
        table[flat] = mul_log(s, r);
    });

    let mut remap = vec![usize::MAX; g.slots.len()];
    let mut slots = Vec::new();
    for (s, slot) in g.slots.iter().enumerate() {
        if used[s] {
            remap[s] = slots.len();
            slots.push(slot.clone());
        }
    }
    let args = g
        .args
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, a)| Arg { params: a.params.iter().map(|&s| remap[s]).collect(), ..a.clone() })
        .collect();
    Ok(Parfactor { name: g.name.clone(), slots, args, table })
}

/// Turns the only argument mentioning `slot` into a counting randvar:
/// `phi'(.., h, ..) = prod_v phi(.., v, ..)^h(v)`.
pub fn count_convert(g: &Parfactor, slot: usize) -> Result<Parfactor, InferenceError> {
    let holders = g.args_with_slot(slot);
    if holders.len() != 1 {
        return Err(precondition(format!("slot {slot} of `{}` occurs in {} arguments", g.name, holders.len())));
    }
    let ai = holders[0];
    let arg = &g.args[ai];
    if arg.is_counted() {
        return Err(precondition(format!("argument {ai} of `{}` is already counted", g.name)));
    }
    let space = HistogramSpace::get(g.slots[slot].size(), arg.card);
    let mut out = g.clone();
    out.args[ai].counted = Some(arg.params.iter().position(|&s| s == slot).unwrap());
    let old_dims = g.dims();
    let old_st = strides(&old_dims);
    let dims = out.dims();
    let mut table = vec![0.0; dims.iter().product()];
    for_each_index(&dims, |flat, idx| {
        let base: usize = (0..idx.len()).filter(|&d| d != ai).map(|d| idx[d] * old_st[d]).sum();
        let h = &space.hists[idx[ai]];
        let mut acc = 0.0;
        for (v, &c) in h.iter().enumerate() {
            if c > 0 {
                acc += c as f64 * g.table[base + v * old_st[ai]];
            }
        }
        table[flat] = acc;
    });
    out.table = table;
    Ok(out)
}

/// Splits slot `slot` into the constants inside `subset` and the rest.
pub fn split(
    g: &Parfactor,
    slot: usize,
    subset: &[u32],
) -> Result<(Option<Parfactor>, Option<Parfactor>), InferenceError> {
    if g.is_counted_slot(slot) {
        return Err(precondition(format!("cannot split counted slot {slot} of `{}`", g.name)));
    }
    let (inside, outside): (Vec<u32>, Vec<u32>) = g.slots[slot].values.iter().partition(|v| subset.contains(v));
    let part = |values: Vec<u32>| {
        (!values.is_empty()).then(|| {
            let mut p = g.clone();
            p.slots[slot].values = values;
            p
        })
    };
    Ok((part(inside), part(outside)))
}

/// Grounding fallback: one parfactor per constant of `slot`. A counted slot
/// is grounded by expanding its counting argument.
pub fn ground_logvar(g: &Parfactor, slot: usize, ctx: &mut Ctx) -> Result<Vec<Parfactor>, InferenceError> {
    if let Some(ai) = g.args.iter().position(|a| a.counted_slot() == Some(slot)) {
        return Ok(vec![expand_counted(g, ai, ctx)?]);
    }
    ctx.counter.record(&g.name, g.slots[slot].logvar);
    Ok(g.slots[slot]
        .values
        .iter()
        .map(|&v| {
            let mut p = g.clone();
            p.slots[slot].values = vec![v];
            p
        })
        .collect())
}

/// Replaces the counting argument `ai` by one plain argument per counted
/// constant. The table grows to `card^n` entries.
pub fn expand_counted(g: &Parfactor, ai: usize, ctx: &mut Ctx) -> Result<Parfactor, InferenceError> {
    let arg = &g.args[ai];
    let cs = arg.counted_slot().ok_or_else(|| precondition(format!("argument {ai} of `{}` is not counted", g.name)))?;
    let n = g.slots[cs].size();
    let k = arg.card;
    let other: u128 = g.dims().iter().enumerate().filter(|&(d, _)| d != ai).map(|(_, &x)| x as u128).product();
    ctx.check_size(other.saturating_mul((k as u128).saturating_pow(n as u32)))?;
    ctx.counter.record(&g.name, g.slots[cs].logvar);

    let space = HistogramSpace::get(n, k);
    let mut slots: Vec<Slot> = g.slots.clone();
    let lv = slots[cs].logvar;
    let values = slots[cs].values.clone();
    // the counted slot becomes the first constant, further ones are appended
    slots[cs].values = vec![values[0]];
    let mut new_slots = vec![cs];
    for &v in &values[1..] {
        slots.push(Slot { logvar: lv, values: vec![v] });
        new_slots.push(slots.len() - 1);
    }
    let mut args = Vec::with_capacity(g.args.len() + n);
    for (i, a) in g.args.iter().enumerate() {
        if i == ai {
            continue;
        }
        args.push(a.clone());
    }
    let pos = arg.counted.unwrap();
    for &s in &new_slots {
        let mut params = arg.params.clone();
        params[pos] = s;
        args.push(Arg { prv: arg.prv, params, card: k, counted: None });
    }
    let out_shell = Parfactor { name: g.name.clone(), slots, args, table: Vec::new() };
    let dims = out_shell.dims();
    let old_st = strides(&g.dims());
    let keep: Vec<usize> = (0..g.args.len()).filter(|&d| d != ai).collect();
    let mut table = vec![0.0; dims.iter().product()];
    let mut hist = vec![0u32; k];
    for_each_index(&dims, |flat, idx| {
        hist.iter_mut().for_each(|c| *c = 0);
        for &v in &idx[keep.len()..] {
            hist[v] += 1;
        }
        let h = space.index_of(&hist).unwrap();
        let base: usize = keep.iter().enumerate().map(|(p, &d)| idx[p] * old_st[d]).sum();
        table[flat] = g.table[base + h * old_st[ai]];
    });
    Ok(Parfactor { table, ..out_shell })
}

/// Fixes plain argument `ai` to `value` and drops it.
fn fix_arg(g: &Parfactor, ai: usize, value: u32) -> Parfactor {
    let dims = g.dims();
    let st = strides(&dims);
    let rest: Vec<usize> = (0..dims.len()).filter(|&d| d != ai).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&d| dims[d]).collect();
    let mut table = vec![0.0; rest_dims.iter().product()];
    for_each_index(&rest_dims, |flat, idx| {
        let o: usize = rest.iter().zip(idx).map(|(&d, &i)| i * st[d]).sum::<usize>() + value as usize * st[ai];
        table[flat] = g.table[o];
    });
    let mut args = g.args.clone();
    args.remove(ai);
    canonicalize(&Parfactor { name: g.name.clone(), slots: g.slots.clone(), args, table })
}

/// Absorbs observations `instances` (constant tuples of `prv`) all having
/// value `value`. The covered groundings are split off and the argument is
/// fixed there; the remainder is returned untouched.
pub fn absorb_evidence(
    g: &Parfactor,
    prv: PrvRef,
    instances: &[Vec<u32>],
    value: u32,
    ctx: &mut Ctx,
) -> Result<Vec<Parfactor>, InferenceError> {
    let Some(ai) = g.args.iter().position(|a| a.prv == prv && instances.iter().any(|t| g.class_of(a).contains(t)))
    else {
        return Ok(vec![g.clone()]);
    };
    if g.args[ai].is_counted() {
        let e = expand_counted(g, ai, ctx)?;
        return absorb_all(vec![e], prv, instances, value, ctx);
    }
    let class = g.class_of(&g.args[ai]);
    let inside: Vec<&Vec<u32>> = instances.iter().filter(|t| class.contains(t)).collect();
    let proj: Vec<Vec<u32>> = (0..class.sets.len())
        .map(|i| {
            let mut v: Vec<u32> = inside.iter().map(|t| t[i]).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let rect = proj.iter().map(Vec::len).product::<usize>() == inside.len();
    if !rect {
        let mut parts = vec![g.clone()];
        for t in inside {
            parts = absorb_all(parts, prv, std::slice::from_ref(t), value, ctx)?;
        }
        return Ok(parts);
    }
    let mut out = Vec::new();
    let mut cur = g.clone();
    for (i, set) in proj.iter().enumerate() {
        let s = g.args[ai].params[i];
        let (a, b) = split(&cur, s, set)?;
        if let Some(b) = b {
            out.push(b);
        }
        cur = a.expect("observed constants lie in the class");
    }
    let fixed = fix_arg(&cur, ai, value);
    let mut res = vec![fixed];
    // another argument of the same PRV may still cover observed instances
    res = absorb_all(res, prv, instances, value, ctx)?;
    res.extend(absorb_all(out, prv, instances, value, ctx)?);
    Ok(res)
}

fn absorb_all(
    pfs: Vec<Parfactor>,
    prv: PrvRef,
    instances: &[Vec<u32>],
    value: u32,
    ctx: &mut Ctx,
) -> Result<Vec<Parfactor>, InferenceError> {
    let mut out = Vec::new();
    for p in pfs {
        out.extend(absorb_evidence(&p, prv, instances, value, ctx)?);
    }
    Ok(out)
}

/// Removes slots that no argument mentions. A free dangling slot stands for
/// identical copies of the factor, so the table is raised to its size.
pub fn canonicalize(g: &Parfactor) -> Parfactor {
    let mut used = vec![false; g.slots.len()];
    for a in &g.args {
        for &s in &a.params {
            used[s] = true;
        }
    }
    if used.iter().all(|&u| u) {
        return g.clone();
    }
    let r: f64 = (0..g.slots.len()).filter(|&s| !used[s]).map(|s| g.slots[s].size() as f64).product();
    let mut remap = vec![usize::MAX; g.slots.len()];
    let mut slots = Vec::new();
    for (s, slot) in g.slots.iter().enumerate() {
        if used[s] {
            remap[s] = slots.len();
            slots.push(slot.clone());
        }
    }
    Parfactor {
        name: g.name.clone(),
        slots,
        args: g
            .args
            .iter()
            .map(|a| Arg { params: a.params.iter().map(|&s| remap[s]).collect(), ..a.clone() })
            .collect(),
        table: g.table.iter().map(|&x| mul_log(x, r)).collect(),
    }
}
