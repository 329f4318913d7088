use super::{expand_counted, split, Ctx, Parfactor};
use crate::error::InferenceError;

/// Splits parfactors until any two argument classes of the same PRV are
/// either identical or disjoint. Splitting a counted slot requires expanding
/// its counting argument first, which is a grounding.
pub fn shatter(pfs: &mut Vec<Parfactor>, ctx: &mut Ctx) -> Result<(), InferenceError> {
    'outer: loop {
        ctx.check_time()?;
        let classes: Vec<_> = pfs.iter().map(|p| p.classes()).collect();
        for (i, ci) in classes.iter().enumerate() {
            for (ai, a) in ci.iter().enumerate() {
                for cj in &classes {
                    for b in cj {
                        if a == b || !a.overlaps(b) {
                            continue;
                        }
                        // split the first position where `a` is not inside `b`
                        let Some(pos) = (0..a.sets.len()).find(|&k| a.sets[k].iter().any(|v| !b.sets[k].contains(v)))
                        else {
                            continue;
                        };
                        let g = pfs.swap_remove(i);
                        let slot = g.args[ai].params[pos];
                        if g.is_counted_slot(slot) {
                            pfs.push(expand_counted(&g, ai, ctx)?);
                        } else {
                            let (x, y) = split(&g, slot, &b.sets[pos])?;
                            pfs.extend(x);
                            pfs.extend(y);
                        }
                        continue 'outer;
                    }
                }
            }
        }
        return Ok(());
    }
}
