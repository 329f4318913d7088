use std::fmt::Write;

use super::{Constraint, GroundAtom, Parfactor, Pdm, Slice, Vocab};

/// Renders a model in the textual format accepted by [`super::parse_model`].
pub fn print_model(pdm: &Pdm) -> String {
    let v = &pdm.vocab;
    let mut out = String::new();
    for l in &v.logvars {
        writeln!(out, "domain {} = {{ {} }}", l.name, l.domain.join(", ")).unwrap();
    }
    for p in &v.prvs {
        write!(out, "prv {}", p.name).unwrap();
        if !p.params.is_empty() {
            let ps: Vec<&str> = p.params.iter().map(|&l| v.logvars[l].name.as_str()).collect();
            write!(out, "({})", ps.join(",")).unwrap();
        }
        if p.range != ["false", "true"] {
            write!(out, " range {{ {} }}", p.range.join(", ")).unwrap();
        }
        out.push('\n');
    }
    for pf in pdm.intra() {
        print_parfactor(&mut out, v, pf, false);
    }
    for pf in pdm.inter() {
        print_parfactor(&mut out, v, pf, true);
    }
    if !pdm.queries.is_empty() {
        let qs: Vec<String> = pdm.queries.iter().map(|q| v.atom_label(q)).collect();
        writeln!(out, "query {}", qs.join(" ; ")).unwrap();
    }
    for (t, obs) in &pdm.evidence.steps {
        if obs.is_empty() {
            continue;
        }
        let items: Vec<String> = obs
            .iter()
            .map(|o| format!("{}={}", atom(v, &o.atom), v.prvs[o.atom.prv].range[o.value as usize]))
            .collect();
        writeln!(out, "evidence t={} {{ {} }}", t, items.join(", ")).unwrap();
    }
    out
}

fn atom(v: &Vocab, a: &GroundAtom) -> String {
    v.atom_label(a)
}

fn print_parfactor(out: &mut String, v: &Vocab, pf: &Parfactor, sliced: bool) {
    if sliced {
        out.push_str("slice ");
    }
    let args: Vec<String> = pf
        .args
        .iter()
        .map(|a| {
            let d = &v.prvs[a.prv];
            let mut s = d.name.clone();
            if !d.params.is_empty() {
                let ps: Vec<&str> = d.params.iter().map(|&l| v.logvars[l].name.as_str()).collect();
                write!(s, "({})", ps.join(",")).unwrap();
            }
            match a.slice {
                Slice::Prev => s.push_str("@0"),
                Slice::Curr => s.push_str("@1"),
                _ => {}
            }
            s
        })
        .collect();
    write!(out, "parfactor {} [ {} ]", pf.name, args.join(", ")).unwrap();
    if let Constraint::Product { logvars, values } = &pf.constraint {
        let parts: Vec<String> = logvars
            .iter()
            .zip(values)
            .map(|(&l, vals)| {
                let cs: Vec<&str> = vals.iter().map(|&c| v.logvars[l].domain[c as usize].as_str()).collect();
                format!("{} in {{ {} }}", v.logvars[l].name, cs.join(", "))
            })
            .collect();
        write!(out, " where {}", parts.join(" and ")).unwrap();
    }
    let ranges: Vec<&Vec<String>> = pf.args.iter().map(|a| &v.prvs[a.prv].range).collect();
    let initials = ranges.iter().all(|r| {
        let mut cs: Vec<char> = r.iter().filter_map(|s| s.chars().next()).collect();
        let n = cs.len();
        cs.sort_unstable();
        cs.dedup();
        cs.len() == n && r.iter().all(|s| !s.is_empty())
    });
    let mut entries = Vec::with_capacity(pf.potential.len());
    for (idx, val) in pf.potential.iter().enumerate() {
        let mut rest = idx;
        let mut vals = vec![0; ranges.len()];
        for (i, r) in ranges.iter().enumerate().rev() {
            vals[i] = rest % r.len();
            rest /= r.len();
        }
        let key = if initials {
            vals.iter().zip(&ranges).map(|(&x, r)| r[x].chars().next().unwrap()).collect::<String>()
        } else {
            vals.iter().zip(&ranges).map(|(&x, r)| r[x].as_str()).collect::<Vec<_>>().join("/")
        };
        entries.push(format!("{key}: {val:?}"));
    }
    writeln!(out, " table {{ {} }}", entries.join(", ")).unwrap();
}
