//! Random dynamic models for the temporal tests.

use std::collections::BTreeSet;

use ldjt::model::{Constraint, GroundAtom, Logvar, Observation, Parfactor, Pdm, PrvDecl, PrvRef, Slice, Vocab};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn table(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..1 << n).map(|_| rng.gen_range(0.05..1.0)).collect()
}

fn pick(rng: &mut ChaCha8Rng, from: &[usize], k: usize) -> Vec<usize> {
    let mut ids = from.to_vec();
    for j in 0..k.min(ids.len()) {
        let s = rng.gen_range(j..ids.len());
        ids.swap(j, s);
    }
    ids.truncate(k);
    ids
}

/// A dynamic model with up to three intra-slice parfactors, one or two
/// inter-slice parfactors, domains of size at most three, one query per
/// PRV and sparse evidence up to step `t_max`.
pub fn random_pdm(rng: &mut ChaCha8Rng, t_max: u32) -> Pdm {
    let dom = |n: usize, p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let vocab = Vocab {
        logvars: vec![
            Logvar { name: "X".into(), domain: dom(rng.gen_range(1..=3), "x") },
            Logvar { name: "Y".into(), domain: dom(rng.gen_range(1..=2), "y") },
        ],
        prvs: [("R0", vec![]), ("R1", vec![0]), ("R2", vec![1]), ("R3", vec![0, 1]), ("R4", vec![0])]
            .into_iter()
            .map(|(n, params)| PrvDecl { name: n.into(), params, range: vec!["f".into(), "t".into()] })
            .collect(),
    };
    let all: Vec<usize> = (0..vocab.prvs.len()).collect();
    let mut intra = Vec::new();
    for i in 0..rng.gen_range(1..=3) {
        let k = rng.gen_range(1..=3);
        let ids = pick(rng, &all, k);
        intra.push(Parfactor {
            name: format!("g{i}"),
            args: ids.iter().map(|&p| PrvRef::new(p, Slice::Static)).collect(),
            potential: table(rng, k),
            constraint: Constraint::Top,
        });
    }
    let used: Vec<usize> =
        intra.iter().flat_map(|p| p.args.iter().map(|a| a.prv)).collect::<BTreeSet<_>>().into_iter().collect();
    let mut inter = Vec::new();
    for i in 0..rng.gen_range(1..=2) {
        let k = rng.gen_range(1..=2);
        let prev = pick(rng, &used, k);
        let curr = pick(rng, &used, 1);
        let args: Vec<PrvRef> = prev
            .iter()
            .map(|&p| PrvRef::new(p, Slice::Prev))
            .chain(curr.iter().map(|&p| PrvRef::new(p, Slice::Curr)))
            .collect();
        let potential = table(rng, args.len());
        inter.push(Parfactor { name: format!("h{i}"), args, potential, constraint: Constraint::Top });
    }
    let mut pdm = Pdm::new(vocab, intra, inter).unwrap();
    for &p in &used {
        let args = vec![0; pdm.vocab.prvs[p].params.len()];
        pdm.queries.push(GroundAtom { prv: p, args });
    }
    for t in 0..=t_max {
        if rng.gen_bool(0.3) {
            let p = used[rng.gen_range(0..used.len())];
            let args = pdm.vocab.prvs[p]
                .params
                .iter()
                .map(|&l| rng.gen_range(0..pdm.vocab.logvars[l].domain.len()) as u32)
                .collect();
            let obs = Observation { atom: GroundAtom { prv: p, args }, value: rng.gen_range(0..2) };
            pdm.evidence.observe(t, obs).unwrap();
        }
    }
    pdm
}

/// Replaces every potential of the model by fresh values in `[0.05, 1)`.
pub fn reseed_potentials(pdm: &Pdm, rng: &mut ChaCha8Rng) -> Pdm {
    let intra: Vec<Parfactor> =
        pdm.intra().iter().map(|p| Parfactor { potential: table(rng, p.args.len()), ..p.clone() }).collect();
    let inter: Vec<Parfactor> =
        pdm.inter().into_iter().map(|p| Parfactor { potential: table(rng, p.args.len()), ..p.clone() }).collect();
    let mut out = Pdm::new(pdm.vocab.clone(), intra, inter).unwrap();
    out.queries = pdm.queries.clone();
    out.evidence = pdm.evidence.clone();
    out
}
