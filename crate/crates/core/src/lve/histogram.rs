use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

/// All histograms of `n` items over `k` values, in a fixed order.
#[derive(Debug)]
pub struct HistogramSpace {
    pub n: usize,
    pub k: usize,
    pub hists: Vec<Vec<u32>>,
    /// `ln(n! / prod_v h(v)!)` per histogram.
    pub log_multinomial: Vec<f64>,
    index: HashMap<Vec<u32>, usize>,
}

impl HistogramSpace {
    fn build(n: usize, k: usize) -> Self {
        let mut hists = Vec::new();
        let mut cur = vec![0u32; k];
        compositions(n as u32, 0, &mut cur, &mut hists);
        let ln_fact: Vec<f64> = {
            let mut v = vec![0.0; n + 1];
            for i in 1..=n {
                v[i] = v[i - 1] + (i as f64).ln();
            }
            v
        };
        let log_multinomial =
            hists.iter().map(|h| ln_fact[n] - h.iter().map(|&c| ln_fact[c as usize]).sum::<f64>()).collect();
        let index = hists.iter().enumerate().map(|(i, h)| (h.clone(), i)).collect();
        HistogramSpace { n, k, hists, log_multinomial, index }
    }

    pub fn get(n: usize, k: usize) -> Rc<HistogramSpace> {
        thread_local! {
            static CACHE: RefCell<HashMap<(usize, usize), Rc<HistogramSpace>>> = RefCell::new(HashMap::new());
        }
        CACHE.with(|c| c.borrow_mut().entry((n, k)).or_insert_with(|| Rc::new(HistogramSpace::build(n, k))).clone())
    }

    pub fn len(&self) -> usize {
        self.hists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hists.is_empty()
    }

    pub fn index_of(&self, h: &[u32]) -> Option<usize> {
        self.index.get(h).copied()
    }
}

fn compositions(rest: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = rest;
        out.push(cur.clone());
        return;
    }
    for c in (0..=rest).rev() {
        cur[pos] = c;
        compositions(rest - c, pos + 1, cur, out);
    }
}

/// Number of histograms of `n` items over `k` values, `C(n+k-1, k-1)`.
pub fn count(n: usize, k: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 1..k as u128 {
        r = r * (n as u128 + i) / i;
    }
    r
}
