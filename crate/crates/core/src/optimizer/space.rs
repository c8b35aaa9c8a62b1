//! The schedule space: loop orders and the divisor chains that fill them.

use crate::model::{divisors, BlockingString, Dim, LayerShape, Loop};

/// Splittable dimensions in the order orders are generated.
const ORDER_DIMS: [Dim; 5] = [Dim::X, Dim::Y, Dim::C, Dim::K, Dim::N];

/// Longest divisor chain `1 < e_1 < ... < n`: the number of prime factors.
pub fn max_occurrences(n: u64) -> usize {
    let mut n = n;
    let mut count = 0;
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            n /= p;
            count += 1;
        }
        p += 1;
    }
    if n > 1 {
        count += 1;
    }
    count
}

/// Window loops placed innermost, in a fixed order.
pub fn window_prefix(layer: &LayerShape) -> Vec<Loop> {
    [Dim::Fw, Dim::Fh]
        .into_iter()
        .filter(|&d| layer.dim(d) > 1)
        .map(|d| Loop::new(d, layer.dim(d)))
        .collect()
}

/// Maximum occurrences per dimension (indexed by `Dim::index`) at a depth.
pub fn occurrence_limits(layer: &LayerShape, levels: usize) -> [usize; 7] {
    let mut lim = [0; 7];
    for d in ORDER_DIMS {
        let n = layer.dim(d);
        lim[d.index()] = if n > 1 { levels.min(max_occurrences(n)).max(1) } else { 0 };
    }
    lim
}

/// Every order of the splittable dimensions above the window loops in
/// which each dimension occurs between once and its limit, with no two
/// neighbouring loops over the same dimension (those would merge).
pub fn enumerate_orders(layer: &LayerShape, levels: usize) -> Vec<Vec<Dim>> {
    let lim = occurrence_limits(layer, levels);
    let dims: Vec<Dim> = ORDER_DIMS.into_iter().filter(|d| lim[d.index()] > 0).collect();
    let mut out = Vec::new();
    let mut counts = vec![1usize; dims.len()];
    loop {
        let mut left = counts.clone();
        let total: usize = counts.iter().sum();
        let mut seq = Vec::with_capacity(total);
        arrange(&dims, &mut left, None, total, &mut seq, &mut out);
        // Next multiset of occurrence counts.
        let mut i = 0;
        loop {
            if i == dims.len() {
                return out;
            }
            if counts[i] < lim[dims[i].index()] {
                counts[i] += 1;
                break;
            }
            counts[i] = 1;
            i += 1;
        }
    }
}

fn arrange(
    dims: &[Dim],
    left: &mut [usize],
    last: Option<usize>,
    remaining: usize,
    seq: &mut Vec<Dim>,
    out: &mut Vec<Vec<Dim>>,
) {
    if remaining == 0 {
        out.push(seq.clone());
        return;
    }
    // Prune when the most frequent dimension can no longer be separated.
    let max_left = left.iter().copied().max().unwrap_or(0);
    if max_left > remaining - max_left + 1 {
        return;
    }
    for i in 0..dims.len() {
        if left[i] == 0 || last == Some(i) {
            continue;
        }
        left[i] -= 1;
        seq.push(dims[i]);
        arrange(dims, left, Some(i), remaining - 1, seq, out);
        seq.pop();
        left[i] += 1;
    }
}

/// All cumulative extent chains of length `m` ending at `n`.
pub fn extent_chains(n: u64, m: usize) -> Vec<Vec<u64>> {
    let divs = divisors(n);
    let mut out = Vec::new();
    let mut chain = Vec::with_capacity(m);
    fn rec(divs: &[u64], n: u64, m: usize, cur: u64, chain: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if chain.len() + 1 == m {
            chain.push(n);
            out.push(chain.clone());
            chain.pop();
            return;
        }
        for &d in divs {
            if d > cur && d < n && d % cur == 0 {
                chain.push(d);
                rec(divs, n, m, d, chain, out);
                chain.pop();
            }
        }
    }
    if m >= 1 {
        rec(&divs, n, m, 1, &mut chain, &mut out);
    }
    out
}

/// Extent chains for every dimension of one order.
pub struct OrderChains {
    pub order: Vec<Dim>,
    /// Per dimension index: the chains for its occurrence count.
    pub chains: [Vec<Vec<u64>>; 7],
}

impl OrderChains {
    pub fn new(layer: &LayerShape, order: Vec<Dim>) -> Self {
        let mut counts = [0usize; 7];
        for d in &order {
            counts[d.index()] += 1;
        }
        let chains = std::array::from_fn(|i| {
            if counts[i] == 0 {
                Vec::new()
            } else {
                extent_chains(layer.dim(Dim::ALL[i]), counts[i])
            }
        });
        OrderChains { order, chains }
    }

    pub fn count(&self) -> u64 {
        self.chains.iter().filter(|c| !c.is_empty()).map(|c| c.len() as u64).product::<u64>()
            * u64::from(self.feasible())
    }

    fn feasible(&self) -> bool {
        let mut counts = [0usize; 7];
        for d in &self.order {
            counts[d.index()] += 1;
        }
        (0..7).all(|i| counts[i] == 0 || !self.chains[i].is_empty())
    }

    /// Calls `f` with every string of this order.
    pub fn for_each(&self, prefix: &[Loop], mut f: impl FnMut(BlockingString)) {
        if !self.feasible() {
            return;
        }
        let active: Vec<usize> = (0..7).filter(|&i| !self.chains[i].is_empty()).collect();
        let mut pick = vec![0usize; active.len()];
        loop {
            let mut occ = [0usize; 7];
            let mut loops = Vec::with_capacity(prefix.len() + self.order.len());
            loops.extend_from_slice(prefix);
            for &d in &self.order {
                let i = d.index();
                let slot = active.iter().position(|&a| a == i).unwrap();
                loops.push(Loop::new(d, self.chains[i][pick[slot]][occ[i]]));
                occ[i] += 1;
            }
            f(BlockingString::new(loops));
            let mut s = 0;
            loop {
                if s == active.len() {
                    return;
                }
                pick[s] += 1;
                if pick[s] < self.chains[active[s]].len() {
                    break;
                }
                pick[s] = 0;
                s += 1;
            }
        }
    }
}
