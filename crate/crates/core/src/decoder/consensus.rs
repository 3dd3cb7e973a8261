use std::collections::BTreeMap;

use crate::align::{global_banded, AlignOp};
use crate::transcoder::BLOCK_NT;

const ROUNDS: usize = 4;
const GAP: usize = 4;

fn code(c: u8) -> usize {
    match c {
        b'A' => 0,
        b'C' => 1,
        b'G' => 2,
        _ => 3,
    }
}

/// Index of the largest count; ties go to the lowest index.
fn argmax(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Most frequent observation; ties prefer the block length, then the
/// lexicographically smallest sequence.
fn initial_center<'a>(obs: &[&'a [u8]]) -> &'a [u8] {
    let mut freq: BTreeMap<&[u8], usize> = BTreeMap::new();
    for o in obs {
        *freq.entry(o).or_insert(0) += 1;
    }
    freq.into_iter()
        .min_by_key(|(s, n)| (std::cmp::Reverse(*n), s.len().abs_diff(BLOCK_NT), *s))
        .map(|(s, _)| s)
        .expect("at least one observation")
}

/// Per-column votes of observations aligned to a center.
struct Tally {
    n: usize,
    /// Base counts per center position; index 4 counts gaps.
    base: Vec<[usize; 5]>,
    /// Observations with an insertion before each position (and at the end).
    ins: Vec<usize>,
    ins_base: Vec<[usize; 4]>,
}

fn tally(obs: &[&[u8]], center: &[u8], band: usize) -> Tally {
    let len = center.len();
    let mut t = Tally {
        n: obs.len(),
        base: vec![[0; 5]; len],
        ins: vec![0; len + 1],
        ins_base: vec![[0; 4]; len + 1],
    };
    for o in obs {
        let (_, ops) = global_banded(o, center, band);
        let (mut i, mut j) = (0, 0);
        let mut last_ins_gap = usize::MAX;
        for op in ops {
            match op {
                AlignOp::Pair => {
                    t.base[j][code(o[i])] += 1;
                    i += 1;
                    j += 1;
                }
                AlignOp::Deletion => {
                    t.base[j][GAP] += 1;
                    j += 1;
                }
                AlignOp::Insertion => {
                    if last_ins_gap != j {
                        t.ins[j] += 1;
                        t.ins_base[j][code(o[i])] += 1;
                        last_ins_gap = j;
                    }
                    i += 1;
                }
            }
        }
    }
    t
}

/// Decision for one insertion slot or center position; `choice` indexes
/// `ACGT`, or is [`GAP`] for nothing.
#[derive(Clone, Copy)]
struct Column {
    insertion: bool,
    pos: usize,
    choice: usize,
}

impl Tally {
    fn default_columns(&self) -> Vec<Column> {
        let mut cols = Vec::with_capacity(2 * self.base.len() + 1);
        for j in 0..=self.base.len() {
            let choice = if self.ins[j] * 2 > self.n {
                argmax(&self.ins_base[j])
            } else {
                GAP
            };
            cols.push(Column {
                insertion: true,
                pos: j,
                choice,
            });
            if j < self.base.len() {
                let b = &self.base[j];
                let choice = if b[GAP] * 2 > self.n {
                    GAP
                } else {
                    argmax(&b[..4])
                };
                cols.push(Column {
                    insertion: false,
                    pos: j,
                    choice,
                });
            }
        }
        cols
    }

    fn count(&self, c: &Column, choice: usize) -> usize {
        match (c.insertion, choice) {
            (true, GAP) => self.n - self.ins[c.pos],
            (true, b) => self.ins_base[c.pos][b],
            (false, s) => self.base[c.pos][s],
        }
    }

    /// Runner-up choices with their vote margin behind the default.
    fn alternatives(&self, cols: &[Column]) -> Vec<(usize, usize, usize)> {
        let mut alts = Vec::new();
        for (ci, c) in cols.iter().enumerate() {
            let best = self.count(c, c.choice);
            let runner = (0..5)
                .filter(|&s| s != c.choice)
                .map(|s| (self.count(c, s), s))
                .filter(|&(n, _)| n > 0)
                .max_by_key(|&(n, s)| (n, std::cmp::Reverse(s)));
            if let Some((n, s)) = runner {
                alts.push((best.saturating_sub(n), ci, s));
            }
        }
        alts.sort_unstable();
        alts
    }
}

fn emit(cols: &[Column]) -> Vec<u8> {
    cols.iter()
        .filter(|c| c.choice != GAP)
        .map(|c| b"ACGT"[c.choice])
        .collect()
}

fn refine(obs: &[&[u8]], start: &[u8], band: usize) -> Vec<u8> {
    let mut center = start.to_vec();
    for _ in 0..ROUNDS {
        let next = emit(&tally(obs, &center, band).default_columns());
        if next == center {
            break;
        }
        center = next;
    }
    center
}

/// Plurality consensus of observations of one block.
///
/// Every observation is aligned to the current candidate; each candidate
/// position takes the most voted base (lexicographically smallest on ties),
/// and gaps or insertions only win with a strict majority. Repeats until
/// the candidate is stable. Results outside `148 ± tol` fall back to the
/// initial candidate, which is itself an observation.
pub fn consensus(obs: &[&[u8]], tol: usize) -> Vec<u8> {
    assert!(!obs.is_empty(), "consensus needs at least one observation");
    let first = initial_center(obs);
    if obs.len() == 1 || obs.iter().all(|o| *o == first) {
        return first.to_vec();
    }
    let center = refine(obs, first, 2 * tol + 4);
    if center.len().abs_diff(BLOCK_NT) > tol {
        return first.to_vec();
    }
    center
}

/// Largest number of uncertain columns tried in combination.
const REPAIR_COLUMNS: usize = 12;
/// Largest number of columns changed at once.
const REPAIR_DEPTH: usize = 3;
/// Alternative starting centers tried.
const MAX_CENTERS: usize = 8;

/// Consensus that must satisfy `accept`, typically a checksum.
///
/// Tries the plain consensus, then consensus from other observations as
/// starting centers, then up to three changes at the least certain
/// columns of each of those. Returns the first accepted sequence.
pub fn consensus_checked(
    obs: &[&[u8]],
    tol: usize,
    accept: impl Fn(&[u8]) -> bool,
) -> Option<Vec<u8>> {
    assert!(!obs.is_empty(), "consensus needs at least one observation");
    let band = 2 * tol + 4;
    let plain = consensus(obs, tol);
    if accept(&plain) {
        return Some(plain);
    }
    let mut distinct: BTreeMap<&[u8], usize> = BTreeMap::new();
    for o in obs {
        *distinct.entry(o).or_insert(0) += 1;
    }
    let mut centers: Vec<(&[u8], usize)> = distinct.into_iter().collect();
    centers.sort_by_key(|(s, n)| (std::cmp::Reverse(*n), s.len().abs_diff(BLOCK_NT)));
    let mut tried = vec![plain.clone()];
    for (c, _) in centers.iter().take(MAX_CENTERS) {
        let r = refine(obs, c, band);
        if tried.contains(&r) {
            continue;
        }
        if accept(&r) {
            return Some(r);
        }
        tried.push(r);
    }
    for center in &tried {
        let t = tally(obs, center, band);
        let cols = t.default_columns();
        let alts: Vec<(usize, usize, usize)> = t
            .alternatives(&cols)
            .into_iter()
            .take(REPAIR_COLUMNS)
            .collect();
        if let Some(s) = enumerate_repairs(&cols, &alts, &accept) {
            return Some(s);
        }
    }
    None
}

fn enumerate_repairs(
    cols: &[Column],
    alts: &[(usize, usize, usize)],
    accept: &impl Fn(&[u8]) -> bool,
) -> Option<Vec<u8>> {
    let base_len = emit(cols).len() as isize;
    // length change of taking each alternative
    let delta: Vec<isize> = alts
        .iter()
        .map(|&(_, ci, s)| {
            let was = isize::from(cols[ci].choice != GAP);
            let now = isize::from(s != GAP);
            now - was
        })
        .collect();
    let mut pick: Vec<usize> = Vec::with_capacity(REPAIR_DEPTH);
    for depth in 1..=REPAIR_DEPTH.min(alts.len()) {
        if let Some(s) = combos(
            0,
            depth,
            &mut pick,
            &mut |p: &[usize]| {
                let len = base_len + p.iter().map(|&i| delta[i]).sum::<isize>();
                if len != BLOCK_NT as isize {
                    return None;
                }
                let mut c = cols.to_vec();
                for &i in p {
                    c[alts[i].1].choice = alts[i].2;
                }
                let s = emit(&c);
                accept(&s).then_some(s)
            },
            alts.len(),
        ) {
            return Some(s);
        }
    }
    None
}

fn combos(
    from: usize,
    left: usize,
    pick: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]) -> Option<Vec<u8>>,
    n: usize,
) -> Option<Vec<u8>> {
    if left == 0 {
        return f(pick);
    }
    for i in from..n {
        pick.push(i);
        let r = combos(i + 1, left - 1, pick, f, n);
        pick.pop();
        if r.is_some() {
            return r;
        }
    }
    None
}
