//! Edit-distance alignment kernels shared by the sequencer simulator, the
//! decoder and reference design.
//!
//! All costs are unit (Levenshtein). Sequences are ASCII nucleotides.

/// Plain Levenshtein distance, O(|a|·|b|) time and O(|b|) memory.
pub fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance, giving up once it provably exceeds `limit`.
/// Returns `None` in that case.
pub fn levenshtein_within(a: &[u8], b: &[u8], limit: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > limit {
        return None;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > limit {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Some(prev[b.len()]).filter(|&d| d <= limit)
}

/// Best placement of a whole pattern inside a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    /// First text position covered by the alignment.
    pub start: usize,
    /// One past the last text position covered.
    pub end: usize,
    pub distance: usize,
}

/// Semi-global ("fitting") alignment: the full `pattern` against any
/// substring of `text`, leading and trailing text free. Returns the hit
/// with the lowest distance; ties go to the leftmost end. `None` only when
/// the pattern is empty.
pub fn semiglobal(pattern: &[u8], text: &[u8]) -> Option<Hit> {
    if pattern.is_empty() {
        return None;
    }
    let n = text.len();
    // dist and start-of-alignment per text column, rolled over pattern rows
    let mut dist: Vec<usize> = vec![0; n + 1];
    let mut start: Vec<usize> = (0..=n).collect();
    let mut ndist = vec![0; n + 1];
    let mut nstart = vec![0; n + 1];
    for (i, &p) in pattern.iter().enumerate() {
        ndist[0] = i + 1;
        nstart[0] = 0;
        for j in 1..=n {
            let diag = dist[j - 1] + usize::from(text[j - 1] != p);
            let up = dist[j] + 1;
            let left = ndist[j - 1] + 1;
            // prefer diagonal, then consuming text (left), then pattern (up)
            let (d, s) = if diag <= up && diag <= left {
                (diag, start[j - 1])
            } else if left <= up {
                (left, nstart[j - 1])
            } else {
                (up, start[j])
            };
            ndist[j] = d;
            nstart[j] = s;
        }
        std::mem::swap(&mut dist, &mut ndist);
        std::mem::swap(&mut start, &mut nstart);
    }
    let mut best: Option<Hit> = None;
    for j in 0..=n {
        let hit = Hit {
            start: start[j],
            end: j,
            distance: dist[j],
        };
        match best {
            Some(b) if b.distance <= hit.distance => {}
            _ => best = Some(hit),
        }
    }
    best
}

/// Lowest edit distance of `pattern` against any substring of `text`.
///
/// Uses Myers' bit-vector recurrence for patterns of up to 64 symbols and a
/// column DP otherwise.
pub fn best_fit_distance(pattern: &[u8], text: &[u8]) -> usize {
    let m = pattern.len();
    if m == 0 {
        return 0;
    }
    if m > 64 {
        return semiglobal(pattern, text).map_or(m, |h| h.distance);
    }
    let mut peq = [0u64; 256];
    for (i, &c) in pattern.iter().enumerate() {
        peq[c as usize] |= 1 << i;
    }
    let mask = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let high = 1u64 << (m - 1);
    let mut pv = mask;
    let mut mv = 0u64;
    let mut score = m;
    let mut best = m;
    for &t in text {
        let eq = peq[t as usize];
        let xv = eq | mv;
        let xh = ((((eq & pv).wrapping_add(pv)) ^ pv) | eq) & mask;
        let mut ph = (mv | !(xh | pv)) & mask;
        let mut mh = pv & xh;
        if ph & high != 0 {
            score += 1;
        }
        if mh & high != 0 {
            score -= 1;
        }
        // text ends are free: no carry-in at the top row
        ph = (ph << 1) & mask;
        mh = (mh << 1) & mask;
        pv = (mh | !(xv | ph)) & mask;
        mv = ph & xv;
        best = best.min(score);
    }
    best
}

/// One column of a pairwise global alignment of `query` against `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    /// Query and target symbols aligned (equal or substituted).
    Pair,
    /// Symbol present in the query only.
    Insertion,
    /// Symbol present in the target only.
    Deletion,
}

/// Banded global alignment of `query` against `target` with unit costs.
/// Cells farther than `band` from the main diagonal are never visited, so
/// `band` must be at least the length difference. Returns the edit
/// distance and the operations from left to right.
pub fn global_banded(query: &[u8], target: &[u8], band: usize) -> (usize, Vec<AlignOp>) {
    let (n, m) = (query.len(), target.len());
    let band = band.max(n.abs_diff(m));
    let width = 2 * band + 1;
    const INF: usize = usize::MAX / 2;
    // row i, column j stored at i*width + (j + band - i)
    let mut cost = vec![INF; (n + 1) * width];
    let mut from = vec![0u8; (n + 1) * width];
    let at = |i: usize, j: usize| -> Option<usize> {
        let off = j + band;
        if off < i || off - i >= width {
            None
        } else {
            Some(i * width + off - i)
        }
    };
    for j in 0..=m.min(band) {
        let k = at(0, j).unwrap();
        cost[k] = j;
        from[k] = 2;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(band);
        let hi = (i + band).min(m);
        for j in lo..=hi {
            let k = at(i, j).unwrap();
            let mut best = INF;
            let mut dir = 0u8;
            if j > 0 {
                if let Some(d) = at(i - 1, j - 1) {
                    let c = cost[d] + usize::from(query[i - 1] != target[j - 1]);
                    if c < best {
                        best = c;
                        dir = 0;
                    }
                }
            }
            if let Some(u) = at(i - 1, j) {
                let c = cost[u] + 1;
                if c < best {
                    best = c;
                    dir = 1;
                }
            }
            if j > 0 {
                if let Some(l) = at(i, j - 1) {
                    let c = cost[l] + 1;
                    if c < best {
                        best = c;
                        dir = 2;
                    }
                }
            }
            cost[k] = best;
            from[k] = dir;
        }
    }
    let distance = cost[at(n, m).expect("band covers the end cell")];
    let mut ops = Vec::with_capacity(n.max(m) + 8);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let k = at(i, j).unwrap();
        match (i, j, from[k]) {
            (0, _, _) => {
                ops.push(AlignOp::Deletion);
                j -= 1;
            }
            (_, 0, _) => {
                ops.push(AlignOp::Insertion);
                i -= 1;
            }
            (_, _, 0) => {
                ops.push(AlignOp::Pair);
                i -= 1;
                j -= 1;
            }
            (_, _, 1) => {
                ops.push(AlignOp::Insertion);
                i -= 1;
            }
            _ => {
                ops.push(AlignOp::Deletion);
                j -= 1;
            }
        }
    }
    ops.reverse();
    (distance, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dna(max: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(prop::sample::select(b"ACGT".to_vec()), 0..max)
    }

    // Independent oracle: min over all substrings of the text.
    fn brute_best_fit(p: &[u8], t: &[u8]) -> usize {
        let mut best = levenshtein(p, &[]);
        for s in 0..=t.len() {
            for e in s..=t.len() {
                best = best.min(levenshtein(p, &t[s..e]));
            }
        }
        best
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein(b"", b""), 0);
        assert_eq!(levenshtein(b"ACGT", b""), 4);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein_within(b"kitten", b"sitting", 3), Some(3));
        assert_eq!(levenshtein_within(b"kitten", b"sitting", 2), None);
    }

    #[test]
    fn semiglobal_finds_embedded_pattern() {
        let hit = semiglobal(b"GATTACA", b"CCCCGATTACACCCC").unwrap();
        assert_eq!(
            hit,
            Hit {
                start: 4,
                end: 11,
                distance: 0
            }
        );
        let hit = semiglobal(b"GATTACA", b"CCCCGATACACCCC").unwrap();
        assert_eq!(hit.distance, 1);
        assert_eq!(semiglobal(b"", b"ACGT"), None);
    }

    #[test]
    fn global_banded_ops_are_consistent() {
        let (d, ops) = global_banded(b"ACGTTACG", b"ACGTACG", 4);
        assert_eq!(d, 1);
        let q = ops.iter().filter(|o| **o != AlignOp::Deletion).count();
        let t = ops.iter().filter(|o| **o != AlignOp::Insertion).count();
        assert_eq!((q, t), (8, 7));
    }

    proptest! {
        #[test]
        fn myers_matches_brute_force(p in dna(12).prop_filter("non-empty", |p| !p.is_empty()), t in dna(14)) {
            let oracle = brute_best_fit(&p, &t);
            prop_assert_eq!(best_fit_distance(&p, &t), oracle);
            prop_assert_eq!(semiglobal(&p, &t).unwrap().distance, oracle);
        }

        #[test]
        fn semiglobal_hit_span_realizes_distance(p in dna(10).prop_filter("non-empty", |p| !p.is_empty()), t in dna(20)) {
            let hit = semiglobal(&p, &t).unwrap();
            prop_assert_eq!(levenshtein(&p, &t[hit.start..hit.end]), hit.distance);
        }

        #[test]
        fn banded_equals_full_when_band_is_wide(a in dna(30), b in dna(30)) {
            let (d, ops) = global_banded(&a, &b, 30);
            prop_assert_eq!(d, levenshtein(&a, &b));
            let cost: usize = {
                let (mut i, mut j, mut c) = (0, 0, 0);
                for op in &ops {
                    match op {
                        AlignOp::Pair => { c += usize::from(a[i] != b[j]); i += 1; j += 1; }
                        AlignOp::Insertion => { c += 1; i += 1; }
                        AlignOp::Deletion => { c += 1; j += 1; }
                    }
                }
                c
            };
            prop_assert_eq!(cost, d);
        }

        #[test]
        fn long_patterns_fall_back_to_dp(t in dna(120)) {
            let p: Vec<u8> = b"ACGT".iter().cycle().take(70).copied().collect();
            prop_assert_eq!(best_fit_distance(&p, &t), semiglobal(&p, &t).unwrap().distance);
        }
    }
}
