//! Reversible 5/3 integer lifting (the lossless filter pair of JPEG 2000).
//!
//! One-dimensional analysis splits a signal of length `n` into `ceil(n/2)`
//! low-pass samples followed by `floor(n/2)` high-pass samples. Borders use
//! whole-sample symmetric extension, which for the lifting form reduces to
//! clamping neighbour indices.

/// Forward 5/3 lifting on `line`, in place. Output layout: `[low..., high...]`.
pub fn analyze_1d(line: &mut [i32], scratch: &mut Vec<i32>) {
    let n = line.len();
    if n < 2 {
        return;
    }
    let n_low = n.div_ceil(2);
    let n_high = n / 2;
    scratch.clear();
    scratch.resize(n, 0);
    let (low, high) = scratch.split_at_mut(n_low);

    let even = |i: usize| -> i32 {
        // x[2i] with x[n] mirrored to x[n-2]
        let idx = 2 * i;
        if idx < n {
            line[idx]
        } else {
            line[2 * (n - 1) - idx]
        }
    };
    for (i, h) in high.iter_mut().enumerate() {
        *h = line[2 * i + 1] - ((even(i) + even(i + 1)) >> 1);
    }
    for (i, l) in low.iter_mut().enumerate() {
        let left = high[i.saturating_sub(1).min(n_high - 1)];
        let right = high[i.min(n_high - 1)];
        *l = line[2 * i] + ((left + right + 2) >> 2);
    }
    line.copy_from_slice(scratch);
}

/// Inverse of [`analyze_1d`].
pub fn synthesize_1d(line: &mut [i32], scratch: &mut Vec<i32>) {
    let n = line.len();
    if n < 2 {
        return;
    }
    let n_low = n.div_ceil(2);
    let n_high = n / 2;
    scratch.clear();
    scratch.resize(n, 0);
    let (low, high) = line.split_at(n_low);

    for i in 0..n_low {
        let left = high[i.saturating_sub(1).min(n_high - 1)];
        let right = high[i.min(n_high - 1)];
        scratch[2 * i] = low[i] - ((left + right + 2) >> 2);
    }
    for i in 0..n_high {
        let a = scratch[2 * i];
        let b = if 2 * i + 2 < n {
            scratch[2 * i + 2]
        } else {
            scratch[2 * i]
        };
        scratch[2 * i + 1] = high[i] + ((a + b) >> 1);
    }
    line.copy_from_slice(scratch);
}

/// One level of 2-D analysis over the top-left `w x h` region of a plane with
/// row stride `stride`. Rows first, then columns. Afterwards the region holds
/// the four subbands in Mallat order: LL top-left, HL top-right, LH
/// bottom-left, HH bottom-right.
pub fn analyze_2d(plane: &mut [i32], stride: usize, w: usize, h: usize) {
    let mut line = Vec::with_capacity(w.max(h));
    let mut scratch = Vec::with_capacity(w.max(h));
    for y in 0..h {
        let row = &mut plane[y * stride..y * stride + w];
        analyze_1d(row, &mut scratch);
    }
    for x in 0..w {
        line.clear();
        line.extend((0..h).map(|y| plane[y * stride + x]));
        analyze_1d(&mut line, &mut scratch);
        for (y, v) in line.iter().enumerate() {
            plane[y * stride + x] = *v;
        }
    }
}

/// Inverse of [`analyze_2d`]: columns first, then rows.
pub fn synthesize_2d(plane: &mut [i32], stride: usize, w: usize, h: usize) {
    let mut line = Vec::with_capacity(w.max(h));
    let mut scratch = Vec::with_capacity(w.max(h));
    for x in 0..w {
        line.clear();
        line.extend((0..h).map(|y| plane[y * stride + x]));
        synthesize_1d(&mut line, &mut scratch);
        for (y, v) in line.iter().enumerate() {
            plane[y * stride + x] = *v;
        }
    }
    for y in 0..h {
        let row = &mut plane[y * stride..y * stride + w];
        synthesize_1d(row, &mut scratch);
    }
}
