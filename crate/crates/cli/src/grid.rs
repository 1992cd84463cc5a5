use std::collections::VecDeque;

/// Sizes of the 6-connected components of `mask` on an `nx × ny × nz` grid
/// stored with z fastest, in order of first appearance.
pub fn component_sizes(mask: &[bool], dims: [usize; 3]) -> Vec<usize> {
    let [nx, ny, nz] = dims;
    assert_eq!(mask.len(), nx * ny * nz);
    let idx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
    let mut seen = vec![false; mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(c) = queue.pop_front() {
            size += 1;
            let (i, j, k) = (c / (ny * nz), (c / nz) % ny, c % nz);
            let mut visit = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(idx(i - 1, j, k));
            }
            if i + 1 < nx {
                visit(idx(i + 1, j, k));
            }
            if j > 0 {
                visit(idx(i, j - 1, k));
            }
            if j + 1 < ny {
                visit(idx(i, j + 1, k));
            }
            if k > 0 {
                visit(idx(i, j, k - 1));
            }
            if k + 1 < nz {
                visit(idx(i, j, k + 1));
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Root of `f` on `[lo, hi]` by bisection, if `f` changes sign there.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
}
