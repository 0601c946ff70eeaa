//! Fill-reducing orderings for grid-shaped graphs.

/// Geometric nested dissection of a `width x height` row-major grid.
///
/// Every edge of the plexus joins nodes whose rows and columns differ by at
/// most one, so a full row or column of nodes separates the grid even when
/// cells carry diagonals. The rectangle is split recursively across its
/// longer side and each separator is numbered after both halves.
///
/// Returns `perm` with `perm[new] = old`.
pub fn nested_dissection(width: usize, height: usize) -> Vec<usize> {
    let mut perm = Vec::with_capacity(width * height);
    dissect(width, 0, width, 0, height, &mut perm);
    perm
}

const LEAF_NODES: usize = 16;

fn dissect(width: usize, c0: usize, c1: usize, r0: usize, r1: usize, perm: &mut Vec<usize>) {
    let (w, h) = (c1 - c0, r1 - r0);
    if w == 0 || h == 0 {
        return;
    }
    if w * h <= LEAF_NODES || (w < 3 && h < 3) {
        for r in r0..r1 {
            for c in c0..c1 {
                perm.push(r * width + c);
            }
        }
        return;
    }
    if w >= h {
        let mid = c0 + w / 2;
        dissect(width, c0, mid, r0, r1, perm);
        dissect(width, mid + 1, c1, r0, r1, perm);
        for r in r0..r1 {
            perm.push(r * width + mid);
        }
    } else {
        let mid = r0 + h / 2;
        dissect(width, c0, c1, r0, mid, perm);
        dissect(width, c0, c1, mid + 1, r1, perm);
        for c in c0..c1 {
            perm.push(mid * width + c);
        }
    }
}

pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}
