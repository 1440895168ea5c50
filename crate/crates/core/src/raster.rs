//! Binary raster operations on the node lattice: distance transform,
//! 8-connected labeling and thinning.

const INF: f64 = 1e20;

/// Exact 1D squared distance transform of `f` (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance, in lattice units, from every cell of the
/// `nx x ny` row-major raster to the nearest `true` cell. Cells are at
/// infinite distance (`>= 1e20`) when the set is empty.
pub fn distance_transform_sq(set: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    assert_eq!(set.len(), nx * ny);
    let mut g: Vec<f64> = set.iter().map(|&b| if b { 0.0 } else { INF }).collect();
    let m = nx.max(ny);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; m], vec![0.0; m], vec![0usize; m], vec![0.0; m + 1]);
    for i in 0..nx {
        for j in 0..ny {
            f[j] = g[j * nx + i];
        }
        edt_1d(&f[..ny], &mut out[..ny], &mut v, &mut z);
        for j in 0..ny {
            g[j * nx + i] = out[j];
        }
    }
    for j in 0..ny {
        let row = &mut g[j * nx..(j + 1) * nx];
        f[..nx].copy_from_slice(row);
        edt_1d(&f[..nx], &mut out[..nx], &mut v, &mut z);
        row.copy_from_slice(&out[..nx]);
    }
    g.iter_mut().for_each(|t| *t = t.min(INF));
    g
}

/// 8-connected components. Returns per-cell labels (`0` = background,
/// components numbered from 1 in raster order) and the component count.
pub fn label_components(set: &[bool], nx: usize, ny: usize) -> (Vec<u32>, usize) {
    assert_eq!(set.len(), nx * ny);
    let mut labels = vec![0u32; nx * ny];
    let mut n = 0u32;
    let mut stack = Vec::new();
    for start in 0..set.len() {
        if !set[start] || labels[start] != 0 {
            continue;
        }
        n += 1;
        labels[start] = n;
        stack.push(start);
        while let Some(c) = stack.pop() {
            let (i, j) = ((c % nx) as isize, (c / nx) as isize);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                        continue;
                    }
                    let q = b as usize * nx + a as usize;
                    if set[q] && labels[q] == 0 {
                        labels[q] = n;
                        stack.push(q);
                    }
                }
            }
        }
    }
    (labels, n as usize)
}

/// Neighbours `P2..P9` clockwise from north, with replicate padding.
fn ring(img: &[bool], nx: usize, ny: usize, i: usize, j: usize) -> [bool; 8] {
    let at = |di: isize, dj: isize| {
        let a = (i as isize + di).clamp(0, nx as isize - 1) as usize;
        let b = (j as isize + dj).clamp(0, ny as isize - 1) as usize;
        img[b * nx + a]
    };
    // rows grow with j, so north is j + 1
    [at(0, 1), at(1, 1), at(1, 0), at(1, -1), at(0, -1), at(-1, -1), at(-1, 0), at(-1, 1)]
}

fn transitions(p: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count()
}

/// Zhang-Suen thinning to a one-cell-wide skeleton, followed by removal of
/// end-point spurs shorter than `spur` cells.
pub fn thin(set: &[bool], nx: usize, ny: usize, spur: usize) -> Vec<bool> {
    assert_eq!(set.len(), nx * ny);
    let mut img = set.to_vec();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut kill = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    if !img[j * nx + i] {
                        continue;
                    }
                    let p = ring(&img, nx, ny, i, j);
                    let b = p.iter().filter(|&&t| t).count();
                    if !(2..=6).contains(&b) || transitions(&p) != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let ok = if pass == 0 { !(p2 && p4 && p6) && !(p4 && p6 && p8) } else { !(p2 && p4 && p8) && !(p2 && p6 && p8) };
                    if ok {
                        kill.push(j * nx + i);
                    }
                }
            }
            changed |= !kill.is_empty();
            for c in kill {
                img[c] = false;
            }
        }
        if !changed {
            break;
        }
    }
    prune_spurs(&mut img, nx, ny, spur);
    img
}

/// Skeleton cells where three or more branches meet (crossing number >= 3).
pub fn branch_points(skel: &[bool], nx: usize, ny: usize) -> Vec<bool> {
    assert_eq!(skel.len(), nx * ny);
    (0..nx * ny).map(|c| skel[c] && transitions(&ring(skel, nx, ny, c % nx, c / nx)) >= 3).collect()
}

fn neighbours8(nx: usize, ny: usize, c: usize) -> impl Iterator<Item = usize> {
    let (i, j) = ((c % nx) as isize, (c / nx) as isize);
    (-1..=1isize).flat_map(move |dj| {
        (-1..=1isize).filter_map(move |di| {
            let (a, b) = (i + di, j + dj);
            ((di, dj) != (0, 0) && a >= 0 && b >= 0 && a < nx as isize && b < ny as isize).then(|| b as usize * nx + a as usize)
        })
    })
}

/// Cells reachable from `e` through non-junction cells, if at most `limit`
/// of them and adjacent to a junction.
fn spur_from(img: &[bool], junction: &[bool], nx: usize, ny: usize, e: usize, limit: usize) -> Option<Vec<usize>> {
    let mut seen = vec![e];
    let mut stack = vec![e];
    let mut touches = false;
    while let Some(c) = stack.pop() {
        for q in neighbours8(nx, ny, c) {
            if !img[q] || seen.contains(&q) {
                continue;
            }
            if junction[q] {
                touches = true;
                continue;
            }
            if seen.len() >= limit {
                return None;
            }
            seen.push(q);
            stack.push(q);
        }
    }
    touches.then_some(seen)
}

/// Removes end-point spurs shorter than `spur` cells, shortest first, so
/// that of two short branches meeting at a fork only one is removed.
fn prune_spurs(img: &mut [bool], nx: usize, ny: usize, spur: usize) {
    if spur == 0 {
        return;
    }
    loop {
        let crossing: Vec<usize> = (0..img.len()).map(|c| if img[c] { transitions(&ring(img, nx, ny, c % nx, c / nx)) } else { 0 }).collect();
        let junction: Vec<bool> = crossing.iter().map(|&t| t >= 3).collect();
        let shortest = (0..img.len())
            .filter(|&c| img[c] && crossing[c] == 1)
            .filter_map(|e| spur_from(img, &junction, nx, ny, e, spur))
            .filter(|p| p.len() < spur)
            .min_by_key(|p| p.len());
        match shortest {
            Some(path) => path.into_iter().for_each(|c| img[c] = false),
            None => break,
        }
    }
}
