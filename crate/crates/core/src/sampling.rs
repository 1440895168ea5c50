//! Deterministic low-discrepancy point sets.

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton point number `i` in `[0,1)^dim`. Index 0 is skipped by callers to
/// avoid the origin.
pub fn halton(i: u64, dim: usize, out: &mut [f64]) {
    assert!(dim <= PRIMES.len(), "halton dimension too large");
    for (d, o) in out.iter_mut().enumerate().take(dim) {
        *o = radical_inverse(i, PRIMES[d]);
    }
}

/// `n` points in the closed ball `B(center, radius)`, by rejection on the
/// Halton sequence in the enclosing cube.
pub fn ball_points(center: &[f64], radius: f64, n: usize) -> Vec<Vec<f64>> {
    let k = center.len();
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0.0; k];
    let mut i = 1u64;
    while out.len() < n {
        halton(i, k, &mut buf);
        i += 1;
        let p: Vec<f64> = buf.iter().map(|t| 2.0 * t - 1.0).collect();
        let r2: f64 = p.iter().map(|t| t * t).sum();
        if r2 <= 1.0 {
            out.push(center.iter().zip(&p).map(|(c, t)| c + radius * t).collect());
        }
    }
    out
}

/// `n` points uniformly spread in the cube `[-half, half]^k`.
pub fn cube_points(k: usize, half: f64, n: usize) -> Vec<Vec<f64>> {
    let mut buf = vec![0.0; k];
    (1..=n as u64)
        .map(|i| {
            halton(i, k, &mut buf);
            buf.iter().map(|t| half * (2.0 * t - 1.0)).collect()
        })
        .collect()
}

/// `n` unit directions in `R^k`. In one dimension these alternate between
/// `+1` and `-1`.
pub fn directions(k: usize, n: usize) -> Vec<Vec<f64>> {
    if k == 1 {
        return (0..n).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
    }
    if k == 2 {
        return (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0.0; k];
    let mut i = 1u64;
    while out.len() < n {
        halton(i, k, &mut buf);
        i += 1;
        let p: Vec<f64> = buf.iter().map(|t| 2.0 * t - 1.0).collect();
        let r = p.iter().map(|t| t * t).sum::<f64>().sqrt();
        if r > 0.1 && r <= 1.0 {
            out.push(p.iter().map(|t| t / r).collect());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base2() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn ball_points_inside() {
        let pts = ball_points(&[1.0, -1.0], 0.3, 500);
        assert_eq!(pts.len(), 500);
        for p in &pts {
            let d = ((p[0] - 1.0).powi(2) + (p[1] + 1.0).powi(2)).sqrt();
            assert!(d <= 0.3 + 1e-12);
        }
    }

    #[test]
    fn directions_unit() {
        for k in 1..4 {
            for d in directions(k, 17) {
                let n: f64 = d.iter().map(|t| t * t).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }
}
