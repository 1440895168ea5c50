use std::sync::Arc;

use multiwell::concentration::{connectivity_check, covering_length_estimate, extract_sstar, measure_stack};
use multiwell::grid::{BoundaryCondition, Field, Grid};
use multiwell::potential::Potential;

/// Soft Voronoi blend of the three wells with interfaces of width `eps`
/// along the rays bisecting neighbouring wells.
fn y_junction(p: &Potential, eps: f64) -> Field {
    let g = Arc::new(Grid::disk([0.0, 0.0], 1.0, eps / 6.0).unwrap());
    let dirs: Vec<[f64; 2]> = (0..3).map(|i| p.well(i).to_vec()).map(|w| [w[0], w[1]]).collect();
    Field::from_fn(g, 2, eps, BoundaryCondition::Dirichlet, |x, v| {
        let s: Vec<f64> = dirs.iter().map(|d| (d[0] * x[0] + d[1] * x[1]) / eps).collect();
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = s.iter().map(|t| (t - m).exp()).collect();
        let z: f64 = w.iter().sum();
        v[0] = (0..3).map(|i| w[i] * dirs[i][0]).sum::<f64>() / z;
        v[1] = (0..3).map(|i| w[i] * dirs[i][1]).sum::<f64>() / z;
    })
}

#[test]
fn triple_junction_set() {
    let p = Potential::builtin("triple-well-2d").unwrap();
    let coarse = y_junction(&p, 0.06);
    let fine = y_junction(&p, 0.03);
    let stack = measure_stack(&[&coarse, &fine], &p).unwrap();
    let eta0 = 0.05;
    let set = extract_sstar(&stack, eta0).unwrap();
    assert_eq!(set.n_components, 1);
    assert_eq!(set.junctions(), 1);
    let len = set.total_length();
    assert!(len <= set.length_bound(), "{len} {}", set.length_bound());
    assert!((len - 3.0).abs() < 0.3, "three unit rays, got {len}");
    let h = set.grid.h;
    for delta in [4.0 * h, 8.0 * h] {
        let cov = covering_length_estimate(&set, delta).unwrap();
        assert!(cov.within_bound && cov.estimate >= 0.5 * len && cov.estimate <= 4.0 * len, "{cov:?}");
    }
    let ring = connectivity_check(&set, [0.0, 0.0], 0.25).unwrap();
    assert!(ring.consistent && ring.islands.is_empty(), "{ring:?}");
}
