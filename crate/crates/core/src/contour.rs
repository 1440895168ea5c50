//! Marching squares on node values.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::grid::Grid;

#[derive(Debug, Clone, Default)]
pub struct Contour {
    pub level: f64,
    /// Segment endpoints `[x0, y0, x1, y1]`.
    pub segments: Vec<[f64; 4]>,
    /// Cell index (lower-left node) of each segment.
    pub cells: Vec<usize>,
    /// Cells crossed by the level set.
    pub n_cells: usize,
    /// Cells with the ambiguous two-segment configuration.
    pub saddle_cells: usize,
}

impl Contour {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| (s[2] - s[0]).hypot(s[3] - s[1])).sum()
    }

    /// `int g dl` with `g` bilinearly interpolated at segment midpoints.
    pub fn line_integral(&self, grid: &Grid, g: &[f64]) -> f64 {
        let mut out = [0.0];
        self.segments
            .iter()
            .map(|s| {
                let m = [0.5 * (s[0] + s[2]), 0.5 * (s[1] + s[3])];
                let len = (s[2] - s[0]).hypot(s[3] - s[1]);
                if grid.interpolate(g, 1, m, &mut out) {
                    out[0] * len
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# level {}", self.level)?;
        writeln!(w, "x0,y0,x1,y1")?;
        for s in &self.segments {
            writeln!(w, "{},{},{},{}", s[0], s[1], s[2], s[3])?;
        }
        Ok(())
    }
}

/// Level set `{phi = level}` over cells whose four corners are used and
/// selected by `mask` (all nodes when `None`).
pub fn contour(grid: &Grid, phi: &[f64], mask: Option<&[bool]>, level: f64) -> Contour {
    let s = grid.stride();
    let h = grid.h;
    let mut out = Contour { level, ..Default::default() };
    let ok = |idx: usize| grid.is_used(idx) && mask.is_none_or(|m| m[idx]);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let a = grid.index(i, j);
            let corners = [a, a + 1, a + 1 + s, a + s];
            if !corners.iter().all(|&c| ok(c)) {
                continue;
            }
            let v = corners.map(|c| phi[c]);
            let above = v.map(|t| t >= level);
            let code = above.iter().enumerate().fold(0u8, |acc, (b, &up)| acc | ((up as u8) << b));
            if code == 0 || code == 15 {
                continue;
            }
            let x0 = grid.origin[0] + i as f64 * h;
            let y0 = grid.origin[1] + j as f64 * h;
            let pos = [[x0, y0], [x0 + h, y0], [x0 + h, y0 + h], [x0, y0 + h]];
            let cross = |e: usize| {
                let (p, q) = (e, (e + 1) % 4);
                let t = (level - v[p]) / (v[q] - v[p]);
                [pos[p][0] + t * (pos[q][0] - pos[p][0]), pos[p][1] + t * (pos[q][1] - pos[p][1])]
            };
            let crossed: Vec<usize> = (0..4).filter(|&e| above[e] != above[(e + 1) % 4]).collect();
            out.n_cells += 1;
            let mut push = |e1: usize, e2: usize| {
                let (p, q) = (cross(e1), cross(e2));
                out.segments.push([p[0], p[1], q[0], q[1]]);
                out.cells.push(a);
            };
            if crossed.len() == 2 {
                push(crossed[0], crossed[1]);
            } else {
                out.saddle_cells += 1;
                let centre_up = 0.25 * v.iter().sum::<f64>() >= level;
                // edges 0..3 are bottom, right, top, left; corner 0 at bottom-left
                if centre_up == above[0] {
                    // corners 0 and 2 joined through the centre
                    push(0, 1);
                    push(2, 3);
                } else {
                    push(3, 0);
                    push(1, 2);
                }
            }
        }
    }
    out
}

/// Lengths of `{phi = s}` on the midpoints of `n` equal subintervals of
/// `[lo, hi]` and their Riemann sum `int L(s) ds`.
pub fn coarea_table(grid: &Grid, phi: &[f64], mask: Option<&[bool]>, lo: f64, hi: f64, n: usize) -> (Vec<(f64, f64)>, f64) {
    let ds = (hi - lo) / n as f64;
    let table: Vec<(f64, f64)> = crate::par::map(n, |m| {
        let s = lo + (m as f64 + 0.5) * ds;
        (s, contour(grid, phi, mask, s).length())
    });
    let total = table.iter().map(|t| t.1).sum::<f64>() * ds;
    (table, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_length_and_coarea() {
        let g = Grid::rectangle(-1.0, -1.0, 1.0, 1.0, 0.01).unwrap();
        let phi: Vec<f64> = (0..g.n_nodes()).map(|i| g.pos(i)[0].powi(2) + g.pos(i)[1].powi(2)).collect();
        let c = contour(&g, &phi, None, 0.25);
        assert!((c.length() - PI).abs() < 1e-3 * PI);
        assert_eq!(c.saddle_cells, 0);
        let big_s = 0.64f64;
        let (_, total) = coarea_table(&g, &phi, None, 0.0, big_s, 128);
        let exact = 4.0 * PI / 3.0 * big_s.powf(1.5);
        assert!((total - exact).abs() <= 0.02 * exact, "{total} {exact}");
    }

    #[test]
    fn straight_line_and_constant() {
        let g = Grid::rectangle(0.0, 0.0, 1.0, 1.0, 0.05).unwrap();
        let phi: Vec<f64> = (0..g.n_nodes()).map(|i| g.pos(i)[1]).collect();
        let c = contour(&g, &phi, None, 0.333);
        assert!((c.length() - 1.0).abs() < 1e-12);
        let ones = vec![1.0; g.n_nodes()];
        assert!((c.line_integral(&g, &ones) - 1.0).abs() < 1e-12);
        let flat = vec![0.5; g.n_nodes()];
        assert_eq!(contour(&g, &flat, None, 0.3).length(), 0.0);
    }

    #[test]
    fn saddle_resolved() {
        let g = Grid::rectangle(0.0, 0.0, 1.0, 1.0, 0.125).unwrap();
        let phi: Vec<f64> = (0..g.n_nodes()).map(|i| (g.pos(i)[0] - 0.5) * (g.pos(i)[1] - 0.5)).collect();
        let c = contour(&g, &phi, None, 0.001);
        assert!(c.saddle_cells <= 1);
        assert!(c.length() > 0.0);
    }
}
