//! Cell-averaged periodized kernel.
//!
//! The fiber operators are discretized with piecewise-constant functions on the
//! grid cells. Matrix entries then involve the kernel averaged against the
//! hat function ψ(s) = Π_i (h₁ − |s_i|)₊ / h₁² (the autocorrelation of a cell),
//!
//!   ã_h(ξ, z_r) = Σ_{m ≡ r} ∫ a(t) e^{−i⟨ξ,t⟩} ψ(m h₁ − t) dt,
//!
//! where the sum runs over all integer offsets m whose residue mod N is r. The
//! hats form a partition of unity, so h Σ_r ã_h(0, z_r) t-moments reproduce the
//! continuum moments of a exactly. Every integral is a fixed weighted point set
//! {(t_q, w_q)}, which makes all ξ-derivatives and Taylor remainders cheap and
//! free of cancellation.

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::{Grid, Point, MAX_DIM};
use crate::kernels::KernelSpec;
use crate::quadrature::GaussLegendre;

/// Weighted quadrature point of the cell-averaged kernel.
#[derive(Debug, Clone, Copy)]
pub struct TablePoint {
    pub t: Point,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct KernelTable {
    grid: Grid,
    points: Vec<TablePoint>,
    /// `points[offsets[r]..offsets[r+1]]` belong to residue r.
    offsets: Vec<usize>,
}

const MAX_SPLIT_DEPTH: usize = 4;

impl KernelTable {
    pub fn build(kernel: &KernelSpec, grid: &Grid) -> Result<Self> {
        let d = grid.dim();
        let h1 = grid.spacing();
        let radius = kernel.truncation_radius();
        let reach = (radius / h1).ceil() as i64 + 1;
        let order = match d {
            1 => 8,
            2 => 5,
            _ => 4,
        };
        let gl = GaussLegendre::new(order);
        let breaks = kernel.breakpoints();
        let side = (2 * reach + 1) as usize;
        let mut tagged: Vec<(usize, TablePoint)> = Vec::new();
        let mut m = [0i64; MAX_DIM];
        for flat in 0..side.pow(d as u32) {
            let mut rest = flat;
            for mi in m.iter_mut().take(d) {
                *mi = (rest % side) as i64 - reach;
                rest /= side;
            }
            let centre: Point = std::array::from_fn(|i| if i < d { m[i] as f64 * h1 } else { 0.0 });
            let residue = grid.residue_of_offset(&m[..d]);
            // One hat-linear piece per orthant around the centre.
            for orthant in 0..(1usize << d) {
                let mut lo = [0.0; MAX_DIM];
                let mut hi = [0.0; MAX_DIM];
                for i in 0..d {
                    if orthant >> i & 1 == 0 {
                        lo[i] = centre[i] - h1;
                        hi[i] = centre[i];
                    } else {
                        lo[i] = centre[i];
                        hi[i] = centre[i] + h1;
                    }
                }
                if box_distance_range(&lo, &hi, d).0 > radius {
                    continue;
                }
                let mut emit = |t: Point, w: f64| -> Result<()> {
                    let norm = t[..d].iter().map(|c| c * c).sum::<f64>().sqrt();
                    let a = kernel.profile(norm)?;
                    if a == 0.0 {
                        return Ok(());
                    }
                    let hat: f64 = (0..d).map(|i| (h1 - (centre[i] - t[i]).abs()) / (h1 * h1)).product();
                    tagged.push((residue, TablePoint { t, weight: w * a * hat }));
                    Ok(())
                };
                if d == 1 {
                    integrate_interval(lo[0], hi[0], &breaks, &gl, &mut emit)?;
                } else {
                    integrate_box(lo, hi, d, &breaks, &gl, 0, &mut emit)?;
                }
            }
        }
        tagged.sort_by_key(|(r, _)| *r);
        let mut offsets = vec![0usize; grid.len() + 1];
        for (r, _) in &tagged {
            offsets[r + 1] += 1;
        }
        for r in 0..grid.len() {
            offsets[r + 1] += offsets[r];
        }
        let points = tagged.into_iter().map(|(_, p)| p).collect();
        Ok(Self { grid: *grid, points, offsets })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    /// Quadrature points belonging to residue r.
    pub fn residue_points(&self, r: usize) -> &[TablePoint] {
        &self.points[self.offsets[r]..self.offsets[r + 1]]
    }

    fn per_residue<T: Default + std::ops::AddAssign>(&self, f: impl Fn(&TablePoint) -> T) -> Vec<T> {
        (0..self.grid.len())
            .map(|r| {
                let mut acc = T::default();
                for p in self.residue_points(r) {
                    acc += f(p);
                }
                acc
            })
            .collect()
    }

    /// ã_h(ξ, z_r) for every residue r.
    pub fn periodized(&self, xi: &[f64]) -> Vec<Complex64> {
        let d = self.grid.dim();
        self.per_residue(|p| {
            let phase: f64 = (0..d).map(|i| xi[i] * p.t[i]).sum();
            p.weight * Complex64::from_polar(1.0, -phase)
        })
    }

    /// ã_h(0, z_r), real and even.
    pub fn periodized_at_zero(&self) -> Vec<f64> {
        self.per_residue(|p| p.weight)
    }

    /// ã_h(ξ, z_r) − ã_h(0, z_r), evaluated without cancellation.
    pub fn periodized_increment(&self, xi: &[f64]) -> Vec<Complex64> {
        let d = self.grid.dim();
        self.per_residue(|p| {
            let phase: f64 = (0..d).map(|i| xi[i] * p.t[i]).sum();
            // e^{−iθ} − 1 = −2 sin²(θ/2) − i sin θ
            let half = (0.5 * phase).sin();
            p.weight * Complex64::new(-2.0 * half * half, -phase.sin())
        })
    }

    /// Σ_q w_q f(t_q) per residue.
    pub fn weighted(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        self.per_residue(|p| p.weight * f(&p.t))
    }
}

/// Smallest and largest distance from the origin over an axis-aligned box.
fn box_distance_range(lo: &Point, hi: &Point, d: usize) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for i in 0..d {
        let n = if lo[i] > 0.0 {
            lo[i]
        } else if hi[i] < 0.0 {
            -hi[i]
        } else {
            0.0
        };
        let f = lo[i].abs().max(hi[i].abs());
        near += n * n;
        far += f * f;
    }
    (near.sqrt(), far.sqrt())
}

fn integrate_interval(
    lo: f64,
    hi: f64,
    breaks: &[f64],
    gl: &GaussLegendre,
    emit: &mut impl FnMut(Point, f64) -> Result<()>,
) -> Result<()> {
    let mut knots = vec![lo, hi];
    for b in breaks {
        for s in [-b, *b] {
            if s > lo && s < hi {
                knots.push(s);
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    for w in knots.windows(2) {
        for (x, weight) in gl.on(w[0], w[1]) {
            emit([x, 0.0, 0.0], weight)?;
        }
    }
    Ok(())
}

fn integrate_box(
    lo: Point,
    hi: Point,
    d: usize,
    breaks: &[f64],
    gl: &GaussLegendre,
    depth: usize,
    emit: &mut impl FnMut(Point, f64) -> Result<()>,
) -> Result<()> {
    let (near, far) = box_distance_range(&lo, &hi, d);
    let cut = breaks.iter().any(|b| *b > near && *b < far);
    if cut && depth < MAX_SPLIT_DEPTH {
        for child in 0..(1usize << d) {
            let mut clo = lo;
            let mut chi = hi;
            for i in 0..d {
                let mid = 0.5 * (lo[i] + hi[i]);
                if child >> i & 1 == 0 {
                    chi[i] = mid;
                } else {
                    clo[i] = mid;
                }
            }
            integrate_box(clo, chi, d, breaks, gl, depth + 1, emit)?;
        }
        return Ok(());
    }
    let q = gl.nodes.len();
    let mut idx = [0usize; MAX_DIM];
    for flat in 0..q.pow(d as u32) {
        let mut rest = flat;
        for slot in idx.iter_mut().take(d) {
            *slot = rest % q;
            rest /= q;
        }
        let mut t = [0.0; MAX_DIM];
        let mut w = 1.0;
        for i in 0..d {
            let half = 0.5 * (hi[i] - lo[i]);
            t[i] = 0.5 * (lo[i] + hi[i]) + half * gl.nodes[idx[i]];
            w *= half * gl.weights[idx[i]];
        }
        emit(t, w)?;
    }
    Ok(())
}
