//! Uniform torus grid on the unit cell and the discrete Fourier transform on it.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;
/// Largest supported number of grid nodes (dense matrices are Nᵈ × Nᵈ).
pub const MAX_NODES: usize = 16384;

/// A point or vector in ℝᵈ padded with zeros to `MAX_DIM` components.
pub type Point = [f64; MAX_DIM];

/// Uniform grid with nodes x_k = k/N on [0,1)ᵈ. Node indices run with the
/// first axis fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::OddResolution(n));
        }
        if n < 8 {
            return Err(Error::InvalidGrid(format!("N = {n} is below the minimum of 8")));
        }
        let nodes = n.checked_pow(dim as u32).unwrap_or(usize::MAX);
        if nodes > MAX_NODES {
            return Err(Error::InvalidGrid(format!("N^d = {nodes} exceeds the dense-matrix cap {MAX_NODES}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes Nᵈ.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spacing 1/N along each axis.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Quadrature weight h = N^{-d}.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut k = [0; MAX_DIM];
        let mut rest = idx;
        for slot in k.iter_mut().take(self.dim) {
            *slot = rest % self.n;
            rest /= self.n;
        }
        k
    }

    pub fn flat_index(&self, k: &[usize]) -> usize {
        k.iter().take(self.dim).rev().fold(0, |acc, &ki| acc * self.n + ki % self.n)
    }

    /// Coordinates of node `idx`.
    pub fn node(&self, idx: usize) -> Point {
        let k = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.dim {
            x[i] = k[i] as f64 / self.n as f64;
        }
        x
    }

    /// Index of the difference x_i − x_j reduced modulo the lattice.
    pub fn residue(&self, i: usize, j: usize) -> usize {
        let mut r = 0;
        let mut stride = 1;
        let (mut a, mut b) = (i, j);
        for _ in 0..self.dim {
            let ka = a % self.n;
            let kb = b % self.n;
            r += ((ka + self.n - kb) % self.n) * stride;
            stride *= self.n;
            a /= self.n;
            b /= self.n;
        }
        r
    }

    /// Residue of an arbitrary integer lattice offset m (grid units).
    pub fn residue_of_offset(&self, m: &[i64]) -> usize {
        let n = self.n as i64;
        m.iter().take(self.dim).rev().fold(0usize, |acc, &mi| acc * self.n + mi.rem_euclid(n) as usize)
    }

    /// Signed Fourier mode in {−N/2, …, N/2−1}ᵈ attached to DFT index `idx`.
    pub fn mode(&self, idx: usize) -> [i64; MAX_DIM] {
        let k = self.multi_index(idx);
        let mut m = [0i64; MAX_DIM];
        let n = self.n as i64;
        for i in 0..self.dim {
            let ki = k[i] as i64;
            m[i] = if ki < n / 2 { ki } else { ki - n };
        }
        m
    }

    /// Apply the (un-normalized) multidimensional DFT in place.
    /// `inverse = false` uses e^{−2πi⟨n,x⟩}, `inverse = true` uses e^{+2πi⟨n,x⟩}.
    pub fn dft_in_place(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len());
        let mut planner = FftPlanner::<f64>::new();
        let fft = if inverse { planner.plan_fft_inverse(self.n) } else { planner.plan_fft_forward(self.n) };
        let mut line = vec![Complex64::new(0.0, 0.0); self.n];
        let mut stride = 1;
        for _ in 0..self.dim {
            let block = stride * self.n;
            for base in 0..self.len() / block {
                for offset in 0..stride {
                    let start = base * block + offset;
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = data[start + k * stride];
                    }
                    fft.process(&mut line);
                    for (k, value) in line.iter().enumerate() {
                        data[start + k * stride] = *value;
                    }
                }
            }
            stride *= self.n;
        }
    }

    /// Unitary forward transform û_n = N^{-d/2} Σ u(x) e^{−2πi⟨n,x⟩}.
    pub fn unitary_dft(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = u.to_vec();
        self.dft_in_place(&mut out, false);
        let scale = (self.len() as f64).sqrt().recip();
        out.iter_mut().for_each(|c| *c *= scale);
        out
    }

    /// Inverse of [`Grid::unitary_dft`].
    pub fn unitary_idft(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = u.to_vec();
        self.dft_in_place(&mut out, true);
        let scale = (self.len() as f64).sqrt().recip();
        out.iter_mut().for_each(|c| *c *= scale);
        out
    }
}

/// Construct a grid; see [`Grid::new`].
pub fn make_grid(dim: usize, n: usize) -> Result<Grid> {
    Grid::new(dim, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_examples() {
        let g = make_grid(1, 16).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.weight(), 1.0 / 16.0);
        assert_eq!(g.node(3)[0], 3.0 / 16.0);
        let g2 = make_grid(2, 8).unwrap();
        assert_eq!(g2.len(), 64);
        assert_eq!(g2.weight(), 1.0 / 64.0);
        let err = make_grid(1, 7).unwrap_err();
        assert_eq!(err.to_string(), "N must be even (got 7)");
        assert!(make_grid(2, 256).is_err());
        assert!(make_grid(4, 8).is_err());
    }

    #[test]
    fn residues_and_modes() {
        let g = make_grid(2, 8).unwrap();
        let i = g.flat_index(&[1, 7]);
        let j = g.flat_index(&[3, 2]);
        assert_eq!(g.multi_index(g.residue(i, j))[..2], [6, 5]);
        assert_eq!(g.residue_of_offset(&[-2, 5]), g.residue(i, j));
        assert_eq!(g.mode(g.flat_index(&[4, 3]))[..2], [-4, 3]);
    }

    #[test]
    fn dft_matches_direct_sum() {
        let g = make_grid(2, 8).unwrap();
        let u: Vec<Complex64> =
            (0..g.len()).map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let fast = g.unitary_dft(&u);
        for idx in [0, 5, 17, 63] {
            let n = g.mode(idx);
            let direct: Complex64 = (0..g.len())
                .map(|k| {
                    let x = g.node(k);
                    let phase = -2.0 * std::f64::consts::PI * (n[0] as f64 * x[0] + n[1] as f64 * x[1]);
                    u[k] * Complex64::from_polar(1.0, phase)
                })
                .sum::<Complex64>()
                / 8.0;
            assert!((fast[idx] - direct).norm() < 1e-12);
        }
        let back = g.unitary_idft(&fast);
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
