//! Finite-volume conductance networks on a [`VoxelGrid`] and the
//! preconditioned conjugate-gradient solver shared by the heat, electrostatic
//! and conduction problems.
//!
//! All three are `∇·(k∇u) + q = 0` with a per-cell coefficient `k`. Faces
//! between cells get the series conductance `A / (h_i/2k_i + h_j/2k_j)`. A
//! coefficient of `+∞` marks a perfect conductor (zero half-cell resistance),
//! `0` a blocked cell.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;

/// nm → m.
pub const NM: f64 = 1e-9;

/// Reduction chunk; fixed so sums do not depend on the thread count.
const CHUNK: usize = 4096;

/// Outer faces in the order −x, +x, −y, +y, −z, +z.
pub const FACES: [(usize, bool); 6] = [(0, false), (0, true), (1, false), (1, true), (2, false), (2, true)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceBc {
    /// Zero normal flux.
    Open,
    /// Flux `h (u − value)` through a surface film; `h = ∞` pins the face.
    Sink { h: f64, value: f64 },
}

impl FaceBc {
    pub fn pinned(value: f64) -> Self {
        FaceBc::Sink { h: f64::INFINITY, value }
    }
}

/// Face conductances of one problem. Units are `k · m`.
#[derive(Debug, Clone)]
pub struct Network {
    dims: [usize; 3],
    strides: [usize; 3],
    /// Conductance between cell `c` and `c + stride[a]`; zero past the last
    /// plane.
    g: [Vec<f64>; 3],
    /// Conductance from each boundary cell to the face value, indexed by
    /// the cell index.
    gb: [Vec<f64>; 6],
    face_value: [f64; 6],
}

fn half_resistance(width_m: f64, k: f64) -> f64 {
    if k == f64::INFINITY {
        0.0
    } else if k <= 0.0 {
        f64::INFINITY
    } else {
        width_m / (2.0 * k)
    }
}

impl Network {
    pub fn assemble(grid: &VoxelGrid, coeff: &[f64], faces: &[FaceBc; 6]) -> Self {
        assert_eq!(coeff.len(), grid.len());
        let dims = grid.dims();
        let strides = [1, dims[0], dims[0] * dims[1]];
        let n = grid.len();
        let widths: [Vec<f64>; 3] = std::array::from_fn(|a| (0..dims[a]).map(|i| grid.width(a, i) * NM).collect());
        let area = |p: [usize; 3], a: usize| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            widths[b][p[b]] * widths[c][p[c]]
        };

        let g = std::array::from_fn(|a| {
            let mut out = vec![0.0; n];
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
                for (off, slot) in chunk.iter_mut().enumerate() {
                    let c = ci * CHUNK + off;
                    let p = grid.ijk(c);
                    if p[a] + 1 >= dims[a] {
                        continue;
                    }
                    let r = half_resistance(widths[a][p[a]], coeff[c])
                        + half_resistance(widths[a][p[a] + 1], coeff[c + strides[a]]);
                    *slot = if r > 0.0 { area(p, a) / r } else { 0.0 };
                }
            });
            out
        });

        let mut face_value = [0.0; 6];
        let gb = std::array::from_fn(|f| {
            let (a, high) = FACES[f];
            let mut out = vec![0.0; n];
            let FaceBc::Sink { h, value } = faces[f] else {
                return out;
            };
            face_value[f] = value;
            let plane = if high { dims[a] - 1 } else { 0 };
            for (c, slot) in out.iter_mut().enumerate() {
                let p = grid.ijk(c);
                if p[a] != plane {
                    continue;
                }
                let r = 1.0 / h + half_resistance(widths[a][p[a]], coeff[c]);
                if r > 0.0 && r.is_finite() {
                    *slot = area(p, a) / r;
                }
            }
            out
        });
        Self {
            dims,
            strides,
            g,
            gb,
            face_value,
        }
    }

    pub fn len(&self) -> usize {
        self.g[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Conductance between `c` and its `+a` neighbour.
    pub fn face(&self, a: usize, c: usize) -> f64 {
        self.g[a][c]
    }

    pub fn boundary(&self, f: usize, c: usize) -> f64 {
        self.gb[f][c]
    }

    pub fn face_value(&self, f: usize) -> f64 {
        self.face_value[f]
    }

    fn for_each_link(&self, c: usize, mut visit: impl FnMut(usize, f64)) {
        for a in 0..3 {
            let s = self.strides[a];
            let gp = self.g[a][c];
            if gp > 0.0 {
                visit(c + s, gp);
            }
            if c >= s {
                let gm = self.g[a][c - s];
                if gm > 0.0 {
                    visit(c - s, gm);
                }
            }
        }
    }

    fn boundary_total(&self, c: usize) -> f64 {
        (0..6).map(|f| self.gb[f][c]).sum()
    }

    /// Builds the operator with `fixed` cells pinned (identity rows). Fails if
    /// some free cell has no conductive path to a pinned cell or sink face.
    pub fn operator(&self, fixed: &[bool]) -> Result<Stencil> {
        let n = self.len();
        assert_eq!(fixed.len(), n);
        let mut diag = vec![0.0; n];
        diag.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            for (off, d) in chunk.iter_mut().enumerate() {
                let c = ci * CHUNK + off;
                if fixed[c] {
                    *d = 1.0;
                } else {
                    let mut sum = self.boundary_total(c);
                    self.for_each_link(c, |_, g| sum += g);
                    *d = sum;
                }
            }
        });
        let off = std::array::from_fn(|a| {
            let s = self.strides[a];
            (0..n)
                .into_par_iter()
                .map(|c| {
                    if c + s < n && !fixed[c] && !fixed[c + s] {
                        self.g[a][c]
                    } else {
                        0.0
                    }
                })
                .collect()
        });
        self.check_grounded(fixed)?;
        Ok(Stencil {
            strides: self.strides,
            diag,
            off,
            fixed: fixed.to_vec(),
        })
    }

    /// Every free cell must reach a pinned cell or a sink face.
    fn check_grounded(&self, fixed: &[bool]) -> Result<()> {
        let n = self.len();
        let mut reached = vec![false; n];
        let mut queue = VecDeque::new();
        for c in 0..n {
            if fixed[c] {
                continue;
            }
            let mut anchored = self.boundary_total(c) > 0.0;
            self.for_each_link(c, |m, _| anchored |= fixed[m]);
            if anchored {
                reached[c] = true;
                queue.push_back(c);
            }
        }
        while let Some(c) = queue.pop_front() {
            self.for_each_link(c, |m, _| {
                if !fixed[m] && !reached[m] {
                    reached[m] = true;
                    queue.push_back(m);
                }
            });
        }
        let floating = (0..n).filter(|&c| !fixed[c] && !reached[c]).count();
        if floating > 0 {
            return Err(Error::Singular(format!(
                "{floating} cells have no path to a fixed value (all boundaries insulating?)"
            )));
        }
        Ok(())
    }

    /// Right-hand side: volumetric `source` (already integrated per cell, in
    /// the flux unit) plus contributions of pinned neighbours and sink faces.
    /// Pinned rows carry their own value.
    pub fn rhs(&self, fixed: &[bool], values: &[f64], source: Option<&[f64]>) -> Vec<f64> {
        let n = self.len();
        let mut b = vec![0.0; n];
        b.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            for (off, slot) in chunk.iter_mut().enumerate() {
                let c = ci * CHUNK + off;
                if fixed[c] {
                    *slot = values[c];
                    continue;
                }
                let mut v = source.map_or(0.0, |s| s[c]);
                for f in 0..6 {
                    v += self.gb[f][c] * self.face_value[f];
                }
                self.for_each_link(c, |m, g| {
                    if fixed[m] {
                        v += g * values[m];
                    }
                });
                *slot = v;
            }
        });
        b
    }

    /// Net flux leaving the cell set `inside` through its faces, including
    /// outer sink faces.
    pub fn outflow(&self, u: &[f64], inside: &[bool]) -> f64 {
        let n = self.len();
        let per_chunk: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|ci| {
                let mut acc = 0.0;
                for c in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                    if !inside[c] {
                        continue;
                    }
                    for f in 0..6 {
                        acc += self.gb[f][c] * (u[c] - self.face_value[f]);
                    }
                    self.for_each_link(c, |m, g| {
                        if !inside[m] {
                            acc += g * (u[c] - u[m]);
                        }
                    });
                }
                acc
            })
            .collect();
        per_chunk.iter().sum()
    }

    /// Flux leaving the domain through each outer face.
    pub fn face_outflow(&self, u: &[f64]) -> [f64; 6] {
        std::array::from_fn(|f| {
            let v = self.face_value[f];
            chunked_sum(self.len(), |c| self.gb[f][c] * (u[c] - v))
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
}

fn chunked_sum(n: usize, term: impl Fn(usize) -> f64 + Sync) -> f64 {
    let parts: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| (ci * CHUNK..((ci + 1) * CHUNK).min(n)).map(&term).sum())
        .collect();
    parts.iter().sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    chunked_sum(a.len(), |i| a[i] * b[i])
}

/// Symmetric 7-point operator: `(A u)_c = d_c u_c − Σ g_cm u_m`.
#[derive(Debug, Clone)]
pub struct Stencil {
    strides: [usize; 3],
    diag: Vec<f64>,
    off: [Vec<f64>; 3],
    /// Identity rows. They are left out of residual norms, which would
    /// otherwise mix potentials with fluxes.
    fixed: Vec<bool>,
}

impl Stencil {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Coupling between `c` and `c + stride[a]` (stored positive).
    pub fn coupling(&self, a: usize, c: usize) -> f64 {
        self.off[a][c]
    }

    pub fn strides(&self) -> [usize; 3] {
        self.strides
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let base = ci * CHUNK;
            for (off, out) in chunk.iter_mut().enumerate() {
                let c = base + off;
                let mut v = self.diag[c] * x[c];
                for a in 0..3 {
                    let s = self.strides[a];
                    if c + s < n {
                        v -= self.off[a][c] * x[c + s];
                    }
                    if c >= s {
                        v -= self.off[a][c - s] * x[c - s];
                    }
                }
                *out = v;
            }
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradient. `x` holds the initial guess and
/// receives the solution. Converges when `‖b − Ax‖ ≤ tol ‖b‖`, both norms
/// taken over the free rows.
pub fn pcg(op: &Stencil, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = op.len();
    let free_norm = |v: &[f64]| chunked_sum(n, |i| if op.fixed[i] { 0.0 } else { v[i] * v[i] }).sqrt();
    let b_norm = free_norm(b);
    if b_norm == 0.0 {
        x.iter_mut()
            .zip(b)
            .zip(&op.fixed)
            .for_each(|((v, b), &f)| *v = if f { *b } else { 0.0 });
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = op.diag.iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.par_iter().zip(inv_diag.par_iter()).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = free_norm(&r) / b_norm;
    for it in 0..max_iter {
        if residual <= tol {
            return Ok(SolveStats {
                iterations: it,
                residual,
            });
        }
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Singular(format!("operator lost positive definiteness (pᵀAp = {pq:.3e})")));
        }
        let alpha = rz / pq;
        x.par_iter_mut().zip(p.par_iter()).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(q.par_iter()).for_each(|(ri, qi)| *ri -= alpha * qi);
        z.par_iter_mut()
            .zip(r.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        residual = free_norm(&r) / b_norm;
    }
    if residual <= tol {
        return Ok(SolveStats {
            iterations: max_iter,
            residual,
        });
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// Default iteration budget for an `n`-cell grid.
pub fn default_max_iter(n: usize) -> usize {
    (50.0 * (n as f64).cbrt()).ceil() as usize
}
