//! Discrete gradient-domain blending: build and solve the Dirichlet
//! Poisson system over a masked region, guided by source-image gradients.
//!
//! The region Ω is the placed patch-mask foreground; boundary values come
//! from the target image and the guidance field is the finite-difference
//! gradient of the source patch (never mixed gradients). The system uses
//! the standard 5-point Laplacian: diagonal 4, off-diagonal −1 for
//! 4-neighbor pairs inside Ω.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::Mask;
use crate::scalar::Scalar;

/// Finite-difference guidance field over a source raster.
///
/// `v(p, q) = g(p) − g(q)` for 4-neighbor pairs, so `v(p, q) = −v(q, p)`.
pub struct GuidanceField<'a, S> {
    source: &'a Image<S>,
}

impl<'a, S: Scalar> GuidanceField<'a, S> {
    pub fn new(source: &'a Image<S>) -> Self {
        GuidanceField { source }
    }

    #[inline]
    pub fn v(&self, p: (u32, u32), q: (u32, u32)) -> S {
        self.source.get(p.0, p.1) - self.source.get(q.0, q.1)
    }
}

const NO_ROW: u32 = u32::MAX;

/// Sparse SPD Laplacian system over Ω with its pixel index map and
/// right-hand side.
pub struct PoissonSystem<S> {
    /// Target-raster coordinates of each Ω row, in row-major order.
    pixels: Vec<(u32, u32)>,
    /// Per-row indices of the W/E/N/S neighbors inside Ω (`NO_ROW` if the
    /// neighbor is boundary).
    neighbor_rows: Vec<[u32; 4]>,
    rhs: Vec<S>,
}

impl<S: Scalar> PoissonSystem<S> {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn rhs(&self) -> &[S] {
        &self.rhs
    }

    /// Matrix entry `(i, j)`: 4 on the diagonal, −1 for neighbor pairs
    /// inside Ω, 0 elsewhere.
    pub fn matrix_entry(&self, i: usize, j: usize) -> S {
        if i == j {
            return S::from_f64_lit(4.0);
        }
        if self.neighbor_rows[i].contains(&(j as u32)) {
            -S::one()
        } else {
            S::zero()
        }
    }

    /// `y = A x`.
    fn matvec(&self, x: &[S], y: &mut [S]) {
        let four = S::from_f64_lit(4.0);
        for (i, nbrs) in self.neighbor_rows.iter().enumerate() {
            let mut acc = four * x[i];
            for &j in nbrs {
                if j != NO_ROW {
                    acc -= x[j as usize];
                }
            }
            y[i] = acc;
        }
    }
}

/// Convergence record of one conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct SolveReport<S> {
    pub iterations: usize,
    /// Relative 2-norm of the final residual.
    pub residual: S,
    pub converged: bool,
    /// `(iteration, relative residual)` recorded whenever the residual
    /// reached a new minimum.
    pub checkpoints: Vec<(usize, S)>,
}

/// Solver knobs; defaults are 1e-6 relative residual and `10·|Ω|` iterations.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<S> {
    pub tolerance: S,
    pub max_iter: Option<usize>,
}

impl<S: Scalar> Default for SolveOptions<S> {
    fn default() -> Self {
        SolveOptions {
            tolerance: S::from_f64_lit(1e-6),
            max_iter: None,
        }
    }
}

/// Assemble the Dirichlet system for blending `source` into `target`
/// through `omega`, with the patch frame placed at `offset` in target
/// coordinates.
///
/// Every Ω pixel must have four in-raster neighbors both in the target
/// (after placement) and in the patch frame, so the Dirichlet ring and
/// the guidance stencil are always defined.
pub fn build_system<S: Scalar>(
    target: &Image<S>,
    source: &Image<S>,
    omega: &Mask,
    offset: (i64, i64),
) -> Result<PoissonSystem<S>> {
    if source.width() != omega.width() || source.height() != omega.height() {
        return Err(Error::DimensionMismatch(
            "source patch and mask disagree on raster size".into(),
        ));
    }
    if omega.is_empty() {
        return Err(Error::EmptyOmega);
    }

    let (tw, th) = (target.width() as i64, target.height() as i64);
    let (pw, ph) = (omega.width() as i64, omega.height() as i64);
    let (dx, dy) = offset;

    let mut pixels = Vec::new();
    let mut row_of = HashMap::new();
    for (px, py) in omega.foreground() {
        let (px, py) = (px as i64, py as i64);
        if px < 1 || py < 1 || px >= pw - 1 || py >= ph - 1 {
            return Err(Error::OmegaTouchesBorder);
        }
        let (tx, ty) = (px + dx, py + dy);
        if tx < 1 || ty < 1 || tx >= tw - 1 || ty >= th - 1 {
            return Err(Error::OmegaTouchesBorder);
        }
        row_of.insert((tx as u32, ty as u32), pixels.len() as u32);
        pixels.push((tx as u32, ty as u32));
    }

    let guidance = GuidanceField::new(source);
    let mut neighbor_rows = Vec::with_capacity(pixels.len());
    let mut rhs = Vec::with_capacity(pixels.len());
    for &(tx, ty) in &pixels {
        let (px, py) = ((tx as i64 - dx) as u32, (ty as i64 - dy) as u32);
        let t_nbrs = [
            (tx - 1, ty),
            (tx + 1, ty),
            (tx, ty - 1),
            (tx, ty + 1),
        ];
        let p_nbrs = [
            (px - 1, py),
            (px + 1, py),
            (px, py - 1),
            (px, py + 1),
        ];
        let mut rows = [NO_ROW; 4];
        let mut b = S::zero();
        for k in 0..4 {
            match row_of.get(&t_nbrs[k]) {
                Some(&r) => rows[k] = r,
                // Dirichlet boundary: value pinned to the target image.
                None => b += target.get(t_nbrs[k].0, t_nbrs[k].1),
            }
            b += guidance.v((px, py), p_nbrs[k]);
        }
        neighbor_rows.push(rows);
        rhs.push(b);
    }

    Ok(PoissonSystem {
        pixels,
        neighbor_rows,
        rhs,
    })
}

/// Jacobi-preconditioned conjugate gradient on the assembled system.
pub fn solve<S: Scalar>(
    system: &PoissonSystem<S>,
    opts: SolveOptions<S>,
) -> Result<(Vec<S>, SolveReport<S>)> {
    let n = system.len();
    let max_iter = opts.max_iter.unwrap_or(10 * n);
    let inv_diag = S::one() / S::from_f64_lit(4.0);

    let b = &system.rhs;
    let b_norm = b.iter().map(|&v| v * v).sum::<S>().sqrt();
    if b_norm == S::zero() {
        return Ok((
            vec![S::zero(); n],
            SolveReport {
                iterations: 0,
                residual: S::zero(),
                converged: true,
                checkpoints: vec![(0, S::zero())],
            },
        ));
    }

    let mut x = vec![S::zero(); n];
    let mut r = b.clone();
    let mut z: Vec<S> = r.iter().map(|&v| v * inv_diag).collect();
    let mut p = z.clone();
    let mut rz: S = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
    let mut ap = vec![S::zero(); n];

    let mut best = S::infinity();
    let mut checkpoints = Vec::new();
    let mut rel = S::one();
    let mut iterations = 0;

    for it in 1..=max_iter {
        system.matvec(&p, &mut ap);
        let p_ap: S = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
        if !p_ap.is_finite() || p_ap == S::zero() {
            return Err(Error::NonFinite);
        }
        let alpha = rz / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = r.iter().map(|&v| v * v).sum::<S>().sqrt();
        if !r_norm.is_finite() {
            return Err(Error::NonFinite);
        }
        rel = r_norm / b_norm;
        iterations = it;
        if rel < best {
            best = rel;
            checkpoints.push((it, rel));
        }
        if rel <= opts.tolerance {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag;
        }
        let rz_next: S = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    let converged = rel <= opts.tolerance;
    Ok((
        x,
        SolveReport {
            iterations,
            residual: rel,
            converged,
            checkpoints,
        },
    ))
}

/// Blend `source_patch` into `target` through `patch_mask` placed at
/// `dest_offset`. Ω pixels take the Poisson solution clamped to `[0, 1]`;
/// every other pixel is exactly the target's.
pub fn seamless_clone<S: Scalar>(
    target: &Image<S>,
    source_patch: &Image<S>,
    patch_mask: &Mask,
    dest_offset: (i64, i64),
    opts: SolveOptions<S>,
) -> Result<(Image<S>, SolveReport<S>)> {
    let system = build_system(target, source_patch, patch_mask, dest_offset)?;
    let (solution, report) = solve(&system, opts)?;
    let mut out = target.clone();
    for (&(tx, ty), &v) in system.pixels().iter().zip(&solution) {
        out.set_clamped(tx, ty, v);
    }
    Ok((out, report))
}
