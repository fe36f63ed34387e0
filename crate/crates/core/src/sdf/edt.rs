//! Exact Euclidean distance transform on anisotropic voxel grids.
//!
//! Separable three-phase scheme on squared distances (Saito–Toriwaki): a
//! two-pass scan along x, then lower-envelope minimization of
//! `D(k) + ((j − k)·s)²` along y and then z. Every scanline is independent, so
//! the result is identical for any thread schedule.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};

/// Largest grid the brute-force oracle accepts.
pub const BRUTEFORCE_LIMIT: usize = 64 * 64 * 64;

/// Distance in mm from every voxel center to the nearest `true` voxel center.
pub fn edt(mask: &Mask, spacing: [f64; 3]) -> Result<Grid3<f64>> {
    let mut d = edt_squared(mask, spacing)?;
    d.as_mut_slice().par_iter_mut().for_each(|v| *v = v.sqrt());
    Ok(d)
}

/// Squared distances in mm².
pub fn edt_squared(mask: &Mask, spacing: [f64; 3]) -> Result<Grid3<f64>> {
    check_spacing(spacing)?;
    if !mask.as_slice().iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    let [nx, ny, nz] = mask.dims();
    let mut d = Grid3::filled(mask.dims(), 0.0f64);

    // phase 1: rows along x
    d.as_mut_slice()
        .par_chunks_mut(nx)
        .zip(mask.as_slice().par_chunks(nx))
        .for_each(|(out, row)| scan_row(row, spacing[0], out));

    // phase 2: columns along y, one z-slice per task
    d.as_mut_slice()
        .par_chunks_mut(nx * ny)
        .for_each_init(
            || LineScratch::new(ny),
            |scratch, slice| {
                for i in 0..nx {
                    for j in 0..ny {
                        scratch.input[j] = slice[i + nx * j];
                    }
                    scratch.envelope(spacing[1]);
                    for j in 0..ny {
                        slice[i + nx * j] = scratch.output[j];
                    }
                }
            },
        );

    // phase 3: columns along z, one y-row of columns per task
    if nz > 1 {
        let src = d.as_slice();
        let rows: Vec<Vec<f64>> = (0..ny)
            .into_par_iter()
            .map_init(
                || LineScratch::new(nz),
                |scratch, j| {
                    let mut out = vec![0.0; nx * nz];
                    for i in 0..nx {
                        for k in 0..nz {
                            scratch.input[k] = src[i + nx * (j + ny * k)];
                        }
                        scratch.envelope(spacing[2]);
                        for k in 0..nz {
                            out[i + nx * k] = scratch.output[k];
                        }
                    }
                    out
                },
            )
            .collect();
        let dst = d.as_mut_slice();
        for (j, row) in rows.into_iter().enumerate() {
            for k in 0..nz {
                let base = nx * (j + ny * k);
                dst[base..base + nx].copy_from_slice(&row[nx * k..nx * (k + 1)]);
            }
        }
    }
    Ok(d)
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().all(|&s| s > 0.0 && s.is_finite()) {
        Ok(())
    } else {
        Err(Error::Geometry(format!("spacing must be positive, got {spacing:?}")))
    }
}

/// Squared distance along one row to the nearest feature, or infinity.
fn scan_row(row: &[bool], step: f64, out: &mut [f64]) {
    let mut last = None;
    for (i, (&m, o)) in row.iter().zip(out.iter_mut()).enumerate() {
        if m {
            last = Some(i);
        }
        *o = match last {
            Some(l) => sq((i - l) as f64 * step),
            None => f64::INFINITY,
        };
    }
    let mut next = None;
    for i in (0..row.len()).rev() {
        if row[i] {
            next = Some(i);
        }
        if let Some(n) = next {
            let d = sq((n - i) as f64 * step);
            if d < out[i] {
                out[i] = d;
            }
        }
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

struct LineScratch {
    input: Vec<f64>,
    output: Vec<f64>,
    // apex indices of the parabolas on the lower envelope
    apex: Vec<usize>,
    // left boundary (mm) of each envelope segment
    bound: Vec<f64>,
}

impl LineScratch {
    fn new(n: usize) -> Self {
        Self {
            input: vec![0.0; n],
            output: vec![0.0; n],
            apex: Vec::with_capacity(n),
            bound: Vec::with_capacity(n),
        }
    }

    /// `output[q] = min_p input[p] + ((q − p)·step)²`, skipping infinite inputs.
    fn envelope(&mut self, step: f64) {
        let f = &self.input;
        self.apex.clear();
        self.bound.clear();
        for (q, &fq) in f.iter().enumerate() {
            if fq.is_infinite() {
                continue;
            }
            let xq = q as f64 * step;
            loop {
                let Some(&p) = self.apex.last() else {
                    self.apex.push(q);
                    self.bound.push(f64::NEG_INFINITY);
                    break;
                };
                let xp = p as f64 * step;
                let cross = ((fq + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
                if cross <= *self.bound.last().unwrap() {
                    self.apex.pop();
                    self.bound.pop();
                } else {
                    self.apex.push(q);
                    self.bound.push(cross);
                    break;
                }
            }
        }
        if self.apex.is_empty() {
            self.output.fill(f64::INFINITY);
            return;
        }
        let mut seg = 0;
        for (q, o) in self.output.iter_mut().enumerate() {
            let xq = q as f64 * step;
            while seg + 1 < self.apex.len() && self.bound[seg + 1] < xq {
                seg += 1;
            }
            let p = self.apex[seg];
            *o = f[p] + sq(xq - p as f64 * step);
        }
    }
}

/// Direct minimization over every feature voxel. Reference for [`edt`].
pub fn edt_bruteforce(mask: &Mask, spacing: [f64; 3]) -> Result<Grid3<f64>> {
    check_spacing(spacing)?;
    if mask.len() > BRUTEFORCE_LIMIT {
        return Err(Error::OracleTooLarge {
            limit: BRUTEFORCE_LIMIT,
            got: mask.len(),
        });
    }
    let features: Vec<[f64; 3]> = (0..mask.len())
        .filter(|&l| mask.as_slice()[l])
        .map(|l| {
            let c = mask.coords(l);
            [0, 1, 2].map(|a| c[a] as f64 * spacing[a])
        })
        .collect();
    if features.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(Grid3::from_fn(mask.dims(), |c| {
        let p = [0, 1, 2].map(|a| c[a] as f64 * spacing[a]);
        features
            .iter()
            .map(|f| sq(p[0] - f[0]) + sq(p[1] - f[1]) + sq(p[2] - f[2]))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }))
}
