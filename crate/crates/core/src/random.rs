//! Seeded generators for test and demo instances.
//!
//! Everything here takes an explicit generator so that callers control
//! determinism; a fixed seed reproduces instances bit-for-bit.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::cpmap::CpMap;
use crate::tensor::{CMatrix, Operator, SystemLayout, C64};
use crate::Result;

/// The crate-wide deterministic generator.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    // Box–Muller from uniform draws
    let mut normal = || {
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let v: f64 = rng.random();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    };
    DMatrix::from_fn(rows, cols, |_, _| C64::new(normal(), normal()))
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
pub fn unitary_matrix(rng: &mut impl Rng, dim: usize) -> CMatrix {
    let g = ginibre(rng, dim, dim);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn unitary(rng: &mut impl Rng, layout: SystemLayout) -> Operator {
    let mat = unitary_matrix(rng, layout.total_dim());
    Operator::square(layout, mat).expect("dims match by construction")
}

/// Haar-distributed isometry from `col` into `row` (requires
/// `dim(col) ≤ dim(row)`): the first columns of a random unitary.
pub fn isometry(rng: &mut impl Rng, row: SystemLayout, col: SystemLayout) -> Result<Operator> {
    let dr = row.total_dim();
    let dc = col.total_dim();
    if dc > dr {
        return Err(crate::Error::Dimension(format!(
            "isometry needs target dim {dr} ≥ source dim {dc}"
        )));
    }
    let u = unitary_matrix(rng, dr);
    let mat = u.columns(0, dc).into_owned();
    Operator::new(row, col, mat)
}

/// Random Hermitian operator with entries of order one.
pub fn hermitian(rng: &mut impl Rng, layout: SystemLayout) -> Operator {
    let d = layout.total_dim();
    let g = ginibre(rng, d, d);
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    Operator::square(layout, h).expect("dims match by construction")
}

/// Random density operator (Hilbert–Schmidt ensemble: GG†/tr).
pub fn state(rng: &mut impl Rng, layout: SystemLayout) -> Operator {
    let d = layout.total_dim();
    let g = ginibre(rng, d, d);
    let p = &g * g.adjoint();
    let t = p.trace();
    Operator::square(layout, p / t).expect("dims match by construction")
}

/// Random pure state projector.
pub fn pure_state(rng: &mut impl Rng, layout: SystemLayout) -> Operator {
    let d = layout.total_dim();
    let g = ginibre(rng, d, 1);
    let n = g.norm();
    let v = g / C64::new(n, 0.0);
    let p = &v * v.adjoint();
    Operator::square(layout, p).expect("dims match by construction")
}

/// Random CPTP map from `input` to `output` with the given number of Kraus
/// operators, built by slicing a Haar-random isometry into an environment.
pub fn cptp(
    rng: &mut impl Rng,
    input: SystemLayout,
    output: SystemLayout,
    kraus_count: usize,
) -> Result<CpMap> {
    let di = input.total_dim();
    let dout = output.total_dim();
    let total = dout * kraus_count;
    if total < di {
        return Err(crate::Error::Dimension(
            "output dim × kraus count must cover the input dim".into(),
        ));
    }
    let u = unitary_matrix(rng, total);
    let v = u.columns(0, di).into_owned();
    let mut kraus = Vec::with_capacity(kraus_count);
    for z in 0..kraus_count {
        // row blocks of the isometry, env index slow ((z, o) → z·dout + o)
        let mut e = CMatrix::zeros(dout, di);
        for o in 0..dout {
            for i in 0..di {
                e[(o, i)] = v[(z * dout + o, i)];
            }
        }
        kraus.push(Operator::new(output.clone(), input.clone(), e)?);
    }
    CpMap::new(kraus)
}

/// Random trace non-increasing CP map: a CPTP map scaled by a factor in
/// (0, 1].
pub fn cp_subnormalised(
    rng: &mut impl Rng,
    input: SystemLayout,
    output: SystemLayout,
    kraus_count: usize,
) -> Result<CpMap> {
    let m = cptp(rng, input, output, kraus_count)?;
    let c: f64 = 0.2 + 0.8 * rng.random::<f64>();
    let kraus = m
        .kraus()
        .iter()
        .map(|e| e.scale(C64::new(c.sqrt(), 0.0)))
        .collect();
    CpMap::new(kraus)
}

/// Random partition of `dim` into `(dA, dB)` block pairs with
/// `Σ dA·dB = dim`, for exercising block-structured decompositions.
pub fn block_structure(rng: &mut impl Rng, dim: usize) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut rest = dim;
    while rest > 0 {
        let size = rng.random_range(1..=rest);
        // factor the block size into dA·dB
        let divisors: Vec<usize> = (1..=size).filter(|d| size % d == 0).collect();
        let da = divisors[rng.random_range(0..divisors.len())];
        blocks.push((da, size / da));
        rest -= size;
    }
    blocks
}
