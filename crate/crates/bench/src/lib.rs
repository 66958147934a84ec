//! Shared builders for the benchmark targets.

use qfactor_core::algebra::{Block, BlockDecomposition};
use qfactor_core::factorise::{converse_construct, FactorisationInstance};
use qfactor_core::random::{self, rng};
use qfactor_core::{Operator, SystemLayout};

/// A random block decomposition of `C^{d_K}` with the given `(dA, dB)` shape.
pub fn random_decomposition(seed: u64, d_k: usize, shape: &[(usize, usize)]) -> BlockDecomposition {
    let mut r = rng(seed);
    let kl = SystemLayout::single("K", d_k).unwrap();
    let u = random::unitary_matrix(&mut r, d_k);
    let mut blocks = Vec::new();
    let mut offset = 0;
    for &(da, db) in shape {
        let cols = u.columns(offset, da * db).into_owned();
        let col = SystemLayout::new(vec![("CA", da), ("CB", db)]).unwrap();
        blocks.push(Block {
            da,
            db,
            isometry: Operator::new(kl.clone(), col, cols).unwrap(),
        });
        offset += da * db;
    }
    BlockDecomposition::new(kl, blocks).unwrap()
}

/// A factorisable instance with `d_I = d_J = 2` and `d_K = 4`, built from
/// random marginal maps through the converse construction.
pub fn converse_instance(seed: u64, shape: &[(usize, usize)]) -> FactorisationInstance {
    let mut r = rng(seed);
    let dec = random_decomposition(seed.wrapping_add(1), 4, shape);
    let ik = SystemLayout::new(vec![("I", 2), ("K", 4)]).unwrap();
    let kj = SystemLayout::new(vec![("K", 4), ("J", 2)]).unwrap();
    let a = random::cptp(&mut r, ik, SystemLayout::single("A", 2).unwrap(), 4).unwrap();
    let b = random::cptp(&mut r, kj, SystemLayout::single("B", 2).unwrap(), 4).unwrap();
    converse_construct(&a, &b, &dec).unwrap()
}
