//! Von Neumann entropy and conditional mutual information, in bits.

use crate::error::{Error, Result};
use crate::tensor::Operator;

/// Eigenvalues below this are treated as exact zeros inside the entropy.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;
/// Eigenvalues in `[-NEGATIVE_CLAMP, 0)` are clamped to zero; anything more
/// negative is rejected.
pub const NEGATIVE_CLAMP: f64 = 1e-9;
/// Conditional mutual information at or below this (in bits) counts as an
/// exact quantum Markov chain for structure extraction.
pub const EPS_CMI: f64 = 1e-9;

/// A grouping of a state's factors into the three slots of `I(A : B | C)`.
#[derive(Clone, Debug)]
pub struct Partition<'a> {
    pub a: Vec<&'a str>,
    pub b: Vec<&'a str>,
    pub c: Vec<&'a str>,
}

fn check_state(rho: &Operator) -> Result<()> {
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
        return Err(Error::State(format!("trace {tr} is not 1")));
    }
    Ok(())
}

/// Von Neumann entropy `−tr(ρ log₂ ρ)` of a density operator.
pub fn vn_entropy(rho: &Operator) -> Result<f64> {
    check_state(rho)?;
    let eig = rho.herm_eig()?;
    let mut h = 0.0;
    for &v in &eig.values {
        if v < -NEGATIVE_CLAMP {
            return Err(Error::State(format!("eigenvalue {v:.3e} below clamp")));
        }
        if v > EIGENVALUE_FLOOR {
            h -= v * v.log2();
        }
    }
    Ok(h)
}

/// Conditional mutual information `I(A : B | C) = S(AC) + S(BC) − S(ABC) − S(C)`
/// in bits. Every factor of `rho` must be assigned to exactly one slot.
pub fn cond_mutual_info(rho: &Operator, partition: &Partition) -> Result<f64> {
    check_state(rho)?;
    let layout = rho.row_layout();
    for l in layout.labels() {
        let n = [&partition.a, &partition.b, &partition.c]
            .iter()
            .filter(|g| g.contains(&l))
            .count();
        if n != 1 {
            return Err(Error::Layout(format!(
                "label {l} assigned to {n} partition slots"
            )));
        }
    }
    let total = layout.factors().len();
    if partition.a.len() + partition.b.len() + partition.c.len() != total {
        return Err(Error::Layout("partition lists an unknown label".into()));
    }
    let s = |traced: &[&str]| -> Result<f64> { vn_entropy(&rho.partial_trace(traced)?) };
    let h_ac = s(&partition.b)?;
    let h_bc = s(&partition.a)?;
    let h_abc = vn_entropy(rho)?;
    let mut ab: Vec<&str> = partition.a.clone();
    ab.extend(&partition.b);
    let h_c = s(&ab)?;
    Ok(h_ac + h_bc - h_abc - h_c)
}
