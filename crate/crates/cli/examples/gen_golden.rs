//! Regenerates the golden instance files under `tests/data/`.
//!
//! Run with `cargo run -p qfactor-cli --example gen_golden` after changing
//! the file schema or the built-in constructions.

use std::fs;
use std::path::PathBuf;

use qfactor_cli::schema::InstanceFile;
use qfactor_core::factorise::FactorisationInstance;
use qfactor_core::random::{self, rng};
use qfactor_core::tensor::CMatrix;
use qfactor_core::tsirelson::MeasurementFamily;
use qfactor_core::{C64, CpMap, Operator, SystemLayout};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// `m : W ↦ π_A ⊗ W`, `n : W ↦ tr(W)·π_B` on `H = I⊗K⊗J`, all qubits.
fn trivial_instance() -> FactorisationInstance {
    let h = SystemLayout::new(vec![("I", 2), ("K", 2), ("J", 2)]).unwrap();
    let a = SystemLayout::single("A", 2).unwrap();
    let b = SystemLayout::single("B", 2).unwrap();
    let amp = C64::new(1.0 / 2f64.sqrt(), 0.0);
    let m_kraus = (0..2)
        .map(|z| {
            let ket = Operator::basis_ket(a.clone(), z).unwrap().scale(amp);
            ket.kron(&Operator::identity(h.clone())).unwrap()
        })
        .collect();
    let n_kraus = (0..2)
        .flat_map(|z| {
            let b = b.clone();
            let h = h.clone();
            (0..8).map(move |x| {
                let mut mat = CMatrix::zeros(2, 8);
                mat[(z, x)] = amp;
                Operator::new(b.clone(), h.clone(), mat).unwrap()
            })
        })
        .collect();
    FactorisationInstance::new(
        CpMap::new(m_kraus).unwrap(),
        CpMap::new(n_kraus).unwrap(),
        "I",
        "K",
        "J",
    )
    .unwrap()
}

/// Three classically controlled stages `I_t⊗K → A_t⊗K` with `d_K = 4`.
fn multi_stages() -> Vec<CpMap> {
    let mut r = rng(7);
    (1..=3)
        .map(|t| {
            let i = SystemLayout::single(format!("I{t}"), 2).unwrap();
            let a = SystemLayout::single(format!("A{t}"), 2).unwrap();
            let k = SystemLayout::single("K", 4).unwrap();
            let mut kraus = Vec::new();
            for x in 0..4 {
                let ch = random::cptp(&mut r, i.clone(), a.clone(), 2).unwrap();
                let proj = Operator::basis_ket(k.clone(), x)
                    .unwrap()
                    .matmul(&Operator::basis_bra(k.clone(), x).unwrap())
                    .unwrap();
                for e in ch.kraus() {
                    kraus.push(e.kron(&proj).unwrap());
                }
            }
            CpMap::new(kraus).unwrap()
        })
        .collect()
}

/// Z/X projective families on separate qubits of `C²⊗C²`.
fn pauli_families() -> (MeasurementFamily, MeasurementFamily) {
    let l = SystemLayout::new(vec![("Q1", 2), ("Q2", 2)]).unwrap();
    let id2 = CMatrix::identity(2, 2);
    let h = 0.5;
    let z0 = CMatrix::from_row_slice(2, 2, &[
        C64::new(1.0, 0.0), C64::new(0.0, 0.0),
        C64::new(0.0, 0.0), C64::new(0.0, 0.0),
    ]);
    let z1 = CMatrix::from_row_slice(2, 2, &[
        C64::new(0.0, 0.0), C64::new(0.0, 0.0),
        C64::new(0.0, 0.0), C64::new(1.0, 0.0),
    ]);
    let xp = CMatrix::from_row_slice(2, 2, &[
        C64::new(h, 0.0), C64::new(h, 0.0),
        C64::new(h, 0.0), C64::new(h, 0.0),
    ]);
    let xm = CMatrix::from_row_slice(2, 2, &[
        C64::new(h, 0.0), C64::new(-h, 0.0),
        C64::new(-h, 0.0), C64::new(h, 0.0),
    ]);
    let family = |first: bool| {
        let settings = [[&z0, &z1], [&xp, &xm]]
            .iter()
            .map(|basis| {
                basis
                    .iter()
                    .map(|p| {
                        let m = if first {
                            p.kronecker(&id2)
                        } else {
                            id2.kronecker(p)
                        };
                        Operator::new(l.clone(), l.clone(), m).unwrap()
                    })
                    .collect()
            })
            .collect();
        MeasurementFamily::new(l.clone(), settings).unwrap()
    };
    (family(true), family(false))
}

fn main() {
    let dir = data_dir();
    fs::create_dir_all(&dir).unwrap();

    let trivial = InstanceFile::from_instance(&trivial_instance());
    fs::write(dir.join("trivial.instance.json"), trivial.to_json()).unwrap();

    let pr = InstanceFile::from_instance(&qfactor_core::prbox::build_pr_maps().unwrap());
    fs::write(dir.join("pr.instance.json"), pr.to_json()).unwrap();

    let multi = InstanceFile::from_stages(&multi_stages());
    fs::write(dir.join("multi.instance.json"), multi.to_json()).unwrap();

    let (x, y) = pauli_families();
    let tsirelson = InstanceFile::from_families(&x, &y);
    fs::write(dir.join("tsirelson.instance.json"), tsirelson.to_json()).unwrap();

    println!("golden files written to {}", dir.display());
}
