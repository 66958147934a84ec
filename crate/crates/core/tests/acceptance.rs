//! Acceptance gate: one test per acceptance criterion, each printing a
//! single PASS/FAIL line. Run with `cargo test --test acceptance`.

use std::time::Instant;

use qfactor_core::algebra::{Block, BlockDecomposition};
use qfactor_core::entropic::{cond_mutual_info, Partition};
use qfactor_core::factorise::{
    build_doubling_map, check_conditions, converse_construct, factorise, factorise_forced,
    multi_factorise, verify_doubling_properties, FactorisationInstance, Mode,
};
use qfactor_core::prbox;
use qfactor_core::random::{self, rng};
use qfactor_core::tensor::CMatrix;
use qfactor_core::tsirelson::{
    check_weak_commutation, factorise_observables, MeasurementFamily, ObservableMode,
};
use qfactor_core::{C64, CpMap, Error, Operator, SystemLayout};

fn finish(n: usize, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("criterion {n} ({name}): PASS — {detail}"),
        Err(detail) => {
            println!("criterion {n} ({name}): FAIL — {detail}");
            panic!("criterion {n} ({name}) failed: {detail}");
        }
    }
}

fn lay(label: &str, d: usize) -> SystemLayout {
    SystemLayout::single(label, d).unwrap()
}

fn random_decomp(
    r: &mut impl rand::Rng,
    k_layout: &SystemLayout,
    shape: &[(usize, usize)],
) -> BlockDecomposition {
    let d = k_layout.total_dim();
    let u = random::unitary_matrix(r, d);
    let mut blocks = Vec::new();
    let mut offset = 0;
    for &(da, db) in shape {
        let cols = u.columns(offset, da * db).into_owned();
        let col = SystemLayout::new(vec![("CA", da), ("CB", db)]).unwrap();
        blocks.push(Block {
            da,
            db,
            isometry: Operator::new(k_layout.clone(), col, cols).unwrap(),
        });
        offset += da * db;
    }
    BlockDecomposition::new(k_layout.clone(), blocks).unwrap()
}

const SHAPES: [&[(usize, usize)]; 4] = [
    &[(4, 1)],
    &[(2, 2)],
    &[(2, 1), (1, 2)],
    &[(1, 1), (1, 1), (1, 1), (1, 1)],
];

fn converse_instance(seed: u64) -> FactorisationInstance {
    let mut r = rng(seed);
    let kl = lay("K", 4);
    let shape = SHAPES[(seed as usize) % SHAPES.len()];
    let dec = random_decomp(&mut r, &kl, shape);
    let ik = SystemLayout::new(vec![("I", 2), ("K", 4)]).unwrap();
    let kj = SystemLayout::new(vec![("K", 4), ("J", 2)]).unwrap();
    let a = random::cptp(&mut r, ik, lay("A", 2), 4).unwrap();
    let b = random::cptp(&mut r, kj, lay("B", 2), 4).unwrap();
    converse_construct(&a, &b, &dec).unwrap()
}

#[test]
fn criterion_1_converse_round_trips() {
    let start = Instant::now();
    let mut worst_residual: f64 = 0.0;
    let mut worst_cmi: f64 = 0.0;
    let result = (|| {
        for seed in 0..50u64 {
            let inst = converse_instance(seed);
            let cert = factorise(&inst, Mode::Strict, seed)
                .map_err(|e| format!("seed {seed}: {e:?}"))?;
            if cert.residual > 1e-8 {
                return Err(format!("seed {seed}: residual {:.3e}", cert.residual));
            }
            if cert.claim1_cmi > 1e-9 {
                return Err(format!("seed {seed}: CMI {:.3e}", cert.claim1_cmi));
            }
            worst_residual = worst_residual.max(cert.residual);
            worst_cmi = worst_cmi.max(cert.claim1_cmi);
        }
        let secs = start.elapsed().as_secs_f64();
        if secs >= 60.0 {
            return Err(format!("took {secs:.1} s (limit 60 s)"));
        }
        Ok(format!(
            "50 round trips, max residual {worst_residual:.2e}, max CMI {worst_cmi:.2e}, {secs:.1} s"
        ))
    })();
    finish(1, "converse round trip", result);
}

#[test]
fn criterion_2_block_weight_law() {
    let result = (|| {
        let mut worst: f64 = 0.0;
        for seed in [0u64, 1, 2, 3, 10, 11, 12, 13] {
            let inst = converse_instance(seed);
            let cert = factorise(&inst, Mode::Strict, seed)
                .map_err(|e| format!("seed {seed}: {e:?}"))?;
            let d_k = 4.0;
            for (z, block) in cert.decomposition.blocks.iter().enumerate() {
                let expect = (block.da * block.db) as f64 / d_k;
                let dev = (cert.block_weights[z] - expect).abs();
                if dev > 1e-9 {
                    return Err(format!("seed {seed} block {z}: deviation {dev:.3e}"));
                }
                worst = worst.max(dev);
            }
        }
        Ok(format!("max |w_z − dA·dB/d_K| = {worst:.2e}"))
    })();
    finish(2, "block-weight law", result);
}

#[test]
fn criterion_3_doubling_identities() {
    let result = (|| {
        let mut r = rng(300);
        let mut worst: f64 = 0.0;
        for case in 0..20 {
            let dim = 2 + (case % 5);
            let shape = random::block_structure(&mut r, dim);
            let kl = lay("K", dim);
            let dec = random_decomp(&mut r, &kl, &shape);
            let d = build_doubling_map(&dec).map_err(|e| format!("{e:?}"))?;
            let rep = verify_doubling_properties(&d, &dec).map_err(|e| format!("{e:?}"))?;
            let m = rep
                .tp_residual
                .max(rep.unital_residual)
                .max(rep.iteration_residual);
            if m > 1e-10 {
                return Err(format!("case {case} (dim {dim}, {shape:?}): residual {m:.3e}"));
            }
            worst = worst.max(m);
        }
        Ok(format!("20 decompositions, max residual {worst:.2e}"))
    })();
    finish(3, "doubling-map identities", result);
}

fn pauli_families() -> (MeasurementFamily, MeasurementFamily) {
    let l = SystemLayout::new(vec![("Q1", 2), ("Q2", 2)]).unwrap();
    let id2 = CMatrix::identity(2, 2);
    let h = 0.5;
    let z = [
        CMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, 0.0), C64::new(0.0, 0.0),
            C64::new(0.0, 0.0), C64::new(0.0, 0.0),
        ]),
        CMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0), C64::new(0.0, 0.0),
            C64::new(0.0, 0.0), C64::new(1.0, 0.0),
        ]),
    ];
    let x = [
        CMatrix::from_row_slice(2, 2, &[
            C64::new(h, 0.0), C64::new(h, 0.0),
            C64::new(h, 0.0), C64::new(h, 0.0),
        ]),
        CMatrix::from_row_slice(2, 2, &[
            C64::new(h, 0.0), C64::new(-h, 0.0),
            C64::new(-h, 0.0), C64::new(h, 0.0),
        ]),
    ];
    let family = |first: bool| {
        let settings = [&z, &x]
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

#[test]
fn criterion_4_observable_factorisation() {
    let result = (|| {
        let (x, y) = pauli_families();
        let of = factorise_observables(&x, &y, ObservableMode::Strict, 0)
            .map_err(|e| format!("{e:?}"))?;
        let embed = of.residuals.embed_x.max(of.residuals.embed_y);
        if embed > 1e-8 {
            return Err(format!("embedding residual {embed:.3e}"));
        }
        // probability preservation on 100 random states
        let mut r = rng(400);
        let l = x.layout().clone();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let rho = random::state(&mut r, l.clone());
            let lifted = of.v.mat() * rho.mat() * of.v.adjoint().mat();
            for (i, xs) in x.operators().iter().enumerate() {
                for (alpha, xo) in xs.iter().enumerate() {
                    for (j, ys) in y.operators().iter().enumerate() {
                        for (beta, yo) in ys.iter().enumerate() {
                            let direct = (xo.mat() * yo.mat() * rho.mat()).trace();
                            let ab =
                                of.a_ops[i][alpha].mat().kronecker(of.b_ops[j][beta].mat());
                            let via = (ab * &lifted).trace();
                            worst = worst.max((direct - via).norm());
                        }
                    }
                }
            }
        }
        if worst > 1e-9 {
            return Err(format!("probability deviation {worst:.3e}"));
        }
        Ok(format!(
            "embedding residual {embed:.2e}, probability deviation {worst:.2e} over 100 states"
        ))
    })();
    finish(4, "observable factorisation on separate qubits", result);
}

/// Two commuting projective families from a common random eigenbasis of C⁴.
fn commuting_pair(seed: u64) -> (MeasurementFamily, MeasurementFamily) {
    let mut r = rng(seed);
    let l = lay("K", 4);
    let u = random::unitary_matrix(&mut r, 4);
    let proj = |levels: [f64; 4]| {
        let mut m = CMatrix::zeros(4, 4);
        for (i, &p) in levels.iter().enumerate() {
            let col = u.column(i);
            for a in 0..4 {
                for b in 0..4 {
                    m[(a, b)] += C64::new(p, 0.0) * col[a] * col[b].conj();
                }
            }
        }
        Operator::new(l.clone(), l.clone(), m).unwrap()
    };
    let x = MeasurementFamily::new(
        l.clone(),
        vec![vec![proj([1.0, 1.0, 0.0, 0.0]), proj([0.0, 0.0, 1.0, 1.0])]],
    )
    .unwrap();
    let y = MeasurementFamily::new(
        l.clone(),
        vec![vec![proj([1.0, 0.0, 1.0, 0.0]), proj([0.0, 1.0, 0.0, 1.0])]],
    )
    .unwrap();
    (x, y)
}

#[test]
fn criterion_5_weak_mode() {
    let result = (|| {
        let mut worst_ratio: f64 = 0.0;
        for seed in 500..550u64 {
            let (x, y) = commuting_pair(seed);
            if !check_weak_commutation(&x, &y).map_err(|e| format!("{e:?}"))? {
                return Err(format!("seed {seed}: weak commutation check failed"));
            }
            let strict = factorise_observables(&x, &y, ObservableMode::Strict, seed)
                .map_err(|e| format!("seed {seed} strict: {e:?}"))?;
            let weak = factorise_observables(&x, &y, ObservableMode::Weak, seed)
                .map_err(|e| format!("seed {seed} weak: {e:?}"))?;
            let s = strict
                .residuals
                .embed_x
                .max(strict.residuals.embed_y)
                .max(strict.residuals.embed_xy);
            let w = weak
                .residuals
                .embed_x
                .max(weak.residuals.embed_y)
                .max(weak.residuals.embed_xy);
            if w > 10.0 * s.max(1e-12) {
                return Err(format!("seed {seed}: weak {w:.3e} vs strict {s:.3e}"));
            }
            worst_ratio = worst_ratio.max(w / s.max(1e-12));
        }
        Ok(format!("50 pairs, max weak/strict residual ratio {worst_ratio:.2}"))
    })();
    finish(5, "weak-commutation mode", result);
}

#[test]
fn criterion_6_pr_box() {
    let result = (|| {
        let inst = prbox::build_pr_maps().map_err(|e| format!("{e:?}"))?;
        let rep = check_conditions(&inst).map_err(|e| format!("{e:?}"))?;
        if rep.cond1_residual > 1e-12 {
            return Err(format!("composition residual {:.3e}", rep.cond1_residual));
        }
        if !rep.cond3_ok() {
            return Err(format!(
                "independence residuals {:.3e}/{:.3e}",
                rep.cond3_m_residual, rep.cond3_n_residual
            ));
        }
        if rep.cond2_unital_residual < 0.2 {
            return Err(format!(
                "unitality residual only {:.3e}",
                rep.cond2_unital_residual
            ));
        }
        let cmi = match factorise_forced(&inst, Mode::Strict, 0) {
            Err(Error::FactorisationImpossible { cmi }) => cmi,
            other => return Err(format!("forced pipeline returned {other:?}")),
        };
        if cmi < 0.1 {
            return Err(format!("forced CMI only {cmi:.4} bits"));
        }
        let necessity = prbox::demonstrate_necessity().map_err(|e| format!("{e:?}"))?;
        if (necessity.pr_win_prob - 1.0).abs() > 1e-12 {
            return Err(format!("PR win probability {}", necessity.pr_win_prob));
        }
        if (necessity.classical_max - 0.75).abs() > 1e-15 {
            return Err(format!("classical maximum {}", necessity.classical_max));
        }
        if (necessity.quantum_bound - 0.853553).abs() > 0.005 {
            return Err(format!("quantum bound {}", necessity.quantum_bound));
        }
        Ok(format!(
            "conditions as expected, forced CMI {cmi:.3} bits, win 1 vs classical 0.75 vs quantum {:.6}",
            necessity.quantum_bound
        ))
    })();
    finish(6, "PR-box necessity of unitality", result);
}

/// A classically controlled stage: decohere K in the computational basis and
/// apply a K-dependent channel I_t → A_t.
fn classical_stage(r: &mut impl rand::Rng, t: usize, d_k: usize) -> CpMap {
    let i = lay(&format!("I{t}"), 2);
    let a = lay(&format!("A{t}"), 2);
    let kl = lay("K", d_k);
    let mut kraus = Vec::new();
    for x in 0..d_k {
        let ch = random::cptp(r, i.clone(), a.clone(), 2).unwrap();
        let proj = Operator::basis_ket(kl.clone(), x)
            .unwrap()
            .matmul(&Operator::basis_bra(kl.clone(), x).unwrap())
            .unwrap();
        for e in ch.kraus() {
            kraus.push(e.kron(&proj).unwrap());
        }
    }
    CpMap::new(kraus).unwrap()
}

/// A classical map that copies its input bit into the high bit of K (and
/// moves K's high bit into the output), so later stages can read it.
fn signalling_stage(t: usize, d_k: usize) -> CpMap {
    assert_eq!(d_k, 4);
    let i = lay(&format!("I{t}"), 2);
    let a = lay(&format!("A{t}"), 2);
    let kl = lay("K", d_k);
    let in_layout = i.concat(&kl).unwrap();
    let out_layout = a.concat(&kl).unwrap();
    let mut kraus = Vec::new();
    for x in 0..2usize {
        for y in 0..d_k {
            let out_bit = y & 1;
            let k_next = 2 * x + (y >> 1);
            let mut m = CMatrix::zeros(2 * d_k, 2 * d_k);
            m[(out_bit * d_k + k_next, x * d_k + y)] = C64::new(1.0, 0.0);
            kraus.push(Operator::new(out_layout.clone(), in_layout.clone(), m).unwrap());
        }
    }
    CpMap::new(kraus).unwrap()
}

#[test]
fn criterion_7_multi_map() {
    let result = (|| {
        let mut r = rng(700);
        let maps = vec![
            classical_stage(&mut r, 1, 4),
            classical_stage(&mut r, 2, 4),
            classical_stage(&mut r, 3, 4),
        ];
        let mf = multi_factorise(&maps, 0).map_err(|e| format!("{e:?}"))?;
        if mf.residual > 1e-7 {
            return Err(format!("chain residual {:.3e}", mf.residual));
        }
        let bad = vec![
            classical_stage(&mut r, 1, 4),
            signalling_stage(2, 4),
            classical_stage(&mut r, 3, 4),
        ];
        match multi_factorise(&bad, 0) {
            Err(Error::MultiCondition { stage: 2, residual }) => Ok(format!(
                "s = 3 residual {:.2e}; signalling chain rejected at stage 2 (residual {residual:.2e})",
                mf.residual
            )),
            other => Err(format!("signalling chain returned {other:?}")),
        }
    })();
    finish(7, "multi-map chains", result);
}

// --- criterion 8: foundational suites -------------------------------------

/// Recover `σ_KH = R(ρ_GH)` from a pure `ρ_GH` with matching `H`-marginal by
/// building the recovery channel from aligned Schmidt decompositions.
fn schmidt_recovery_check(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (dg, dh, dk) = (4usize, 4usize, 3usize);
    let gl = lay("G", dg);
    let hl = lay("H", dh);
    let gh = gl.concat(&hl).unwrap();
    let rho = random::pure_state(&mut r, gh.clone());
    let r0 = random::cptp(&mut r, gl.clone(), lay("Kc", dk), 4).unwrap();
    // σ = (R₀ ⊗ id_H)(ρ): same H-marginal since R₀ is TP
    let ext = r0.tensor_maps(&CpMap::identity(hl.clone())).unwrap();
    let sigma = ext.apply(&rho).unwrap();

    // Schmidt decomposition of ρ across G : H
    let mut m_rho = CMatrix::zeros(dg, dh);
    // extract the pure-state vector as the dominant eigenvector
    let eig = rho.herm_eig().map_err(|e| format!("{e:?}"))?;
    let v = eig.vectors.column(0);
    let phase_fix = C64::new(eig.values[0].sqrt(), 0.0);
    for g in 0..dg {
        for h in 0..dh {
            m_rho[(g, h)] = v[g * dh + h] * phase_fix;
        }
    }
    let svd_rho = m_rho.svd(true, true);
    let u_rho = svd_rho.u.as_ref().unwrap();
    let vt_rho = svd_rho.v_t.as_ref().unwrap();

    // purify σ on (K ⊗ E) : H with E spanning the eigenvectors of σ
    let eig_s = sigma.herm_eig().map_err(|e| format!("{e:?}"))?;
    let de = dk * dh; // generous environment
    let mut n = CMatrix::zeros(dk * de, dh);
    for (e_idx, &mu) in eig_s.values.iter().enumerate() {
        if mu < 1e-14 {
            continue;
        }
        let s = C64::new(mu.max(0.0).sqrt(), 0.0);
        let col = eig_s.vectors.column(e_idx);
        for k in 0..dk {
            for h in 0..dh {
                n[((k * de + e_idx), h)] += s * col[k * dh + h];
            }
        }
    }
    let svd_s = n.svd(true, true);
    let u_s = svd_s.u.as_ref().unwrap();
    let vt_s = svd_s.v_t.as_ref().unwrap();

    // match Schmidt coefficients and align H-side phases
    let mut v_iso = CMatrix::zeros(dk * de, dg);
    for i in 0..dg {
        let lam_rho = svd_rho.singular_values[i];
        let lam_s = svd_s.singular_values[i];
        if (lam_rho - lam_s).abs() > 1e-9 {
            return Err(format!("Schmidt spectra differ: {lam_rho} vs {lam_s}"));
        }
        // h-side vectors: rows i of the two V† factors; phase c with
        // t_sigma = c · t_rho
        let mut c = C64::new(0.0, 0.0);
        for h in 0..dh {
            c += vt_rho[(i, h)].conj() * vt_s[(i, h)];
        }
        if (c.norm() - 1.0).abs() > 1e-9 {
            return Err(format!("H-side Schmidt vectors misaligned: |c| = {}", c.norm()));
        }
        // V = Σ_i c_i |e_i⟩⟨g_i|
        for row in 0..dk * de {
            for g in 0..dg {
                v_iso[(row, g)] += c * u_s[(row, i)] * u_rho[(g, i)].conj();
            }
        }
    }
    let ke = SystemLayout::new(vec![("Kc", dk), ("E", de)]).unwrap();
    let viso_op = Operator::new(ke, gl, v_iso).unwrap();
    let recovery_full = CpMap::new(vec![viso_op]).map_err(|e| format!("{e:?}"))?;
    let recovery = CpMap::trace_out(recovery_full.out_layout(), &["E"])
        .unwrap()
        .compose(&recovery_full)
        .unwrap();
    let recovered = recovery
        .tensor_maps(&CpMap::identity(hl))
        .unwrap()
        .apply(&rho)
        .unwrap();
    Ok(recovered.sub(&sigma).unwrap().trace_norm())
}

#[test]
fn criterion_8_foundations() {
    let start = Instant::now();
    let result = (|| {
        let mut r = rng(800);
        // Choi/Kraus round trips
        let mut worst_rt: f64 = 0.0;
        for (din, dout) in [(2usize, 3usize), (4, 2), (3, 3), (4, 4)] {
            for _ in 0..5 {
                let m = random::cptp(&mut r, lay("H", din), lay("K", dout), 3).unwrap();
                let choi = m.to_choi().unwrap();
                let back = choi.to_map().unwrap().to_choi().unwrap();
                let d = choi.distance(&back).unwrap();
                if d > 1e-10 {
                    return Err(format!("Choi/Kraus round trip residual {d:.3e}"));
                }
                worst_rt = worst_rt.max(d);
            }
        }
        // TP ⇔ tilde-marginal is maximally mixed
        for _ in 0..5 {
            let tp = random::cptp(&mut r, lay("H", 3), lay("K", 4), 3).unwrap();
            let pi = Operator::maximally_mixed(tp.to_choi().unwrap().tilde_marginal().unwrap().row_layout().clone());
            let d = tp
                .to_choi()
                .unwrap()
                .tilde_marginal()
                .unwrap()
                .sub(&pi)
                .unwrap()
                .op_norm();
            if d > 1e-10 {
                return Err(format!("TP map tilde-marginal deviates by {d:.3e}"));
            }
            let sub = random::cp_subnormalised(&mut r, lay("H", 3), lay("K", 4), 3).unwrap();
            let d2 = sub
                .to_choi()
                .unwrap()
                .tilde_marginal()
                .unwrap()
                .sub(&pi)
                .unwrap()
                .op_norm();
            if d2 < 1e-6 {
                return Err("subnormalised map has maximally mixed tilde-marginal".into());
            }
        }
        // product maps have product Choi operators (up to factor reordering)
        for _ in 0..5 {
            let m1 = random::cptp(&mut r, lay("H1", 2), lay("A1", 3), 2).unwrap();
            let m2 = random::cptp(&mut r, lay("H2", 3), lay("A2", 2), 2).unwrap();
            let joint = m1.tensor_maps(&m2).unwrap().to_choi().unwrap();
            let prod = m1
                .to_choi()
                .unwrap()
                .op()
                .kron(m2.to_choi().unwrap().op())
                .unwrap()
                .permute_systems(&["A1", "A2", "H1~", "H2~"])
                .unwrap();
            let d = joint.op().sub(&prod).unwrap().trace_norm();
            if d > 1e-10 {
                return Err(format!("product-Choi residual {d:.3e}"));
            }
        }
        // pure-state transfer: recovery map between equal-marginal states
        for seed in [801u64, 802, 803] {
            let d = schmidt_recovery_check(seed)?;
            if d > 1e-8 {
                return Err(format!("recovery residual {d:.3e}"));
            }
        }
        // unital + trace non-increasing ⇒ TP
        for _ in 0..5 {
            let m = random::cptp(&mut r, lay("H", 3), lay("K", 3), 3).unwrap();
            if m.is_unital().unwrap() && m.is_trace_nonincreasing() && !m.is_tp() {
                return Err("unital trace non-increasing map is not TP".into());
            }
        }
        // independence ⇒ vanishing conditional mutual information of the Choi
        for _ in 0..3 {
            let base = random::cptp(&mut r, lay("H", 2), lay("K", 2), 2).unwrap();
            let hi = SystemLayout::new(vec![("H", 2), ("Ix", 2)]).unwrap();
            let m = base
                .compose(&CpMap::trace_out(&hi, &["Ix"]).unwrap())
                .unwrap();
            let rho = m.to_choi().unwrap();
            let cmi = cond_mutual_info(
                rho.op(),
                &Partition {
                    a: vec!["K"],
                    b: vec!["Ix~"],
                    c: vec!["H~"],
                },
            )
            .unwrap();
            if cmi.abs() > 1e-9 {
                return Err(format!("independent-input Choi CMI {cmi:.3e}"));
            }
        }
        // scalar-valued CP maps are trace functionals of Σ E†E
        for _ in 0..3 {
            let m = random::cp_subnormalised(&mut r, lay("H", 4), lay("S", 1), 4).unwrap();
            let f = m.kraus_sum();
            let w = random::state(&mut r, lay("H", 4));
            let direct = m.apply(&w).unwrap().trace();
            let via = f.matmul(&w).unwrap().trace();
            if (direct - via).norm() > 1e-12 {
                return Err(format!(
                    "scalar map functional deviates by {:.3e}",
                    (direct - via).norm()
                ));
            }
        }
        // strong subadditivity on 500 random tripartite states
        let part = Partition {
            a: vec!["A"],
            b: vec!["B"],
            c: vec!["C"],
        };
        for dims in [(2usize, 2usize, 2usize), (2, 3, 4), (3, 2, 3), (2, 2, 4)] {
            for _ in 0..125 {
                let l =
                    SystemLayout::new(vec![("A", dims.0), ("B", dims.1), ("C", dims.2)]).unwrap();
                let rho = random::state(&mut r, l);
                let cmi = cond_mutual_info(&rho, &part).unwrap();
                if cmi < -1e-9 {
                    return Err(format!("strong subadditivity violated: {cmi:.3e}"));
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        if secs >= 120.0 {
            return Err(format!("took {secs:.1} s (limit 120 s)"));
        }
        Ok(format!(
            "round trips ≤ {worst_rt:.1e}, marginal/product/recovery/SSA checks green, {secs:.1} s"
        ))
    })();
    finish(8, "foundational suites", result);
}
