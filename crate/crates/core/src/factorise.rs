//! The factorisation pipeline for commuting quantum operations.
//!
//! Given `m: H → A⊗H` and `n: H → B` on a shared system `H = I⊗K⊗J`, the
//! pipeline checks three conditions (composition invariance, unitality of the
//! discarded branch, independence of the spectator inputs), extracts the
//! quantum Markov structure of the Choi operator of `n∘m`, and produces a
//! certificate: a splitting `K = ⊕_z C_A^z ⊗ C_B^z`, a doubling map
//! `D: K → K'⊗K''` that distributes `K` to both parties, and marginal maps
//! `m̄: I⊗K → A`, `n̄: K⊗J → B` with `n∘m = (m̄⊗n̄)∘D` up to a verified
//! trace-norm residual. The module also provides the converse construction
//! (assembling `m`, `n` from `m̄`, `n̄` and a splitting), identity checks for
//! the doubling map, and the extension to chains of more than two maps.

use std::fmt;

use crate::algebra::{markov_decomposition, BlockDecomposition};
use crate::cpmap::{CpMap, EPS_COND};
use crate::entropic::{cond_mutual_info, Partition, EPS_CMI};
use crate::error::{Error, Result};
use crate::tensor::{CMatrix, Operator, SystemLayout, C64};

/// Trace-norm tolerance on the final Choi comparison of a certificate.
pub const EPS_FACT: f64 = 1e-8;
/// Tolerance on the per-block weight law `w_z = dA_z·dB_z / d_K`.
pub const EPS_WEIGHT: f64 = 1e-9;
/// Trace-norm tolerance for the chained multi-map comparison, which
/// compounds one certificate residual per stage.
pub const EPS_FACT_MULTI: f64 = 1e-7;

/// Which form of the unitality condition gates the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// `tr_A∘m` must be unital.
    Strict,
    /// `tr_{A,I}∘m(π_I ⊗ id_{KJ}) = id_{KJ}` suffices; the pipeline then
    /// replaces `m` by `π_I∘tr_I∘m`, which leaves both `m̄` and `n∘m`
    /// unchanged.
    Weak,
}

/// A validated problem instance: `m: H → A⊗H` and `n: H → B` on
/// `H = I⊗K⊗J`.
#[derive(Clone, Debug)]
pub struct FactorisationInstance {
    m: CpMap,
    n: CpMap,
    i: String,
    k: String,
    j: String,
}

impl FactorisationInstance {
    pub fn new(
        m: CpMap,
        n: CpMap,
        i: impl Into<String>,
        k: impl Into<String>,
        j: impl Into<String>,
    ) -> Result<Self> {
        let (i, k, j) = (i.into(), k.into(), j.into());
        let h = m.in_layout();
        if n.in_layout() != h {
            return Err(Error::Layout("m and n must share their input layout".into()));
        }
        let labels: Vec<&str> = h.labels().collect();
        if labels != [i.as_str(), k.as_str(), j.as_str()] {
            return Err(Error::Layout(format!(
                "input layout must be ({i}, {k}, {j}) in order, got {labels:?}"
            )));
        }
        let out_len = m.out_layout().factors().len();
        if out_len < 3 || m.out_layout().find_contiguous(h) != Some(out_len - 3) {
            return Err(Error::Layout(
                "m's output must end with its input layout (m: H → A⊗H)".into(),
            ));
        }
        let a: Vec<&str> = m.out_layout().labels().take(out_len - 3).collect();
        let b: Vec<&str> = n.out_layout().labels().collect();
        for l in &b {
            if a.contains(l) {
                return Err(Error::Layout(format!("output label {l} used by both maps")));
            }
        }
        let tildes = [format!("{i}~"), format!("{k}~"), format!("{j}~")];
        for l in a.iter().chain(&b) {
            if tildes.iter().any(|t| t == l) {
                return Err(Error::Layout(format!(
                    "output label {l} collides with an input-copy label"
                )));
            }
        }
        Ok(FactorisationInstance { m, n, i, k, j })
    }

    pub fn m(&self) -> &CpMap {
        &self.m
    }

    pub fn n(&self) -> &CpMap {
        &self.n
    }

    pub fn i_label(&self) -> &str {
        &self.i
    }

    pub fn k_label(&self) -> &str {
        &self.k
    }

    pub fn j_label(&self) -> &str {
        &self.j
    }

    pub fn h_layout(&self) -> &SystemLayout {
        self.m.in_layout()
    }

    /// Labels of the `A` part of `m`'s output, in order.
    pub fn a_labels(&self) -> Vec<String> {
        let out = self.m.out_layout().factors();
        out[..out.len() - 3].iter().map(|(l, _)| l.clone()).collect()
    }
}

/// Residuals of the three factorisation conditions.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    /// `‖Choi(tr_A∘n∘m) − Choi(n)‖₁`.
    pub cond1_residual: f64,
    /// `‖(tr_A∘m)(id) − id‖`.
    pub cond2_unital_residual: f64,
    /// `max(λ_max(Σ E†E) − 1, 0)` of `tr_A∘m`.
    pub cond2_nonincreasing_margin: f64,
    /// `‖tr_{A,I}∘m(π_I ⊗ id_{KJ}) − id_{KJ}‖`.
    pub cond2_weak_unital_residual: f64,
    /// Choi distance of `tr_H∘m` to a map that only traces out `J`.
    pub cond3_m_residual: f64,
    /// Choi distance of `n` to a map that only traces out `I`.
    pub cond3_n_residual: f64,
    /// Dimension of `H`, used to scale the independence threshold.
    pub dim_h: usize,
}

impl ConditionReport {
    pub fn cond1_ok(&self) -> bool {
        self.cond1_residual <= EPS_COND
    }

    pub fn cond2_strict_ok(&self) -> bool {
        self.cond2_unital_residual <= EPS_COND && self.cond2_nonincreasing_margin <= EPS_COND
    }

    pub fn cond2_weak_ok(&self) -> bool {
        self.cond2_weak_unital_residual <= EPS_COND && self.cond2_nonincreasing_margin <= EPS_COND
    }

    pub fn cond3_ok(&self) -> bool {
        let tol = EPS_COND * self.dim_h as f64;
        self.cond3_m_residual <= tol && self.cond3_n_residual <= tol
    }

    pub fn passes(&self, mode: Mode) -> bool {
        let cond2 = match mode {
            Mode::Strict => self.cond2_strict_ok(),
            Mode::Weak => self.cond2_weak_ok(),
        };
        self.cond1_ok() && cond2 && self.cond3_ok()
    }

    /// Largest of the six residuals.
    pub fn worst(&self) -> f64 {
        [
            self.cond1_residual,
            self.cond2_unital_residual,
            self.cond2_nonincreasing_margin,
            self.cond2_weak_unital_residual,
            self.cond3_m_residual,
            self.cond3_n_residual,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "composition {:.3e}; unitality {:.3e} (weak {:.3e}, non-increasing margin {:.3e}); \
             independence m {:.3e}, n {:.3e}",
            self.cond1_residual,
            self.cond2_unital_residual,
            self.cond2_weak_unital_residual,
            self.cond2_nonincreasing_margin,
            self.cond3_m_residual,
            self.cond3_n_residual,
        )
    }
}

/// A verified factorisation: `n∘m = (m̄⊗n̄)∘d` up to `residual`.
#[derive(Clone, Debug)]
pub struct FactorisationCertificate {
    /// The splitting `K = ⊕_z C_A^z ⊗ C_B^z` on the original `K`.
    pub decomposition: BlockDecomposition,
    /// The doubling map `K → K'⊗K''`.
    pub d: CpMap,
    /// `I⊗K → A`.
    pub m_bar: CpMap,
    /// `K⊗J → B`.
    pub n_bar: CpMap,
    /// `‖Choi(n∘m) − Choi((m̄⊗n̄)∘d)‖₁`.
    pub residual: f64,
    /// Conditional mutual information (bits) of the Choi operator across
    /// `(A Ĩ : B J̃ : K̃)`; vanishes for factorisable instances.
    pub claim1_cmi: f64,
    /// Reconstructed weight of each block; equals `dA_z·dB_z / d_K`.
    pub block_weights: Vec<f64>,
}

// ---------------------------------------------------------------------------
// small map-surgery helpers

fn rename_inputs(map: &CpMap, f: &dyn Fn(&str) -> String) -> Result<CpMap> {
    let kraus = map
        .kraus()
        .iter()
        .map(|e| Operator::new(e.row_layout().clone(), e.col_layout().renamed(f), e.mat().clone()))
        .collect::<Result<_>>()?;
    CpMap::new(kraus)
}

fn rename_outputs(map: &CpMap, f: &dyn Fn(&str) -> String) -> Result<CpMap> {
    let kraus = map
        .kraus()
        .iter()
        .map(|e| Operator::new(e.row_layout().renamed(f), e.col_layout().clone(), e.mat().clone()))
        .collect::<Result<_>>()?;
    CpMap::new(kraus)
}

/// Reinterpret the input layout (same total dimension, same flat order).
fn with_in_layout(map: &CpMap, layout: SystemLayout) -> Result<CpMap> {
    if layout.total_dim() != map.in_layout().total_dim() {
        return Err(Error::Dimension("input reinterpretation changes dimension".into()));
    }
    let kraus = map
        .kraus()
        .iter()
        .map(|e| Operator::new(e.row_layout().clone(), layout.clone(), e.mat().clone()))
        .collect::<Result<_>>()?;
    CpMap::new(kraus)
}

/// The permutation channel reordering a layout's factors.
fn perm_map(layout: &SystemLayout, order: &[&str]) -> Result<CpMap> {
    CpMap::new(vec![Operator::identity(layout.clone()).permute_rows(order)?])
}

/// The channel replacing a single factor's state by the maximally mixed one.
fn depolarise(label: &str, dim: usize) -> Result<CpMap> {
    let l = SystemLayout::single(label.to_string(), dim)?;
    let amp = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let mut kraus = Vec::with_capacity(dim * dim);
    for a in 0..dim {
        for b in 0..dim {
            kraus.push(
                Operator::basis_ket(l.clone(), a)?
                    .matmul(&Operator::basis_bra(l.clone(), b)?)?
                    .scale(amp),
            );
        }
    }
    CpMap::new(kraus)
}

/// Kraus family preparing `π` on a fresh factor inserted between `pre` and
/// `post` of the predecessor's output.
fn insert_mixed(pre: &SystemLayout, label: &str, dim: usize, post: &SystemLayout) -> Result<CpMap> {
    let single = SystemLayout::single(label.to_string(), dim)?;
    let amp = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let mut kraus = Vec::with_capacity(dim);
    for t in 0..dim {
        kraus.push(
            Operator::identity(pre.clone())
                .kron(&Operator::basis_ket(single.clone(), t)?)?
                .kron(&Operator::identity(post.clone()))?
                .scale(amp),
        );
    }
    CpMap::new(kraus)
}

fn scale_map(map: &CpMap, factor: f64) -> Result<CpMap> {
    let s = C64::new(factor.sqrt(), 0.0);
    CpMap::new(map.kraus().iter().map(|e| e.scale(s)).collect())
}

// ---------------------------------------------------------------------------
// conditions

/// Evaluate all condition residuals; never fails on a valid instance.
pub fn check_conditions(inst: &FactorisationInstance) -> Result<ConditionReport> {
    let m = inst.m();
    let n = inst.n();
    let h = m.in_layout().clone();
    let a_labels = inst.a_labels();
    let a_refs: Vec<&str> = a_labels.iter().map(String::as_str).collect();

    let nm = n.compose(m)?;
    let tr_a_nm = CpMap::trace_out(nm.out_layout(), &a_refs)?.compose(&nm)?;
    let cond1_residual = tr_a_nm.to_choi()?.distance(&n.to_choi()?)?;

    let tr_a_m = CpMap::trace_out(m.out_layout(), &a_refs)?.compose(m)?;
    let cond2_unital_residual = tr_a_m.unital_residual()?;
    let cond2_nonincreasing_margin = tr_a_m.nonincreasing_residual();

    let pi_i = Operator::maximally_mixed(h.restrict(&[inst.i_label()])?);
    let kj = h.restrict(&[inst.k_label(), inst.j_label()])?;
    let id_kj = Operator::identity(kj);
    let probe = pi_i.kron(&id_kj)?;
    let mut ai_labels = a_refs.clone();
    ai_labels.push(inst.i_label());
    let cond2_weak_unital_residual = m
        .apply(&probe)?
        .partial_trace(&ai_labels)?
        .sub(&id_kj)?
        .op_norm();

    let h_labels: Vec<&str> = h.labels().collect();
    let tr_h_m = CpMap::trace_out(m.out_layout(), &h_labels)?.compose(m)?;
    let cond3_m_residual = tr_h_m.independence_residual(inst.j_label())?;
    let cond3_n_residual = n.independence_residual(inst.i_label())?;

    Ok(ConditionReport {
        cond1_residual,
        cond2_unital_residual,
        cond2_nonincreasing_margin,
        cond2_weak_unital_residual,
        cond3_m_residual,
        cond3_n_residual,
        dim_h: h.total_dim(),
    })
}

// ---------------------------------------------------------------------------
// doubling map

fn validate_decomposition(decomp: &BlockDecomposition) -> Result<()> {
    BlockDecomposition::new(decomp.ambient().clone(), decomp.blocks.clone()).map(|_| ())
}

/// The doubling map for a splitting, with explicit output factor labels.
/// Each block contributes Kraus terms that copy the classical block index to
/// both outputs, route the `C_A` part to the first output and the `C_B` part
/// to the second, and fill the complementary parts with maximally mixed
/// states.
fn doubling_with_labels(decomp: &BlockDecomposition, l1: &str, l2: &str) -> Result<CpMap> {
    validate_decomposition(decomp)?;
    let ambient = decomp.ambient().clone();
    let d = ambient.total_dim();
    let out = SystemLayout::new(vec![(l1.to_string(), d), (l2.to_string(), d)])?;
    let mut kraus = Vec::new();
    for block in &decomp.blocks {
        let (da, db) = (block.da, block.db);
        let u = block.isometry.mat();
        let norm = C64::new(1.0 / ((da * db) as f64).sqrt(), 0.0);
        for m in 0..db {
            for n in 0..da {
                let mut e = CMatrix::zeros(d * d, d);
                for a in 0..da {
                    for b in 0..db {
                        let cam = u.column(a * db + m);
                        let cnb = u.column(n * db + b);
                        let cab = u.column(a * db + b);
                        for r1 in 0..d {
                            let v1 = cam[r1];
                            if v1 == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for r2 in 0..d {
                                let v = v1 * cnb[r2] * norm;
                                if v == C64::new(0.0, 0.0) {
                                    continue;
                                }
                                for c in 0..d {
                                    e[(r1 * d + r2, c)] += v * cab[c].conj();
                                }
                            }
                        }
                    }
                }
                kraus.push(Operator::new(out.clone(), ambient.clone(), e)?);
            }
        }
    }
    CpMap::new(kraus)
}

/// The doubling map `D: K → K'⊗K''` of a splitting of `K`; trace preserving
/// by construction, with `Σ_z dA_z·dB_z` Kraus terms.
pub fn build_doubling_map(decomp: &BlockDecomposition) -> Result<CpMap> {
    let joined: String = decomp.ambient().labels().collect::<Vec<_>>().join("");
    doubling_with_labels(decomp, &format!("{joined}'"), &format!("{joined}''"))
}

/// Residuals of the two structural identities of a doubling map.
#[derive(Clone, Debug)]
pub struct DoublingReport {
    /// `‖Σ E†E − id‖`.
    pub tp_residual: f64,
    /// `‖(tr_{K'}∘D)(id) − id‖`.
    pub unital_residual: f64,
    /// Choi distance of `tr_{K̃'}∘D_{K''→K̃'K̃''}∘D_{K→K'K''}` to
    /// `D_{K→K'K̃''}` (doubling the second output again and discarding the
    /// fresh first copy reproduces the original doubling).
    pub iteration_residual: f64,
}

impl DoublingReport {
    pub fn ok(&self) -> bool {
        self.tp_residual <= 1e-10 && self.unital_residual <= 1e-10 && self.iteration_residual <= 1e-10
    }
}

/// Verify the structural identities of a doubling map against the splitting
/// it was built from.
pub fn verify_doubling_properties(d: &CpMap, decomp: &BlockDecomposition) -> Result<DoublingReport> {
    let out = d.out_layout().clone();
    if out.factors().len() != 2 || d.in_layout() != decomp.ambient() {
        return Err(Error::Layout(
            "expected a doubling map K → K'⊗K'' built from this splitting".into(),
        ));
    }
    let (l1, dim) = out.factors()[0].clone();
    let l2 = out.factors()[1].0.clone();
    let tp_residual = d.tp_residual();
    let unital_residual = CpMap::trace_out(&out, &[&l1])?.compose(d)?.unital_residual()?;

    let dec2 = decomp.with_ambient(SystemLayout::single(l2.clone(), dim)?)?;
    let t1 = format!("{l2}'");
    let t2 = format!("{l2}''");
    let d2 = doubling_with_labels(&dec2, &t1, &t2)?;
    let twice = d2.compose(d)?;
    let lhs = CpMap::trace_out(twice.out_layout(), &[&t1])?.compose(&twice)?;
    let rhs = doubling_with_labels(decomp, &l1, &t2)?;
    let iteration_residual = lhs.to_choi()?.distance(&rhs.to_choi()?)?;
    Ok(DoublingReport {
        tp_residual,
        unital_residual,
        iteration_residual,
    })
}

// ---------------------------------------------------------------------------
// the forward pipeline

/// Run the pipeline: gate on the conditions, extract the Markov structure of
/// the Choi operator, build the certificate and verify it.
pub fn factorise(
    inst: &FactorisationInstance,
    mode: Mode,
    seed: u64,
) -> Result<FactorisationCertificate> {
    factorise_impl(inst, mode, seed, false)
}

/// Like [`factorise`] but skips the condition gate; on instances violating
/// the conditions this typically fails with a nonzero conditional mutual
/// information.
pub fn factorise_forced(
    inst: &FactorisationInstance,
    mode: Mode,
    seed: u64,
) -> Result<FactorisationCertificate> {
    factorise_impl(inst, mode, seed, true)
}

fn factorise_impl(
    inst: &FactorisationInstance,
    mode: Mode,
    seed: u64,
    force: bool,
) -> Result<FactorisationCertificate> {
    let report = check_conditions(inst)?;
    if !force && !report.passes(mode) {
        return Err(Error::Condition(Box::new(report)));
    }
    let h = inst.h_layout().clone();
    let (i, k, j) = (inst.i_label(), inst.k_label(), inst.j_label());
    let d_i = h.dim_of(i).unwrap();
    let d_j = h.dim_of(j).unwrap();
    let d_k = h.dim_of(k).unwrap();

    let m_eff = match mode {
        Mode::Strict => inst.m().clone(),
        Mode::Weak => depolarise(i, d_i)?.compose(inst.m())?,
    };
    let (n1, lambda) = inst.n().rescale_to_nonincreasing();
    let (n_eff, completed) = if n1.is_tp() {
        (n1, false)
    } else {
        (n1.tp_completion()?, true)
    };

    let nm = n_eff.compose(&m_eff)?;
    let choi = nm.to_choi()?;
    let trace = choi.op().trace().re;
    let rho = choi.op().scale(C64::new(1.0 / trace, 0.0));

    let it = format!("{i}~");
    let kt = format!("{k}~");
    let jt = format!("{j}~");
    let a_labels = inst.a_labels();
    let mut slot_a: Vec<&str> = a_labels.iter().map(String::as_str).collect();
    slot_a.push(&it);
    let b_layout_eff = n_eff.out_layout().clone();
    let mut slot_b: Vec<&str> = b_layout_eff.labels().collect();
    slot_b.push(&jt);
    let part = Partition {
        a: slot_a,
        b: slot_b,
        c: vec![&kt],
    };
    let claim1_cmi = cond_mutual_info(&rho, &part)?;
    if claim1_cmi > EPS_CMI {
        return Err(Error::FactorisationImpossible { cmi: claim1_cmi });
    }
    let ms = markov_decomposition(&rho, &part, seed).map_err(|e| match e {
        Error::NotMarkov { cmi } => Error::FactorisationImpossible { cmi },
        other => other,
    })?;

    // weight law: every block must carry weight dA·dB / d_K
    let n_blocks = ms.decomposition.blocks.len();
    let mut block_weights = vec![0.0f64; n_blocks];
    for (pos, &z) in ms.block_indices.iter().enumerate() {
        block_weights[z] = ms.weights[pos];
    }
    let mut weight_dev = 0.0f64;
    for (z, block) in ms.decomposition.blocks.iter().enumerate() {
        let expect = (block.da * block.db) as f64 / d_k as f64;
        weight_dev = weight_dev.max((block_weights[z] - expect).abs());
    }
    if weight_dev > EPS_WEIGHT {
        return Err(Error::Certificate {
            residual: weight_dev,
            tol: EPS_WEIGHT,
        });
    }

    // transport the splitting from the input copy back to K and build D
    let decomposition = ms
        .decomposition
        .conjugated()
        .with_ambient(SystemLayout::single(k.to_string(), d_k)?)?;
    let kp = format!("{k}'");
    let kpp = format!("{k}''");
    let d_map = doubling_with_labels(&decomposition, &kp, &kpp)?;

    // marginal maps (from the original m and n)
    let h_labels: Vec<&str> = h.labels().collect();
    let tr_h_m = CpMap::trace_out(inst.m().out_layout(), &h_labels)?.compose(inst.m())?;
    let m_bar = tr_h_m.marginal_map(j)?.reduced()?;
    let mut n_bar = n_eff.marginal_map(i)?.reduced()?;
    if completed {
        let b_layout = inst.n().out_layout().clone();
        let d_b = b_layout.total_dim();
        let mut p = CMatrix::zeros(d_b, d_b + 1);
        for x in 0..d_b {
            p[(x, x)] = C64::new(1.0, 0.0);
        }
        let proj = Operator::new(b_layout, b_layout_eff.clone(), p)?;
        n_bar = CpMap::new(vec![proj])?.compose(&n_bar)?;
    }
    if (lambda - 1.0).abs() > 0.0 {
        n_bar = scale_map(&n_bar, lambda)?;
    }
    n_bar = n_bar.reduced()?;

    // verify n∘m = (m̄⊗n̄)∘D on the original maps
    let d_ext = CpMap::identity(SystemLayout::single(i.to_string(), d_i)?)
        .tensor_maps(&d_map)?
        .tensor_maps(&CpMap::identity(SystemLayout::single(j.to_string(), d_j)?))?;
    let m_bar_r = rename_inputs(&m_bar, &|l| if l == k { kp.clone() } else { l.to_string() })?;
    let n_bar_r = rename_inputs(&n_bar, &|l| if l == k { kpp.clone() } else { l.to_string() })?;
    let composite = n_bar_r.compose(&m_bar_r.compose(&d_ext)?)?;
    let lhs = inst.n().compose(inst.m())?;
    let residual = lhs.to_choi()?.distance(&composite.to_choi()?)?;
    if residual > EPS_FACT {
        return Err(Error::Certificate {
            residual,
            tol: EPS_FACT,
        });
    }

    Ok(FactorisationCertificate {
        decomposition,
        d: d_map,
        m_bar,
        n_bar,
        residual,
        claim1_cmi,
        block_weights,
    })
}

// ---------------------------------------------------------------------------
// converse construction

/// Assemble `(m, n)` from marginal maps and a splitting: `m` applies the
/// doubling map to `K`, feeds `I` and the first copy to `a`, and refills `I`
/// with the maximally mixed state; `n` discards `I`, doubles `K`, feeds the
/// second copy and `J` to `b`, and discards the first copy. The result
/// satisfies all factorisation conditions.
pub fn converse_construct(
    a: &CpMap,
    b: &CpMap,
    decomp: &BlockDecomposition,
) -> Result<FactorisationInstance> {
    if !a.is_tp() {
        return Err(Error::Precondition(
            "the first marginal map must be trace preserving".into(),
        ));
    }
    let af = a.in_layout().factors();
    if af.len() != 2 {
        return Err(Error::Layout("first map must take I⊗K (two factors)".into()));
    }
    let (i, d_i) = af[0].clone();
    let (k, d_k) = af[1].clone();
    let bf = b.in_layout().factors();
    if bf.len() != 2 || bf[0].0 != k || bf[0].1 != d_k {
        return Err(Error::Layout(
            "second map must take K⊗J with the same K factor".into(),
        ));
    }
    let (j, d_j) = bf[1].clone();
    if decomp.ambient().total_dim() != d_k {
        return Err(Error::Dimension(
            "splitting dimension does not match the K factor".into(),
        ));
    }
    let dec = decomp.with_ambient(SystemLayout::single(k.clone(), d_k)?)?;
    let kp = format!("{k}'");
    let kpp = format!("{k}''");
    let d_map = doubling_with_labels(&dec, &kp, &kpp)?;
    let h = SystemLayout::new(vec![(i.clone(), d_i), (k.clone(), d_k), (j.clone(), d_j)])?;

    // m = (refill π_I) ∘ a ∘ D, with the second copy becoming the new K
    let d_ext = CpMap::identity(SystemLayout::single(i.clone(), d_i)?)
        .tensor_maps(&d_map)?
        .tensor_maps(&CpMap::identity(SystemLayout::single(j.clone(), d_j)?))?;
    let a_r = rename_inputs(a, &|l| if l == k { kp.clone() } else { l.to_string() })?;
    let step = a_r.compose(&d_ext)?; // out: (A…, K'', J)
    let rest = SystemLayout::new(vec![(kpp.clone(), d_k), (j.clone(), d_j)])?;
    let refill = insert_mixed(a.out_layout(), &i, d_i, &rest)?;
    let m0 = refill.compose(&step)?;
    let m = rename_outputs(&m0, &|l| if l == kpp { k.clone() } else { l.to_string() })?
        .reduced()?;

    // n = tr_{K'} ∘ b ∘ D ∘ tr_I
    let tr_i = CpMap::trace_out(&h, &[&i])?;
    let doubled = d_map.compose(&tr_i)?; // out: (K', K'', J)
    let b_r = rename_inputs(b, &|l| if l == k { kpp.clone() } else { l.to_string() })?;
    let nb = b_r.compose(&doubled)?; // out: (K', B…)
    let n = CpMap::trace_out(nb.out_layout(), &[&kp])?.compose(&nb)?.reduced()?;

    FactorisationInstance::new(m, n, i, k, j)
}

// ---------------------------------------------------------------------------
// multi-map extension

/// A verified factorisation of a chain of maps `M_t: I_t⊗K → A_t⊗K`.
#[derive(Clone, Debug)]
pub struct MultiFactorisation {
    /// `K → K₁⊗…⊗K_s` distributing `K` to every stage.
    pub d: CpMap,
    /// `tr_K∘M_t : I_t⊗K → A_t` per stage.
    pub marginals: Vec<CpMap>,
    /// The per-stage doubling maps whose composition is `d`.
    pub stage_maps: Vec<CpMap>,
    /// `‖Choi(tr_K∘M_s∘…∘M_1) − Choi((m̄_1⊗…⊗m̄_s)∘d)‖₁`.
    pub residual: f64,
}

/// Compose the stages in order on the joint input `(I_a, …, I_b, K)` and
/// trace out `K` at the end.
fn chain_maps(maps: &[CpMap], k: &str) -> Result<CpMap> {
    let d_k = maps[0].in_layout().dim_of(k).unwrap();
    let mut factors: Vec<(String, usize)> = maps
        .iter()
        .map(|m| m.in_layout().factors()[0].clone())
        .collect();
    factors.push((k.to_string(), d_k));
    let input = SystemLayout::new(factors)?;
    let mut cur: Option<CpMap> = None;
    let mut layout = input;
    for m in maps {
        let i_u = m.in_layout().factors()[0].0.clone();
        let mut order: Vec<&str> = layout
            .labels()
            .filter(|l| *l != i_u.as_str() && *l != k)
            .collect();
        order.push(&i_u);
        order.push(k);
        let p = perm_map(&layout, &order)?;
        cur = Some(match cur {
            None => m.compose(&p)?,
            Some(c) => m.compose(&p.compose(&c)?)?,
        });
        layout = cur.as_ref().unwrap().out_layout().clone();
    }
    let cur = cur.expect("at least one stage");
    CpMap::trace_out(&layout, &[k])?.compose(&cur)
}

/// Factorise a chain of maps that share `K`: checks the per-stage unitality
/// and no-signalling conditions, runs the two-map pipeline once per cut, and
/// assembles the distributing map `d` and the marginals.
pub fn multi_factorise(maps: &[CpMap], seed: u64) -> Result<MultiFactorisation> {
    let s = maps.len();
    if s < 2 {
        return Err(Error::Precondition("need at least two maps".into()));
    }
    let first = maps[0].in_layout().factors();
    if first.len() != 2 {
        return Err(Error::Layout("each map must take I_t⊗K (two factors)".into()));
    }
    let (k, d_k) = first[1].clone();
    let mut i_labels = Vec::with_capacity(s);
    let mut a_label_sets: Vec<Vec<String>> = Vec::with_capacity(s);
    for (t, m) in maps.iter().enumerate() {
        let inf = m.in_layout().factors();
        if inf.len() != 2 || inf[1].0 != k || inf[1].1 != d_k {
            return Err(Error::Layout(format!(
                "stage {} input must be (I, {k}) with dim({k}) = {d_k}",
                t + 1
            )));
        }
        let outf = m.out_layout().factors();
        let last = outf.last().unwrap();
        if last.0 != k || last.1 != d_k {
            return Err(Error::Layout(format!(
                "stage {} output must end with the {k} factor",
                t + 1
            )));
        }
        if !m.is_tp() {
            return Err(Error::Precondition(format!(
                "stage {} map is not trace preserving",
                t + 1
            )));
        }
        i_labels.push(inf[0].0.clone());
        a_label_sets.push(outf[..outf.len() - 1].iter().map(|(l, _)| l.clone()).collect());
    }

    // per-stage unitality of tr_{A_t}∘π_{I_t}∘M_t
    for (t, m) in maps.iter().enumerate() {
        let marg = m.marginal_map(&i_labels[t])?;
        let a_refs: Vec<&str> = a_label_sets[t].iter().map(String::as_str).collect();
        let u = CpMap::trace_out(marg.out_layout(), &a_refs)?.compose(&marg)?;
        let r = u.unital_residual()?;
        if r > EPS_COND {
            return Err(Error::MultiCondition {
                stage: t + 1,
                residual: r,
            });
        }
    }

    // no-signalling chain condition at every cut
    let full = chain_maps(maps, &k)?;
    let full_choi = full.to_choi()?;
    let input = full.in_layout().clone();
    for t in 1..s {
        let a_pre: Vec<&str> = a_label_sets[..t]
            .iter()
            .flatten()
            .map(String::as_str)
            .collect();
        let lhs = CpMap::trace_out(full.out_layout(), &a_pre)?.compose(&full)?;
        let i_pre: Vec<&str> = i_labels[..t].iter().map(String::as_str).collect();
        let tr_pre = CpMap::trace_out(&input, &i_pre)?;
        let rhs = chain_maps(&maps[t..], &k)?.compose(&tr_pre)?;
        let r = lhs.to_choi()?.distance(&rhs.to_choi()?)?;
        if r > EPS_COND {
            return Err(Error::MultiCondition {
                stage: t,
                residual: r,
            });
        }
    }

    // one two-map factorisation per cut
    let j_flat = "J·";
    let mut stage_maps = Vec::with_capacity(s - 1);
    for t in 0..s - 1 {
        let d_i = maps[t].in_layout().factors()[0].1;
        let d_j: usize = maps[t + 1..]
            .iter()
            .map(|m| m.in_layout().factors()[0].1)
            .product();
        // m^(t): apply M_t, refill I_t with π, identity on the later inputs
        let base = maps[t].tensor_maps(&CpMap::identity(SystemLayout::single(j_flat, d_j)?))?;
        let a_refs: Vec<&str> = a_label_sets[t].iter().map(String::as_str).collect();
        let a_layout = maps[t].out_layout().restrict(&a_refs)?;
        let rest = SystemLayout::new(vec![(k.clone(), d_k), (j_flat.to_string(), d_j)])?;
        let m_inst = insert_mixed(&a_layout, &i_labels[t], d_i, &rest)?
            .compose(&base)?
            .reduced()?;
        // n^(t): discard I_t, run the remaining stages, trace K
        let mut unflat: Vec<(String, usize)> = vec![
            (i_labels[t].clone(), d_i),
            (k.clone(), d_k),
        ];
        for m in &maps[t + 1..] {
            unflat.push(m.in_layout().factors()[0].clone());
        }
        let l_unflat = SystemLayout::new(unflat)?;
        let tr_it = CpMap::trace_out(&l_unflat, &[&i_labels[t]])?;
        let mut order: Vec<&str> = i_labels[t + 1..].iter().map(String::as_str).collect();
        order.push(&k);
        let p = perm_map(tr_it.out_layout(), &order)?;
        let n_unflat = chain_maps(&maps[t + 1..], &k)?.compose(&p.compose(&tr_it)?)?;
        let h_flat = SystemLayout::new(vec![
            (i_labels[t].clone(), d_i),
            (k.clone(), d_k),
            (j_flat.to_string(), d_j),
        ])?;
        let n_inst = with_in_layout(&n_unflat, h_flat)?.reduced()?;
        let inst = FactorisationInstance::new(m_inst, n_inst, i_labels[t].clone(), k.clone(), j_flat)?;
        let cert = factorise(&inst, Mode::Strict, seed).map_err(|e| match e {
            Error::Condition(rep) => Error::MultiCondition {
                stage: t + 1,
                residual: rep.worst(),
            },
            other => other,
        })?;
        stage_maps.push(cert.d);
    }

    // d = (id⊗…⊗d_{s-1}) ∘ … ∘ d_1, output labels K1…Ks
    let kp = format!("{k}'");
    let kpp = format!("{k}''");
    let mut d_total: Option<CpMap> = None;
    for (t, d_t) in stage_maps.iter().enumerate() {
        let lt = format!("{k}{}", t + 1);
        let second = if t == s - 2 {
            format!("{k}{s}")
        } else {
            k.clone()
        };
        let renamed = rename_outputs(d_t, &|l| {
            if l == kp {
                lt.clone()
            } else if l == kpp {
                second.clone()
            } else {
                l.to_string()
            }
        })?;
        d_total = Some(match d_total {
            None => renamed,
            Some(c) => renamed.compose(&c)?,
        });
    }
    let d_total = d_total.expect("s ≥ 2");

    let marginals: Vec<CpMap> = maps
        .iter()
        .map(|m| {
            CpMap::trace_out(m.out_layout(), &[&k])?
                .compose(m)?
                .reduced()
        })
        .collect::<Result<_>>()?;

    // verify the chained identity
    let i_refs: Vec<&str> = i_labels.iter().map(String::as_str).collect();
    let i_layout = input.restrict(&i_refs)?;
    let mut cur = CpMap::identity(i_layout).tensor_maps(&d_total)?;
    for t in 0..s {
        let lt = format!("{k}{}", t + 1);
        let layout = cur.out_layout().clone();
        let mut order: Vec<&str> = layout
            .labels()
            .filter(|l| *l != i_labels[t].as_str() && *l != lt.as_str())
            .collect();
        order.push(&i_labels[t]);
        order.push(&lt);
        let p = perm_map(&layout, &order)?;
        let mt = rename_inputs(&marginals[t], &|l| {
            if l == k {
                lt.clone()
            } else {
                l.to_string()
            }
        })?;
        cur = mt.compose(&p.compose(&cur)?)?;
    }
    let residual = full_choi.distance(&cur.to_choi()?)?;
    if residual > EPS_FACT_MULTI {
        return Err(Error::Certificate {
            residual,
            tol: EPS_FACT_MULTI,
        });
    }

    Ok(MultiFactorisation {
        d: d_total,
        marginals,
        stage_maps,
        residual,
    })
}
