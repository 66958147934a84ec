//! The PR-box counterexample: the unitality condition is necessary.
//!
//! Two classical maps on `H = I⊗K⊗J` with bits `i, j` and
//! `k ∈ {0,1}² ∪ {⊥}` are defined so that on input `k = ⊥` their outputs
//! realise a Popescu–Rohrlich box: `a ⊕ b = i·j` with certainty. The pair
//! satisfies the composition-invariance and independence conditions of the
//! factorisation pipeline but violates unitality (the output `k` is never
//! `⊥`), and indeed no factorisation through a shared `K` distribution
//! exists — the CHSH winning probability 1 would exceed both the classical
//! bound 3/4 and the quantum bound cos²(π/8).

use crate::cpmap::CpMap;
use crate::error::{Error, Result};
use crate::factorise::{
    check_conditions, factorise_forced, ConditionReport, FactorisationInstance, Mode,
};
use crate::tensor::{CMatrix, Operator, SystemLayout, C64};

/// Dimension of the classical `K` register: the four values `(k₁, k₂)`
/// followed by `⊥`.
pub const DIM_K: usize = 5;
const PERP: usize = 4;

/// A conditional distribution `p(a, b | i, j)` over bits.
#[derive(Clone, Debug, PartialEq)]
pub struct Behavior {
    /// Indexed `p[i][j][a][b]`.
    p: [[[[f64; 2]; 2]; 2]; 2],
}

impl Behavior {
    pub fn new(p: [[[[f64; 2]; 2]; 2]; 2]) -> Result<Self> {
        for (i, pi) in p.iter().enumerate() {
            for (j, pij) in pi.iter().enumerate() {
                let mut total = 0.0;
                for row in pij {
                    for &v in row {
                        if v < -1e-12 {
                            return Err(Error::State(format!(
                                "negative probability {v:.3e} at inputs ({i}, {j})"
                            )));
                        }
                        total += v;
                    }
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::State(format!(
                        "outputs for inputs ({i}, {j}) sum to {total}"
                    )));
                }
            }
        }
        Ok(Behavior { p })
    }

    pub fn prob(&self, a: usize, b: usize, i: usize, j: usize) -> f64 {
        self.p[i][j][a][b]
    }

    /// Convex mixture `λ·self + (1−λ)·other`.
    pub fn mix(&self, other: &Behavior, lambda: f64) -> Result<Behavior> {
        let mut p = self.p;
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        p[i][j][a][b] =
                            lambda * self.p[i][j][a][b] + (1.0 - lambda) * other.p[i][j][a][b];
                    }
                }
            }
        }
        Behavior::new(p)
    }

    /// Outputs uniformly random and independent of everything.
    pub fn uniform() -> Behavior {
        Behavior {
            p: [[[[0.25; 2]; 2]; 2]; 2],
        }
    }
}

/// The ideal box: `p(a, b | i, j) = 1/2` when `a ⊕ b = i·j` and `0`
/// otherwise. It wins the CHSH game with certainty.
pub fn pr_behavior() -> Behavior {
    let mut p = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    if a ^ b == i & j {
                        p[i][j][a][b] = 0.5;
                    }
                }
            }
        }
    }
    Behavior { p }
}

/// CHSH winning probability `(1/4) Σ_{i,j} Σ_{a⊕b = i·j} p(a, b | i, j)`
/// under uniformly random inputs.
pub fn chsh_win_prob(behavior: &Behavior) -> f64 {
    let mut w = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    if a ^ b == i & j {
                        w += behavior.prob(a, b, i, j);
                    }
                }
            }
        }
    }
    w / 4.0
}

/// Best CHSH winning probability over the 16 deterministic local strategies.
pub fn classical_chsh_max() -> f64 {
    let mut best: f64 = 0.0;
    for fa in 0..4usize {
        for fb in 0..4usize {
            // strategy bits: output for input 0 and input 1
            let f = |s: usize, inp: usize| (s >> inp) & 1;
            let mut w = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    if f(fa, i) ^ f(fb, j) == i & j {
                        w += 0.25;
                    }
                }
            }
            best = best.max(w);
        }
    }
    best
}

/// The quantum (Tsirelson) bound `cos²(π/8)` on the CHSH winning
/// probability.
pub fn tsirelson_chsh_bound() -> f64 {
    let c = (std::f64::consts::PI / 8.0).cos();
    c * c
}

fn h_layout() -> SystemLayout {
    SystemLayout::new(vec![("I", 2), ("K", DIM_K), ("J", 2)]).unwrap()
}

fn h_index(i: usize, k: usize, j: usize) -> usize {
    (i * DIM_K + k) * 2 + j
}

/// Build one of the two classical maps. Each deterministic transition gets
/// its own computational-basis Kraus operator `|out⟩⟨in|`; the `⊥` inputs
/// branch into the two values of the fresh random bit with weight `1/√2`.
/// `first_party` selects the map that reads `i` (outputs into `A`) versus
/// the one that reads `j` (outputs into `B`).
fn pr_map(first_party: bool) -> CpMap {
    let h = h_layout();
    let out_label = if first_party { "A" } else { "B" };
    let ol = SystemLayout::single(out_label, 2).unwrap();
    let out_layout = ol.concat(&h).unwrap();
    let d_h = h.total_dim();
    let half = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let one = C64::new(1.0, 0.0);
    let mut kraus = Vec::new();
    let mut push = |out_bit: usize, i: usize, k: usize, j: usize, col: usize, w: C64| {
        let mut m = CMatrix::zeros(2 * d_h, d_h);
        m[(out_bit * d_h + h_index(i, k, j), col)] = w;
        kraus.push(Operator::new(out_layout.clone(), h.clone(), m).unwrap());
    };
    for i in 0..2 {
        for j in 0..2 {
            let own = if first_party { i } else { j };
            for k in 0..4 {
                let (k1, k2) = (k >> 1, k & 1);
                let out_bit = k1 ^ (own & k2);
                push(out_bit, i, k, j, h_index(i, k, j), one);
            }
            for r in 0..2 {
                push(r, i, 2 * r + own, j, h_index(i, PERP, j), half);
            }
        }
    }
    CpMap::new(kraus).unwrap()
}

/// The PR-box instance: `m` is the first party's map (output `A` kept along
/// with `H`), `n` is the second party's map with `H` traced out.
pub fn build_pr_maps() -> Result<FactorisationInstance> {
    let m = pr_map(true);
    let y = pr_map(false);
    let h_labels: Vec<&str> = y.in_layout().labels().collect();
    let n = CpMap::trace_out(y.out_layout(), &h_labels)?
        .compose(&y)?
        .reduced()?;
    FactorisationInstance::new(m, n, "I", "K", "J")
}

/// The behavior `p(a, b | i, j)` of the composed maps on input `k`.
pub fn behavior_on_k(inst: &FactorisationInstance, k: usize) -> Result<Behavior> {
    let h = inst.h_layout().clone();
    let composed = inst.n().compose(inst.m())?;
    let mut p = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut input = CMatrix::zeros(h.total_dim(), h.total_dim());
            let idx = h_index(i, k, j);
            input[(idx, idx)] = C64::new(1.0, 0.0);
            let state = Operator::square(h.clone(), input)?;
            let out = composed.apply(&state)?;
            // output layout (A, B): read the diagonal
            for a in 0..2 {
                for b in 0..2 {
                    p[i][j][a][b] = out.mat()[(a * 2 + b, a * 2 + b)].re;
                }
            }
        }
    }
    Behavior::new(p)
}

/// Everything the counterexample demonstrates, in one record.
#[derive(Clone, Debug)]
pub struct NecessityReport {
    /// Condition residuals of the PR instance: composition invariance and
    /// independence pass, unitality fails.
    pub conditions: ConditionReport,
    /// Conditional mutual information (bits) of the composed Choi operator;
    /// strictly positive, so no factorisation exists even when forced.
    pub cmi: f64,
    /// CHSH winning probability of the behavior on `k = ⊥` (equals 1).
    pub pr_win_prob: f64,
    /// Best deterministic local strategy (3/4).
    pub classical_max: f64,
    /// Quantum bound `cos²(π/8) ≈ 0.8536` for context.
    pub quantum_bound: f64,
}

/// Run the counterexample end to end: check that exactly the unitality
/// condition fails, that the forced pipeline aborts with a strictly positive
/// conditional mutual information, and quote the CHSH context values.
pub fn demonstrate_necessity() -> Result<NecessityReport> {
    let inst = build_pr_maps()?;
    let conditions = check_conditions(&inst)?;
    if !conditions.cond1_ok() || !conditions.cond3_ok() {
        return Err(Error::Precondition(
            "PR instance unexpectedly fails a condition other than unitality".into(),
        ));
    }
    if conditions.cond2_strict_ok() {
        return Err(Error::Precondition(
            "PR instance unexpectedly satisfies unitality".into(),
        ));
    }
    let cmi = match factorise_forced(&inst, Mode::Strict, 0) {
        Err(Error::FactorisationImpossible { cmi }) => cmi,
        Ok(_) => {
            return Err(Error::Precondition(
                "PR instance unexpectedly factorised".into(),
            ))
        }
        Err(e) => return Err(e),
    };
    // the simulated behavior matches the ideal one up to floating-point
    // dust from the 1/√2 amplitudes; report the ideal winning probability
    let simulated = behavior_on_k(&inst, PERP)?;
    let ideal = pr_behavior();
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    if (simulated.prob(a, b, i, j) - ideal.prob(a, b, i, j)).abs() > 1e-12 {
                        return Err(Error::Precondition(
                            "simulated behavior deviates from the ideal PR box".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(NecessityReport {
        conditions,
        cmi,
        pr_win_prob: chsh_win_prob(&ideal),
        classical_max: classical_chsh_max(),
        quantum_bound: tsirelson_chsh_bound(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropic::EPS_CMI;
    use crate::factorise::factorise;

    #[test]
    fn maps_are_tp() {
        assert!(pr_map(true).is_tp());
        assert!(pr_map(false).is_tp());
        let inst = build_pr_maps().unwrap();
        assert!(inst.m().is_tp() && inst.n().is_tp());
    }

    #[test]
    fn pr_behavior_wins_chsh_with_certainty() {
        let inst = build_pr_maps().unwrap();
        let b = behavior_on_k(&inst, PERP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for bb in 0..2 {
                        let expect = if a ^ bb == i & j { 0.5 } else { 0.0 };
                        assert!((b.prob(a, bb, i, j) - expect).abs() < 1e-12);
                    }
                }
            }
        }
        assert!((chsh_win_prob(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditions_pass_except_unitality() {
        let inst = build_pr_maps().unwrap();
        let rep = check_conditions(&inst).unwrap();
        assert!(rep.cond1_residual <= 1e-12, "cond1 {rep}");
        assert!(rep.cond3_ok(), "cond3 {rep}");
        assert!(rep.cond2_unital_residual >= 0.2, "cond2 {rep}");
        assert!(!rep.cond2_weak_ok());
        match factorise(&inst, Mode::Strict, 0) {
            Err(Error::Condition(r)) => assert!(!r.cond2_strict_ok()),
            other => panic!("expected a unitality failure, got {other:?}"),
        }
    }

    #[test]
    fn forced_pipeline_hits_positive_cmi() {
        let inst = build_pr_maps().unwrap();
        match factorise_forced(&inst, Mode::Strict, 0) {
            Err(Error::FactorisationImpossible { cmi }) => {
                assert!(cmi >= 0.1, "cmi {cmi}");
            }
            other => panic!("expected FactorisationImpossible, got {other:?}"),
        }
    }

    #[test]
    fn necessity_report() {
        let rep = demonstrate_necessity().unwrap();
        assert!(rep.cmi >= 0.1);
        assert!((rep.pr_win_prob - 1.0).abs() < 1e-12);
        assert!((rep.classical_max - 0.75).abs() < 1e-15);
        assert!((rep.quantum_bound - 0.8535533905932737).abs() < 1e-12);
        assert!(rep.cmi > EPS_CMI);
    }

    #[test]
    fn chsh_score_examples_and_affinity() {
        assert!((chsh_win_prob(&Behavior::uniform()) - 0.5).abs() < 1e-15);
        assert!((classical_chsh_max() - 0.75).abs() < 1e-15);
        let inst = build_pr_maps().unwrap();
        let pr = behavior_on_k(&inst, PERP).unwrap();
        for lambda in [0.0, 0.25, 0.5, 0.9] {
            let mixed = pr.mix(&Behavior::uniform(), lambda).unwrap();
            let expect = lambda * 1.0 + (1.0 - lambda) * 0.5;
            assert!((chsh_win_prob(&mixed) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn both_orders_give_identical_behavior() {
        // composition invariance holds exactly: tr_A∘N∘M equals N on the
        // Choi level (already asserted via cond1), and the behaviors on
        // every classical input agree between the two orders
        let x = pr_map(true);
        let y = pr_map(false);
        let h = x.in_layout().clone();
        let h_labels: Vec<&str> = h.labels().collect();
        let yx = y.compose(&x).unwrap();
        let xy = x.compose(&y).unwrap();
        let tr_yx = CpMap::trace_out(yx.out_layout(), &h_labels)
            .unwrap()
            .compose(&yx)
            .unwrap();
        let tr_xy = CpMap::trace_out(xy.out_layout(), &h_labels)
            .unwrap()
            .compose(&xy)
            .unwrap();
        let flip = CpMap::new(vec![Operator::identity(tr_xy.out_layout().clone())
            .permute_rows(&["A", "B"])
            .unwrap()])
        .unwrap();
        let d = tr_yx
            .to_choi()
            .unwrap()
            .distance(&flip.compose(&tr_xy).unwrap().to_choi().unwrap())
            .unwrap();
        assert!(d < 1e-12, "order residual {d}");
    }
}
