//! Factorisation of commuting measurement-operator families.
//!
//! Two finite families of positive operators `X[i][α]`, `Y[j][β]` on a
//! common space `K` that commute pairwise (or satisfy the weaker averaged
//! condition `Σ_α √X Y √X = Y`) can be represented isometrically on a tensor
//! product: there is an isometry `v: K → K_A⊗K_B` and Hermitian families
//! `Ā[i][α]` on `K_A`, `B̄[j][β]` on `K_B` with
//! `X[i][α] = v†(Ā[i][α]⊗id)v` and `Y[j][β] = v†(id⊗B̄[j][β])v`.
//!
//! The construction lifts both families to classically-indexed instruments
//! on `I⊗K⊗J`, runs the factorisation pipeline of [`crate::factorise`], reads
//! the Hermitian operators off the marginal maps, and Stinespring-dilates the
//! doubling map to obtain `v`; the dilation environment is absorbed into
//! `K_B`.

use crate::cpmap::{CpMap, EPS_COND};
use crate::error::{Error, Result};
use crate::factorise::{check_conditions, factorise, FactorisationInstance, Mode, EPS_FACT};
use crate::tensor::{CMatrix, Operator, SystemLayout, C64};

/// PSD and completeness tolerance on family operators.
pub const EPS_FAMILY: f64 = 1e-10;
/// Tolerance on `Σ Ā = id` in the output representation.
pub const EPS_OUTPUT_COMPLETE: f64 = 1e-9;

/// Which commutation condition gates [`factorise_observables`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableMode {
    /// `[X[i][α], Y[j][β]] = 0` for every pair.
    Strict,
    /// `Σ_α √X[i][α] · Y[j][β] · √X[i][α] = Y[j][β]` for all `i, j, β`.
    Weak,
}

/// A finite family of PSD operators `X[i][α]` on `K` with
/// `Σ_α X[i][α] = id` for every setting `i`.
#[derive(Clone, Debug)]
pub struct MeasurementFamily {
    layout: SystemLayout,
    operators: Vec<Vec<Operator>>,
}

fn min_eigenvalue(op: &Operator) -> Result<f64> {
    let eig = op.herm_eig()?;
    Ok(eig.values.last().copied().unwrap_or(0.0))
}

impl MeasurementFamily {
    /// Validate a complete family: every operator PSD and every setting
    /// summing to the identity, both within `1e-10`.
    pub fn new(layout: SystemLayout, operators: Vec<Vec<Operator>>) -> Result<Self> {
        if operators.is_empty() || operators.iter().any(Vec::is_empty) {
            return Err(Error::Precondition("family needs at least one operator per setting".into()));
        }
        let id = Operator::identity(layout.clone());
        for (i, setting) in operators.iter().enumerate() {
            let mut sum = Operator::zeros(layout.clone(), layout.clone());
            for op in setting {
                if op.row_layout() != &layout || op.col_layout() != &layout {
                    return Err(Error::Layout(format!("setting {i}: operator layout mismatch")));
                }
                if min_eigenvalue(op)? < -EPS_FAMILY {
                    return Err(Error::Precondition(format!("setting {i}: operator is not PSD")));
                }
                sum = sum.add(op)?;
            }
            let r = sum.sub(&id)?.op_norm();
            if r > EPS_FAMILY {
                return Err(Error::Precondition(format!(
                    "setting {i}: operators sum to id only within {r:.3e}"
                )));
            }
        }
        Ok(MeasurementFamily { layout, operators })
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn operators(&self) -> &[Vec<Operator>] {
        &self.operators
    }

    pub fn settings(&self) -> usize {
        self.operators.len()
    }

    pub fn max_outcomes(&self) -> usize {
        self.operators.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Normalise a raw family of PSD operators: scale by
/// `γ = min(1, 1/max_i λ_max(Σ_α X[i][α]))` and, if any setting then falls
/// short of the identity, prepend a completion operator `id − γΣ` at outcome
/// label 0. Already-complete families pass through unchanged (`γ = 1`), which
/// makes the operation idempotent.
pub fn complete_family(
    layout: SystemLayout,
    raw: Vec<Vec<Operator>>,
) -> Result<(MeasurementFamily, f64)> {
    if raw.is_empty() || raw.iter().any(Vec::is_empty) {
        return Err(Error::Precondition("family needs at least one operator per setting".into()));
    }
    let id = Operator::identity(layout.clone());
    let mut sums = Vec::with_capacity(raw.len());
    let mut lambda_max: f64 = 0.0;
    for (i, setting) in raw.iter().enumerate() {
        let mut sum = Operator::zeros(layout.clone(), layout.clone());
        for op in setting {
            if op.row_layout() != &layout || op.col_layout() != &layout {
                return Err(Error::Layout(format!("setting {i}: operator layout mismatch")));
            }
            if min_eigenvalue(op)? < -EPS_FAMILY {
                return Err(Error::Precondition(format!("setting {i}: operator is not PSD")));
            }
            sum = sum.add(op)?;
        }
        lambda_max = lambda_max.max(sum.herm_eig()?.values[0]);
        sums.push(sum);
    }
    let gamma = if lambda_max > 1.0 { 1.0 / lambda_max } else { 1.0 };
    let g = C64::new(gamma, 0.0);
    let mut completions = Vec::with_capacity(raw.len());
    let mut need = false;
    for sum in &sums {
        let c = id.sub(&sum.scale(g))?;
        if c.op_norm() > EPS_FAMILY {
            need = true;
        }
        completions.push(c);
    }
    let operators = raw
        .into_iter()
        .zip(completions)
        .map(|(setting, c)| {
            let mut out = Vec::with_capacity(setting.len() + 1);
            if need {
                out.push(c);
            }
            out.extend(setting.into_iter().map(|op| op.scale(g)));
            out
        })
        .collect();
    Ok((MeasurementFamily::new(layout, operators)?, gamma))
}

fn check_same_space(x: &MeasurementFamily, y: &MeasurementFamily) -> Result<()> {
    if x.layout() != y.layout() {
        return Err(Error::Layout("families live on different spaces".into()));
    }
    Ok(())
}

/// Largest `‖[X[i][α], Y[j][β]]‖_∞` over all pairs.
pub fn commutation_residual(x: &MeasurementFamily, y: &MeasurementFamily) -> Result<f64> {
    check_same_space(x, y)?;
    let mut worst: f64 = 0.0;
    for xs in x.operators() {
        for xo in xs {
            for ys in y.operators() {
                for yo in ys {
                    let c = xo.matmul(yo)?.sub(&yo.matmul(xo)?)?;
                    worst = worst.max(c.op_norm());
                }
            }
        }
    }
    Ok(worst)
}

/// Do all pairs commute within `ε_cond`?
pub fn check_commutation(x: &MeasurementFamily, y: &MeasurementFamily) -> Result<bool> {
    Ok(commutation_residual(x, y)? <= EPS_COND)
}

/// PSD square root by eigendecomposition; eigenvalues in `[-1e-10, 0)` are
/// clamped to zero.
fn sqrt_psd(op: &Operator) -> Result<Operator> {
    let eig = op.herm_eig()?;
    let n = eig.values.len();
    let mut root = CMatrix::zeros(n, n);
    for (idx, &v) in eig.values.iter().enumerate() {
        if v < -EPS_FAMILY {
            return Err(Error::Precondition(format!(
                "square root of a non-PSD operator (eigenvalue {v:.3e})"
            )));
        }
        let s = C64::new(v.max(0.0).sqrt(), 0.0);
        let col = eig.vectors.column(idx);
        for p in 0..n {
            for q in 0..n {
                root[(p, q)] += s * col[p] * col[q].conj();
            }
        }
    }
    Operator::new(op.row_layout().clone(), op.col_layout().clone(), root)
}

/// Largest `‖Σ_α √X[i][α] · Y[j][β] · √X[i][α] − Y[j][β]‖_∞` over `(i, j, β)`.
pub fn weak_commutation_residual(x: &MeasurementFamily, y: &MeasurementFamily) -> Result<f64> {
    check_same_space(x, y)?;
    let roots: Vec<Vec<Operator>> = x
        .operators()
        .iter()
        .map(|s| s.iter().map(sqrt_psd).collect())
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for xs in &roots {
        for ys in y.operators() {
            for yo in ys {
                let mut acc = Operator::zeros(yo.row_layout().clone(), yo.col_layout().clone());
                for r in xs {
                    acc = acc.add(&r.matmul(yo)?.matmul(r)?)?;
                }
                worst = worst.max(acc.sub(yo)?.op_norm());
            }
        }
    }
    Ok(worst)
}

/// Does the averaged condition hold within `ε_cond`?
pub fn check_weak_commutation(x: &MeasurementFamily, y: &MeasurementFamily) -> Result<bool> {
    Ok(weak_commutation_residual(x, y)? <= EPS_COND)
}

/// Lift two families to instruments on `H = I⊗K⊗J`: the first map measures
/// `X` controlled on `I` and records the outcome in a fresh `A` register
/// (Kraus operators `|α⟩_A ⊗ |i⟩⟨i| ⊗ √X[i][α] ⊗ id_J`); the second measures
/// `Y` controlled on `J` into `B`. Both are trace preserving, the discarded
/// branch of the first is unital, and their `H`-marginals are independent of
/// the other party's setting register.
pub fn lift_to_maps(x: &MeasurementFamily, y: &MeasurementFamily) -> Result<(CpMap, CpMap)> {
    check_same_space(x, y)?;
    let d_k = x.layout().total_dim();
    let il = SystemLayout::single("I", x.settings())?;
    let jl = SystemLayout::single("J", y.settings())?;
    let kl = SystemLayout::single("K", d_k)?;
    let al = SystemLayout::single("A", x.max_outcomes())?;
    let bl = SystemLayout::single("B", y.max_outcomes())?;

    let mut x_kraus = Vec::new();
    for (i, setting) in x.operators().iter().enumerate() {
        let proj_i = Operator::basis_ket(il.clone(), i)?
            .matmul(&Operator::basis_bra(il.clone(), i)?)?;
        for (alpha, op) in setting.iter().enumerate() {
            let root = Operator::new(kl.clone(), kl.clone(), sqrt_psd(op)?.into_mat())?;
            x_kraus.push(
                Operator::basis_ket(al.clone(), alpha)?
                    .kron(&proj_i)?
                    .kron(&root)?
                    .kron(&Operator::identity(jl.clone()))?,
            );
        }
    }
    let x_map = CpMap::new(x_kraus)?;

    let mut y_kraus = Vec::new();
    for (j, setting) in y.operators().iter().enumerate() {
        let proj_j = Operator::basis_ket(jl.clone(), j)?
            .matmul(&Operator::basis_bra(jl.clone(), j)?)?;
        for (beta, op) in setting.iter().enumerate() {
            let root = Operator::new(kl.clone(), kl.clone(), sqrt_psd(op)?.into_mat())?;
            y_kraus.push(
                Operator::basis_ket(bl.clone(), beta)?
                    .kron(&Operator::identity(il.clone()))?
                    .kron(&root)?
                    .kron(&proj_j)?,
            );
        }
    }
    let y_map = CpMap::new(y_kraus)?;
    Ok((x_map, y_map))
}

/// Residuals of the output representation.
#[derive(Clone, Debug)]
pub struct ObservableResiduals {
    /// `‖v†v − id‖`.
    pub isometry: f64,
    /// `max ‖Σ_α Ā[i][α] − id‖` and the same for `B̄`.
    pub a_completeness: f64,
    pub b_completeness: f64,
    /// `max ‖X[i][α] − v†(Ā[i][α]⊗id)v‖_∞`.
    pub embed_x: f64,
    /// `max ‖Y[j][β] − v†(id⊗B̄[j][β])v‖_∞`.
    pub embed_y: f64,
    /// `max ‖X[i][α]·Y[j][β] − v†(Ā[i][α]⊗B̄[j][β])v‖_∞`.
    pub embed_xy: f64,
}

/// An isometric tensor-product representation of two operator families.
#[derive(Clone, Debug)]
pub struct ObservableFactorisation {
    /// Isometry `K → K_A⊗K_B`; `K_B` absorbs the dilation environment.
    pub v: Operator,
    /// Hermitian `Ā[i][α]` on `K_A`.
    pub a_ops: Vec<Vec<Operator>>,
    /// Hermitian `B̄[j][β]` on `K_B`.
    pub b_ops: Vec<Vec<Operator>>,
    pub residuals: ObservableResiduals,
}

/// The Hermitian operator `F` with `⟨out_row| map(|i⟩⟨i| ⊗ W) |out_row⟩ =
/// tr(F·W)` for a map whose input is `(C, K)` with a classical control `C` at
/// position `ctrl_first` (true: control is the first input factor).
fn functional_operator(
    map: &CpMap,
    control: usize,
    out_row: usize,
    ctrl_first: bool,
    d_k: usize,
) -> CMatrix {
    let mut f = CMatrix::zeros(d_k, d_k);
    let d_ctrl = map.in_layout().total_dim() / d_k;
    for e in map.kraus() {
        let mat = e.mat();
        // g = ⟨out_row| E |control⟩_C, a 1×d_K row vector over K
        let mut g = CMatrix::zeros(1, d_k);
        for q in 0..d_k {
            let col = if ctrl_first {
                control * d_k + q
            } else {
                q * d_ctrl + control
            };
            g[(0, q)] = mat[(out_row, col)];
        }
        f += g.adjoint() * &g;
    }
    f
}

/// Factorise two families: gate on the chosen commutation condition, lift to
/// instruments, run the map pipeline, extract the Hermitian operators from
/// the marginal maps, and Stinespring-dilate the doubling map into the
/// isometry `v`.
pub fn factorise_observables(
    x: &MeasurementFamily,
    y: &MeasurementFamily,
    mode: ObservableMode,
    seed: u64,
) -> Result<ObservableFactorisation> {
    check_same_space(x, y)?;
    let commutes = match mode {
        ObservableMode::Strict => check_commutation(x, y)?,
        ObservableMode::Weak => check_weak_commutation(x, y)?,
    };
    let (x_map, y_map) = lift_to_maps(x, y)?;
    let h_labels: Vec<&str> = x_map.in_layout().labels().collect();
    let n = CpMap::trace_out(y_map.out_layout(), &h_labels)?
        .compose(&y_map)?
        .reduced()?;
    let inst = FactorisationInstance::new(x_map, n, "I", "K", "J")?;
    if !commutes {
        // report which pipeline condition the commutation failure breaks
        let report = check_conditions(&inst)?;
        return Err(Error::Condition(Box::new(report)));
    }
    let cert = factorise(&inst, Mode::Strict, seed)?;

    let d_k = x.layout().total_dim();
    let kl = SystemLayout::single("K", d_k)?;
    // Hermitian operators: Ā[i][α] represents W ↦ ⟨α| m̄(|i⟩⟨i| ⊗ W) |α⟩,
    // and B̄[j][β] represents W ↦ ⟨β| n̄(W ⊗ |j⟩⟨j|) |β⟩
    let a_herm: Vec<Vec<Operator>> = (0..x.settings())
        .map(|i| {
            (0..x.operators()[i].len())
                .map(|alpha| {
                    Operator::new(
                        kl.clone(),
                        kl.clone(),
                        functional_operator(&cert.m_bar, i, alpha, true, d_k),
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let b_herm: Vec<Vec<Operator>> = (0..y.settings())
        .map(|j| {
            (0..y.operators()[j].len())
                .map(|beta| {
                    Operator::new(
                        kl.clone(),
                        kl.clone(),
                        functional_operator(&cert.n_bar, j, beta, false, d_k),
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    // v: K → K_A ⊗ K_B with K_A = K' and K_B = K'' ⊗ (dilation environment)
    let v_raw = cert.d.stinespring("R")?;
    let d_env = v_raw.row_layout().dim_of("R").unwrap();
    let ka = SystemLayout::single("KA", d_k)?;
    let kb = SystemLayout::single("KB", d_k * d_env)?;
    let v = Operator::new(ka.concat(&kb)?, kl.clone(), v_raw.into_mat())?;

    let a_ops: Vec<Vec<Operator>> = a_herm
        .iter()
        .map(|s| {
            s.iter()
                .map(|op| Operator::new(ka.clone(), ka.clone(), op.mat().clone()))
                .collect()
        })
        .collect::<Result<_>>()?;
    let id_env = CMatrix::identity(d_env, d_env);
    let b_ops: Vec<Vec<Operator>> = b_herm
        .iter()
        .map(|s| {
            s.iter()
                .map(|op| Operator::new(kb.clone(), kb.clone(), op.mat().kronecker(&id_env)))
                .collect()
        })
        .collect::<Result<_>>()?;

    // verify the representation
    let isometry = (v.adjoint().mat() * v.mat() - CMatrix::identity(d_k, d_k))
        .map(|z| z.norm())
        .max();
    let completeness = |ops: &[Vec<Operator>], dim: usize| -> f64 {
        ops.iter()
            .map(|s| {
                let mut sum = CMatrix::zeros(dim, dim);
                for op in s {
                    sum += op.mat();
                }
                (sum - CMatrix::identity(dim, dim)).map(|z| z.norm()).max()
            })
            .fold(0.0, f64::max)
    };
    let a_completeness = completeness(&a_ops, d_k);
    let b_completeness = completeness(&b_ops, d_k * d_env);

    let vmat = v.mat();
    let vin = v.adjoint().into_mat();
    let sandwich = |a: &CMatrix, b: &CMatrix| -> CMatrix { &vin * (a.kronecker(b) * vmat) };
    let id_kb = CMatrix::identity(d_k * d_env, d_k * d_env);
    let id_ka = CMatrix::identity(d_k, d_k);
    let norm = |m: CMatrix| -> f64 {
        m.svd(false, false).singular_values.iter().fold(0.0, |a, &b| a.max(b))
    };
    let mut embed_x: f64 = 0.0;
    let mut embed_y: f64 = 0.0;
    let mut embed_xy: f64 = 0.0;
    for (i, setting) in x.operators().iter().enumerate() {
        for (alpha, xo) in setting.iter().enumerate() {
            embed_x = embed_x.max(norm(sandwich(a_ops[i][alpha].mat(), &id_kb) - xo.mat()));
            for (j, ysetting) in y.operators().iter().enumerate() {
                for (beta, yo) in ysetting.iter().enumerate() {
                    let lhs = xo.mat() * yo.mat();
                    embed_xy = embed_xy
                        .max(norm(sandwich(a_ops[i][alpha].mat(), b_ops[j][beta].mat()) - lhs));
                }
            }
        }
    }
    for (j, setting) in y.operators().iter().enumerate() {
        for (beta, yo) in setting.iter().enumerate() {
            embed_y = embed_y.max(norm(sandwich(&id_ka, b_ops[j][beta].mat()) - yo.mat()));
        }
    }

    let residuals = ObservableResiduals {
        isometry,
        a_completeness,
        b_completeness,
        embed_x,
        embed_y,
        embed_xy,
    };
    let worst_embed = embed_x.max(embed_y).max(embed_xy);
    if isometry > 1e-10
        || a_completeness > EPS_OUTPUT_COMPLETE
        || b_completeness > EPS_OUTPUT_COMPLETE
        || worst_embed > EPS_FACT
    {
        return Err(Error::Certificate {
            residual: worst_embed.max(isometry).max(a_completeness).max(b_completeness),
            tol: EPS_FACT,
        });
    }
    Ok(ObservableFactorisation {
        v,
        a_ops,
        b_ops,
        residuals,
    })
}
