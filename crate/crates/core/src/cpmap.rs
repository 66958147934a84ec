//! Completely positive maps: Kraus and Choi representations, composition,
//! and the standard predicates (trace preserving, trace non-increasing,
//! unital, independence of an input factor), plus rescaling, the
//! trace-preserving completion and the Stinespring dilation.

use crate::error::{Error, Result};
use crate::tensor::{CMatrix, Operator, SystemLayout, C64};

/// Absolute operator-norm tolerance for all map predicates.
pub const EPS_COND: f64 = 1e-9;
/// Choi eigenvalues below this are hard CP violations.
pub const CHOI_NEG_TOL: f64 = 1e-8;
/// Choi eigenvalues in `[-CHOI_NEG_TOL, CHOI_ZERO_TOL]` count as zero.
pub const CHOI_ZERO_TOL: f64 = 1e-12;

/// A completely positive map in Kraus form, `W ↦ Σ_z E_z W E_z†`.
#[derive(Clone, Debug)]
pub struct CpMap {
    kraus: Vec<Operator>,
}

/// Multiply `e` (padded with identities around position `pos` of `m`'s row
/// layout) onto `m` from the left: computes `(id ⊗ e ⊗ id) · m`.
fn left_mul(e: &Operator, m: &Operator, pos: usize) -> Result<Operator> {
    let in_count = e.col_layout().factors().len();
    let row_factors = m.row_layout().factors();
    let pre: usize = row_factors[..pos].iter().map(|&(_, d)| d).product();
    let mid: usize = row_factors[pos..pos + in_count].iter().map(|&(_, d)| d).product();
    let post: usize = row_factors[pos + in_count..].iter().map(|&(_, d)| d).product();
    debug_assert_eq!(mid, e.mat().ncols());
    let dout = e.mat().nrows();
    let cols = m.mat().ncols();
    let mut out = CMatrix::zeros(pre * dout * post, cols);
    // sparse list of non-zero (row, col, coeff) entries of e
    let entries: Vec<(usize, usize, C64)> = (0..dout)
        .flat_map(|o| (0..mid).map(move |i| (o, i)))
        .filter_map(|(o, i)| {
            let coeff = e.mat()[(o, i)];
            (coeff != C64::new(0.0, 0.0)).then_some((o, i, coeff))
        })
        .collect();
    // column-major traversal: both slices are contiguous within a column
    for c in 0..cols {
        let src = m.mat().column(c).clone_owned();
        let src = src.as_slice();
        let mut dst_col = out.column_mut(c);
        let dst = dst_col.as_mut_slice();
        for p in 0..pre {
            for &(o, i, coeff) in &entries {
                let s_base = (p * mid + i) * post;
                let d_base = (p * dout + o) * post;
                for s in 0..post {
                    dst[d_base + s] += coeff * src[s_base + s];
                }
            }
        }
    }
    let mut new_row: Vec<(String, usize)> = row_factors[..pos].to_vec();
    new_row.extend(e.row_layout().factors().iter().cloned());
    new_row.extend(row_factors[pos + in_count..].iter().cloned());
    Operator::new(SystemLayout::new(new_row)?, m.col_layout().clone(), out)
}

impl CpMap {
    /// A map from its Kraus family. All operators must share layouts.
    pub fn new(kraus: Vec<Operator>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::Precondition("empty Kraus family".into()))?;
        for e in &kraus[1..] {
            if e.row_layout() != first.row_layout() || e.col_layout() != first.col_layout() {
                return Err(Error::Layout("Kraus operators must share layouts".into()));
            }
        }
        Ok(CpMap { kraus })
    }

    pub fn identity(layout: SystemLayout) -> Self {
        CpMap {
            kraus: vec![Operator::identity(layout)],
        }
    }

    /// The partial trace over `labels` as a CP map `layout → layout \ labels`.
    pub fn trace_out(layout: &SystemLayout, labels: &[&str]) -> Result<Self> {
        for l in labels {
            if layout.position(l).is_none() {
                return Err(Error::Layout(format!("unknown label {l}")));
            }
        }
        let mut kraus = vec![Operator::scalar(C64::new(1.0, 0.0))];
        for (label, dim) in layout.factors() {
            if labels.contains(&label.as_str()) {
                let single = SystemLayout::single(label.clone(), *dim)?;
                let mut next = Vec::with_capacity(kraus.len() * dim);
                for k in &kraus {
                    for l in 0..*dim {
                        next.push(k.kron(&Operator::basis_bra(single.clone(), l)?)?);
                    }
                }
                kraus = next;
            } else {
                let id = Operator::identity(SystemLayout::single(label.clone(), *dim)?);
                kraus = kraus.iter().map(|k| k.kron(&id)).collect::<Result<_>>()?;
            }
        }
        CpMap::new(kraus)
    }

    pub fn kraus(&self) -> &[Operator] {
        &self.kraus
    }

    pub fn in_layout(&self) -> &SystemLayout {
        self.kraus[0].col_layout()
    }

    pub fn out_layout(&self) -> &SystemLayout {
        self.kraus[0].row_layout()
    }

    /// `Σ_z E_z† E_z`, the operator governing trace behaviour.
    pub fn kraus_sum(&self) -> Operator {
        let d = self.in_layout().total_dim();
        let mut sum = CMatrix::zeros(d, d);
        for e in &self.kraus {
            sum += e.mat().adjoint() * e.mat();
        }
        Operator::square(self.in_layout().clone(), sum).expect("dims match by construction")
    }

    /// Apply the map to `w`; `w`'s layout must contain the map's input layout
    /// as a contiguous labeled block, and the map acts as the identity on the
    /// remaining factors.
    pub fn apply(&self, w: &Operator) -> Result<Operator> {
        if w.row_layout() != w.col_layout() {
            return Err(Error::Layout("apply expects a square operator".into()));
        }
        let pos = w
            .row_layout()
            .find_contiguous(self.in_layout())
            .ok_or_else(|| {
                Error::Layout(format!(
                    "input layout {:?} not found in operand {:?}",
                    self.in_layout().factors(),
                    w.row_layout().factors()
                ))
            })?;
        let mut acc: Option<Operator> = None;
        for e in &self.kraus {
            // E W E† = (E (E W†)†); both factors reuse the left action
            let ew = left_mul(e, w, pos)?;
            let ewe = left_mul(e, &ew.adjoint(), pos)?.adjoint();
            acc = Some(match acc {
                None => ewe,
                Some(a) => a.add(&ewe)?,
            });
        }
        Ok(acc.expect("kraus family is non-empty"))
    }

    /// Sequential composition `self ∘ m` (apply `m` first). `self`'s input
    /// layout must occur contiguously inside `m`'s output layout; `self`
    /// acts as the identity on the remaining output factors.
    pub fn compose(&self, m: &CpMap) -> Result<CpMap> {
        let pos = m
            .out_layout()
            .find_contiguous(self.in_layout())
            .ok_or_else(|| {
                Error::Layout(format!(
                    "cannot compose: input {:?} not in predecessor output {:?}",
                    self.in_layout().factors(),
                    m.out_layout().factors()
                ))
            })?;
        let mut kraus = Vec::with_capacity(self.kraus.len() * m.kraus.len());
        for f in &self.kraus {
            for e in &m.kraus {
                kraus.push(left_mul(f, e, pos)?);
            }
        }
        CpMap::new(kraus)
    }

    /// Parallel composition `self ⊗ other`.
    pub fn tensor_maps(&self, other: &CpMap) -> Result<CpMap> {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(a.kron(b)?);
            }
        }
        CpMap::new(kraus)
    }

    /// Choi–Jamiołkowski operator `M(ψ)` with `ψ` the maximally entangled
    /// state between the input and its tilde copy.
    pub fn to_choi(&self) -> Result<ChoiOperator> {
        // M(ψ) = (1/d) Σ_z vec(E_z) vec(E_z)† with vec(E)[o·d + i] = E[o, i]
        let din = self.in_layout().total_dim();
        let dout = self.out_layout().total_dim();
        let dim = dout * din;
        let mut acc = CMatrix::zeros(dim, dim);
        let weight = 1.0 / din as f64;
        let mut v = vec![C64::new(0.0, 0.0); dim];
        for e in &self.kraus {
            let m = e.mat();
            for o in 0..dout {
                for i in 0..din {
                    v[o * din + i] = m[(o, i)];
                }
            }
            for (c, &vc) in v.iter().enumerate() {
                if vc == C64::new(0.0, 0.0) {
                    continue;
                }
                let scale = vc.conj() * weight;
                let mut col = acc.column_mut(c);
                let col = col.as_mut_slice();
                for (r, &vr) in v.iter().enumerate() {
                    col[r] += vr * scale;
                }
            }
        }
        let layout = self.out_layout().concat(&self.in_layout().tilde())?;
        let op = Operator::square(layout, acc)?;
        Ok(ChoiOperator {
            op,
            output: self.out_layout().clone(),
            input: self.in_layout().clone(),
        })
    }

    /// `‖Σ E†E − id‖`, zero exactly when the map is trace preserving.
    pub fn tp_residual(&self) -> f64 {
        let id = Operator::identity(self.in_layout().clone());
        self.kraus_sum().sub(&id).expect("same layout").op_norm()
    }

    pub fn is_tp(&self) -> bool {
        self.tp_residual() <= EPS_COND
    }

    /// `max(λ_max(Σ E†E) − 1, 0)`.
    pub fn nonincreasing_residual(&self) -> f64 {
        let eig = self.kraus_sum().herm_eig().expect("Σ E†E is Hermitian");
        (eig.values.first().copied().unwrap_or(0.0) - 1.0).max(0.0)
    }

    pub fn is_trace_nonincreasing(&self) -> bool {
        self.nonincreasing_residual() <= EPS_COND
    }

    /// `‖M(id) − id‖` (requires equal input and output dimensions).
    pub fn unital_residual(&self) -> Result<f64> {
        if self.in_layout().total_dim() != self.out_layout().total_dim() {
            return Err(Error::Dimension(
                "unitality needs equal input and output dimensions".into(),
            ));
        }
        let out = self.apply(&Operator::identity(self.in_layout().clone()))?;
        let id = Operator::identity(self.out_layout().clone());
        Ok(out.sub(&id)?.op_norm())
    }

    pub fn is_unital(&self) -> Result<bool> {
        Ok(self.unital_residual()? <= EPS_COND)
    }

    /// The map `W ↦ M(W ⊗ π_label)` on the remaining input factors.
    pub fn marginal_map(&self, label: &str) -> Result<CpMap> {
        let pos = self
            .in_layout()
            .position(label)
            .ok_or_else(|| Error::Layout(format!("unknown label {label}")))?;
        let factors = self.in_layout().factors();
        let single = SystemLayout::single(label.to_string(), factors[pos].1)?;
        let dim = factors[pos].1;
        let pre = Operator::identity(SystemLayout::new(factors[..pos].to_vec())?);
        let post = Operator::identity(SystemLayout::new(factors[pos + 1..].to_vec())?);
        let amp = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
        let mut kraus = Vec::with_capacity(self.kraus.len() * dim);
        for e in &self.kraus {
            for k in 0..dim {
                let ket = Operator::basis_ket(single.clone(), k)?.scale(amp);
                let insert = pre.kron(&ket)?.kron(&post)?;
                kraus.push(e.matmul(&insert)?);
            }
        }
        CpMap::new(kraus)
    }

    /// Choi trace-norm distance between the map and `marginal ∘ tr_label`.
    pub fn independence_residual(&self, label: &str) -> Result<f64> {
        let marginal = self.marginal_map(label)?;
        let trace = CpMap::trace_out(self.in_layout(), &[label])?;
        let candidate = marginal.compose(&trace)?;
        let choi = self.to_choi()?;
        let cand = candidate.to_choi()?;
        choi.distance(&cand)
    }

    /// Whether the map acts on `label` only by tracing it out.
    pub fn is_independent_of(&self, label: &str) -> Result<bool> {
        let dim = self.in_layout().total_dim() as f64;
        Ok(self.independence_residual(label)? <= EPS_COND * dim)
    }

    /// Minimal-rank Kraus family with the same action, obtained from the
    /// Choi eigensystem. Useful after long compositions, whose Kraus counts
    /// otherwise grow multiplicatively.
    pub fn reduced(&self) -> Result<CpMap> {
        let z = self.kraus.len();
        let dim = self.in_layout().total_dim() * self.out_layout().total_dim();
        if z >= dim {
            return self.to_choi()?.to_map();
        }
        // with fewer Kraus terms than the Choi dimension, diagonalise the
        // Gram matrix G[z, w] = ⟨vec E_w, vec E_z⟩ instead of the Choi operator
        let mut gram = CMatrix::zeros(z, z);
        for a in 0..z {
            for b in 0..=a {
                let g = (self.kraus[b].mat().adjoint() * self.kraus[a].mat()).trace();
                gram[(b, a)] = g;
                gram[(a, b)] = g.conj();
            }
        }
        let gram_op = Operator::square(SystemLayout::single("Z", z)?, gram)?;
        let eig = gram_op.herm_eig()?;
        let cutoff = (eig.values.first().copied().unwrap_or(0.0) * 1e-14).max(1e-20);
        let mut kraus = Vec::new();
        for (j, &lambda) in eig.values.iter().enumerate() {
            if lambda <= cutoff {
                continue;
            }
            let v = eig.vectors.column(j);
            let mut m = CMatrix::zeros(
                self.out_layout().total_dim(),
                self.in_layout().total_dim(),
            );
            for (a, e) in self.kraus.iter().enumerate() {
                m += e.mat() * v[a];
            }
            kraus.push(Operator::new(
                self.out_layout().clone(),
                self.in_layout().clone(),
                m,
            )?);
        }
        if kraus.is_empty() {
            return Err(Error::Precondition("zero map has no Kraus family".into()));
        }
        CpMap::new(kraus)
    }

    /// Divide by `λ = max(1, λ_max(Σ E†E))` so the result is trace
    /// non-increasing; returns the rescaled map and λ.
    pub fn rescale_to_nonincreasing(&self) -> (CpMap, f64) {
        let eig = self.kraus_sum().herm_eig().expect("Σ E†E is Hermitian");
        let lambda = eig.values.first().copied().unwrap_or(0.0).max(1.0);
        let s = C64::new(1.0 / lambda.sqrt(), 0.0);
        let kraus = self.kraus.iter().map(|e| e.scale(s)).collect();
        (CpMap::new(kraus).expect("layouts preserved"), lambda)
    }

    /// Trace-preserving completion: extend the output by one extra dimension
    /// `⊥` that absorbs the missing trace weight. The output becomes a single
    /// fresh factor of dimension `dim(out) + 1`; the first `dim(out)` levels
    /// carry the original output.
    pub fn tp_completion(&self) -> Result<CpMap> {
        if !self.is_trace_nonincreasing() {
            return Err(Error::Precondition(
                "tp_completion needs a trace non-increasing map".into(),
            ));
        }
        let dout = self.out_layout().total_dim();
        let label: String = self
            .out_layout()
            .labels()
            .collect::<Vec<_>>()
            .join("")
            + "⊕";
        let completed = SystemLayout::single(label, dout + 1)?;
        let mut embed = CMatrix::zeros(dout + 1, dout);
        for o in 0..dout {
            embed[(o, o)] = C64::new(1.0, 0.0);
        }
        let embed = Operator::new(completed.clone(), self.out_layout().clone(), embed)?;
        let mut kraus: Vec<Operator> = self
            .kraus
            .iter()
            .map(|e| embed.matmul(e))
            .collect::<Result<_>>()?;
        let id = Operator::identity(self.in_layout().clone());
        let delta = id.sub(&self.kraus_sum())?;
        let eig = delta.herm_eig()?;
        let bot = Operator::basis_ket(completed, dout)?;
        for (k, &val) in eig.values.iter().enumerate() {
            if val <= CHOI_ZERO_TOL {
                continue;
            }
            let din = self.in_layout().total_dim();
            let mut bra = CMatrix::zeros(1, din);
            for i in 0..din {
                bra[(0, i)] = eig.vectors[(i, k)].conj() * C64::new(val.sqrt(), 0.0);
            }
            let bra = Operator::new(SystemLayout::scalar(), self.in_layout().clone(), bra)?;
            kraus.push(bot.matmul(&bra)?);
        }
        CpMap::new(kraus)
    }

    /// Stinespring dilation of a TP map: an isometry `V: in → out ⊗ env`
    /// with `tr_env(V ρ V†) = M(ρ)`; the environment dimension equals the
    /// number of Kraus operators.
    pub fn stinespring(&self, env_label: impl Into<String>) -> Result<Operator> {
        if !self.is_tp() {
            return Err(Error::Precondition("stinespring needs a TP map".into()));
        }
        let env = SystemLayout::single(env_label.into(), self.kraus.len())?;
        let row = self.out_layout().concat(&env)?;
        let din = self.in_layout().total_dim();
        let dout = self.out_layout().total_dim();
        let nz = self.kraus.len();
        let mut mat = CMatrix::zeros(dout * nz, din);
        for (z, e) in self.kraus.iter().enumerate() {
            for o in 0..dout {
                for i in 0..din {
                    mat[(o * nz + z, i)] = e.mat()[(o, i)];
                }
            }
        }
        Operator::new(row, self.in_layout().clone(), mat)
    }
}

/// The Choi–Jamiołkowski operator of a CP map, living on
/// `out_layout ⊗ tilde(in_layout)`.
#[derive(Clone, Debug)]
pub struct ChoiOperator {
    op: Operator,
    output: SystemLayout,
    input: SystemLayout,
}

impl ChoiOperator {
    /// Validating constructor: checks the layout split and positivity.
    pub fn new(op: Operator, output: SystemLayout, input: SystemLayout) -> Result<Self> {
        let expect = output.concat(&input.tilde())?;
        if op.row_layout() != &expect || op.col_layout() != &expect {
            return Err(Error::Layout(
                "Choi operator layout must be output ⊗ tilde(input)".into(),
            ));
        }
        let eig = op.herm_eig()?;
        if let Some(&min) = eig.values.last() {
            if min < -CHOI_NEG_TOL {
                return Err(Error::NotCp(format!("Choi eigenvalue {min:.3e}")));
            }
        }
        Ok(ChoiOperator { op, output, input })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn input_layout(&self) -> &SystemLayout {
        &self.input
    }

    pub fn output_layout(&self) -> &SystemLayout {
        &self.output
    }

    /// Marginal on the tilde (input-copy) factors.
    pub fn tilde_marginal(&self) -> Result<Operator> {
        let out_labels: Vec<&str> = self.output.labels().collect();
        self.op.partial_trace(&out_labels)
    }

    /// Trace-norm distance to another Choi operator on the same layouts.
    pub fn distance(&self, other: &ChoiOperator) -> Result<f64> {
        if self.op.row_layout() != other.op.row_layout() {
            return Err(Error::Layout("Choi layouts differ".into()));
        }
        Ok(self.op.sub(&other.op)?.trace_norm())
    }

    /// Recover a Kraus family from the eigendecomposition. Eigenvalues in
    /// `[-CHOI_NEG_TOL, CHOI_ZERO_TOL]` are dropped as numerical zeros;
    /// anything below `-CHOI_NEG_TOL` is a CP violation.
    pub fn to_map(&self) -> Result<CpMap> {
        let eig = self.op.herm_eig()?;
        let din = self.input.total_dim();
        let dout = self.output.total_dim();
        let mut kraus = Vec::new();
        for (k, &val) in eig.values.iter().enumerate() {
            if val < -CHOI_NEG_TOL {
                return Err(Error::NotCp(format!("Choi eigenvalue {val:.3e}")));
            }
            if val <= CHOI_ZERO_TOL {
                continue;
            }
            let amp = C64::new((val * din as f64).sqrt(), 0.0);
            let mut e = CMatrix::zeros(dout, din);
            for o in 0..dout {
                for i in 0..din {
                    e[(o, i)] = eig.vectors[(o * din + i, k)] * amp;
                }
            }
            kraus.push(Operator::new(self.output.clone(), self.input.clone(), e)?);
        }
        if kraus.is_empty() {
            kraus.push(Operator::zeros(self.output.clone(), self.input.clone()));
        }
        CpMap::new(kraus)
    }
}
