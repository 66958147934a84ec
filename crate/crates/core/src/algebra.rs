//! Matrix *-algebra closure, Wedderburn-style block decomposition, and the
//! structure of zero-CMI (quantum Markov) states.
//!
//! A state ρ on A⊗B⊗C with I(A:B|C) = 0 decomposes as
//! `Σ_z p_z ρ^z_{A C_A^z} ⊗ ρ^z_{C_B^z B}` over a direct-sum splitting
//! `C = ⊕_z C_A^z ⊗ C_B^z`. This module computes that splitting explicitly:
//! the algebra generated by the conditional operators of ρ_AC is block
//! diagonalised via its center, and the per-block tensor frames are recovered
//! from eigenprojections of random algebra elements.

use rand::Rng;

use crate::entropic::{cond_mutual_info, Partition, EPS_CMI};
use crate::error::{Error, Result};
use crate::random;
use crate::tensor::{CMatrix, Operator, SystemLayout, C64, EIG_CLUSTER_GAP};

/// Closure tolerance for algebra membership residuals.
pub const EPS_ALG: f64 = 1e-9;
/// Trace-norm tolerance for Markov reconstruction and product-form checks.
pub const EPS_RECON: f64 = 1e-8;
/// Blocks with projected weight below this are dropped from the Markov
/// structure (but kept in the block decomposition).
pub const WEIGHT_FLOOR: f64 = 1e-12;

fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn frob(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A †-closed unital subalgebra of the d×d matrices, stored as an
/// orthonormal (Hilbert–Schmidt) basis.
#[derive(Clone, Debug)]
pub struct MatrixAlgebra {
    layout: SystemLayout,
    basis: Vec<CMatrix>,
    tol: f64,
}

/// Conditional operators `O_ij = (⟨i|_A ⊗ id_C) ρ (|j⟩_A ⊗ id_C)` of a state
/// on A⊗C, returned in row-major (i, j) order as operators on C. The labels
/// in `a_labels` must be the leading factors of `rho`'s layout.
pub fn conditional_operators(rho: &Operator, a_labels: &[&str]) -> Result<Vec<Operator>> {
    if rho.row_layout() != rho.col_layout() {
        return Err(Error::Layout("conditional_operators needs a square operator".into()));
    }
    let layout = rho.row_layout();
    for (k, l) in a_labels.iter().enumerate() {
        if layout.position(l) != Some(k) {
            return Err(Error::Layout(format!(
                "label {l} is not at leading position {k}"
            )));
        }
    }
    let da: usize = a_labels.iter().map(|l| layout.dim_of(l).unwrap()).product();
    let dc = layout.total_dim() / da;
    let c_labels: Vec<&str> = layout.labels().skip(a_labels.len()).collect();
    let c_layout = layout.restrict(&c_labels)?;
    let mut out = Vec::with_capacity(da * da);
    for i in 0..da {
        for j in 0..da {
            let mut m = CMatrix::zeros(dc, dc);
            for c in 0..dc {
                for cp in 0..dc {
                    m[(c, cp)] = rho.mat()[(i * dc + c, j * dc + cp)];
                }
            }
            out.push(Operator::square(c_layout.clone(), m)?);
        }
    }
    Ok(out)
}

/// Orthonormalise `cand` against `basis`; if a genuinely new direction
/// remains, append it and return true.
fn try_add(basis: &mut Vec<CMatrix>, cand: &CMatrix) -> bool {
    let norm = frob(cand);
    if norm < 1e-12 {
        return false;
    }
    let mut r = cand.clone();
    // twice for numerical stability of the projection
    for _ in 0..2 {
        for b in basis.iter() {
            let c = hs_inner(b, &r);
            r -= b * c;
        }
    }
    let rn = frob(&r);
    if rn > 1e-8 * (1.0 + norm) {
        basis.push(r / C64::new(rn, 0.0));
        true
    } else {
        false
    }
}

/// Smallest †-closed unital algebra containing the generators, built by
/// alternating products with Hilbert–Schmidt orthonormalisation until the
/// span stabilises.
pub fn generate_algebra(
    layout: &SystemLayout,
    gens: &[Operator],
    tol: f64,
) -> Result<MatrixAlgebra> {
    let d = layout.total_dim();
    for g in gens {
        if g.row_layout() != layout || g.col_layout() != layout {
            return Err(Error::Layout("generator layout mismatch".into()));
        }
    }
    let mut basis: Vec<CMatrix> =
        vec![CMatrix::identity(d, d) / C64::new((d as f64).sqrt(), 0.0)];
    let mut frontier: Vec<usize> = vec![0];
    for g in gens {
        for m in [g.mat().clone(), g.mat().adjoint()] {
            if try_add(&mut basis, &m) {
                frontier.push(basis.len() - 1);
            }
        }
    }
    while !frontier.is_empty() && basis.len() < d * d {
        let mut next = Vec::new();
        let snapshot = basis.len();
        for &f in &frontier {
            for k in 0..snapshot {
                if basis.len() >= d * d {
                    break;
                }
                for cand in [&basis[f] * &basis[k], &basis[k] * &basis[f]] {
                    if try_add(&mut basis, &cand) {
                        next.push(basis.len() - 1);
                        let adj = basis.last().unwrap().adjoint();
                        if try_add(&mut basis, &adj) {
                            next.push(basis.len() - 1);
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(MatrixAlgebra {
        layout: layout.clone(),
        basis,
        tol,
    })
}

/// One summand of the splitting `C = ⊕_z C_A^z ⊗ C_B^z`.
#[derive(Clone, Debug)]
pub struct Block {
    pub da: usize,
    pub db: usize,
    /// Isometry from the `da·db`-dimensional block frame into the ambient
    /// space; columns are ordered with the A-factor index most significant.
    pub isometry: Operator,
}

/// A direct-sum-of-tensor-products splitting of the ambient space.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    ambient: SystemLayout,
    pub blocks: Vec<Block>,
}

impl BlockDecomposition {
    /// Validating constructor: every isometry must map its `dA·dB`-dimensional
    /// frame into `ambient`, frames must be orthonormal and mutually
    /// orthogonal, and the frame dimensions must exhaust the ambient space.
    pub fn new(ambient: SystemLayout, blocks: Vec<Block>) -> Result<Self> {
        let total: usize = blocks.iter().map(|b| b.da * b.db).sum();
        if total != ambient.total_dim() {
            return Err(Error::Structure {
                block: blocks.len(),
                residual: (total as f64 - ambient.total_dim() as f64).abs(),
            });
        }
        for (z, b) in blocks.iter().enumerate() {
            let iso = &b.isometry;
            if iso.row_layout() != &ambient
                || iso.col_layout().factors().len() != 2
                || iso.col_layout().factors()[0].1 != b.da
                || iso.col_layout().factors()[1].1 != b.db
            {
                return Err(Error::Layout(format!(
                    "block {z} isometry layouts do not match ({}, {})",
                    b.da, b.db
                )));
            }
            let gram = iso.adjoint().matmul(iso)?;
            let residual = gram
                .sub(&Operator::identity(iso.col_layout().clone()))?
                .op_norm();
            if residual > 1e-8 {
                return Err(Error::Structure { block: z, residual });
            }
            for other in &blocks[..z] {
                let cross = iso.adjoint().matmul(&other.isometry)?.op_norm();
                if cross > 1e-8 {
                    return Err(Error::Structure {
                        block: z,
                        residual: cross,
                    });
                }
            }
        }
        Ok(BlockDecomposition { ambient, blocks })
    }

    /// The same splitting re-read on another ambient layout of equal total
    /// dimension (matrices unchanged; frame labels derived from the new
    /// ambient labels).
    pub fn with_ambient(&self, ambient: SystemLayout) -> Result<Self> {
        if ambient.total_dim() != self.ambient.total_dim() {
            return Err(Error::Dimension(
                "ambient relabel must preserve the total dimension".into(),
            ));
        }
        let joined: String = ambient.labels().collect::<Vec<_>>().join("");
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let col = SystemLayout::new(vec![
                    (format!("{joined}A"), b.da),
                    (format!("{joined}B"), b.db),
                ])?;
                Ok(Block {
                    da: b.da,
                    db: b.db,
                    isometry: Operator::new(ambient.clone(), col, b.isometry.mat().clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockDecomposition {
            ambient,
            blocks,
        })
    }

    /// Entrywise complex conjugate of every frame, on the same ambient
    /// layout. The maximally entangled state `(1/√d)Σ|ii⟩` pairs a basis on
    /// the tilde copy with its conjugate on the original, so this transports
    /// a splitting found on the tilde copy back.
    pub fn conjugated(&self) -> Self {
        BlockDecomposition {
            ambient: self.ambient.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    da: b.da,
                    db: b.db,
                    isometry: b.isometry.conjugate(),
                })
                .collect(),
        }
    }

    pub fn ambient(&self) -> &SystemLayout {
        &self.ambient
    }

    /// Multiset of `(dA, dB)` pairs, sorted.
    pub fn shape(&self) -> Vec<(usize, usize)> {
        let mut s: Vec<(usize, usize)> = self.blocks.iter().map(|b| (b.da, b.db)).collect();
        s.sort();
        s
    }
}

impl MatrixAlgebra {
    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    /// Residual of `m` after projecting onto the span.
    pub fn membership_residual(&self, m: &CMatrix) -> f64 {
        let mut r = m.clone();
        for b in &self.basis {
            let c = hs_inner(b, &r);
            r -= b * c;
        }
        frob(&r)
    }

    /// Worst-case residual of any pairwise basis product against the span.
    pub fn closure_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in &self.basis {
            for b in &self.basis {
                worst = worst.max(self.membership_residual(&(a * b)));
            }
        }
        worst
    }

    fn random_hermitian_element(&self, rng: &mut impl Rng, coeffs: &[CMatrix]) -> CMatrix {
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        let g = random::ginibre(rng, coeffs.len(), 1);
        for (k, b) in coeffs.iter().enumerate() {
            m += b * g[(k, 0)];
        }
        (&m + m.adjoint()) * C64::new(0.5, 0.0)
    }

    /// Orthonormal basis of the center, as coefficient-combined matrices.
    fn center(&self) -> Vec<CMatrix> {
        let n = self.basis.len();
        let d = self.dim();
        let mut a = CMatrix::zeros(n * d * d, n);
        for (i, bi) in self.basis.iter().enumerate() {
            for (k, bk) in self.basis.iter().enumerate() {
                let comm = bk * bi - bi * bk;
                for (flat, v) in comm.iter().enumerate() {
                    a[(i * d * d + flat, k)] = *v;
                }
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
        let cut = 1e-7 * smax.max(1.0);
        let mut center = Vec::new();
        for k in 0..svd.singular_values.len() {
            if svd.singular_values[k] <= cut {
                let mut z = CMatrix::zeros(d, d);
                for (j, b) in self.basis.iter().enumerate() {
                    z += b * v_t[(k, j)].conj();
                }
                center.push(z);
            }
        }
        center
    }

    /// Block decomposition with the default seed 0.
    pub fn decompose(&self) -> Result<BlockDecomposition> {
        self.decompose_seeded(0)
    }

    /// Block decomposition: splits the ambient space into `⊕_z C_A^z ⊗ C_B^z`
    /// such that the algebra is `⊕_z L(C_A^z) ⊗ id` in the block frames.
    /// The randomness (center element, in-block probes) is fully determined
    /// by `seed`.
    pub fn decompose_seeded(&self, seed: u64) -> Result<BlockDecomposition> {
        let closure = self.closure_residual();
        if closure > self.tol {
            return Err(Error::NotAnAlgebra {
                residual: closure,
                tol: self.tol,
            });
        }
        let mut rng = random::rng(seed);
        let d = self.dim();
        let center = self.center();
        let h = self.random_hermitian_element(&mut rng, &center);
        let probe = SystemLayout::single("·", d)?;
        let heig = Operator::square(probe, h)?.herm_eig()?;
        let mut blocks = Vec::new();
        for cluster in heig.clusters(EIG_CLUSTER_GAP) {
            let r = cluster.len();
            let w = heig.vectors.columns(cluster.start, r).into_owned();
            // compress the algebra into the central block and probe it
            let probe_r = SystemLayout::single("·", r)?;
            let ralg = self.random_hermitian_element(&mut rng, &self.basis);
            let rcomp = w.adjoint() * &ralg * &w;
            let reig = Operator::square(probe_r.clone(), rcomp)?.herm_eig()?;
            let sub = reig.clusters(EIG_CLUSTER_GAP);
            let da = sub.len();
            let db = sub[0].len();
            if sub.iter().any(|c| c.len() != db) || da * db != r {
                return Err(Error::NotAnAlgebra {
                    residual: f64::NAN,
                    tol: self.tol,
                });
            }
            // per-cluster frames inside the block
            let frames: Vec<CMatrix> = sub
                .iter()
                .map(|c| reig.vectors.columns(c.start, db).into_owned())
                .collect();
            let mut cols = CMatrix::zeros(r, r);
            let mut aligned = false;
            'attempt: for _ in 0..8 {
                let g = self.random_hermitian_element(&mut rng, &self.basis);
                let gcomp = w.adjoint() * &g * &w;
                let mut trial = CMatrix::zeros(r, r);
                for b in 0..db {
                    trial.set_column(b, &frames[0].column(b));
                }
                for (a, fa) in frames.iter().enumerate().skip(1) {
                    // connector ≈ scalar × unitary in the exact structure;
                    // take its polar part for the aligned frame
                    let m = fa.adjoint() * &gcomp * &frames[0];
                    let svd = m.svd(true, true);
                    let smax = svd.singular_values.iter().fold(0.0f64, |x, &s| x.max(s));
                    let smin = svd.singular_values.iter().fold(f64::MAX, |x, &s| x.min(s));
                    if smax < 1e-8 || smin < 1e-6 * smax {
                        continue 'attempt;
                    }
                    let polar = svd.u.expect("requested") * svd.v_t.expect("requested");
                    let block = fa * polar;
                    for b in 0..db {
                        trial.set_column(a * db + b, &block.column(b));
                    }
                }
                cols = trial;
                aligned = true;
                break;
            }
            if !aligned {
                return Err(Error::NotAnAlgebra {
                    residual: f64::NAN,
                    tol: self.tol,
                });
            }
            let full = &w * cols;
            blocks.push((da, db, full));
        }
        // deterministic order: (dA, dB) descending, then by earliest support
        let support = |u: &CMatrix| -> usize {
            (0..d)
                .find(|&j| u.row(j).iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-6)
                .unwrap_or(d)
        };
        blocks.sort_by_key(|b| (std::cmp::Reverse(b.0), std::cmp::Reverse(b.1), support(&b.2)));
        let joined: String = self.layout.labels().collect::<Vec<_>>().join("");
        let mut out = Vec::new();
        for (da, db, mut u) in blocks {
            // fix a global phase per A-level so output is seed-stable
            for a in 0..da {
                let mut best = (0usize, 0.0f64);
                for j in 0..d {
                    let v = u[(j, a * db)].norm();
                    if v > best.1 {
                        best = (j, v);
                    }
                }
                let pivot = u[(best.0, a * db)];
                if pivot.norm() > 0.0 {
                    let phase = pivot.conj() / pivot.norm();
                    for b in 0..db {
                        for j in 0..d {
                            u[(j, a * db + b)] *= phase;
                        }
                    }
                }
            }
            let col = SystemLayout::new(vec![
                (format!("{joined}A"), da),
                (format!("{joined}B"), db),
            ])?;
            let isometry = Operator::new(self.layout.clone(), col, u)?;
            out.push(Block { da, db, isometry });
        }
        let dec = BlockDecomposition {
            ambient: self.layout.clone(),
            blocks: out,
        };
        self.verify_block_structure(&dec)?;
        Ok(dec)
    }

    /// Check that each basis element, compressed into each block frame, has
    /// the form `m ⊗ id` — the defining property of the decomposition.
    fn verify_block_structure(&self, dec: &BlockDecomposition) -> Result<()> {
        let total: usize = dec.blocks.iter().map(|b| b.da * b.db).sum();
        if total != self.dim() {
            return Err(Error::NotAnAlgebra {
                residual: f64::NAN,
                tol: self.tol,
            });
        }
        let mut worst = 0.0f64;
        for block in &dec.blocks {
            let u = block.isometry.mat();
            let (da, db) = (block.da, block.db);
            for b in &self.basis {
                let m = u.adjoint() * b * u;
                let mut ma = CMatrix::zeros(da, da);
                for a in 0..da {
                    for ap in 0..da {
                        let mut s = C64::new(0.0, 0.0);
                        for bb in 0..db {
                            s += m[(a * db + bb, ap * db + bb)];
                        }
                        ma[(a, ap)] = s / C64::new(db as f64, 0.0);
                    }
                }
                let mut res = 0.0f64;
                for a in 0..da {
                    for ap in 0..da {
                        for bb in 0..db {
                            for bp in 0..db {
                                let expect = if bb == bp { ma[(a, ap)] } else { C64::new(0.0, 0.0) };
                                res += (m[(a * db + bb, ap * db + bp)] - expect).norm_sqr();
                            }
                        }
                    }
                }
                worst = worst.max(res.sqrt());
            }
        }
        if worst > self.tol.max(1e-8) {
            return Err(Error::NotAnAlgebra {
                residual: worst,
                tol: self.tol.max(1e-8),
            });
        }
        Ok(())
    }
}

/// The explicit form of a zero-CMI state: block weights and per-block
/// product factors.
#[derive(Clone, Debug)]
pub struct MarkovStructure {
    pub decomposition: BlockDecomposition,
    /// Weights of the retained blocks; sums to 1.
    pub weights: Vec<f64>,
    /// Indices into `decomposition.blocks` for each retained block.
    pub block_indices: Vec<usize>,
    /// Per retained block: the state on A ⊗ C_A^z and the state on C_B^z ⊗ B.
    pub block_states: Vec<(Operator, Operator)>,
    layout: SystemLayout,
    a_labels: Vec<String>,
    b_labels: Vec<String>,
}

impl MarkovStructure {
    /// The (A…, B…, C…)-ordered ambient layout the structure refers to.
    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    /// Rebuild `Σ_z p_z ρ^z_{AC_A} ⊗ ρ^z_{C_B B}` on the ambient layout.
    pub fn reconstruct(&self) -> Result<Operator> {
        let mut acc = Operator::zeros(self.layout.clone(), self.layout.clone());
        let ab_labels: Vec<&str> = self
            .a_labels
            .iter()
            .chain(&self.b_labels)
            .map(|s| s.as_str())
            .collect();
        let ab = self.layout.restrict(&ab_labels)?;
        for (k, &z) in self.block_indices.iter().enumerate() {
            let block = &self.decomposition.blocks[z];
            let (left, right) = &self.block_states[k];
            let prod = left.kron(right)?;
            // reorder to A…, B…, C_A, C_B before embedding
            let mut order: Vec<&str> = self.a_labels.iter().map(|s| s.as_str()).collect();
            order.extend(self.b_labels.iter().map(|s| s.as_str()));
            let ca = block.isometry.col_layout().factors()[0].0.clone();
            let cb = block.isometry.col_layout().factors()[1].0.clone();
            order.push(&ca);
            order.push(&cb);
            let prod = prod.permute_systems(&order)?;
            let embed = Operator::identity(ab.clone()).kron(&block.isometry)?;
            let term = embed.matmul(&prod)?.matmul(&embed.adjoint())?;
            let term = Operator::square(self.layout.clone(), term.into_mat())?;
            acc = acc.add(&term.scale(C64::new(self.weights[k], 0.0)))?;
        }
        Ok(acc)
    }
}

/// Decompose a zero-CMI state on A⊗B⊗C into its Markov form. The partition
/// slots are (A, B, C) in the sense of `I(A : B | C)`; all randomness is
/// determined by `seed`.
pub fn markov_decomposition(
    rho: &Operator,
    part: &Partition,
    seed: u64,
) -> Result<MarkovStructure> {
    let cmi = cond_mutual_info(rho, part)?;
    if cmi > EPS_CMI {
        return Err(Error::NotMarkov { cmi });
    }
    let mut order: Vec<&str> = part.a.clone();
    order.extend(&part.b);
    order.extend(&part.c);
    let rho = rho.permute_systems(&order)?;
    let layout = rho.row_layout().clone();
    let rho_ac = rho.partial_trace(&part.b)?;
    let gens = conditional_operators(&rho_ac, &part.a)?;
    let c_layout = layout.restrict(&part.c)?;
    // Normalise the generators by ρ_C^{-1/2} on both sides. On a Markov
    // state the raw conditional operators have the form ⊕_z o^z ⊗ σ^z with
    // σ^z the block's B-side marginal; the conjugation turns σ^z into the
    // identity, so the generated algebra is ⊕_z L(C_A^z) ⊗ id rather than a
    // spuriously refined one split along the eigenspaces of σ^z.
    let rho_c = rho_ac.partial_trace(&part.a)?;
    let ceig = rho_c.herm_eig()?;
    let dc = c_layout.total_dim();
    let mut inv_sqrt = CMatrix::zeros(dc, dc);
    for (k, &v) in ceig.values.iter().enumerate() {
        if v > 1e-12 {
            let col = ceig.vectors.column(k);
            let scale = C64::new(1.0 / v.sqrt(), 0.0);
            for i in 0..dc {
                for j in 0..dc {
                    inv_sqrt[(i, j)] += col[i] * col[j].conj() * scale;
                }
            }
        }
    }
    let gens: Vec<Operator> = gens
        .iter()
        .map(|o| Operator::square(c_layout.clone(), &inv_sqrt * o.mat() * &inv_sqrt))
        .collect::<Result<_>>()?;
    let alg = generate_algebra(&c_layout, &gens, EPS_ALG)?;
    let decomposition = alg.decompose_seeded(seed)?;
    let ab_labels: Vec<&str> = part.a.iter().chain(&part.b).copied().collect();
    let ab = layout.restrict(&ab_labels)?;
    let mut weights = Vec::new();
    let mut block_indices = Vec::new();
    let mut block_states = Vec::new();
    for (z, block) in decomposition.blocks.iter().enumerate() {
        let embed = Operator::identity(ab.clone()).kron(&block.isometry)?;
        let tau = embed.adjoint().matmul(&rho)?.matmul(&embed)?;
        let tau = Operator::square(embed.col_layout().clone(), tau.into_mat())?;
        let p = tau.trace().re;
        if p < WEIGHT_FLOOR {
            continue;
        }
        let tau = tau.scale(C64::new(1.0 / p, 0.0));
        let ca = block.isometry.col_layout().factors()[0].0.clone();
        let cb = block.isometry.col_layout().factors()[1].0.clone();
        let mut traced_left: Vec<&str> = part.b.clone();
        traced_left.push(&cb);
        let left = tau.partial_trace(&traced_left)?;
        let mut traced_right: Vec<&str> = part.a.clone();
        traced_right.push(&ca);
        let right = tau.partial_trace(&traced_right)?;
        // canonical factor order: A ⊗ C_A and C_B ⊗ B
        let mut right_order: Vec<&str> = vec![&cb];
        right_order.extend(part.b.iter());
        let right = right.permute_systems(&right_order)?;
        // verify the product form on this block
        let prod = left.kron(&right)?;
        let mut tau_order: Vec<&str> = part.a.clone();
        tau_order.push(&ca);
        tau_order.push(&cb);
        tau_order.extend(part.b.iter());
        let tau_perm = tau.permute_systems(&tau_order)?;
        let residual = tau_perm.sub(&prod)?.trace_norm();
        if residual > EPS_RECON {
            return Err(Error::Structure { block: z, residual });
        }
        weights.push(p);
        block_indices.push(z);
        block_states.push((left, right));
    }
    let structure = MarkovStructure {
        decomposition,
        weights,
        block_indices,
        block_states,
        layout,
        a_labels: part.a.iter().map(|s| s.to_string()).collect(),
        b_labels: part.b.iter().map(|s| s.to_string()).collect(),
    };
    let residual = structure.reconstruct()?.sub(&rho)?.trace_norm();
    if residual > EPS_RECON {
        return Err(Error::Certificate {
            residual,
            tol: EPS_RECON,
        });
    }
    Ok(structure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng;

    fn lay(label: &str, d: usize) -> SystemLayout {
        SystemLayout::single(label, d).unwrap()
    }

    #[test]
    fn conditional_ops_of_product_state() {
        let mut r = rng(50);
        let a = random::state(&mut r, lay("A", 2));
        let c = random::state(&mut r, lay("C", 3));
        let rho = a.kron(&c).unwrap();
        let ops = conditional_operators(&rho, &["A"]).unwrap();
        assert_eq!(ops.len(), 4);
        for (k, o) in ops.iter().enumerate() {
            let (i, j) = (k / 2, k % 2);
            let expect = c.scale(a.mat()[(i, j)]);
            assert!(o.sub(&expect).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn conditional_ops_of_classical_state() {
        // Σ_k p_k |k⟩⟨k| ⊗ |k⟩⟨k|
        let l = SystemLayout::new(vec![("A", 2), ("C", 2)]).unwrap();
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = C64::new(0.3, 0.0);
        m[(3, 3)] = C64::new(0.7, 0.0);
        let rho = Operator::square(l, m).unwrap();
        let ops = conditional_operators(&rho, &["A"]).unwrap();
        assert!((ops[0].mat()[(0, 0)].re - 0.3).abs() < 1e-15);
        assert!((ops[3].mat()[(1, 1)].re - 0.7).abs() < 1e-15);
        assert!(ops[1].max_abs() < 1e-15);
        assert!(ops[2].max_abs() < 1e-15);
    }

    #[test]
    fn conditional_ops_sum_to_marginal() {
        let mut r = rng(51);
        let l = SystemLayout::new(vec![("A", 3), ("C", 4)]).unwrap();
        let rho = random::state(&mut r, l);
        let ops = conditional_operators(&rho, &["A"]).unwrap();
        let mut sum = Operator::zeros(ops[0].row_layout().clone(), ops[0].col_layout().clone());
        for i in 0..3 {
            sum = sum.add(&ops[i * 3 + i]).unwrap();
        }
        let marg = rho.partial_trace(&["A"]).unwrap();
        assert!(sum.sub(&marg).unwrap().max_abs() < 1e-12);
        // adjoint symmetry O_ij† = O_ji
        for i in 0..3 {
            for j in 0..3 {
                let d = ops[i * 3 + j].adjoint().sub(&ops[j * 3 + i]).unwrap().max_abs();
                assert!(d < 1e-14);
            }
        }
    }

    #[test]
    fn algebra_of_identity() {
        let l = lay("C", 3);
        let alg = generate_algebra(&l, &[Operator::identity(l.clone())], EPS_ALG).unwrap();
        assert_eq!(alg.basis().len(), 1);
        assert!(alg.closure_residual() < 1e-12);
    }

    #[test]
    fn algebra_of_pauli_x() {
        let l = lay("C", 2);
        let mut x = CMatrix::zeros(2, 2);
        x[(0, 1)] = C64::new(1.0, 0.0);
        x[(1, 0)] = C64::new(1.0, 0.0);
        let alg = generate_algebra(&l, &[Operator::square(l.clone(), x).unwrap()], EPS_ALG).unwrap();
        assert_eq!(alg.basis().len(), 2);
    }

    fn matrix_units(l: &SystemLayout) -> Vec<Operator> {
        let d = l.total_dim();
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let mut m = CMatrix::zeros(d, d);
                m[(i, j)] = C64::new(1.0, 0.0);
                out.push(Operator::square(l.clone(), m).unwrap());
            }
        }
        out
    }

    #[test]
    fn algebra_of_all_matrix_units() {
        let l = lay("C", 3);
        let alg = generate_algebra(&l, &matrix_units(&l), EPS_ALG).unwrap();
        assert_eq!(alg.basis().len(), 9);
    }

    #[test]
    fn decompose_full_algebra() {
        let l = lay("C", 3);
        let alg = generate_algebra(&l, &matrix_units(&l), EPS_ALG).unwrap();
        let dec = alg.decompose().unwrap();
        assert_eq!(dec.shape(), vec![(3, 1)]);
    }

    #[test]
    fn decompose_diagonal_algebra() {
        let l = lay("C", 4);
        let gens: Vec<Operator> = (0..4)
            .map(|i| {
                let mut m = CMatrix::zeros(4, 4);
                m[(i, i)] = C64::new(1.0, 0.0);
                Operator::square(l.clone(), m).unwrap()
            })
            .collect();
        let alg = generate_algebra(&l, &gens, EPS_ALG).unwrap();
        assert_eq!(alg.basis().len(), 4);
        let dec = alg.decompose().unwrap();
        assert_eq!(dec.shape(), vec![(1, 1); 4]);
    }

    fn check_isometry_invariants(dec: &BlockDecomposition) {
        for (z, b) in dec.blocks.iter().enumerate() {
            let u = &b.isometry;
            let gram = u.adjoint().matmul(u).unwrap();
            let id = Operator::identity(u.col_layout().clone());
            assert!(gram.sub(&id).unwrap().op_norm() < 1e-10);
            for (z2, b2) in dec.blocks.iter().enumerate() {
                if z == z2 {
                    continue;
                }
                let cross = u.adjoint().matmul(&b2.isometry).unwrap();
                assert!(cross.op_norm() < 1e-10);
            }
        }
        let total: usize = dec.blocks.iter().map(|b| b.da * b.db).sum();
        assert_eq!(total, dec.ambient().total_dim());
    }

    #[test]
    fn decompose_rotated_tensor_algebra() {
        // M₂ ⊗ id₃ conjugated by a random unitary on C⁶ → one block (2, 3)
        let mut r = rng(52);
        let l = lay("C", 6);
        let u = random::unitary_matrix(&mut r, 6);
        let id3 = CMatrix::identity(3, 3);
        let gens: Vec<Operator> = matrix_units(&lay("X", 2))
            .iter()
            .map(|e| {
                let m = &u * e.mat().kronecker(&id3) * u.adjoint();
                Operator::square(l.clone(), m).unwrap()
            })
            .collect();
        let alg = generate_algebra(&l, &gens, EPS_ALG).unwrap();
        assert_eq!(alg.basis().len(), 4);
        let dec = alg.decompose().unwrap();
        assert_eq!(dec.shape(), vec![(2, 3)]);
        check_isometry_invariants(&dec);
    }

    #[test]
    fn decompose_is_conjugation_covariant() {
        // algebra M₂⊗id₂ ⊕ C on C⁵: blocks (2,2) and (1,1)
        let mut r = rng(53);
        let l = lay("C", 5);
        let mut e01 = CMatrix::zeros(5, 5);
        e01[(0, 2)] = C64::new(1.0, 0.0);
        e01[(1, 3)] = C64::new(1.0, 0.0);
        let gen = Operator::square(l.clone(), e01).unwrap();
        let alg = generate_algebra(&l, &[gen.clone()], EPS_ALG).unwrap();
        let dec = alg.decompose().unwrap();
        assert_eq!(dec.shape(), vec![(1, 1), (2, 2)]);
        check_isometry_invariants(&dec);
        let u = random::unitary_matrix(&mut r, 5);
        let rotated = Operator::square(l.clone(), &u * gen.mat() * u.adjoint()).unwrap();
        let alg2 = generate_algebra(&l, &[rotated], EPS_ALG).unwrap();
        let dec2 = alg2.decompose().unwrap();
        assert_eq!(dec.shape(), dec2.shape());
    }

    #[test]
    fn markov_of_product_state() {
        let mut r = rng(54);
        let a = random::state(&mut r, lay("A", 2));
        let b = random::state(&mut r, lay("B", 2));
        let c = random::state(&mut r, lay("C", 3));
        let rho = a.kron(&b).unwrap().kron(&c).unwrap();
        let part = Partition {
            a: vec!["A"],
            b: vec!["B"],
            c: vec!["C"],
        };
        let ms = markov_decomposition(&rho, &part, 0).unwrap();
        let rec = ms.reconstruct().unwrap();
        assert!(rec.sub(&rho).unwrap().trace_norm() < 1e-9);
        let total: f64 = ms.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn markov_of_classical_correlated_state() {
        // Σ_k (1/2) |kk⟩⟨kk| ⊗ |kk⟩⟨kk| on A,B,C with C = 2-dim register
        let l = SystemLayout::new(vec![("A", 2), ("B", 2), ("C", 2)]).unwrap();
        let mut m = CMatrix::zeros(8, 8);
        m[(0, 0)] = C64::new(0.5, 0.0); // |000⟩
        m[(7, 7)] = C64::new(0.5, 0.0); // |111⟩
        let rho = Operator::square(l, m).unwrap();
        let part = Partition {
            a: vec!["A"],
            b: vec!["B"],
            c: vec!["C"],
        };
        let ms = markov_decomposition(&rho, &part, 0).unwrap();
        assert_eq!(ms.decomposition.shape(), vec![(1, 1), (1, 1)]);
        let mut w = ms.weights.clone();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((w[0] - 0.5).abs() < 1e-10 && (w[1] - 0.5).abs() < 1e-10);
        let rec = ms.reconstruct().unwrap();
        let rho_perm = rho_permuted(&ms);
        assert!(rec.sub(&rho_perm).unwrap().trace_norm() < 1e-9);

        fn rho_permuted(ms: &MarkovStructure) -> Operator {
            // the test state is already in (A, B, C) order
            let mut m = CMatrix::zeros(8, 8);
            m[(0, 0)] = C64::new(0.5, 0.0);
            m[(7, 7)] = C64::new(0.5, 0.0);
            Operator::square(ms.layout().clone(), m).unwrap()
        }
    }

    #[test]
    fn markov_rejects_ghz() {
        let l = SystemLayout::new(vec![("A", 2), ("B", 2), ("C", 2)]).unwrap();
        let mut v = CMatrix::zeros(8, 1);
        v[(0, 0)] = C64::new(1.0 / 2f64.sqrt(), 0.0);
        v[(7, 0)] = C64::new(1.0 / 2f64.sqrt(), 0.0);
        let rho = Operator::square(l, &v * v.adjoint()).unwrap();
        let part = Partition {
            a: vec!["A"],
            b: vec!["B"],
            c: vec!["C"],
        };
        match markov_decomposition(&rho, &part, 0) {
            Err(Error::NotMarkov { cmi }) => assert!((cmi - 1.0).abs() < 1e-9),
            other => panic!("expected NotMarkov, got {other:?}"),
        }
    }

    #[test]
    fn markov_of_genuine_mixed_block_state() {
        // build Σ_z p_z ρ^z_{ACA} ⊗ ρ^z_{CBB} directly with blocks (2,1),(1,2)
        let mut r = rng(55);
        let a = lay("A", 2);
        let b = lay("B", 2);
        let c = lay("C", 4);
        let blocks = [(2usize, 1usize, 0.6f64), (1, 2, 0.4)];
        let mut rho = Operator::zeros(
            a.concat(&b).unwrap().concat(&c).unwrap(),
            a.concat(&b).unwrap().concat(&c).unwrap(),
        );
        let mut offset = 0usize;
        for &(da, db, p) in &blocks {
            let left = random::state(&mut r, SystemLayout::new(vec![("A", 2), ("CA", da)]).unwrap());
            let right = random::state(&mut r, SystemLayout::new(vec![("CB", db), ("B", 2)]).unwrap());
            let prod = left
                .kron(&right)
                .unwrap()
                .permute_systems(&["A", "B", "CA", "CB"])
                .unwrap();
            // embed CA⊗CB into C at the current offset
            let mut u = CMatrix::zeros(4, da * db);
            for k in 0..da * db {
                u[(offset + k, k)] = C64::new(1.0, 0.0);
            }
            let iso = Operator::new(
                c.clone(),
                SystemLayout::new(vec![("CA", da), ("CB", db)]).unwrap(),
                u,
            )
            .unwrap();
            let embed = Operator::identity(a.concat(&b).unwrap()).kron(&iso).unwrap();
            let term = embed.matmul(&prod).unwrap().matmul(&embed.adjoint()).unwrap();
            let term = Operator::square(rho.row_layout().clone(), term.into_mat()).unwrap();
            rho = rho.add(&term.scale(C64::new(p, 0.0))).unwrap();
            offset += da * db;
        }
        let part = Partition {
            a: vec!["A"],
            b: vec!["B"],
            c: vec!["C"],
        };
        let ms = markov_decomposition(&rho, &part, 0).unwrap();
        assert_eq!(ms.decomposition.shape(), vec![(1, 2), (2, 1)]);
        check_isometry_invariants(&ms.decomposition);
        let rec = ms.reconstruct().unwrap();
        assert!(rec.sub(&rho).unwrap().trace_norm() < 1e-8);
        let mut w = ms.weights.clone();
        w.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((w[0] - 0.4).abs() < 1e-9 && (w[1] - 0.6).abs() < 1e-9);
    }
}
