//! Dense complex operators over labeled tensor-product layouts.
//!
//! Flat indices are row-major with the leftmost factor most significant: for a
//! layout `(A, dA)(B, dB)` the basis vector `|a⟩⊗|b⟩` has flat index
//! `a * dB + b`. All file formats and every operation in the crate assume this
//! order.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Relative Hermiticity tolerance: an operator counts as Hermitian when
/// `‖M − M†‖ ≤ ETA_HERM_REL · (1 + ‖M‖)`.
pub const ETA_HERM_REL: f64 = 1e-10;
/// Eigendecomposition reconstruction tolerance.
pub const ETA_EIG: f64 = 1e-10;
/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const EIG_CLUSTER_GAP: f64 = 1e-8;

/// An ordered sequence of labeled tensor factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemLayout {
    factors: Vec<(String, usize)>,
}

impl SystemLayout {
    pub fn new<S: Into<String>>(factors: Vec<(S, usize)>) -> Result<Self> {
        let factors: Vec<(String, usize)> =
            factors.into_iter().map(|(l, d)| (l.into(), d)).collect();
        for (i, (label, dim)) in factors.iter().enumerate() {
            if *dim == 0 {
                return Err(Error::Dimension(format!("factor {label} has dimension 0")));
            }
            if factors[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::Layout(format!("duplicate label {label}")));
            }
        }
        Ok(SystemLayout { factors })
    }

    pub fn single(label: impl Into<String>, dim: usize) -> Result<Self> {
        SystemLayout::new(vec![(label.into(), dim)])
    }

    /// The empty layout of total dimension 1.
    pub fn scalar() -> Self {
        SystemLayout { factors: vec![] }
    }

    pub fn factors(&self) -> &[(String, usize)] {
        &self.factors
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|(_, d)| d).product()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|(l, _)| l.as_str())
    }

    pub fn dim_of(&self, label: &str) -> Option<usize> {
        self.factors.iter().find(|(l, _)| l == label).map(|&(_, d)| d)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|(l, _)| l == label)
    }

    pub fn concat(&self, other: &SystemLayout) -> Result<Self> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        SystemLayout::new(factors)
    }

    /// The isomorphic "tilde" copy, mirroring the factor structure.
    pub fn tilde(&self) -> Self {
        self.renamed(|l| format!("{l}~"))
    }

    pub fn renamed(&self, f: impl Fn(&str) -> String) -> Self {
        SystemLayout {
            factors: self.factors.iter().map(|(l, d)| (f(l), *d)).collect(),
        }
    }

    /// Strides of each factor under the row-major index order.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.factors.len()];
        for i in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.factors[i + 1].1;
        }
        strides
    }

    /// Position at which `sub` occurs as a contiguous run of factors
    /// (matching labels and dimensions in order).
    pub fn find_contiguous(&self, sub: &SystemLayout) -> Option<usize> {
        if sub.factors.is_empty() {
            return Some(0);
        }
        let n = self.factors.len();
        let m = sub.factors.len();
        (0..=n.saturating_sub(m)).find(|&i| self.factors[i..i + m] == sub.factors[..])
    }

    /// Sub-layout with the given labels, in this layout's order.
    pub fn restrict(&self, labels: &[&str]) -> Result<Self> {
        for l in labels {
            if self.position(l).is_none() {
                return Err(Error::Layout(format!("unknown label {l}")));
            }
        }
        Ok(SystemLayout {
            factors: self
                .factors
                .iter()
                .filter(|(l, _)| labels.contains(&l.as_str()))
                .cloned()
                .collect(),
        })
    }
}

/// Decompose `flat` into per-factor digits (leftmost factor first).
fn digits(flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; dims.len()];
    let mut rem = flat;
    for i in (0..dims.len()).rev() {
        out[i] = rem % dims[i];
        rem /= dims[i];
    }
    out
}

/// A dense complex matrix carrying labeled row and column layouts.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    row: SystemLayout,
    col: SystemLayout,
    mat: CMatrix,
}

impl Operator {
    pub fn new(row: SystemLayout, col: SystemLayout, mat: CMatrix) -> Result<Self> {
        if mat.nrows() != row.total_dim() || mat.ncols() != col.total_dim() {
            return Err(Error::Layout(format!(
                "matrix shape {}x{} does not match layouts {}x{}",
                mat.nrows(),
                mat.ncols(),
                row.total_dim(),
                col.total_dim()
            )));
        }
        Ok(Operator { row, col, mat })
    }

    pub fn square(layout: SystemLayout, mat: CMatrix) -> Result<Self> {
        Operator::new(layout.clone(), layout, mat)
    }

    pub fn identity(layout: SystemLayout) -> Self {
        let d = layout.total_dim();
        Operator {
            row: layout.clone(),
            col: layout,
            mat: CMatrix::identity(d, d),
        }
    }

    pub fn zeros(row: SystemLayout, col: SystemLayout) -> Self {
        let mat = CMatrix::zeros(row.total_dim(), col.total_dim());
        Operator { row, col, mat }
    }

    /// 1x1 operator on the scalar layout.
    pub fn scalar(value: C64) -> Self {
        Operator {
            row: SystemLayout::scalar(),
            col: SystemLayout::scalar(),
            mat: CMatrix::from_element(1, 1, value),
        }
    }

    /// Normalised maximally mixed state `id / dim`.
    pub fn maximally_mixed(layout: SystemLayout) -> Self {
        let d = layout.total_dim();
        let mut op = Operator::identity(layout);
        op.mat /= C64::new(d as f64, 0.0);
        op
    }

    /// Column vector `|index⟩` on `layout` (an operator layout → scalar
    /// would be the bra; this is layout-row, scalar-col).
    pub fn basis_ket(layout: SystemLayout, index: usize) -> Result<Self> {
        let d = layout.total_dim();
        if index >= d {
            return Err(Error::Dimension(format!("basis index {index} out of range {d}")));
        }
        let mut mat = CMatrix::zeros(d, 1);
        mat[(index, 0)] = C64::new(1.0, 0.0);
        Ok(Operator {
            row: layout,
            col: SystemLayout::scalar(),
            mat,
        })
    }

    pub fn basis_bra(layout: SystemLayout, index: usize) -> Result<Self> {
        Ok(Operator::basis_ket(layout, index)?.adjoint())
    }

    pub fn row_layout(&self) -> &SystemLayout {
        &self.row
    }

    pub fn col_layout(&self) -> &SystemLayout {
        &self.col
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_mat(self) -> CMatrix {
        self.mat
    }

    pub fn is_square(&self) -> bool {
        self.row == self.col
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            row: self.col.clone(),
            col: self.row.clone(),
            mat: self.mat.adjoint(),
        }
    }

    /// Entrywise complex conjugate (same layouts).
    pub fn conjugate(&self) -> Operator {
        Operator {
            row: self.row.clone(),
            col: self.col.clone(),
            mat: self.mat.map(|z| z.conj()),
        }
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator {
            row: self.row.clone(),
            col: self.col.clone(),
            mat: &self.mat * c,
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.mat.shape() != other.mat.shape() {
            return Err(Error::Layout("shape mismatch in add".into()));
        }
        Ok(Operator {
            row: self.row.clone(),
            col: self.col.clone(),
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Matrix product; checks dimensions only, since composing maps pairs
    /// layouts with different labels. Result carries `self`'s row layout and
    /// `other`'s column layout.
    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        if self.mat.ncols() != other.mat.nrows() {
            return Err(Error::Layout(format!(
                "inner dimension mismatch {} vs {}",
                self.mat.ncols(),
                other.mat.nrows()
            )));
        }
        Ok(Operator {
            row: self.row.clone(),
            col: other.col.clone(),
            mat: &self.mat * &other.mat,
        })
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        if self.mat.is_empty() {
            return 0.0;
        }
        self.mat
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0f64, |m, &s| m.max(s))
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        if self.mat.is_empty() {
            return 0.0;
        }
        self.mat.clone().svd(false, false).singular_values.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let residual = (&self.mat - self.mat.adjoint()).map(|z| z.norm()).max();
        // max-entry bound times dim dominates the spectral norm
        residual * self.mat.nrows() as f64 <= ETA_HERM_REL * (1.0 + self.op_norm())
    }

    /// Tensor product; layouts concatenate, labels must stay unique.
    pub fn kron(&self, other: &Operator) -> Result<Operator> {
        let row = self.row.concat(&other.row)?;
        let col = self.col.concat(&other.col)?;
        Ok(Operator {
            row,
            col,
            mat: self.mat.kronecker(&other.mat),
        })
    }

    /// Trace out the given factors. Requires identical row and column layouts.
    pub fn partial_trace(&self, labels: &[&str]) -> Result<Operator> {
        if self.row != self.col {
            return Err(Error::Layout(
                "partial_trace requires identical row/column layouts".into(),
            ));
        }
        for l in labels {
            if self.row.position(l).is_none() {
                return Err(Error::Layout(format!("unknown label {l}")));
            }
        }
        let strides = self.row.strides();
        let mut kept = Vec::new();
        let mut traced = Vec::new();
        for (i, (l, d)) in self.row.factors().iter().enumerate() {
            if labels.contains(&l.as_str()) {
                traced.push((strides[i], *d));
            } else {
                kept.push((strides[i], *d));
            }
        }
        let kept_layout = SystemLayout {
            factors: self
                .row
                .factors()
                .iter()
                .filter(|(l, _)| !labels.contains(&l.as_str()))
                .cloned()
                .collect(),
        };
        let offsets = |parts: &[(usize, usize)]| -> Vec<usize> {
            let dims: Vec<usize> = parts.iter().map(|&(_, d)| d).collect();
            let total: usize = dims.iter().product();
            (0..total)
                .map(|flat| {
                    digits(flat, &dims)
                        .iter()
                        .zip(parts)
                        .map(|(dig, &(stride, _))| dig * stride)
                        .sum()
                })
                .collect()
        };
        let kept_off = offsets(&kept);
        let traced_off = offsets(&traced);
        let kd = kept_off.len();
        let mut out = CMatrix::zeros(kd, kd);
        for (r, &rb) in kept_off.iter().enumerate() {
            for (c, &cb) in kept_off.iter().enumerate() {
                let mut s = C64::new(0.0, 0.0);
                for &tb in &traced_off {
                    s += self.mat[(rb + tb, cb + tb)];
                }
                out[(r, c)] = s;
            }
        }
        Operator::square(kept_layout, out)
    }

    fn permutation_map(layout: &SystemLayout, order: &[&str]) -> Result<(SystemLayout, Vec<usize>)> {
        if order.len() != layout.factors().len() {
            return Err(Error::Layout("permutation must list every label".into()));
        }
        let mut positions = Vec::with_capacity(order.len());
        for l in order {
            match layout.position(l) {
                Some(p) if !positions.contains(&p) => positions.push(p),
                _ => return Err(Error::Layout(format!("invalid permutation label {l}"))),
            }
        }
        let new_layout = SystemLayout {
            factors: positions.iter().map(|&p| layout.factors()[p].clone()).collect(),
        };
        let old_dims: Vec<usize> = layout.factors().iter().map(|&(_, d)| d).collect();
        let old_strides = layout.strides();
        let new_strides = new_layout.strides();
        let d = layout.total_dim();
        let mut map = vec![0usize; d];
        for (flat, slot) in map.iter_mut().enumerate() {
            let dig = digits(flat, &old_dims);
            *slot = positions
                .iter()
                .enumerate()
                .map(|(j, &p)| dig[p] * new_strides[j])
                .sum();
        }
        let _ = old_strides;
        Ok((new_layout, map))
    }

    /// Reorder the row factors into the given label order.
    pub fn permute_rows(&self, order: &[&str]) -> Result<Operator> {
        let (new_row, map) = Self::permutation_map(&self.row, order)?;
        let mut mat = CMatrix::zeros(self.mat.nrows(), self.mat.ncols());
        for i in 0..self.mat.nrows() {
            for j in 0..self.mat.ncols() {
                mat[(map[i], j)] = self.mat[(i, j)];
            }
        }
        Ok(Operator {
            row: new_row,
            col: self.col.clone(),
            mat,
        })
    }

    pub fn permute_cols(&self, order: &[&str]) -> Result<Operator> {
        let (new_col, map) = Self::permutation_map(&self.col, order)?;
        let mut mat = CMatrix::zeros(self.mat.nrows(), self.mat.ncols());
        for i in 0..self.mat.nrows() {
            for j in 0..self.mat.ncols() {
                mat[(i, map[j])] = self.mat[(i, j)];
            }
        }
        Ok(Operator {
            row: self.row.clone(),
            col: new_col,
            mat,
        })
    }

    /// Reorder both row and column factors of a square operator.
    pub fn permute_systems(&self, order: &[&str]) -> Result<Operator> {
        if self.row != self.col {
            return Err(Error::Layout(
                "permute_systems requires identical row/column layouts".into(),
            ));
        }
        self.permute_rows(order)?.permute_cols(order)
    }

    /// Eigendecomposition of a Hermitian operator, eigenvalues descending.
    pub fn herm_eig(&self) -> Result<Eigensystem> {
        if !self.is_square() {
            return Err(Error::Hermiticity("operator is not square".into()));
        }
        let herm_res = Operator {
            row: self.row.clone(),
            col: self.col.clone(),
            mat: &self.mat - self.mat.adjoint(),
        }
        .op_norm();
        if herm_res > ETA_HERM_REL * (1.0 + self.op_norm()) {
            return Err(Error::Hermiticity(format!(
                "‖M − M†‖ = {herm_res:.3e} exceeds tolerance"
            )));
        }
        // symmetrise to suppress rounding before the solver
        let sym = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        let eig = nalgebra::linalg::SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let n = eig.eigenvectors.nrows();
        let mut vectors = CMatrix::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            vectors.set_column(k, &eig.eigenvectors.column(i));
        }
        Ok(Eigensystem { values, vectors })
    }
}

/// Eigenvalues (descending) and matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    /// Index ranges of eigenvalue clusters separated by gaps larger than
    /// `gap`. Eigenvectors within a cluster are only defined up to unitary
    /// mixing; downstream code must use eigenprojections only.
    pub fn clusters(&self, gap: f64) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.values.len() {
            if self.values[i - 1] - self.values[i] > gap {
                out.push(start..i);
                start = i;
            }
        }
        if !self.values.is_empty() {
            out.push(start..self.values.len());
        }
        out
    }

    /// Reconstruct `U Λ U†`.
    pub fn reconstruct(&self) -> CMatrix {
        let lam = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&v| C64::new(v, 0.0)),
        ));
        &self.vectors * lam * self.vectors.adjoint()
    }
}

/// Projector onto the maximally entangled state `(1/√d) Σ_i |i⟩|i⟩` between
/// `layout` and its tilde copy.
pub fn max_entangled(layout: &SystemLayout) -> Result<Operator> {
    let d = layout.total_dim();
    if d == 0 {
        return Err(Error::Dimension("dimension 0".into()));
    }
    let full = layout.concat(&layout.tilde())?;
    let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut vec = CMatrix::zeros(d * d, 1);
    for i in 0..d {
        vec[(i * d + i, 0)] = amp;
    }
    let mat = &vec * vec.adjoint();
    Operator::square(full, mat)
}
